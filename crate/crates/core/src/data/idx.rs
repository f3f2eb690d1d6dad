//! IDX binary tensors (the MNIST file format).
//!
//! Layout: two zero bytes, a type code (only `0x08`, unsigned byte, is
//! accepted), the number of dimensions, one big-endian `u32` per dimension,
//! then the payload in row-major order.

use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TYPE_UNSIGNED_BYTE: u8 = 0x08;

/// Header and raw payload of an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray<'a> {
    pub dims: Vec<usize>,
    pub payload: &'a [u8],
}

fn parse_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        reason: reason.into(),
    }
}

pub fn parse_idx_raw(bytes: &[u8]) -> Result<IdxArray<'_>> {
    if bytes.len() < 4 {
        return Err(parse_err(bytes.len(), "truncated magic number"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(parse_err(0, "magic number must start with two zero bytes"));
    }
    if bytes[2] != TYPE_UNSIGNED_BYTE {
        return Err(parse_err(2, format!("unsupported type code 0x{:02x}", bytes[2])));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(parse_err(3, "zero dimensions"));
    }
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(parse_err(bytes.len(), format!("truncated header: {ndims} dimensions declared")));
    }
    let dims: Vec<usize> = bytes[4..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    if let Some(pos) = dims.iter().skip(1).position(|&d| d == 0) {
        return Err(parse_err(4 + 4 * (pos + 1), "zero-sized trailing dimension"));
    }
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| parse_err(4, "dimension product overflows"))?;
    let available = bytes.len() - header_len;
    if available < expected {
        return Err(parse_err(
            bytes.len(),
            format!("truncated payload: {expected} bytes declared, {available} present"),
        ));
    }
    if available > expected {
        return Err(parse_err(header_len + expected, "trailing bytes after payload"));
    }
    Ok(IdxArray {
        dims,
        payload: &bytes[header_len..],
    })
}

/// Parse an unsigned-byte IDX stream into a tensor scaled to `[0, 1]`.
pub fn parse_idx(bytes: &[u8]) -> Result<Tensor> {
    let raw = parse_idx_raw(bytes)?;
    let values = raw.payload.iter().map(|&b| b as f32 / 255.0).collect();
    Tensor::new(raw.dims, values)
}

/// Parse a 1-D label file into class indices.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let raw = parse_idx_raw(bytes)?;
    if raw.dims.len() != 1 {
        return Err(parse_err(3, format!("label file must be 1-D, found {} dimensions", raw.dims.len())));
    }
    Ok(raw.payload.iter().map(|&b| b as usize).collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::file(path, e))
}

/// Load an image file and its label file as a dataset.
pub fn load_idx_dataset(images: &Path, labels: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    let features = parse_idx(&read(images)?)?;
    let labels = parse_idx_labels(&read(labels)?)?;
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    let name = images
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(features, labels, classes, name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_image_file() {
        let bytes = [0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 0, 255];
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.as_slice(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn error_offsets() {
        let at = |b: &[u8]| match parse_idx(b) {
            Err(Error::Parse { offset, .. }) => offset,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(at(&[]), 0);
        assert_eq!(at(&[0, 0, 9, 1, 0, 0, 0, 1, 7]), 2);
        assert_eq!(at(&[0, 0, 8, 0]), 3);
        assert_eq!(at(&[0, 0, 8, 1, 0, 0]), 6);
        assert_eq!(at(&[0, 0, 8, 1, 0, 0, 0, 3, 1, 2]), 10);
        assert_eq!(at(&[0, 0, 8, 1, 0, 0, 0, 1, 1, 2]), 9);
    }

    #[test]
    fn labels_are_raw_bytes() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 4, 0, 9];
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![4, 0, 9]);
        let image = [0, 0, 8, 2, 0, 0, 0, 1, 0, 0, 0, 1, 3];
        assert!(parse_idx_labels(&image).is_err());
    }
}
