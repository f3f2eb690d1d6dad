//! Binary framing for protocol messages.
//!
//! ```text
//! frame   = len:u32be  tag:u8  version:u32be  payload
//! len     = 1 + 4 + payload length
//! ```
//!
//! Header integers (counts, rounds, party ids, indices) are big-endian;
//! floating-point values are little-endian IEEE-754.
//!
//! | tag | message             | payload                                            |
//! |-----|---------------------|----------------------------------------------------|
//! | 1   | ScoreReport         | round, party, rows, cols (u32) + rows·cols f32     |
//! | 2   | ConsensusBroadcast  | round, rows, cols (u32) + rows·cols f32            |
//! | 3   | SubsetAnnouncement  | round, count (u32) + count u32 indices             |
//! | 4   | RoundComplete       | round (u32)                                        |
//! | 5   | PartyMetrics        | round, party (u32), kind u8, present u8,           |
//! |     |                     | accuracy, digest, revisit (f64), wall_ms (u64be)   |
//!
//! `PartyMetrics.kind` is 0 for the baseline, 1 for a collaboration round
//! and 2 for the pooled baseline; `present` bit 0/1 flags the digest/revisit
//! losses (absent values are written as zero).

use crate::error::{Error, Result};
use crate::protocol::{ConsensusTargets, PartyMetrics, Phase, ScoreMatrix, SubsetSelection};
use crate::tensor::Tensor;

pub const PROTOCOL_VERSION: u32 = 1;
/// Largest value the length prefix may carry.
pub const MAX_FRAME_LEN: usize = (1 << 31) - 1;
/// Length prefix size.
pub const LEN_PREFIX: usize = 4;

const TAG_SCORE_REPORT: u8 = 1;
const TAG_CONSENSUS: u8 = 2;
const TAG_SUBSET: u8 = 3;
const TAG_ROUND_COMPLETE: u8 = 4;
const TAG_PARTY_METRICS: u8 = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    ScoreReport(ScoreMatrix),
    ConsensusBroadcast(ConsensusTargets),
    SubsetAnnouncement(SubsetSelection),
    RoundComplete { round: usize },
    PartyMetrics(PartyMetrics),
}

impl Message {
    pub fn name(&self) -> &'static str {
        match self {
            Message::ScoreReport(_) => "ScoreReport",
            Message::ConsensusBroadcast(_) => "ConsensusBroadcast",
            Message::SubsetAnnouncement(_) => "SubsetAnnouncement",
            Message::RoundComplete { .. } => "RoundComplete",
            Message::PartyMetrics(_) => "PartyMetrics",
        }
    }
}

fn u32_field(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::Encode(format!("{what} {value} does not fit in u32")))
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, value: usize, what: &str) -> Result<()> {
        self.buf.extend_from_slice(&u32_field(value, what)?.to_be_bytes());
        Ok(())
    }

    fn matrix(&mut self, t: &Tensor) -> Result<()> {
        if t.shape().len() != 2 {
            return Err(Error::Encode(format!("score payload must be 2-D, got shape {:?}", t.shape())));
        }
        if !t.is_finite() {
            return Err(Error::Encode("score payload contains non-finite values".into()));
        }
        self.u32(t.rows(), "row count")?;
        self.u32(t.cols(), "column count")?;
        self.buf.reserve(t.len() * 4);
        for v in t.as_slice() {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        Ok(())
    }
}

pub fn encode_message(msg: &Message) -> Result<Vec<u8>> {
    let mut w = Writer {
        buf: vec![0; LEN_PREFIX],
    };
    let tag = match msg {
        Message::ScoreReport(_) => TAG_SCORE_REPORT,
        Message::ConsensusBroadcast(_) => TAG_CONSENSUS,
        Message::SubsetAnnouncement(_) => TAG_SUBSET,
        Message::RoundComplete { .. } => TAG_ROUND_COMPLETE,
        Message::PartyMetrics(_) => TAG_PARTY_METRICS,
    };
    w.buf.push(tag);
    w.buf.extend_from_slice(&PROTOCOL_VERSION.to_be_bytes());
    match msg {
        Message::ScoreReport(s) => {
            w.u32(s.round, "round")?;
            w.u32(s.party, "party")?;
            w.matrix(&s.scores)?;
        }
        Message::ConsensusBroadcast(c) => {
            w.u32(c.round, "round")?;
            w.matrix(&c.targets)?;
        }
        Message::SubsetAnnouncement(s) => {
            w.u32(s.round, "round")?;
            w.u32(s.indices.len(), "index count")?;
            for &i in &s.indices {
                w.u32(i, "subset index")?;
            }
        }
        Message::RoundComplete { round } => w.u32(*round, "round")?,
        Message::PartyMetrics(m) => {
            let (kind, round) = match m.phase {
                Phase::Baseline => (0u8, 0),
                Phase::Round(j) => (1, j),
                Phase::Pooled => (2, 0),
            };
            w.u32(round, "round")?;
            w.u32(m.party, "party")?;
            w.buf.push(kind);
            let present = u8::from(m.digest_loss.is_some()) | (u8::from(m.revisit_loss.is_some()) << 1);
            w.buf.push(present);
            for v in [m.accuracy, m.digest_loss.unwrap_or(0.0), m.revisit_loss.unwrap_or(0.0)] {
                if !v.is_finite() {
                    return Err(Error::Encode("metrics contain non-finite values".into()));
                }
                w.buf.extend_from_slice(&v.to_le_bytes());
            }
            w.buf.extend_from_slice(&m.wall_ms.to_be_bytes());
        }
    }
    let len = w.buf.len() - LEN_PREFIX;
    if len > MAX_FRAME_LEN {
        return Err(Error::Encode(format!("frame of {len} bytes exceeds {MAX_FRAME_LEN}")));
    }
    w.buf[..LEN_PREFIX].copy_from_slice(&(len as u32).to_be_bytes());
    Ok(w.buf)
}

/// Bounds-checked cursor over one frame body.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    /// Absolute offset of `bytes[0]` within the original input.
    base: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Decode {
            offset: self.base + self.pos,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_be_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        let v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(Error::Decode {
                offset: self.base + self.pos - 8,
                reason: format!("non-finite {what}"),
            });
        }
        Ok(v)
    }

    fn matrix(&mut self) -> Result<Tensor> {
        let rows = self.u32("row count")?;
        let cols = self.u32("column count")?;
        if cols == 0 {
            return Err(self.err("column count must be positive"));
        }
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| self.err("matrix size overflows"))?;
        if n > self.bytes.len() - self.pos {
            return Err(self.err(format!(
                "{rows}x{cols} matrix needs {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let start = self.pos;
        let data: Vec<f32> = self
            .take(n, "matrix values")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Decode {
                offset: self.base + start + 4 * bad,
                reason: "non-finite score value".into(),
            });
        }
        Tensor::matrix(rows, cols, data).map_err(|e| self.err(e.to_string()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!("{} unexpected trailing bytes in frame", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

/// Decode a frame body (everything after the length prefix). `base` is the
/// absolute offset of the body, used in error reports.
pub fn decode_body(body: &[u8], base: usize) -> Result<Message> {
    let mut r = Reader { bytes: body, pos: 0, base };
    let tag = r.u8("tag")?;
    if !(TAG_SCORE_REPORT..=TAG_PARTY_METRICS).contains(&tag) {
        return Err(Error::Decode {
            offset: base,
            reason: format!("unknown message tag 0x{tag:02x}"),
        });
    }
    let version = r.u32("version")?;
    if version as u32 != PROTOCOL_VERSION {
        return Err(Error::Decode {
            offset: base + 1,
            reason: format!("protocol version {version}, expected {PROTOCOL_VERSION}"),
        });
    }
    let msg = match tag {
        TAG_SCORE_REPORT => {
            let round = r.u32("round")?;
            let party = r.u32("party")?;
            Message::ScoreReport(ScoreMatrix {
                party,
                round,
                scores: r.matrix()?,
            })
        }
        TAG_CONSENSUS => {
            let round = r.u32("round")?;
            Message::ConsensusBroadcast(ConsensusTargets {
                round,
                targets: r.matrix()?,
            })
        }
        TAG_SUBSET => {
            let round = r.u32("round")?;
            let count = r.u32("index count")?;
            if count.checked_mul(4).is_none_or(|n| n > body.len() - r.pos) {
                return Err(r.err(format!("{count} indices do not fit in the frame")));
            }
            let indices = (0..count).map(|_| r.u32("subset index")).collect::<Result<_>>()?;
            Message::SubsetAnnouncement(SubsetSelection { round, indices })
        }
        TAG_ROUND_COMPLETE => Message::RoundComplete {
            round: r.u32("round")?,
        },
        TAG_PARTY_METRICS => {
            let round = r.u32("round")?;
            let party = r.u32("party")?;
            let kind_at = r.pos;
            let phase = match r.u8("phase kind")? {
                0 => Phase::Baseline,
                1 => Phase::Round(round),
                2 => Phase::Pooled,
                other => {
                    return Err(Error::Decode {
                        offset: base + kind_at,
                        reason: format!("unknown phase kind {other}"),
                    })
                }
            };
            if phase != Phase::Round(round) && round != 0 {
                return Err(r.err("baseline and pooled metrics must carry round 0"));
            }
            let present = r.u8("presence flags")?;
            if present > 3 {
                return Err(r.err(format!("invalid presence flags 0x{present:02x}")));
            }
            let accuracy = r.f64("accuracy")?;
            let digest = r.f64("digest loss")?;
            let revisit = r.f64("revisit loss")?;
            let wall_ms = r.u64("wall time")?;
            if (present & 1 == 0 && digest != 0.0) || (present & 2 == 0 && revisit != 0.0) {
                return Err(r.err("absent loss must be encoded as zero"));
            }
            Message::PartyMetrics(PartyMetrics {
                phase,
                party,
                accuracy,
                digest_loss: (present & 1 != 0).then_some(digest),
                revisit_loss: (present & 2 != 0).then_some(revisit),
                wall_ms,
            })
        }
        _ => unreachable!("tag range checked above"),
    };
    r.finish()?;
    Ok(msg)
}

/// Read the length prefix; returns the declared body length.
pub fn frame_len(prefix: [u8; LEN_PREFIX]) -> Result<usize> {
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME_LEN {
        return Err(Error::Decode {
            offset: 0,
            reason: format!("declared frame length {len} exceeds {MAX_FRAME_LEN}"),
        });
    }
    if len < 5 {
        return Err(Error::Decode {
            offset: 0,
            reason: format!("declared frame length {len} is shorter than tag and version"),
        });
    }
    Ok(len)
}

/// Decode exactly one complete frame.
pub fn decode_message(bytes: &[u8]) -> Result<Message> {
    let (msg, used) = decode_frame(bytes)?;
    if used != bytes.len() {
        return Err(Error::Decode {
            offset: used,
            reason: format!("{} bytes after the frame", bytes.len() - used),
        });
    }
    Ok(msg)
}

/// Decode the first frame in `bytes`, returning it and the bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(Message, usize)> {
    let prefix: [u8; LEN_PREFIX] = bytes
        .get(..LEN_PREFIX)
        .and_then(|p| p.try_into().ok())
        .ok_or_else(|| Error::Decode {
            offset: bytes.len(),
            reason: "truncated length prefix".into(),
        })?;
    let len = frame_len(prefix)?;
    let end = LEN_PREFIX + len;
    if bytes.len() < end {
        return Err(Error::Decode {
            offset: bytes.len(),
            reason: format!("frame declares {len} bytes, only {} present", bytes.len() - LEN_PREFIX),
        });
    }
    Ok((decode_body(&bytes[LEN_PREFIX..end], LEN_PREFIX)?, end))
}
