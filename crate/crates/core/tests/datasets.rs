//! IDX ingestion, synthetic generators and partitioners.

use std::collections::{BTreeMap, HashSet};

use fedmd::data::{
    load_idx_dataset, parse_idx, parse_idx_labels, parse_idx_raw, partition_iid, partition_noniid, synth_blobs,
    to_superclasses, Dataset, PartitionPlan,
};
use fedmd::{Error, Tensor};
use proptest::prelude::*;

/// Test-side IDX writer (unsigned-byte payloads only).
fn encode_idx(dims: &[usize], payload: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

/// Inverse of the /255 scaling.
fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let payload: Vec<u8> = t.as_slice().iter().map(|&v| (v * 255.0).round() as u8).collect();
    encode_idx(t.shape(), &payload)
}

#[test]
fn reference_image_file() {
    let bytes = [0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 0, 255];
    let t = parse_idx(&bytes).unwrap();
    assert_eq!(t.shape(), &[1, 2, 2]);
    assert_eq!(t.as_slice(), &[0.0, 1.0, 0.0, 1.0]);
}

#[test]
fn malformed_inputs_report_offsets() {
    let offset = |bytes: &[u8]| match parse_idx(bytes) {
        Err(Error::Parse { offset, .. }) => offset,
        other => panic!("expected parse error, got {other:?}"),
    };
    assert_eq!(offset(&[]), 0);
    assert_eq!(offset(&[0, 0, 0x0d, 1, 0, 0, 0, 1, 0, 0, 0, 0]), 2);
    assert_eq!(offset(&[0, 0, 8, 0]), 3);
    // declares 4 payload bytes, provides 3
    let mut truncated = encode_idx(&[4], &[1, 2, 3, 4]);
    truncated.pop();
    assert!(offset(&truncated) >= 8);
    assert!(matches!(parse_idx_labels(&encode_idx(&[1, 1], &[0])), Err(Error::Parse { .. })));
}

proptest! {
    #[test]
    fn idx_round_trip(dims in prop::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
        let n: usize = dims.iter().product();
        let payload: Vec<u8> = (0..n).map(|i| (seed.rotate_left(i as u32 % 64) as u8) ^ i as u8).collect();
        let bytes = encode_idx(&dims, &payload);
        let t = parse_idx(&bytes).unwrap();
        prop_assert_eq!(encode_tensor(&t), bytes.clone());
        prop_assert_eq!(parse_idx_raw(&bytes).unwrap().dims, dims);
    }

    #[test]
    fn idx_parser_is_total(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = parse_idx(&bytes);
    }
}

#[test]
fn idx_files_load_as_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("img.idx");
    let labels = dir.path().join("lbl.idx");
    std::fs::write(&images, encode_idx(&[3, 2, 2], &[0; 12])).unwrap();
    std::fs::write(&labels, encode_idx(&[3], &[2, 0, 2])).unwrap();
    let d = load_idx_dataset(&images, &labels, None).unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(d.feature_dim(), 4);
    assert_eq!(d.num_classes(), 3);
    assert_eq!(d.class_histogram(), vec![1, 0, 2]);
    let missing = dir.path().join("missing.idx");
    match load_idx_dataset(&missing, &labels, None) {
        Err(Error::File { path, .. }) => assert_eq!(path, missing),
        other => panic!("{other:?}"),
    }
}

#[test]
fn iid_table_regime() {
    let source = synth_blobs(6, 40, 4, 1.0, 1).unwrap();
    let split = partition_iid(&source, &PartitionPlan::iid(10, 3, 7)).unwrap();
    assert_eq!(split.parties.len(), 10);
    let mut seen = HashSet::new();
    for (party, idx) in split.parties.iter().zip(&split.party_indices) {
        assert_eq!(party.len(), 18);
        assert_eq!(party.class_histogram(), vec![3; 6]);
        for &i in idx {
            assert!(seen.insert(i), "index {i} assigned twice");
        }
    }
    for &i in &split.remainder_indices {
        assert!(seen.insert(i));
    }
    assert_eq!(seen.len(), source.len());

    // multiset union equals the source
    let key = |d: &Dataset, i: usize| (d.labels()[i], d.features().row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    let mut whole: BTreeMap<_, usize> = BTreeMap::new();
    for i in 0..source.len() {
        *whole.entry(key(&source, i)).or_default() += 1;
    }
    let mut parts: BTreeMap<_, usize> = BTreeMap::new();
    for d in split.parties.iter().chain(std::iter::once(&split.remainder)) {
        for i in 0..d.len() {
            *parts.entry(key(d, i)).or_default() += 1;
        }
    }
    assert_eq!(whole, parts);
}

#[test]
fn iid_single_party_takes_everything() {
    let source = synth_blobs(3, 5, 2, 1.0, 1).unwrap();
    let split = partition_iid(&source, &PartitionPlan::iid(1, 5, 0)).unwrap();
    assert_eq!(split.parties[0].len(), 15);
    assert!(split.remainder.is_empty());
    match partition_iid(&source, &PartitionPlan::iid(2, 3, 0)) {
        Err(Error::Config(msg)) => assert!(msg.contains("class"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn noniid_provenance_audit() {
    // 3 superclasses × 3 subclasses; subclass s belongs to superclass s % 3
    let map: Vec<usize> = (0..9).map(|s| s % 3).collect();
    let source = synth_blobs(9, 10, 4, 1.0, 2).unwrap();
    let split = partition_noniid(&source, &PartitionPlan::noniid(3, 4, map.clone(), 5)).unwrap();
    for (k, idx) in split.partition.party_indices.iter().enumerate() {
        let party = &split.partition.parties[k];
        assert_eq!(party.class_histogram().iter().filter(|&&c| c > 0).count(), 3, "labels {{0,1,2}}");
        let mut subclass_of_super: BTreeMap<usize, HashSet<usize>> = BTreeMap::new();
        for &i in idx {
            let sub = source.labels()[i];
            subclass_of_super.entry(map[sub]).or_default().insert(sub);
        }
        for (sup, subs) in &subclass_of_super {
            assert_eq!(subs.len(), 1, "party {k} holds {subs:?} of superclass {sup}");
            assert_eq!(split.assigned[k][*sup], *subs.iter().next().unwrap());
        }
    }
    // each subclass goes to exactly one party
    for sup in 0..3 {
        let held: HashSet<usize> = split.assigned.iter().map(|a| a[sup]).collect();
        assert_eq!(held.len(), 3);
    }
    let test = to_superclasses(&source, &map).unwrap();
    assert_eq!(test.num_classes(), 3);
    assert_eq!(test.len(), source.len());
}

#[test]
fn noniid_smallest_instance_and_rejection() {
    let source = synth_blobs(2, 4, 2, 1.0, 3).unwrap();
    let split = partition_noniid(&source, &PartitionPlan::noniid(2, 2, vec![0, 0], 1)).unwrap();
    let subs: HashSet<usize> = split.assigned.iter().map(|a| a[0]).collect();
    assert_eq!(subs, HashSet::from([0, 1]));
    for p in &split.partition.parties {
        assert_eq!(p.labels(), &[0, 0]);
    }
    assert!(matches!(
        partition_noniid(&source, &PartitionPlan::noniid(3, 1, vec![0, 0], 1)),
        Err(Error::Config(_))
    ));
}

#[test]
fn partitions_are_deterministic() {
    let source = synth_blobs(4, 10, 3, 1.0, 4).unwrap();
    let a = partition_iid(&source, &PartitionPlan::iid(3, 2, 9)).unwrap();
    let b = partition_iid(&source, &PartitionPlan::iid(3, 2, 9)).unwrap();
    assert_eq!(a.party_indices, b.party_indices);
    let c = partition_iid(&source, &PartitionPlan::iid(3, 2, 10)).unwrap();
    assert_ne!(a.party_indices, c.party_indices);
}
