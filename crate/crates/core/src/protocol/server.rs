//! Server-side steps: choosing the communication subset and aggregating scores.

use rand::Rng;

use super::types::{ConsensusTargets, ScoreMatrix, SubsetSelection};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Uniform sample of `subset_size` distinct indices from `0..n0`.
pub fn select_subset<R: Rng + ?Sized>(round: usize, n0: usize, subset_size: usize, rng: &mut R) -> Result<SubsetSelection> {
    if subset_size == 0 || subset_size > n0 {
        return Err(Error::Config(format!(
            "subset_size {subset_size} must lie in [1, {n0}] (public set size)"
        )));
    }
    let indices = rand::seq::index::sample(rng, n0, subset_size).into_vec();
    Ok(SubsetSelection { round, indices })
}

/// Weighted consensus `Σ_k c_k · scores_k`, with `weights[k]` applying to the
/// report from party `k`.
///
/// Each entry's weighted terms are summed in ascending order, so the result
/// does not depend on the order reports arrive in or on how parties are
/// numbered.
pub fn aggregate(reports: &[ScoreMatrix], weights: &[f64]) -> Result<ConsensusTargets> {
    let m = weights.len();
    let mut by_party: Vec<Option<&ScoreMatrix>> = vec![None; m];
    for r in reports {
        let slot = by_party
            .get_mut(r.party)
            .ok_or_else(|| Error::protocol(Some(r.party), "aggregate", format!("unknown party (expected < {m})")))?;
        if slot.replace(r).is_some() {
            return Err(Error::protocol(Some(r.party), "aggregate", "duplicate score report"));
        }
    }
    if let Some(missing) = by_party.iter().position(Option::is_none) {
        return Err(Error::protocol(Some(missing), "aggregate", "missing score report"));
    }
    let by_party: Vec<&ScoreMatrix> = by_party.into_iter().flatten().collect();
    let first = by_party[0];
    for r in &by_party[1..] {
        if r.round != first.round {
            return Err(Error::protocol(
                Some(r.party),
                "aggregate",
                format!("report for round {} while aggregating round {}", r.round, first.round),
            ));
        }
        if r.scores.shape() != first.scores.shape() {
            return Err(Error::protocol(
                Some(r.party),
                "aggregate",
                format!("scores shaped {:?}, expected {:?}", r.scores.shape(), first.scores.shape()),
            ));
        }
    }

    let len = first.scores.len();
    let mut terms = vec![0.0f64; m];
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        for (t, (r, &c)) in terms.iter_mut().zip(by_party.iter().zip(weights)) {
            *t = c * r.scores.as_slice()[i] as f64;
        }
        terms.sort_unstable_by(f64::total_cmp);
        out.push(terms.iter().sum::<f64>() as f32);
    }
    Ok(ConsensusTargets {
        round: first.round,
        targets: Tensor::new(first.scores.shape().to_vec(), out)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn report(party: usize, rows: &[Vec<f32>]) -> ScoreMatrix {
        ScoreMatrix {
            party,
            round: 1,
            scores: Tensor::from_rows(rows).unwrap(),
        }
    }

    #[test]
    fn single_party_identity() {
        let r = report(0, &[vec![1.5, -2.0]]);
        let c = aggregate(std::slice::from_ref(&r), &[1.0]).unwrap();
        assert_eq!(c.targets, r.scores);
    }

    #[test]
    fn equal_weight_average() {
        let c = aggregate(&[report(0, &[vec![1.0, 3.0]]), report(1, &[vec![3.0, 5.0]])], &[0.5, 0.5]).unwrap();
        assert_eq!(c.targets.as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn missing_and_mismatched_reports() {
        let err = aggregate(&[report(0, &[vec![1.0]])], &[0.5, 0.5]).unwrap_err();
        assert!(matches!(err, Error::Protocol { party: Some(1), .. }), "{err}");
        let err = aggregate(&[report(0, &[vec![1.0]]), report(1, &[vec![1.0, 2.0]])], &[0.5, 0.5]).unwrap_err();
        assert!(matches!(err, Error::Protocol { party: Some(1), .. }));
        let err = aggregate(&[report(0, &[vec![1.0]]), report(0, &[vec![1.0]])], &[0.5, 0.5]).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn subset_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut all = select_subset(1, 20, 20, &mut rng).unwrap().indices;
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        let one = select_subset(1, 20, 1, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.indices[0] < 20);
        assert!(select_subset(1, 20, 21, &mut rng).is_err());
        assert!(select_subset(1, 20, 0, &mut rng).is_err());
    }

    #[test]
    fn subset_is_repeatable() {
        let a = select_subset(2, 100, 10, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = select_subset(2, 100, 10, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }
}
