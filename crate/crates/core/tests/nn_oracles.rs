//! Kernel checks against independently written float64 references.

use fedmd::data::{synth_blobs, Dataset};
use fedmd::nn::gradcheck::run_gradcheck;
use fedmd::nn::{
    accuracy, adam_step, cross_entropy, distill_loss, train_distill, train_supervised, Activation, AdamConfig,
    AdamState, Dense, DistillLoss, Network,
};
use fedmd::{Error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Textbook cross-entropy without max-subtraction, in f64.
fn naive_cross_entropy(logits: &Tensor, labels: &[usize]) -> f64 {
    let b = logits.rows();
    (0..b)
        .map(|i| {
            let row: Vec<f64> = logits.row(i).iter().map(|&v| v as f64).collect();
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            -(row[labels[i]].exp() / z).ln()
        })
        .sum::<f64>()
        / b as f64
}

#[test]
fn cross_entropy_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let logits = random_matrix(&mut rng, 2, 5, 4.0);
        let labels = vec![rng.random_range(0..5), rng.random_range(0..5)];
        let (loss, grad) = cross_entropy(&logits, &labels).unwrap();
        assert!((loss - naive_cross_entropy(&logits, &labels)).abs() < 1e-5);
        // gradient rows sum to zero: softmax sums to one, one-hot sums to one
        for r in 0..2 {
            let s: f64 = grad.row(r).iter().map(|&g| g as f64).sum();
            assert!(s.abs() < 1e-6, "row sum {s}");
        }
    }
}

#[test]
fn cross_entropy_edge_values() {
    let (loss, _) = cross_entropy(&Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap(), &[0]).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-6);
    let (loss, grad) = cross_entropy(&Tensor::matrix(1, 2, vec![1000.0, 0.0]).unwrap(), &[0]).unwrap();
    assert!(loss.is_finite() && loss.abs() < 1e-6);
    assert!(grad.is_finite());
    assert!(matches!(
        cross_entropy(&Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap(), &[2]),
        Err(Error::Index { .. })
    ));
}

#[test]
fn mae_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let a = random_matrix(&mut rng, 3, 4, 3.0);
        let b = random_matrix(&mut rng, 3, 4, 3.0);
        let (loss, grad) = distill_loss(&a, &b, DistillLoss::Mae).unwrap();
        let oracle: f64 = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(&x, &y)| (x as f64 - y as f64).abs())
            .sum::<f64>()
            / 12.0;
        assert!((loss - oracle).abs() < 1e-6);
        for ((&g, &x), &y) in grad.as_slice().iter().zip(a.as_slice()).zip(b.as_slice()) {
            let expected = (x as f64 - y as f64).signum() / 12.0;
            assert!((g as f64 - expected).abs() < 1e-7);
        }
    }
}

#[test]
fn mae_hand_cases() {
    let logits = Tensor::matrix(1, 2, vec![2.0, 0.0]).unwrap();
    let (loss, grad) = distill_loss(&logits, &Tensor::zeros(vec![1, 2]), DistillLoss::Mae).unwrap();
    assert_eq!(loss, 1.0);
    assert_eq!(grad.as_slice(), &[0.5, 0.0]);
    let (loss, grad) = distill_loss(&logits, &logits, DistillLoss::Mae).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    assert!(matches!(
        distill_loss(&logits, &Tensor::zeros(vec![2, 1]), DistillLoss::Mae),
        Err(Error::Shape { .. })
    ));
}

#[test]
fn mse_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = random_matrix(&mut rng, 3, 4, 3.0);
    let b = random_matrix(&mut rng, 3, 4, 3.0);
    let (loss, _) = distill_loss(&a, &b, DistillLoss::Mse).unwrap();
    let oracle: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / 12.0;
    assert!((loss - oracle).abs() < 1e-6);
}

/// Plain f64 Adam with bias correction.
struct AdamOracle {
    m: f64,
    v: f64,
    t: i32,
}

impl AdamOracle {
    fn step(&mut self, p: f64, g: f64) -> f64 {
        let (lr, b1, b2, eps) = (0.001, 0.9, 0.999, 1e-8);
        self.t += 1;
        self.m = b1 * self.m + (1.0 - b1) * g;
        self.v = b2 * self.v + (1.0 - b2) * g * g;
        let m_hat = self.m / (1.0 - b1.powi(self.t));
        let v_hat = self.v / (1.0 - b2.powi(self.t));
        p - lr * m_hat / (v_hat.sqrt() + eps)
    }
}

#[test]
fn adam_two_steps_match_oracle() {
    let mut params = vec![0.0f32];
    let mut state = AdamState::new(AdamConfig::default(), &[1]);
    let mut oracle = AdamOracle { m: 0.0, v: 0.0, t: 0 };
    let mut p = 0.0;
    for _ in 0..2 {
        adam_step(&mut [params.as_mut_slice()], &[&[1.0]], &mut state).unwrap();
        p = oracle.step(p, 1.0);
        assert!((params[0] as f64 - p).abs() < 1e-9, "{} vs {p}", params[0]);
    }
    assert_eq!(state.t, 2);
    assert!((p - -0.002).abs() < 1e-8);
}

#[test]
fn adam_first_step_hand_value() {
    let mut params = vec![0.0f32];
    let mut state = AdamState::new(AdamConfig::default(), &[1]);
    adam_step(&mut [params.as_mut_slice()], &[&[1.0]], &mut state).unwrap();
    assert!((params[0] as f64 - (-0.001 / (1.0 + 1e-8))).abs() < 1e-9);
}

#[test]
fn forward_is_affine_without_softmax() {
    let layer = Dense {
        weights: Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]).unwrap(),
        bias: Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap(),
        activation: Activation::Identity,
    };
    let net = Network::from_layers(vec![layer], "affine").unwrap();
    let out = net.forward(&Tensor::matrix(1, 2, vec![2.0, 1.0]).unwrap()).unwrap();
    // [2,1]·W + b
    let expected = [2.0 - 1.0 + 0.1, 4.0 + 0.5 + 0.2, 6.0 + 4.0 + 0.3];
    for (o, e) in out.as_slice().iter().zip(expected) {
        assert!((o - e).abs() < 1e-6);
    }
    let sum: f32 = out.as_slice().iter().sum();
    assert!((sum - 1.0).abs() > 0.5, "outputs must be raw logits");
    assert!(matches!(net.forward(&Tensor::zeros(vec![1, 3])), Err(Error::Shape { .. })));
}

#[test]
fn gradients_match_finite_differences() {
    let report = run_gradcheck(2024, 60).unwrap();
    assert!(report.networks >= 50);
    assert!(report.passed(1e-3), "{report:?}");
}

#[test]
fn tight_blobs_are_learned() {
    let train = synth_blobs(6, 40, 8, 0.01, 3).unwrap();
    let test = {
        // same centres (seed), fresh noise draw
        let g = fedmd::data::BlobGenerator::new(6, 8, 0.01, 3).unwrap();
        g.sample(20, 99, "held-out").unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = Network::mlp(8, &[32], 6, "m", &mut rng).unwrap();
    let mut state = AdamState::new(AdamConfig::default(), &net.param_sizes());
    train_supervised(&mut net, &mut state, &train, 100, 32, &mut rng).unwrap();
    assert!(accuracy(&net, &test).unwrap() >= 0.98);
}

#[test]
fn untrained_accuracy_sits_at_chance() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = random_matrix(&mut rng, 600, 8, 1.0);
        let labels = (0..600).map(|_| rng.random_range(0..6)).collect();
        let data = Dataset::new(features, labels, 6, "noise").unwrap();
        let net = Network::mlp(8, &[16], 6, "m", &mut rng).unwrap();
        let acc = accuracy(&net, &data).unwrap();
        assert!((0.10..=0.24).contains(&acc), "seed {seed}: {acc}");
    }
}

#[test]
fn distill_loss_decreases_on_single_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut net = Network::mlp(3, &[], 2, "linear", &mut rng).unwrap();
    let x = Tensor::matrix(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
    let mut target = net.forward(&x).unwrap();
    target.as_mut_slice()[0] += 1.0;
    let mut state = AdamState::new(AdamConfig::default(), &net.param_sizes());
    let mut previous = f64::INFINITY;
    for _ in 0..10 {
        let report = train_distill(&mut net, &mut state, &x, &target, DistillLoss::Mae, 1, 1, &mut rng).unwrap();
        let loss = report.final_loss().unwrap();
        assert!(loss < previous, "{loss} !< {previous}");
        previous = loss;
    }
}
