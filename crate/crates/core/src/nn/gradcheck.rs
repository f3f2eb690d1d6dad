//! Finite-difference verification of the analytic gradients.
//!
//! The reference evaluator below re-implements the forward pass and both
//! losses in `f64` directly from the layer parameters, so the check never
//! routes through the `f32` kernel it is verifying.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{cross_entropy, distill_loss, DistillLoss};
use super::network::{Activation, Network};
use crate::error::Result;
use crate::tensor::Tensor;

/// Step for central differences.
pub const FD_STEP: f64 = 1e-4;
/// Smallest denominator used in the relative error.
pub const REL_FLOOR: f64 = 1e-4;
/// Inputs whose pre-activations (or MAE residuals) sit closer than this to a
/// kink are redrawn, since finite differences are meaningless there.
pub const KINK_MARGIN: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckedLoss {
    CrossEntropy,
    Distill(DistillLoss),
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub networks: usize,
    pub parameters_checked: usize,
    pub max_rel_error: f64,
    pub worst_case: String,
}

impl GradcheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

struct RefLayer {
    w: Vec<f64>,
    b: Vec<f64>,
    n_in: usize,
    n_out: usize,
    relu: bool,
}

fn reference_layers(net: &Network) -> Vec<RefLayer> {
    net.layers()
        .iter()
        .map(|l| RefLayer {
            w: l.weights.as_slice().iter().map(|&v| v as f64).collect(),
            b: l.bias.as_slice().iter().map(|&v| v as f64).collect(),
            n_in: l.in_dim(),
            n_out: l.out_dim(),
            relu: l.activation == Activation::Relu,
        })
        .collect()
}

/// Returns the logits and the smallest |pre-activation| seen at hidden layers.
fn reference_forward(layers: &[RefLayer], x: &[f64], rows: usize) -> (Vec<f64>, f64) {
    let mut act = x.to_vec();
    let mut closest = f64::INFINITY;
    for l in layers {
        let mut next = vec![0.0; rows * l.n_out];
        for r in 0..rows {
            for j in 0..l.n_out {
                let mut z = l.b[j];
                for i in 0..l.n_in {
                    z += act[r * l.n_in + i] * l.w[i * l.n_out + j];
                }
                if l.relu {
                    closest = closest.min(z.abs());
                    z = z.max(0.0);
                }
                next[r * l.n_out + j] = z;
            }
        }
        act = next;
    }
    (act, closest)
}

fn reference_loss(logits: &[f64], rows: usize, classes: usize, loss: CheckedLoss, labels: &[usize], targets: &[f64]) -> f64 {
    match loss {
        CheckedLoss::CrossEntropy => {
            let mut total = 0.0;
            for r in 0..rows {
                let row = &logits[r * classes..(r + 1) * classes];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
                total += lse - row[labels[r]];
            }
            total / rows as f64
        }
        CheckedLoss::Distill(kind) => {
            let n = logits.len() as f64;
            logits
                .iter()
                .zip(targets)
                .map(|(l, t)| match kind {
                    DistillLoss::Mae => (l - t).abs(),
                    DistillLoss::Mse => (l - t) * (l - t),
                })
                .sum::<f64>()
                / n
        }
    }
}

/// Max relative error between analytic and central-difference gradients for
/// one network, batch and loss. `None` if the sample sits too close to a kink.
pub fn check_network(
    net: &Network,
    inputs: &Tensor,
    loss: CheckedLoss,
    labels: &[usize],
    targets: &Tensor,
) -> Result<Option<(f64, usize)>> {
    let rows = inputs.rows();
    let classes = net.output_dim();
    let x: Vec<f64> = inputs.as_slice().iter().map(|&v| v as f64).collect();
    let t: Vec<f64> = targets.as_slice().iter().map(|&v| v as f64).collect();
    let mut layers = reference_layers(net);

    let (logits_ref, closest) = reference_forward(&layers, &x, rows);
    if closest < KINK_MARGIN {
        return Ok(None);
    }
    if matches!(loss, CheckedLoss::Distill(DistillLoss::Mae))
        && logits_ref.iter().zip(&t).any(|(l, t)| (l - t).abs() < KINK_MARGIN)
    {
        return Ok(None);
    }

    let (logits, trace) = net.forward_traced(inputs)?;
    let (_, grad_logits) = match loss {
        CheckedLoss::CrossEntropy => cross_entropy(&logits, labels)?,
        CheckedLoss::Distill(kind) => distill_loss(&logits, targets, kind)?,
    };
    let grads = net.backward(&trace, &grad_logits)?;

    let mut worst = 0.0f64;
    let mut count = 0;
    for li in 0..layers.len() {
        for which in 0..2 {
            let len = if which == 0 { layers[li].w.len() } else { layers[li].b.len() };
            for p in 0..len {
                let analytic = if which == 0 { grads[li].weights[p] } else { grads[li].bias[p] } as f64;
                let original = if which == 0 { layers[li].w[p] } else { layers[li].b[p] };
                let eval = |value: f64, layers: &mut Vec<RefLayer>| {
                    if which == 0 {
                        layers[li].w[p] = value;
                    } else {
                        layers[li].b[p] = value;
                    }
                    let (out, _) = reference_forward(layers, &x, rows);
                    reference_loss(&out, rows, classes, loss, labels, &t)
                };
                let plus = eval(original + FD_STEP, &mut layers);
                let minus = eval(original - FD_STEP, &mut layers);
                eval(original, &mut layers);
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                worst = worst.max(relative_error(analytic, numeric));
                count += 1;
            }
        }
    }
    Ok(Some((worst, count)))
}

/// Random small networks (≤ 3 layers, widths ≤ 8) checked against both losses.
pub fn run_gradcheck(seed: u64, networks: usize) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradcheckReport {
        networks: 0,
        parameters_checked: 0,
        max_rel_error: 0.0,
        worst_case: String::new(),
    };
    let losses = [
        CheckedLoss::CrossEntropy,
        CheckedLoss::Distill(DistillLoss::Mae),
        CheckedLoss::Distill(DistillLoss::Mse),
    ];
    while report.networks < networks {
        let depth = rng.random_range(1..=3);
        let input = rng.random_range(1..=8);
        let classes = rng.random_range(2..=8);
        let hidden: Vec<usize> = (1..depth).map(|_| rng.random_range(1..=8)).collect();
        let mut net = Network::mlp(input, &hidden, classes, format!("gc-{}", report.networks), &mut rng)?;
        for layer in net.layers_mut() {
            for b in layer.bias.as_mut_slice() {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let rows = rng.random_range(1..=4);
        let inputs = Tensor::matrix(rows, input, (0..rows * input).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..classes)).collect();
        let targets = Tensor::matrix(rows, classes, (0..rows * classes).map(|_| rng.random_range(-2.0..2.0)).collect())?;

        let mut results = Vec::with_capacity(losses.len());
        for &loss in &losses {
            match check_network(&net, &inputs, loss, &labels, &targets)? {
                Some(r) => results.push((loss, r)),
                None => break,
            }
        }
        if results.len() < losses.len() {
            continue;
        }
        for (loss, (err, count)) in results {
            report.parameters_checked += count;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_case = format!("network {} ({:?}, hidden {:?}): {:?}", report.networks, net.arch_id(), hidden, loss);
            }
        }
        report.networks += 1;
    }
    Ok(report)
}
