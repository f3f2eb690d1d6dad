use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer; `weights` is `[in, out]`, `bias` is `[out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    /// Zero-initialised layer.
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Tensor::zeros(vec![in_dim, out_dim]),
            bias: Tensor::zeros(vec![out_dim]),
            activation,
        }
    }

    fn he_uniform<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt() as f32;
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            weights: Tensor::new(vec![in_dim, out_dim], weights).expect("layer shape"),
            bias: Tensor::zeros(vec![out_dim]),
            activation,
        }
    }

    /// `x · W + b` for every row of `x`, before the activation.
    fn affine(&self, x: &[f32], rows: usize) -> Vec<f32> {
        let (n_in, n_out) = (self.in_dim(), self.out_dim());
        let w = self.weights.as_slice();
        let b = self.bias.as_slice();
        let mut out = Vec::with_capacity(rows * n_out);
        for r in 0..rows {
            let mut acc = b.to_vec();
            for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (a, &wij) in acc.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                    *a += xi * wij;
                }
            }
            out.extend_from_slice(&acc);
        }
        out
    }
}

/// Gradients for one layer, laid out like the layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Activations recorded during a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    rows: usize,
    /// Input to each layer (the batch for layer 0).
    inputs: Vec<Vec<f32>>,
    /// Pre-activation values of each layer.
    pre: Vec<Vec<f32>>,
}

impl ForwardTrace {
    pub fn pre_activations(&self) -> &[Vec<f32>] {
        &self.pre
    }
}

/// Feed-forward classifier producing raw logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Dense>,
    arch_id: String,
}

impl Network {
    /// He-uniform MLP: `input_dim → hidden[0] → … → classes`, ReLU on hidden
    /// layers, identity on the output layer, zero biases.
    pub fn mlp<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        classes: usize,
        arch_id: impl Into<String>,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || classes == 0 || hidden.contains(&0) {
            return Err(Error::Config(format!(
                "network dimensions must be positive (input {input_dim}, hidden {hidden:?}, classes {classes})"
            )));
        }
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(classes);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { Activation::Identity } else { Activation::Relu };
                Dense::he_uniform(w[0], w[1], act, rng)
            })
            .collect();
        Self::from_layers(layers, arch_id)
    }

    pub fn from_layers(layers: Vec<Dense>, arch_id: impl Into<String>) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| Error::Config("network needs at least one layer".into()))?;
        if last.activation != Activation::Identity {
            return Err(Error::Config("final layer must emit raw logits (identity activation)".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() || l.weights.shape().len() != 2 {
                return Err(Error::shape("Network layer", format!("bias of {}", l.out_dim()), l.bias.len()));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.in_dim() != l.out_dim() {
                    return Err(Error::shape("Network layer chain", l.out_dim(), next.in_dim()));
                }
            }
        }
        Ok(Self {
            layers,
            arch_id: arch_id.into(),
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn arch_id(&self) -> &str {
        &self.arch_id
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Per-parameter-array lengths, in the order used by `params_mut` and gradients.
    pub fn param_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f32]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape("forward (feature dim)", self.input_dim(), batch.cols()));
        }
        if batch.rows() == 0 {
            return Err(Error::shape("forward (batch size)", "at least 1 row", 0));
        }
        Ok(())
    }

    /// Raw logits `[B, C]`; no softmax is applied.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let rows = batch.rows();
        let mut x = batch.as_slice().to_vec();
        for layer in &self.layers {
            x = layer.affine(&x, rows);
            if layer.activation == Activation::Relu {
                x.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Tensor::matrix(rows, self.output_dim(), x)
    }

    pub fn forward_traced(&self, batch: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        self.check_batch(batch)?;
        let rows = batch.rows();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = batch.as_slice().to_vec();
        for layer in &self.layers {
            let z = layer.affine(&x, rows);
            let out = match layer.activation {
                Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
                Activation::Identity => z.clone(),
            };
            inputs.push(std::mem::replace(&mut x, out));
            pre.push(z);
        }
        let logits = Tensor::matrix(rows, self.output_dim(), x)?;
        Ok((logits, ForwardTrace { rows, inputs, pre }))
    }

    /// Back-propagate `grad_logits` (`[B, C]`, already scaled by the loss) to
    /// parameter gradients, one entry per layer.
    pub fn backward(&self, trace: &ForwardTrace, grad_logits: &Tensor) -> Result<Vec<LayerGrad>> {
        let rows = trace.rows;
        if grad_logits.shape() != [rows, self.output_dim()] {
            return Err(Error::shape(
                "backward",
                format!("[{rows}, {}]", self.output_dim()),
                format!("{:?}", grad_logits.shape()),
            ));
        }
        let mut grads = vec![
            LayerGrad {
                weights: Vec::new(),
                bias: Vec::new()
            };
            self.layers.len()
        ];
        let mut g = grad_logits.as_slice().to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let (n_in, n_out) = (layer.in_dim(), layer.out_dim());
            if layer.activation == Activation::Relu {
                for (gv, &z) in g.iter_mut().zip(&trace.pre[li]) {
                    if z <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let x = &trace.inputs[li];
            let mut gw = vec![0.0f32; n_in * n_out];
            let mut gb = vec![0.0f32; n_out];
            for r in 0..rows {
                let gr = &g[r * n_out..(r + 1) * n_out];
                for (b, &v) in gb.iter_mut().zip(gr) {
                    *b += v;
                }
                for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    for (w, &v) in gw[i * n_out..(i + 1) * n_out].iter_mut().zip(gr) {
                        *w += xi * v;
                    }
                }
            }
            if li > 0 {
                let w = layer.weights.as_slice();
                let mut gx = vec![0.0f32; rows * n_in];
                for r in 0..rows {
                    let gr = &g[r * n_out..(r + 1) * n_out];
                    for (i, out) in gx[r * n_in..(r + 1) * n_in].iter_mut().enumerate() {
                        *out = w[i * n_out..(i + 1) * n_out]
                            .iter()
                            .zip(gr)
                            .map(|(a, b)| a * b)
                            .sum();
                    }
                }
                g = gx;
            }
            grads[li] = LayerGrad { weights: gw, bias: gb };
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_net() -> Network {
        let layer = Dense {
            weights: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            bias: Tensor::zeros(vec![2]),
            activation: Activation::Identity,
        };
        Network::from_layers(vec![layer], "id").unwrap()
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let net = Network::from_layers(
            vec![Dense::zeros(3, 4, Activation::Relu), Dense::zeros(4, 2, Activation::Identity)],
            "zero",
        )
        .unwrap();
        let batch = Tensor::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 9.0]]).unwrap();
        let out = net.forward(&batch).unwrap();
        assert_eq!(out.shape(), &[2, 2]);
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let out = identity_net()
            .forward(&Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap())
            .unwrap();
        assert_eq!(out.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn hand_evaluated_two_layer_net() {
        // W1 = [[1, -1, 2], [0.5, 3, -4]], b1 = [0.1, 0.2, -1.5]
        // x = [1, 0]: z1 = [1.1, -0.8, 0.5] -> relu [1.1, 0, 0.5]
        // W2 = [[1, 2], [5, 5], [-2, 4]], b2 = [0.3, -0.3]
        // z2 = [1.1 - 1.0 + 0.3, 2.2 + 2.0 - 0.3] = [0.4, 3.9]
        let l1 = Dense {
            weights: Tensor::matrix(2, 3, vec![1.0, -1.0, 2.0, 0.5, 3.0, -4.0]).unwrap(),
            bias: Tensor::new(vec![3], vec![0.1, 0.2, -1.5]).unwrap(),
            activation: Activation::Relu,
        };
        let l2 = Dense {
            weights: Tensor::matrix(3, 2, vec![1.0, 2.0, 5.0, 5.0, -2.0, 4.0]).unwrap(),
            bias: Tensor::new(vec![2], vec![0.3, -0.3]).unwrap(),
            activation: Activation::Identity,
        };
        let net = Network::from_layers(vec![l1, l2], "hand").unwrap();
        let out = net.forward(&Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap()).unwrap();
        assert!((out.as_slice()[0] - 0.4).abs() < 1e-6);
        assert!((out.as_slice()[1] - 3.9).abs() < 1e-6);
        // outputs are raw logits: nothing forces them to sum to one
        assert!((out.as_slice().iter().sum::<f32>() - 1.0).abs() > 0.1);
    }

    #[test]
    fn dimension_mismatch_names_both_dims() {
        let err = identity_net()
            .forward(&Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap())
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('3'), "{msg}");
    }

    #[test]
    fn rejects_broken_chains_and_softmaxed_heads() {
        let bad_chain = Network::from_layers(
            vec![Dense::zeros(3, 4, Activation::Relu), Dense::zeros(5, 2, Activation::Identity)],
            "bad",
        );
        assert!(bad_chain.is_err());
        let relu_head = Network::from_layers(vec![Dense::zeros(3, 2, Activation::Relu)], "bad");
        assert!(relu_head.is_err());
    }

    #[test]
    fn mlp_init_is_seeded_and_bounded() {
        let a = Network::mlp(8, &[16, 4], 3, "a", &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = Network::mlp(8, &[16, 4], 3, "a", &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layers().len(), 3);
        assert_eq!(a.output_dim(), 3);
        let bound = (6.0f32 / 8.0).sqrt();
        assert!(a.layers()[0].weights.as_slice().iter().all(|w| w.abs() <= bound));
        assert!(a.layers()[0].bias.as_slice().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn batched_forward_matches_rowwise() {
        let net = Network::mlp(5, &[7], 3, "r", &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f32>> = (0..6)
            .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let batched = net.forward(&Tensor::from_rows(&rows).unwrap()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let single = net.forward(&Tensor::from_rows(std::slice::from_ref(r)).unwrap()).unwrap();
            assert_eq!(single.as_slice(), batched.row(i));
        }
    }
}
