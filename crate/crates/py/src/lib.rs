//! Python bindings: synthetic data, networks, consensus aggregation, the wire
//! codec, the gradient check and whole experiments.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedmd::experiments::{self, ExperimentConfig};
use fedmd::nn::{self, Network};
use fedmd::protocol::{self, ScoreMatrix};
use fedmd::transport::{self, Message};
use fedmd::{data, Tensor};

create_exception!(fedmd_py, FedmdError, PyException, "Raised for any error reported by the fedmd core.");

fn err(e: fedmd::Error) -> PyErr {
    FedmdError::new_err(format!("[{}] {e}", e.category()))
}

fn tensor(rows: Vec<Vec<f32>>) -> PyResult<Tensor> {
    Tensor::from_rows(&rows).map_err(err)
}

fn rows(t: &Tensor) -> Vec<Vec<f32>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| FedmdError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A multilayer perceptron with ReLU hidden layers and affine logits.
#[pyclass(name = "Network", module = "fedmd_py")]
pub struct PyNetwork {
    inner: Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (input_dim, hidden, classes, seed=0))]
    fn new(input_dim: usize, hidden: Vec<usize>, classes: usize, seed: u64) -> PyResult<Self> {
        let id = format!("mlp{hidden:?}");
        let inner = Network::mlp(input_dim, &hidden, classes, id, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)?;
        Ok(Self { inner })
    }

    /// Raw logits for a batch given as a list of rows.
    fn forward(&self, batch: Vec<Vec<f32>>) -> PyResult<Vec<Vec<f32>>> {
        Ok(rows(&self.inner.forward(&tensor(batch)?).map_err(err)?))
    }

    /// Arg-max class of every row.
    fn predict(&self, batch: Vec<Vec<f32>>) -> PyResult<Vec<usize>> {
        nn::predict(&self.inner, &tensor(batch)?).map_err(err)
    }

    /// Supervised training with Adam on cross-entropy; returns per-epoch mean loss.
    #[pyo3(signature = (features, labels, epochs=10, batch_size=32, lr=0.001, seed=0))]
    fn fit(
        &mut self,
        features: Vec<Vec<f32>>,
        labels: Vec<usize>,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let classes = self.inner.output_dim();
        let set = data::Dataset::new(tensor(features)?, labels, classes, "python").map_err(err)?;
        let mut state = nn::AdamState::new(nn::AdamConfig { lr, ..Default::default() }, &self.inner.param_sizes());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        nn::train_supervised(&mut self.inner, &mut state, &set, epochs, batch_size, &mut rng)
            .map(|r| r.epoch_losses)
            .map_err(err)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    fn __repr__(&self) -> String {
        format!(
            "Network({} → {}, {} parameters)",
            self.inner.input_dim(),
            self.inner.output_dim(),
            self.inner.num_params()
        )
    }
}

/// Gaussian clusters: returns `(features, labels)`.
#[pyfunction]
#[pyo3(signature = (classes, per_class, dim, spread=1.0, seed=0))]
fn synth_blobs(classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> PyResult<(Vec<Vec<f32>>, Vec<usize>)> {
    let d = data::synth_blobs(classes, per_class, dim, spread, seed).map_err(err)?;
    Ok((rows(d.features()), d.labels().to_vec()))
}

/// Weighted element-wise consensus of per-party score matrices.
#[pyfunction]
fn aggregate(reports: Vec<Vec<Vec<f32>>>, weights: Vec<f64>) -> PyResult<Vec<Vec<f32>>> {
    let reports = reports
        .into_iter()
        .enumerate()
        .map(|(party, r)| Ok(ScoreMatrix { party, round: 1, scores: tensor(r)? }))
        .collect::<PyResult<Vec<_>>>()?;
    Ok(rows(&protocol::aggregate(&reports, &weights).map_err(err)?.targets))
}

/// Frame a score report for the wire.
#[pyfunction]
fn encode_score_report<'py>(py: Python<'py>, party: usize, round: usize, scores: Vec<Vec<f32>>) -> PyResult<Bound<'py, PyBytes>> {
    let msg = Message::ScoreReport(ScoreMatrix { party, round, scores: tensor(scores)? });
    Ok(PyBytes::new(py, &transport::encode_message(&msg).map_err(err)?))
}

/// Frame a round-complete marker for the wire.
#[pyfunction]
fn encode_round_complete<'py>(py: Python<'py>, round: usize) -> PyResult<Bound<'py, PyBytes>> {
    Ok(PyBytes::new(py, &transport::encode_message(&Message::RoundComplete { round }).map_err(err)?))
}

/// Decode one frame into a dict with a `kind` key plus the message fields.
#[pyfunction]
fn decode_message<'py>(py: Python<'py>, frame: &[u8]) -> PyResult<Bound<'py, PyDict>> {
    let msg = transport::decode_message(frame).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("kind", msg.name())?;
    match msg {
        Message::ScoreReport(s) => {
            d.set_item("round", s.round)?;
            d.set_item("party", s.party)?;
            d.set_item("scores", rows(&s.scores))?;
        }
        Message::ConsensusBroadcast(c) => {
            d.set_item("round", c.round)?;
            d.set_item("targets", rows(&c.targets))?;
        }
        Message::SubsetAnnouncement(s) => {
            d.set_item("round", s.round)?;
            d.set_item("indices", s.indices)?;
        }
        Message::RoundComplete { round } => d.set_item("round", round)?,
        Message::PartyMetrics(m) => {
            d.set_item("metrics", json_to_py(py, &m)?)?;
        }
    }
    Ok(d)
}

/// Finite-difference check of both losses on random small networks.
#[pyfunction]
#[pyo3(signature = (seed=0, networks=60))]
fn gradcheck<'py>(py: Python<'py>, seed: u64, networks: usize) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &nn::gradcheck::run_gradcheck(seed, networks).map_err(err)?)
}

/// Run a complete experiment from TOML text. Returns a dict with the summary
/// and the metrics CSV. Overrides use the CLI's `key=value` syntax.
#[pyfunction]
#[pyo3(signature = (config_toml, overrides=Vec::new()))]
fn run_experiment<'py>(py: Python<'py>, config_toml: &str, overrides: Vec<String>) -> PyResult<Bound<'py, PyDict>> {
    let config = ExperimentConfig::from_toml_str(config_toml, &overrides).map_err(err)?;
    let outcome = py.detach(|| experiments::run_experiment(&config)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("summary", json_to_py(py, &outcome.summary)?)?;
    d.set_item("metrics_csv", outcome.log.to_csv())?;
    Ok(d)
}

/// The effective configuration after defaults and overrides, as TOML.
#[pyfunction]
#[pyo3(signature = (config_toml, overrides=Vec::new()))]
fn effective_config(config_toml: &str, overrides: Vec<String>) -> PyResult<String> {
    ExperimentConfig::from_toml_str(config_toml, &overrides)
        .and_then(|c| c.to_toml_string())
        .map_err(err)
}

#[pymodule]
pub fn fedmd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", fedmd::VERSION)?;
    m.add("FedmdError", m.py().get_type::<FedmdError>())?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(synth_blobs, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(encode_score_report, m)?)?;
    m.add_function(wrap_pyfunction!(encode_round_complete, m)?)?;
    m.add_function(wrap_pyfunction!(decode_message, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(effective_config, m)?)?;
    Ok(())
}
