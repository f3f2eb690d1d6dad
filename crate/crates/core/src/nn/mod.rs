//! Dense feed-forward networks, losses, Adam and the training loops.

mod adam;
pub mod gradcheck;
mod loss;
mod network;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{cross_entropy, distill_loss, DistillLoss};
pub use network::{Activation, Dense, ForwardTrace, LayerGrad, Network};
pub use train::{
    accuracy, accuracy_among, fit_to_convergence, predict, predict_among, train_distill, train_supervised, ConvergenceCriteria,
    TrainReport,
};
