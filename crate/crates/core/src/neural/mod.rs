//! Dense feed-forward networks: evaluation, derivatives, training and files.

mod adam;
pub mod dataset;
pub mod io;
pub mod mlp;
pub mod train;

pub use adam::Adam;
pub use dataset::ResidualDataset;
pub use mlp::{
    mlp_batched_eval, mlp_forward, mlp_hessian, mlp_jacobian, Activation, BatchOrder, BatchResult,
    MlpModel, Normalization,
};
pub use train::{train_residual, EpochLog, TrainConfig, TrainReport};
