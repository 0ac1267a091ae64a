//! Multiple-shooting OCP, QP construction and the real-time iteration
//! controller.

pub mod build;
pub mod config;
pub mod controller;
pub mod iterate;
pub mod qp_data;
pub mod residual_terms;

pub use build::{build_qp, StageResidual};
pub use config::{Mode, OcpConfig};
pub use controller::{CycleReport, FeedbackResult, PhaseTiming, RtiController};
pub use iterate::{init_iterate, Iterate, ReferenceWindow};
pub use qp_data::{GeneralConstraints, QpData};
pub use residual_terms::{NaiveResidual, NoResidual, TaylorResidual};
