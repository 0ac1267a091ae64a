//! Real-time iteration MPC with learned residual dynamics.
//!
//! The controller splits every control cycle into three phases:
//!
//! 1. data-driven preparation: one batched evaluation of the residual network
//!    (values and Jacobians) at every shooting node, packed into local Taylor
//!    approximations ([`taylor`]);
//! 2. QP preparation: RK4 sensitivities of the nominal model plus the Taylor
//!    approximations, Gauss-Newton cost blocks, and condensing ([`sqp`], [`qp`]);
//! 3. feedback: the measured state is substituted into the prepared QP, which
//!    is solved by a box-constrained active-set method.
//!
//! A `naive` mode evaluates the network inside every RK4 stage instead, for
//! comparison. [`sim`] holds a simplified quadrotor simulator with drag and
//! noise, [`sweep`] the runtime benchmark on a double integrator.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod neural;
pub mod qp;
pub mod sim;
pub mod sqp;
pub mod sweep;
pub mod taylor;

pub use dynamics::{
    double_integrator::DoubleIntegrator,
    heightmap::HeightMap,
    params::QuadParams,
    quad::{QuadModel, QuadState, RotorThrusts},
    residual::{FeatureMap, ResidualModel, ResidualVariant},
    Dynamics,
};
pub use error::{Error, Result};
pub use integrator::{EvalCounts, SensitivityResult};
pub use neural::{Activation, MlpModel, ResidualDataset};
pub use qp::{BoxQpSolution, CondensedQp, QpStatus};
pub use sqp::{Iterate, Mode, OcpConfig, QpData, ReferenceWindow, RtiController};
pub use taylor::TaylorApprox;

/// Dense column vector used throughout the solver.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used throughout the solver.
pub type Matrix = nalgebra::DMatrix<f64>;
