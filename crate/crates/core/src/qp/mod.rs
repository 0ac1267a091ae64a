//! Condensing of the multiple-shooting QP and a dense box-constrained
//! active-set solver.

pub mod active_set;
pub mod condense;

pub use active_set::{solve_box_qp, solve_box_qp_raw, BoundState, BoxQpSolution, QpStatus, MAX_ITERATIONS};
pub use condense::{condense, CondensedQp, Condensing};
