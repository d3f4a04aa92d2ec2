//! Optimizers over group-valued variables. Both move variables with the
//! left update `Exp(delta) * X`, so they stay on the manifold without any
//! projection.

mod gn;
mod linear;
mod sgd;

pub use gn::{
    gauss_newton, Gauge, GnConfig, GnReport, IterationRecord, ResidualBlock, ResidualProblem,
    Termination,
};
pub use linear::{minimum_degree_order, BlockSystem, LinearSolver};
pub use sgd::{sgd_step, SgdConfig, SgdState};
