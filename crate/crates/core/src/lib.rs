//! Numerical laboratory for stochastic reaction-diffusion equations with
//! super-linear multiplicative coloured noise and strong dissipation.

pub mod analysis;
pub mod bessel;
pub mod coefficients;
pub mod error;
pub mod interp;
pub mod noise;
pub mod quadrature;
pub mod solver;
pub mod special;

pub use bessel::BesselKernel;
pub use coefficients::CoefficientSet;
pub use error::{Error, Result};
pub use noise::{CorrelationKernel, KernelKind};
pub use solver::{
    run_global, run_local, Grid, InitialCondition, ModelSpec, PathRecord, SolverState, StopReason, StoppingRule,
};
