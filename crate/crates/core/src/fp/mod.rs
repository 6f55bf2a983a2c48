//! Deterministic solver for the Fokker-Planck model: Chang-Cooper type flux in w,
//! semi-implicit tridiagonal network step in c.

pub mod drift;
pub mod flux;
mod imex;

pub use drift::{DriftField, DriftOperator};
pub use flux::{assemble, bernoulli, uniform_opinion_bound, weight, FluxAssembly, Quadrature};
pub use imex::{DtPolicy, FpSolver, RunReport, Schedule, StepInfo};
pub(crate) use imex::push_dt;
