//! Model predictive control for linear time-invariant systems by Gaussian
//! process conditioning.
//!
//! The prior is a multi-output Gaussian process whose sample paths satisfy
//! `x' = A x + B u` exactly. It is obtained by pushing a squared-exponential
//! latent process through the polynomial operator spanning the nullspace of
//! `[A - d I | B]`. Control inputs come from the posterior mean after
//! conditioning on the current state, soft box constraints, past
//! observations and optional virtual references.

pub mod controller;
pub mod error;
pub mod gpcore;
pub mod kernelops;
pub mod lodegp;
pub mod metrics;
pub mod plant;
pub mod polyalg;

pub use nalgebra;

pub use controller::{
    fit_hyperparams, mpc_step, run_closed_loop, ControlApplication, ControllerConfig, ControllerState,
    StepDiagnostics,
};
pub use error::{Error, Result};
pub use gpcore::{DataPoint, Dataset, HyperBounds, PosteriorGp, Role};
pub use kernelops::{GaussPolyTerm, Hyperparams, OperatorKernel};
pub use lodegp::{build_prior, LinearSystem, LodeGpPrior};
pub use polyalg::{Poly, PolyMatrix, Rational, SmithDecomposition};
pub use metrics::Metrics;
pub use plant::{ControlSignal, Plant, Trajectory};
