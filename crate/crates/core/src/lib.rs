//! Constructive solvers for two classes of nonlinear integral equations on the
//! half-line whose kernel has the sum-difference form `K(x - t) - K(x + t)`:
//!
//! * the quasilinear equation
//!   `f(x) = ∫₀^∞ (K(x-t) - K(x+t)) (f(t) + ω₁(t, f(t))) dt`, which has a
//!   one-parameter family of linearly growing solutions `f_γ(x) ~ γx`;
//! * the essentially nonlinear equation
//!   `Q(B(x)) = ∫₀^∞ (K(x-t) - K(x+t)) (B(t) + ω₂(t, B(t))) dt`, whose bounded
//!   solution is the uniform limit of monotone successive approximations.
//!
//! Everything is discretized on a truncated half-line `[0, x_max]` with
//! analytic tail corrections beyond `x_max`. Structural hypotheses on the
//! kernel and the nonlinearities are probed numerically by the validators in
//! [`kernel`] and [`nonlinearity`].

pub mod config;
pub mod constants;
pub mod diagnostics;
pub mod error;
pub mod kernel;
pub mod nonlinear;
pub mod nonlinearity;
pub mod quadrature;
pub mod quasilinear;
pub mod runner;

mod iteration;
mod roots;

pub use constants::Constants;
pub use diagnostics::{IterationTrace, RunReport};
pub use error::{Error, Result};
pub use kernel::{KernelFamily, KernelSpec};
pub use nonlinear::{NonlinearProblem, NonlinearSolution};
pub use nonlinearity::{OmegaClass, OmegaName, OmegaSpec, QSpec};
pub use quadrature::{Grid, KernelOperator, Profile, Scheme, TailModel};
pub use quasilinear::{QuasilinearProblem, QuasilinearSolution};

/// Stopping rule for a successive-approximation loop: stop once the sup-norm
/// distance between consecutive iterates drops below `tol`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StopCriteria {
    pub tol: f64,
    pub max_iter: usize,
}

impl StopCriteria {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        StopCriteria { tol, max_iter }
    }
}
