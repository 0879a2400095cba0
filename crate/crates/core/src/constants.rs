//! Scalar constants: the coupling `M`, the fixed points `η` and `ξ` of `Q`,
//! and the contraction factor `k` with its bound `C`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::nonlinearity::{OmegaSpec, QSpec};
use crate::quadrature::{integrate_panels, stabilized_integral};
use crate::roots::positive_root;

pub const DEFAULT_EPSILON0: f64 = 0.5;

const ENVELOPE_REACH: f64 = 64.0;
const ENVELOPE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub m: f64,
    pub xi: f64,
    pub eta: f64,
    pub epsilon0: f64,
    pub sigma0: Option<f64>,
    pub k_rate: Option<f64>,
    pub c_bound: Option<f64>,
}

impl Constants {
    /// `M`, `η`, `ξ` for the given data; `σ₀`, `k`, `C` are filled in later
    /// by [`Constants::with_sigma0`] once `χ` is known.
    pub fn compute(k: &KernelSpec, q: &QSpec, w: &OmegaSpec, epsilon0: f64) -> Result<Constants> {
        if !(epsilon0 > 0.0 && epsilon0 < 1.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon0",
                reason: format!("must lie in (0, 1), got {epsilon0}"),
            });
        }
        let m = compute_m(k, w)?;
        let eta = compute_eta(q)?;
        let xi = compute_xi(q, m)?;
        Ok(Constants {
            m,
            xi,
            eta,
            epsilon0,
            sigma0: None,
            k_rate: None,
            c_bound: None,
        })
    }

    /// Records `σ₀` and derives `k = (1 - φ(ε₀σ₀))/(1 - ε₀σ₀)` and
    /// `C = ξ(1 - σ₀)/(1 - k)`.
    pub fn with_sigma0(mut self, q: &QSpec, sigma0: f64) -> Result<Constants> {
        let k = compute_rate_k(|s| q.eval_phi(s), sigma0, self.epsilon0)?;
        self.sigma0 = Some(sigma0);
        self.k_rate = Some(k);
        self.c_bound = Some(self.xi * (1.0 - sigma0) / (1.0 - k));
        Ok(self)
    }
}

/// `∫₀^∞ μ₂ · sup K`.
pub fn compute_m(k: &KernelSpec, w: &OmegaSpec) -> Result<f64> {
    let mass = match w.envelope_tail_mass(ENVELOPE_REACH) {
        Some(tail) => integrate_panels(|t| w.envelope(t), 0.0, ENVELOPE_REACH, 0.5, 10) + tail,
        None => {
            let s = stabilized_integral(|t| w.envelope(t), ENVELOPE_REACH, ENVELOPE_REL_TOL, 24);
            if !s.stabilized {
                return Err(Error::DivergentIntegral(format!(
                    "envelope of `{}` does not stabilize (relative change {:e} at reach {})",
                    w.label(),
                    s.rel_change,
                    s.reach
                )));
            }
            s.value
        }
    };
    if !mass.is_finite() || mass < 0.0 {
        return Err(Error::DivergentIntegral(format!(
            "envelope of `{}` integrates to {mass}",
            w.label()
        )));
    }
    Ok(mass * k.sup_value())
}

/// The positive fixed point of `Q`.
pub fn compute_eta(q: &QSpec) -> Result<f64> {
    positive_root(|u| q.eval_q(u) - u, "Q(u) = u")
}

/// The positive root of `Q(u) = (1 + M)u`; equal to `η` when `M = 0`.
pub fn compute_xi(q: &QSpec, m: f64) -> Result<f64> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "M",
            reason: format!("must be finite and nonnegative, got {m}"),
        });
    }
    positive_root(|u| q.eval_q(u) - (1.0 + m) * u, "Q(u) = (1+M)u")
}

/// `k = (1 - φ(ε₀σ₀))/(1 - ε₀σ₀)`, rejected unless it lies in `(0, 1)`.
pub fn compute_rate_k(phi: impl Fn(f64) -> f64, sigma0: f64, epsilon0: f64) -> Result<f64> {
    for (name, v) in [("sigma0", sigma0), ("epsilon0", epsilon0)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must lie in (0, 1), got {v}"),
            });
        }
    }
    let s = epsilon0 * sigma0;
    let k = (1.0 - phi(s)) / (1.0 - s);
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::RateOutOfRange { k });
    }
    Ok(k)
}
