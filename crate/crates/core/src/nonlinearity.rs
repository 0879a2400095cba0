//! The nonlinearity `Q` (with inverse `G` and concavity minorant `φ`) and the
//! perturbations `ω₁`, `ω₂` with their envelopes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::{compute_eta, compute_xi};
use crate::error::{Error, Result};
use crate::quadrature::stabilized_integral;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type BivariateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

const INVERSE_BISECTION_STEPS: usize = 80;

/// Monotone convex `Q` with `Q(0) = 0`, its inverse `G`, and a concave
/// minorant `φ` on `[0, 1]` with `G(σu) >= φ(σ) G(u)`.
#[derive(Clone)]
pub struct QSpec {
    label: String,
    params: BTreeMap<String, f64>,
    q: ScalarFn,
    g: ScalarFn,
    phi: ScalarFn,
}

impl fmt::Debug for QSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QSpec")
            .field("label", &self.label)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

/// `Q(u) = u^p`, `G(u) = u^{1/p}`, `φ(σ) = σ^{1/p}`.
pub fn make_power_q(p: f64) -> Result<QSpec> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("p must exceed 1 for the power family, got {p}"),
        });
    }
    let inv = 1.0 / p;
    Ok(QSpec {
        label: "power".to_string(),
        params: BTreeMap::from([("p".to_string(), p)]),
        q: Arc::new(move |u: f64| u.max(0.0).powf(p)),
        g: Arc::new(move |u: f64| u.max(0.0).powf(inv)),
        phi: Arc::new(move |s: f64| s.max(0.0).powf(inv)),
    })
}

/// `Q(u) = ((√(8u+1) - 1)/2)^{2p}` with closed inverse
/// `G(u) = (u^α + u^{α/2})/2`, `α = 1/p`, and `φ(σ) = σ^α`.
pub fn make_sqrt_family_q(p: f64) -> Result<QSpec> {
    if !(p > 1.5 && p.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("p must exceed 3/2 for the sqrt family, got {p}"),
        });
    }
    let alpha = 1.0 / p;
    Ok(QSpec {
        label: "sqrt".to_string(),
        params: BTreeMap::from([("p".to_string(), p)]),
        q: Arc::new(move |u: f64| {
            let s = 0.5 * ((8.0 * u.max(0.0) + 1.0).sqrt() - 1.0);
            s.powf(2.0 * p)
        }),
        g: Arc::new(move |u: f64| {
            let u = u.max(0.0);
            0.5 * (u.powf(alpha) + u.powf(0.5 * alpha))
        }),
        phi: Arc::new(move |s: f64| s.max(0.0).powf(alpha)),
    })
}

impl QSpec {
    /// A user-supplied `Q` without a closed inverse: `G` is found by
    /// bisection on `[0, u_hi]`, `u_hi` doubled until `Q(u_hi) >= u`.
    pub fn custom(
        label: &str,
        q: impl Fn(f64) -> f64 + Send + Sync + 'static,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> QSpec {
        let q: ScalarFn = Arc::new(q);
        let qq = q.clone();
        let g: ScalarFn = Arc::new(move |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let mut hi = 1.0;
            while qq(hi) < u {
                hi *= 2.0;
                if !hi.is_finite() {
                    return f64::NAN;
                }
            }
            let mut lo = 0.0;
            for _ in 0..INVERSE_BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if qq(mid) < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        });
        QSpec {
            label: label.to_string(),
            params: BTreeMap::new(),
            q,
            g,
            phi: Arc::new(phi),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn eval_q(&self, u: f64) -> f64 {
        (self.q)(u)
    }

    pub fn eval_g(&self, u: f64) -> f64 {
        (self.g)(u)
    }

    pub fn eval_phi(&self, sigma: f64) -> f64 {
        (self.phi)(sigma)
    }

    pub fn q_fn(&self) -> &(dyn Fn(f64) -> f64 + Send + Sync) {
        self.q.as_ref()
    }
}

pub fn q_from_family(family: &str, p: f64) -> Result<QSpec> {
    match family {
        "power" => make_power_q(p),
        "sqrt" => make_sqrt_family_q(p),
        other => Err(Error::UnknownCatalogEntry(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaClass {
    /// Bounded in `u`: `ω₁(t, u) <= μ₁(t)`.
    Omega1,
    /// Concave in `u`, `ω₂(t, u) <= μ₂(t) u`.
    Omega2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OmegaName {
    O1,
    O2,
    O3,
    O4,
}

impl FromStr for OmegaName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O1" | "Ω1" => Ok(OmegaName::O1),
            "O2" | "Ω2" => Ok(OmegaName::O2),
            "O3" | "Ω3" => Ok(OmegaName::O3),
            "O4" | "Ω4" => Ok(OmegaName::O4),
            other => Err(Error::UnknownCatalogEntry(other.to_string())),
        }
    }
}

impl fmt::Display for OmegaName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OmegaName::O1 => "O1",
            OmegaName::O2 => "O2",
            OmegaName::O3 => "O3",
            OmegaName::O4 => "O4",
        };
        f.write_str(s)
    }
}

impl OmegaName {
    pub fn class(&self) -> OmegaClass {
        match self {
            OmegaName::O1 | OmegaName::O2 => OmegaClass::Omega1,
            OmegaName::O3 | OmegaName::O4 => OmegaClass::Omega2,
        }
    }
}

/// A perturbation `ω(t, u)` with envelope `μ(t)` and, when known, the
/// analytic tail `∫_a^∞ μ`.
#[derive(Clone)]
pub struct OmegaSpec {
    label: String,
    class: OmegaClass,
    params: BTreeMap<String, f64>,
    omega: BivariateFn,
    envelope: ScalarFn,
    envelope_tail: Option<ScalarFn>,
}

impl fmt::Debug for OmegaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OmegaSpec")
            .field("label", &self.label)
            .field("class", &self.class)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

pub fn make_omega(name: OmegaName) -> OmegaSpec {
    let (omega, envelope, tail): (BivariateFn, ScalarFn, ScalarFn) = match name {
        OmegaName::O1 => (
            Arc::new(|t: f64, u: f64| (-t).exp() * u / (u + 1.0)),
            Arc::new(|t: f64| (-t).exp()),
            Arc::new(|a: f64| (-a).exp()),
        ),
        OmegaName::O2 => (
            Arc::new(|t: f64, u: f64| (1.0 - (-u).exp()) / (1.0 + t.powi(3))),
            Arc::new(|t: f64| 1.0 / (1.0 + t.powi(3))),
            Arc::new(|a: f64| cubic_tail(a)),
        ),
        OmegaName::O3 => (
            Arc::new(|t: f64, u: f64| (-t * t).exp() * -(-u).exp_m1()),
            Arc::new(|t: f64| (-t * t).exp()),
            Arc::new(|a: f64| gaussian_tail(a)),
        ),
        OmegaName::O4 => (
            Arc::new(|t: f64, u: f64| u.ln_1p() / (1.0 + t * t)),
            Arc::new(|t: f64| 1.0 / (1.0 + t * t)),
            Arc::new(|a: f64| (1.0 / a).atan()),
        ),
    };
    OmegaSpec {
        label: name.to_string(),
        class: name.class(),
        params: BTreeMap::new(),
        omega,
        envelope,
        envelope_tail: Some(tail),
    }
}

// ∫_a^∞ dt/(1+t³), series in 1/a; valid for a >= 2
fn cubic_tail(a: f64) -> f64 {
    if a < 2.0 {
        return f64::NAN;
    }
    let inv = 1.0 / a;
    let inv3 = inv.powi(3);
    let mut term = inv * inv;
    let mut sum = 0.0;
    for k in 0..12 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * term / (3 * k + 2) as f64;
        term *= inv3;
    }
    sum
}

// ∫_a^∞ e^{-t²} dt via the asymptotic erfc; only used far out where it is tiny
fn gaussian_tail(a: f64) -> f64 {
    if a < 4.0 {
        return f64::NAN;
    }
    let a2 = a * a;
    (-a2).exp() / (2.0 * a) * (1.0 - 0.5 / a2 + 0.75 / (a2 * a2))
}

impl OmegaSpec {
    pub fn custom(
        label: &str,
        class: OmegaClass,
        omega: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        envelope: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> OmegaSpec {
        OmegaSpec {
            label: label.to_string(),
            class,
            params: BTreeMap::new(),
            omega: Arc::new(omega),
            envelope: Arc::new(envelope),
            envelope_tail: None,
        }
    }

    pub fn zero(class: OmegaClass) -> OmegaSpec {
        OmegaSpec {
            label: "zero".to_string(),
            class,
            params: BTreeMap::new(),
            omega: Arc::new(|_, _| 0.0),
            envelope: Arc::new(|_| 0.0),
            envelope_tail: Some(Arc::new(|_| 0.0)),
        }
    }

    /// `ω(t, u) = μ(t)·u` with the envelope of `base`: the perturbation sits
    /// exactly on its linear bound.
    pub fn saturated(base: &OmegaSpec) -> OmegaSpec {
        let mu = base.envelope.clone();
        let mu2 = mu.clone();
        OmegaSpec {
            label: format!("saturated-{}", base.label),
            class: OmegaClass::Omega2,
            params: base.params.clone(),
            omega: Arc::new(move |t, u| mu2(t) * u),
            envelope: mu,
            envelope_tail: base.envelope_tail.clone(),
        }
    }

    /// `c·ω` with envelope `c·μ`.
    pub fn scaled(&self, c: f64) -> OmegaSpec {
        let omega = self.omega.clone();
        let mu = self.envelope.clone();
        let tail = self.envelope_tail.clone();
        let mut params = self.params.clone();
        params.insert("scale".to_string(), c * params.get("scale").copied().unwrap_or(1.0));
        OmegaSpec {
            label: self.label.clone(),
            class: self.class,
            params,
            omega: Arc::new(move |t, u| c * omega(t, u)),
            envelope: Arc::new(move |t| c * mu(t)),
            envelope_tail: tail.map(|f| Arc::new(move |a| c * f(a)) as ScalarFn),
        }
    }

    pub fn with_envelope_tail(mut self, tail: impl Fn(f64) -> f64 + Send + Sync + 'static) -> OmegaSpec {
        self.envelope_tail = Some(Arc::new(tail));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn class(&self) -> OmegaClass {
        self.class
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn eval(&self, t: f64, u: f64) -> f64 {
        (self.omega)(t, u)
    }

    pub fn envelope(&self, t: f64) -> f64 {
        (self.envelope)(t)
    }

    /// `∫_a^∞ μ` if the perturbation carries a closed-form tail.
    pub fn envelope_tail_mass(&self, a: f64) -> Option<f64> {
        self.envelope_tail.as_ref().map(|f| f(a)).filter(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeTolerances {
    pub fd_step: f64,
    /// Slack for sampled monotonicity, convexity/concavity and bound probes.
    pub probe: f64,
    pub inverse: f64,
    pub moment_rel: f64,
    pub lattice: usize,
}

impl Default for ShapeTolerances {
    fn default() -> Self {
        ShapeTolerances {
            fd_step: 1e-3,
            probe: 1e-6,
            inverse: 1e-10,
            moment_rel: 1e-3,
            lattice: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QValidationReport {
    pub label: String,
    pub m: f64,
    pub criticality_defect: f64,
    pub monotonicity_violations: usize,
    pub convexity_violations: usize,
    pub inverse_defect: f64,
    pub ratio_monotonicity_violations: usize,
    pub phi_endpoint_defect: f64,
    pub phi_monotonicity_violations: usize,
    pub phi_concavity_violations: usize,
    /// `min (G(σu) - φ(σ)G(u))` over the probe lattice.
    pub minorant_margin: f64,
    pub eta: Option<f64>,
    pub xi: Option<f64>,
    pub characteristic_defect: Option<f64>,
    pub passed: bool,
}

fn lattice(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(2);
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Probes criticality, monotone increase, convexity, inverse consistency,
/// admissibility of `φ` and the minorant inequality on `(0,1) × (0,(1+M)ξ)`.
/// Pass `xi = None` to have it solved from `Q(ξ) = (1+M)ξ`.
pub fn validate_q(q: &QSpec, m: f64, xi: Option<f64>, tol: &ShapeTolerances) -> QValidationReport {
    let eta = compute_eta(q).ok();
    let xi = xi.or_else(|| compute_xi(q, m).ok().filter(|_| m > 0.0 || eta.is_some()));
    let characteristic_defect = xi.map(|x| (q.eval_q(x) - (1.0 + m) * x).abs());
    let upper = xi.map(|x| (1.0 + m) * x).unwrap_or(4.0);
    let span = upper.max(4.0);
    let h = tol.fd_step;
    let n = 4 * tol.lattice.max(64);

    let criticality_defect = q.eval_q(0.0).abs();
    let us: Vec<f64> = lattice(0.0, span, n).collect();
    let mut monotonicity_violations = 0;
    let mut convexity_violations = 0;
    let mut ratio_monotonicity_violations = 0;
    let mut inverse_defect: f64 = 0.0;
    let mut prev_ratio = f64::NEG_INFINITY;
    for (i, &u) in us.iter().enumerate() {
        let qu = q.eval_q(u);
        if i > 0 && qu < q.eval_q(us[i - 1]) - tol.probe {
            monotonicity_violations += 1;
        }
        if u > h {
            let second = (q.eval_q(u + h) - 2.0 * qu + q.eval_q(u - h)) / (h * h);
            if second < -tol.probe {
                convexity_violations += 1;
            }
        }
        if u > 0.0 {
            let ratio = qu / u;
            if ratio < prev_ratio - tol.probe {
                ratio_monotonicity_violations += 1;
            }
            prev_ratio = ratio;
        }
    }
    for u in lattice(0.0, 4.0, 257) {
        let scale = u.max(1.0);
        inverse_defect = inverse_defect.max((q.eval_q(q.eval_g(u)) - u).abs() / scale);
        inverse_defect = inverse_defect.max((q.eval_g(q.eval_q(u)) - u).abs() / scale);
    }

    let phi_endpoint_defect = q.eval_phi(0.0).abs() + (q.eval_phi(1.0) - 1.0).abs();
    let mut phi_monotonicity_violations = 0;
    let mut phi_concavity_violations = 0;
    let ss: Vec<f64> = lattice(0.0, 1.0, n).collect();
    for (i, &s) in ss.iter().enumerate() {
        let v = q.eval_phi(s);
        if i > 0 && v <= q.eval_phi(ss[i - 1]) - tol.probe {
            phi_monotonicity_violations += 1;
        }
        if s > h && s < 1.0 - h {
            let second = (q.eval_phi(s + h) - 2.0 * v + q.eval_phi(s - h)) / (h * h);
            if second > tol.probe {
                phi_concavity_violations += 1;
            }
        }
    }

    let mut minorant_margin = f64::INFINITY;
    let k = tol.lattice.max(8);
    for i in 1..k {
        let sigma = i as f64 / k as f64;
        let phi = q.eval_phi(sigma);
        for j in 1..k {
            let u = upper * j as f64 / k as f64;
            minorant_margin = minorant_margin.min(q.eval_g(sigma * u) - phi * q.eval_g(u));
        }
    }

    let passed = criticality_defect == 0.0
        && monotonicity_violations == 0
        && convexity_violations == 0
        && ratio_monotonicity_violations == 0
        && inverse_defect <= tol.inverse
        && phi_endpoint_defect <= tol.inverse
        && phi_monotonicity_violations == 0
        && phi_concavity_violations == 0
        && minorant_margin >= -tol.probe
        && eta.is_some()
        && xi.is_some()
        && characteristic_defect.is_some_and(|d| d <= tol.inverse * (1.0 + m) * xi.unwrap_or(1.0).max(1.0))
        && (m == 0.0 || xi.zip(eta).is_some_and(|(x, e)| x > e));
    QValidationReport {
        label: q.label().to_string(),
        m,
        criticality_defect,
        monotonicity_violations,
        convexity_violations,
        inverse_defect,
        ratio_monotonicity_violations,
        phi_endpoint_defect,
        phi_monotonicity_violations,
        phi_concavity_violations,
        minorant_margin,
        eta,
        xi,
        characteristic_defect,
        passed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaValidationReport {
    pub label: String,
    pub class: OmegaClass,
    pub criticality_defect: f64,
    pub monotonicity_violations: usize,
    pub concavity_violations: usize,
    /// `max (ω - bound)`, bound `μ(t)` or `μ(t)·u` by class.
    pub envelope_excess: f64,
    /// `ω₁` only: `max_t (μ₁(t) - ω₁(t, u_big))`, the supremum is attained.
    pub envelope_gap: f64,
    /// `ω₂` only: `min_t μ₂(t)` on the probe range.
    pub envelope_min: f64,
    pub envelope_far: f64,
    pub envelope_integral: f64,
    pub envelope_first_moment: f64,
    pub moment_rel_change: f64,
    pub moment_stabilized: bool,
    /// `ω₂` only: violations of `ω(t, δu) >= δ ω(t, u)`.
    pub homogeneity_violations: usize,
    pub passed: bool,
}

const OMEGA_T_MAX: f64 = 20.0;
const OMEGA_U_MAX: f64 = 8.0;
const FAR_T: f64 = 1e6;

/// Probes criticality, monotonicity and (for `ω₂`) concavity in `u`, the
/// envelope bound, envelope decay, and finiteness of the envelope integrals.
pub fn validate_omega(w: &OmegaSpec, tol: &ShapeTolerances) -> OmegaValidationReport {
    let n = tol.lattice.max(16);
    let h = tol.fd_step;
    let ts: Vec<f64> = lattice(0.0, OMEGA_T_MAX, n).collect();
    let us: Vec<f64> = lattice(0.0, OMEGA_U_MAX, n).collect();
    let mut criticality_defect: f64 = 0.0;
    let mut monotonicity_violations = 0;
    let mut concavity_violations = 0;
    let mut envelope_excess = f64::NEG_INFINITY;
    let mut envelope_gap: f64 = 0.0;
    let mut envelope_min = f64::INFINITY;
    let mut homogeneity_violations = 0;
    for &t in &ts {
        let mu = w.envelope(t);
        envelope_min = envelope_min.min(mu);
        criticality_defect = criticality_defect.max(w.eval(t, 0.0).abs());
        let mut prev = f64::NEG_INFINITY;
        for &u in &us {
            let v = w.eval(t, u);
            if v < prev - tol.probe {
                monotonicity_violations += 1;
            }
            prev = v;
            let bound = match w.class() {
                OmegaClass::Omega1 => mu,
                OmegaClass::Omega2 => mu * u,
            };
            envelope_excess = envelope_excess.max(v - bound);
            if w.class() == OmegaClass::Omega2 {
                if u > h {
                    let second = (w.eval(t, u + h) - 2.0 * v + w.eval(t, u - h)) / (h * h);
                    if second > tol.probe {
                        concavity_violations += 1;
                    }
                }
                for delta in [0.1, 0.25, 0.5, 0.75, 0.9] {
                    if w.eval(t, delta * u) < delta * v - tol.probe {
                        homogeneity_violations += 1;
                    }
                }
            }
        }
        if w.class() == OmegaClass::Omega1 {
            envelope_gap = envelope_gap.max(mu - w.eval(t, 1e9));
        }
    }
    let envelope_far = w.envelope(FAR_T);
    let env_peak = ts.iter().map(|&t| w.envelope(t)).fold(0.0, f64::max);
    let integral = stabilized_integral(|t| w.envelope(t), 64.0, tol.moment_rel, 16);
    let moment = stabilized_integral(|t| t * w.envelope(t), 64.0, tol.moment_rel, 16);
    let envelope_integral = match w.envelope_tail_mass(64.0) {
        Some(tail) => crate::quadrature::integrate_panels(|t| w.envelope(t), 0.0, 64.0, 0.5, 10) + tail,
        None => integral.value,
    };
    let decays = envelope_far <= tol.probe * env_peak.max(tol.probe);
    let passed = criticality_defect == 0.0
        && monotonicity_violations == 0
        && envelope_excess <= tol.probe
        && decays
        && match w.class() {
            OmegaClass::Omega1 => moment.stabilized && envelope_gap <= tol.probe,
            OmegaClass::Omega2 => {
                concavity_violations == 0
                    && homogeneity_violations == 0
                    && integral.stabilized
                    && (envelope_min > 0.0 || env_peak == 0.0)
            }
        };
    OmegaValidationReport {
        label: w.label().to_string(),
        class: w.class(),
        criticality_defect,
        monotonicity_violations,
        concavity_violations,
        envelope_excess,
        envelope_gap,
        envelope_min,
        envelope_far,
        envelope_integral,
        envelope_first_moment: moment.value,
        moment_rel_change: moment.rel_change,
        moment_stabilized: moment.stabilized,
        homogeneity_violations,
        passed,
    }
}
