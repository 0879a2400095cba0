//! Even, positive kernels `K` with cached cumulative integrals.
//!
//! Each family knows `K`, `K'`, and the analytic tails `∫_a^∞ K` and
//! `∫_a^∞ sK(s) ds` past its table end. Inside the table the cumulative
//! integrals come from per-cell Gauss–Legendre sums, read back with cubic
//! Hermite interpolation (the integrand supplies the derivative).

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate_panels};

const TABLE_STEP: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `π^{-1/2} e^{-x²}`
    Gaussian,
    /// `(√2/π) / (1 + x⁴)`
    Quartic,
    /// `amplitude · e^{-|x|}`; conforming only for amplitude 1/2, and never C¹
    /// at the origin. Kept as a validator counter-example.
    Exponential { amplitude: f64 },
}

impl KernelFamily {
    fn label(&self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Quartic => "quartic",
            KernelFamily::Exponential { .. } => "exponential",
        }
    }

    fn eval_abs(&self, x: f64) -> f64 {
        match *self {
            KernelFamily::Gaussian => (-x * x).exp() / PI.sqrt(),
            KernelFamily::Quartic => SQRT_2 / PI / (1.0 + x.powi(4)),
            KernelFamily::Exponential { amplitude } => amplitude * (-x).exp(),
        }
    }

    /// `K'(x)` for `x >= 0`.
    fn deriv_abs(&self, x: f64) -> f64 {
        match *self {
            KernelFamily::Gaussian => -2.0 * x * self.eval_abs(x),
            KernelFamily::Quartic => {
                let d = 1.0 + x.powi(4);
                -SQRT_2 / PI * 4.0 * x.powi(3) / (d * d)
            }
            KernelFamily::Exponential { amplitude } => {
                if x == 0.0 {
                    0.0
                } else {
                    -amplitude * (-x).exp()
                }
            }
        }
    }

    fn table_end(&self) -> f64 {
        match self {
            KernelFamily::Gaussian => 9.0,
            KernelFamily::Quartic => 200.0,
            KernelFamily::Exponential { .. } => 40.0,
        }
    }

    /// `∫_a^∞ K`, `a >= table_end`.
    fn tail_mass(&self, a: f64) -> f64 {
        match *self {
            KernelFamily::Gaussian => {
                // asymptotic erfc; at a >= 9 the value is below 1e-36
                let a2 = a * a;
                (-a2).exp() / (2.0 * a * PI.sqrt()) * (1.0 - 0.5 / a2 + 0.75 / (a2 * a2))
            }
            KernelFamily::Quartic => {
                let inv = 1.0 / a;
                let inv4 = inv.powi(4);
                let mut term = inv.powi(3);
                let mut sum = 0.0;
                for k in 0..6 {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    sum += sign * term / (4 * k + 3) as f64;
                    term *= inv4;
                }
                SQRT_2 / PI * sum
            }
            KernelFamily::Exponential { amplitude } => amplitude * (-a).exp(),
        }
    }

    /// `∫_a^∞ sK(s) ds`, `a >= table_end`.
    fn tail_moment(&self, a: f64) -> f64 {
        match *self {
            KernelFamily::Gaussian => (-a * a).exp() / (2.0 * PI.sqrt()),
            KernelFamily::Quartic => SQRT_2 / PI * 0.5 * (1.0 / (a * a)).atan(),
            KernelFamily::Exponential { amplitude } => amplitude * (a + 1.0) * (-a).exp(),
        }
    }

    fn params(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        if let KernelFamily::Exponential { amplitude } = self {
            m.insert("amplitude".to_string(), *amplitude);
        }
        m
    }
}

/// Running integrals `∫_0^{x_i} K` and `∫_0^{x_i} sK(s) ds` on a fine grid.
#[derive(Debug)]
struct CumulativeTables {
    step: f64,
    end: f64,
    mass: Vec<f64>,
    moment: Vec<f64>,
    half_mass: f64,
    half_moment: f64,
}

impl CumulativeTables {
    fn build(family: &KernelFamily) -> CumulativeTables {
        let end = family.table_end();
        let cells = (end / TABLE_STEP).round() as usize;
        let step = end / cells as f64;
        let (z, w) = gauss_legendre(8);
        let mut mass = Vec::with_capacity(cells + 1);
        let mut moment = Vec::with_capacity(cells + 1);
        let (mut m0, mut m1) = (0.0f64, 0.0f64);
        let (mut c0, mut c1) = (0.0f64, 0.0f64);
        mass.push(0.0);
        moment.push(0.0);
        for i in 0..cells {
            let mid = (i as f64 + 0.5) * step;
            let (mut s0, mut s1) = (0.0, 0.0);
            for (zi, wi) in z.iter().zip(&w) {
                let t = mid + 0.5 * step * zi;
                let k = family.eval_abs(t);
                s0 += wi * k;
                s1 += wi * t * k;
            }
            // compensated running sums
            let y0 = 0.5 * step * s0 - c0;
            let t0 = m0 + y0;
            c0 = (t0 - m0) - y0;
            m0 = t0;
            let y1 = 0.5 * step * s1 - c1;
            let t1 = m1 + y1;
            c1 = (t1 - m1) - y1;
            m1 = t1;
            mass.push(m0);
            moment.push(m1);
        }
        CumulativeTables {
            step,
            end,
            half_mass: m0 + family.tail_mass(end),
            half_moment: m1 + family.tail_moment(end),
            mass,
            moment,
        }
    }

    fn hermite(&self, table: &[f64], x: f64, slope: impl Fn(f64) -> f64) -> f64 {
        let pos = x / self.step;
        let i = (pos.floor() as usize).min(table.len() - 2);
        let x0 = i as f64 * self.step;
        let h = self.step;
        let s = (x - x0) / h;
        let (f0, f1) = (table[i], table[i + 1]);
        let (d0, d1) = (slope(x0) * h, slope(x0 + h) * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * f0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * f1 + (s3 - s2) * d1
    }
}

/// A sum-difference kernel; cheap to clone.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    family: KernelFamily,
    label: String,
    params: BTreeMap<String, f64>,
    tables: Arc<CumulativeTables>,
}

pub fn make_gaussian_kernel() -> KernelSpec {
    KernelSpec::new(KernelFamily::Gaussian)
}

pub fn make_quartic_kernel() -> KernelSpec {
    KernelSpec::new(KernelFamily::Quartic)
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> KernelSpec {
        KernelSpec {
            family,
            label: family.label().to_string(),
            params: family.params(),
            tables: Arc::new(CumulativeTables::build(&family)),
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// `K(x)`, evaluated at `|x|`.
    pub fn eval(&self, x: f64) -> f64 {
        self.family.eval_abs(x.abs())
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        let d = self.family.deriv_abs(x.abs());
        if x < 0.0 {
            -d
        } else {
            d
        }
    }

    pub fn sup_value(&self) -> f64 {
        self.eval(0.0)
    }

    /// `∫_0^∞ K` from the cached table plus analytic tail.
    pub fn half_mass(&self) -> f64 {
        self.tables.half_mass
    }

    /// `∫_0^a K` for `a >= 0`.
    fn mass_below(&self, a: f64) -> f64 {
        let t = &self.tables;
        if a >= t.end {
            return t.half_mass - self.family.tail_mass(a);
        }
        t.hermite(&t.mass, a, |s| self.family.eval_abs(s))
    }

    /// `∫_a^∞ K(y) dy` for any real `a`.
    pub fn upper_mass(&self, a: f64) -> f64 {
        let t = &self.tables;
        if a >= 0.0 {
            if a >= t.end {
                self.family.tail_mass(a)
            } else {
                (*t.mass.last().unwrap() - self.mass_below(a)) + self.family.tail_mass(t.end)
            }
        } else {
            t.half_mass + self.mass_below(-a)
        }
    }

    /// `∫_a^∞ y K(y) dy` for any real `a`. The integrand is odd, so this
    /// depends on `|a|` only.
    pub fn upper_moment(&self, a: f64) -> f64 {
        let t = &self.tables;
        let a = a.abs();
        if a >= t.end {
            return self.family.tail_moment(a);
        }
        let below = t.hermite(&t.moment, a, |s| s * self.family.eval_abs(s));
        (*t.moment.last().unwrap() - below) + self.family.tail_moment(t.end)
    }

    /// `∫_0^∞ y K(y) dy`.
    pub fn half_moment(&self) -> f64 {
        self.tables.half_moment
    }
}

/// `∫_{-∞}^x K(y) dy`. Equals 1 at `+∞` for a conforming kernel.
pub fn kernel_cdf(k: &KernelSpec, x: f64) -> f64 {
    if x == f64::INFINITY {
        return 2.0 * k.half_mass();
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    2.0 * k.half_mass() - k.upper_mass(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelTolerances {
    /// Allowed defect of `∫_0^∞ K = 1/2`.
    pub integral: f64,
    /// Slack for sampled positivity, monotonicity and derivative probes.
    pub probe: f64,
    /// Relative change allowed when the moment domain doubles.
    pub moment_rel: f64,
    pub probe_points: usize,
    pub probe_len: f64,
}

impl Default for KernelTolerances {
    fn default() -> Self {
        KernelTolerances {
            integral: 1e-8,
            probe: 1e-6,
            moment_rel: 1e-3,
            probe_points: 4096,
            probe_len: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelValidationReport {
    pub label: String,
    pub half_integral: f64,
    pub sup_value: f64,
    pub first_moment: f64,
    pub first_moment_rel_change: f64,
    pub evenness_defect: f64,
    pub positivity_violations: usize,
    pub monotonicity_violations: usize,
    pub derivative_sign_violations: usize,
    pub derivative_consistency_defect: f64,
    pub derivative_at_origin: f64,
    pub max_abs_derivative: f64,
    pub passed: bool,
}

const MOMENT_BASE: f64 = 64.0;

/// Probes positivity, evenness, monotone decrease, unit total mass, finite
/// first moment and C¹ behavior at the origin. Failures are report entries.
pub fn validate_kernel(k: &KernelSpec, tol: &KernelTolerances) -> KernelValidationReport {
    let f = |t: f64| k.eval(t);
    let half_integral = integrate_panels(f, 0.0, MOMENT_BASE, 0.5, 10) + k.upper_mass(MOMENT_BASE);
    let moment = |end: f64| integrate_panels(|t| t * k.eval(t), 0.0, end, 1.0, 10);
    let m1 = moment(MOMENT_BASE);
    let m2 = m1 + integrate_panels(|t| t * k.eval(t), MOMENT_BASE, 2.0 * MOMENT_BASE, 1.0, 10);
    let first_moment_rel_change = if m2 != 0.0 { ((m2 - m1) / m2).abs() } else { 0.0 };

    let n = tol.probe_points.max(2);
    let h = tol.probe_len / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let sup_value = k.sup_value();
    let mut evenness_defect: f64 = 0.0;
    let mut positivity_violations = 0;
    let mut monotonicity_violations = 0;
    let mut derivative_sign_violations = 0;
    let mut derivative_consistency_defect: f64 = 0.0;
    let mut max_abs_derivative: f64 = 0.0;
    let fd = 1e-5;
    for (i, &x) in xs.iter().enumerate() {
        let v = k.eval(x);
        evenness_defect = evenness_defect.max((v - k.eval(-x)).abs());
        if v <= 0.0 {
            positivity_violations += 1;
        }
        if i > 0 && v > k.eval(xs[i - 1]) + tol.probe * sup_value {
            monotonicity_violations += 1;
        }
        let d = k.eval_deriv(x);
        max_abs_derivative = max_abs_derivative.max(d.abs());
        if x > 0.0 {
            if d >= 0.0 {
                derivative_sign_violations += 1;
            }
            if x > fd {
                let central = (k.eval(x + fd) - k.eval(x - fd)) / (2.0 * fd);
                derivative_consistency_defect = derivative_consistency_defect.max((central - d).abs());
            }
        }
    }
    let derivative_at_origin = k.eval_deriv(1e-8).abs().max(k.eval_deriv(-1e-8).abs());
    let passed = (half_integral - 0.5).abs() <= tol.integral
        && m1.is_finite()
        && first_moment_rel_change < tol.moment_rel
        && evenness_defect == 0.0
        && positivity_violations == 0
        && monotonicity_violations == 0
        && derivative_sign_violations == 0
        && derivative_consistency_defect <= tol.probe
        && derivative_at_origin <= tol.probe
        && sup_value >= k.eval(tol.probe_len);
    KernelValidationReport {
        label: k.label().to_string(),
        half_integral,
        sup_value,
        first_moment: m2,
        first_moment_rel_change,
        evenness_defect,
        positivity_violations,
        monotonicity_violations,
        derivative_sign_violations,
        derivative_consistency_defect,
        derivative_at_origin,
        max_abs_derivative,
        passed,
    }
}

pub fn kernel_from_name(name: &str) -> Result<KernelSpec> {
    match name {
        "gaussian" => Ok(make_gaussian_kernel()),
        "quartic" => Ok(make_quartic_kernel()),
        other => Err(Error::UnknownCatalogEntry(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    // closed form of ∫_0^x dy/(1+y⁴), scaled by the kernel constant
    fn quartic_half_cdf_closed(x: f64) -> f64 {
        let a = x * x + SQRT_2 * x + 1.0;
        let b = x * x - SQRT_2 * x + 1.0;
        let raw = FRAC_1_SQRT_2 / 4.0 * (a / b).ln()
            + FRAC_1_SQRT_2 / 2.0 * ((SQRT_2 * x + 1.0).atan() + (SQRT_2 * x - 1.0).atan());
        SQRT_2 / PI * raw
    }

    #[test]
    fn gaussian_values() {
        let k = make_gaussian_kernel();
        assert!((k.eval(0.0) - 0.5641895835).abs() < 1e-10);
        assert_eq!(k.eval(1.0) - k.eval(-1.0), 0.0);
        assert!((k.half_mass() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quartic_values() {
        let k = make_quartic_kernel();
        assert!((k.eval(0.0) - 0.4501581581).abs() < 1e-10);
        assert!((k.eval(2.0) - SQRT_2 / PI / 17.0).abs() < 1e-15);
        assert!((k.eval(2.0) - 0.02648).abs() < 1e-5);
        assert!((k.half_mass() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn cdf_sentinels() {
        for k in [make_gaussian_kernel(), make_quartic_kernel()] {
            assert!((kernel_cdf(&k, 0.0) - 0.5).abs() <= 1e-8);
            assert!((kernel_cdf(&k, f64::INFINITY) - 1.0).abs() <= 1e-8);
            assert_eq!(kernel_cdf(&k, f64::NEG_INFINITY), 0.0);
        }
    }

    #[test]
    fn quartic_cdf_matches_closed_form() {
        let k = make_quartic_kernel();
        for &x in &[0.0, 0.013, 0.3, 1.0, 2.7, 11.0, 57.3, 199.99, 250.0, 1e4] {
            let want = 0.5 + quartic_half_cdf_closed(x);
            assert!((kernel_cdf(&k, x) - want).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn moments_match_closed_forms() {
        let g = make_gaussian_kernel();
        for &a in &[0.0f64, 0.5, -1.3, 3.0, 12.0] {
            let want = (-a * a).exp() / (2.0 * PI.sqrt());
            assert!((g.upper_moment(a) - want).abs() < 1e-13, "a = {a}");
        }
        let q = make_quartic_kernel();
        for &a in &[0.0f64, 0.5, 2.0, 40.0, 300.0] {
            let want = SQRT_2 / PI * 0.5 * (PI / 2.0 - (a * a).atan());
            assert!((q.upper_moment(a) - want).abs() < 1e-12, "a = {a}");
        }
    }

    #[test]
    fn validation_of_catalog() {
        let tol = KernelTolerances::default();
        let r1 = validate_kernel(&make_gaussian_kernel(), &tol);
        assert!(r1.passed, "{r1:?}");
        assert_eq!(r1.sup_value, make_gaussian_kernel().eval(0.0));
        let r2 = validate_kernel(&make_quartic_kernel(), &tol);
        assert!(r2.passed, "{r2:?}");
    }

    #[test]
    fn unnormalized_exponential_fails() {
        let k = KernelSpec::new(KernelFamily::Exponential { amplitude: 1.0 });
        let r = validate_kernel(&k, &KernelTolerances::default());
        assert!(!r.passed);
        assert!((r.half_integral - 1.0).abs() < 1e-8);
    }

    #[test]
    fn normalized_exponential_fails_smoothness_only() {
        let k = KernelSpec::new(KernelFamily::Exponential { amplitude: 0.5 });
        let r = validate_kernel(&k, &KernelTolerances::default());
        assert!((r.half_integral - 0.5).abs() < 1e-8);
        assert!(r.derivative_at_origin > 0.4);
        assert!(!r.passed);
    }

    #[test]
    fn unknown_kernel_name() {
        assert!(kernel_from_name("cauchy").is_err());
    }
}
