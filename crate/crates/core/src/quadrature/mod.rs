//! Truncated half-line grids, quadrature rules and the sum-difference
//! operators built on them.

mod operator;

pub use operator::{
    apply_sum_difference, apply_weighted_sum_difference, apply_wiener_hopf, KernelOperator, OperatorKind,
    MATRIX_NODE_LIMIT,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 33;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            nodes[0] = 0.0;
            weights[0] = 2.0;
            break;
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre over `[a, b]` split into panels no longer than
/// `panel`.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panel: f64, order: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (z, w) = gauss_legendre(order);
    let count = ((b - a) / panel).ceil().max(1.0) as usize;
    let len = (b - a) / count as f64;
    let mut total = 0.0;
    for p in 0..count {
        let lo = a + p as f64 * len;
        let mid = lo + 0.5 * len;
        let half = 0.5 * len;
        let s: f64 = z.iter().zip(&w).map(|(zi, wi)| wi * f(mid + half * zi)).sum();
        total += half * s;
    }
    total
}

/// Truncated half-line integral `∫_0^L f`, doubling `L` from `base` until
/// the relative change falls below `rel_tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stabilized {
    pub value: f64,
    pub reach: f64,
    pub rel_change: f64,
    pub stabilized: bool,
}

pub fn stabilized_integral<F: Fn(f64) -> f64>(f: F, base: f64, rel_tol: f64, max_doublings: usize) -> Stabilized {
    let mut reach = base;
    let mut value = integrate_panels(&f, 0.0, base, 0.5, 10);
    let mut rel_change = f64::INFINITY;
    for _ in 0..max_doublings {
        let panel = (reach / 128.0).max(0.5);
        let next = value + integrate_panels(&f, reach, 2.0 * reach, panel, 10);
        rel_change = if next != 0.0 {
            ((next - value) / next).abs()
        } else {
            0.0
        };
        value = next;
        reach *= 2.0;
        if !value.is_finite() {
            break;
        }
        if rel_change < rel_tol {
            return Stabilized {
                value,
                reach,
                rel_change,
                stabilized: true,
            };
        }
    }
    Stabilized {
        value,
        reach,
        rel_change,
        stabilized: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Composite Simpson on equally spaced nodes; odd node count.
    UniformSimpson,
    /// Five-point Gauss–Lobatto panels sharing endpoints; `(n - 1) % 4 == 0`.
    PanelGauss,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::UniformSimpson => f.write_str("uniform-simpson"),
            Scheme::PanelGauss => f.write_str("panel-gauss"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-simpson" => Ok(Scheme::UniformSimpson),
            "panel-gauss" => Ok(Scheme::PanelGauss),
            other => Err(Error::UnknownCatalogEntry(other.to_string())),
        }
    }
}

/// Nodes and positive weights on `[0, x_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    scheme: Scheme,
}

impl Grid {
    pub fn build(x_max: f64, n: usize, scheme: Scheme) -> Result<Grid> {
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("x_max must be positive, got {x_max}")));
        }
        if n < MIN_NODES {
            return Err(Error::InvalidGrid(format!("need at least {MIN_NODES} nodes, got {n}")));
        }
        let (nodes, weights) = match scheme {
            Scheme::UniformSimpson => {
                if n.is_multiple_of(2) {
                    return Err(Error::InvalidGrid(format!(
                        "uniform-simpson needs an odd node count, got {n}"
                    )));
                }
                simpson(x_max, n)
            }
            Scheme::PanelGauss => {
                if !(n - 1).is_multiple_of(4) {
                    return Err(Error::InvalidGrid(format!(
                        "panel-gauss needs n = 4·panels + 1, got {n}"
                    )));
                }
                lobatto_panels(x_max, (n - 1) / 4)
            }
        };
        Ok(Grid {
            x_max,
            nodes,
            weights,
            scheme,
        })
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest node index `<= target_x` at which the composite rule can be cut
    /// (even index for Simpson, panel boundary for Lobatto).
    pub fn cut_index(&self, target_x: f64) -> usize {
        let stride = match self.scheme {
            Scheme::UniformSimpson => 2,
            Scheme::PanelGauss => 4,
        };
        let mut best = 0;
        let mut i = 0;
        while i < self.nodes.len() {
            if self.nodes[i] <= target_x * (1.0 + 1e-12) {
                best = i;
            }
            i += stride;
        }
        best
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Integral over `[0, nodes[cut]]`, `cut` as returned by [`Grid::cut_index`].
    pub fn integrate_prefix(&self, values: &[f64], cut: usize) -> f64 {
        if cut == 0 {
            return 0.0;
        }
        let sub = &self.nodes[..=cut];
        let weights = match self.scheme {
            Scheme::UniformSimpson => simpson(sub[cut], cut + 1).1,
            Scheme::PanelGauss => lobatto_panels(sub[cut], cut / 4).1,
        };
        weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Stable identifier of the discretization, used to match report parts.
    pub fn fingerprint(&self) -> String {
        format!("{}:{}:{:.17e}", self.scheme, self.len(), self.x_max)
    }
}

fn simpson(x_max: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let intervals = n - 1;
    let h = x_max / intervals as f64;
    let nodes: Vec<f64> = (0..n)
        .map(|i| if i == intervals { x_max } else { i as f64 * h })
        .collect();
    let weights = (0..n)
        .map(|i| {
            let c = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    (nodes, weights)
}

fn lobatto_panels(x_max: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let s = (3.0f64 / 7.0).sqrt();
    let ref_nodes = [-1.0, -s, 0.0, s, 1.0];
    let ref_weights = [0.1, 49.0 / 90.0, 32.0 / 45.0, 49.0 / 90.0, 0.1];
    let len = x_max / panels as f64;
    let n = 4 * panels + 1;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * len;
        for k in 0..5 {
            let idx = 4 * p + k;
            nodes[idx] = mid + 0.5 * len * ref_nodes[k];
            weights[idx] += 0.5 * len * ref_weights[k];
        }
        nodes[4 * p] = p as f64 * len;
    }
    nodes[n - 1] = x_max;
    (nodes, weights)
}

/// Node values of a discretized function on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

impl Profile {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Profile> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Profile {
            grid,
            values,
            meta: BTreeMap::new(),
        })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Arc<Grid>, f: F) -> Result<Profile> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Profile::new(grid, values)
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Profile {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("grids have at least MIN_NODES nodes")
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Linear interpolation between nodes; clamps outside `[0, x_max]`.
    pub fn interpolate(&self, x: f64) -> f64 {
        let nodes = self.grid.nodes();
        if x <= 0.0 {
            return self.values[0];
        }
        if x >= self.grid.x_max() {
            return self.last();
        }
        let j = nodes.partition_point(|&t| t <= x).max(1);
        let (x0, x1) = (nodes[j - 1], nodes[j]);
        let s = (x - x0) / (x1 - x0);
        self.values[j - 1] * (1.0 - s) + self.values[j] * s
    }
}

/// How a profile is continued beyond `x_max` when the operator integrates
/// over `[x_max, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TailModel {
    Zero,
    Constant {
        value: f64,
    },
    /// `p(t) = intercept + slope·t` for `t > x_max`.
    Linear {
        slope: f64,
        intercept: f64,
    },
}

impl TailModel {
    pub fn constant(value: f64) -> TailModel {
        TailModel::Constant { value }
    }

    pub fn linear(slope: f64, intercept: f64) -> TailModel {
        TailModel::Linear { slope, intercept }
    }

    /// Coefficients on the zeroth and first tail moments.
    pub(crate) fn coefficients(&self) -> (f64, f64) {
        match *self {
            TailModel::Zero => (0.0, 0.0),
            TailModel::Constant { value } => (value, 0.0),
            TailModel::Linear { slope, intercept } => (intercept, slope),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (z, w) = gauss_legendre(8);
        // exact through degree 15
        let s: f64 = z.iter().zip(&w).map(|(x, wi)| wi * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn uniform_grid_shape() {
        let g = Grid::build(12.0, 1201, Scheme::UniformSimpson).unwrap();
        assert_eq!(g.len(), 1201);
        assert!((g.nodes()[1] - 0.01).abs() < 1e-15);
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(*g.nodes().last().unwrap(), 12.0);
        let ones = vec![1.0; g.len()];
        assert!((g.integrate(&ones) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_exact_on_quadratic() {
        let g = Arc::new(Grid::build(1.0, 101, Scheme::UniformSimpson).unwrap());
        let p = Profile::from_fn(g.clone(), |t| t * t).unwrap();
        assert!((g.integrate(&p.values) - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn lobatto_grid() {
        let g = Grid::build(3.0, 41, Scheme::PanelGauss).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert!((total - 3.0).abs() < 1e-12);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        let p: Vec<f64> = g.nodes().iter().map(|t| t.powi(7)).collect();
        assert!((g.integrate(&p) - 3f64.powi(8) / 8.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::build(12.0, 1200, Scheme::UniformSimpson).is_err());
        assert!(Grid::build(12.0, 31, Scheme::UniformSimpson).is_err());
        assert!(Grid::build(0.0, 101, Scheme::UniformSimpson).is_err());
        assert!(Grid::build(1.0, 43, Scheme::PanelGauss).is_err());
    }

    #[test]
    fn prefix_integral() {
        let g = Grid::build(2.0, 201, Scheme::UniformSimpson).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|t| t * t).collect();
        let cut = g.cut_index(1.0);
        assert_eq!(cut, 100);
        assert!((g.integrate_prefix(&vals, cut) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(g.cut_index(1.005), 100);
    }

    #[test]
    fn profile_rejects_nan() {
        let g = Arc::new(Grid::build(1.0, 33, Scheme::UniformSimpson).unwrap());
        let mut v = vec![0.0; 33];
        v[4] = f64::NAN;
        assert!(matches!(Profile::new(g, v), Err(Error::NonFinite { index: 4 })));
    }
}
