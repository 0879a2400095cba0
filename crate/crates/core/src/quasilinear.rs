//! The quasilinear equation
//! `f(x) = ∫₀^∞ (K(x-t) - K(x+t)) (f(t) + ω₁(t, f(t))) dt`.
//!
//! For each slope `γ > 0` the iteration `f_{n+1} = A(f_n + ω₁(·, f_n))`
//! from `f₀ = γx` increases monotonically to a solution squeezed between
//! `γx` and `γx + ψ`, where `ψ = g + Aψ` with free term `g = A μ₁`. The
//! Wiener–Hopf solution `H = g + WH` majorizes `ψ`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::IterationTrace;
use crate::error::{Error, Result};
use crate::iteration::Picard;
use crate::kernel::KernelSpec;
use crate::nonlinearity::{OmegaClass, OmegaSpec};
use crate::quadrature::{Grid, KernelOperator, OperatorKind, Profile, TailModel};
use crate::StopCriteria;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 20_000;
pub const DEFAULT_LINEAR_TOL: f64 = 1e-10;
pub const DIVERGENCE_CEILING: f64 = 1e8;
pub const SLOPE_POINT_FRACTION: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct QuasilinearProblem {
    pub kernel: KernelSpec,
    pub omega1: OmegaSpec,
    pub grid: Arc<Grid>,
    pub gammas: Vec<f64>,
    /// Stopping rule for `f`; the tolerance is scaled by `1 + γ·x_max`.
    pub stop: StopCriteria,
    /// Stopping rule for `ψ` and `H`.
    pub linear_stop: StopCriteria,
}

impl QuasilinearProblem {
    pub fn new(kernel: KernelSpec, omega1: OmegaSpec, grid: Arc<Grid>, gammas: Vec<f64>) -> QuasilinearProblem {
        QuasilinearProblem {
            kernel,
            omega1,
            grid,
            gammas,
            stop: StopCriteria::new(DEFAULT_TOL, DEFAULT_MAX_ITER),
            linear_stop: StopCriteria::new(DEFAULT_LINEAR_TOL, DEFAULT_MAX_ITER),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.omega1.class() != OmegaClass::Omega1 {
            return Err(Error::InvalidParameter {
                name: "omega1",
                reason: format!("`{}` is not a bounded (omega1-class) perturbation", self.omega1.label()),
            });
        }
        if self.gammas.is_empty() {
            return Err(Error::InvalidParameter {
                name: "gammas",
                reason: "at least one slope is required".to_string(),
            });
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "gammas",
                reason: format!("slopes must be positive, got {g}"),
            });
        }
        Ok(())
    }
}

/// `g`, `ψ` and `H`, shared by every slope.
#[derive(Debug, Clone)]
pub struct LinearAuxiliary {
    pub g: Profile,
    pub psi: Profile,
    pub h: Profile,
    pub psi_trace: IterationTrace,
    pub h_trace: IterationTrace,
}

#[derive(Debug, Clone)]
pub struct QuasilinearSolution {
    pub gamma: f64,
    pub f: Profile,
    pub auxiliary: Arc<LinearAuxiliary>,
    pub trace: IterationTrace,
    pub slope_point: f64,
    pub slope_estimate: f64,
    /// `min_x (f - γx)` at convergence.
    pub lower_margin: f64,
    /// `min_x (γx + ψ - f)` at convergence.
    pub upper_margin: f64,
    /// `min_n min_x (γx + ψ - f_n)` over all iterates.
    pub iterate_upper_margin: f64,
    /// `sup_x |f - A(f + ω₁(·, f))|`.
    pub residual: f64,
}

impl QuasilinearSolution {
    pub fn psi(&self) -> &Profile {
        &self.auxiliary.psi
    }

    pub fn g(&self) -> &Profile {
        &self.auxiliary.g
    }

    pub fn h(&self) -> &Profile {
        &self.auxiliary.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub gamma: f64,
    pub slope_estimate: f64,
    pub deviation: f64,
    pub bound: f64,
}

/// Free term `g(x) = ∫₀^∞ (K(x-t) - K(x+t)) μ₁(t) dt`.
pub fn build_free_term_g(k: &KernelSpec, w: &OmegaSpec, grid: Arc<Grid>) -> Result<Profile> {
    let op = KernelOperator::new(k, grid, OperatorKind::SumDifference);
    free_term(&op, w)
}

fn free_term(op: &KernelOperator, w: &OmegaSpec) -> Result<Profile> {
    let mu: Vec<f64> = op.grid().nodes().iter().map(|&t| w.envelope(t)).collect();
    let ext: Vec<f64> = op.extension_nodes().iter().map(|&s| w.envelope(s)).collect();
    let values = op.apply(&mu, TailModel::Zero, Some(&ext))?;
    Profile::new(op.grid().clone(), values).map(|p| p.with_meta("profile", "g"))
}

/// `ψ_{n+1} = g + Aψ_n` from `ψ₀ = g`, continued by its last value.
pub fn solve_linear_psi(k: &KernelSpec, g: &Profile, stop: StopCriteria) -> Result<(Profile, IterationTrace)> {
    let op = KernelOperator::new(k, g.grid.clone(), OperatorKind::SumDifference);
    linear_fixed_point(&op, g, stop, "psi", None)
}

/// `H_{n+1} = g + W H_n` from `H₀ = g` with the difference kernel only.
pub fn solve_wiener_hopf_h(k: &KernelSpec, g: &Profile, stop: StopCriteria) -> Result<(Profile, IterationTrace)> {
    let op = KernelOperator::new(k, g.grid.clone(), OperatorKind::Difference);
    linear_fixed_point(&op, g, stop, "H", Some(DIVERGENCE_CEILING))
}

fn linear_fixed_point(
    op: &KernelOperator,
    g: &Profile,
    stop: StopCriteria,
    what: &'static str,
    ceiling: Option<f64>,
) -> Result<(Profile, IterationTrace)> {
    let driver = Picard {
        what,
        stop,
        residual_map: None,
        ceiling,
    };
    let (values, trace) = driver.run(
        g.values.clone(),
        |cur, out| {
            let tail = TailModel::constant(*cur.last().expect("nonempty grid"));
            op.apply_into(cur, tail, None, out)?;
            for (o, gi) in out.iter_mut().zip(&g.values) {
                *o += gi;
            }
            Ok(())
        },
        |_, _, _| {},
    )?;
    Ok((Profile::new(g.grid.clone(), values)?.with_meta("profile", what), trace))
}

pub fn solve_auxiliary(p: &QuasilinearProblem) -> Result<LinearAuxiliary> {
    let sd = KernelOperator::new(&p.kernel, p.grid.clone(), OperatorKind::SumDifference);
    let wh = KernelOperator::new(&p.kernel, p.grid.clone(), OperatorKind::Difference);
    auxiliary_with(&sd, &wh, p)
}

fn auxiliary_with(sd: &KernelOperator, wh: &KernelOperator, p: &QuasilinearProblem) -> Result<LinearAuxiliary> {
    let g = free_term(sd, &p.omega1)?;
    let (psi, psi_trace) = linear_fixed_point(sd, &g, p.linear_stop, "psi", None)?;
    let (h, h_trace) = linear_fixed_point(wh, &g, p.linear_stop, "H", Some(DIVERGENCE_CEILING))?;
    Ok(LinearAuxiliary {
        g,
        psi,
        h,
        psi_trace,
        h_trace,
    })
}

/// Solves for every slope in the problem.
pub fn solve_quasilinear(p: &QuasilinearProblem) -> Result<Vec<QuasilinearSolution>> {
    p.validate()?;
    let sd = KernelOperator::new(&p.kernel, p.grid.clone(), OperatorKind::SumDifference);
    let wh = KernelOperator::new(&p.kernel, p.grid.clone(), OperatorKind::Difference);
    let aux = Arc::new(auxiliary_with(&sd, &wh, p)?);
    p.gammas
        .iter()
        .map(|&gamma| solve_one(&sd, p, gamma, aux.clone()))
        .collect()
}

fn perturbed(w: &OmegaSpec, nodes: &[f64], values: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(nodes.iter().zip(values).map(|(&t, &v)| v + w.eval(t, v)));
}

fn solve_one(
    op: &KernelOperator,
    p: &QuasilinearProblem,
    gamma: f64,
    aux: Arc<LinearAuxiliary>,
) -> Result<QuasilinearSolution> {
    let grid = p.grid.clone();
    let x_max = grid.x_max();
    let nodes = grid.nodes();
    let ext_nodes = op.extension_nodes();
    let w = &p.omega1;
    let stop = StopCriteria::new(p.stop.tol * (1.0 + gamma * x_max), p.stop.max_iter);
    let driver = Picard {
        what: "quasilinear f",
        stop,
        residual_map: None,
        ceiling: None,
    };
    let start: Vec<f64> = nodes.iter().map(|&x| gamma * x).collect();
    let mut integrand = Vec::with_capacity(nodes.len());
    let mut ext = vec![0.0; ext_nodes.len()];

    let step_into = |cur: &[f64], out: &mut Vec<f64>, integrand: &mut Vec<f64>, ext: &mut Vec<f64>| -> Result<()> {
        let intercept = cur.last().expect("nonempty grid") - gamma * x_max;
        perturbed(w, nodes, cur, integrand);
        for (e, &s) in ext.iter_mut().zip(ext_nodes) {
            *e = w.eval(s, intercept + gamma * s);
        }
        op.apply_into(integrand, TailModel::linear(gamma, intercept), Some(ext), out)
    };

    let psi = &aux.psi.values;
    let mut iterate_upper_margin = f64::INFINITY;
    let (values, trace) = driver.run(
        start,
        |cur, out| step_into(cur, out, &mut integrand, &mut ext),
        |_, _, next| {
            for ((&x, f), s) in nodes.iter().zip(next).zip(psi) {
                iterate_upper_margin = iterate_upper_margin.min(gamma * x + s - f);
            }
        },
    )?;

    let mut image = vec![0.0; nodes.len()];
    let mut integrand = Vec::with_capacity(nodes.len());
    let mut ext = vec![0.0; ext_nodes.len()];
    step_into(&values, &mut image, &mut integrand, &mut ext)?;
    let residual = values.iter().zip(&image).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let mut lower_margin = f64::INFINITY;
    let mut upper_margin = f64::INFINITY;
    for ((&x, f), s) in nodes.iter().zip(&values).zip(psi) {
        lower_margin = lower_margin.min(f - gamma * x);
        upper_margin = upper_margin.min(gamma * x + s - f);
    }
    let f = Profile::new(grid.clone(), values)?
        .with_meta("profile", "f")
        .with_meta("gamma", gamma);
    let slope_point = SLOPE_POINT_FRACTION * x_max;
    let slope_estimate = f.interpolate(slope_point) / slope_point;
    Ok(QuasilinearSolution {
        gamma,
        f,
        auxiliary: aux,
        trace,
        slope_point,
        slope_estimate,
        lower_margin,
        upper_margin,
        iterate_upper_margin,
        residual,
    })
}

impl QuasilinearSolution {
    /// `|f(x*)/x* - γ|` against the bound `sup ψ / x*`.
    pub fn slope_summary(&self) -> SlopeSummary {
        SlopeSummary {
            gamma: self.gamma,
            slope_estimate: self.slope_estimate,
            deviation: (self.slope_estimate - self.gamma).abs(),
            bound: self.psi().sup() / self.slope_point,
        }
    }
}

/// `min_x (f_a - f_b - (γ_a - γ_b)x)` for `γ_a > γ_b`.
pub fn ordering_margin(a: &QuasilinearSolution, b: &QuasilinearSolution) -> f64 {
    let dg = a.gamma - b.gamma;
    a.f.grid
        .nodes()
        .iter()
        .zip(a.f.values.iter().zip(&b.f.values))
        .fold(f64::INFINITY, |m, (&x, (fa, fb))| m.min(fa - fb - dg * x))
}
