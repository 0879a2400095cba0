//! The essentially nonlinear equation
//! `Q(B(x)) = ∫₀^∞ (K(x-t) - K(x+t)) (B(t) + ω₂(t, B(t))) dt`.
//!
//! Two auxiliary problems bracket the solution: `Q(F) = A F` from `F₀ ≡ η`
//! and `Q(Φ) = A((1 + μ₂)Φ)` from `Φ₀ ≡ ξ`. The main iteration
//! `Q(B_{n+1}) = A(B_n + ω₂(·, B_n))` starts at `Φ`, decreases monotonically
//! and stays above `F`. All three are continued beyond `x_max` by `η`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::Constants;
use crate::diagnostics::{fit_geometric_rate, IterationTrace, DEFAULT_BURN_IN};
use crate::error::{Error, Result};
use crate::iteration::Picard;
use crate::kernel::KernelSpec;
use crate::nonlinearity::{OmegaClass, OmegaSpec, QSpec};
use crate::quadrature::{Grid, KernelOperator, OperatorKind, Profile, TailModel};
use crate::StopCriteria;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 300;
/// Excess above which the sandwich is reported as violated.
pub const SANDWICH_REPORT_TOL: f64 = 1e-9;
/// Excess above which the solve is rejected outright.
pub const SANDWICH_TOL: f64 = 1e-6;
pub const UNIQUENESS_TOL: f64 = 1e-4;
pub const RATE_SLACK: f64 = 0.1;
pub const CHI_DENOMINATOR_FLOOR: f64 = 1e-14;
pub const LIMIT_POINT_FRACTION: f64 = 0.9;
pub const MOMENT_FRACTIONS: [f64; 3] = [0.5, 0.75, 1.0];

#[derive(Debug, Clone)]
pub struct NonlinearProblem {
    pub kernel: KernelSpec,
    pub q: QSpec,
    pub omega2: OmegaSpec,
    pub grid: Arc<Grid>,
    pub constants: Constants,
    pub stop: StopCriteria,
}

impl NonlinearProblem {
    /// Computes `M`, `η`, `ξ` for the data and uses the default stopping rule.
    pub fn new(
        kernel: KernelSpec,
        q: QSpec,
        omega2: OmegaSpec,
        grid: Arc<Grid>,
        epsilon0: f64,
    ) -> Result<NonlinearProblem> {
        if omega2.class() != OmegaClass::Omega2 {
            return Err(Error::InvalidParameter {
                name: "omega2",
                reason: format!("`{}` is not a concave (omega2-class) perturbation", omega2.label()),
            });
        }
        let constants = Constants::compute(&kernel, &q, &omega2, epsilon0)?;
        Ok(NonlinearProblem {
            kernel,
            q,
            omega2,
            grid,
            constants,
            stop: StopCriteria::new(DEFAULT_TOL, DEFAULT_MAX_ITER),
        })
    }
}

/// Operator and envelope samples shared by all nonlinear solves of one
/// problem.
pub struct NonlinearContext<'a> {
    pub problem: &'a NonlinearProblem,
    op: KernelOperator,
    mu: Vec<f64>,
    ext_mu: Vec<f64>,
}

impl<'a> NonlinearContext<'a> {
    pub fn new(problem: &'a NonlinearProblem) -> NonlinearContext<'a> {
        let op = KernelOperator::new(&problem.kernel, problem.grid.clone(), OperatorKind::SumDifference);
        let w = &problem.omega2;
        let mu = problem.grid.nodes().iter().map(|&t| w.envelope(t)).collect();
        let ext_mu = op.extension_nodes().iter().map(|&s| w.envelope(s)).collect();
        NonlinearContext {
            problem,
            op,
            mu,
            ext_mu,
        }
    }

    pub fn operator(&self) -> &KernelOperator {
        &self.op
    }

    fn nodes(&self) -> &[f64] {
        self.problem.grid.nodes()
    }

    fn invert_into(&self, out: &mut [f64]) {
        let q = &self.problem.q;
        for o in out.iter_mut() {
            *o = q.eval_g(o.max(0.0));
        }
    }

    /// `A(p + ω₂(·, p))` with `p` continued by `level` beyond `x_max`.
    fn perturbed_image(&self, p: &[f64], level: f64, out: &mut [f64]) -> Result<()> {
        let w = &self.problem.omega2;
        let integrand: Vec<f64> = self.nodes().iter().zip(p).map(|(&t, &v)| v + w.eval(t, v)).collect();
        let ext: Vec<f64> = self.op.extension_nodes().iter().map(|&s| w.eval(s, level)).collect();
        self.op
            .apply_into(&integrand, TailModel::constant(level), Some(&ext), out)
    }

    /// `A((1 + μ₂)p)` with `p` continued by `level` beyond `x_max`.
    fn weighted_image(&self, p: &[f64], level: f64, out: &mut [f64]) -> Result<()> {
        let integrand: Vec<f64> = p.iter().zip(&self.mu).map(|(v, m)| (1.0 + m) * v).collect();
        let ext: Vec<f64> = self.ext_mu.iter().map(|m| m * level).collect();
        self.op
            .apply_into(&integrand, TailModel::constant(level), Some(&ext), out)
    }

    fn driver(&self, what: &'static str) -> Picard<'_> {
        Picard {
            what,
            stop: self.problem.stop,
            residual_map: Some(self.problem.q.q_fn()),
            ceiling: None,
        }
    }

    fn profile(&self, values: Vec<f64>, name: &str) -> Result<Profile> {
        Ok(Profile::new(self.problem.grid.clone(), values)?.with_meta("profile", name))
    }

    /// `F_{n+1} = G(A F_n)` from `F₀ ≡ η`.
    pub fn solve_f(&self) -> Result<(Profile, IterationTrace)> {
        let eta = self.problem.constants.eta;
        let start = vec![eta; self.nodes().len()];
        let (values, trace) = self.driver("F").run(
            start,
            |cur, out| {
                self.op.apply_into(cur, TailModel::constant(eta), None, out)?;
                self.invert_into(out);
                Ok(())
            },
            |_, _, _| {},
        )?;
        Ok((self.profile(values, "F")?, trace))
    }

    /// `Φ_{n+1} = G(A((1 + μ₂)Φ_n))` from `Φ₀ ≡ ξ`.
    pub fn solve_phi(&self) -> Result<(Profile, IterationTrace)> {
        let c = &self.problem.constants;
        let start = vec![c.xi; self.nodes().len()];
        let (values, trace) = self.driver("Phi").run(
            start,
            |cur, out| {
                self.weighted_image(cur, c.eta, out)?;
                self.invert_into(out);
                Ok(())
            },
            |_, _, _| {},
        )?;
        Ok((self.profile(values, "Phi")?, trace))
    }

    /// `B_{n+1} = G(A(B_n + ω₂(·, B_n)))` from `start`, continued by `η`.
    /// `observe` sees every transition.
    fn iterate_b<O: FnMut(usize, &[f64], &[f64])>(
        &self,
        start: Vec<f64>,
        observe: O,
    ) -> Result<(Vec<f64>, IterationTrace)> {
        let eta = self.problem.constants.eta;
        self.driver("B").run(
            start,
            |cur, out| {
                self.perturbed_image(cur, eta, out)?;
                self.invert_into(out);
                Ok(())
            },
            observe,
        )
    }

    /// `sup_x |Q(B) - A(B + ω₂(·, B))|`.
    pub fn q_residual(&self, b: &[f64]) -> Result<f64> {
        let mut image = vec![0.0; b.len()];
        self.perturbed_image(b, self.problem.constants.eta, &mut image)?;
        let q = &self.problem.q;
        Ok(b.iter()
            .zip(&image)
            .fold(0.0f64, |m, (v, a)| m.max((q.eval_q(*v) - a).abs())))
    }

    /// `χ = A(Φ + ω₂(·,Φ)) / A((1 + μ₂)Φ)`. At the origin both vanish and
    /// the ratio of the derivatives `∫K'(t)(…)dt` is used instead. With
    /// `alternative`, also the ratio with denominator `A(1 + μ₂Φ)`.
    pub fn compute_chi(&self, phi: &Profile, alternative: bool) -> Result<ChiProfiles> {
        let eta = self.problem.constants.eta;
        let w = &self.problem.omega2;
        let nodes = self.nodes();
        let n = nodes.len();
        let num_integrand: Vec<f64> = nodes.iter().zip(&phi.values).map(|(&t, &v)| v + w.eval(t, v)).collect();
        let num_ext: Vec<f64> = self.op.extension_nodes().iter().map(|&s| w.eval(s, eta)).collect();
        let den_integrand: Vec<f64> = phi.values.iter().zip(&self.mu).map(|(v, m)| (1.0 + m) * v).collect();
        let den_ext: Vec<f64> = self.ext_mu.iter().map(|m| m * eta).collect();
        let tail = TailModel::constant(eta);
        let num = self.op.apply(&num_integrand, tail, Some(&num_ext))?;
        let den = self.op.apply(&den_integrand, tail, Some(&den_ext))?;
        let num0 = self.op.derivative_moment(&num_integrand, tail, Some(&num_ext))?;
        let den0 = self.op.derivative_moment(&den_integrand, tail, Some(&den_ext))?;
        let chi = ratio_profile(nodes, &num, &den, num0, den0)?;
        let chi_alt = if alternative {
            let alt_integrand: Vec<f64> = phi.values.iter().zip(&self.mu).map(|(v, m)| 1.0 + m * v).collect();
            let alt_ext: Vec<f64> = self.ext_mu.iter().map(|m| m * eta).collect();
            let alt_tail = TailModel::constant(1.0);
            let alt = self.op.apply(&alt_integrand, alt_tail, Some(&alt_ext))?;
            let alt0 = self.op.derivative_moment(&alt_integrand, alt_tail, Some(&alt_ext))?;
            Some(self.profile(ratio_profile(nodes, &num, &alt, num0, alt0)?, "chi-alternative")?)
        } else {
            None
        };
        debug_assert_eq!(chi.len(), n);
        Ok(ChiProfiles {
            chi: self.profile(chi, "chi")?,
            alternative: chi_alt,
        })
    }

    /// Picard runs of the `B` map from other starts, each continued past
    /// `x_max` by its own last value. The zero start therefore stays zero.
    pub fn uniqueness_cross_check(&self, b_ref: &Profile, f: &Profile, phi: &Profile) -> Result<UniquenessReport> {
        let xi = self.problem.constants.xi;
        let n = self.nodes().len();
        let starts: Vec<(&str, Vec<f64>)> = vec![
            ("xi", vec![xi; n]),
            ("phi", phi.values.clone()),
            (
                "max-f-half-phi",
                f.values.iter().zip(&phi.values).map(|(a, b)| a.max(0.5 * b)).collect(),
            ),
            ("zero", vec![0.0; n]),
        ];
        let r = 0.5 * self.problem.grid.x_max();
        let outer = self.problem.grid.cut_index(r);
        let mut outcomes = Vec::new();
        for (label, start) in starts {
            let (values, trace) = self.driver("uniqueness B").run(
                start,
                |cur, out| {
                    let level = *cur.last().expect("nonempty grid");
                    self.perturbed_image(cur, level, out)?;
                    self.invert_into(out);
                    Ok(())
                },
                |_, _, _| {},
            )?;
            let distance = values
                .iter()
                .zip(&b_ref.values)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let outer_inf = values[outer..].iter().fold(f64::INFINITY, |m, &v| m.min(v));
            let sup = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            outcomes.push(StartOutcome {
                start: label.to_string(),
                distance,
                sup,
                outer_inf,
                in_class: outer_inf > 0.0,
                iterations: trace.iterations,
            });
        }
        let passed = outcomes.iter().all(|o| {
            if o.in_class {
                o.distance <= UNIQUENESS_TOL
            } else {
                o.sup == 0.0
            }
        });
        Ok(UniquenessReport {
            tolerance: UNIQUENESS_TOL,
            outcomes,
            passed,
        })
    }
}

fn ratio_profile(nodes: &[f64], num: &[f64], den: &[f64], num0: f64, den0: f64) -> Result<Vec<f64>> {
    let mut chi = Vec::with_capacity(nodes.len());
    for (i, ((&x, a), b)) in nodes.iter().zip(num).zip(den).enumerate() {
        if i == 0 {
            if den0.abs() < CHI_DENOMINATOR_FLOOR {
                return Err(Error::DegenerateChi { x, value: den0 });
            }
            chi.push(num0 / den0);
        } else {
            if b.abs() < CHI_DENOMINATOR_FLOOR {
                return Err(Error::DegenerateChi { x, value: *b });
            }
            chi.push(a / b);
        }
    }
    Ok(chi)
}

#[derive(Debug, Clone)]
pub struct ChiProfiles {
    pub chi: Profile,
    pub alternative: Option<Profile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub start: String,
    pub distance: f64,
    pub sup: f64,
    /// `inf` of the limit over `[x_max/2, x_max]`.
    pub outer_inf: f64,
    /// Whether the limit has a positive infimum away from the origin.
    pub in_class: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub tolerance: f64,
    pub outcomes: Vec<StartOutcome>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub p_order: u32,
    pub cut_points: Vec<f64>,
    pub values: Vec<f64>,
    /// Relative change between the last two truncation points.
    pub rel_change: f64,
    pub finite: bool,
}

/// Truncated `∫₀^X x^{p-1}|η - B(x)| dx` for `X` at fixed fractions of
/// `x_max`.
pub fn moment_tail_check(b: &Profile, eta: f64, p_order: u32) -> MomentReport {
    let grid = &b.grid;
    let integrand: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&b.values)
        .map(|(&x, &v)| x.powi(p_order as i32 - 1) * (eta - v).abs())
        .collect();
    let mut cut_points = Vec::new();
    let mut values = Vec::new();
    for frac in MOMENT_FRACTIONS {
        let cut = grid.cut_index(frac * grid.x_max());
        cut_points.push(grid.nodes()[cut]);
        values.push(grid.integrate_prefix(&integrand, cut));
    }
    let last = values[values.len() - 1];
    let prev = values[values.len() - 2];
    let rel_change = if last != 0.0 { ((last - prev) / last).abs() } else { 0.0 };
    MomentReport {
        p_order,
        cut_points,
        finite: values.iter().all(|v| v.is_finite()),
        values,
        rel_change,
    }
}

/// Measured sup-deltas against `ξ(1 - σ₀)·k^{n+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEnvelope {
    pub fitted_rate: Option<f64>,
    pub k_rate: f64,
    pub prefactor: f64,
    /// `max_{n >= burn_in} d_n / (prefactor·k^{n+1})`.
    pub max_ratio: f64,
    pub burn_in: usize,
}

impl RateEnvelope {
    pub fn measure(trace: &IterationTrace, constants: &Constants) -> Option<RateEnvelope> {
        let k = constants.k_rate?;
        let sigma0 = constants.sigma0?;
        let prefactor = constants.xi * (1.0 - sigma0);
        let burn_in = DEFAULT_BURN_IN;
        let max_ratio = trace
            .sup_deltas
            .iter()
            .enumerate()
            .skip(burn_in)
            .map(|(n, d)| d / (prefactor * k.powi(n as i32 + 1)))
            .fold(0.0f64, f64::max);
        Some(RateEnvelope {
            fitted_rate: fit_geometric_rate(trace, burn_in).ok(),
            k_rate: k,
            prefactor,
            max_ratio,
            burn_in,
        })
    }

    pub fn holds(&self) -> bool {
        self.max_ratio <= 1.0 + RATE_SLACK && self.fitted_rate.is_some_and(|r| r < 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct NonlinearSolution {
    pub b: Profile,
    pub f: Profile,
    pub phi: Profile,
    pub chi: Profile,
    pub chi_alternative: Option<Profile>,
    pub constants: Constants,
    pub trace: IterationTrace,
    pub f_trace: IterationTrace,
    pub phi_trace: IterationTrace,
    /// Discrete `∫₀^{x_max} |η - B|`.
    pub eta_gap_l1: f64,
    pub sandwich_ok: bool,
    /// `min_x (B - F)` at convergence.
    pub lower_margin: f64,
    /// `min_x (Φ - B)` at convergence.
    pub upper_margin: f64,
    /// `min_n min_x (B_n - F)` over all iterates.
    pub iterate_lower_margin: f64,
    /// `min_x (ξ - B)`.
    pub xi_margin: f64,
    pub residual: f64,
    pub rate: Option<RateEnvelope>,
}

/// Solves `F`, `Φ`, `χ` and `B`, and fills in `σ₀`, `k`, `C`.
pub fn solve_b(p: &NonlinearProblem) -> Result<NonlinearSolution> {
    solve_b_with(&NonlinearContext::new(p), false)
}

pub fn solve_b_with(ctx: &NonlinearContext<'_>, chi_alternative: bool) -> Result<NonlinearSolution> {
    let p = ctx.problem;
    let (f, f_trace) = ctx.solve_f()?;
    let (phi, phi_trace) = ctx.solve_phi()?;
    let chi = ctx.compute_chi(&phi, chi_alternative)?;
    let sigma0 = chi.chi.min().clamp(f64::MIN_POSITIVE, 1.0 - 1e-12);
    let constants = p.constants.with_sigma0(&p.q, sigma0)?;

    let mut iterate_lower_margin = f64::INFINITY;
    let (values, trace) = ctx.iterate_b(phi.values.clone(), |_, _, next| {
        for (b, lo) in next.iter().zip(&f.values) {
            iterate_lower_margin = iterate_lower_margin.min(b - lo);
        }
    })?;
    let residual = ctx.q_residual(&values)?;
    let mut lower_margin = f64::INFINITY;
    let mut upper_margin = f64::INFINITY;
    let mut worst = (0.0, f64::NEG_INFINITY);
    for (((&x, b), lo), hi) in p.grid.nodes().iter().zip(&values).zip(&f.values).zip(&phi.values) {
        lower_margin = lower_margin.min(b - lo);
        upper_margin = upper_margin.min(hi - b);
        let excess = (lo - b).max(b - hi);
        if excess > worst.1 {
            worst = (x, excess);
        }
    }
    if worst.1 > SANDWICH_TOL {
        return Err(Error::SandwichViolation {
            x: worst.0,
            excess: worst.1,
        });
    }
    let xi_margin = values.iter().fold(f64::INFINITY, |m, &b| m.min(constants.xi - b));
    let eta = constants.eta;
    let gap: Vec<f64> = values.iter().map(|b| (eta - b).abs()).collect();
    let eta_gap_l1 = p.grid.integrate(&gap);
    let rate = RateEnvelope::measure(&trace, &constants);
    Ok(NonlinearSolution {
        b: ctx.profile(values, "B")?,
        f,
        phi,
        chi: chi.chi,
        chi_alternative: chi.alternative,
        constants,
        trace,
        f_trace,
        phi_trace,
        eta_gap_l1,
        sandwich_ok: worst.1 <= SANDWICH_REPORT_TOL,
        lower_margin,
        upper_margin,
        iterate_lower_margin,
        xi_margin,
        residual,
        rate,
    })
}

/// Standalone `F` solve.
pub fn solve_f(k: &KernelSpec, q: &QSpec, grid: Arc<Grid>, stop: StopCriteria) -> Result<(Profile, IterationTrace)> {
    let p = NonlinearProblem {
        kernel: k.clone(),
        q: q.clone(),
        omega2: OmegaSpec::zero(OmegaClass::Omega2),
        grid,
        constants: Constants::compute(
            k,
            q,
            &OmegaSpec::zero(OmegaClass::Omega2),
            crate::constants::DEFAULT_EPSILON0,
        )?,
        stop,
    };
    NonlinearContext::new(&p).solve_f()
}

/// Standalone `Φ` solve.
pub fn solve_phi(p: &NonlinearProblem) -> Result<(Profile, IterationTrace)> {
    NonlinearContext::new(p).solve_phi()
}

/// Standalone `χ` from a solved `Φ`.
pub fn compute_chi(p: &NonlinearProblem, phi: &Profile) -> Result<Profile> {
    Ok(NonlinearContext::new(p).compute_chi(phi, false)?.chi)
}
