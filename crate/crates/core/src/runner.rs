//! Subcommand execution: builds the problems from a [`RunConfig`], runs the
//! solvers, evaluates the named checks and writes CSV profiles and JSON
//! reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::config::RunConfig;
use crate::diagnostics::{compose_report, Check, Provenance, ReportPart, RunReport};
use crate::error::{Error, Result};
use crate::kernel::{validate_kernel, KernelTolerances};
use crate::nonlinear::{
    moment_tail_check, solve_b_with, NonlinearContext, NonlinearProblem, NonlinearSolution, LIMIT_POINT_FRACTION,
};
use crate::nonlinearity::{validate_omega, validate_q, ShapeTolerances};
use crate::quadrature::Profile;
use crate::quasilinear::{ordering_margin, solve_quasilinear, QuasilinearProblem, QuasilinearSolution};

/// Node-wise slack for monotonicity and ordering of iterates.
pub const ITERATE_TOL: f64 = 1e-9;
/// Node-wise slack for the converged two-sided bounds.
pub const BOUND_TOL: f64 = 1e-6;
pub const ORIGIN_TOL: f64 = 1e-8;
pub const CHI_UPPER_TOL: f64 = 1e-6;
pub const CHI_LIMIT_TOL: f64 = 0.02;
pub const MOMENT_REL_TOL: f64 = 0.01;
pub const RESIDUAL_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Validate,
    SolveQuasilinear,
    SolveNonlinear,
    Report,
}

impl FromStr for Subcommand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validate" => Ok(Subcommand::Validate),
            "solve-quasilinear" => Ok(Subcommand::SolveQuasilinear),
            "solve-nonlinear" => Ok(Subcommand::SolveNonlinear),
            "report" => Ok(Subcommand::Report),
            other => Err(Error::UnknownCatalogEntry(other.to_string())),
        }
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with a header row and 17 significant digits per value.
pub fn write_csv(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    let rows = columns.first().map_or(0, |c| c.len());
    for i in 0..rows {
        let line: Vec<String> = columns.iter().map(|c| fmt_value(c[i])).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn gamma_tag(gamma: f64) -> String {
    let mut s = String::new();
    write!(s, "{gamma}").expect("string write");
    s.replace('.', "p")
}

/// Structural conditions on every configured ingredient.
pub fn validate_part(cfg: &RunConfig, hash: &str) -> Result<ReportPart> {
    let mut part = ReportPart::new(hash);
    let kernel = cfg.kernel_spec();
    let kr = validate_kernel(&kernel, &KernelTolerances::default());
    part.check(
        "kernel.conditions",
        Check::flag(
            "kernel: even, positive, decreasing, unit mass, finite moment",
            kr.passed,
        ),
    );
    part.check(
        "kernel.half_integral",
        Check::at_most(
            "kernel: half-line integral 1/2",
            (kr.half_integral - 0.5).abs(),
            KernelTolerances::default().integral,
        ),
    );
    part.validation("kernel", &kr)?;
    let tol = ShapeTolerances::default();
    if let Some(name) = cfg.omega1 {
        let r = validate_omega(&crate::nonlinearity::make_omega(name), &tol);
        part.check(
            "omega1.conditions",
            Check::flag("omega1: bounded monotone perturbation", r.passed),
        );
        part.validation("omega1", &r)?;
    }
    let mut m = 0.0;
    if let Some(w) = cfg.omega2_spec() {
        let r = validate_omega(&w, &tol);
        part.check(
            "omega2.conditions",
            Check::flag("omega2: concave perturbation under a linear envelope", r.passed),
        );
        part.validation("omega2", &r)?;
        m = crate::constants::compute_m(&kernel, &w)?;
    }
    if let Some(q) = cfg.q_spec()? {
        let r = validate_q(&q, m, None, &tol);
        part.check(
            "q.conditions",
            Check::flag("Q: critical, increasing, convex, invertible, minorant phi", r.passed),
        );
        part.validation("q", &r)?;
    }
    Ok(part)
}

pub fn quasilinear_problem(cfg: &RunConfig) -> Result<QuasilinearProblem> {
    let omega1 = cfg
        .omega1_spec()
        .ok_or_else(|| Error::Config("solve-quasilinear needs an omega1-class perturbation (O1 or O2)".to_string()))?;
    let mut p = QuasilinearProblem::new(cfg.kernel_spec(), omega1, cfg.build_grid()?, cfg.gammas.clone());
    p.stop = cfg.stop.quasilinear;
    p.linear_stop = cfg.stop.linear;
    Ok(p)
}

pub fn quasilinear_checks(part: &mut ReportPart, p: &QuasilinearProblem, sols: &[QuasilinearSolution]) {
    let Some(first) = sols.first() else {
        return;
    };
    let aux = &first.auxiliary;
    let interior = &aux.g.values[1..aux.g.values.len() - 1];
    part.check(
        "g.origin",
        Check::at_most("g(0) = 0", aux.g.values[0].abs(), ORIGIN_TOL),
    );
    part.check(
        "g.positive",
        Check::at_least(
            "g > 0 on the interior",
            interior.iter().fold(f64::INFINITY, |m, &v| m.min(v)),
            f64::MIN_POSITIVE,
        ),
    );
    part.check(
        "psi.monotone",
        Check::at_most("psi iterates nondecreasing", aux.psi_trace.max_drop, ITERATE_TOL),
    );
    let psi_below_h = aux
        .h
        .values
        .iter()
        .zip(&aux.psi.values)
        .fold(f64::INFINITY, |m, (h, s)| m.min(h - s));
    part.check("psi.below_h", Check::at_least("g <= psi <= H", psi_below_h, -BOUND_TOL));
    let g_below_psi = aux
        .psi
        .values
        .iter()
        .zip(&aux.g.values)
        .fold(f64::INFINITY, |m, (s, g)| m.min(s - g));
    part.check("psi.above_g", Check::at_least("g <= psi <= H", g_below_psi, -BOUND_TOL));
    part.traces.insert("psi".to_string(), aux.psi_trace.clone());
    part.traces.insert("H".to_string(), aux.h_trace.clone());
    for s in sols {
        let tag = format!("gamma={}", s.gamma);
        part.check(
            &format!("{tag}.monotone"),
            Check::at_most("f iterates nondecreasing", s.trace.max_drop, ITERATE_TOL),
        );
        part.check(
            &format!("{tag}.lower_bound"),
            Check::at_least("gamma x <= f", s.lower_margin, -BOUND_TOL),
        );
        part.check(
            &format!("{tag}.upper_bound"),
            Check::at_least("f <= gamma x + psi", s.upper_margin, -BOUND_TOL),
        );
        part.check(
            &format!("{tag}.iterate_upper_bound"),
            Check::at_least("f_n <= gamma x + psi for every n", s.iterate_upper_margin, -BOUND_TOL),
        );
        part.check(
            &format!("{tag}.origin"),
            Check::at_most("f(0) = 0", s.f.values[0].abs(), ORIGIN_TOL),
        );
        let tol = p.stop.tol * (1.0 + s.gamma * p.grid.x_max());
        part.check(
            &format!("{tag}.residual"),
            Check::at_most("f = A(f + omega1(f))", s.residual, RESIDUAL_FACTOR * tol),
        );
        let slope = s.slope_summary();
        part.check(
            &format!("{tag}.slope"),
            Check::at_most("f(x)/x -> gamma", slope.deviation - slope.bound, BOUND_TOL),
        );
        part.traces.insert(format!("f[{tag}]"), s.trace.clone());
    }
    let mut order: Vec<&QuasilinearSolution> = sols.iter().collect();
    order.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    for pair in order.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi.gamma > lo.gamma {
            part.check(
                &format!("ordering[{}>{}]", hi.gamma, lo.gamma),
                Check::at_least("f_a - f_b >= (a - b)x", ordering_margin(hi, lo), -BOUND_TOL),
            );
        }
    }
}

fn write_quasilinear(dir: &Path, sols: &[QuasilinearSolution]) -> Result<()> {
    for s in sols {
        let nodes = s.f.grid.nodes();
        let gx: Vec<f64> = nodes.iter().map(|x| s.gamma * x).collect();
        let upper: Vec<f64> = gx.iter().zip(&s.psi().values).map(|(a, b)| a + b).collect();
        write_csv(
            &dir.join(format!("quasilinear_gamma_{}.csv", gamma_tag(s.gamma))),
            &["x", "f", "gamma_x", "gamma_x_plus_psi"],
            &[nodes, &s.f.values, &gx, &upper],
        )?;
    }
    Ok(())
}

pub fn nonlinear_problem(cfg: &RunConfig) -> Result<NonlinearProblem> {
    let q = cfg
        .q_spec()?
        .ok_or_else(|| Error::Config("solve-nonlinear needs a Q entry".to_string()))?;
    let omega2 = cfg
        .omega2_spec()
        .ok_or_else(|| Error::Config("solve-nonlinear needs an omega2-class perturbation (O3 or O4)".to_string()))?;
    let mut p = NonlinearProblem::new(cfg.kernel_spec(), q, omega2, cfg.build_grid()?, cfg.epsilon0)?;
    p.stop = cfg.stop.nonlinear;
    Ok(p)
}

fn interior_min(p: &Profile) -> f64 {
    p.values[1..].iter().fold(f64::INFINITY, |m, &v| m.min(v))
}

pub fn nonlinear_checks(
    part: &mut ReportPart,
    ctx: &NonlinearContext<'_>,
    sol: &NonlinearSolution,
    limit_tol: f64,
) -> Result<()> {
    let p = ctx.problem;
    let c = &sol.constants;
    let x_max = p.grid.x_max();
    let limit_x = LIMIT_POINT_FRACTION * x_max;
    part.constants = Some(*c);
    part.traces.insert("F".to_string(), sol.f_trace.clone());
    part.traces.insert("Phi".to_string(), sol.phi_trace.clone());
    part.traces.insert("B".to_string(), sol.trace.clone());

    part.check(
        "F.origin",
        Check::at_most("F(0) = 0", sol.f.values[0].abs(), ORIGIN_TOL),
    );
    part.check(
        "F.positive",
        Check::at_least("F > 0 on the interior", interior_min(&sol.f), f64::MIN_POSITIVE),
    );
    let f_monotone = sol.f.values.windows(2).fold(f64::INFINITY, |m, w| m.min(w[1] - w[0]));
    part.check(
        "F.nondecreasing",
        Check::at_least("F nondecreasing in x", f_monotone, -ITERATE_TOL),
    );
    part.check(
        "F.limit",
        Check::at_most("F -> eta", (sol.f.interpolate(limit_x) - c.eta).abs(), limit_tol),
    );
    part.check(
        "Phi.origin",
        Check::at_most("Phi(0) = 0", sol.phi.values[0].abs(), ORIGIN_TOL),
    );
    let phi_gap = sol
        .phi
        .values
        .iter()
        .zip(&sol.f.values)
        .skip(1)
        .fold(f64::INFINITY, |m, (a, b)| m.min(a - b));
    part.check("Phi.above_F", Check::at_least("F <= Phi", phi_gap, -ITERATE_TOL));
    part.check("Phi.below_xi", Check::at_least("Phi < xi", c.xi - sol.phi.sup(), 0.0));
    part.check(
        "Phi.limit",
        Check::at_most("Phi -> eta", (sol.phi.interpolate(limit_x) - c.eta).abs(), limit_tol),
    );

    part.check(
        "B.monotone",
        Check::at_most("B_{n+1} <= B_n", sol.trace.max_rise, ITERATE_TOL),
    );
    part.check(
        "B.above_F_iterates",
        Check::at_least("B_n >= F", sol.iterate_lower_margin, -ITERATE_TOL),
    );
    part.check(
        "B.sandwich_lower",
        Check::at_least("F <= B", sol.lower_margin, -ITERATE_TOL),
    );
    part.check(
        "B.sandwich_upper",
        Check::at_least("B <= Phi", sol.upper_margin, -ITERATE_TOL),
    );
    part.check(
        "B.origin",
        Check::at_most("B(0) = 0", sol.b.values[0].abs(), ORIGIN_TOL),
    );
    let strict = sol.b.values[1..]
        .iter()
        .fold(f64::INFINITY, |m, &b| m.min(c.xi * (1.0 - 1e-9) - b));
    part.check("B.below_xi", Check::at_least("B < xi", strict, 0.0));
    part.check(
        "B.limit",
        Check::at_most("B -> eta", (sol.b.interpolate(limit_x) - c.eta).abs(), limit_tol),
    );
    part.check(
        "B.residual",
        Check::at_most("Q(B) = A(B + omega2(B))", sol.residual, RESIDUAL_FACTOR * p.stop.tol),
    );

    let chi_interior = &sol.chi.values[1..];
    let chi_min = chi_interior.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let chi_max = chi_interior.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    part.check("chi.positive", Check::at_least("0 < chi", chi_min, f64::MIN_POSITIVE));
    part.check(
        "chi.at_most_one",
        Check::at_most("chi <= 1", chi_max - 1.0, CHI_UPPER_TOL),
    );
    part.check(
        "chi.limit",
        Check::at_most("chi -> 1", (sol.chi.interpolate(limit_x) - 1.0).abs(), CHI_LIMIT_TOL),
    );

    match &sol.rate {
        Some(rate) => {
            part.check(
                "rate.fitted_below_one",
                Check::at_most(
                    "geometric convergence",
                    rate.fitted_rate.unwrap_or(f64::INFINITY),
                    1.0 - f64::EPSILON,
                ),
            );
            part.check(
                "rate.envelope",
                Check::at_most(
                    "d_n <= xi(1 - sigma0) k^(n+1)",
                    rate.max_ratio,
                    1.0 + crate::nonlinear::RATE_SLACK,
                ),
            );
            part.validation("rate", rate)?;
        }
        None => part.check("rate.envelope", Check::flag("d_n <= xi(1 - sigma0) k^(n+1)", false)),
    }

    let uniq = ctx.uniqueness_cross_check(&sol.b, &sol.f, &sol.phi)?;
    for o in &uniq.outcomes {
        let check = if o.in_class {
            Check::at_most(
                "unique bounded solution with positive infimum",
                o.distance,
                uniq.tolerance,
            )
        } else {
            Check::at_most("zero start stays trivial", o.sup, 0.0)
        };
        part.check(&format!("uniqueness[{}]", o.start), check);
    }
    let expected_trivial = uniq.outcomes.iter().any(|o| o.start == "zero" && !o.in_class);
    part.check(
        "uniqueness[zero].outside_class",
        Check::flag("zero start is outside the uniqueness class", expected_trivial),
    );
    part.validation("uniqueness", &uniq)?;

    for order in [1, 2] {
        let m = moment_tail_check(&sol.b, c.eta, order);
        part.check(
            &format!("moment[p={order}]"),
            Check::at_most(
                "x^(p-1)|eta - B| integrable",
                if m.finite { m.rel_change } else { f64::INFINITY },
                MOMENT_REL_TOL,
            ),
        );
        part.validation(&format!("moment[p={order}]"), &m)?;
    }
    Ok(())
}

fn write_nonlinear(dir: &Path, sol: &NonlinearSolution) -> Result<()> {
    let nodes = sol.b.grid.nodes();
    let mut header = vec!["x", "F", "Phi", "B", "chi"];
    let mut columns: Vec<&[f64]> = vec![nodes, &sol.f.values, &sol.phi.values, &sol.b.values, &sol.chi.values];
    if let Some(alt) = &sol.chi_alternative {
        header.push("chi_alternative");
        columns.push(&alt.values);
    }
    write_csv(&dir.join("nonlinear.csv"), &header, &columns)
}

fn write_report(dir: &Path, name: &str, report: &RunReport) -> Result<()> {
    fs::write(dir.join(name), report.to_json()? + "\n")?;
    Ok(())
}

/// Runs one subcommand, writes its artifacts under `cfg.output` and returns
/// the composed report. `run` succeeding does not mean the checks passed.
pub fn run_subcommand(cmd: Subcommand, cfg: &RunConfig) -> Result<RunReport> {
    let dir = cfg.output.as_path();
    fs::create_dir_all(dir)?;
    let hash = cfg.hash();
    let provenance = Provenance::now(cfg.echo(), &hash);
    let mut parts = Vec::new();
    if matches!(cmd, Subcommand::Validate | Subcommand::Report) {
        parts.push(validate_part(cfg, &hash)?);
    }
    let want_q = cmd == Subcommand::SolveQuasilinear || (cmd == Subcommand::Report && cfg.omega1.is_some());
    if want_q {
        let p = quasilinear_problem(cfg)?;
        let sols = solve_quasilinear(&p)?;
        let mut part = ReportPart::new(&hash);
        quasilinear_checks(&mut part, &p, &sols);
        write_quasilinear(dir, &sols)?;
        if cmd == Subcommand::SolveQuasilinear {
            let report = compose_report(vec![part.clone()], provenance.clone())?;
            write_report(dir, "quasilinear_report.json", &report)?;
        }
        parts.push(part);
    }
    let want_n =
        cmd == Subcommand::SolveNonlinear || (cmd == Subcommand::Report && cfg.omega2.is_some() && cfg.q.is_some());
    if want_n {
        let p = nonlinear_problem(cfg)?;
        let ctx = NonlinearContext::new(&p);
        let sol = solve_b_with(&ctx, cfg.chi_both_readings)?;
        let mut part = ReportPart::new(&hash);
        nonlinear_checks(&mut part, &ctx, &sol, cfg.limit_tol)?;
        write_nonlinear(dir, &sol)?;
        if cmd == Subcommand::SolveNonlinear {
            let report = compose_report(vec![part.clone()], provenance.clone())?;
            write_report(dir, "nonlinear_report.json", &report)?;
        }
        parts.push(part);
    }
    let report = compose_report(parts, provenance)?;
    let name = match cmd {
        Subcommand::Validate => Some("validation_report.json"),
        Subcommand::Report => Some("report.json"),
        _ => None,
    };
    if let Some(name) = name {
        write_report(dir, name, &report)?;
    }
    Ok(report)
}
