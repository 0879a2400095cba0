use std::sync::{Arc, OnceLock};

use halfline_ie::kernel::make_gaussian_kernel;
use halfline_ie::nonlinear::{
    compute_chi, moment_tail_check, solve_b, solve_f, solve_phi, NonlinearContext, NonlinearProblem, NonlinearSolution,
    UNIQUENESS_TOL,
};
use halfline_ie::nonlinearity::{make_omega, make_power_q, make_sqrt_family_q, OmegaClass, OmegaName, OmegaSpec};
use halfline_ie::quadrature::{Grid, Profile, Scheme};
use halfline_ie::{Error, StopCriteria};

fn grid() -> Arc<Grid> {
    Arc::new(Grid::build(12.0, 1201, Scheme::UniformSimpson).unwrap())
}

fn problem(omega: OmegaSpec) -> NonlinearProblem {
    NonlinearProblem::new(make_gaussian_kernel(), make_power_q(2.0).unwrap(), omega, grid(), 0.5).unwrap()
}

fn reference() -> &'static (NonlinearProblem, NonlinearSolution) {
    static CELL: OnceLock<(NonlinearProblem, NonlinearSolution)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = problem(make_omega(OmegaName::O3));
        let s = solve_b(&p).unwrap();
        (p, s)
    })
}

fn interior(p: &Profile) -> &[f64] {
    &p.values[1..p.values.len() - 1]
}

#[test]
fn f_starts_at_zero_rises_to_eta() {
    let (p, _) = reference();
    let (f, trace) = solve_f(&p.kernel, &p.q, p.grid.clone(), p.stop).unwrap();
    assert!(trace.converged);
    assert!(f.values[0].abs() < 1e-12);
    assert!(interior(&f).iter().all(|&v| v > 0.0));
    assert!(f.values.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    assert!((f.interpolate(0.9 * 12.0) - 1.0).abs() <= 0.05);
}

#[test]
fn phi_lies_strictly_between_f_and_xi() {
    let (p, s) = reference();
    let (phi, _) = solve_phi(p).unwrap();
    assert!(phi.values[0].abs() < 1e-12);
    let xi = p.constants.xi;
    for (a, b) in interior(&s.f).iter().zip(interior(&phi)) {
        assert!(*a < *b + 1e-9 && *b < xi);
    }
    assert!((phi.interpolate(0.9 * 12.0) - 1.0).abs() <= 0.05);
}

#[test]
fn b_iterates_decrease_and_stay_above_f() {
    let (_, s) = reference();
    assert!(s.trace.converged);
    assert!(s.trace.max_rise <= 1e-9);
    assert!(s.iterate_lower_margin >= -1e-9);
    assert!(s.lower_margin >= -1e-9 && s.upper_margin >= -1e-9);
    assert!(s.b.values[0].abs() <= 1e-8);
    assert!(s.b.values.iter().all(|&b| (0.0..s.constants.xi).contains(&b)));
    assert!(s.sandwich_ok);
    assert!(s.eta_gap_l1.is_finite() && s.eta_gap_l1 > 0.0);
}

#[test]
fn trace_lengths_agree() {
    let (_, s) = reference();
    for t in [&s.trace, &s.f_trace, &s.phi_trace] {
        assert_eq!(t.sup_deltas.len(), t.iterations);
        assert_eq!(t.residuals.len(), t.iterations);
        assert!(t.converged && *t.sup_deltas.last().unwrap() < t.tol);
    }
}

#[test]
fn eta_gap_is_stable_under_domain_extension() {
    let (_, s) = reference();
    let longer = Arc::new(Grid::build(24.0, 2401, Scheme::UniformSimpson).unwrap());
    let p = NonlinearProblem::new(
        make_gaussian_kernel(),
        make_power_q(2.0).unwrap(),
        make_omega(OmegaName::O3),
        longer,
        0.5,
    )
    .unwrap();
    let wide = solve_b(&p).unwrap();
    let rel = (wide.eta_gap_l1 - s.eta_gap_l1).abs() / wide.eta_gap_l1;
    assert!(rel < 0.01, "relative change {rel}");
}

#[test]
fn zero_perturbation_reduces_to_f() {
    let p = problem(OmegaSpec::zero(OmegaClass::Omega2));
    assert_eq!(p.constants.m, 0.0);
    assert_eq!(p.constants.xi, p.constants.eta);
    let s = solve_b(&p).unwrap();
    let (f, _) = solve_f(&p.kernel, &p.q, p.grid.clone(), p.stop).unwrap();
    let d =
        s.b.values
            .iter()
            .zip(&f.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(d <= 10.0 * p.stop.tol, "sup |B - F| = {d:e}");
}

#[test]
fn chi_bounds_and_limit() {
    let (p, s) = reference();
    assert!(interior(&s.chi).iter().all(|&c| c > 0.0 && c <= 1.0 + 1e-6));
    assert!((s.chi.interpolate(0.9 * 12.0) - 1.0).abs() <= 0.02);
    let sigma0 = s.constants.sigma0.unwrap();
    assert!((sigma0 - s.chi.min()).abs() < 1e-12);
    let again = compute_chi(p, &s.phi).unwrap();
    assert_eq!(again.values, s.chi.values);
}

#[test]
fn saturated_perturbation_gives_unit_chi() {
    let p = problem(OmegaSpec::saturated(&make_omega(OmegaName::O3)));
    let (phi, _) = solve_phi(&p).unwrap();
    let chi = compute_chi(&p, &phi).unwrap();
    assert!(chi.values.iter().all(|c| (c - 1.0).abs() <= 1e-8));
}

#[test]
fn alternative_chi_reading_is_reported_separately() {
    let p = problem(make_omega(OmegaName::O3));
    let ctx = NonlinearContext::new(&p);
    let (phi, _) = ctx.solve_phi().unwrap();
    let both = ctx.compute_chi(&phi, true).unwrap();
    let alt = both.alternative.expect("alternative reading");
    assert_eq!(alt.values.len(), both.chi.values.len());
    assert!(alt.values.iter().all(|v| v.is_finite()));
    assert!(ctx.compute_chi(&phi, false).unwrap().alternative.is_none());
}

#[test]
fn fitted_rate_respects_k() {
    let (_, s) = reference();
    let rate = s.rate.as_ref().expect("rate envelope");
    let fitted = rate.fitted_rate.unwrap();
    assert!(fitted < 1.0);
    assert!(fitted <= rate.k_rate + 0.05);
    assert!(rate.holds());
}

#[test]
fn uniqueness_from_every_start() {
    let (p, s) = reference();
    let ctx = NonlinearContext::new(p);
    let report = ctx.uniqueness_cross_check(&s.b, &s.f, &s.phi).unwrap();
    assert!(report.passed);
    let names: Vec<&str> = report.outcomes.iter().map(|o| o.start.as_str()).collect();
    for name in ["xi", "phi", "zero"] {
        assert!(names.contains(&name), "{names:?}");
    }
    for o in &report.outcomes {
        if o.start == "zero" {
            assert!(!o.in_class);
            assert_eq!(o.sup, 0.0);
        } else {
            assert!(o.in_class, "{}", o.start);
            assert!(o.distance <= UNIQUENESS_TOL, "{}: {}", o.start, o.distance);
        }
    }
}

#[test]
fn moments_are_finite_and_stabilize() {
    let (_, s) = reference();
    for order in [1, 2] {
        let m = moment_tail_check(&s.b, 1.0, order);
        assert!(m.finite);
        assert!(m.rel_change < 0.01, "p={order}: {}", m.rel_change);
        assert_eq!(m.cut_points.len(), m.values.len());
    }
    let flat = Profile::new(grid(), vec![1.0; 1201]).unwrap();
    let m = moment_tail_check(&flat, 1.0, 1);
    assert!(m.values.iter().all(|&v| v == 0.0));
}

#[test]
fn sqrt_family_with_slow_envelope() {
    let p = NonlinearProblem::new(
        make_gaussian_kernel(),
        make_sqrt_family_q(2.0).unwrap(),
        make_omega(OmegaName::O4),
        grid(),
        0.5,
    )
    .unwrap();
    assert!((p.constants.m - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-6);
    let s = solve_b(&p).unwrap();
    assert!(s.lower_margin >= -1e-9 && s.upper_margin >= -1e-9);
    assert!(s.b.values.iter().all(|&b| b < p.constants.xi));
}

#[test]
fn iteration_cap_is_reported() {
    let mut p = problem(make_omega(OmegaName::O3));
    p.stop = StopCriteria::new(1e-14, 3);
    let err = solve_b(&p).unwrap_err();
    assert!(matches!(err, Error::IterationCap { .. }), "{err}");
}
