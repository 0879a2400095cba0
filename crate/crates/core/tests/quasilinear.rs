use std::sync::{Arc, OnceLock};

use halfline_ie::kernel::make_gaussian_kernel;
use halfline_ie::nonlinearity::{make_omega, OmegaClass, OmegaName, OmegaSpec};
use halfline_ie::quadrature::{integrate_panels, Grid, Scheme};
use halfline_ie::quasilinear::{
    build_free_term_g, ordering_margin, solve_auxiliary, solve_linear_psi, solve_quasilinear, solve_wiener_hopf_h,
    LinearAuxiliary, QuasilinearProblem, QuasilinearSolution,
};
use halfline_ie::StopCriteria;

const LINEAR_STOP: StopCriteria = StopCriteria {
    tol: 1e-10,
    max_iter: 20000,
};

fn coarse_grid() -> Arc<Grid> {
    Arc::new(Grid::build(12.0, 241, Scheme::UniformSimpson).unwrap())
}

fn solved() -> &'static (QuasilinearProblem, Vec<QuasilinearSolution>) {
    static CELL: OnceLock<(QuasilinearProblem, Vec<QuasilinearSolution>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = QuasilinearProblem::new(
            make_gaussian_kernel(),
            make_omega(OmegaName::O1),
            coarse_grid(),
            vec![1.0, 2.0],
        );
        let s = solve_quasilinear(&p).unwrap();
        (p, s)
    })
}

fn auxiliary() -> &'static LinearAuxiliary {
    &solved().1[0].auxiliary
}

#[test]
fn free_term_matches_direct_quadrature() {
    let k = make_gaussian_kernel();
    let grid = Arc::new(Grid::build(12.0, 1201, Scheme::UniformSimpson).unwrap());
    let g = build_free_term_g(&k, &make_omega(OmegaName::O1), grid.clone()).unwrap();
    assert!(g.values[0].abs() < 1e-14);
    assert!(g.values[1..].iter().all(|&v| v > 0.0));
    for i in (0..grid.len()).step_by(75) {
        let x = grid.nodes()[i];
        let direct = integrate_panels(
            |t| (k.eval(x - t) - k.eval(x + t)) * (-t).exp(),
            0.0,
            x + 40.0,
            0.25,
            10,
        );
        assert!(
            (g.values[i] - direct).abs() < 1e-8,
            "x={x}: {} vs {direct}",
            g.values[i]
        );
    }
}

#[test]
fn zero_perturbation_gives_zero_auxiliaries() {
    let k = make_gaussian_kernel();
    let g = build_free_term_g(&k, &OmegaSpec::zero(OmegaClass::Omega1), coarse_grid()).unwrap();
    assert!(g.values.iter().all(|&v| v == 0.0));
    let (psi, trace) = solve_linear_psi(&k, &g, LINEAR_STOP).unwrap();
    assert!(psi.values.iter().all(|&v| v == 0.0));
    assert_eq!(trace.iterations, 1);
    let (h, _) = solve_wiener_hopf_h(&k, &g, LINEAR_STOP).unwrap();
    assert!(h.values.iter().all(|&v| v == 0.0));
}

#[test]
fn psi_iterates_rise_between_g_and_h() {
    let a = auxiliary();
    assert!(a.psi_trace.converged && a.h_trace.converged);
    assert!(a.psi_trace.max_drop <= 1e-9);
    for i in 0..a.g.values.len() {
        assert!(a.g.values[i] <= a.psi.values[i] + 1e-9);
        assert!(a.psi.values[i] <= a.h.values[i] + 1e-9);
    }
}

#[test]
fn h_is_a_fixed_point_at_sampled_nodes() {
    let a = auxiliary();
    let k = make_gaussian_kernel();
    let grid = a.h.grid.clone();
    let (nodes, weights) = (grid.nodes(), grid.weights());
    let last = *a.h.values.last().unwrap();
    let n = nodes.len();
    for s in 0..16 {
        let i = 1 + s * (n - 2) / 15;
        let x = nodes[i];
        let mut sum = 0.0;
        for j in 0..n {
            sum += weights[j] * k.eval(x - nodes[j]) * a.h.values[j];
        }
        sum += last * k.upper_mass(grid.x_max() - x);
        let rhs = a.g.values[i] + sum;
        assert!(a.h.values[i] > 0.0);
        assert!((rhs - a.h.values[i]).abs() < 1e-6, "x={x}: {rhs} vs {}", a.h.values[i]);
    }
}

#[test]
fn auxiliaries_are_shared_across_gammas() {
    let (p, s) = solved();
    assert!(Arc::ptr_eq(&s[0].auxiliary, &s[1].auxiliary));
    let again = solve_auxiliary(p).unwrap();
    assert_eq!(again.psi.values, s[0].psi().values);
}

#[test]
fn f_is_bracketed_by_gamma_x_and_psi() {
    let (_, sols) = solved();
    for s in sols {
        assert!(s.trace.converged);
        assert!(s.trace.max_drop <= 1e-9, "f iterates must not decrease");
        assert!(s.f.values[0].abs() < 1e-8);
        for (i, &x) in s.f.grid.nodes().iter().enumerate() {
            let f = s.f.values[i];
            assert!(f >= s.gamma * x - 1e-9);
            assert!(f <= s.gamma * x + s.psi().values[i] + 1e-6);
        }
        assert!(s.lower_margin >= -1e-9 && s.upper_margin >= -1e-6 && s.iterate_upper_margin >= -1e-6);
    }
}

#[test]
fn larger_gamma_dominates_by_the_linear_gap() {
    let (_, sols) = solved();
    assert!(ordering_margin(&sols[1], &sols[0]) >= -1e-6);
}

#[test]
fn slope_approaches_gamma() {
    let (_, sols) = solved();
    for s in sols {
        let summary = s.slope_summary();
        assert_eq!(summary.gamma, s.gamma);
        assert!(summary.deviation <= summary.bound + 1e-6, "{summary:?}");
        assert!(s.slope_estimate >= s.gamma);
    }
}

#[test]
fn zero_perturbation_keeps_the_linear_profile() {
    let p = QuasilinearProblem::new(
        make_gaussian_kernel(),
        OmegaSpec::zero(OmegaClass::Omega1),
        Arc::new(Grid::build(12.0, 1201, Scheme::UniformSimpson).unwrap()),
        vec![0.5, 3.0],
    );
    for s in solve_quasilinear(&p).unwrap() {
        let dev =
            s.f.grid
                .nodes()
                .iter()
                .zip(&s.f.values)
                .fold(0.0f64, |m, (x, f)| m.max((f - s.gamma * x).abs()));
        assert!(dev <= 5e-6, "gamma={}: {dev:e}", s.gamma);
    }
}
