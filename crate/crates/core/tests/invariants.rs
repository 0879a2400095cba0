use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use halfline_ie::constants::{compute_m, compute_xi};
use halfline_ie::diagnostics::{fit_geometric_rate, IterationTrace};
use halfline_ie::kernel::{kernel_cdf, make_gaussian_kernel, make_quartic_kernel, KernelFamily, KernelSpec};
use halfline_ie::nonlinearity::{make_omega, make_power_q, make_sqrt_family_q, OmegaName};
use halfline_ie::quadrature::{Grid, KernelOperator, OperatorKind, Scheme, TailModel};

const N: usize = 101;

fn operator(kind: OperatorKind) -> &'static KernelOperator {
    static SUM: OnceLock<KernelOperator> = OnceLock::new();
    static DIFF: OnceLock<KernelOperator> = OnceLock::new();
    let build = || {
        let grid = Arc::new(Grid::build(10.0, N, Scheme::UniformSimpson).unwrap());
        KernelOperator::new(&make_gaussian_kernel(), grid, kind)
    };
    match kind {
        OperatorKind::SumDifference => SUM.get_or_init(build),
        OperatorKind::Difference => DIFF.get_or_init(build),
    }
}

fn profile() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..5.0, N)
}

fn kernels() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        Just(make_gaussian_kernel()),
        Just(make_quartic_kernel()),
        (0.1f64..2.0).prop_map(|amplitude| KernelSpec::new(KernelFamily::Exponential { amplitude })),
    ]
}

fn geometric_trace(c: f64, r: f64, len: usize) -> IterationTrace {
    let mut t = IterationTrace::new(0.0);
    for n in 0..len {
        t.push(c * r.powi(n as i32), 0.0, 0.0, 0.0);
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sum_difference_preserves_nonnegativity(v in profile()) {
        let tail = TailModel::constant(*v.last().unwrap());
        let out = operator(OperatorKind::SumDifference).apply(&v, tail, None).unwrap();
        prop_assert!(out.iter().all(|&y| y >= -1e-14));
        prop_assert!(out[0].abs() < 1e-14);
    }

    #[test]
    fn operators_are_order_preserving(v in profile(), bump in profile()) {
        for kind in [OperatorKind::SumDifference, OperatorKind::Difference] {
            let op = operator(kind);
            let w: Vec<f64> = v.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let lo = op.apply(&v, TailModel::constant(v[N - 1]), None).unwrap();
            let hi = op.apply(&w, TailModel::constant(w[N - 1]), None).unwrap();
            prop_assert!(lo.iter().zip(&hi).all(|(a, b)| a <= &(b + 1e-13)));
        }
    }

    #[test]
    fn operators_are_linear(v in profile(), w in profile(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        for kind in [OperatorKind::SumDifference, OperatorKind::Difference] {
            let op = operator(kind);
            let zero = TailModel::constant(0.0);
            let mix: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
            let lhs = op.apply(&mix, zero, None).unwrap();
            let av = op.apply(&v, zero, None).unwrap();
            let aw = op.apply(&w, zero, None).unwrap();
            for i in 0..N {
                prop_assert!((lhs[i] - (a * av[i] + b * aw[i])).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn difference_operator_dominates_sum_difference(v in profile()) {
        let tail = TailModel::constant(v[N - 1]);
        let a = operator(OperatorKind::SumDifference).apply(&v, tail, None).unwrap();
        let w = operator(OperatorKind::Difference).apply(&v, tail, None).unwrap();
        prop_assert!(a.iter().zip(&w).all(|(x, y)| x <= &(y + 1e-13)));
    }

    #[test]
    fn kernel_cdf_is_a_distribution(k in kernels(), x in -30.0f64..30.0, dx in 0.0f64..5.0) {
        let total = 2.0 * k.half_mass();
        let lo = kernel_cdf(&k, x);
        let hi = kernel_cdf(&k, x + dx);
        prop_assert!(lo >= 0.0 && lo <= total + 1e-12);
        prop_assert!(hi >= lo - 1e-12);
        prop_assert!((kernel_cdf(&k, x) + kernel_cdf(&k, -x) - total).abs() < 1e-9);
    }

    #[test]
    fn gaussian_cdf_matches_erfc(x in -9.0f64..9.0) {
        let k = make_gaussian_kernel();
        prop_assert!((kernel_cdf(&k, x) - 0.5 * libm::erfc(-x)).abs() < 1e-11);
        prop_assert!((k.upper_mass(x) - 0.5 * libm::erfc(x)).abs() < 1e-11);
        let moment = (-x * x).exp() / (2.0 * std::f64::consts::PI.sqrt());
        prop_assert!((k.upper_moment(x) - moment).abs() < 1e-11);
    }

    #[test]
    fn power_q_inverse_round_trips(p in 1.05f64..4.0, u in 0.0f64..10.0) {
        let q = make_power_q(p).unwrap();
        let back = q.eval_g(q.eval_q(u));
        prop_assert!((back - u).abs() <= 1e-9 * (1.0 + u));
    }

    #[test]
    fn sqrt_family_q_inverse_round_trips(p in 1.55f64..4.0, u in 0.0f64..10.0) {
        let q = make_sqrt_family_q(p).unwrap();
        let back = q.eval_g(q.eval_q(u));
        prop_assert!((back - u).abs() <= 1e-8 * (1.0 + u));
    }

    #[test]
    fn phi_minorant_stays_in_unit_interval(p in 1.05f64..4.0, sigma in 0.0f64..1.0) {
        let q = make_power_q(p).unwrap();
        let phi = q.eval_phi(sigma);
        prop_assert!(phi >= sigma - 1e-12 && phi <= 1.0 + 1e-12);
    }

    #[test]
    fn rate_fit_recovers_geometric_sequences(c in 1e-6f64..1e3, r in 0.05f64..0.95, len in 12usize..60) {
        let fitted = fit_geometric_rate(&geometric_trace(c, r, len), 3).unwrap();
        prop_assert!((fitted - r).abs() < 1e-9);
    }

    #[test]
    fn rate_fit_is_scale_invariant(c in 1e-3f64..1e3, s in 1e-3f64..1e3, r in 0.1f64..0.9) {
        let a = fit_geometric_rate(&geometric_trace(c, r, 30), 3).unwrap();
        let b = fit_geometric_rate(&geometric_trace(c * s, r, 30), 3).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn envelope_mass_scales_linearly(c in 0.1f64..4.0) {
        let k = make_gaussian_kernel();
        let w = make_omega(OmegaName::O3);
        let base = compute_m(&k, &w).unwrap();
        let scaled = compute_m(&k, &w.scaled(c)).unwrap();
        prop_assert!((scaled - c * base).abs() <= 1e-9 * (1.0 + c * base));
    }

    #[test]
    fn xi_grows_with_m(m in 0.0f64..3.0, dm in 0.01f64..1.0) {
        let q = make_power_q(2.0).unwrap();
        let a = compute_xi(&q, m).unwrap();
        let b = compute_xi(&q, m + dm).unwrap();
        prop_assert!(a >= 1.0 - 1e-12 && b > a);
        prop_assert!((a - (1.0 + m)).abs() < 1e-8);
    }

    #[test]
    fn omega2_stays_under_its_envelope(name in prop_oneof![Just(OmegaName::O3), Just(OmegaName::O4)],
                                      t in 0.0f64..30.0, u in 0.0f64..20.0, lambda in 0.0f64..1.0) {
        let w = make_omega(name);
        let v = w.eval(t, u);
        prop_assert!(v >= 0.0 && v <= w.envelope(t) * u + 1e-12);
        let mid = w.eval(t, lambda * u);
        prop_assert!(mid >= lambda * v - 1e-12);
    }

    #[test]
    fn omega1_is_bounded_and_monotone(name in prop_oneof![Just(OmegaName::O1), Just(OmegaName::O2)],
                                     t in 0.0f64..30.0, u in 0.0f64..20.0, du in 0.0f64..5.0) {
        let w = make_omega(name);
        let lo = w.eval(t, u);
        let hi = w.eval(t, u + du);
        prop_assert!(lo >= 0.0 && hi >= lo - 1e-15);
        prop_assert!(hi <= w.envelope(t) + 1e-12);
    }
}
