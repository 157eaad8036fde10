use bridgestab_core::kernels::curvature_factor;
use bridgestab_core::measures::{relative_entropy_between, symmetric_entropy};
use bridgestab_core::orlicz::{all_bounds, luxemburg_norm, OrliczContext};
use bridgestab_core::schrodinger::reference_problem;
use bridgestab_core::sobolev::{
    h_minus_one_norm, wasserstein2_1d, wasserstein2_exact_small, PoissonMethod, WeightedPoissonProblem,
};
use bridgestab_core::*;
use proptest::prelude::*;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n)
}

fn measure(g: &Grid, w: Vec<f64>) -> DiscreteMeasure {
    DiscreteMeasure::normalized(g, w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn report_verdict_matches_tolerance(lhs in -10.0f64..10.0, rhs in -10.0f64..10.0, abs in 0.0f64..1e-3, rel in 0.0f64..1e-2) {
        let r = InequalityReport::evaluate("p", lhs, rhs, Tolerance { abs, rel });
        prop_assert_eq!(r.slack, rhs - lhs);
        prop_assert_eq!(r.pass, rhs - lhs >= -abs - rel * rhs.abs());
        prop_assert!(!r.vacuous);
    }

    #[test]
    fn curvature_factor_is_monotone(k1 in -2.0f64..2.0, dk in 0.0f64..1.0, t in 0.01f64..3.0) {
        let a = curvature_factor(k1, t).unwrap();
        let b = curvature_factor(k1 + dk, t).unwrap();
        prop_assert!(b >= a * (1.0 - 1e-12));
        prop_assert!((curvature_factor(0.0, t).unwrap() - t).abs() == 0.0);
        prop_assert!((a >= t) == (k1 >= 0.0) || (a - t).abs() < 1e-12);
    }

    #[test]
    fn quantile_w2_matches_lp(wa in weights(9), wb in weights(9)) {
        let g = Grid::uniform(&[(-1.0, 2.0, 9)]).unwrap();
        let (a, b) = (measure(&g, wa), measure(&g, wb));
        let q = wasserstein2_1d(&a, &b).unwrap();
        let lp = wasserstein2_exact_small(&a, &b).unwrap();
        prop_assert!((q - lp).abs() <= 1e-8, "quantile {} lp {}", q, lp);
        prop_assert!((q - wasserstein2_1d(&b, &a).unwrap()).abs() <= 1e-14);
        prop_assert!(wasserstein2_1d(&a, &a).unwrap() <= 1e-14);
    }

    #[test]
    fn w2_translation(w in weights(12), k in 1usize..8) {
        let g = Grid::uniform(&[(0.0, 20.0, 20)]).unwrap();
        let mut padded = w.clone();
        padded.resize(20, 0.0);
        let mut shifted = vec![0.0; k];
        shifted.extend_from_slice(&w);
        shifted.resize(20, 0.0);
        let (a, b) = (measure(&g, padded), measure(&g, shifted));
        prop_assert!((wasserstein2_1d(&a, &b).unwrap() - k as f64).abs() < 1e-12);
    }

    #[test]
    fn h_minus_one_homogeneous_and_solver_independent(w in weights(16), s in prop::collection::vec(-1.0f64..1.0, 16), c in -3.0f64..3.0) {
        let g = Grid::uniform(&[(0.0, 4.0, 16)]).unwrap();
        let mu = measure(&g, w);
        let mean = s.iter().sum::<f64>() / 16.0;
        let nu = SignedMeasure::new(&g, s.iter().map(|x| (x - mean) / 16.0).collect()).unwrap();
        let n1 = h_minus_one_norm(&nu, &mu, 1e-13).unwrap();
        let n2 = h_minus_one_norm(&nu.scaled(c), &mu, 1e-13).unwrap();
        prop_assert!((n2 - c.abs() * n1).abs() <= 1e-9 * (1.0 + n1));
        let p = WeightedPoissonProblem::new(&nu, &mu).unwrap();
        let f = p.solve(PoissonMethod::Flux, 1e-13).unwrap().norm;
        let cg = p.solve(PoissonMethod::ConjugateGradient, 1e-13).unwrap().norm;
        prop_assert!((f - cg).abs() <= 1e-8 * (1.0 + f));
    }

    #[test]
    fn entropies_nonnegative(wa in weights(10), wb in weights(10)) {
        let g = Grid::uniform(&[(0.0, 1.0, 10)]).unwrap();
        let (a, b) = (measure(&g, wa), measure(&g, wb));
        prop_assert!(relative_entropy_between(&a, &b).unwrap() >= -1e-15);
        let s = symmetric_entropy(&a, &b).unwrap();
        prop_assert!((s - symmetric_entropy(&b, &a).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn theta_star_norm_is_exponential_entropy(seed in 0u64..10_000, n in 2usize..40) {
        let c = OrliczContext::random(seed, n, 2.0, 1.0, 1.0).unwrap();
        let norm = luxemburg_norm(&c.density(), c.base(), Young::ThetaStar).unwrap();
        let target = (c.entropy() - 1.0).exp();
        prop_assert!((norm - target).abs() <= 1e-8 * target);
    }

    #[test]
    fn log_integrability_bounds_hold(seed in 0u64..10_000, p in 0.3f64..4.0, q in 0.3f64..4.0, spread in 0.1f64..3.0) {
        let c = OrliczContext::random(seed, 24, spread, p, q).unwrap();
        for r in all_bounds(&c).unwrap() {
            prop_assert!(r.pass, "{} lhs {} rhs {}", r.name, r.lhs, r.rhs);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sinkhorn_marginals_and_uniqueness(wa in weights(40), wb in weights(40), t in 0.1f64..1.0, init in prop::collection::vec(-3.0f64..3.0, 40)) {
        let g = Grid::uniform(&[(-4.0, 4.0, 40)]).unwrap();
        let (mu, nu) = (measure(&g, wa), measure(&g, wb));
        let (k, r) = reference_problem(&g, t, 1.0).unwrap();
        let a = solve(&mu, &nu, &k, &r, &SolveOptions::default()).unwrap();
        let opts = SolveOptions { init_psi: Some(init), ..SolveOptions::default() };
        let b = solve(&mu, &nu, &k, &r, &opts).unwrap();
        prop_assert!(a.converged() && b.converged());
        let plan = a.plan();
        let e1: f64 = plan.row_marginal().iter().zip(mu.weights()).map(|(x, y)| (x - y).abs()).sum();
        let e2: f64 = plan.col_marginal().iter().zip(nu.weights()).map(|(x, y)| (x - y).abs()).sum();
        prop_assert!(e1.max(e2) <= 1e-9);
        let dphi: Vec<f64> = a.phi().iter().zip(b.phi()).map(|(x, y)| x - y).collect();
        let dpsi: Vec<f64> = a.psi().iter().zip(b.psi()).map(|(x, y)| x - y).collect();
        let c = dphi[0];
        prop_assert!(dphi.iter().all(|d| (d - c).abs() <= 1e-7), "phi shift not constant");
        prop_assert!(dpsi.iter().all(|d| (d + c).abs() <= 1e-7), "psi shift not opposite");
        prop_assert!((a.schrodinger_cost() - b.schrodinger_cost()).abs() <= 1e-8);
        prop_assert!(plan.symmetric_entropy(&b.plan()).unwrap() <= 1e-8);
    }
}
