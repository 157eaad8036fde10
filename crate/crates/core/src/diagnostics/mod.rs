//! Both sides of the corrector and stability estimates, with pass/fail reports.

pub mod bounds;
mod checks;
pub mod crosscheck;
mod report;

pub use bounds::{c_epsilon, small_noise_limit, EotKappaTerms, EotTerms, PairTerms, PerturbationTerms, StabilityTerms};
pub use checks::{
    corrector_check, corrector_norm_sq, cost_stability_check, perturbation_terms, plan_stability_check,
    quadratic_eot_stability_check, stability_reports, stability_terms, EotCheckOptions, SobolevContext,
};
pub use crosscheck::{recompute_rhs, verify, CROSSCHECK_TOL};
pub use report::{measures_digest, InequalityReport, RootGuard, Tolerance, SQRT_CLAMP};

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::grid::Grid;
    use crate::kernels::GibbsKernel;
    use crate::measures::{DiscreteMeasure, ReferenceMeasure};
    use crate::schrodinger::{solve, SchrodingerSolution, SolveOptions};

    fn gauss(g: &Grid, m: f64, s: f64) -> DiscreteMeasure {
        DiscreteMeasure::from_density(g, |x| (-(x[0] - m).powi(2) / (2.0 * s * s)).exp()).unwrap()
    }

    fn setup(t: f64) -> (Grid, Arc<GibbsKernel>, Arc<ReferenceMeasure>) {
        let g = Grid::uniform(&[(-6.0, 6.0, 96)]).unwrap();
        let k = Arc::new(GibbsKernel::ornstein_uhlenbeck(&g, t, 1.0).unwrap());
        let r = Arc::new(ReferenceMeasure::gaussian(&g, 1.0).unwrap());
        (g, k, r)
    }

    fn sol(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        k: &Arc<GibbsKernel>,
        r: &Arc<ReferenceMeasure>,
    ) -> SchrodingerSolution {
        let s = solve(mu, nu, k, r, &SolveOptions::with_tol(1e-11)).unwrap();
        assert!(s.converged());
        s
    }

    #[test]
    fn corrector_pair_passes_and_crosschecks() {
        let (g, k, r) = setup(0.3);
        let s = sol(&gauss(&g, -0.5, 0.8), &gauss(&g, 1.0, 1.2), &k, &r);
        let (a, b) = corrector_check(&s, 1.0).unwrap();
        for rep in [&a, &b] {
            assert!(rep.passes_strictly(), "{rep:?}");
            crosscheck::verify(rep).unwrap();
            let gap = (rep.lhs - rep.term("lhs_plan").unwrap()).abs();
            assert!(gap <= 10.0 * rep.term("max_grad_sq").unwrap() * s.marginal_residual() + 1e-12);
        }
        assert_eq!(a.name, "corrector_nu");
        assert_eq!(b.name, "corrector_mu");
    }

    #[test]
    fn identical_pairs_are_zero() {
        let (g, k, r) = setup(0.25);
        let s = sol(&gauss(&g, 0.0, 1.0), &gauss(&g, 1.0, 0.7), &k, &r);
        for rep in stability_reports(&s, &s, &SobolevContext::default()).unwrap() {
            assert!(rep.lhs.abs() <= 1e-8 && rep.rhs.abs() <= 1e-8, "{rep:?}");
            assert!(rep.pass);
            crosscheck::verify(&rep).unwrap();
        }
    }

    #[test]
    fn shifted_pair_passes() {
        let (g, k, r) = setup(0.25);
        let a = sol(&gauss(&g, 0.0, 1.0), &gauss(&g, 1.0, 0.7), &k, &r);
        let b = sol(&gauss(&g, 0.1, 1.0), &gauss(&g, 1.1, 0.7), &k, &r);
        let reps = stability_reports(&a, &b, &SobolevContext::default()).unwrap();
        assert_eq!(reps.len(), 6);
        for rep in &reps {
            assert!(rep.passes_strictly(), "{rep:?}");
            crosscheck::verify(rep).unwrap();
        }
    }

    #[test]
    fn unconverged_rejected() {
        let (g, k, r) = setup(0.25);
        let opts = SolveOptions { max_iter: 1, ..SolveOptions::default() };
        let s = solve(&gauss(&g, -1.0, 0.5), &gauss(&g, 1.0, 0.5), &k, &r, &opts).unwrap();
        assert!(corrector_check(&s, 1.0).is_err());
    }

    #[test]
    fn eot_reports_cover_both_curvatures() {
        let g = Grid::uniform(&[(-5.0, 5.0, 64)]).unwrap();
        let (mu, nu) = (gauss(&g, 0.0, 1.0), gauss(&g, 1.0, 1.0));
        let (mb, nb) = (gauss(&g, 0.1, 1.0), gauss(&g, 1.0, 1.1));
        let opts = EotCheckOptions { kappa: Some(1.0), ..EotCheckOptions::default() };
        let reps = quadratic_eot_stability_check((&mu, &nu), (&mb, &nb), 0.5, &opts).unwrap();
        let names: Vec<_> = reps.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["eot_cost_stab", "eot_plan_stab", "eot_cost_stab_kappa", "eot_plan_stab_kappa"]);
        for rep in &reps {
            assert!(rep.passes_strictly(), "{rep:?}");
            crosscheck::verify(rep).unwrap();
        }
    }
}
