use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::bounds::{small_noise_limit, EotKappaTerms, EotTerms, PairTerms, PerturbationTerms, StabilityTerms};
use super::report::{InequalityReport, RootGuard, Tolerance};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::{apply_semigroup, curvature_factor, GibbsKernel};
use crate::measures::{
    fisher_information, relative_entropy, relative_entropy_between, DiscreteMeasure, ReferenceKind, ReferenceMeasure,
};
use crate::numerics::{gradient_sq_norm, support_mask};
use crate::schrodinger::{eot_quadratic_direct, solve, sp_time_from_epsilon, SchrodingerSolution, SolveOptions};
use crate::sobolev::{h_minus_one_distance, wasserstein2_1d, wasserstein2_exact_small};

/// Settings for the `Ḣ⁻¹` solves and the verdict tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevContext {
    pub cg_tol: f64,
    pub tol: Tolerance,
}

impl Default for SobolevContext {
    fn default() -> Self {
        SobolevContext { cg_tol: 1e-12, tol: Tolerance::default() }
    }
}

/// `∫ |∇ field|² dw` with finite differences restricted to the support of `w`.
pub fn corrector_norm_sq(grid: &Grid, field: &[f64], weights: &[f64]) -> f64 {
    let active = support_mask(weights);
    let g2 = gradient_sq_norm(grid, field, &active);
    weights.iter().zip(&g2).zip(&active).filter(|(_, &on)| on).map(|((w, g), _)| w * g).sum()
}

fn max_on_support(grid: &Grid, field: &[f64], weights: &[f64]) -> f64 {
    let active = support_mask(weights);
    gradient_sq_norm(grid, field, &active)
        .into_iter()
        .zip(&active)
        .filter(|(_, &on)| on)
        .fold(0.0, |m, (g, _)| m.max(g))
}

/// `‖∇log P_T f‖²_{L²(ν)} ≤ (C_T - H(ν|𝔪))/E_{2κ}(T)` and the `μ`-side mirror with `g`.
pub fn corrector_check(sol: &SchrodingerSolution, kappa: f64) -> Result<(InequalityReport, InequalityReport)> {
    sol.require_converged()?;
    let e = curvature_factor(kappa, sol.time())?;
    let k = sol.kernel();
    let r = sol.reference();
    let plan = sol.plan();
    let mut notes = Vec::new();
    if (kappa - sol.kappa()).abs() > 1e-12 {
        notes.push(format!("curvature {kappa} differs from the kernel's {}", sol.kappa()));
    }
    if matches!(r.kind(), ReferenceKind::Lebesgue) {
        notes.push("Lebesgue reference: heuristic".to_string());
    }
    for w in k.warnings() {
        notes.push(w.clone());
    }
    let side = |name: &str, pot: &[f64], target: &DiscreteMeasure, plan_marg: &[f64], entropy: f64| {
        let field = apply_semigroup(k, pot, r)?;
        let lhs = corrector_norm_sq(sol.grid(), &field, target.weights());
        let lhs_plan = corrector_norm_sq(sol.grid(), &field, plan_marg);
        let rhs = (sol.schrodinger_cost() - entropy) / e;
        let mut rep = InequalityReport::evaluate(name, lhs, rhs, Tolerance::default());
        rep.set_term("lhs_plan", lhs_plan);
        rep.set_term("max_grad_sq", max_on_support(sol.grid(), &field, target.weights()));
        rep.set_term("marginal_residual", sol.marginal_residual());
        rep.set_term("ct", sol.schrodinger_cost());
        rep.set_term("h", entropy);
        rep.set_term("E", e);
        rep.set_term("T", sol.time());
        rep.set_term("kappa", kappa);
        for n in &notes {
            rep.note(n.clone());
        }
        rep.digest_measures(&[sol.mu(), sol.nu()]);
        Ok::<_, Error>(rep)
    };
    let nu_rep = side("corrector_nu", sol.log_f(), sol.nu(), plan.col_marginal(), sol.entropy_nu())?;
    let mu_rep = side("corrector_mu", sol.log_g(), sol.mu(), plan.row_marginal(), sol.entropy_mu())?;
    Ok((nu_rep, mu_rep))
}

/// Entropies and `Ḣ⁻¹` distances between `(μ, ν)` and `(μ̄, ν̄)`.
pub fn perturbation_terms(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    mu_bar: &DiscreteMeasure,
    nu_bar: &DiscreteMeasure,
    cg_tol: f64,
) -> Result<PerturbationTerms> {
    Ok(PerturbationTerms {
        h_mu_mubar: relative_entropy_between(mu, mu_bar)?,
        h_mubar_mu: relative_entropy_between(mu_bar, mu)?,
        h_nu_nubar: relative_entropy_between(nu, nu_bar)?,
        h_nubar_nu: relative_entropy_between(nu_bar, nu)?,
        norm_mu: h_minus_one_distance(mu, mu_bar, cg_tol)?,
        norm_mubar: h_minus_one_distance(mu_bar, mu, cg_tol)?,
        norm_nu: h_minus_one_distance(nu, nu_bar, cg_tol)?,
        norm_nubar: h_minus_one_distance(nu_bar, nu, cg_tol)?,
    })
}

fn pair_terms(sol: &SchrodingerSolution) -> Result<PairTerms> {
    Ok(PairTerms {
        cost: sol.schrodinger_cost(),
        h_mu: sol.entropy_mu(),
        h_nu: sol.entropy_nu(),
        fisher_mu: fisher_information(sol.mu(), sol.reference())?,
        fisher_nu: fisher_information(sol.nu(), sol.reference())?,
    })
}

fn same_problem(a: &SchrodingerSolution, b: &SchrodingerSolution) -> Result<()> {
    a.require_converged()?;
    b.require_converged()?;
    a.grid().ensure_compatible(b.grid(), "stability check")?;
    if a.kernel().kind() != b.kernel().kind() {
        return Err(Error::Precondition(format!(
            "solutions use different kernels: {:?} vs {:?}",
            a.kernel().kind(),
            b.kernel().kind()
        )));
    }
    Ok(())
}

/// Raw ingredients shared by the plan and cost stability checks.
pub fn stability_terms(
    a: &SchrodingerSolution,
    b: &SchrodingerSolution,
    ctx: &SobolevContext,
) -> Result<StabilityTerms> {
    same_problem(a, b)?;
    Ok(StabilityTerms {
        time: a.time(),
        curvature: curvature_factor(a.kappa(), a.time())?,
        a: pair_terms(a)?,
        b: pair_terms(b)?,
        p: perturbation_terms(a.mu(), a.nu(), b.mu(), b.nu(), ctx.cg_tol)?,
    })
}

fn finish(
    name: &str,
    lhs: f64,
    terms: &StabilityTerms,
    tol: Tolerance,
    rhs: impl FnOnce(&mut RootGuard) -> f64,
    digest: &[&DiscreteMeasure],
) -> InequalityReport {
    let mut g = RootGuard::default();
    let r = rhs(&mut g);
    let mut rep = InequalityReport::evaluate(name, lhs, r, tol);
    terms.record(&mut rep);
    g.apply(&mut rep);
    rep.digest_measures(digest);
    if terms.p.hsym_mu().is_infinite() || terms.p.hsym_nu().is_infinite() {
        rep.note("marginal supports differ: symmetric entropy is infinite");
    }
    if name.ends_with("_fisher") && terms.curvature > 1.0 {
        let alt = terms.fisher_rhs_unscaled(&mut RootGuard::default());
        rep.set_term("rhs_unscaled_fisher", alt);
        rep.note(format!(
            "E = {:.4} > 1: the gradient bound behind this estimate gives (sqrt I + sqrt(C_T - H)/sqrt E) factors, rhs {alt:.6e}",
            terms.curvature
        ));
    }
    rep
}

/// `stab_plans` and `stab_plans_fisher`.
pub fn plan_stability_check(
    a: &SchrodingerSolution,
    b: &SchrodingerSolution,
    ctx: &SobolevContext,
) -> Result<(InequalityReport, InequalityReport)> {
    let t = stability_terms(a, b, ctx)?;
    plan_reports(a, b, &t, ctx.tol)
}

fn plan_reports(
    a: &SchrodingerSolution,
    b: &SchrodingerSolution,
    t: &StabilityTerms,
    tol: Tolerance,
) -> Result<(InequalityReport, InequalityReport)> {
    let lhs = a.plan().symmetric_entropy(&b.plan())?;
    let d = [a.mu(), a.nu(), b.mu(), b.nu()];
    let r1 = finish("stab_plans", lhs, t, tol, |g| t.plans_rhs(g), &d);
    let r2 = finish("stab_plans_fisher", lhs, t, tol, |g| t.fisher_rhs(g), &d);
    Ok((r1, r2))
}

/// `stab_cost`, `stab_cost_fisher`, and the one-sided `stab_cost_upper` / `stab_cost_lower`.
pub fn cost_stability_check(
    a: &SchrodingerSolution,
    b: &SchrodingerSolution,
    ctx: &SobolevContext,
) -> Result<Vec<InequalityReport>> {
    let t = stability_terms(a, b, ctx)?;
    Ok(cost_reports(a, b, &t, ctx.tol))
}

fn cost_reports(
    a: &SchrodingerSolution,
    b: &SchrodingerSolution,
    t: &StabilityTerms,
    tol: Tolerance,
) -> Vec<InequalityReport> {
    let d = [a.mu(), a.nu(), b.mu(), b.nu()];
    let (sa, sb) = (a.entropic_cost(), b.entropic_cost());
    let mut out = vec![
        finish("stab_cost", (sb - sa).abs(), t, tol, |g| t.cost_rhs(g), &d),
        finish(
            "stab_cost_fisher",
            (b.schrodinger_cost() - a.schrodinger_cost()).abs(),
            t,
            tol,
            |g| t.fisher_rhs(g),
            &d,
        ),
        finish("stab_cost_upper", sa - sb, t, tol, |g| t.cost_upper_rhs(g), &d),
        finish("stab_cost_lower", sb - sa, t, tol, |g| t.cost_lower_rhs(g), &d),
    ];
    for r in &mut out {
        r.set_term("s", sa);
        r.set_term("s_bar", sb);
    }
    out
}

/// All six Schrödinger stability reports from one set of ingredients.
pub fn stability_reports(
    a: &SchrodingerSolution,
    b: &SchrodingerSolution,
    ctx: &SobolevContext,
) -> Result<Vec<InequalityReport>> {
    let t = stability_terms(a, b, ctx)?;
    let (p1, p2) = plan_reports(a, b, &t, ctx.tol)?;
    let mut out = vec![p1, p2];
    out.extend(cost_reports(a, b, &t, ctx.tol));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EotCheckOptions {
    pub solve: SolveOptions,
    pub cg_tol: f64,
    /// Also evaluate the finite-curvature bounds through the OU problem with this `κ`.
    pub kappa: Option<f64>,
    pub tol: Tolerance,
}

impl Default for EotCheckOptions {
    fn default() -> Self {
        EotCheckOptions { solve: SolveOptions::default(), cg_tol: 1e-12, kappa: None, tol: Tolerance::default() }
    }
}

fn w2_any(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    if p.grid().dim() == 1 {
        wasserstein2_1d(p, q)
    } else {
        wasserstein2_exact_small(p, q)
    }
}

/// `eot_cost_stab` and `eot_plan_stab` at zero curvature, plus `eot_cost_stab_kappa` and
/// `eot_plan_stab_kappa` when a curvature is supplied.
pub fn quadratic_eot_stability_check(
    pair_a: (&DiscreteMeasure, &DiscreteMeasure),
    pair_b: (&DiscreteMeasure, &DiscreteMeasure),
    epsilon: f64,
    opts: &EotCheckOptions,
) -> Result<Vec<InequalityReport>> {
    let (mu, nu) = pair_a;
    let (mu_bar, nu_bar) = pair_b;
    let grid = mu.grid();
    for m in [nu, mu_bar, nu_bar] {
        grid.ensure_compatible(m.grid(), "eot stability")?;
    }
    let ea = eot_quadratic_direct(mu, nu, epsilon, &opts.solve)?;
    let eb = eot_quadratic_direct(mu_bar, nu_bar, epsilon, &opts.solve)?;
    for (e, which) in [(&ea, "(mu,nu)"), (&eb, "(mubar,nubar)")] {
        if !e.converged {
            return Err(Error::NotConverged(format!(
                "entropic transport for {which}: residual {:.3e} after {} iterations",
                e.marginal_residual, e.iterations
            )));
        }
    }
    let leb = ReferenceMeasure::lebesgue(grid);
    let p = perturbation_terms(mu, nu, mu_bar, nu_bar, opts.cg_tol)?;
    let terms = EotTerms {
        epsilon,
        dim: grid.dim(),
        cost: ea.cost,
        cost_bar: eb.cost,
        hl_mu: relative_entropy(mu, &leb)?,
        hl_nu: relative_entropy(nu, &leb)?,
        hl_mubar: relative_entropy(mu_bar, &leb)?,
        hl_nubar: relative_entropy(nu_bar, &leb)?,
        p,
    };
    let cost_lhs = (eb.cost - ea.cost).abs();
    let plan_lhs = epsilon * ea.plan.symmetric_entropy(&eb.plan)?;
    let limit = match (w2_any(mu, nu), w2_any(mu_bar, nu_bar)) {
        (Ok(w), Ok(wb)) => Some((w, wb, small_noise_limit(w, wb, &p))),
        _ => None,
    };
    let digest = [mu, nu, mu_bar, nu_bar];
    let mut out = Vec::new();
    for (name, lhs, plan) in [("eot_cost_stab", cost_lhs, false), ("eot_plan_stab", plan_lhs, true)] {
        let mut g = RootGuard::default();
        let rhs = if plan { terms.plan_rhs(&mut g) } else { terms.cost_rhs(&mut g) };
        let mut rep = InequalityReport::evaluate(name, lhs, rhs, opts.tol);
        terms.record(&mut rep);
        if let Some((w, wb, lim)) = limit {
            rep.set_term("w2", w);
            rep.set_term("w2_bar", wb);
            rep.set_term("limit_rhs", lim);
        }
        g.apply(&mut rep);
        rep.digest_measures(&digest);
        out.push(rep);
    }
    if let Some(kappa) = opts.kappa {
        out.extend(eot_kappa_reports(pair_a, pair_b, epsilon, kappa, cost_lhs, plan_lhs, p, opts)?);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn eot_kappa_reports(
    (mu, nu): (&DiscreteMeasure, &DiscreteMeasure),
    (mu_bar, nu_bar): (&DiscreteMeasure, &DiscreteMeasure),
    epsilon: f64,
    kappa: f64,
    cost_lhs: f64,
    plan_lhs: f64,
    p: PerturbationTerms,
    opts: &EotCheckOptions,
) -> Result<Vec<InequalityReport>> {
    let grid = mu.grid();
    let t = sp_time_from_epsilon(epsilon, kappa)?;
    let kernel = Arc::new(GibbsKernel::ornstein_uhlenbeck(grid, t, kappa)?);
    let reference = Arc::new(ReferenceMeasure::gaussian(grid, kappa)?);
    let sa = solve(mu, nu, &kernel, &reference, &opts.solve)?;
    let sb = solve(mu_bar, nu_bar, &kernel, &reference, &opts.solve)?;
    sa.require_converged()?;
    sb.require_converged()?;
    let terms = EotKappaTerms {
        epsilon,
        kappa,
        sp: StabilityTerms {
            time: t,
            curvature: curvature_factor(kappa, t)?,
            a: pair_terms(&sa)?,
            b: pair_terms(&sb)?,
            p,
        },
        m2_mu: mu.second_moment(),
        m2_mubar: mu_bar.second_moment(),
        m2_nu: nu.second_moment(),
        m2_nubar: nu_bar.second_moment(),
        w2_mu: w2_any(mu_bar, mu)?,
        w2_nu: w2_any(nu_bar, nu)?,
    };
    let digest = [mu, nu, mu_bar, nu_bar];
    let mut out = Vec::new();
    for (name, lhs, plan) in [("eot_cost_stab_kappa", cost_lhs, false), ("eot_plan_stab_kappa", plan_lhs, true)] {
        let mut g = RootGuard::default();
        let rhs = if plan { terms.plan_rhs(&mut g) } else { terms.cost_rhs(&mut g) };
        let mut rep = InequalityReport::evaluate(name, lhs, rhs, opts.tol);
        terms.record(&mut rep);
        g.apply(&mut rep);
        rep.digest_measures(&digest);
        out.push(rep);
    }
    Ok(out)
}
