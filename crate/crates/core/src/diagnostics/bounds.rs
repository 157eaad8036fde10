//! Right-hand sides of the stability estimates, as functions of their raw ingredients.

use super::report::{InequalityReport, RootGuard};

/// `a·n` where an infinite norm wins over a zero prefactor.
pub(crate) fn weighted(a: f64, n: f64) -> f64 {
    if n == f64::INFINITY {
        f64::INFINITY
    } else {
        a * n
    }
}

/// Entropies and norms comparing `(μ, ν)` with `(μ̄, ν̄)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PerturbationTerms {
    /// `H(μ|μ̄)`
    pub h_mu_mubar: f64,
    pub h_mubar_mu: f64,
    pub h_nu_nubar: f64,
    pub h_nubar_nu: f64,
    /// `‖μ - μ̄‖_{Ḣ⁻¹(μ)}`
    pub norm_mu: f64,
    /// `‖μ̄ - μ‖_{Ḣ⁻¹(μ̄)}`
    pub norm_mubar: f64,
    pub norm_nu: f64,
    pub norm_nubar: f64,
}

impl PerturbationTerms {
    pub fn hsym_mu(&self) -> f64 {
        self.h_mu_mubar + self.h_mubar_mu
    }

    pub fn hsym_nu(&self) -> f64 {
        self.h_nu_nubar + self.h_nubar_nu
    }

    pub fn record(&self, r: &mut InequalityReport) {
        r.set_term("h_mu_mubar", self.h_mu_mubar);
        r.set_term("h_mubar_mu", self.h_mubar_mu);
        r.set_term("h_nu_nubar", self.h_nu_nubar);
        r.set_term("h_nubar_nu", self.h_nubar_nu);
        r.set_term("norm_mu", self.norm_mu);
        r.set_term("norm_mubar", self.norm_mubar);
        r.set_term("norm_nu", self.norm_nu);
        r.set_term("norm_nubar", self.norm_nubar);
    }
}

/// Cost, marginal entropies and Fisher informations of one Schrödinger problem.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairTerms {
    pub cost: f64,
    pub h_mu: f64,
    pub h_nu: f64,
    pub fisher_mu: f64,
    pub fisher_nu: f64,
}

/// Everything the Schrödinger stability bounds consume.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StabilityTerms {
    pub time: f64,
    /// `E_{2κ}(T)`
    pub curvature: f64,
    pub a: PairTerms,
    pub b: PairTerms,
    pub p: PerturbationTerms,
}

impl StabilityTerms {
    pub fn record(&self, r: &mut InequalityReport) {
        r.set_term("T", self.time);
        r.set_term("E", self.curvature);
        for (suffix, pair) in [("", &self.a), ("_bar", &self.b)] {
            r.set_term(&format!("ct{suffix}"), pair.cost);
            r.set_term(&format!("h_mu{suffix}"), pair.h_mu);
            r.set_term(&format!("h_nu{suffix}"), pair.h_nu);
            r.set_term(&format!("i_mu{suffix}"), pair.fisher_mu);
            r.set_term(&format!("i_nu{suffix}"), pair.fisher_nu);
        }
        self.p.record(r);
    }

    fn unbarred(&self, g: &mut RootGuard) -> f64 {
        let ra = g.root("C_T(mu,nu) - H(mu|m)", self.a.cost - self.a.h_mu);
        let rb = g.root("C_T(mu,nu) - H(nu|m)", self.a.cost - self.a.h_nu);
        weighted(ra, self.p.norm_mu) + weighted(rb, self.p.norm_nu)
    }

    fn barred(&self, g: &mut RootGuard) -> f64 {
        let ra = g.root("C_T(mubar,nubar) - H(mubar|m)", self.b.cost - self.b.h_mu);
        let rb = g.root("C_T(mubar,nubar) - H(nubar|m)", self.b.cost - self.b.h_nu);
        weighted(ra, self.p.norm_mubar) + weighted(rb, self.p.norm_nubar)
    }

    /// Bound on `H^sym` of the two plans with marginal `H^sym` terms.
    pub fn plans_rhs(&self, g: &mut RootGuard) -> f64 {
        let corr = (self.unbarred(g) + self.barred(g)) / self.curvature.sqrt();
        self.p.hsym_mu() + self.p.hsym_nu() + corr
    }

    /// Fisher-information bound, shared by the plan and the `C_T` estimates.
    pub fn fisher_rhs(&self, g: &mut RootGuard) -> f64 {
        let e = self.curvature.sqrt();
        self.fisher_sum(g, |fi, c| (fi + c) / e)
    }

    /// Same four terms with `√I` left unscaled: `(√I + √(C_T - H)/√E)·‖·‖`.
    /// Coincides with [`Self::fisher_rhs`] at `E = 1` and is smaller for `E < 1`.
    pub fn fisher_rhs_unscaled(&self, g: &mut RootGuard) -> f64 {
        let e = self.curvature.sqrt();
        self.fisher_sum(g, |fi, c| fi + c / e)
    }

    fn fisher_sum(&self, g: &mut RootGuard, prefactor: impl Fn(f64, f64) -> f64) -> f64 {
        let term = |g: &mut RootGuard, label: &str, fisher: f64, gap: f64, norm: f64| {
            let fi = g.root(&format!("I({label})"), fisher);
            let c = g.root(&format!("C_T - H({label}|m)"), gap);
            weighted(prefactor(fi, c), norm)
        };
        term(g, "mu", self.a.fisher_mu, self.a.cost - self.a.h_mu, self.p.norm_mu)
            + term(g, "mubar", self.b.fisher_mu, self.b.cost - self.b.h_mu, self.p.norm_mubar)
            + term(g, "nu", self.a.fisher_nu, self.a.cost - self.a.h_nu, self.p.norm_nu)
            + term(g, "nubar", self.b.fisher_nu, self.b.cost - self.b.h_nu, self.p.norm_nubar)
    }

    /// Bound on `|S_T(μ̄,ν̄) - S_T(μ,ν)|`.
    pub fn cost_rhs(&self, g: &mut RootGuard) -> f64 {
        let t = self.time;
        let corr = (self.unbarred(g) + self.barred(g)) * t / self.curvature.sqrt();
        t * self.p.hsym_mu().min(self.p.hsym_nu()) + corr
    }

    /// Bound on `S_T(μ,ν) - S_T(μ̄,ν̄)`.
    pub fn cost_upper_rhs(&self, g: &mut RootGuard) -> f64 {
        let t = self.time;
        t * self.p.h_mubar_mu.min(self.p.h_nubar_nu) + self.unbarred(g) * t / self.curvature.sqrt()
    }

    /// Bound on `S_T(μ̄,ν̄) - S_T(μ,ν)`.
    pub fn cost_lower_rhs(&self, g: &mut RootGuard) -> f64 {
        let t = self.time;
        t * self.p.h_mu_mubar.min(self.p.h_nu_nubar) + self.barred(g) * t / self.curvature.sqrt()
    }
}

/// `C_ε = (dε/2) log(4πε)`.
pub fn c_epsilon(dim: usize, epsilon: f64) -> f64 {
    0.5 * dim as f64 * epsilon * (4.0 * std::f64::consts::PI * epsilon).ln()
}

/// Ingredients of the zero-curvature quadratic transport bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EotTerms {
    pub epsilon: f64,
    pub dim: usize,
    /// `S^ε(μ,ν)`
    pub cost: f64,
    pub cost_bar: f64,
    /// `H(·|Lebesgue)` of the four marginals.
    pub hl_mu: f64,
    pub hl_nu: f64,
    pub hl_mubar: f64,
    pub hl_nubar: f64,
    pub p: PerturbationTerms,
}

impl EotTerms {
    pub fn record(&self, r: &mut InequalityReport) {
        r.set_term("eps", self.epsilon);
        r.set_term("d", self.dim as f64);
        r.set_term("s", self.cost);
        r.set_term("s_bar", self.cost_bar);
        r.set_term("hl_mu", self.hl_mu);
        r.set_term("hl_nu", self.hl_nu);
        r.set_term("hl_mubar", self.hl_mubar);
        r.set_term("hl_nubar", self.hl_nubar);
        r.set_term("c_eps", c_epsilon(self.dim, self.epsilon));
        self.p.record(r);
    }

    fn bracket(&self, g: &mut RootGuard) -> f64 {
        let (e, c) = (self.epsilon, c_epsilon(self.dim, self.epsilon));
        // The μ-norm pairs with ν's entropy and vice versa.
        let r1 = g.root("S(mu,nu) + eps H(nu|L) + C_eps", self.cost + e * self.hl_nu + c);
        let r2 = g.root("S(mu,nu) + eps H(mu|L) + C_eps", self.cost + e * self.hl_mu + c);
        let r3 = g.root("S(mubar,nubar) + eps H(nubar|L) + C_eps", self.cost_bar + e * self.hl_nubar + c);
        let r4 = g.root("S(mubar,nubar) + eps H(mubar|L) + C_eps", self.cost_bar + e * self.hl_mubar + c);
        2.0 * (weighted(r1, self.p.norm_mu)
            + weighted(r2, self.p.norm_nu)
            + weighted(r3, self.p.norm_mubar)
            + weighted(r4, self.p.norm_nubar))
    }

    pub fn cost_rhs(&self, g: &mut RootGuard) -> f64 {
        self.epsilon * self.p.hsym_mu().min(self.p.hsym_nu()) + self.bracket(g)
    }

    pub fn plan_rhs(&self, g: &mut RootGuard) -> f64 {
        self.epsilon * (self.p.hsym_mu() + self.p.hsym_nu()) + self.bracket(g)
    }
}

/// Ingredients of the finite-curvature quadratic transport bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EotKappaTerms {
    pub epsilon: f64,
    pub kappa: f64,
    pub sp: StabilityTerms,
    pub m2_mu: f64,
    pub m2_mubar: f64,
    pub m2_nu: f64,
    pub m2_nubar: f64,
    /// `W₂(μ̄, μ)`
    pub w2_mu: f64,
    pub w2_nu: f64,
}

impl EotKappaTerms {
    pub fn record(&self, r: &mut InequalityReport) {
        r.set_term("eps", self.epsilon);
        r.set_term("kappa", self.kappa);
        r.set_term("m2_mu", self.m2_mu);
        r.set_term("m2_mubar", self.m2_mubar);
        r.set_term("m2_nu", self.m2_nu);
        r.set_term("m2_nubar", self.m2_nubar);
        r.set_term("w2_mu", self.w2_mu);
        r.set_term("w2_nu", self.w2_nu);
        self.sp.record(r);
    }

    fn corrector(&self, g: &mut RootGuard) -> f64 {
        let s = &self.sp;
        (s.unbarred(g) + s.barred(g)) * self.epsilon / s.curvature.sqrt()
    }

    pub fn cost_rhs(&self, g: &mut RootGuard) -> f64 {
        let p = &self.sp.p;
        let damp = -(-self.kappa * self.sp.time).exp_m1();
        let moments = (self.m2_mubar.sqrt() + self.m2_mu.sqrt()) * self.w2_mu
            + (self.m2_nubar.sqrt() + self.m2_nu.sqrt()) * self.w2_nu;
        self.epsilon * p.hsym_mu().min(p.hsym_nu()) + damp * moments + self.corrector(g)
    }

    pub fn plan_rhs(&self, g: &mut RootGuard) -> f64 {
        let p = &self.sp.p;
        self.epsilon * (p.hsym_mu() + p.hsym_nu()) + self.corrector(g)
    }
}

/// Small-noise limit `2W₂(μ,ν)[‖μ-μ̄‖ + ‖ν-ν̄‖] + 2W₂(μ̄,ν̄)[‖μ̄-μ‖ + ‖ν̄-ν‖]`.
pub fn small_noise_limit(w2: f64, w2_bar: f64, p: &PerturbationTerms) -> f64 {
    2.0 * w2 * (p.norm_mu + p.norm_nu) + 2.0 * w2_bar * (p.norm_mubar + p.norm_nubar)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> StabilityTerms {
        StabilityTerms {
            time: 0.5,
            curvature: 0.25,
            a: PairTerms { cost: 3.0, h_mu: 1.0, h_nu: 2.0, fisher_mu: 4.0, fisher_nu: 9.0 },
            b: PairTerms { cost: 5.0, h_mu: 1.0, h_nu: 1.0, fisher_mu: 1.0, fisher_nu: 16.0 },
            p: PerturbationTerms {
                h_mu_mubar: 0.1,
                h_mubar_mu: 0.2,
                h_nu_nubar: 0.3,
                h_nubar_nu: 0.4,
                norm_mu: 1.0,
                norm_mubar: 2.0,
                norm_nu: 3.0,
                norm_nubar: 4.0,
            },
        }
    }

    #[test]
    fn hand_evaluated() {
        let s = sample();
        let mut g = RootGuard::default();
        // √2·1 + 1·3 + 2·2 + 2·4 = 15 + √2, divided by √E = ½.
        let bracket = 15.0 + 2f64.sqrt();
        assert!((s.plans_rhs(&mut g) - (0.3 + 0.7 + 2.0 * bracket)).abs() < 1e-12);
        assert!((s.cost_rhs(&mut g) - (0.5 * 0.3 + bracket)).abs() < 1e-12);
        // (2+√2)·1 + (1+2)·2 + (3+1)·3 + (4+2)·4 = 44 + √2, times 2.
        assert!((s.fisher_rhs(&mut g) - 2.0 * (44.0 + 2f64.sqrt())).abs() < 1e-12);
        assert!((s.cost_upper_rhs(&mut g) - (0.5 * 0.2 + (2f64.sqrt() + 3.0))).abs() < 1e-12);
        assert!((s.cost_lower_rhs(&mut g) - (0.5 * 0.1 + 12.0)).abs() < 1e-12);
        assert!(!g.flagged);
    }

    #[test]
    fn infinite_norm_dominates() {
        let mut s = sample();
        s.a.h_mu = s.a.cost;
        s.p.norm_mu = f64::INFINITY;
        let mut g = RootGuard::default();
        assert_eq!(s.plans_rhs(&mut g), f64::INFINITY);
    }

    #[test]
    fn c_eps_values() {
        assert_eq!(c_epsilon(2, 1.0 / (4.0 * std::f64::consts::PI)), 0.0);
        assert!((c_epsilon(1, 1.0) - 0.5 * (4.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }
}
