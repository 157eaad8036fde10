//! Schrödinger systems, their costs, and the quadratic entropic transport dictionary.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};
use crate::grid::Grid;
use crate::kernels::GibbsKernel;
use crate::measures::{relative_entropy, DiscreteMeasure, ReferenceMeasure};
use crate::numerics::log_sum_exp_pair;
use crate::sinkhorn::{marginal_errors, scale};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop once both marginal L1 errors are at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting `ψ` on the support of `ν`; zero when absent.
    #[serde(skip)]
    pub init_psi: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-9, max_iter: 100_000, init_psi: None }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions { tol, ..Self::default() }
    }
}

/// A coupling stored in factorized form `log π_ij = row_i + col_j + L_ij`.
#[derive(Clone, Debug)]
pub struct Plan {
    grid: Grid,
    row: Vec<f64>,
    col: Vec<f64>,
    log_kernel: Arc<[f64]>,
    row_marginal: Vec<f64>,
    col_marginal: Vec<f64>,
}

impl Plan {
    pub(crate) fn new(grid: &Grid, row: Vec<f64>, col: Vec<f64>, log_kernel: Arc<[f64]>) -> Self {
        let n = grid.len();
        let marg = |pot: &[f64], other: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    if pot[i] == f64::NEG_INFINITY {
                        0.0
                    } else {
                        (pot[i] + log_sum_exp_pair(&log_kernel[i * n..(i + 1) * n], other)).exp()
                    }
                })
                .collect()
        };
        let row_marginal = marg(&row, &col);
        let col_marginal = marg(&col, &row);
        Plan { grid: grid.clone(), row, col, log_kernel, row_marginal, col_marginal }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.grid.len()
    }

    pub fn log_weight(&self, i: usize, j: usize) -> f64 {
        self.row[i] + self.col[j] + self.log_kernel[i * self.size() + j]
    }

    /// Dense row-major `log π`.
    pub fn log_weights(&self) -> Vec<f64> {
        let n = self.size();
        (0..n * n).map(|ij| self.log_weight(ij / n, ij % n)).collect()
    }

    pub fn row_marginal(&self) -> &[f64] {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &[f64] {
        &self.col_marginal
    }

    pub fn total_mass(&self) -> f64 {
        self.row_marginal.iter().sum()
    }

    /// `Σ_ij |π_ij - π'_ij|`.
    pub fn l1_distance(&self, other: &Plan) -> Result<f64> {
        self.grid.ensure_compatible(&other.grid, "plan distance")?;
        let n = self.size();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += (self.log_weight(i, j).exp() - other.log_weight(i, j).exp()).abs();
            }
        }
        Ok(s)
    }

    /// `H(π|π')`, using the factorization when both plans share the kernel.
    pub fn relative_entropy(&self, other: &Plan) -> Result<f64> {
        self.grid.ensure_compatible(&other.grid, "plan entropy")?;
        if !Arc::ptr_eq(&self.log_kernel, &other.log_kernel) && self.log_kernel != other.log_kernel {
            return Ok(self.relative_entropy_dense(other));
        }
        let mut h = 0.0;
        for (pot, opot, m) in [(&self.row, &other.row, &self.row_marginal), (&self.col, &other.col, &self.col_marginal)]
        {
            for i in 0..pot.len() {
                if m[i] > 0.0 {
                    if opot[i] == f64::NEG_INFINITY {
                        return Ok(f64::INFINITY);
                    }
                    h += m[i] * (pot[i] - opot[i]);
                }
            }
        }
        Ok(h)
    }

    /// Direct double sum `Σ π log(π/π')`.
    pub fn relative_entropy_dense(&self, other: &Plan) -> f64 {
        let n = self.size();
        let mut h = 0.0;
        for i in 0..n {
            for j in 0..n {
                let la = self.log_weight(i, j);
                if la == f64::NEG_INFINITY {
                    continue;
                }
                let lb = other.log_weight(i, j);
                if lb == f64::NEG_INFINITY {
                    return f64::INFINITY;
                }
                h += la.exp() * (la - lb);
            }
        }
        h
    }

    pub fn symmetric_entropy(&self, other: &Plan) -> Result<f64> {
        Ok(self.relative_entropy(other)? + other.relative_entropy(self)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["i", "j", "log_weight"])?;
        let n = self.size();
        for i in 0..n {
            for j in 0..n {
                wr.write_record([i.to_string(), j.to_string(), format!("{:?}", self.log_weight(i, j))])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SchrodingerSolution {
    phi: Vec<f64>,
    psi: Vec<f64>,
    kernel: Arc<GibbsKernel>,
    reference: Arc<ReferenceMeasure>,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    entropy_mu: f64,
    entropy_nu: f64,
    cost_ct: f64,
    cost_st: f64,
    iterations: usize,
    marginal_residual: f64,
    converged: bool,
    tol: f64,
    residual_history: Vec<f64>,
}

fn check_feasible(p: &DiscreteMeasure, reference: &ReferenceMeasure, name: &str) -> Result<()> {
    for (i, (&w, &m)) in p.weights().iter().zip(reference.cell_mass()).enumerate() {
        if w > 0.0 && m <= 0.0 {
            return Err(Error::Infeasible(format!("{name} charges cell {i} where the reference vanishes")));
        }
    }
    Ok(())
}

/// Alternating log-domain updates for the Schrödinger system, then symmetric normalization.
pub fn solve(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    kernel: &Arc<GibbsKernel>,
    reference: &Arc<ReferenceMeasure>,
    opts: &SolveOptions,
) -> Result<SchrodingerSolution> {
    positive("tol", opts.tol)?;
    kernel.check_reference(reference)?;
    mu.grid().ensure_compatible(kernel.grid(), "mu vs kernel")?;
    nu.grid().ensure_compatible(kernel.grid(), "nu vs kernel")?;
    check_feasible(mu, reference, "mu")?;
    check_feasible(nu, reference, "nu")?;
    let n = mu.len();
    let lm = reference.log_mass();
    let b0: Vec<f64> = match &opts.init_psi {
        Some(p) if p.len() == n => p.iter().zip(lm).map(|(a, b)| a + b).collect(),
        Some(_) => return Err(Error::InvalidParameter { name: "init_psi", reason: "length mismatch".into() }),
        None => lm.to_vec(),
    };
    let s = scale(kernel.log_matrix(), n, mu.weights(), nu.weights(), b0, opts.tol, opts.max_iter);
    let (ep, eq) = marginal_errors(kernel.log_matrix(), n, &s.a, &s.b, mu.weights(), nu.weights());
    let to_pot = |x: &[f64]| -> Vec<f64> {
        x.iter().zip(lm).map(|(v, l)| if *v == f64::NEG_INFINITY { *v } else { v - l }).collect()
    };
    let mut phi = to_pot(&s.a);
    let mut psi = to_pot(&s.b);
    let entropy_mu = relative_entropy(mu, reference)?;
    let entropy_nu = relative_entropy(nu, reference)?;
    let a_side = integral(&phi, mu.weights()) - entropy_mu;
    let b_side = integral(&psi, nu.weights()) - entropy_nu;
    let c = 0.5 * (b_side - a_side);
    phi.iter_mut().for_each(|v| *v += c);
    psi.iter_mut().for_each(|v| *v -= c);
    let cost_ct = integral(&phi, mu.weights()) + integral(&psi, nu.weights());
    let t = kernel.time();
    let cost_st = t * (cost_ct - entropy_mu - entropy_nu);
    Ok(SchrodingerSolution {
        phi,
        psi,
        kernel: kernel.clone(),
        reference: reference.clone(),
        mu: mu.clone(),
        nu: nu.clone(),
        entropy_mu,
        entropy_nu,
        cost_ct,
        cost_st,
        iterations: s.iterations,
        marginal_residual: ep.max(eq),
        converged: s.converged,
        tol: opts.tol,
        residual_history: s.history,
    })
}

/// Kernel and matching reference for time `T` and curvature `κ` (heat/Lebesgue when `κ = 0`).
pub fn reference_problem(grid: &Grid, time: f64, kappa: f64) -> Result<(Arc<GibbsKernel>, Arc<ReferenceMeasure>)> {
    let kind = crate::kernels::KernelKind::for_curvature(time, kappa);
    let kernel = Arc::new(GibbsKernel::new(grid, kind)?);
    let reference = Arc::new(ReferenceMeasure::new(grid, kind.reference_kind())?);
    Ok((kernel, reference))
}

/// `∫ f dp` over the support of `p` (off-support values of `f` are ignored).
pub(crate) fn integral(f: &[f64], p: &[f64]) -> f64 {
    f.iter().zip(p).filter(|(_, &w)| w > 0.0).map(|(v, w)| v * w).sum()
}

impl SchrodingerSolution {
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }
    pub fn kernel(&self) -> &Arc<GibbsKernel> {
        &self.kernel
    }
    pub fn reference(&self) -> &Arc<ReferenceMeasure> {
        &self.reference
    }
    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }
    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }
    pub fn grid(&self) -> &Grid {
        self.mu.grid()
    }
    pub fn time(&self) -> f64 {
        self.kernel.time()
    }
    pub fn kappa(&self) -> f64 {
        self.kernel.kappa()
    }
    /// `H(μ|𝔪)`.
    pub fn entropy_mu(&self) -> f64 {
        self.entropy_mu
    }
    /// `H(ν|𝔪)`.
    pub fn entropy_nu(&self) -> f64 {
        self.entropy_nu
    }
    pub fn iterations(&self) -> usize {
        self.iterations
    }
    pub fn marginal_residual(&self) -> f64 {
        self.marginal_residual
    }
    pub fn converged(&self) -> bool {
        self.converged
    }
    pub fn tol(&self) -> f64 {
        self.tol
    }
    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    pub fn require_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NotConverged(format!(
                "{} iterations, residual {:.3e} > tol {:.1e}",
                self.iterations, self.marginal_residual, self.tol
            )))
        }
    }

    /// Schrödinger cost `C_T = ∫φ dμ + ∫ψ dν`.
    pub fn schrodinger_cost(&self) -> f64 {
        self.cost_ct
    }

    /// Entropic cost `S_T = T C_T - T H(μ|𝔪) - T H(ν|𝔪)`.
    pub fn entropic_cost(&self) -> f64 {
        self.cost_st
    }

    /// `H(π|R_{0,T})` by a direct double sum over the plan.
    pub fn schrodinger_cost_primal(&self) -> f64 {
        let n = self.mu.len();
        let lm = self.reference.log_mass();
        let mut h = 0.0;
        for i in 0..n {
            if self.phi[i] == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..n {
                if self.psi[j] == f64::NEG_INFINITY {
                    continue;
                }
                let lk = self.kernel.log_entry(i, j);
                let lp = self.phi[i] + self.psi[j] + lk + lm[i] + lm[j];
                h += lp.exp() * (lp - lk - lm[i] - lm[j]);
            }
        }
        h
    }

    pub fn plan(&self) -> Plan {
        let lm = self.reference.log_mass();
        let shift = |p: &[f64]| p.iter().zip(lm).map(|(a, b)| a + b).collect::<Vec<_>>();
        Plan::new(self.grid(), shift(&self.phi), shift(&self.psi), self.kernel.shared_matrix())
    }

    /// `log f` on the whole grid, `-inf` off the support of `μ`.
    pub fn log_f(&self) -> &[f64] {
        &self.phi
    }

    pub fn log_g(&self) -> &[f64] {
        &self.psi
    }

    /// Entropic potentials `(Φ_T, Ψ_T) = (Tφ - T log ρ, Tψ - T log σ)` with `ρ = dμ/d𝔪`, `σ = dν/d𝔪`.
    pub fn entropic_potentials(&self) -> (Vec<f64>, Vec<f64>) {
        let t = self.time();
        let conv = |pot: &[f64], p: &DiscreteMeasure| -> Vec<f64> {
            pot.iter()
                .zip(p.weights())
                .zip(self.reference.log_mass())
                .map(|((v, &w), lm)| if w > 0.0 { t * v - t * (w.ln() - lm) } else { f64::NEG_INFINITY })
                .collect()
        };
        (conv(&self.phi, &self.mu), conv(&self.psi, &self.nu))
    }

    pub fn metadata(&self) -> SolutionMetadata {
        SolutionMetadata {
            kernel: self.kernel.kind(),
            grid_shape: self.grid().shape(),
            epsilon: None,
            tol: self.tol,
            iterations: self.iterations,
            marginal_residual: self.marginal_residual,
            converged: self.converged,
            cost_ct: self.cost_ct,
            cost_st: self.cost_st,
            entropy_mu: self.entropy_mu,
            entropy_nu: self.entropy_nu,
            warnings: self.kernel.warnings().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionMetadata {
    pub kernel: crate::kernels::KernelKind,
    pub grid_shape: Vec<usize>,
    pub epsilon: Option<f64>,
    pub tol: f64,
    pub iterations: usize,
    pub marginal_residual: f64,
    pub converged: bool,
    pub cost_ct: f64,
    pub cost_st: f64,
    pub entropy_mu: f64,
    pub entropy_nu: f64,
    pub warnings: Vec<String>,
}

/// Output of the direct quadratic entropic transport solve.
#[derive(Clone, Debug)]
pub struct EotSolution {
    pub epsilon: f64,
    /// `S^ε = ∫|x-y|² dπ + ε H(π|μ⊗ν)`.
    pub cost: f64,
    /// Entropic potentials `(φ_ε, ψ_ε)`, `-inf` off support.
    pub potentials: (Vec<f64>, Vec<f64>),
    pub plan: Plan,
    pub iterations: usize,
    pub marginal_residual: f64,
    pub converged: bool,
}

/// Sinkhorn on `exp(-|x-y|²/ε)` against `μ⊗ν`.
pub fn eot_quadratic_direct(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    epsilon: f64,
    opts: &SolveOptions,
) -> Result<EotSolution> {
    positive("epsilon", epsilon)?;
    positive("tol", opts.tol)?;
    mu.grid().ensure_compatible(nu.grid(), "eot marginals")?;
    let g = mu.grid();
    let n = g.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = -g.sq_dist(i, j) / epsilon;
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let lmu: Vec<f64> = mu.weights().iter().map(|w| w.ln()).collect();
    let lnu: Vec<f64> = nu.weights().iter().map(|w| w.ln()).collect();
    let s = scale(&k, n, mu.weights(), nu.weights(), lnu.clone(), opts.tol, opts.max_iter);
    let (ep, eq) = marginal_errors(&k, n, &s.a, &s.b, mu.weights(), nu.weights());
    let plan = Plan::new(g, s.a.clone(), s.b.clone(), k.into());
    let unshift = |x: &[f64], l: &[f64]| -> Vec<f64> {
        x.iter().zip(l).map(|(a, b)| if *a == f64::NEG_INFINITY { *a } else { a - b }).collect()
    };
    let u = unshift(&s.a, &lmu);
    let v = unshift(&s.b, &lnu);
    // On the plan: ε log(π/μ⊗ν) + c = ε(u_i + v_j), so the cost integrates u, v against the plan marginals.
    let cost = epsilon * (integral(&u, plan.row_marginal()) + integral(&v, plan.col_marginal()));
    let f: Vec<f64> = u.iter().map(|x| epsilon * x).collect();
    let gpot: Vec<f64> = v.iter().map(|x| epsilon * x).collect();
    Ok(EotSolution {
        epsilon,
        cost,
        potentials: (f, gpot),
        plan,
        iterations: s.iterations,
        marginal_residual: ep.max(eq),
        converged: s.converged,
    })
}

/// Final time `T` with `sinh(κT) = εκ/4`.
pub fn sp_time_from_epsilon(epsilon: f64, kappa: f64) -> Result<f64> {
    positive("epsilon", epsilon)?;
    positive("kappa", kappa)?;
    Ok((epsilon * kappa / 4.0).asinh() / kappa)
}

#[derive(Clone, Debug)]
pub struct EotViaSp {
    pub value: f64,
    pub time: f64,
    pub kappa: f64,
    pub solution: SchrodingerSolution,
}

/// `S^ε` computed from an OU-reference Schrödinger problem at `T(ε, κ)`.
pub fn eot_via_sp(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    epsilon: f64,
    kappa: f64,
    opts: &SolveOptions,
) -> Result<EotViaSp> {
    let t = sp_time_from_epsilon(epsilon, kappa)?;
    let g = mu.grid();
    let kernel = Arc::new(GibbsKernel::ornstein_uhlenbeck(g, t, kappa)?);
    let reference = Arc::new(ReferenceMeasure::gaussian(g, kappa)?);
    let sol = solve(mu, nu, &kernel, &reference, opts)?;
    let d = g.dim() as f64;
    let value = epsilon * (sol.cost_ct - sol.entropy_mu - sol.entropy_nu)
        - 0.5 * d * epsilon * (-(-2.0 * kappa * t).exp_m1()).ln()
        + (-(-kappa * t).exp_m1()) * (mu.second_moment() + nu.second_moment());
    Ok(EotViaSp { value, time: t, kappa, solution: sol })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(g: &Grid, m: f64, s: f64) -> DiscreteMeasure {
        DiscreteMeasure::from_density(g, |x| (-(x[0] - m).powi(2) / (2.0 * s * s)).exp()).unwrap()
    }

    fn ou_setup(n: usize, t: f64) -> (Grid, Arc<GibbsKernel>, Arc<ReferenceMeasure>) {
        let g = Grid::uniform(&[(-8.0, 8.0, n)]).unwrap();
        let k = Arc::new(GibbsKernel::ornstein_uhlenbeck(&g, t, 1.0).unwrap());
        let r = Arc::new(ReferenceMeasure::gaussian(&g, 1.0).unwrap());
        (g, k, r)
    }

    #[test]
    fn dirac_marginals_give_product_plan() {
        let (g, k, r) = ou_setup(32, 0.3);
        let d = DiscreteMeasure::dirac(&g, 10).unwrap();
        let sol = solve(&d, &d, &k, &r, &SolveOptions::default()).unwrap();
        assert!(sol.converged());
        let lm = r.log_mass()[10];
        let expected = -k.log_entry(10, 10) - 2.0 * lm;
        assert!((sol.schrodinger_cost() - expected).abs() < 1e-9);
        assert!((sol.plan().log_weight(10, 10)).abs() < 1e-12);
    }

    #[test]
    fn costs_agree_and_normalization_holds() {
        let (g, k, r) = ou_setup(128, 0.25);
        let mu = gaussian(&g, -0.5, 0.8);
        let nu = gaussian(&g, 1.0, 1.2);
        let sol = solve(&mu, &nu, &k, &r, &SolveOptions::default()).unwrap();
        assert!(sol.converged() && sol.marginal_residual() <= 1e-9);
        assert!((sol.schrodinger_cost() - sol.schrodinger_cost_primal()).abs() < 1e-8);
        let lhs = integral(sol.phi(), mu.weights()) - sol.entropy_mu();
        let rhs = integral(sol.psi(), nu.weights()) - sol.entropy_nu();
        let target = sol.entropic_cost() / (2.0 * sol.time());
        assert!((lhs - target).abs() < 1e-10 && (rhs - target).abs() < 1e-10);
        assert!(sol.schrodinger_cost() >= sol.entropy_mu().max(sol.entropy_nu()) - 1e-8);
        let plan = sol.plan();
        assert!((plan.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn infeasible_marginal_rejected() {
        let g = Grid::uniform(&[(-80.0, 80.0, 8)]).unwrap();
        let k = Arc::new(GibbsKernel::ornstein_uhlenbeck(&g, 0.5, 1.0).unwrap());
        let r = Arc::new(ReferenceMeasure::gaussian(&g, 1.0).unwrap());
        assert_eq!(r.cell_mass()[0], 0.0);
        let d = DiscreteMeasure::dirac(&g, 0).unwrap();
        assert!(matches!(solve(&d, &d, &k, &r, &SolveOptions::default()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn max_iter_gives_flagged_partial_solution() {
        let (g, k, r) = ou_setup(64, 0.05);
        let mu = gaussian(&g, -1.0, 0.5);
        let nu = gaussian(&g, 1.0, 1.0);
        let opts = SolveOptions { max_iter: 2, ..Default::default() };
        let sol = solve(&mu, &nu, &k, &r, &opts).unwrap();
        assert!(!sol.converged());
        assert!(sol.require_converged().is_err());
    }

    #[test]
    fn sp_time_inversion() {
        let t = sp_time_from_epsilon(4.0 * 1f64.sinh(), 1.0).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
        let t0 = sp_time_from_epsilon(0.3, 1e-6).unwrap();
        assert!((t0 / 0.075 - 1.0).abs() < 1e-6);
        assert!(sp_time_from_epsilon(-1.0, 1.0).is_err());
    }

    #[test]
    fn eot_of_identical_atoms_is_zero() {
        let g = Grid::uniform(&[(-2.0, 2.0, 16)]).unwrap();
        let d = DiscreteMeasure::dirac(&g, 5).unwrap();
        let e = eot_quadratic_direct(&d, &d, 0.5, &SolveOptions::default()).unwrap();
        assert!(e.cost.abs() < 1e-12);
        let v = eot_via_sp(&d, &d, 0.5, 1.0, &SolveOptions::default()).unwrap();
        assert!(v.value.abs() < 1e-9, "{}", v.value);
    }
}
