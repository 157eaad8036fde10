//! Weighted `Ḣ⁻¹(μ)` norms via graph-Laplacian Poisson solves, and Wasserstein-2 oracles.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::diagnostics::{InequalityReport, Tolerance};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::{DiscreteMeasure, SignedMeasure};
use crate::numerics::MASS_FLOOR;

/// Net charges up to this size are treated as round-off.
pub const CHARGE_TOL: f64 = 1e-10;

/// Largest support handled by [`wasserstein2_exact_small`].
pub const LP_MAX_ATOMS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoissonMethod {
    /// Flux solve in 1D, conjugate gradient otherwise.
    Auto,
    ConjugateGradient,
    /// Exact cumulative-flux solve (1D only).
    Flux,
}

#[derive(Clone, Debug)]
struct Edge {
    a: usize,
    b: usize,
    w: f64,
}

/// `L_μ h = ν` on the grid graph with edge weights `(μ_a + μ_b) / (2Δ²)`.
#[derive(Clone, Debug)]
pub struct WeightedPoissonProblem {
    grid: Grid,
    weight: Vec<f64>,
    rhs: Vec<f64>,
    edges: Vec<Edge>,
    component: Vec<usize>,
    n_components: usize,
}

#[derive(Clone, Debug)]
pub struct PoissonSolution {
    /// `√⟨h, ν⟩`, or `+inf` when some component carries net charge.
    pub norm: f64,
    /// Potential `h` (zero mean on each component); empty when the norm is infinite.
    pub potential: Vec<f64>,
    /// `Σ_e w_e (Δh)²`.
    pub dirichlet_energy: f64,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
}

impl WeightedPoissonProblem {
    pub fn new(rhs: &SignedMeasure, weight: &DiscreteMeasure) -> Result<Self> {
        rhs.grid().ensure_compatible(weight.grid(), "Ḣ⁻¹ norm")?;
        let total = rhs.total_mass();
        if total.abs() > CHARGE_TOL {
            return Err(Error::InvalidMeasure(format!("Ḣ⁻¹ norm needs zero total mass, got {total:e}")));
        }
        let grid = weight.grid().clone();
        let mu = weight.weights();
        let mut edges = Vec::new();
        for i in 0..grid.len() {
            for a in 0..grid.dim() {
                if let Some(k) = grid.neighbor(i, a, 1) {
                    if mu[i] < MASS_FLOOR && mu[k] < MASS_FLOOR {
                        continue;
                    }
                    let nodes = grid.axis(a);
                    let dx = nodes[grid.axis_index(k, a)] - nodes[grid.axis_index(i, a)];
                    edges.push(Edge { a: i, b: k, w: 0.5 * (mu[i] + mu[k]) / (dx * dx) });
                }
            }
        }
        let (component, n_components) = components(grid.len(), &edges);
        Ok(WeightedPoissonProblem {
            grid,
            weight: mu.to_vec(),
            rhs: rhs.weights().to_vec(),
            edges,
            component,
            n_components,
        })
    }

    pub fn edge_weights(&self) -> Vec<(usize, usize, f64)> {
        self.edges.iter().map(|e| (e.a, e.b, e.w)).collect()
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn solve(&self, method: PoissonMethod, cg_tol: f64) -> Result<PoissonSolution> {
        let n = self.grid.len();
        let mut diagnostics = Vec::new();
        let mut charge = vec![0.0; self.n_components];
        let mut size = vec![0usize; self.n_components];
        for i in 0..n {
            charge[self.component[i]] += self.rhs[i];
            size[self.component[i]] += 1;
        }
        let mut rhs = self.rhs.clone();
        for c in 0..self.n_components {
            if charge[c].abs() > CHARGE_TOL {
                diagnostics.push(format!(
                    "component of {} cells carries net charge {:e}; the dual supremum is unbounded",
                    size[c], charge[c]
                ));
                return Ok(PoissonSolution {
                    norm: f64::INFINITY,
                    potential: Vec::new(),
                    dirichlet_energy: f64::INFINITY,
                    iterations: 0,
                    diagnostics,
                });
            }
        }
        let mut dropped = 0.0;
        for i in 0..n {
            let c = self.component[i];
            if charge[c] != 0.0 {
                dropped += (charge[c] / size[c] as f64).abs();
                rhs[i] -= charge[c] / size[c] as f64;
            }
        }
        if dropped > 0.0 {
            diagnostics.push(format!("projected out {dropped:e} of stray charge below the mass floor"));
        }
        let method = match method {
            PoissonMethod::Auto if self.grid.dim() == 1 => PoissonMethod::Flux,
            PoissonMethod::Auto => PoissonMethod::ConjugateGradient,
            m => m,
        };
        let (h, iterations) = match method {
            PoissonMethod::Flux => {
                if self.grid.dim() != 1 {
                    return Err(Error::Unsupported("flux solve is one-dimensional".into()));
                }
                (self.flux_solve(&rhs), 0)
            }
            _ => self.cg_solve(&rhs, cg_tol)?,
        };
        let pairing: f64 = h.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        let dirichlet_energy: f64 = self.edges.iter().map(|e| e.w * (h[e.a] - h[e.b]).powi(2)).sum();
        let norm = match method {
            PoissonMethod::Flux => dirichlet_energy.max(0.0).sqrt(),
            _ => pairing.max(0.0).sqrt(),
        };
        Ok(PoissonSolution { norm, potential: h, dirichlet_energy, iterations, diagnostics })
    }

    /// Along a chain the edge flux is the cumulative charge, so `h' = -F/w`.
    fn flux_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let mut h = vec![0.0; n];
        let mut flux = 0.0;
        let mut e = 0;
        for i in 0..n {
            flux += rhs[i];
            if e < self.edges.len() && self.edges[e].a == i {
                let edge = &self.edges[e];
                h[edge.b] = h[i] - flux / edge.w;
                e += 1;
            } else {
                flux = 0.0;
            }
        }
        self.center(&mut h);
        h
    }

    fn center(&self, h: &mut [f64]) {
        let mut sum = vec![0.0; self.n_components];
        let mut cnt = vec![0usize; self.n_components];
        for (i, v) in h.iter().enumerate() {
            sum[self.component[i]] += v;
            cnt[self.component[i]] += 1;
        }
        for (i, v) in h.iter_mut().enumerate() {
            *v -= sum[self.component[i]] / cnt[self.component[i]] as f64;
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for e in &self.edges {
            let d = e.w * (x[e.a] - x[e.b]);
            out[e.a] += d;
            out[e.b] -= d;
        }
    }

    /// Jacobi-preconditioned CG with per-component mean removal.
    fn cg_solve(&self, rhs: &[f64], tol: f64) -> Result<(Vec<f64>, usize)> {
        let n = self.grid.len();
        let mut diag = vec![0.0; n];
        for e in &self.edges {
            diag[e.a] += e.w;
            diag[e.b] += e.w;
        }
        let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let bnorm = dot(rhs, rhs).sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok((x, 0));
        }
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
        self.center(&mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let max_iter = 20 * n + 100;
        for it in 1..=max_iter {
            self.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            if dot(&r, &r).sqrt() <= tol * bnorm {
                self.center(&mut x);
                return Ok((x, it));
            }
            for k in 0..n {
                z[k] = r[k] * inv[k];
            }
            self.center(&mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(Error::NotConverged(format!("conjugate gradient stalled above relative residual {tol:e}")))
    }
}

fn components(n: usize, edges: &[Edge]) -> (Vec<usize>, usize) {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in edges {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut comp = vec![0; n];
    let mut count = 0;
    for i in 0..n {
        let r = find(&mut parent, i);
        if label[r] == usize::MAX {
            label[r] = count;
            count += 1;
        }
        comp[i] = label[r];
    }
    (comp, count)
}

/// `‖ν‖_{Ḣ⁻¹(μ)}`; `+inf` when `μ`'s support does not connect the charges of `ν`.
pub fn h_minus_one_norm(nu: &SignedMeasure, mu: &DiscreteMeasure, cg_tol: f64) -> Result<f64> {
    Ok(WeightedPoissonProblem::new(nu, mu)?.solve(PoissonMethod::Auto, cg_tol)?.norm)
}

/// `‖p - q‖_{Ḣ⁻¹(p)}`.
pub fn h_minus_one_distance(p: &DiscreteMeasure, q: &DiscreteMeasure, cg_tol: f64) -> Result<f64> {
    h_minus_one_norm(&p.minus(q)?, p, cg_tol)
}

fn atoms_1d(p: &DiscreteMeasure) -> Result<Vec<(f64, f64)>> {
    if p.grid().dim() != 1 {
        return Err(Error::Unsupported("quantile W2 is one-dimensional".into()));
    }
    Ok(p.grid().axis(0).iter().zip(p.weights()).filter(|(_, &w)| w > 0.0).map(|(&x, &w)| (x, w)).collect())
}

/// Exact `W₂` between 1D atomic measures by merging the quantile breakpoints.
pub fn wasserstein2_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    wasserstein2_atoms(atoms_1d(mu)?, atoms_1d(nu)?)
}

/// Exact `W₂` between two lists of `(position, mass)` atoms of equal total mass.
pub fn wasserstein2_atoms(mut a: Vec<(f64, f64)>, mut b: Vec<(f64, f64)>) -> Result<f64> {
    a.retain(|p| p.1 > 0.0);
    b.retain(|p| p.1 > 0.0);
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidMeasure("W2 needs nonempty supports".into()));
    }
    if a.iter().chain(&b).any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::InvalidMeasure("non-finite atom".into()));
    }
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    loop {
        let m = ra.min(rb);
        cost += m * (a[i].0 - b[j].0).powi(2);
        ra -= m;
        rb -= m;
        // The side with less remaining mass moves on; ties advance both.
        let adv_a = ra <= rb;
        let adv_b = rb <= ra;
        if adv_a {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if adv_b {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    Ok(cost.max(0.0).sqrt())
}

/// Right-continuous generalized inverse CDF of 1D atoms.
pub fn quantile(atoms: &[(f64, f64)], u: f64) -> f64 {
    let mut c = 0.0;
    for &(x, w) in atoms {
        c += w;
        if c > u {
            return x;
        }
    }
    atoms.last().map(|a| a.0).unwrap_or(f64::NAN)
}

/// Midpoint rule on `∫₀¹ |F_μ⁻¹(u) - F_ν⁻¹(u)|² du` with `n` nodes.
pub fn wasserstein2_1d_quadrature(mu: &DiscreteMeasure, nu: &DiscreteMeasure, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "n_quantiles", reason: "must be positive".into() });
    }
    let a = atoms_1d(mu)?;
    let b = atoms_1d(nu)?;
    let s: f64 = (0..n)
        .map(|k| {
            let u = (k as f64 + 0.5) / n as f64;
            (quantile(&a, u) - quantile(&b, u)).powi(2)
        })
        .sum();
    Ok((s / n as f64).sqrt())
}

/// Exact `W₂` by the transport linear program; supports of at most [`LP_MAX_ATOMS`] atoms.
pub fn wasserstein2_exact_small(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.grid().dim() != nu.grid().dim() {
        return Err(Error::GridMismatch("dimension mismatch".into()));
    }
    let sa = mu.support();
    let sb = nu.support();
    if sa.len() > LP_MAX_ATOMS || sb.len() > LP_MAX_ATOMS {
        return Err(Error::Unsupported(format!(
            "exact LP limited to {LP_MAX_ATOMS} atoms per side, got {} and {}",
            sa.len(),
            sb.len()
        )));
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = vec![Vec::with_capacity(sb.len()); sa.len()];
    for (ia, &i) in sa.iter().enumerate() {
        for &j in &sb {
            let c: f64 = mu.grid().point(i).iter().zip(nu.grid().point(j)).map(|(x, y)| (x - y) * (x - y)).sum();
            vars[ia].push(lp.add_var(c, (0.0, f64::INFINITY)));
        }
    }
    for (ia, &i) in sa.iter().enumerate() {
        let row: Vec<_> = vars[ia].iter().map(|&v| (v, 1.0)).collect();
        lp.add_constraint(&row[..], ComparisonOp::Eq, mu.weights()[i]);
    }
    // The last column constraint is implied by the others.
    for (jb, &j) in sb.iter().enumerate().take(sb.len() - 1) {
        let col: Vec<_> = vars.iter().map(|r| (r[jb], 1.0)).collect();
        lp.add_constraint(&col[..], ComparisonOp::Eq, nu.weights()[j]);
    }
    let sol = lp.solve().map_err(|e| Error::NotConverged(format!("transport LP: {e}")))?;
    Ok(sol.objective().max(0.0).sqrt())
}

/// `W₂(μ, μ̄) ≤ 2‖μ - μ̄‖_{Ḣ⁻¹(μ)}`.
pub fn w2_h_minus_one_comparison(
    mu: &DiscreteMeasure,
    mu_bar: &DiscreteMeasure,
    cg_tol: f64,
) -> Result<InequalityReport> {
    let lhs = if mu.grid().dim() == 1 { wasserstein2_1d(mu, mu_bar)? } else { wasserstein2_exact_small(mu, mu_bar)? };
    let norm = h_minus_one_distance(mu, mu_bar, cg_tol)?;
    let tol = Tolerance { abs: 0.0, rel: 1e-6 };
    let mut r = InequalityReport::evaluate("w2_hminus1", lhs, 2.0 * norm, tol);
    r.set_term("w2", lhs);
    r.set_term("h_minus_one", norm);
    let h = mu.grid().max_cell_width();
    if lhs < h {
        r.note(format!("W2 = {lhs:.3e} is below the cell width {h:.3e}; atomic discreteness dominates"));
    }
    r.digest_measures(&[mu, mu_bar]);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cell_closed_form() {
        let g = Grid::uniform(&[(0.0, 2.0, 2)]).unwrap();
        let mu = DiscreteMeasure::new(&g, vec![0.5, 0.5]).unwrap();
        let s = 0.3;
        let nu = SignedMeasure::new(&g, vec![s, -s]).unwrap();
        // One edge of weight (½+½)/2 / 1² = ½; flux s; norm² = s² / ½.
        let oracle = (s * s / 0.5f64).sqrt();
        for m in [PoissonMethod::Flux, PoissonMethod::ConjugateGradient] {
            let sol = WeightedPoissonProblem::new(&nu, &mu).unwrap().solve(m, 1e-12).unwrap();
            assert!((sol.norm - oracle).abs() < 1e-12, "{m:?}");
        }
    }

    #[test]
    fn disconnected_support_is_infinite() {
        let g = Grid::uniform(&[(0.0, 4.0, 4)]).unwrap();
        let mu = DiscreteMeasure::new(&g, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let nu = SignedMeasure::new(&g, vec![0.1, 0.0, 0.0, -0.1]).unwrap();
        let sol = WeightedPoissonProblem::new(&nu, &mu).unwrap().solve(PoissonMethod::Auto, 1e-10).unwrap();
        assert!(sol.norm.is_infinite());
        assert!(!sol.diagnostics.is_empty());
        let bad = SignedMeasure::new(&g, vec![0.1, 0.0, 0.0, 0.0]).unwrap();
        assert!(h_minus_one_norm(&bad, &mu, 1e-10).is_err());
    }

    #[test]
    fn atoms_w2() {
        let g = Grid::from_nodes(vec![vec![0.0, 1.0, 2.0, 3.0]]).unwrap();
        let a = DiscreteMeasure::new(&g, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let b = DiscreteMeasure::new(&g, vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        assert!((wasserstein2_1d(&a, &b).unwrap() - 2.0).abs() < 1e-15);
        assert!((wasserstein2_exact_small(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(wasserstein2_1d(&a, &a).unwrap(), 0.0);
        assert!((wasserstein2_1d_quadrature(&a, &b, 1000).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cg_matches_flux_in_1d() {
        let g = Grid::uniform(&[(-3.0, 3.0, 60)]).unwrap();
        let mu = DiscreteMeasure::from_density(&g, |x| (-x[0] * x[0] / 2.0).exp()).unwrap();
        let w: Vec<f64> = (0..60).map(|i| mu.weights()[i] * (g.axis(0)[i]).sin()).collect();
        let mean: f64 = w.iter().sum::<f64>() / 60.0;
        let nu = SignedMeasure::new(&g, w.iter().map(|v| v - mean).collect()).unwrap();
        let p = WeightedPoissonProblem::new(&nu, &mu).unwrap();
        let a = p.solve(PoissonMethod::Flux, 1e-12).unwrap();
        let b = p.solve(PoissonMethod::ConjugateGradient, 1e-12).unwrap();
        assert!((a.norm - b.norm).abs() < 1e-8 * a.norm, "{} vs {}", a.norm, b.norm);
        let pairing: f64 = a.potential.iter().zip(nu.weights()).map(|(x, y)| x * y).sum();
        assert!((pairing - a.dirichlet_energy).abs() < 1e-10 * a.dirichlet_energy.max(1e-300));
    }
}
