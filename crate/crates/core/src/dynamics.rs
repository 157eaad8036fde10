//! Entropic interpolations, the dynamic cost representation, Grönwall decay, and small-time limits.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{corrector_norm_sq, measures_digest, InequalityReport, Tolerance};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::{apply_semigroup, GibbsKernel};
use crate::measures::DiscreteMeasure;
use crate::numerics::{gradient, support_mask};
use crate::schrodinger::{reference_problem, solve, SchrodingerSolution, SolveOptions};
use crate::sobolev::{wasserstein2_1d, wasserstein2_atoms};

/// Relative gap allowed by [`dynamic_cost_check`].
pub const BBS_GAP: f64 = 0.02;

/// Smallest number of time slices accepted by [`dynamic_cost_check`].
pub const MIN_SLICES: usize = 16;

/// `log P_t e^{pot}` with the solution's reference diffusion; `t = 0` returns `pot`.
fn log_propagate(sol: &SchrodingerSolution, pot: &[f64], t: f64) -> Result<(Vec<f64>, Vec<String>)> {
    if t == 0.0 {
        return Ok((pot.to_vec(), Vec::new()));
    }
    if (t - sol.time()).abs() <= 1e-15 * sol.time() {
        return Ok((apply_semigroup(sol.kernel(), pot, sol.reference())?, Vec::new()));
    }
    let k = GibbsKernel::new(sol.grid(), sol.kernel().kind().with_time(t))?;
    Ok((apply_semigroup(&k, pot, sol.reference())?, k.warnings().to_vec()))
}

/// `ρ_t = P_t f · P_{T-t} g · 𝔪` as cell masses, together with `log P_t f`.
fn slice(sol: &SchrodingerSolution, t: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<String>)> {
    let (lf, mut w1) = log_propagate(sol, sol.log_f(), t)?;
    let (lg, w2) = log_propagate(sol, sol.log_g(), sol.time() - t)?;
    w1.extend(w2);
    let rho = lf.iter().zip(&lg).zip(sol.reference().log_mass()).map(|((a, b), m)| (a + b + m).exp()).collect();
    Ok((rho, lf, w1))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropicInterpolation {
    pub times: Vec<f64>,
    /// Cell masses of `ρ_t`, one vector per time.
    pub densities: Vec<Vec<f64>>,
    pub source_digest: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EntropicInterpolation {
    /// `max_t |Σ ρ_t - 1|`.
    pub fn max_mass_defect(&self) -> f64 {
        self.densities.iter().map(|d| (d.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, grid: &Grid, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut head = vec!["t".to_string()];
        head.extend((0..grid.dim()).map(|a| ["x", "y", "z"].get(a).map_or(format!("x{a}"), |s| s.to_string())));
        head.push("mass".into());
        wr.write_record(&head)?;
        for (t, d) in self.times.iter().zip(&self.densities) {
            for (i, m) in d.iter().enumerate() {
                let mut row = vec![format!("{t:?}")];
                row.extend(grid.point(i).iter().map(|x| format!("{x:?}")));
                row.push(format!("{m:?}"));
                wr.write_record(&row)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// The bridge marginals at `n_times` equally spaced times in `[0, T]`.
pub fn interpolate(sol: &SchrodingerSolution, n_times: usize) -> Result<EntropicInterpolation> {
    sol.require_converged()?;
    if n_times < 2 {
        return Err(Error::InvalidParameter { name: "n_times", reason: "need at least the two endpoints".into() });
    }
    let t_end = sol.time();
    let times: Vec<f64> = (0..n_times).map(|k| t_end * k as f64 / (n_times - 1) as f64).collect();
    let slices: Vec<_> = times.par_iter().map(|&t| slice(sol, t)).collect::<Result<_>>()?;
    let mut warnings: Vec<String> = Vec::new();
    let mut densities = Vec::with_capacity(n_times);
    for (rho, _, w) in slices {
        for s in w {
            if !warnings.contains(&s) {
                warnings.push(s);
            }
        }
        densities.push(rho);
    }
    Ok(EntropicInterpolation { times, densities, source_digest: measures_digest(&[sol.mu(), sol.nu()]), warnings })
}

/// `α(t) = ∫|∇log P_t f|² dρ_t`; at `t = T` the integral is against `ν` itself.
fn alpha(sol: &SchrodingerSolution, t: f64) -> Result<(f64, Vec<String>)> {
    if t == sol.time() {
        let lf = apply_semigroup(sol.kernel(), sol.log_f(), sol.reference())?;
        return Ok((corrector_norm_sq(sol.grid(), &lf, sol.nu().weights()), Vec::new()));
    }
    let (rho, lf, w) = slice(sol, t)?;
    Ok((corrector_norm_sq(sol.grid(), &lf, &rho), w))
}

/// `C_T = H(ν|𝔪) + ∫₀ᵀ α(t) dt` with the midpoint rule on `n_times` slices.
pub fn dynamic_cost_check(sol: &SchrodingerSolution, n_times: usize) -> Result<InequalityReport> {
    sol.require_converged()?;
    if n_times < MIN_SLICES {
        return Err(Error::InvalidParameter { name: "n_times", reason: format!("at least {MIN_SLICES} slices") });
    }
    let t_end = sol.time();
    let dt = t_end / n_times as f64;
    let vals: Vec<_> =
        (0..n_times).into_par_iter().map(|k| alpha(sol, (k as f64 + 0.5) * dt)).collect::<Result<_>>()?;
    let mut integral = 0.0;
    let mut warned = false;
    for (a, w) in &vals {
        integral += a * dt;
        warned |= !w.is_empty();
    }
    let ct = sol.schrodinger_cost();
    let quad = sol.entropy_nu() + integral;
    let gap = (quad - ct).abs() / ct.abs().max(1e-12);
    let mut r = InequalityReport::evaluate("bbs_identity", gap, BBS_GAP, Tolerance { abs: 0.0, rel: 0.0 });
    r.set_term("ct", ct);
    r.set_term("h_nu", sol.entropy_nu());
    r.set_term("integral", integral);
    r.set_term("quadrature", quad);
    r.set_term("n_times", n_times as f64);
    if warned {
        r.note("under-resolved: the bandwidth guard fires at the smallest slice times");
    }
    r.digest_measures(&[sol.mu(), sol.nu()]);
    Ok(r)
}

/// `α` on the mesh `t_k = kT/n`, `k = 1..=n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GronwallCurve {
    pub kappa: f64,
    pub times: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `e^{2κt} α(t)`, non-increasing in theory.
    pub scaled: Vec<f64>,
    /// Largest `(s_{k+1} - s_k)/s_k` over the mesh (≤ 0 when monotone).
    pub max_relative_increase: f64,
    pub warnings: Vec<String>,
}

pub fn gronwall_curve(sol: &SchrodingerSolution, kappa: f64, n_times: usize) -> Result<GronwallCurve> {
    sol.require_converged()?;
    if n_times < 2 {
        return Err(Error::InvalidParameter { name: "n_times", reason: "need at least two mesh points".into() });
    }
    let t_end = sol.time();
    let times: Vec<f64> =
        (1..=n_times).map(|k| if k == n_times { t_end } else { t_end * k as f64 / n_times as f64 }).collect();
    let vals: Vec<_> = times.par_iter().map(|&t| alpha(sol, t)).collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let mut alphas = Vec::with_capacity(n_times);
    for (a, w) in vals {
        alphas.push(a);
        for s in w {
            if !warnings.contains(&s) {
                warnings.push(s);
            }
        }
    }
    let scaled: Vec<f64> = times.iter().zip(&alphas).map(|(t, a)| (2.0 * kappa * t).exp() * a).collect();
    let max_relative_increase = scaled
        .windows(2)
        .map(|w| {
            if w[0] > 0.0 {
                (w[1] - w[0]) / w[0]
            } else if w[1] > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GronwallCurve { kappa, times, alpha: alphas, scaled, max_relative_increase, warnings })
}

/// `α(T) ≤ e^{-2κ(T-t)} α(t)` at every mesh point.
pub fn gronwall_decay_check(sol: &SchrodingerSolution, kappa: f64, n_times: usize) -> Result<InequalityReport> {
    let c = gronwall_curve(sol, kappa, n_times)?;
    let t_end = sol.time();
    let lhs = *c.alpha.last().expect("mesh is nonempty");
    let rhs =
        c.times.iter().zip(&c.alpha).map(|(t, a)| (-2.0 * kappa * (t_end - t)).exp() * a).fold(f64::INFINITY, f64::min);
    let mut r = InequalityReport::evaluate("gronwall_decay", lhs, rhs, Tolerance::default());
    r.set_term("kappa", kappa);
    r.set_term("n_times", n_times as f64);
    r.set_term("max_relative_increase", c.max_relative_increase);
    for w in c.warnings {
        r.note(w);
    }
    r.digest_measures(&[sol.mu(), sol.nu()]);
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallTimeRow {
    pub time: f64,
    /// `T·C_T(μ,ν)`
    pub scaled_cost: f64,
    /// `W₂²(μ,ν)/4`
    pub target: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub bandwidth_ok: bool,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallTimeTable {
    pub kappa: f64,
    pub rows: Vec<SmallTimeRow>,
    /// Gap strictly decreasing along the list.
    pub monotone_gap: bool,
}

fn check_times(t_list: &[f64]) -> Result<()> {
    if t_list.is_empty() || t_list.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidParameter { name: "T_list", reason: "need positive finite times".into() });
    }
    Ok(())
}

/// `T·C_T` against the quadratic transport limit `W₂²/4` along `t_list`.
pub fn small_time_cost_curve(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    t_list: &[f64],
    kappa: f64,
    opts: &SolveOptions,
) -> Result<SmallTimeTable> {
    check_times(t_list)?;
    let w2 = wasserstein2_1d(mu, nu)?;
    let target = 0.25 * w2 * w2;
    let rows: Vec<SmallTimeRow> = t_list
        .par_iter()
        .map(|&t| {
            let (k, r) = reference_problem(mu.grid(), t, kappa)?;
            let sol = solve(mu, nu, &k, &r, opts)?;
            let scaled_cost = t * sol.schrodinger_cost();
            let gap = (scaled_cost - target).abs();
            Ok(SmallTimeRow {
                time: t,
                scaled_cost,
                target,
                gap,
                relative_gap: if target > 0.0 { gap / target } else { gap },
                bandwidth_ok: k.bandwidth_ok(),
                converged: sol.converged(),
                iterations: sol.iterations(),
            })
        })
        .collect::<Result<_>>()?;
    let monotone_gap = rows.windows(2).all(|w| w[1].gap < w[0].gap);
    Ok(SmallTimeTable { kappa, rows, monotone_gap })
}

/// Schrödinger map and a reference Brenier map on the support of `μ` (1D).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportMapPair {
    pub time: f64,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// `x - 2T ∂ₓφ^T(x)`
    pub schrodinger_map: Vec<f64>,
    pub brenier_map: Vec<f64>,
    /// `‖S - B‖_{L²(μ)}`
    pub l2_error: f64,
    /// `W₂(S_# μ, ν)`
    pub pushforward_w2: f64,
}

/// `x ↦ F_ν⁻¹(F_μ(x))` at cell centres, each cell's mass spread uniformly over its width.
pub fn brenier_map_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Vec<f64>> {
    if mu.grid().dim() != 1 || nu.grid().dim() != 1 {
        return Err(Error::Unsupported("Brenier maps are computed in 1D only".into()));
    }
    let gy = nu.grid();
    let mut cum = Vec::with_capacity(gy.len() + 1);
    let mut c = 0.0;
    cum.push(0.0);
    for w in nu.weights() {
        c += w;
        cum.push(c);
    }
    let inv = |u: f64| -> f64 {
        let j = match cum[1..].iter().position(|&v| v >= u) {
            Some(j) => j,
            None => gy.len() - 1,
        };
        let (x, h, w) = (gy.axis(0)[j], gy.axis_widths(0)[j], nu.weights()[j]);
        let frac = if w > 0.0 { ((u - cum[j]) / w).clamp(0.0, 1.0) } else { 0.5 };
        x - 0.5 * h + frac * h
    };
    let mut acc = 0.0;
    Ok(mu
        .weights()
        .iter()
        .map(|w| {
            let u = acc + 0.5 * w;
            acc += w;
            inv(u)
        })
        .collect())
}

/// Builds the map pair for one solved problem.
pub fn transport_maps(sol: &SchrodingerSolution, brenier: &[f64]) -> Result<TransportMapPair> {
    sol.require_converged()?;
    let g = sol.grid();
    if g.dim() != 1 {
        return Err(Error::Unsupported("transport maps are compared in 1D only".into()));
    }
    if brenier.len() != g.len() {
        return Err(Error::InvalidParameter { name: "brenier", reason: "length does not match grid".into() });
    }
    let active = support_mask(sol.mu().weights());
    let grad = gradient(g, sol.log_f(), &active);
    let t = sol.time();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut smap = Vec::new();
    let mut bmap = Vec::new();
    for i in (0..g.len()).filter(|&i| active[i]) {
        let x = g.axis(0)[i];
        points.push(x);
        weights.push(sol.mu().weights()[i]);
        smap.push(x - 2.0 * t * grad[i][0]);
        bmap.push(brenier[i]);
    }
    let total: f64 = weights.iter().sum();
    let l2 = weights.iter().zip(smap.iter().zip(&bmap)).map(|(w, (s, b))| w * (s - b).powi(2)).sum::<f64>() / total;
    let pushed: Vec<(f64, f64)> = smap.iter().zip(&weights).map(|(&s, &w)| (s, w / total)).collect();
    let target: Vec<(f64, f64)> = g.axis(0).iter().copied().zip(sol.nu().weights().iter().copied()).collect();
    Ok(TransportMapPair {
        time: t,
        points,
        weights,
        schrodinger_map: smap,
        brenier_map: bmap,
        l2_error: l2.sqrt(),
        pushforward_w2: wasserstein2_atoms(pushed, target)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientRow {
    pub time: f64,
    pub l2_error: f64,
    pub pushforward_w2: f64,
    pub bandwidth_ok: bool,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientTable {
    pub kappa: f64,
    pub rows: Vec<GradientRow>,
    pub maps: Vec<TransportMapPair>,
    /// Error strictly decreasing along the list.
    pub decreasing: bool,
}

/// Schrödinger map vs Brenier map along `t_list`; the quantile map is used when `brenier` is `None`.
pub fn gradient_convergence_experiment(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    t_list: &[f64],
    kappa: f64,
    brenier: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<GradientTable> {
    check_times(t_list)?;
    let oracle = match brenier {
        Some(b) => b.to_vec(),
        None => brenier_map_1d(mu, nu)?,
    };
    let oracle = Arc::new(oracle);
    let out: Vec<(GradientRow, TransportMapPair)> = t_list
        .par_iter()
        .map(|&t| {
            let (k, r) = reference_problem(mu.grid(), t, kappa)?;
            let sol = solve(mu, nu, &k, &r, opts)?;
            sol.require_converged()?;
            let m = transport_maps(&sol, &oracle)?;
            let row = GradientRow {
                time: t,
                l2_error: m.l2_error,
                pushforward_w2: m.pushforward_w2,
                bandwidth_ok: k.bandwidth_ok(),
                converged: sol.converged(),
            };
            Ok((row, m))
        })
        .collect::<Result<_>>()?;
    let (rows, maps): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    let decreasing = rows.windows(2).all(|w: &[GradientRow]| w[1].l2_error < w[0].l2_error);
    Ok(GradientTable { kappa, rows, maps, decreasing })
}
