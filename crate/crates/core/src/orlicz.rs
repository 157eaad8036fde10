//! Luxemburg norms for the Young pair `θ(t) = eᵗ - 1`, `θ*(s) = s log s - s + 1`, and the
//! log-integrability bounds built on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{InequalityReport, Tolerance};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::{relative_entropy_between, DiscreteMeasure};

/// Relative width at which bisection stops.
pub const BISECTION_WIDTH: f64 = 1e-10;

/// Absolute slack granted to the log-integrability bounds.
pub const BOUND_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Young {
    Theta,
    ThetaStar,
}

impl Young {
    pub fn eval(self, s: f64) -> f64 {
        match self {
            Young::Theta => s.exp_m1(),
            Young::ThetaStar => {
                if s == 0.0 {
                    1.0
                } else {
                    s * s.ln() - s + 1.0
                }
            }
        }
    }
}

/// `∫ Θ(|f|/b) d𝔮`.
pub fn young_integral(f: &[f64], base: &DiscreteMeasure, which: Young, b: f64) -> f64 {
    f.iter().zip(base.weights()).filter(|(_, &q)| q > 0.0).map(|(x, q)| q * which.eval(x.abs() / b)).sum()
}

/// Whether `∫ Θ(|f|/b) d𝔮 ≤ 1`. Monotone in `b` for both Young functions.
fn admissible(f: &[f64], base: &DiscreteMeasure, which: Young, b: f64) -> bool {
    match which {
        Young::Theta => young_integral(f, base, which, b) <= 1.0,
        // ∫θ*(|f|/b) - 1 = (1/b)∫|f|(log|f| - log b - 1): the sign is monotone in b even
        // where the integral itself is not.
        Young::ThetaStar => {
            let (mut mass, mut ent) = (0.0, 0.0);
            for (x, q) in f.iter().zip(base.weights()) {
                let a = x.abs();
                if *q > 0.0 && a > 0.0 {
                    mass += q * a;
                    ent += q * a * a.ln();
                }
            }
            ent - mass * (b.ln() + 1.0) <= 0.0
        }
    }
}

/// `inf{b > 0 : ∫Θ(|f|/b) d𝔮 ≤ 1}` by bisection.
pub fn luxemburg_norm(f: &[f64], base: &DiscreteMeasure, which: Young) -> Result<f64> {
    if f.len() != base.len() {
        return Err(Error::InvalidParameter { name: "f", reason: "length does not match base".into() });
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter { name: "f", reason: "non-finite entry".into() });
    }
    let top = f.iter().zip(base.weights()).filter(|(_, &q)| q > 0.0).map(|(x, _)| x.abs()).fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 1e-8 * top;
    let mut hi = 1e8 * top;
    let mut guard = 0;
    while !admissible(f, base, which, hi) {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::NotConverged("Luxemburg bracket does not close".into()));
        }
    }
    while admissible(f, base, which, lo) {
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Ok(0.0);
        }
    }
    while hi - lo > BISECTION_WIDTH * hi {
        let mid = 0.5 * (lo + hi);
        if admissible(f, base, which, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `∫|fg| d𝔮 ≤ 2‖f‖_θ ‖g‖_{θ*}`.
pub fn orlicz_young_check(f: &[f64], g: &[f64], base: &DiscreteMeasure) -> Result<InequalityReport> {
    if g.len() != base.len() {
        return Err(Error::InvalidParameter { name: "g", reason: "length does not match base".into() });
    }
    let lhs: f64 = f.iter().zip(g).zip(base.weights()).map(|((a, b), q)| q * (a * b).abs()).sum();
    let nf = luxemburg_norm(f, base, Young::Theta)?;
    let ng = luxemburg_norm(g, base, Young::ThetaStar)?;
    let mut r = InequalityReport::evaluate("orlicz_young", lhs, 2.0 * nf * ng, Tolerance { abs: BOUND_TOL, rel: 0.0 });
    r.set_term("norm_theta", nf);
    r.set_term("norm_theta_star", ng);
    r.digest_measures(&[base]);
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    /// With the `𝔮{h ≥ 1}` factors.
    B1,
    B1NoMeasure,
    /// Needs `p ∧ q ≤ 1`.
    Final,
    /// Needs `𝔮{h ≥ 1} ∈ {0, 1}`.
    Extreme,
}

impl BoundVariant {
    pub const ALL: [BoundVariant; 4] =
        [BoundVariant::B1, BoundVariant::B1NoMeasure, BoundVariant::Final, BoundVariant::Extreme];

    pub fn report_name(self) -> &'static str {
        match self {
            BoundVariant::B1 => "bound_l1",
            BoundVariant::B1NoMeasure => "bound_l1_no_measure",
            BoundVariant::Final => "final_bound_l1",
            BoundVariant::Extreme => "extreme_no_measure",
        }
    }
}

/// `𝔮`, a positive test function `h`, a `𝔭 ≪ 𝔮`, and exponents with `h ∈ L^q`, `h⁻¹ ∈ L^p`.
#[derive(Clone, Debug)]
pub struct OrliczContext {
    base: DiscreteMeasure,
    h: Vec<f64>,
    p_meas: DiscreteMeasure,
    p: f64,
    q: f64,
    entropy: f64,
}

impl OrliczContext {
    pub fn new(base: DiscreteMeasure, h: Vec<f64>, p_meas: DiscreteMeasure, p: f64, q: f64) -> Result<Self> {
        if h.len() != base.len() {
            return Err(Error::InvalidParameter { name: "h", reason: "length does not match base".into() });
        }
        for (i, (&x, &w)) in h.iter().zip(base.weights()).enumerate() {
            if w > 0.0 && !(x.is_finite() && x > 0.0) {
                return Err(Error::InvalidParameter { name: "h", reason: format!("h[{i}] = {x} must be positive") });
            }
        }
        for (name, v) in [("p", p), ("q", q)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter { name, reason: format!("{v} must be positive") });
            }
        }
        let entropy = relative_entropy_between(&p_meas, &base)?;
        if !entropy.is_finite() {
            return Err(Error::InvalidMeasure("p_meas is not absolutely continuous w.r.t. base".into()));
        }
        Ok(OrliczContext { base, h, p_meas, p, q, entropy })
    }

    /// Random instance: `𝔮`, `𝔭` with full support, `log h` uniform in `[-spread, spread]`.
    pub fn random(seed: u64, n: usize, spread: f64, p: f64, q: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::uniform(&[(0.0, 1.0, n)])?;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.random_range(0.05..1.0)).collect() };
        let base = DiscreteMeasure::normalized(&grid, draw(&mut rng))?;
        let p_meas = DiscreteMeasure::normalized(&grid, draw(&mut rng))?;
        let h = (0..n).map(|_| rng.random_range(-spread..=spread).exp()).collect();
        Self::new(base, h, p_meas, p, q)
    }

    pub fn base(&self) -> &DiscreteMeasure {
        &self.base
    }
    pub fn h(&self) -> &[f64] {
        &self.h
    }
    pub fn p_meas(&self) -> &DiscreteMeasure {
        &self.p_meas
    }
    pub fn exponents(&self) -> (f64, f64) {
        (self.p, self.q)
    }
    /// `H(𝔭|𝔮)`.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    /// `d𝔭/d𝔮` on the support of `𝔮`.
    pub fn density(&self) -> Vec<f64> {
        self.p_meas.weights().iter().zip(self.base.weights()).map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 }).collect()
    }

    fn q_int(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.h.iter().zip(self.base.weights()).filter(|(_, &w)| w > 0.0).map(|(&x, w)| w * f(x)).sum()
    }

    /// `‖h‖_{L^q(𝔮)}`
    pub fn norm_h(&self) -> f64 {
        self.q_int(|x| x.powf(self.q)).powf(1.0 / self.q)
    }

    /// `‖h⁻¹‖_{L^p(𝔮)}`
    pub fn norm_h_inv(&self) -> f64 {
        self.q_int(|x| x.powf(-self.p)).powf(1.0 / self.p)
    }

    /// `𝔮{h ≥ 1}`
    pub fn lambda(&self) -> f64 {
        self.q_int(|x| if x >= 1.0 { 1.0 } else { 0.0 })
    }

    /// `∫|log h| d𝔭`
    pub fn lhs(&self) -> f64 {
        self.h.iter().zip(self.p_meas.weights()).filter(|(_, &w)| w > 0.0).map(|(x, w)| w * x.ln().abs()).sum()
    }

    fn is_extreme(&self) -> Option<bool> {
        let l = self.lambda();
        if l == 0.0 || (1.0 - l).abs() <= 1e-15 {
            Some(l > 0.5)
        } else {
            None
        }
    }

    pub fn applicable(&self, v: BoundVariant) -> bool {
        match v {
            BoundVariant::Final => self.p.min(self.q) <= 1.0,
            BoundVariant::Extreme => self.is_extreme().is_some(),
            _ => true,
        }
    }

    /// Right-hand side of the chosen bound.
    pub fn bound(&self, v: BoundVariant) -> Result<f64> {
        let (p, q) = (self.p, self.q);
        let m = p.min(q);
        let pref = 2.0 * (self.entropy - 1.0).exp();
        let (nh, ni) = (self.norm_h(), self.norm_h_inv());
        match v {
            BoundVariant::B1 => {
                let lam = self.lambda();
                // A vanishing set contributes nothing, whatever the exponent.
                let part =
                    |mass: f64, e: f64, norm: f64| if mass > 0.0 { mass.powf(1.0 - 1.0 / e) * norm } else { 0.0 };
                let inner = part(lam, q, nh) + part(1.0 - lam, p, ni);
                Ok(pref * (1.0 / (1.0f64.min(m))).max(inner.log2()))
            }
            BoundVariant::B1NoMeasure => Ok(pref / m * 1.0f64.max((nh.powf(m) + ni.powf(m)).log2())),
            BoundVariant::Final => {
                if m > 1.0 {
                    return Err(Error::Precondition(format!("final bound needs p ∧ q ≤ 1, got {m}")));
                }
                Ok(pref * (1.0 / m + ((nh + ni) / 2.0).log2().max(0.0)))
            }
            BoundVariant::Extreme => match self.is_extreme() {
                Some(true) => Ok(pref * (1.0 / m).max(nh.log2())),
                Some(false) => Ok(pref * (1.0 / m).max(ni.log2())),
                None => Err(Error::Precondition(format!(
                    "extreme bound needs q{{h ≥ 1}} in {{0, 1}}, got {}",
                    self.lambda()
                ))),
            },
        }
    }
}

/// `∫|log h| d𝔭 ≤ rhs` for one variant.
pub fn log_integrability_bound(ctx: &OrliczContext, variant: BoundVariant) -> Result<InequalityReport> {
    let rhs = ctx.bound(variant)?;
    let mut r =
        InequalityReport::evaluate(variant.report_name(), ctx.lhs(), rhs, Tolerance { abs: BOUND_TOL, rel: 0.0 });
    r.set_term("entropy", ctx.entropy);
    r.set_term("p", ctx.p);
    r.set_term("q", ctx.q);
    r.set_term("norm_h_q", ctx.norm_h());
    r.set_term("norm_h_inv_p", ctx.norm_h_inv());
    r.set_term("lambda", ctx.lambda());
    r.digest_measures(&[&ctx.base, &ctx.p_meas]);
    Ok(r)
}

/// Every variant whose precondition holds.
pub fn all_bounds(ctx: &OrliczContext) -> Result<Vec<InequalityReport>> {
    let mut out = Vec::new();
    for v in BoundVariant::ALL {
        if ctx.applicable(v) {
            out.push(log_integrability_bound(ctx, v)?);
        }
    }
    let find = |n: &str| out.iter().find(|r| r.name == n).map(|r| r.pass);
    if let (Some(false), Some(true)) = (find("final_bound_l1"), find("bound_l1_no_measure")) {
        if let Some(r) = out.iter_mut().find(|r| r.name == "final_bound_l1") {
            r.note("final bound fails where the measure-free bound passes");
        }
    }
    Ok(out)
}
