//! Transition kernels of the reference diffusion `dX = -∇U dt + √2 dB` and their semigroups.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};
use crate::grid::Grid;
use crate::measures::{ReferenceKind, ReferenceMeasure};
use crate::numerics::log_sum_exp_pair;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `U = 0`, density against Lebesgue.
    Heat { time: f64 },
    /// `U = κ|x|²/2`, density against `N(0, κ⁻¹I)` in both variables.
    OrnsteinUhlenbeck { time: f64, kappa: f64 },
}

impl KernelKind {
    pub fn time(&self) -> f64 {
        match *self {
            KernelKind::Heat { time } | KernelKind::OrnsteinUhlenbeck { time, .. } => time,
        }
    }

    /// Curvature lower bound of the reference space (0 for the heat kernel).
    pub fn kappa(&self) -> f64 {
        match *self {
            KernelKind::Heat { .. } => 0.0,
            KernelKind::OrnsteinUhlenbeck { kappa, .. } => kappa,
        }
    }

    pub fn reference_kind(&self) -> ReferenceKind {
        match *self {
            KernelKind::Heat { .. } => ReferenceKind::Lebesgue,
            KernelKind::OrnsteinUhlenbeck { kappa, .. } => ReferenceKind::Gaussian { kappa },
        }
    }

    pub fn with_time(&self, time: f64) -> Self {
        match *self {
            KernelKind::Heat { .. } => KernelKind::Heat { time },
            KernelKind::OrnsteinUhlenbeck { kappa, .. } => KernelKind::OrnsteinUhlenbeck { time, kappa },
        }
    }

    /// OU for `κ > 0`, heat for `κ = 0`.
    pub fn for_curvature(time: f64, kappa: f64) -> Self {
        if kappa == 0.0 {
            KernelKind::Heat { time }
        } else {
            KernelKind::OrnsteinUhlenbeck { time, kappa }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Heat { .. } => "heat",
            KernelKind::OrnsteinUhlenbeck { .. } => "ou",
        }
    }
}

fn check_points(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidParameter { name: "point", reason: "dimension mismatch".into() });
    }
    Ok(())
}

pub fn log_heat_kernel(x: &[f64], y: &[f64], t: f64) -> Result<f64> {
    positive("T", t)?;
    check_points(x, y)?;
    let d = x.len() as f64;
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(-0.5 * d * (4.0 * PI * t).ln() - r2 / (4.0 * t))
}

/// `(4πT)^{-d/2} exp(-|x-y|²/(4T))`.
pub fn heat_kernel(x: &[f64], y: &[f64], t: f64) -> Result<f64> {
    log_heat_kernel(x, y, t).map(f64::exp)
}

pub fn log_ou_kernel(x: &[f64], y: &[f64], t: f64, kappa: f64) -> Result<f64> {
    positive("T", t)?;
    positive("kappa", kappa)?;
    check_points(x, y)?;
    let d = x.len() as f64;
    let xx: f64 = x.iter().map(|a| a * a).sum();
    let yy: f64 = y.iter().map(|a| a * a).sum();
    let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok(ou_log_entry(d, xx, yy, xy, t, kappa))
}

/// OU transition density against `N(0, κ⁻¹I) ⊗ N(0, κ⁻¹I)`.
pub fn ou_kernel(x: &[f64], y: &[f64], t: f64, kappa: f64) -> Result<f64> {
    log_ou_kernel(x, y, t, kappa).map(f64::exp)
}

#[inline]
fn ou_log_entry(d: f64, xx: f64, yy: f64, xy: f64, t: f64, kappa: f64) -> f64 {
    let one_minus = -(-2.0 * kappa * t).exp_m1();
    let denom = (2.0 / kappa) * (2.0 * kappa * t).exp_m1();
    -0.5 * d * one_minus.ln() - (xx - 2.0 * (kappa * t).exp() * xy + yy) / denom
}

/// `E_{2κ}(t) = ∫₀ᵗ e^{2κs} ds`.
pub fn curvature_factor(kappa: f64, t: f64) -> Result<f64> {
    positive("t", t)?;
    if !kappa.is_finite() {
        return Err(Error::InvalidParameter { name: "kappa", reason: "must be finite".into() });
    }
    if kappa == 0.0 {
        return Ok(t);
    }
    Ok((2.0 * kappa * t).exp_m1() / (2.0 * kappa))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureFactor {
    pub kappa: f64,
    pub t: f64,
    pub value: f64,
}

impl CurvatureFactor {
    pub fn new(kappa: f64, t: f64) -> Result<Self> {
        Ok(CurvatureFactor { kappa, t, value: curvature_factor(kappa, t)? })
    }
}

/// Dense symmetric log-kernel `log p_T(x_i, x_j)` on one grid.
#[derive(Clone, Debug)]
pub struct GibbsKernel {
    grid: Grid,
    kind: KernelKind,
    log_matrix: Arc<[f64]>,
    warnings: Vec<String>,
}

impl GibbsKernel {
    pub fn new(grid: &Grid, kind: KernelKind) -> Result<Self> {
        let t = positive("T", kind.time())?;
        let n = grid.len();
        let d = grid.dim() as f64;
        let mut m = vec![0.0; n * n];
        let entry: Box<dyn Fn(usize, usize) -> f64> = match kind {
            KernelKind::Heat { .. } => {
                let c = -0.5 * d * (4.0 * PI * t).ln();
                Box::new(move |i, j| c - grid.sq_dist(i, j) / (4.0 * t))
            }
            KernelKind::OrnsteinUhlenbeck { kappa, .. } => {
                positive("kappa", kappa)?;
                Box::new(move |i, j| ou_log_entry(d, grid.sq_norm(i), grid.sq_norm(j), grid.dot(i, j), t, kappa))
            }
        };
        for i in 0..n {
            for j in i..n {
                let v = entry(i, j);
                m[i * n + j] = v;
                m[j * n + i] = v;
            }
        }
        let mut warnings = Vec::new();
        let h = grid.max_cell_width();
        if (2.0 * t).sqrt() < 2.0 * h {
            warnings.push(format!(
                "bandwidth guard: sqrt(2T) = {:.3e} is below twice the largest cell width {:.3e}",
                (2.0 * t).sqrt(),
                h
            ));
        }
        Ok(GibbsKernel { grid: grid.clone(), kind, log_matrix: m.into(), warnings })
    }

    pub fn heat(grid: &Grid, time: f64) -> Result<Self> {
        Self::new(grid, KernelKind::Heat { time })
    }

    pub fn ornstein_uhlenbeck(grid: &Grid, time: f64, kappa: f64) -> Result<Self> {
        Self::new(grid, KernelKind::OrnsteinUhlenbeck { time, kappa })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn time(&self) -> f64 {
        self.kind.time()
    }

    pub fn kappa(&self) -> f64 {
        self.kind.kappa()
    }

    pub fn curvature(&self) -> f64 {
        curvature_factor(self.kappa(), self.time()).expect("time validated at construction")
    }

    pub fn log_matrix(&self) -> &[f64] {
        &self.log_matrix
    }

    pub(crate) fn shared_matrix(&self) -> Arc<[f64]> {
        self.log_matrix.clone()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.len();
        &self.log_matrix[i * n..(i + 1) * n]
    }

    pub fn log_entry(&self, i: usize, j: usize) -> f64 {
        self.log_matrix[i * self.grid.len() + j]
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn bandwidth_ok(&self) -> bool {
        self.warnings.is_empty()
    }

    /// The kernel must be paired with its own reference kind, on the same grid.
    pub fn check_reference(&self, reference: &ReferenceMeasure) -> Result<()> {
        self.grid.ensure_compatible(reference.grid(), "kernel vs reference")?;
        if reference.kind() != self.kind.reference_kind() {
            return Err(Error::Precondition(format!(
                "{} kernel requires reference {:?}, got {:?}",
                self.kind.name(),
                self.kind.reference_kind(),
                reference.kind()
            )));
        }
        Ok(())
    }

    /// `max_i |Σ_j p_T(x_i,x_j) 𝔪_j - 1|`.
    pub fn row_mass_defect(&self, reference: &ReferenceMeasure) -> Result<f64> {
        let ones = vec![0.0; self.grid.len()];
        let lp = apply_semigroup(self, &ones, reference)?;
        Ok(lp.iter().map(|v| v.exp_m1().abs()).fold(0.0, f64::max))
    }
}

/// `log P_T e^{log_f}` evaluated at every cell.
pub fn apply_semigroup(k: &GibbsKernel, log_f: &[f64], reference: &ReferenceMeasure) -> Result<Vec<f64>> {
    k.check_reference(reference)?;
    if log_f.len() != k.grid.len() {
        return Err(Error::InvalidParameter { name: "log_f", reason: "length does not match grid".into() });
    }
    if log_f.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::InvalidParameter { name: "log_f", reason: "NaN or +inf entry".into() });
    }
    if log_f.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::InvalidParameter { name: "log_f", reason: "all entries are -inf".into() });
    }
    let b: Vec<f64> = log_f.iter().zip(reference.log_mass()).map(|(f, m)| f + m).collect();
    Ok((0..k.grid.len()).map(|i| log_sum_exp_pair(k.row(i), &b)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_normalization_point() {
        let v = heat_kernel(&[0.3], &[0.3], 1.0 / (4.0 * PI)).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert!(heat_kernel(&[0.0], &[0.0], 0.0).is_err());
        assert!(ou_kernel(&[0.0], &[0.0], 1.0, -1.0).is_err());
    }

    #[test]
    fn ou_at_origin() {
        let (t, k) = (0.3, 1.7);
        let v = ou_kernel(&[0.0, 0.0], &[0.0, 0.0], t, k).unwrap();
        assert!((v - 1.0 / (1.0 - (-2.0 * k * t).exp())).abs() < 1e-12);
    }

    #[test]
    fn curvature_values() {
        assert_eq!(curvature_factor(0.0, 0.7).unwrap(), 0.7);
        let e = 1f64.exp();
        assert!((curvature_factor(1.0, 1.0).unwrap() - (e * e - 1.0) / 2.0).abs() < 1e-14);
        assert!((curvature_factor(-1.0, 1.0).unwrap() - (1.0 - (-2f64).exp()) / 2.0).abs() < 1e-15);
        assert!(curvature_factor(1.0, 0.0).is_err());
    }

    #[test]
    fn kernel_is_symmetric_and_stochastic() {
        let g = Grid::uniform(&[(-8.0, 8.0, 200)]).unwrap();
        let k = GibbsKernel::ornstein_uhlenbeck(&g, 0.5, 1.0).unwrap();
        let r = ReferenceMeasure::gaussian(&g, 1.0).unwrap();
        for i in 0..200 {
            for j in 0..200 {
                assert_eq!(k.log_entry(i, j), k.log_entry(j, i));
            }
        }
        // Rows near the box edge lose mass outside the grid; check the interior.
        let lp = apply_semigroup(&k, &vec![0.0; 200], &r).unwrap();
        for i in 50..150 {
            assert!(lp[i].abs() < 1e-4, "row {i}: {}", lp[i]);
        }
        assert!(k.check_reference(&ReferenceMeasure::lebesgue(&g)).is_err());
    }

    #[test]
    fn bandwidth_guard_warns() {
        let g = Grid::uniform(&[(0.0, 1.0, 10)]).unwrap();
        assert!(!GibbsKernel::heat(&g, 1e-4).unwrap().bandwidth_ok());
        assert!(GibbsKernel::heat(&g, 0.1).unwrap().bandwidth_ok());
    }

    #[test]
    fn semigroup_rejects_empty_input() {
        let g = Grid::uniform(&[(0.0, 1.0, 4)]).unwrap();
        let k = GibbsKernel::heat(&g, 0.1).unwrap();
        let r = ReferenceMeasure::lebesgue(&g);
        assert!(apply_semigroup(&k, &[f64::NEG_INFINITY; 4], &r).is_err());
        assert!(apply_semigroup(&k, &[0.0; 3], &r).is_err());
    }
}
