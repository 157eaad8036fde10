//! Discrete measures on grids: entropies, Fisher information, moments, CSV I/O.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};
use crate::grid::Grid;
use crate::numerics::{gradient_sq_norm, xlogx, MASS_FLOOR};

/// Tolerance on total mass for probability measures.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceKind {
    Lebesgue,
    /// Standard Gaussian `N(0, κ⁻¹ I)`.
    Gaussian {
        kappa: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceMeasure {
    grid: Grid,
    kind: ReferenceKind,
    cell_mass: Vec<f64>,
    log_mass: Vec<f64>,
}

impl ReferenceMeasure {
    pub fn lebesgue(grid: &Grid) -> Self {
        let cell_mass = grid.volumes().to_vec();
        let log_mass = cell_mass.iter().map(|m| m.ln()).collect();
        ReferenceMeasure { grid: grid.clone(), kind: ReferenceKind::Lebesgue, cell_mass, log_mass }
    }

    /// Analytic density times cell volume, not renormalized on the grid.
    pub fn gaussian(grid: &Grid, kappa: f64) -> Result<Self> {
        positive("kappa", kappa)?;
        let d = grid.dim() as f64;
        let log_norm = 0.5 * d * (kappa / (2.0 * std::f64::consts::PI)).ln();
        let log_mass: Vec<f64> =
            (0..grid.len()).map(|i| log_norm - 0.5 * kappa * grid.sq_norm(i) + grid.volume(i).ln()).collect();
        let cell_mass = log_mass.iter().map(|l| l.exp()).collect();
        Ok(ReferenceMeasure { grid: grid.clone(), kind: ReferenceKind::Gaussian { kappa }, cell_mass, log_mass })
    }

    pub fn new(grid: &Grid, kind: ReferenceKind) -> Result<Self> {
        match kind {
            ReferenceKind::Lebesgue => Ok(Self::lebesgue(grid)),
            ReferenceKind::Gaussian { kappa } => Self::gaussian(grid, kappa),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> ReferenceKind {
        self.kind
    }

    pub fn is_probability(&self) -> bool {
        matches!(self.kind, ReferenceKind::Gaussian { .. })
    }

    pub fn cell_mass(&self) -> &[f64] {
        &self.cell_mass
    }

    pub fn log_mass(&self) -> &[f64] {
        &self.log_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.cell_mass.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    grid: Grid,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Validates non-negativity and unit mass (within [`MASS_TOL`]).
    pub fn new(grid: &Grid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::InvalidMeasure(format!("{} weights for {} cells", weights.len(), grid.len())));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidMeasure(format!("weights must be finite and non-negative, found {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("total mass {total} differs from 1")));
        }
        Ok(DiscreteMeasure { grid: grid.clone(), weights })
    }

    /// Rescales non-negative weights to unit mass.
    pub fn normalized(grid: &Grid, mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::InvalidMeasure(format!("{} weights for {} cells", weights.len(), grid.len())));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidMeasure("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidMeasure("zero total mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(DiscreteMeasure { grid: grid.clone(), weights })
    }

    /// Midpoint discretization of an (unnormalized) Lebesgue density.
    pub fn from_density(grid: &Grid, density: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let w = (0..grid.len()).map(|i| density(grid.point(i)) * grid.volume(i)).collect();
        Self::normalized(grid, w)
    }

    pub fn dirac(grid: &Grid, idx: usize) -> Result<Self> {
        if idx >= grid.len() {
            return Err(Error::InvalidMeasure(format!("cell {idx} out of range")));
        }
        let mut w = vec![0.0; grid.len()];
        w[idx] = 1.0;
        Ok(DiscreteMeasure { grid: grid.clone(), weights: w })
    }

    /// The reference measure renormalized to a probability on the grid.
    pub fn from_reference(reference: &ReferenceMeasure) -> Result<Self> {
        Self::normalized(reference.grid(), reference.cell_mass().to_vec())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    /// Pushforward under `x ↦ x + a`, realized by translating the grid.
    pub fn translated(&self, a: &[f64]) -> Result<Self> {
        Ok(DiscreteMeasure { grid: self.grid.translated(a)?, weights: self.weights.clone() })
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.grid.dim();
        let mut m = vec![0.0; d];
        for (i, w) in self.weights.iter().enumerate() {
            for (k, x) in self.grid.point(i).iter().enumerate() {
                m[k] += w * x;
            }
        }
        m
    }

    /// `M₁ = ∫|x| dp` about the origin.
    pub fn first_moment(&self) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| w * self.grid.sq_norm(i).sqrt()).sum()
    }

    /// `M₂ = ∫|x|² dp` about the origin.
    pub fn second_moment(&self) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| w * self.grid.sq_norm(i)).sum()
    }

    pub fn minus(&self, other: &DiscreteMeasure) -> Result<SignedMeasure> {
        self.grid.ensure_compatible(&other.grid, "difference of measures")?;
        let w = self.weights.iter().zip(&other.weights).map(|(a, b)| a - b).collect();
        Ok(SignedMeasure { grid: self.grid.clone(), weights: w })
    }

    /// Total-variation distance `Σ|p - q|` (no factor ½).
    pub fn l1_distance(&self, other: &DiscreteMeasure) -> Result<f64> {
        self.grid.ensure_compatible(&other.grid, "l1 distance")?;
        Ok(self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_cells_csv(w, &self.grid, "weight", &self.weights)
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let (grid, w) = read_cells_csv(r)?;
        Self::new(&grid, w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignedMeasure {
    grid: Grid,
    weights: Vec<f64>,
}

impl SignedMeasure {
    pub fn new(grid: &Grid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::InvalidMeasure(format!("{} weights for {} cells", weights.len(), grid.len())));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidMeasure("signed weights must be finite".into()));
        }
        Ok(SignedMeasure { grid: grid.clone(), weights })
    }

    pub fn zero(grid: &Grid) -> Self {
        SignedMeasure { grid: grid.clone(), weights: vec![0.0; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        SignedMeasure { grid: self.grid.clone(), weights: self.weights.iter().map(|w| c * w).collect() }
    }

    pub fn plus(&self, other: &SignedMeasure) -> Result<Self> {
        self.grid.ensure_compatible(&other.grid, "sum of signed measures")?;
        let w = self.weights.iter().zip(&other.weights).map(|(a, b)| a + b).collect();
        Ok(SignedMeasure { grid: self.grid.clone(), weights: w })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_cells_csv(w, &self.grid, "weight", &self.weights)
    }
}

/// `Σ pᵢ log(pᵢ/qᵢ)` for raw mass vectors; `+∞` when p charges a cell q does not.
pub(crate) fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut h = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            h += a * (a / b).ln();
        }
    }
    h
}

/// Relative entropy `H(p|ref)`.
pub fn relative_entropy(p: &DiscreteMeasure, reference: &ReferenceMeasure) -> Result<f64> {
    p.grid.ensure_compatible(&reference.grid, "relative entropy")?;
    let mut h = 0.0;
    for ((&a, &m), &lm) in p.weights.iter().zip(&reference.cell_mass).zip(&reference.log_mass) {
        if a > 0.0 {
            if m <= 0.0 {
                return Ok(f64::INFINITY);
            }
            h += xlogx(a) - a * lm;
        }
    }
    Ok(h)
}

/// `H(p|q)` between two probability measures on the same grid.
pub fn relative_entropy_between(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    p.grid.ensure_compatible(&q.grid, "relative entropy")?;
    Ok(kl_raw(&p.weights, &q.weights))
}

/// `H(p|q) + H(q|p)`.
pub fn symmetric_entropy(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    p.grid.ensure_compatible(&q.grid, "symmetric entropy")?;
    Ok(kl_raw(&p.weights, &q.weights) + kl_raw(&q.weights, &p.weights))
}

/// `∫|∇ log(dp/dref)|² dp` with finite differences on cells where `p > MASS_FLOOR`.
pub fn fisher_information(p: &DiscreteMeasure, reference: &ReferenceMeasure) -> Result<f64> {
    p.grid.ensure_compatible(&reference.grid, "fisher information")?;
    Ok(fisher_information_against(p, reference.cell_mass()))
}

/// Fisher information against an arbitrary positive per-cell reference mass.
pub fn fisher_information_against(p: &DiscreteMeasure, ref_mass: &[f64]) -> f64 {
    let active: Vec<bool> = p.weights.iter().zip(ref_mass).map(|(&a, &m)| a > MASS_FLOOR && m > 0.0).collect();
    let log_density: Vec<f64> = p
        .weights
        .iter()
        .zip(ref_mass)
        .zip(&active)
        .map(|((&a, &m), &on)| if on { a.ln() - m.ln() } else { 0.0 })
        .collect();
    let g2 = gradient_sq_norm(&p.grid, &log_density, &active);
    p.weights.iter().zip(&g2).zip(&active).filter(|(_, &on)| on).map(|((w, g), _)| w * g).sum()
}

pub(crate) fn write_cells_csv<W: Write>(w: W, grid: &Grid, value: &str, values: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = ["x", "y"][..grid.dim()].to_vec();
    header.push(value);
    wr.write_record(&header)?;
    for (i, v) in values.iter().enumerate() {
        let mut row: Vec<String> = grid.point(i).iter().map(|x| format!("{x:?}")).collect();
        row.push(format!("{v:?}"));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a `coordinates..., value` table in row-major order and rebuilds the grid.
pub(crate) fn read_cells_csv<R: Read>(r: R) -> Result<(Grid, Vec<f64>)> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let ncols = rd.headers()?.len();
    if !(2..=3).contains(&ncols) {
        return Err(Error::Parse(format!("expected 2 or 3 columns, got {ncols}")));
    }
    let d = ncols - 1;
    let mut coords: Vec<Vec<f64>> = vec![Vec::new(); d];
    let mut values = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}"))))
            .collect::<Result<_>>()?;
        for (k, c) in coords.iter_mut().enumerate() {
            c.push(nums[k]);
        }
        values.push(nums[d]);
    }
    let axes: Vec<Vec<f64>> = coords
        .iter()
        .map(|c| {
            let mut u = c.clone();
            u.sort_by(|a, b| a.total_cmp(b));
            u.dedup();
            u
        })
        .collect();
    let grid = Grid::from_nodes(axes)?;
    if grid.len() != values.len() {
        return Err(Error::Parse("rows do not form a full tensor grid".into()));
    }
    for (i, _) in values.iter().enumerate() {
        let p = grid.point(i);
        if (0..d).any(|k| p[k] != coords[k][i]) {
            return Err(Error::Parse(format!("row {} out of row-major order", i + 1)));
        }
    }
    Ok((grid, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Grid {
        Grid::uniform(&[(-8.0, 8.0, n)]).unwrap()
    }

    #[test]
    fn entropy_of_reference_vanishes() {
        let g = line(400);
        let r = ReferenceMeasure::gaussian(&g, 1.0).unwrap();
        let p = DiscreteMeasure::from_reference(&r).unwrap();
        assert!(relative_entropy(&p, &r).unwrap().abs() < 1e-9);
        assert!((r.total_mass() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn half_box_entropy() {
        let g = Grid::uniform(&[(0.0, 1.0, 10)]).unwrap();
        let mut w = vec![0.0; 10];
        w[..5].iter_mut().for_each(|x| *x = 0.2);
        let p = DiscreteMeasure::new(&g, w).unwrap();
        let h = relative_entropy(&p, &ReferenceMeasure::lebesgue(&g)).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_cell_symmetric_entropy() {
        let g = Grid::uniform(&[(0.0, 2.0, 2)]).unwrap();
        let p = DiscreteMeasure::new(&g, vec![0.5, 0.5]).unwrap();
        let q = DiscreteMeasure::new(&g, vec![0.25, 0.75]).unwrap();
        let oracle = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln() + 0.25 * 0.5f64.ln() + 0.75 * 1.5f64.ln();
        assert!((symmetric_entropy(&p, &q).unwrap() - oracle).abs() < 1e-15);
        assert!(symmetric_entropy(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn entropy_infinite_off_support() {
        let g = Grid::uniform(&[(0.0, 2.0, 2)]).unwrap();
        let p = DiscreteMeasure::new(&g, vec![1.0, 0.0]).unwrap();
        let q = DiscreteMeasure::new(&g, vec![0.5, 0.5]).unwrap();
        assert!(relative_entropy_between(&q, &p).unwrap().is_infinite());
        assert!(relative_entropy_between(&p, &q).unwrap().is_finite());
    }

    #[test]
    fn fisher_of_gaussian_is_inverse_variance() {
        let g = line(1600);
        for sigma in [0.7, 1.0, 1.5] {
            let p = DiscreteMeasure::from_density(&g, |x| (-x[0] * x[0] / (2.0 * sigma * sigma)).exp()).unwrap();
            let i = fisher_information(&p, &ReferenceMeasure::lebesgue(&g)).unwrap();
            assert!((i - 1.0 / (sigma * sigma)).abs() < 1e-3, "sigma {sigma}: {i}");
        }
    }

    #[test]
    fn fisher_against_own_reference_is_zero() {
        let g = line(200);
        let r = ReferenceMeasure::gaussian(&g, 1.0).unwrap();
        let p = DiscreteMeasure::from_reference(&r).unwrap();
        assert!(fisher_information(&p, &r).unwrap() < 1e-10);
    }

    #[test]
    fn gaussian_moments() {
        let g = line(800);
        let p = DiscreteMeasure::from_density(&g, |x| (-(x[0] - 1.0).powi(2) / (2.0 * 0.64)).exp()).unwrap();
        assert!((p.second_moment() - 1.64).abs() < 1e-3);
        assert!((p.mean()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn atoms() {
        let g = Grid::from_nodes(vec![vec![-2.0, 0.0, 2.0]]).unwrap();
        assert_eq!(DiscreteMeasure::dirac(&g, 1).unwrap().second_moment(), 0.0);
        let p = DiscreteMeasure::new(&g, vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(p.second_moment(), 4.0);
    }

    #[test]
    fn rejects_invalid_weights() {
        let g = line(3);
        assert!(DiscreteMeasure::new(&g, vec![0.5, 0.5, 0.1]).is_err());
        assert!(DiscreteMeasure::new(&g, vec![1.5, -0.5, 0.0]).is_err());
        assert!(DiscreteMeasure::new(&g, vec![1.0]).is_err());
        let other = line(4);
        let p = DiscreteMeasure::new(&g, vec![1.0, 0.0, 0.0]).unwrap();
        let r = ReferenceMeasure::lebesgue(&other);
        assert!(matches!(relative_entropy(&p, &r), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn csv_roundtrip() {
        let g = Grid::uniform(&[(0.0, 1.0, 3), (-1.0, 1.0, 2)]).unwrap();
        let p = DiscreteMeasure::normalized(&g, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y,weight\n"));
        let q = DiscreteMeasure::read_csv(&buf[..]).unwrap();
        assert_eq!(q.weights(), p.weights());
        assert!(q.grid().compatible(p.grid()));
    }
}
