//! Rectangular tensor grids in one or two dimensions.
//!
//! Cells are indexed row-major: in 2D the cell `(i, j)` has flat index `i * ny + j`.
//! Each node is the center of a cell whose width along an axis is the Voronoi
//! width of the node (half-distance to both neighbours, mirrored at the ends).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid {
    axes: Vec<Vec<f64>>,
    widths: Vec<Vec<f64>>,
    cache: GridCache,
}

#[derive(Clone, Serialize, Deserialize)]
struct GridRepr {
    axes: Vec<Vec<f64>>,
    widths: Vec<Vec<f64>>,
}

impl TryFrom<GridRepr> for Grid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        Grid::with_widths(r.axes, r.widths)
    }
}

impl From<Grid> for GridRepr {
    fn from(g: Grid) -> Self {
        GridRepr { axes: g.axes, widths: g.widths }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct GridCache {
    points: Vec<f64>,
    volumes: Vec<f64>,
}

impl Grid {
    /// Uniform grid with `n` cells per axis covering `[lo, hi]`; nodes sit at cell centers.
    pub fn uniform(spec: &[(f64, f64, usize)]) -> Result<Self> {
        if spec.is_empty() || spec.len() > 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {}", spec.len())));
        }
        let mut axes = Vec::new();
        let mut widths = Vec::new();
        for &(lo, hi, n) in spec {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidGrid(format!("bad axis bounds [{lo}, {hi}]")));
            }
            if n == 0 {
                return Err(Error::InvalidGrid("axis with zero cells".into()));
            }
            let h = (hi - lo) / n as f64;
            axes.push((0..n).map(|i| lo + (i as f64 + 0.5) * h).collect());
            widths.push(vec![h; n]);
        }
        Self::assemble(axes, widths)
    }

    /// Grid from explicit node coordinates, widths from the Voronoi rule.
    pub fn from_nodes(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {}", axes.len())));
        }
        let mut widths = Vec::with_capacity(axes.len());
        for nodes in &axes {
            if nodes.len() < 2 {
                return Err(Error::InvalidGrid("each axis needs at least two nodes".into()));
            }
            let n = nodes.len();
            let mut w = Vec::with_capacity(n);
            for i in 0..n {
                let width = if i == 0 {
                    nodes[1] - nodes[0]
                } else if i == n - 1 {
                    nodes[n - 1] - nodes[n - 2]
                } else {
                    0.5 * (nodes[i + 1] - nodes[i - 1])
                };
                w.push(width);
            }
            widths.push(w);
        }
        Self::assemble(axes, widths)
    }

    /// Grid with explicit nodes and widths.
    pub fn with_widths(axes: Vec<Vec<f64>>, widths: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 || widths.len() != axes.len() {
            return Err(Error::InvalidGrid("dimension must be 1 or 2 with one width list per axis".into()));
        }
        Self::assemble(axes, widths)
    }

    fn assemble(axes: Vec<Vec<f64>>, widths: Vec<Vec<f64>>) -> Result<Self> {
        for (a, (nodes, w)) in axes.iter().zip(&widths).enumerate() {
            if nodes.is_empty() || nodes.len() != w.len() {
                return Err(Error::InvalidGrid(format!("axis {a}: node/width length mismatch")));
            }
            if nodes.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidGrid(format!("axis {a}: non-finite node")));
            }
            if nodes.windows(2).any(|p| p[1] <= p[0]) {
                return Err(Error::InvalidGrid(format!("axis {a}: nodes must be strictly increasing")));
            }
            if w.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                return Err(Error::InvalidGrid(format!("axis {a}: widths must be positive")));
            }
        }
        let mut g = Grid { axes, widths, cache: GridCache::default() };
        g.rebuild_cache();
        Ok(g)
    }

    fn rebuild_cache(&mut self) {
        let n = self.len();
        let d = self.dim();
        let mut points = Vec::with_capacity(n * d);
        let mut volumes = Vec::with_capacity(n);
        for idx in 0..n {
            let mut vol = 1.0;
            for a in 0..d {
                let k = self.axis_index(idx, a);
                points.push(self.axes[a][k]);
                vol *= self.widths[a][k];
            }
            volumes.push(vol);
        }
        self.cache = GridCache { points, volumes };
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    pub fn axis_widths(&self, a: usize) -> &[f64] {
        &self.widths[a]
    }

    /// Position of `idx` along axis `a`.
    pub fn axis_index(&self, idx: usize, a: usize) -> usize {
        if self.dim() == 1 {
            idx
        } else if a == 0 {
            idx / self.axes[1].len()
        } else {
            idx % self.axes[1].len()
        }
    }

    pub fn flat_index(&self, ij: &[usize]) -> usize {
        match ij {
            [i] => *i,
            [i, j] => i * self.axes[1].len() + j,
            _ => panic!("index rank must match grid dimension"),
        }
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        let d = self.dim();
        &self.cache.points[idx * d..(idx + 1) * d]
    }

    pub fn points(&self) -> &[f64] {
        &self.cache.points
    }

    pub fn volume(&self, idx: usize) -> f64 {
        self.cache.volumes[idx]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.cache.volumes
    }

    pub fn total_volume(&self) -> f64 {
        self.cache.volumes.iter().sum()
    }

    pub fn max_cell_width(&self) -> f64 {
        self.widths.iter().flatten().fold(0.0, |m: f64, &w| m.max(w))
    }

    /// Neighbouring cell along axis `a` in direction `step` (±1).
    pub fn neighbor(&self, idx: usize, a: usize, step: isize) -> Option<usize> {
        let k = self.axis_index(idx, a) as isize + step;
        if k < 0 || k >= self.axes[a].len() as isize {
            return None;
        }
        let k = k as usize;
        Some(if self.dim() == 1 {
            k
        } else if a == 0 {
            k * self.axes[1].len() + self.axis_index(idx, 1)
        } else {
            self.axis_index(idx, 0) * self.axes[1].len() + k
        })
    }

    pub fn sq_norm(&self, idx: usize) -> f64 {
        self.point(idx).iter().map(|x| x * x).sum()
    }

    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        self.point(i).iter().zip(self.point(j)).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn dot(&self, i: usize, j: usize) -> f64 {
        self.point(i).iter().zip(self.point(j)).map(|(a, b)| a * b).sum()
    }

    /// The same grid shifted by the vector `a`.
    pub fn translated(&self, a: &[f64]) -> Result<Self> {
        if a.len() != self.dim() {
            return Err(Error::InvalidParameter { name: "shift", reason: "dimension mismatch".into() });
        }
        let axes = self.axes.iter().zip(a).map(|(nodes, s)| nodes.iter().map(|x| x + s).collect()).collect();
        Self::assemble(axes, self.widths.clone())
    }

    /// Equality of shape with node and width agreement to relative 1e-12.
    pub fn compatible(&self, other: &Grid) -> bool {
        if self.shape() != other.shape() {
            return false;
        }
        let close = |x: &f64, y: &f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs()));
        self.axes.iter().flatten().zip(other.axes.iter().flatten()).all(|(x, y)| close(x, y))
            && self.widths.iter().flatten().zip(other.widths.iter().flatten()).all(|(x, y)| close(x, y))
    }

    pub(crate) fn ensure_compatible(&self, other: &Grid, what: &str) -> Result<()> {
        if self.compatible(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{what}: grids differ ({:?} vs {:?})", self.shape(), other.shape())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_cells_are_centered() {
        let g = Grid::uniform(&[(0.0, 1.0, 4)]).unwrap();
        assert_eq!(g.axis(0), &[0.125, 0.375, 0.625, 0.875]);
        assert!((g.total_volume() - 1.0).abs() < 1e-15);
        assert_eq!(g.max_cell_width(), 0.25);
    }

    #[test]
    fn row_major_neighbors() {
        let g = Grid::uniform(&[(0.0, 3.0, 3), (0.0, 2.0, 2)]).unwrap();
        assert_eq!(g.len(), 6);
        let idx = g.flat_index(&[1, 1]);
        assert_eq!(idx, 3);
        assert_eq!(g.point(idx), &[1.5, 1.5]);
        assert_eq!(g.neighbor(idx, 0, 1), Some(5));
        assert_eq!(g.neighbor(idx, 0, -1), Some(1));
        assert_eq!(g.neighbor(idx, 1, 1), None);
        assert_eq!(g.neighbor(idx, 1, -1), Some(2));
        assert!((g.volume(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_nodes() {
        assert!(Grid::from_nodes(vec![vec![0.0, 0.0, 1.0]]).is_err());
        assert!(Grid::from_nodes(vec![vec![0.0]]).is_err());
        assert!(Grid::uniform(&[]).is_err());
        assert!(Grid::uniform(&[(0.0, 1.0, 2); 3]).is_err());
        assert!(Grid::with_widths(vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn voronoi_widths_reproduce_uniform() {
        let u = Grid::uniform(&[(-2.0, 2.0, 16)]).unwrap();
        let v = Grid::from_nodes(vec![u.axis(0).to_vec()]).unwrap();
        assert!(u.compatible(&v));
    }
}
