//! Small numerical kernels shared across modules.

use crate::grid::Grid;

/// Cells with mass below this count as empty for log-density and gradient purposes.
pub const MASS_FLOOR: f64 = 1e-12;

/// `log Σ exp(x)` with the usual max shift. Returns `-inf` for empty or all `-inf` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    let s: f64 = xs.into_iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// `log Σ_k exp(a[k] + b[k])` over paired slices.
pub(crate) fn log_sum_exp_pair(a: &[f64], b: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (x, y) in a.iter().zip(b) {
        let v = x + y;
        if v > m {
            m = v;
        }
    }
    if !m.is_finite() {
        return m;
    }
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += (x + y - m).exp();
    }
    m + s.ln()
}

/// `x ln x` with `0 ln 0 = 0`.
pub fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Finite-difference gradient of `field` on the cells flagged `active`.
///
/// Central differences when both axis neighbours are active, one-sided when only
/// one is, zero component when neither is. Inactive cells get a zero gradient.
pub fn gradient(grid: &Grid, field: &[f64], active: &[bool]) -> Vec<Vec<f64>> {
    let d = grid.dim();
    let mut out = vec![vec![0.0; d]; grid.len()];
    for (idx, g) in out.iter_mut().enumerate() {
        if !active[idx] {
            continue;
        }
        for (a, comp) in g.iter_mut().enumerate() {
            let nodes = grid.axis(a);
            let prev = grid.neighbor(idx, a, -1).filter(|&k| active[k]);
            let next = grid.neighbor(idx, a, 1).filter(|&k| active[k]);
            let x = |k: usize| nodes[grid.axis_index(k, a)];
            *comp = match (prev, next) {
                (Some(p), Some(n)) => (field[n] - field[p]) / (x(n) - x(p)),
                (None, Some(n)) => (field[n] - field[idx]) / (x(n) - x(idx)),
                (Some(p), None) => (field[idx] - field[p]) / (x(idx) - x(p)),
                (None, None) => 0.0,
            };
        }
    }
    out
}

/// Squared Euclidean norm of the finite-difference gradient, cell by cell.
pub fn gradient_sq_norm(grid: &Grid, field: &[f64], active: &[bool]) -> Vec<f64> {
    gradient(grid, field, active).into_iter().map(|g| g.iter().map(|c| c * c).sum()).collect()
}

/// Mask of cells whose weight exceeds [`MASS_FLOOR`].
pub fn support_mask(weights: &[f64]) -> Vec<bool> {
    weights.iter().map(|&w| w > MASS_FLOOR).collect()
}
