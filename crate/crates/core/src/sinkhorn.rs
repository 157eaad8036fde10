//! Log-domain matrix scaling on a dense symmetric log-kernel.
//!
//! Finds `a`, `b` with `Σ_j exp(a_i + b_j + K_ij) = p_i` and `Σ_i exp(a_i + b_j + K_ij) = q_j`.
//! Off-support entries of `a`, `b` are `-inf`.

use rayon::prelude::*;

use crate::numerics::log_sum_exp_pair;

#[derive(Clone, Debug)]
pub(crate) struct Scaling {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub iterations: usize,
    /// Column-marginal L1 error after each row update.
    pub history: Vec<f64>,
    pub converged: bool,
}

const PAR_THRESHOLD: usize = 256;

fn row_lse(k: &[f64], n: usize, rows: &[usize], v: &[f64]) -> Vec<f64> {
    if n >= PAR_THRESHOLD {
        rows.par_iter().map(|&i| log_sum_exp_pair(&k[i * n..(i + 1) * n], v)).collect()
    } else {
        rows.iter().map(|&i| log_sum_exp_pair(&k[i * n..(i + 1) * n], v)).collect()
    }
}

pub(crate) fn scale(k: &[f64], n: usize, p: &[f64], q: &[f64], b0: Vec<f64>, tol: f64, max_iter: usize) -> Scaling {
    debug_assert_eq!(k.len(), n * n);
    let sp: Vec<usize> = (0..n).filter(|&i| p[i] > 0.0).collect();
    let sq: Vec<usize> = (0..n).filter(|&j| q[j] > 0.0).collect();
    let mut a = vec![f64::NEG_INFINITY; n];
    let mut b = b0;
    for j in 0..n {
        if q[j] <= 0.0 {
            b[j] = f64::NEG_INFINITY;
        }
    }
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let s = row_lse(k, n, &sp, &b);
        for (&i, si) in sp.iter().zip(&s) {
            a[i] = p[i].ln() - si;
        }
        // K is symmetric, so column sums are row sums of the same matrix.
        let t = row_lse(k, n, &sq, &a);
        let mut err = 0.0;
        for (&j, tj) in sq.iter().zip(&t) {
            err += (q[j] - (tj + b[j]).exp()).abs();
        }
        history.push(err);
        if err <= tol {
            converged = true;
            break;
        }
        for (&j, tj) in sq.iter().zip(&t) {
            b[j] = q[j].ln() - tj;
        }
    }
    Scaling { a, b, iterations, history, converged }
}

/// L1 errors of both marginals of `exp(a_i + b_j + K_ij)` against `p`, `q`.
pub(crate) fn marginal_errors(k: &[f64], n: usize, a: &[f64], b: &[f64], p: &[f64], q: &[f64]) -> (f64, f64) {
    let all: Vec<usize> = (0..n).collect();
    let rows = row_lse(k, n, &all, b);
    let cols = row_lse(k, n, &all, a);
    let e = |pot: &[f64], lse: &[f64], target: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let m = if pot[i] == f64::NEG_INFINITY { 0.0 } else { (pot[i] + lse[i]).exp() };
                (m - target[i]).abs()
            })
            .sum()
    };
    (e(a, &rows, p), e(b, &cols, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales_small_matrix_and_is_monotone() {
        let n = 5;
        let k: Vec<f64> = (0..n * n).map(|ij| -(((ij / n) as f64 - (ij % n) as f64).powi(2)) / 2.0).collect();
        let p = [0.1, 0.2, 0.3, 0.2, 0.2];
        let q = [0.3, 0.0, 0.2, 0.1, 0.4];
        let s = scale(&k, n, &p, &q, vec![0.0; n], 1e-13, 10_000);
        assert!(s.converged);
        assert_eq!(s.b[1], f64::NEG_INFINITY);
        let (ep, eq) = marginal_errors(&k, n, &s.a, &s.b, &p, &q);
        assert!(ep < 1e-14 && eq <= 1e-13);
        for w in s.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }
}
