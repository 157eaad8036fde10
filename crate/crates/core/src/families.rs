//! Named marginal families and seeded generators for the batteries.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::{DiscreteMeasure, ReferenceMeasure};

/// A scalar (broadcast to every axis) or one value per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Point {
    fn at(&self, a: usize, dim: usize) -> Result<f64> {
        match self {
            Point::Scalar(x) => Ok(*x),
            Point::Vector(v) if v.len() == dim => Ok(v[a]),
            Point::Vector(v) => Err(Error::InvalidParameter {
                name: "point",
                reason: format!("expected {dim} coordinates, got {}", v.len()),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    #[serde(flatten)]
    pub family: Family,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Isotropic when `sigma` is a scalar, diagonal otherwise.
    Gaussian {
        mean: Point,
        sigma: Point,
    },
    /// Uniform on the cells whose centres lie in the box `[a, b]`.
    Uniform {
        a: Point,
        b: Point,
    },
    Mixture {
        components: Vec<Component>,
    },
    /// The Gaussian reference `N(0, κ⁻¹I)` restricted to the grid.
    Reference {
        kappa: f64,
    },
}

impl Family {
    /// Unnormalized cell masses.
    fn masses(&self, grid: &Grid) -> Result<Vec<f64>> {
        let d = grid.dim();
        match self {
            Family::Gaussian { mean, sigma } => {
                let m: Vec<f64> = (0..d).map(|a| mean.at(a, d)).collect::<Result<_>>()?;
                let s: Vec<f64> = (0..d).map(|a| sigma.at(a, d)).collect::<Result<_>>()?;
                if s.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(Error::InvalidParameter { name: "sigma", reason: "must be positive".into() });
                }
                Ok((0..grid.len())
                    .map(|i| {
                        let x = grid.point(i);
                        let e: f64 = (0..d).map(|a| ((x[a] - m[a]) / s[a]).powi(2)).sum();
                        let norm: f64 = s.iter().map(|sa| (2.0 * PI).sqrt() * sa).product();
                        (-0.5 * e).exp() / norm * grid.volume(i)
                    })
                    .collect())
            }
            Family::Uniform { a, b } => {
                let lo: Vec<f64> = (0..d).map(|k| a.at(k, d)).collect::<Result<_>>()?;
                let hi: Vec<f64> = (0..d).map(|k| b.at(k, d)).collect::<Result<_>>()?;
                Ok((0..grid.len())
                    .map(|i| {
                        let x = grid.point(i);
                        let inside = (0..d).all(|k| x[k] >= lo[k] - 1e-12 && x[k] <= hi[k] + 1e-12);
                        if inside {
                            grid.volume(i)
                        } else {
                            0.0
                        }
                    })
                    .collect())
            }
            Family::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidParameter { name: "components", reason: "empty mixture".into() });
                }
                let mut acc = vec![0.0; grid.len()];
                for c in components {
                    if !(c.weight.is_finite() && c.weight >= 0.0) {
                        return Err(Error::InvalidParameter { name: "weight", reason: "must be nonnegative".into() });
                    }
                    let m = c.family.build(grid)?;
                    for (a, w) in acc.iter_mut().zip(m.weights()) {
                        *a += c.weight * w;
                    }
                }
                Ok(acc)
            }
            Family::Reference { kappa } => Ok(ReferenceMeasure::gaussian(grid, *kappa)?.cell_mass().to_vec()),
        }
    }

    /// The family discretized on `grid` and normalized to mass one.
    pub fn build(&self, grid: &Grid) -> Result<DiscreteMeasure> {
        DiscreteMeasure::normalized(grid, self.masses(grid)?)
    }

    pub fn gaussian(mean: f64, sigma: f64) -> Self {
        Family::Gaussian { mean: Point::Scalar(mean), sigma: Point::Scalar(sigma) }
    }

    pub fn uniform(a: f64, b: f64) -> Self {
        Family::Uniform { a: Point::Scalar(a), b: Point::Scalar(b) }
    }
}

/// `(1 + s·h)μ`, renormalized, with `h(x) = cos(2π k·(x - lo)/L + phase)` along axis 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub amplitude: f64,
    #[serde(default = "one")]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

fn one() -> f64 {
    1.0
}

impl Perturbation {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Perturbation { amplitude, frequency, phase }
    }

    /// Seeded frequency in `{1, …, 4}` and phase in `[0, 2π)`.
    pub fn random(amplitude: f64, rng: &mut impl Rng) -> Self {
        Perturbation { amplitude, frequency: rng.random_range(1..=4) as f64, phase: rng.random_range(0.0..2.0 * PI) }
    }

    pub fn wave(&self, grid: &Grid) -> Vec<f64> {
        let nodes = grid.axis(0);
        let lo = nodes[0] - 0.5 * grid.axis_widths(0)[0];
        let len = grid.axis_widths(0).iter().sum::<f64>();
        (0..grid.len())
            .map(|i| {
                let x = grid.point(i)[0];
                (2.0 * PI * self.frequency * (x - lo) / len + self.phase).cos()
            })
            .collect()
    }

    pub fn apply(&self, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        if !(self.amplitude.abs() < 1.0) {
            return Err(Error::InvalidParameter {
                name: "amplitude",
                reason: "|s| < 1 keeps the density positive".into(),
            });
        }
        let h = self.wave(mu.grid());
        let w = mu.weights().iter().zip(&h).map(|(m, h)| m * (1.0 + self.amplitude * h)).collect();
        DiscreteMeasure::normalized(mu.grid(), w)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A mixture of one to three Gaussians with means in `[-center, center]` and widths in `[0.5, 1.2]`.
pub fn random_smooth(grid: &Grid, rng: &mut impl Rng, center: f64) -> Result<DiscreteMeasure> {
    let k = rng.random_range(1..=3);
    let components = (0..k)
        .map(|_| Component {
            weight: rng.random_range(0.2..1.0),
            family: Family::gaussian(rng.random_range(-center..=center), rng.random_range(0.5..1.2)),
        })
        .collect();
    Family::Mixture { components }.build(grid)
}

/// The `i`-th seeded pair of smooth marginals.
pub fn random_smooth_pair(grid: &Grid, seed: u64) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let mut r = rng(seed);
    Ok((random_smooth(grid, &mut r, 2.0)?, random_smooth(grid, &mut r, 2.0)?))
}
