//! Discrete Schrödinger bridges and entropic optimal transport on 1D/2D grids, together
//! with evaluators for corrector, stability, and log-integrability estimates.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod families;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod measures;
pub mod numerics;
pub mod orlicz;
pub mod schrodinger;
mod sinkhorn;
pub mod sobolev;

pub use diagnostics::{InequalityReport, SobolevContext, Tolerance};
pub use error::{Error, Result};
pub use families::{Family, Perturbation};
pub use grid::Grid;
pub use kernels::{apply_semigroup, curvature_factor, CurvatureFactor, GibbsKernel, KernelKind};
pub use measures::{DiscreteMeasure, ReferenceKind, ReferenceMeasure, SignedMeasure};
pub use orlicz::{BoundVariant, OrliczContext, Young};
pub use schrodinger::{solve, Plan, SchrodingerSolution, SolveOptions};
