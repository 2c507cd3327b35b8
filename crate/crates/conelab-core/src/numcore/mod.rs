//! Numerical substrate: grids, quadrature, finite-difference stencils,
//! the generalized Sturm–Liouville eigensolve and the norm-constrained
//! minimizer every functional evaluation goes through.

mod eigen;
mod field;
mod grid;
mod minimize;
pub mod stencil;

pub use eigen::{eigen_smallest, SturmLiouvilleProblem};
pub use field::{integrate, BoundaryKind, ScalarField};
pub use grid::{RadialGrid, Spacing};
pub use minimize::{minimize_normalized, MinimizeConfig, MinimizeOutcome, MinimizeStatus, NormalizedFunctional};

/// Default node count for link and cone grids.
pub const DEFAULT_NODES: usize = 2048;
