//! Domains, grids, conformal background metrics and discrete operators.

pub mod field;
pub mod grid;
pub mod metric;
pub mod ops;

pub use field::ScalarField;
pub use grid::{DomainGrid, NodeKind, Region};
pub use metric::BackgroundMetric;
pub use ops::{flat_laplacian, gaussian_curvature, laplacian_g, q_norm_sq};
