//! Polyhedral kernel: linear programming, feasibility, redundancy removal,
//! vertex enumeration, exact volume, Fourier–Motzkin elimination, affine
//! images and bounding boxes.
//!
//! All operations are pure and reentrant.

mod linalg;
mod lp;
mod polyhedron;
mod project;
mod volume;

pub use linalg::{determinant, invert, solve};
pub use lp::{chebyshev_center, is_feasible, lp_solve, LpSolution, Sense};
pub use polyhedron::{bounding_box, boxes_intersect, intersect, HyperRectangle, Polyhedron};
pub use project::{affine_image, eliminate, remove_redundant, remove_redundant_indices};
pub use volume::{vertices, volume};

/// Slack allowed when testing whether a point satisfies a constraint.
pub const FEAS_TOL: f64 = 1e-9;
/// Margin by which a constraint must be binding to be kept.
pub const REDUNDANCY_TOL: f64 = 1e-8;
/// Distance under which two enumerated vertices are merged.
pub const VERTEX_TOL: f64 = 1e-9;
