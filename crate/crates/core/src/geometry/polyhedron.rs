//! Half-space polyhedra and axis-aligned boxes.

use serde::{Deserialize, Serialize};

use super::linalg::dot;
use super::lp::{lp_solve, Sense};
use crate::error::{Error, Result};

/// The set `{v | A v ≤ b}` in `dim` dimensions. Rows are stored row-major.
/// A polyhedron with no rows is the whole space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub dim: usize,
}

impl Polyhedron {
    /// Builds a polyhedron, checking that all rows have `dim` entries and all
    /// numbers are finite.
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, dim: usize) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Dimension {
                expected: a.len(),
                found: b.len(),
            });
        }
        for row in &a {
            if row.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: row.len(),
                });
            }
        }
        if a.iter().flatten().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Argument("polyhedron has non-finite entries".into()));
        }
        Ok(Self { a, b, dim })
    }

    /// The whole of `R^dim`.
    pub fn whole_space(dim: usize) -> Self {
        Self {
            a: Vec::new(),
            b: Vec::new(),
            dim,
        }
    }

    /// Box `lo ≤ v ≤ hi` as 2·dim rows (upper bounds first, per coordinate).
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Self {
        let dim = lo.len();
        let mut a = Vec::with_capacity(2 * dim);
        let mut b = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            let mut up = vec![0.0; dim];
            up[i] = 1.0;
            a.push(up);
            b.push(hi[i]);
            let mut down = vec![0.0; dim];
            down[i] = -1.0;
            a.push(down);
            b.push(-lo[i]);
        }
        Self { a, b, dim }
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Appends the constraint `row · v ≤ rhs`.
    pub fn push(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.dim);
        self.a.push(row);
        self.b.push(rhs);
    }

    /// Largest violation `max_i (a_i·x − b_i)` (negative inside).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, &bi)| dot(row, x) - bi)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Membership with absolute slack `tol` on every row.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.a.iter().zip(&self.b).all(|(row, &bi)| dot(row, x) <= bi + tol)
    }

    /// Copy with each row scaled to unit Euclidean norm. Rows that are
    /// identically zero are dropped when `0 ≤ b` (always satisfied) and kept
    /// as the canonical infeasible row `0 ≤ -1` otherwise.
    pub fn normalized(&self) -> Self {
        let mut out = Self::whole_space(self.dim);
        for (row, &bi) in self.a.iter().zip(&self.b) {
            let n = dot(row, row).sqrt();
            if n > 0.0 {
                out.push(row.iter().map(|v| v / n).collect(), bi / n);
            } else if bi < 0.0 {
                out.push(vec![0.0; self.dim], -1.0);
            }
        }
        out
    }
}

/// Axis-aligned box `lo ≤ v ≤ hi`. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRectangle {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl HyperRectangle {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
            return Err(Error::Argument("box requires lo <= hi componentwise".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn to_polyhedron(&self) -> Polyhedron {
        Polyhedron::from_box(&self.lo, &self.hi)
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }
}

/// Row-stacks the constraints of `p` and `q` (no simplification).
pub fn intersect(p: &Polyhedron, q: &Polyhedron) -> Result<Polyhedron> {
    if p.dim != q.dim {
        return Err(Error::Dimension {
            expected: p.dim,
            found: q.dim,
        });
    }
    let mut out = p.clone();
    out.a.extend(q.a.iter().cloned());
    out.b.extend(q.b.iter().copied());
    Ok(out)
}

/// Per-coordinate extremes of `p` by 2·dim linear programs. Coordinates along
/// which `p` is unbounded get infinite bounds.
pub fn bounding_box(p: &Polyhedron) -> Result<HyperRectangle> {
    let mut lo = vec![0.0; p.dim];
    let mut hi = vec![0.0; p.dim];
    for i in 0..p.dim {
        let mut c = vec![0.0; p.dim];
        c[i] = 1.0;
        hi[i] = match lp_solve(&c, p, Sense::Maximize) {
            Ok(sol) => sol.value,
            Err(Error::Unbounded) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        lo[i] = match lp_solve(&c, p, Sense::Minimize) {
            Ok(sol) => sol.value,
            Err(Error::Unbounded) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        if lo[i] > hi[i] {
            // Round-off on a degenerate (flat) coordinate.
            let mid = 0.5 * (lo[i] + hi[i]);
            lo[i] = mid;
            hi[i] = mid;
        }
    }
    Ok(HyperRectangle { lo, hi })
}

/// Closed-interval overlap test: boxes that merely touch intersect.
pub fn boxes_intersect(r1: &HyperRectangle, r2: &HyperRectangle) -> bool {
    r1.lo
        .iter()
        .zip(&r1.hi)
        .zip(r2.lo.iter().zip(&r2.hi))
        .all(|((l1, h1), (l2, h2))| l1 <= h2 && l2 <= h1)
}
