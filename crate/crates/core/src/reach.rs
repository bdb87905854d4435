//! Reachable sets with density and probability bounds over enumerated cells.
//!
//! All set queries are answered in input space: the part of a cell whose
//! image meets a query set `{(z, x) | x ∈ Q, z ∈ [z_min, z_max]}` is the
//! pull-back `{x ∈ H_k | C_x·x + d_x ∈ Q, z_min ≤ c_z·x + d_z ≤ z_max}`,
//! obtained exactly by substituting the cell map into the query rows. Its
//! probability is its input volume times bounds of `ρ0` over it.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::distribution::{sample_initial, DistributionKind, InitialDistribution};
use crate::error::{Error, Result};
use crate::geometry::{
    affine_image, bounding_box, boxes_intersect, chebyshev_center, intersect, is_feasible, lp_solve, volume,
    HyperRectangle, Polyhedron, Sense,
};
use crate::net::g_of;
use crate::rpm::{AffineCell, Partition, MIN_CELL_RADIUS};

/// Slack added to cell output boxes before the pruning test, so that a pair
/// the LP would call touching is never pruned.
const BOX_SLACK: f64 = 1e-7;

/// Allowed range of the network's intermediate density output `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ZRange {
    fn default() -> Self {
        Self::UNBOUNDED
    }
}

impl ZRange {
    pub const UNBOUNDED: ZRange = ZRange {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Argument(format!("invalid z range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// The `z` range at time `t > 0` whose density gain `G = exp(t·z)` lies
    /// in `[gain_lo, gain_hi]`.
    pub fn from_gain(gain_lo: f64, gain_hi: f64, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::Argument("density ranges need t > 0".into()));
        }
        if !(gain_lo >= 0.0) || gain_hi.is_nan() || gain_lo > gain_hi {
            return Err(Error::Argument(format!("invalid gain range [{gain_lo}, {gain_hi}]")));
        }
        Self::new(gain_lo.ln() / t, gain_hi.ln() / t)
    }

    pub fn is_unbounded(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }
}

/// Forward reachable piece of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachCell {
    /// Image of the cell under the flow part of its map.
    pub state_set: Polyhedron,
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub p_lo: f64,
    pub p_hi: f64,
    /// Index of the source cell.
    pub source: usize,
    pub t: f64,
    /// Volume of `state_set`.
    pub volume: f64,
}

/// Lower and upper bounds of the `ρ0` mass of `h`.
fn mass_bounds(h: &Polyhedron, known_volume: Option<f64>, rho0: &InitialDistribution) -> Result<(f64, f64)> {
    let (lo, hi) = rho0.bounds_over(h)?;
    if hi == 0.0 {
        return Ok((0.0, 0.0));
    }
    let bb = bounding_box(h)?;
    let inside = bb
        .lo
        .iter()
        .zip(&bb.hi)
        .enumerate()
        .all(|(i, (l, u))| *l >= rho0.support.lo[i] && *u <= rho0.support.hi[i]);
    let vol = match (inside, known_volume) {
        (true, Some(v)) => v,
        (true, None) => volume(h)?,
        (false, _) => {
            let region = intersect(h, &rho0.support.to_polyhedron())?;
            let (_, r) = chebyshev_center(&region, 1e6)?;
            if !(r >= MIN_CELL_RADIUS) {
                return Ok((0.0, 0.0));
            }
            volume(&region)?
        }
    };
    Ok((vol * lo, vol * hi))
}

/// Probability bracket of a cell: its volume (within the support of `ρ0`)
/// times the bounds of `ρ0` over the cell.
pub fn cell_probability(cell: &AffineCell, rho0: &InitialDistribution) -> Result<(f64, f64)> {
    if rho0.dim() != cell.h.dim {
        return Err(Error::Dimension {
            expected: cell.h.dim,
            found: rho0.dim(),
        });
    }
    mass_bounds(&cell.h, Some(cell.volume), rho0)
}

/// Forward reachable set: per cell, the image of the cell under the learned
/// flow, the density bracket `ρ0(x̄)·exp(t·[z_lo, z_hi])` with `x̄` the
/// cell's Chebyshev center, and the probability bracket of
/// [`cell_probability`].
pub fn forward_reach(cells: &[AffineCell], rho0: &InitialDistribution) -> Result<Vec<ReachCell>> {
    cells
        .par_iter()
        .enumerate()
        .map(|(k, cell)| {
            let r0 = rho0.density(&cell.center);
            let (cx, dx) = cell.state_map();
            let state_set = affine_image(&cell.h, &cx, &dx)?;
            let vol = match volume(&state_set) {
                Ok(v) => v,
                Err(Error::Unbounded) => 0.0,
                Err(e) => return Err(e),
            };
            let (p_lo, p_hi) = cell_probability(cell, rho0)?;
            Ok(ReachCell {
                state_set,
                rho_lo: r0 * g_of(cell.z_lo, cell.t),
                rho_hi: r0 * g_of(cell.z_hi, cell.t),
                p_lo,
                p_hi,
                source: k,
                t: cell.t,
                volume: vol,
            })
        })
        .collect()
}

/// The part of a cell whose output lies in the query set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryHit {
    /// Index of the cell.
    pub source: usize,
    /// Input-space region (pre-image of the query within the cell).
    pub region: Polyhedron,
    /// Bounds of `z` over the region.
    pub z_lo: f64,
    pub z_hi: f64,
    /// Density bracket `ρ0(x̄)·exp(t·[z_lo, z_hi])` at the cell center.
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub p_lo: f64,
    pub p_hi: f64,
}

/// Rows of the pull-back of `{(z, x) | x ∈ query, z ∈ z}` into `cell`'s input
/// space, intersected with the cell.
pub fn pull_back(cell: &AffineCell, query: &Polyhedron, z: ZRange) -> Result<Polyhedron> {
    let n = cell.h.dim;
    if query.dim != n {
        return Err(Error::Dimension {
            expected: n,
            found: query.dim,
        });
    }
    let mut p = cell.h.clone();
    let (cx, dx) = cell.state_map();
    for (e, &f) in query.a.iter().zip(&query.b) {
        let row: Vec<f64> = (0..n).map(|j| (0..n).map(|i| e[i] * cx[i][j]).sum()).collect();
        let rhs = f - e.iter().zip(&dx).map(|(a, b)| a * b).sum::<f64>();
        p.push(row, rhs);
    }
    let (cz, dz) = cell.z_map();
    if z.hi.is_finite() {
        p.push(cz.to_vec(), z.hi - dz);
    }
    if z.lo.is_finite() {
        p.push(cz.iter().map(|v| -v).collect(), dz - z.lo);
    }
    Ok(p)
}

/// Whether `cell`'s output box lies entirely outside one halfspace of the
/// query (or outside the `z` range), so the cell cannot meet the query.
fn box_misses(cell: &AffineCell, query: &Polyhedron, z: ZRange) -> bool {
    let b = &cell.out_box;
    if b.hi[0] + BOX_SLACK < z.lo || b.lo[0] - BOX_SLACK > z.hi {
        return true;
    }
    query.a.iter().zip(&query.b).any(|(row, &rhs)| {
        let least: f64 = row
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let (lo, hi) = (b.lo[i + 1] - BOX_SLACK, b.hi[i + 1] + BOX_SLACK);
                if a >= 0.0 {
                    a * lo
                } else {
                    a * hi
                }
            })
            .sum();
        least > rhs
    })
}

fn hit_of(
    k: usize,
    cell: &AffineCell,
    query: &Polyhedron,
    z: ZRange,
    rho0: &InitialDistribution,
) -> Result<Option<QueryHit>> {
    if query.dim == cell.h.dim && box_misses(cell, query, z) {
        return Ok(None);
    }
    let region = pull_back(cell, query, z)?;
    let (_, r) = chebyshev_center(&region, 1e6)?;
    if !(r >= MIN_CELL_RADIUS) {
        return Ok(None);
    }
    let (cz, dz) = cell.z_map();
    let z_lo = lp_solve(cz, &region, Sense::Minimize)?.value + dz;
    let z_hi = (lp_solve(cz, &region, Sense::Maximize)?.value + dz).max(z_lo);
    let (p_lo, p_hi) = mass_bounds(&region, None, rho0)?;
    let r0 = rho0.density(&cell.center);
    Ok(Some(QueryHit {
        source: k,
        region,
        z_lo,
        z_hi,
        rho_lo: r0 * g_of(z_lo, cell.t),
        rho_hi: r0 * g_of(z_hi, cell.t),
        p_lo,
        p_hi,
    }))
}

/// Every cell piece whose output meets the query, in cell order.
pub fn query_hits(
    cells: &[AffineCell],
    query: &Polyhedron,
    z: ZRange,
    rho0: &InitialDistribution,
) -> Result<Vec<QueryHit>> {
    let hits: Vec<Option<QueryHit>> = cells
        .par_iter()
        .enumerate()
        .map(|(k, c)| hit_of(k, c, query, z, rho0))
        .collect::<Result<_>>()?;
    Ok(hits.into_iter().flatten().collect())
}

/// Probability bracket that the learned flow maps an initial state into
/// `query` with its density output in `z`.
pub fn query_probability(
    cells: &[AffineCell],
    query: &Polyhedron,
    z: ZRange,
    rho0: &InitialDistribution,
) -> Result<(f64, f64)> {
    let hits = query_hits(cells, query, z, rho0)?;
    Ok(hits.iter().fold((0.0, 0.0), |(lo, hi), h| (lo + h.p_lo, hi + h.p_hi)))
}

/// A region of initial states that reaches the query set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardRegion {
    pub source: usize,
    pub region: Polyhedron,
    pub p_lo: f64,
    pub p_hi: f64,
}

/// Backward reachable set: per cell, the initial states whose learned image
/// lies in the query set (with `z` in range), with their probability bracket.
pub fn backward_reach(
    cells: &[AffineCell],
    query: &Polyhedron,
    z: ZRange,
    rho0: &InitialDistribution,
) -> Result<Vec<BackwardRegion>> {
    Ok(query_hits(cells, query, z, rho0)?
        .into_iter()
        .map(|h| BackwardRegion {
            source: h.source,
            region: h.region,
            p_lo: h.p_lo,
            p_hi: h.p_hi,
        })
        .collect())
}

/// Work counters of [`verify_safety`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VerifyStats {
    /// Linear programs solved to decide whether a cell meets the unsafe set.
    pub lp_calls: usize,
    /// Cells discarded by the bounding-box test.
    pub box_rejections: usize,
    /// Cells checked with the polyhedral (LP) test.
    pub poly_checks: usize,
    pub elapsed_ms: f64,
}

/// Result for one time slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceVerdict {
    pub t: f64,
    /// Indices of cells whose output meets the unsafe set.
    pub intersecting: Vec<usize>,
    pub p_lo: f64,
    pub p_hi: f64,
}

/// Outcome of [`verify_safety`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub safe: bool,
    /// Maximum over slices of the per-slice brackets.
    pub p_lo: f64,
    pub p_hi: f64,
    pub slices: Vec<SliceVerdict>,
    pub stats: VerifyStats,
}

/// Checks whether any cell output, at any time slice, meets
/// `{(z, x) | x ∈ unsafe_set, z ∈ z}`.
///
/// With `use_heuristic`, a cell is first tested by comparing its output
/// bounding box against the unsafe set's bounding box; only surviving cells
/// are checked with an LP. Box pruning is sound, so the verdict does not
/// depend on the heuristic.
pub fn verify_safety(
    slices: &[Partition],
    unsafe_set: &Polyhedron,
    z: ZRange,
    rho0: &InitialDistribution,
    use_heuristic: bool,
) -> Result<Verdict> {
    verify_with(slices, unsafe_set, |_| Some(z), rho0, use_heuristic)
}

/// [`verify_safety`] with the constraint stated on the absolute density
/// `ρ = ρ0(x̄)·exp(t·z)` instead of on `z`: each cell's admissible `z` range
/// follows from `ρ0` at its center `x̄` and the slice time. Cells whose
/// density cannot enter `[rho_lo, rho_hi]` (zero `ρ0`, or `t = 0` with `ρ0`
/// outside the band) are excluded without an LP.
pub fn verify_density_range(
    slices: &[Partition],
    unsafe_set: &Polyhedron,
    rho_lo: f64,
    rho_hi: f64,
    rho0: &InitialDistribution,
    use_heuristic: bool,
) -> Result<Verdict> {
    if !(rho_lo >= 0.0) || rho_hi.is_nan() || rho_lo > rho_hi {
        return Err(Error::Argument(format!("invalid density range [{rho_lo}, {rho_hi}]")));
    }
    verify_with(
        slices,
        unsafe_set,
        |cell| {
            let r0 = rho0.density(&cell.center);
            if r0 <= 0.0 {
                return (rho_lo <= 0.0).then_some(ZRange::UNBOUNDED);
            }
            if cell.t <= 0.0 {
                return (rho_lo <= r0 && r0 <= rho_hi).then_some(ZRange::UNBOUNDED);
            }
            let z_of = |rho: f64| (rho.ln() - r0.ln()) / cell.t;
            Some(ZRange {
                lo: z_of(rho_lo),
                hi: z_of(rho_hi),
            })
        },
        rho0,
        use_heuristic,
    )
}

fn verify_with(
    slices: &[Partition],
    unsafe_set: &Polyhedron,
    z_of: impl Fn(&AffineCell) -> Option<ZRange> + Sync,
    rho0: &InitialDistribution,
    use_heuristic: bool,
) -> Result<Verdict> {
    if slices.is_empty() {
        return Err(Error::Argument("verification needs at least one time slice".into()));
    }
    let start = Instant::now();
    let unsafe_box = match bounding_box(unsafe_set) {
        Ok(bb) => bb,
        Err(Error::Infeasible) => {
            return Ok(Verdict {
                safe: true,
                p_lo: 0.0,
                p_hi: 0.0,
                slices: slices
                    .iter()
                    .map(|s| SliceVerdict {
                        t: s.t,
                        intersecting: vec![],
                        p_lo: 0.0,
                        p_hi: 0.0,
                    })
                    .collect(),
                stats: VerifyStats::default(),
            })
        }
        Err(e) => return Err(e),
    };

    let lp_calls = AtomicUsize::new(0);
    let box_rejections = AtomicUsize::new(0);
    let poly_checks = AtomicUsize::new(0);
    let mut out = Vec::with_capacity(slices.len());
    for part in slices {
        let hits: Vec<Option<QueryHit>> = part
            .cells
            .par_iter()
            .enumerate()
            .map(|(k, cell)| {
                let Some(z) = z_of(cell) else { return Ok(None) };
                if use_heuristic {
                    let mut q_lo = vec![z.lo];
                    q_lo.extend_from_slice(&unsafe_box.lo);
                    let mut q_hi = vec![z.hi];
                    q_hi.extend_from_slice(&unsafe_box.hi);
                    let query_box = HyperRectangle { lo: q_lo, hi: q_hi };
                    let padded = HyperRectangle {
                        lo: cell.out_box.lo.iter().map(|v| v - BOX_SLACK).collect(),
                        hi: cell.out_box.hi.iter().map(|v| v + BOX_SLACK).collect(),
                    };
                    if !boxes_intersect(&padded, &query_box) {
                        box_rejections.fetch_add(1, Ordering::Relaxed);
                        return Ok(None);
                    }
                }
                poly_checks.fetch_add(1, Ordering::Relaxed);
                lp_calls.fetch_add(1, Ordering::Relaxed);
                let region = pull_back(cell, unsafe_set, z)?;
                if !is_feasible(&region) {
                    return Ok(None);
                }
                Ok(Some(hit_of(k, cell, unsafe_set, z, rho0)?.unwrap_or(QueryHit {
                    source: k,
                    region,
                    z_lo: f64::NAN,
                    z_hi: f64::NAN,
                    rho_lo: 0.0,
                    rho_hi: 0.0,
                    p_lo: 0.0,
                    p_hi: 0.0,
                })))
            })
            .collect::<Result<_>>()?;
        let hits: Vec<QueryHit> = hits.into_iter().flatten().collect();
        let (p_lo, p_hi) = hits.iter().fold((0.0, 0.0), |(a, b), h| (a + h.p_lo, b + h.p_hi));
        out.push(SliceVerdict {
            t: part.t,
            intersecting: hits.iter().map(|h| h.source).collect(),
            p_lo,
            p_hi,
        });
    }
    let safe = out.iter().all(|s| s.intersecting.is_empty());
    Ok(Verdict {
        safe,
        p_lo: out.iter().map(|s| s.p_lo).fold(0.0, f64::max),
        p_hi: out.iter().map(|s| s.p_hi).fold(0.0, f64::max),
        slices: out,
        stats: VerifyStats {
            lp_calls: lp_calls.into_inner(),
            box_rejections: box_rejections.into_inner(),
            poly_checks: poly_checks.into_inner(),
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    })
}
