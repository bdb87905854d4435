//! Density estimators, KL scoring and reachable-volume analysis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::InitialDistribution;
use crate::error::{Error, Result};
use crate::liouville::TrajectoryDataset;
use crate::net::{density_estimate, DensityNet};
use crate::reach::ReachCell;

/// Histograms are refused above this dimension.
pub const MAX_HISTOGRAM_DIM: usize = 4;
/// Default density floor of [`kl_divergence`].
pub const DEFAULT_KL_FLOOR: f64 = 1e-12;

/// One ground-truth point: the state reached from `x0` after `t` and the
/// true density there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub x0: Vec<f64>,
    pub t: f64,
    pub state: Vec<f64>,
    pub rho: f64,
}

/// Ground-truth samples at step `k` of every trajectory carrying densities.
pub fn truth_at_step(data: &TrajectoryDataset, k: usize) -> Result<Vec<TruthSample>> {
    data.trajectories
        .iter()
        .enumerate()
        .map(|(i, tr)| {
            let rho = tr
                .rho
                .as_ref()
                .ok_or_else(|| Error::Argument(format!("trajectory {i} has no density labels")))?;
            if k >= tr.states.len() {
                return Err(Error::Argument(format!("trajectory {i} has no step {k}")));
            }
            Ok(TruthSample {
                x0: tr.x0.clone(),
                t: k as f64 * data.dt,
                state: tr.states[k].clone(),
                rho: rho[k],
            })
        })
        .collect()
}

/// Equal-width histogram over the bounding box of its samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: Vec<f64>,
    pub width: Vec<f64>,
    pub bins_per_dim: usize,
    pub counts: Vec<u64>,
    pub n: usize,
}

impl Histogram {
    fn bin_volume(&self) -> f64 {
        self.width.iter().product()
    }

    fn index(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for (j, &v) in x.iter().enumerate() {
            let u = (v - self.lo[j]) / self.width[j];
            // The relative slack keeps the sample that defined the upper edge
            // inside despite rounding in `(hi − lo) / width`.
            if !(u >= 0.0) || u > self.bins_per_dim as f64 * (1.0 + 1e-12) {
                return None;
            }
            let b = (u as usize).min(self.bins_per_dim - 1);
            idx = idx * self.bins_per_dim + b;
        }
        Some(idx)
    }

    /// `count / (n · bin volume)` at `x`, zero outside the grid.
    pub fn density(&self, x: &[f64]) -> f64 {
        match self.index(x) {
            Some(i) => self.counts[i] as f64 / (self.n as f64 * self.bin_volume()),
            None => 0.0,
        }
    }
}

/// Product-Epanechnikov kernel density estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    /// Samples sorted by their first coordinate.
    pub samples: Vec<Vec<f64>>,
    pub bandwidth: Vec<f64>,
}

impl Kde {
    pub fn density(&self, x: &[f64]) -> f64 {
        let h0 = self.bandwidth[0];
        let from = self.samples.partition_point(|s| s[0] < x[0] - h0);
        let to = self.samples.partition_point(|s| s[0] <= x[0] + h0);
        let norm: f64 = self.bandwidth.iter().product();
        let mut sum = 0.0;
        'outer: for s in &self.samples[from..to] {
            let mut k = 1.0;
            for j in 0..x.len() {
                let u = (x[j] - s[j]) / self.bandwidth[j];
                if u.abs() > 1.0 {
                    continue 'outer;
                }
                k *= 0.75 * (1.0 - u * u);
            }
            sum += k;
        }
        sum / (self.samples.len() as f64 * norm)
    }
}

/// A density estimate that can be scored against ground truth.
#[derive(Debug, Clone)]
pub enum DensityEstimator {
    Histogram(Histogram),
    Kde(Kde),
    /// The learned network: `ρ0(x0)·G(x0, t)` along the trajectory of the
    /// truth sample.
    Learned {
        net: DensityNet,
        rho0: InitialDistribution,
    },
    /// The exact density (for checking the scorer).
    Oracle,
}

impl DensityEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Histogram(_) => "hist",
            Self::Kde(_) => "kde",
            Self::Learned { .. } => "learned",
            Self::Oracle => "oracle",
        }
    }

    /// Estimated density at the truth sample.
    pub fn evaluate(&self, s: &TruthSample) -> Result<f64> {
        Ok(match self {
            Self::Histogram(h) => h.density(&s.state),
            Self::Kde(k) => k.density(&s.state),
            Self::Learned { net, rho0 } => density_estimate(net, &s.x0, s.t, rho0)?,
            Self::Oracle => s.rho,
        })
    }
}

fn check_samples(samples: &[Vec<f64>]) -> Result<usize> {
    let d = samples
        .first()
        .map(|s| s.len())
        .ok_or_else(|| Error::Argument("no samples".into()))?;
    if d == 0 {
        return Err(Error::Argument("samples have dimension 0".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            found: s.len(),
        });
    }
    Ok(d)
}

/// Histogram with `bins_per_dim` equal-width bins per coordinate over the
/// sample bounding box. Refuses more than four dimensions.
pub fn histogram_density(samples: &[Vec<f64>], bins_per_dim: usize) -> Result<DensityEstimator> {
    let d = check_samples(samples)?;
    if d > MAX_HISTOGRAM_DIM {
        return Err(Error::Argument(format!(
            "histogram in {d} dimensions is infeasible (limit {MAX_HISTOGRAM_DIM}): bins grow as bins^d"
        )));
    }
    if bins_per_dim == 0 {
        return Err(Error::Argument("bins_per_dim must be positive".into()));
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for s in samples {
        for j in 0..d {
            lo[j] = lo[j].min(s[j]);
            hi[j] = hi[j].max(s[j]);
        }
    }
    let width = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| {
            let range = h - l;
            (if range > 0.0 { range } else { 1.0 }) / bins_per_dim as f64
        })
        .collect();
    let mut hist = Histogram {
        lo,
        width,
        bins_per_dim,
        counts: vec![0; bins_per_dim.pow(d as u32)],
        n: samples.len(),
    };
    for s in samples {
        let i = hist.index(s).expect("sample inside its own bounding box");
        hist.counts[i] += 1;
    }
    Ok(DensityEstimator::Histogram(hist))
}

/// Default per-coordinate bandwidth `1.06·σ̂·n^(−1/(d+4))`.
pub fn silverman_bandwidth(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = check_samples(samples)?;
    let n = samples.len() as f64;
    let factor = 1.06 * n.powf(-1.0 / (d as f64 + 4.0));
    Ok((0..d)
        .map(|j| {
            let mean = samples.iter().map(|s| s[j]).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = var.sqrt();
            factor * if sd > 0.0 { sd } else { 1.0 }
        })
        .collect())
}

/// Epanechnikov KDE; `bandwidth` defaults to [`silverman_bandwidth`].
pub fn kde_density(samples: &[Vec<f64>], bandwidth: Option<Vec<f64>>) -> Result<DensityEstimator> {
    let d = check_samples(samples)?;
    let bandwidth = match bandwidth {
        Some(b) if b.len() == 1 && d > 1 => vec![b[0]; d],
        Some(b) => b,
        None => silverman_bandwidth(samples)?,
    };
    if bandwidth.len() != d {
        return Err(Error::Dimension {
            expected: d,
            found: bandwidth.len(),
        });
    }
    if bandwidth.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::Argument("bandwidth must be positive".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
    Ok(DensityEstimator::Kde(Kde {
        samples: sorted,
        bandwidth,
    }))
}

/// Monte-Carlo KL divergence `mean log(ρ_true / max(ρ_est, floor))` over
/// the truth samples.
pub fn kl_divergence(truth: &[TruthSample], est: &DensityEstimator, floor: f64) -> Result<f64> {
    if !(floor > 0.0) {
        return Err(Error::Argument("KL floor must be positive".into()));
    }
    if truth.is_empty() {
        return Err(Error::Argument("no truth samples".into()));
    }
    let terms: Vec<f64> = truth
        .par_iter()
        .map(|s| Ok((s.rho.max(floor) / est.evaluate(s)?.max(floor)).ln()))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Smallest set of highest-density reach cells whose probability lower
/// bounds reach `threshold`: returns its total volume and the achieved
/// probability lower bound. Cells are ranked by density upper bound; a
/// threshold of 1 takes every cell.
pub fn volume_at_probability(reach: &[ReachCell], threshold: f64) -> Result<(f64, f64)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Argument("threshold must lie in (0, 1]".into()));
    }
    let mut order: Vec<usize> = (0..reach.len()).collect();
    order.sort_by(|&a, &b| reach[b].rho_hi.total_cmp(&reach[a].rho_hi).then(a.cmp(&b)));
    let (mut vol, mut p) = (0.0, 0.0);
    for k in order {
        if threshold < 1.0 && p >= threshold {
            break;
        }
        vol += reach[k].volume;
        p += reach[k].p_lo;
    }
    Ok((vol, p))
}

/// Area of the convex hull of 2-D points (monotone chain + shoelace); zero
/// for fewer than three non-collinear points.
pub fn convex_hull_area_2d(points: &[Vec<f64>]) -> Result<f64> {
    if let Some(p) = points.iter().find(|p| p.len() != 2) {
        return Err(Error::Dimension {
            expected: 2,
            found: p.len(),
        });
    }
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return Ok(0.0);
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let area: f64 = (0..hull.len())
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    Ok(0.5 * area.abs())
}

/// Volume of the axis-aligned bounding box of the points.
pub fn bounding_box_volume(points: &[Vec<f64>]) -> Result<f64> {
    let d = check_samples(points)?;
    Ok((0..d)
        .map(|j| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| {
                (l.min(p[j]), h.max(p[j]))
            });
            hi - lo
        })
        .product())
}
