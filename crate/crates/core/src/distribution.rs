//! Bounded-support initial state densities.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::geometry::{bounding_box, lp_solve, vertices, HyperRectangle, Polyhedron, Sense};
use crate::rng;

/// Shape of an [`InitialDistribution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionKind {
    /// Uniform on the support box.
    Uniform,
    /// Axis-aligned Gaussian restricted to the support box and renormalized.
    TruncatedGaussian { mu: Vec<f64>, sigma: Vec<f64> },
}

/// Initial-state density `ρ0` with bounded box support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDistribution {
    pub kind: DistributionKind,
    pub support: HyperRectangle,
    /// Probability mass of the untruncated density inside the support (1 for
    /// the uniform case), so that the truncated density integrates to 1.
    pub normalizer: f64,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Mass of `N(mu, sigma²)` inside `[lo, hi]`, computed from whichever tail
/// keeps precision.
fn interval_mass(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    if a > 0.0 {
        std_normal_cdf(-a) - std_normal_cdf(-b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

impl InitialDistribution {
    /// Uniform density on `support`.
    pub fn uniform(support: HyperRectangle) -> Result<Self> {
        if !support.is_bounded() || !(support.volume() > 0.0) {
            return Err(Error::Argument(
                "uniform support must be a bounded box with positive volume".into(),
            ));
        }
        Ok(Self {
            kind: DistributionKind::Uniform,
            support,
            normalizer: 1.0,
        })
    }

    /// Gaussian with per-coordinate means and standard deviations, truncated
    /// to `support`.
    pub fn truncated_gaussian(support: HyperRectangle, mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let d = support.dim();
        if mu.len() != d || sigma.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: if mu.len() != d { mu.len() } else { sigma.len() },
            });
        }
        if !support.is_bounded() {
            return Err(Error::Argument("truncated Gaussian support must be bounded".into()));
        }
        if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Argument("sigma must be positive and finite".into()));
        }
        let normalizer: f64 = (0..d)
            .map(|i| interval_mass(mu[i], sigma[i], support.lo[i], support.hi[i]))
            .product();
        if !(normalizer > 0.0) {
            return Err(Error::PathologicalTruncation { rate: normalizer });
        }
        Ok(Self {
            kind: DistributionKind::TruncatedGaussian { mu, sigma },
            support,
            normalizer,
        })
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    /// `ρ0(x)`; zero outside the (closed) support.
    pub fn density(&self, x: &[f64]) -> f64 {
        if x.len() != self.dim() || !self.support.contains(x) {
            return 0.0;
        }
        match &self.kind {
            DistributionKind::Uniform => 1.0 / self.support.volume(),
            DistributionKind::TruncatedGaussian { mu, sigma } => {
                self.gaussian_unnormalized(x, mu, sigma) / self.normalizer
            }
        }
    }

    fn gaussian_unnormalized(&self, x: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
        let mut log = 0.0;
        for i in 0..x.len() {
            let u = (x[i] - mu[i]) / sigma[i];
            log += -0.5 * u * u - sigma[i].ln();
        }
        log -= 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI).ln();
        log.exp()
    }

    /// Lower and upper bounds of `ρ0` over `p ∩ support`.
    ///
    /// Uniform: constant on the support. Gaussian: the minimum of a
    /// log-concave density over a polytope sits at a vertex. The maximum is
    /// the minimum of the convex exponent `Σ (x_i − μ_i)² / 2σ_i²`, bounded
    /// from below by the value at `mu` clamped into the bounding box and
    /// refined by Frank–Wolfe iterations, whose duality gap certifies the
    /// bound. An empty intersection gives `(0, 0)`.
    pub fn bounds_over(&self, p: &Polyhedron) -> Result<(f64, f64)> {
        let region = crate::geometry::intersect(p, &self.support.to_polyhedron())?;
        let bb = match bounding_box(&region) {
            Ok(bb) => bb,
            Err(Error::Infeasible) => return Ok((0.0, 0.0)),
            Err(e) => return Err(e),
        };
        match &self.kind {
            DistributionKind::Uniform => {
                let v = 1.0 / self.support.volume();
                Ok((v, v))
            }
            DistributionKind::TruncatedGaussian { mu, sigma } => {
                let peak: Vec<f64> = mu
                    .iter()
                    .zip(bb.lo.iter().zip(&bb.hi))
                    .map(|(m, (l, h))| m.clamp(*l, *h))
                    .collect();
                let verts = vertices(&region)?;
                let lo = verts
                    .iter()
                    .map(|v| self.density_unclipped(v))
                    .fold(f64::INFINITY, f64::min);
                let exponent = |x: &[f64]| -> f64 {
                    x.iter()
                        .zip(mu.iter().zip(sigma))
                        .map(|(x, (m, s))| (x - m) * (x - m) / (2.0 * s * s))
                        .sum()
                };
                let peak_exp = exponent(&peak);
                let min_exp = if region.contains(&peak, 0.0) {
                    peak_exp
                } else {
                    let start = verts.iter().min_by(|a, b| exponent(a).total_cmp(&exponent(b)));
                    match start {
                        Some(x) => self.min_exponent_lower_bound(&region, x.clone(), peak_exp, &exponent)?,
                        None => peak_exp,
                    }
                };
                let hi = self.density_unclipped(&peak) * (peak_exp - min_exp).min(0.0).exp();
                let lo = if lo.is_finite() { lo.min(hi) } else { 0.0 };
                Ok((lo, hi))
            }
        }
    }

    /// Certified lower bound on the minimum of the Gaussian exponent over
    /// `region`, by Frank–Wolfe from the feasible point `x` with exact line
    /// search. `floor` is an already known lower bound.
    fn min_exponent_lower_bound(
        &self,
        region: &Polyhedron,
        mut x: Vec<f64>,
        floor: f64,
        exponent: &dyn Fn(&[f64]) -> f64,
    ) -> Result<f64> {
        const MAX_ITERS: usize = 64;
        /// Stop once the bound is within this much of the iterate (a factor
        /// of about 1.001 in density).
        const GAP_TOL: f64 = 1e-3;
        let DistributionKind::TruncatedGaussian { mu, sigma } = &self.kind else {
            return Ok(floor);
        };
        let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (2.0 * s * s)).collect();
        let mut bound = floor;
        for _ in 0..MAX_ITERS {
            let fx = exponent(&x);
            if fx - bound <= GAP_TOL {
                break;
            }
            let g: Vec<f64> = (0..x.len()).map(|i| 2.0 * w[i] * (x[i] - mu[i])).collect();
            let s = lp_solve(&g, region, Sense::Minimize)?.point;
            let gap: f64 = (0..x.len()).map(|i| g[i] * (x[i] - s[i])).sum();
            // Slack for the LP's round-off keeps the bound conservative.
            bound = bound.max(fx - gap.max(0.0) - 1e-9 * (1.0 + fx));
            let d: Vec<f64> = (0..x.len()).map(|i| s[i] - x[i]).collect();
            let curvature: f64 = (0..x.len()).map(|i| w[i] * d[i] * d[i]).sum();
            if curvature <= 0.0 {
                break;
            }
            let step = (gap / (2.0 * curvature)).clamp(0.0, 1.0);
            for i in 0..x.len() {
                x[i] += step * d[i];
            }
        }
        Ok(bound)
    }

    /// Density formula without the support test (for points that are inside
    /// the support up to round-off).
    fn density_unclipped(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DistributionKind::Uniform => 1.0 / self.support.volume(),
            DistributionKind::TruncatedGaussian { mu, sigma } => {
                self.gaussian_unnormalized(x, mu, sigma) / self.normalizer
            }
        }
    }
}

/// Draws `n` i.i.d. samples from `dist`, deterministically from `seed`.
///
/// The truncated Gaussian factorizes over coordinates, so each coordinate is
/// sampled by rejection from its own one-dimensional normal.
pub fn sample_initial(dist: &InitialDistribution, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Argument("sample count must be at least 1".into()));
    }
    let mut r = rng::seeded(seed);
    let d = dist.dim();
    let (lo, hi) = (&dist.support.lo, &dist.support.hi);
    match &dist.kind {
        DistributionKind::Uniform => Ok((0..n)
            .map(|_| {
                (0..d)
                    .map(|i| {
                        let u: f64 = r.gen();
                        (lo[i] + (hi[i] - lo[i]) * u).min(hi[i])
                    })
                    .collect()
            })
            .collect()),
        DistributionKind::TruncatedGaussian { mu, sigma } => {
            if dist.normalizer < 1e-4 {
                return Err(Error::PathologicalTruncation { rate: dist.normalizer });
            }
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let mut x = Vec::with_capacity(d);
                for i in 0..d {
                    loop {
                        let z: f64 = StandardNormal.sample(&mut r);
                        let v = mu[i] + sigma[i] * z;
                        if v >= lo[i] && v <= hi[i] {
                            x.push(v);
                            break;
                        }
                    }
                }
                out.push(x);
            }
            Ok(out)
        }
    }
}
