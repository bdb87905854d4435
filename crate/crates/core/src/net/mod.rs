//! The joint flow-map / density-gain ReLU network.
//!
//! The network maps `(x0, t)` to `(z, x̂)`: `x̂` estimates the state reached
//! from `x0` after time `t`, and `G = exp(t·z)` estimates the multiplicative
//! change of density along that trajectory. Writing the gain this way makes
//! `G(x0, 0) = 1` hold for every network.

mod checkpoint;
mod loss;
mod train;

use std::sync::atomic::{AtomicBool, Ordering};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use loss::{loss, loss_and_grad, loss_terms, LossTerms, LossWeights, ResidualForm};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome};

use crate::distribution::InitialDistribution;
use crate::error::{Error, Result};
use crate::liouville::TrajectoryDataset;
use crate::rng;
use crate::systems::SystemId;

/// Exponent magnitude at which [`g_of`] saturates.
pub const G_EXPONENT_CLIP: f64 = 60.0;

/// One affine layer; `weights` is row-major `rows × cols` (output × input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    pub fn w(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.cols + j]
    }

    /// `W·x + b`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| {
                let row = &self.weights[i * self.cols..(i + 1) * self.cols];
                self.bias[i] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

/// Per-coordinate input normalization `u = (v − shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }
}

/// Feed-forward ReLU network over `(x0, t)` with output `(z, x̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityNet {
    pub state_dim: usize,
    /// Affine layers; ReLU follows every layer except the last.
    pub layers: Vec<Layer>,
    pub norm: InputNorm,
    pub system: Option<SystemId>,
    pub dt: Option<f64>,
}

impl DensityNet {
    /// He-initialized network with the given hidden widths and identity
    /// normalization.
    pub fn new(state_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if state_dim == 0 || hidden.contains(&0) {
            return Err(Error::Argument("layer widths must be positive".into()));
        }
        let mut r = rng::derive(seed, 0x1417);
        let mut sizes = vec![state_dim + 1];
        sizes.extend_from_slice(hidden);
        sizes.push(state_dim + 1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                Layer {
                    rows: fan_out,
                    cols: fan_in,
                    weights: (0..fan_in * fan_out).map(|_| normal.sample(&mut r)).collect(),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            state_dim,
            layers,
            norm: InputNorm::identity(state_dim + 1),
            system: None,
            dt: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + 1
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.rows).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Sets the input normalization to zero mean and unit half-range per
    /// coordinate over the `(x0, t)` pairs of `data`.
    pub fn fit_normalization(&mut self, data: &TrajectoryDataset) {
        let d = self.input_dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut sum = vec![0.0; d];
        let mut count = 0usize;
        for tr in &data.trajectories {
            for k in 0..tr.states.len() {
                let t = k as f64 * data.dt;
                for (i, v) in tr.x0.iter().copied().chain(std::iter::once(t)).enumerate() {
                    lo[i] = lo[i].min(v);
                    hi[i] = hi[i].max(v);
                    sum[i] += v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return;
        }
        self.norm = InputNorm {
            shift: sum.iter().map(|s| s / count as f64).collect(),
            scale: lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| {
                    let half = 0.5 * (h - l);
                    if half > 0.0 {
                        half
                    } else {
                        1.0
                    }
                })
                .collect(),
        };
    }

    fn normalized_input(&self, x0: &[f64], t: f64) -> Vec<f64> {
        x0.iter()
            .copied()
            .chain(std::iter::once(t))
            .zip(self.norm.shift.iter().zip(&self.norm.scale))
            .map(|(v, (s, c))| (v - s) / c)
            .collect()
    }

    /// Raw network output `[z, x̂...]` at `(x0, t)`.
    pub fn output(&self, x0: &[f64], t: f64) -> Vec<f64> {
        let mut h = self.normalized_input(x0, t);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h);
            if l < last {
                for v in &mut h {
                    *v = v.max(0.0);
                }
            }
        }
        h
    }
}

/// Evaluates the network: intermediate density output `z` and flow estimate
/// `x̂`.
pub fn forward(net: &DensityNet, x0: &[f64], t: f64) -> Result<(f64, Vec<f64>)> {
    if x0.len() != net.state_dim {
        return Err(Error::Dimension {
            expected: net.state_dim,
            found: x0.len(),
        });
    }
    let mut out = net.output(x0, t);
    let z = out.remove(0);
    Ok((z, out))
}

static SATURATION_WARNED: AtomicBool = AtomicBool::new(false);

/// Density gain `G = exp(t·z)`, with the exponent clipped to ±60.
pub fn g_of(z: f64, t: f64) -> f64 {
    let e = t * z;
    if e.abs() > G_EXPONENT_CLIP && !SATURATION_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("density gain exponent {e:.3e} saturated at ±{G_EXPONENT_CLIP}");
    }
    e.clamp(-G_EXPONENT_CLIP, G_EXPONENT_CLIP).exp()
}

/// `ρ(Φ(x0, t), t) = ρ0(x0) · G(x0, t)`; zero outside the support of `ρ0`.
pub fn density_estimate(net: &DensityNet, x0: &[f64], t: f64, rho0: &InitialDistribution) -> Result<f64> {
    let r0 = rho0.density(x0);
    if r0 == 0.0 {
        return Ok(0.0);
    }
    let (z, _) = forward(net, x0, t)?;
    Ok(r0 * g_of(z, t))
}
