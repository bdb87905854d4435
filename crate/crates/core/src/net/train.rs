//! Mini-batch Adam training with best-validation checkpoint selection.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, loss_terms, LossTerms, LossWeights, ResidualForm};
use super::{DensityNet, Layer};
use crate::error::{Error, Result};
use crate::liouville::{TrainingBatch, TrajectoryDataset};
use crate::rng;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Smoothing of the running means that normalize the two loss terms.
const SCALE_MOMENTUM: f64 = 0.99;
/// Floor of the term normalizers.
const SCALE_FLOOR: f64 = 1e-12;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the flow-regression term relative to the Liouville term.
    pub lambda: f64,
    /// Initial Adam step size.
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Hidden layer widths (used when a fresh network is built for training).
    pub hidden: Vec<usize>,
    /// If set, each epoch draws this many time steps per trajectory instead
    /// of visiting every step.
    pub pairs_per_traj: Option<usize>,
    /// Maximum number of `(trajectory, step)` pairs in the fixed validation
    /// batch.
    pub val_pairs: usize,
    pub residual: ResidualForm,
    /// The step size decays geometrically to `lr·lr_final_ratio` at the last
    /// epoch.
    pub lr_final_ratio: f64,
    /// Divide each loss term by its running mean before weighting.
    pub normalize_terms: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lr: 1e-3,
            epochs: 200,
            batch_size: 256,
            seed: 0,
            hidden: vec![64, 64, 64],
            pairs_per_traj: None,
            val_pairs: 20_000,
            residual: ResidualForm::Gain,
            lr_final_ratio: 0.1,
            normalize_terms: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.val_pairs == 0 {
            return bad("epochs, batch size and validation pairs must be positive");
        }
        if self.pairs_per_traj == Some(0) {
            return bad("pairs per trajectory must be positive");
        }
        if !(self.lr_final_ratio > 0.0 && self.lr_final_ratio <= 1.0) {
            return bad("lr_final_ratio must lie in (0, 1]");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training terms over the epoch's batches.
    pub train: LossTerms,
    pub val: LossTerms,
    /// Validation objective with fixed normalizers; lower is better.
    pub val_score: f64,
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The network at the epoch with the lowest validation score.
    pub net: DensityNet,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: i32,
}

impl Adam {
    fn new(net: &DensityNet) -> Self {
        let zeros: Vec<Layer> = net.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn update(&mut self, net: &mut DensityNet, grads: &[Layer], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        let step = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[l], &mut self.v[l]);
            step(&mut layer.weights, &grads[l].weights, &mut m.weights, &mut v.weights);
            step(&mut layer.bias, &grads[l].bias, &mut m.bias, &mut v.bias);
        }
    }
}

fn check_dataset(net: &DensityNet, data: &TrajectoryDataset, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Argument(format!("{what} dataset is empty")));
    }
    if data.state_dim() != net.state_dim {
        return Err(Error::Dimension {
            expected: net.state_dim,
            found: data.state_dim(),
        });
    }
    if data.trajectories.iter().any(|t| t.states.len() < 2) {
        return Err(Error::Argument(format!(
            "{what} dataset has trajectories with fewer than 2 states"
        )));
    }
    Ok(())
}

/// Trains `net` on `train_data` and returns the best-validation network.
///
/// The input normalization is refit to `train_data` first. Validation uses a
/// fixed subsample of `val_data` (or of `train_data` when no validation set is
/// given). The validation score divides each term by its value for the
/// initial network, so scores are comparable across epochs regardless of the
/// running normalizers. Deterministic given `cfg.seed`.
pub fn train(
    mut net: DensityNet,
    train_data: &TrajectoryDataset,
    val_data: Option<&TrajectoryDataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_dataset(&net, train_data, "training")?;
    let val_data = val_data.unwrap_or(train_data);
    check_dataset(&net, val_data, "validation")?;
    if (val_data.dt - train_data.dt).abs() > 1e-12 {
        return Err(Error::Argument("training and validation time steps differ".into()));
    }

    net.fit_normalization(train_data);
    net.system = Some(train_data.system);
    net.dt = Some(train_data.dt);

    let mut val_pairs = TrainingBatch::all_pairs(val_data);
    if val_pairs.len() > cfg.val_pairs {
        val_pairs.shuffle(&mut rng::derive(cfg.seed, 0x7A1));
        val_pairs.truncate(cfg.val_pairs);
        val_pairs.sort_unstable();
    }
    let val_batch = TrainingBatch::from_pairs(val_data, &val_pairs)?;
    let initial = loss_terms(&net, &val_batch, cfg.residual)?;
    let reference = LossWeights {
        lambda: cfg.lambda,
        flow_scale: initial.flow.max(SCALE_FLOOR),
        liouville_scale: initial.liouville.max(SCALE_FLOOR),
    };
    let mut weights = if cfg.normalize_terms {
        reference
    } else {
        LossWeights::plain(cfg.lambda)
    };

    let mut adam = Adam::new(&net);
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let frac = if cfg.epochs > 1 {
            epoch as f64 / (cfg.epochs - 1) as f64
        } else {
            0.0
        };
        let lr = cfg.lr * cfg.lr_final_ratio.powf(frac);
        let mut r = rng::derive(cfg.seed, 0x10_000 + epoch as u64);
        let mut pairs: Vec<(usize, usize)> = match cfg.pairs_per_traj {
            None => TrainingBatch::all_pairs(train_data),
            Some(p) => train_data
                .trajectories
                .iter()
                .enumerate()
                .flat_map(|(i, tr)| {
                    let len = tr.states.len();
                    (0..p).map(|_| (i, r.gen_range(0..len))).collect::<Vec<_>>()
                })
                .collect(),
        };
        pairs.shuffle(&mut r);

        let mut sum = LossTerms::default();
        let mut batches = 0usize;
        for chunk in pairs.chunks(cfg.batch_size) {
            let batch = TrainingBatch::from_pairs(train_data, chunk)?;
            let (terms, grads) = loss_and_grad(&net, &batch, &weights, cfg.residual)?;
            if !terms.total(&weights).is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            adam.update(&mut net, &grads, lr);
            if cfg.normalize_terms {
                let mix = |s: f64, v: f64| (SCALE_MOMENTUM * s + (1.0 - SCALE_MOMENTUM) * v).max(SCALE_FLOOR);
                weights.flow_scale = mix(weights.flow_scale, terms.flow);
                weights.liouville_scale = mix(weights.liouville_scale, terms.liouville);
            }
            sum.flow += terms.flow;
            sum.liouville += terms.liouville;
            batches += 1;
        }
        let train_terms = LossTerms {
            flow: sum.flow / batches as f64,
            liouville: sum.liouville / batches as f64,
        };
        let val = loss_terms(&net, &val_batch, cfg.residual)?;
        let val_score = val.total(&reference);
        if !val_score.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        log::info!(
            "epoch {epoch}: lr {lr:.3e} train flow {:.3e} liouville {:.3e} | val flow {:.3e} liouville {:.3e} score {val_score:.4e}",
            train_terms.flow,
            train_terms.liouville,
            val.flow,
            val.liouville
        );
        if val_score < best.0 {
            best = (val_score, net.clone(), epoch);
        }
        history.push(EpochStats {
            epoch,
            lr,
            train: train_terms,
            val,
            val_score,
        });
    }
    Ok(TrainOutcome {
        net: best.1,
        history,
        best_epoch: best.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouville::build_dataset;
    use crate::systems::{SystemId, SystemSpec};

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 15,
            batch_size: 64,
            hidden: vec![16, 16],
            lr: 3e-3,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_reduces_validation_score_and_is_deterministic() {
        let spec = SystemSpec::new(SystemId::Scalar1d);
        let (tr, va) = build_dataset(&spec, 60, 20, 0.02, 4, 0.8).unwrap();
        let cfg = small_config();
        let run = || {
            let net = DensityNet::new(1, &cfg.hidden, cfg.seed).unwrap();
            train(net, &tr, Some(&va), &cfg).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.net, b.net);
        let first = a.history[0].val_score;
        let best = a.history[a.best_epoch].val_score;
        assert!(best < 0.2 * first, "first {first} best {best}");
        // The returned network is the best-scoring checkpoint.
        assert!(a.history.iter().all(|h| h.val_score >= best));
        assert_eq!(a.net.system, Some(SystemId::Scalar1d));
    }

    #[test]
    fn invalid_configs_rejected() {
        let spec = SystemSpec::new(SystemId::Scalar1d);
        let (tr, _) = build_dataset(&spec, 10, 5, 0.02, 4, 0.8).unwrap();
        let net = DensityNet::new(1, &[4], 0).unwrap();
        for cfg in [
            TrainConfig {
                lr: 0.0,
                ..small_config()
            },
            TrainConfig {
                lambda: -1.0,
                ..small_config()
            },
            TrainConfig {
                epochs: 0,
                ..small_config()
            },
        ] {
            assert!(matches!(train(net.clone(), &tr, None, &cfg), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn non_finite_training_reports_epoch() {
        let spec = SystemSpec::new(SystemId::Scalar1d);
        let (tr, _) = build_dataset(&spec, 10, 5, 0.02, 4, 0.8).unwrap();
        let cfg = TrainConfig {
            lr: 1e300,
            epochs: 3,
            normalize_terms: false,
            ..small_config()
        };
        let net = DensityNet::new(1, &[8], 0).unwrap();
        match train(net, &tr, None, &cfg) {
            Err(Error::TrainingDiverged { epoch }) => assert!(epoch < 3),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.best_epoch)),
        }
    }
}
