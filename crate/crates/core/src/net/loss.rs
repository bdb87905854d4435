//! Training objective: flow-map regression plus the Liouville residual on the
//! density gain, with analytic gradients.
//!
//! Each batch element `(x0, t_k)` is evaluated together with a partner input
//! `(x0, t_k ± Δt)` so that the time derivative of the gain can be formed by
//! a finite difference. Both rows go through one batched forward pass.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{DensityNet, Layer, G_EXPONENT_CLIP};
use crate::error::{Error, Result};
use crate::liouville::TrainingBatch;

/// Which form of the Liouville residual is penalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualForm {
    /// `Ġ + G·∇·f`, with `Ġ` the forward difference of the gain (backward
    /// difference at the last step of a trajectory).
    #[default]
    Gain,
    /// The same equation divided by `G`: `d(t·z)/dt + ∇·f`, with the
    /// divergence averaged over the two steps of the difference. Second-order
    /// accurate in `Δt` and insensitive to the magnitude of `G`.
    LogGain,
}

/// Weights of the two loss terms: the objective is
/// `lambda·flow/flow_scale + liouville/liouville_scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub flow_scale: f64,
    pub liouville_scale: f64,
}

impl LossWeights {
    /// Unnormalized weights: `lambda·flow + liouville`.
    pub fn plain(lambda: f64) -> Self {
        Self {
            lambda,
            flow_scale: 1.0,
            liouville_scale: 1.0,
        }
    }
}

/// Batch means of the two loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    /// Mean squared flow error `‖Φ − x‖²`.
    pub flow: f64,
    /// Mean squared Liouville residual.
    pub liouville: f64,
}

impl LossTerms {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.lambda * self.flow / w.flow_scale + self.liouville / w.liouville_scale
    }
}

fn weights_view(layer: &Layer) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((layer.rows, layer.cols), &layer.weights).expect("layer shape")
}

/// Activations entering each layer, plus the final output.
struct Tape {
    acts: Vec<Array2<f64>>,
    out: Array2<f64>,
}

fn forward_batch(net: &DensityNet, input: Array2<f64>) -> Tape {
    let last = net.layers.len() - 1;
    let mut acts = vec![input];
    let mut out = None;
    for (l, layer) in net.layers.iter().enumerate() {
        let mut h = acts[l].dot(&weights_view(layer).t());
        h += &ArrayView1::from(&layer.bias);
        if l < last {
            h.mapv_inplace(|v| v.max(0.0));
            acts.push(h);
        } else {
            out = Some(h);
        }
    }
    Tape {
        acts,
        out: out.expect("network has at least one layer"),
    }
}

/// `exp(e)` with the same clipping as [`super::g_of`] (without the warning),
/// and whether the exponent was inside the unclipped range.
fn exp_clipped(e: f64) -> (f64, bool) {
    (
        e.clamp(-G_EXPONENT_CLIP, G_EXPONENT_CLIP).exp(),
        e.abs() <= G_EXPONENT_CLIP,
    )
}

fn check_batch(net: &DensityNet, batch: &TrainingBatch) -> Result<()> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Argument("empty training batch".into()));
    }
    if !(batch.dt > 0.0) {
        return Err(Error::Argument("batch time step must be positive".into()));
    }
    if batch.x0.len() != n
        || batch.target.len() != n
        || batch.div.len() != n
        || batch.div_partner.len() != n
        || batch.forward.len() != n
    {
        return Err(Error::Argument("training batch arrays differ in length".into()));
    }
    for v in batch.x0.iter().chain(&batch.target) {
        if v.len() != net.state_dim {
            return Err(Error::Dimension {
                expected: net.state_dim,
                found: v.len(),
            });
        }
    }
    Ok(())
}

/// Builds the `2B × (n+1)` normalized input matrix: primary rows first, then
/// the partner rows.
fn batch_input(net: &DensityNet, batch: &TrainingBatch) -> Array2<f64> {
    let b = batch.len();
    let d = net.input_dim();
    let mut input = Array2::zeros((2 * b, d));
    for i in 0..b {
        let tp = partner_time(batch, i);
        for (row, t) in [(i, batch.t[i]), (b + i, tp)] {
            for j in 0..d {
                let v = if j < net.state_dim { batch.x0[i][j] } else { t };
                input[[row, j]] = (v - net.norm.shift[j]) / net.norm.scale[j];
            }
        }
    }
    input
}

fn partner_time(batch: &TrainingBatch, i: usize) -> f64 {
    if batch.forward[i] {
        batch.t[i] + batch.dt
    } else {
        batch.t[i] - batch.dt
    }
}

/// Per-element Liouville residual and its partial derivatives with respect to
/// the primary and partner `z` outputs.
fn residual(form: ResidualForm, batch: &TrainingBatch, i: usize, z: f64, zp: f64) -> (f64, f64, f64) {
    let s = if batch.forward[i] { 1.0 } else { -1.0 };
    let (t, tp, dt) = (batch.t[i], partner_time(batch, i), batch.dt);
    match form {
        ResidualForm::Gain => {
            let div = batch.div[i];
            let (g, g_live) = exp_clipped(t * z);
            let (gp, gp_live) = exp_clipped(tp * zp);
            let r = s * (gp - g) / dt + g * div;
            let dz = if g_live { (div - s / dt) * g * t } else { 0.0 };
            let dzp = if gp_live { s * gp * tp / dt } else { 0.0 };
            (r, dz, dzp)
        }
        ResidualForm::LogGain => {
            let div = 0.5 * (batch.div[i] + batch.div_partner[i]);
            let r = s * (tp * zp - t * z) / dt + div;
            (r, -s * t / dt, s * tp / dt)
        }
    }
}

/// Loss terms of `net` on `batch`.
pub fn loss_terms(net: &DensityNet, batch: &TrainingBatch, form: ResidualForm) -> Result<LossTerms> {
    check_batch(net, batch)?;
    let tape = forward_batch(net, batch_input(net, batch));
    Ok(terms_from_output(batch, &tape.out, form, None))
}

fn terms_from_output(
    batch: &TrainingBatch,
    out: &Array2<f64>,
    form: ResidualForm,
    mut dout: Option<(&mut Array2<f64>, &LossWeights)>,
) -> LossTerms {
    let b = batch.len();
    let bf = b as f64;
    let mut terms = LossTerms::default();
    for i in 0..b {
        let (r, dz, dzp) = residual(form, batch, i, out[[i, 0]], out[[b + i, 0]]);
        terms.liouville += r * r;
        let mut flow_i = 0.0;
        for (j, x) in batch.target[i].iter().enumerate() {
            let e = out[[i, j + 1]] - x;
            flow_i += e * e;
            if let Some((g, w)) = dout.as_mut() {
                g[[i, j + 1]] = w.lambda / w.flow_scale * 2.0 * e / bf;
            }
        }
        terms.flow += flow_i;
        if let Some((g, w)) = dout.as_mut() {
            let c = 2.0 * r / (bf * w.liouville_scale);
            g[[i, 0]] = c * dz;
            g[[b + i, 0]] = c * dzp;
        }
    }
    terms.flow /= bf;
    terms.liouville /= bf;
    terms
}

/// Unnormalized objective `lambda·mean‖Φ − x‖² + mean(Ġ + G·∇·f)²`.
pub fn loss(net: &DensityNet, batch: &TrainingBatch, lambda: f64) -> Result<f64> {
    Ok(loss_terms(net, batch, ResidualForm::Gain)?.total(&LossWeights::plain(lambda)))
}

/// Loss terms together with the gradient of `terms.total(weights)` with
/// respect to every layer parameter (returned in the same layout as
/// `net.layers`).
pub fn loss_and_grad(
    net: &DensityNet,
    batch: &TrainingBatch,
    weights: &LossWeights,
    form: ResidualForm,
) -> Result<(LossTerms, Vec<Layer>)> {
    check_batch(net, batch)?;
    let tape = forward_batch(net, batch_input(net, batch));
    let mut delta = Array2::zeros(tape.out.raw_dim());
    let terms = terms_from_output(batch, &tape.out, form, Some((&mut delta, weights)));

    let mut grads: Vec<Layer> = net.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect();
    for l in (0..net.layers.len()).rev() {
        let a_prev = &tape.acts[l];
        let gw = delta.t().dot(a_prev);
        grads[l].weights = gw.iter().copied().collect();
        grads[l].bias = delta.sum_axis(Axis(0)).to_vec();
        if l > 0 {
            let mut d = delta.dot(&weights_view(&net.layers[l]));
            d.zip_mut_with(a_prev, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = d;
        }
    }
    Ok((terms, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouville::TrajectoryDataset;
    use crate::net::InputNorm;
    use crate::systems::{SystemId, Trajectory};
    use rand::Rng;

    fn constant_dataset() -> TrajectoryDataset {
        let trajectories = [[0.5, -1.0], [1.5, 2.0]]
            .iter()
            .map(|x0| Trajectory {
                x0: x0.to_vec(),
                states: vec![x0.to_vec(); 4],
                times: (0..4).map(|k| k as f64 * 0.1).collect(),
                divergences: vec![0.0; 4],
                rho: None,
            })
            .collect();
        TrajectoryDataset {
            system: SystemId::Vdp,
            dt: 0.1,
            trajectories,
        }
    }

    /// One hidden layer that reproduces `x0` through `relu(x) − relu(−x)` and
    /// outputs `z ≡ 0`.
    fn identity_net() -> DensityNet {
        let mut l1 = Layer::zeros(4, 3);
        let mut l2 = Layer::zeros(3, 4);
        for j in 0..2 {
            l1.weights[(2 * j) * 3 + j] = 1.0;
            l1.weights[(2 * j + 1) * 3 + j] = -1.0;
            l2.weights[(j + 1) * 4 + 2 * j] = 1.0;
            l2.weights[(j + 1) * 4 + 2 * j + 1] = -1.0;
        }
        DensityNet {
            state_dim: 2,
            layers: vec![l1, l2],
            norm: InputNorm::identity(3),
            system: None,
            dt: None,
        }
    }

    #[test]
    fn exact_model_has_zero_loss() {
        let data = constant_dataset();
        let batch = TrainingBatch::from_pairs(&data, &TrainingBatch::all_pairs(&data)).unwrap();
        let net = identity_net();
        assert_eq!(loss(&net, &batch, 1.0).unwrap(), 0.0);
        assert_eq!(loss_terms(&net, &batch, ResidualForm::LogGain).unwrap().liouville, 0.0);
    }

    #[test]
    fn zero_lambda_is_pure_residual() {
        let data = constant_dataset();
        let batch = TrainingBatch::from_pairs(&data, &TrainingBatch::all_pairs(&data)).unwrap();
        let net = DensityNet::new(2, &[6, 5], 3).unwrap();
        let terms = loss_terms(&net, &batch, ResidualForm::Gain).unwrap();
        assert!(terms.flow > 0.0 && terms.liouville > 0.0);
        assert_eq!(loss(&net, &batch, 0.0).unwrap(), terms.liouville);
    }

    fn random_batch(seed: u64) -> (DensityNet, TrainingBatch) {
        let mut r = crate::rng::seeded(seed);
        let mut net = DensityNet::new(2, &[7, 6], seed).unwrap();
        for l in &mut net.layers {
            for b in &mut l.bias {
                *b = r.gen_range(-0.3..0.3);
            }
        }
        net.norm = InputNorm {
            shift: vec![0.1, -0.2, 0.3],
            scale: vec![1.5, 0.8, 0.4],
        };
        let n = 12;
        let batch = TrainingBatch {
            x0: (0..n)
                .map(|_| vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)])
                .collect(),
            t: (0..n).map(|k| (k % 5) as f64 * 0.1).collect(),
            target: (0..n)
                .map(|_| vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)])
                .collect(),
            div: (0..n).map(|_| r.gen_range(-2.0..2.0)).collect(),
            div_partner: (0..n).map(|_| r.gen_range(-2.0..2.0)).collect(),
            forward: (0..n).map(|k| k % 5 != 4).collect(),
            dt: 0.1,
        };
        (net, batch)
    }

    fn param_mut(net: &mut DensityNet, l: usize, p: usize) -> &mut f64 {
        let nw = net.layers[l].weights.len();
        if p < nw {
            &mut net.layers[l].weights[p]
        } else {
            &mut net.layers[l].bias[p - nw]
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for form in [ResidualForm::Gain, ResidualForm::LogGain] {
            let (mut net, batch) = random_batch(11);
            let w = LossWeights {
                lambda: 0.7,
                flow_scale: 2.0,
                liouville_scale: 0.5,
            };
            let (_, grads) = loss_and_grad(&net, &batch, &w, form).unwrap();
            let mut worst: f64 = 0.0;
            for l in 0..net.layers.len() {
                let nw = net.layers[l].weights.len();
                for p in 0..nw + net.layers[l].bias.len() {
                    let h = 1e-5;
                    let f = |net: &DensityNet| loss_terms(net, &batch, form).unwrap().total(&w);
                    let orig = *param_mut(&mut net, l, p);
                    *param_mut(&mut net, l, p) = orig + h;
                    let up = f(&net);
                    *param_mut(&mut net, l, p) = orig - h;
                    let down = f(&net);
                    *param_mut(&mut net, l, p) = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = if p < nw {
                        grads[l].weights[p]
                    } else {
                        grads[l].bias[p - nw]
                    };
                    let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
            }
            assert!(worst < 1e-4, "{form:?}: worst relative error {worst:e}");
        }
    }
}
