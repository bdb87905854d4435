//! Ground-truth densities along trajectories and training-data assembly.
//!
//! Along a trajectory of `ẋ = f(x)` the density obeys `ρ̇ = −(∇·f) ρ`. The
//! density is integrated in log space so neither strong contraction nor
//! strong expansion can under- or overflow.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::sample_initial;
use crate::error::{Error, Result};
use crate::rng;
use crate::systems::{rk4_step, simulate_with, Dynamics, SystemId, SystemSpec, Trajectory, SUBSTEPS};

/// A state together with its probability density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub x: Vec<f64>,
    pub rho: f64,
}

/// Integrates the augmented system `(ẋ, d log ρ/dt) = (f(x), −∇·f(x))` from
/// `(x0, rho0)` to time `t` with RK4 steps no longer than `dt_internal`.
pub fn augmented_flow(
    dynamics: &dyn Dynamics,
    x0: &[f64],
    rho0: f64,
    t: f64,
    dt_internal: f64,
) -> Result<AugmentedState> {
    if x0.len() != dynamics.dim() {
        return Err(Error::Dimension {
            expected: dynamics.dim(),
            found: x0.len(),
        });
    }
    if !(rho0 >= 0.0) || !(t >= 0.0) || !(dt_internal > 0.0) {
        return Err(Error::Argument(
            "augmented flow needs rho0 >= 0, t >= 0 and dt_internal > 0".into(),
        ));
    }
    let n = x0.len();
    let steps = (t / dt_internal).ceil().max(if t > 0.0 { 1.0 } else { 0.0 }) as usize;
    let h = if steps > 0 { t / steps as f64 } else { 0.0 };
    let mut state = x0.to_vec();
    state.push(0.0);
    let field = |y: &[f64], out: &mut [f64]| {
        dynamics.eval(&y[..n], &mut out[..n]);
        out[n] = -dynamics.divergence(&y[..n]);
    };
    for step in 0..steps {
        rk4_step(field, &mut state, h);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: step + 1,
                detail: "non-finite augmented state".into(),
            });
        }
    }
    let log_gain = state.pop().unwrap();
    let rho = if rho0 == 0.0 { 0.0 } else { rho0 * log_gain.exp() };
    if !rho.is_finite() {
        return Err(Error::Divergence {
            step: steps,
            detail: "density overflow".into(),
        });
    }
    Ok(AugmentedState { x: state, rho })
}

/// Like [`simulate_with`] but also records the density `ρ0(x0)·G` at every
/// recorded step. The state sequence is identical to a plain simulation.
pub fn simulate_with_density(
    dynamics: &dyn Dynamics,
    x0: &[f64],
    rho0: f64,
    dt: f64,
    steps: usize,
) -> Result<Trajectory> {
    let mut traj = simulate_with(dynamics, x0, dt, steps, SUBSTEPS)?;
    let n = x0.len();
    let h = dt / SUBSTEPS as f64;
    let mut state = x0.to_vec();
    state.push(0.0);
    let field = |y: &[f64], out: &mut [f64]| {
        dynamics.eval(&y[..n], &mut out[..n]);
        out[n] = -dynamics.divergence(&y[..n]);
    };
    let mut rho = Vec::with_capacity(steps + 1);
    rho.push(rho0);
    for step in 1..=steps {
        for _ in 0..SUBSTEPS {
            rk4_step(field, &mut state, h);
        }
        let r = rho0 * state[n].exp();
        if !r.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: "density overflow".into(),
            });
        }
        rho.push(r);
    }
    traj.rho = Some(rho);
    Ok(traj)
}

/// Closed-form density of `ẋ = −x²` with uniform initial density on
/// `[0, 1]`: `β(x, t) = 1/(1 − x t)²` at the current state `x`.
pub fn closed_form_1d(x: f64, t: f64) -> Result<f64> {
    if x * t >= 1.0 {
        return Err(Error::Domain(format!("closed form requires x*t < 1 (x={x}, t={t})")));
    }
    let s = 1.0 - x * t;
    Ok(1.0 / (s * s))
}

/// Closed-form flow of `ẋ = −x²`: `x(t) = x0 / (1 + x0 t)`.
pub fn flow_1d(x0: f64, t: f64) -> f64 {
    x0 / (1.0 + x0 * t)
}

/// A set of trajectories of one system sampled at a common step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub system: SystemId,
    pub dt: f64,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    system: SystemId,
    x0: Vec<f64>,
    dt: f64,
    states: Vec<Vec<f64>>,
    divergences: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<Vec<f64>>,
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.x0.len())
    }

    /// Writes one JSON record per trajectory.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.trajectories {
            let rec = Record {
                system: self.system,
                x0: t.x0.clone(),
                dt: self.dt,
                states: t.states.clone(),
                divergences: t.divergences.clone(),
                rho: t.rho.clone(),
            };
            serde_json::to_writer(&mut w, &rec).map_err(|e| Error::Io(e.into()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a JSON-lines dataset. All records must share system and step.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut system = None;
        let mut dt = None;
        let mut trajectories = Vec::new();
        let mut offset = 0usize;
        for line in r.lines() {
            let line = line?;
            let start = offset;
            offset += line.len() + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| match Error::from_json(&e, line.as_bytes()) {
                Error::Parse {
                    offset,
                    column,
                    message,
                    ..
                } => Error::Parse {
                    offset: start + offset,
                    line: trajectories.len() + 1,
                    column,
                    message,
                },
                other => other,
            })?;
            if *system.get_or_insert(rec.system) != rec.system || *dt.get_or_insert(rec.dt) != rec.dt {
                return Err(Error::Argument("dataset mixes systems or time steps".into()));
            }
            if rec.states.is_empty() || rec.states.len() != rec.divergences.len() {
                return Err(Error::Argument(
                    "trajectory record needs matching non-empty states and divergences".into(),
                ));
            }
            let k = rec.states.len();
            trajectories.push(Trajectory {
                x0: rec.x0,
                states: rec.states,
                times: (0..k).map(|i| i as f64 * rec.dt).collect(),
                divergences: rec.divergences,
                rho: rec.rho,
            });
        }
        match (system, dt) {
            (Some(system), Some(dt)) => Ok(Self {
                system,
                dt,
                trajectories,
            }),
            _ => Err(Error::Argument("dataset is empty".into())),
        }
    }
}

/// Simulates `n_traj` trajectories of `spec` from its initial distribution
/// and splits them into training and validation sets by a seeded shuffle.
pub fn build_dataset(
    spec: &SystemSpec,
    n_traj: usize,
    steps: usize,
    dt: f64,
    seed: u64,
    split: f64,
) -> Result<(TrajectoryDataset, TrajectoryDataset)> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::Argument("split must lie strictly between 0 and 1".into()));
    }
    let all = simulate_dataset(spec, n_traj, steps, dt, seed, false)?;
    Ok(split_dataset(all, split, seed))
}

/// Simulates `n` trajectories from the system's initial distribution,
/// optionally with ground-truth densities. Trajectories are simulated in
/// parallel and kept in sample order.
pub fn simulate_dataset(
    spec: &SystemSpec,
    n: usize,
    steps: usize,
    dt: f64,
    seed: u64,
    with_density: bool,
) -> Result<TrajectoryDataset> {
    let dist = spec.initial_distribution()?;
    let x0s = sample_initial(&dist, n, seed)?;
    let trajectories = x0s
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let r = if with_density {
                simulate_with_density(spec, x0, dist.density(x0), dt, steps)
            } else {
                simulate_with(spec, x0, dt, steps, SUBSTEPS)
            };
            r.map_err(|e| Error::Numeric(format!("trajectory {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryDataset {
        system: spec.id,
        dt,
        trajectories,
    })
}

/// Seeded split into `(train, val)` with `round(n·split)` training
/// trajectories (at least one in each part when `n ≥ 2`).
pub fn split_dataset(data: TrajectoryDataset, split: f64, seed: u64) -> (TrajectoryDataset, TrajectoryDataset) {
    let n = data.trajectories.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::derive(seed, 0x5B11));
    let mut n_train = (n as f64 * split).round() as usize;
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    }
    let mut slots: Vec<Option<Trajectory>> = data.trajectories.into_iter().map(Some).collect();
    let mut take = |ids: &[usize]| -> Vec<Trajectory> { ids.iter().map(|&i| slots[i].take().unwrap()).collect() };
    let train = take(&idx[..n_train]);
    let val = take(&idx[n_train..]);
    (
        TrajectoryDataset {
            system: data.system,
            dt: data.dt,
            trajectories: train,
        },
        TrajectoryDataset {
            system: data.system,
            dt: data.dt,
            trajectories: val,
        },
    )
}

/// Training elements `(x0, t_k) → x_k` with the divergence at `x_k` and the
/// neighbouring time used for the finite-difference time derivative.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingBatch {
    pub x0: Vec<Vec<f64>>,
    pub t: Vec<f64>,
    pub target: Vec<Vec<f64>>,
    pub div: Vec<f64>,
    /// Divergence at the partner step used by the time difference.
    pub div_partner: Vec<f64>,
    /// `true`: the derivative uses `(k, k+1)` (forward difference);
    /// `false`: the last step uses `(k−1, k)` (backward difference).
    pub forward: Vec<bool>,
    pub dt: f64,
}

impl TrainingBatch {
    /// Builds a batch from `(trajectory, step)` index pairs.
    pub fn from_pairs(data: &TrajectoryDataset, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut b = TrainingBatch {
            dt: data.dt,
            ..Default::default()
        };
        for &(i, k) in pairs {
            let tr = data
                .trajectories
                .get(i)
                .ok_or_else(|| Error::Argument(format!("trajectory index {i} out of range")))?;
            let len = tr.states.len();
            if len < 2 || k >= len {
                return Err(Error::Argument(format!(
                    "step {k} invalid for trajectory {i} of length {len}"
                )));
            }
            b.x0.push(tr.x0.clone());
            b.t.push(k as f64 * data.dt);
            b.target.push(tr.states[k].clone());
            b.div.push(tr.divergences[k]);
            let forward = k + 1 < len;
            b.div_partner.push(tr.divergences[if forward { k + 1 } else { k - 1 }]);
            b.forward.push(forward);
        }
        Ok(b)
    }

    /// Every `(trajectory, step)` pair of the dataset.
    pub fn all_pairs(data: &TrajectoryDataset) -> Vec<(usize, usize)> {
        data.trajectories
            .iter()
            .enumerate()
            .flat_map(|(i, t)| (0..t.states.len()).map(move |k| (i, k)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::FnDynamics;

    #[test]
    fn kop_density_is_constant() {
        let s = SystemSpec::new(SystemId::Kop);
        let a = augmented_flow(&s, &[1.2, 0.3, -0.4], 0.3, 10.0, 0.0125).unwrap();
        assert!((a.rho - 0.3).abs() < 1e-12);
    }

    #[test]
    fn linear_contraction_grows_density() {
        let f = FnDynamics {
            dim: 1,
            f: |x: &[f64], o: &mut [f64]| o[0] = -x[0],
            div: Some(|_: &[f64]| -1.0),
        };
        let a = augmented_flow(&f, &[0.7], 1.0, 1.0, 0.01).unwrap();
        assert!((a.rho - std::f64::consts::E).abs() < 1e-5);
    }

    #[test]
    fn scalar_matches_closed_form() {
        let s = SystemSpec::new(SystemId::Scalar1d);
        let a = augmented_flow(&s, &[1.0], 1.0, 1.0, 0.005).unwrap();
        assert!((a.x[0] - 0.5).abs() < 1e-4 && (a.rho - 4.0).abs() < 1e-4);
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(closed_form_1d(0.37, 0.0).unwrap(), 1.0);
        assert!((closed_form_1d(0.5, 1.0).unwrap() - 4.0).abs() < 1e-15);
        assert!((closed_form_1d(0.25, 2.0).unwrap() - 4.0).abs() < 1e-15);
        assert!(matches!(closed_form_1d(1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn refinement_converges() {
        let s = SystemSpec::new(SystemId::Vdp);
        let exact = augmented_flow(&s, &[1.3, -0.8], 1.0, 2.0, 1e-4).unwrap().rho;
        let coarse = augmented_flow(&s, &[1.3, -0.8], 1.0, 2.0, 0.1).unwrap().rho;
        let fine = augmented_flow(&s, &[1.3, -0.8], 1.0, 2.0, 0.05).unwrap().rho;
        assert!((fine - exact).abs() <= (coarse - exact).abs() / 8.0);
    }

    #[test]
    fn density_labels_match_plain_states() {
        let s = SystemSpec::new(SystemId::Vdp);
        let plain = simulate_with(&s, &[0.4, 1.0], 0.05, 20, SUBSTEPS).unwrap();
        let dens = simulate_with_density(&s, &[0.4, 1.0], 0.04, 0.05, 20).unwrap();
        assert_eq!(plain.states, dens.states);
        let rho = dens.rho.unwrap();
        assert_eq!(rho.len(), 21);
        let direct = augmented_flow(&s, &[0.4, 1.0], 0.04, 1.0, 0.005).unwrap();
        assert!((rho[20] - direct.rho).abs() < 1e-10 * direct.rho);
    }

    #[test]
    fn dataset_split_sizes_and_determinism() {
        let s = SystemSpec::new(SystemId::Vdp);
        let (tr, va) = build_dataset(&s, 10, 5, 0.05, 3, 0.8).unwrap();
        assert_eq!((tr.len(), va.len()), (8, 2));
        let (tr2, va2) = build_dataset(&s, 10, 5, 0.05, 3, 0.8).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(va, va2);
    }

    #[test]
    fn vdp_stays_in_invariant_box() {
        let s = SystemSpec::new(SystemId::Vdp);
        let (tr, va) = build_dataset(&s, 1000, 50, 0.05, 1, 0.8).unwrap();
        for t in tr.trajectories.iter().chain(&va.trajectories) {
            for x in &t.states {
                assert!(x[0].abs() <= 4.0 && x[1].abs() <= 4.0, "{x:?}");
            }
        }
    }

    #[test]
    fn jsonl_roundtrip() {
        let s = SystemSpec::new(SystemId::Scalar1d);
        let d = simulate_dataset(&s, 5, 4, 0.1, 2, true).unwrap();
        let mut buf = Vec::new();
        d.write_jsonl(&mut buf).unwrap();
        let back = TrajectoryDataset::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn jsonl_garbage_is_parse_error() {
        let err = TrajectoryDataset::read_jsonl(&b"{\"system\": \"vdp\", \"x0\": [1"[..]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn batch_marks_last_step_backward() {
        let s = SystemSpec::new(SystemId::Scalar1d);
        let d = simulate_dataset(&s, 2, 3, 0.1, 2, false).unwrap();
        let b = TrainingBatch::from_pairs(&d, &[(0, 0), (0, 3), (1, 2)]).unwrap();
        assert_eq!(b.forward, vec![true, false, true]);
        assert!((b.t[1] - 0.3).abs() < 1e-15);
        assert!(TrainingBatch::from_pairs(&d, &[(0, 4)]).is_err());
    }
}
