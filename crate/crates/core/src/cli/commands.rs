//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::parse;
use super::{
    Command, EvalDensityArgs, EvalVolumeArgs, PartitionArgs, QueryArgs, ReachArgs, SimulateArgs, TrainArgs, VerifyArgs,
};
use crate::distribution::InitialDistribution;
use crate::error::{Error, Result};
use crate::eval::{
    bounding_box_volume, convex_hull_area_2d, histogram_density, kde_density, kl_divergence, truth_at_step,
    volume_at_probability, DensityEstimator,
};
use crate::geometry::{bounding_box, HyperRectangle};
use crate::liouville::{simulate_dataset, split_dataset, TrajectoryDataset};
use crate::manifest::RunManifest;
use crate::net::{load_checkpoint, save_checkpoint, train, DensityNet, ResidualForm, TrainConfig};
use crate::reach::{backward_reach, forward_reach, query_hits, verify_density_range, verify_safety, ReachCell, ZRange};
use crate::rpm::{with_jobs, EnumerateOptions, Partition};
use crate::systems::{SystemId, SystemSpec};

/// Format version of the `reach` artifact.
pub const REACH_VERSION: u64 = 1;

/// Forward reachable set as written by `reach`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachReport {
    pub version: u64,
    pub system: Option<SystemId>,
    pub t: f64,
    pub rho0: InitialDistribution,
    pub p_lo: f64,
    pub p_hi: f64,
    pub cells: Vec<ReachCell>,
}

pub(super) fn dispatch(command: Command, command_line: Vec<String>) -> Result<()> {
    let mut m = RunManifest::new(command_line, command.name());
    match command {
        Command::Simulate(a) => simulate(a, &mut m),
        Command::Train(a) => train_cmd(a, &mut m),
        Command::Partition(a) => partition(a, &mut m),
        Command::Reach(a) => reach(a, &mut m),
        Command::Query(a) => query(a, &mut m, false),
        Command::Backward(a) => query(a, &mut m, true),
        Command::Verify(a) => verify(a, &mut m),
        Command::EvalDensity(a) => eval_density(a, &mut m),
        Command::EvalVolume(a) => eval_volume(a, &mut m),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Io(e.into()))?;
    v.push(b'\n');
    Ok(v)
}

/// Writes the artifact and its manifest.
fn finish(m: &mut RunManifest, out: &Path, bytes: &[u8]) -> Result<()> {
    m.write_output(out, bytes)?;
    m.write_beside(out)
}

fn read_dataset(m: &mut RunManifest, path: &Path) -> Result<TrajectoryDataset> {
    let bytes = m.read_input(path)?;
    TrajectoryDataset::read_jsonl(&bytes[..])
}

fn read_partition(m: &mut RunManifest, path: &Path) -> Result<Partition> {
    let bytes = m.read_input(path)?;
    Partition::from_slice(&bytes)
}

fn read_net(m: &mut RunManifest, path: &Path) -> Result<DensityNet> {
    let bytes = m.read_input(path)?;
    load_checkpoint(&bytes)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Argument(format!("--{name} must be positive and finite")))
    }
}

fn simulate(a: SimulateArgs, m: &mut RunManifest) -> Result<()> {
    let spec = SystemSpec::new(a.system.parse()?);
    let steps = a.steps.unwrap_or(spec.default_steps);
    let dt = positive("dt", a.dt.unwrap_or(spec.default_dt))?;
    if a.n == 0 {
        return Err(Error::Argument("--n must be positive".into()));
    }
    m.seed = Some(a.seed);
    m.jobs = Some(a.jobs);
    let data = m.time("simulate", || {
        with_jobs(a.jobs, || {
            simulate_dataset(&spec, a.n, steps, dt, a.seed, a.with_density)
        })
    })??;
    let mut bytes = Vec::new();
    data.write_jsonl(&mut bytes)?;
    finish(m, &a.out, &bytes)?;
    println!(
        "wrote {} trajectories of {} to {}",
        data.len(),
        spec.id,
        a.out.display()
    );
    Ok(())
}

fn parse_residual(s: &str) -> Result<ResidualForm> {
    match s {
        "gain" => Ok(ResidualForm::Gain),
        "log-gain" | "log_gain" => Ok(ResidualForm::LogGain),
        other => Err(Error::Argument(format!(
            "unknown residual form {other:?}; use gain or log-gain"
        ))),
    }
}

fn train_cmd(a: TrainArgs, m: &mut RunManifest) -> Result<()> {
    m.seed = Some(a.seed);
    let hidden = parse::usize_list(&a.hidden)?;
    let cfg = TrainConfig {
        lambda: a.lambda,
        lr: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        hidden: hidden.clone(),
        pairs_per_traj: a.pairs_per_traj,
        residual: parse_residual(&a.residual)?,
        lr_final_ratio: a.lr_final_ratio,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    let data = read_dataset(m, &a.data)?;
    let (train_set, val_set) = match &a.val {
        Some(p) => (data, read_dataset(m, p)?),
        None => {
            if !(a.val_split > 0.0 && a.val_split < 1.0) {
                return Err(Error::Argument("--val-split must lie strictly between 0 and 1".into()));
            }
            if data.len() < 2 {
                return Err(Error::Argument(
                    "need at least two trajectories to hold out validation data".into(),
                ));
            }
            split_dataset(data, 1.0 - a.val_split, a.seed)
        }
    };
    let net = DensityNet::new(train_set.state_dim(), &hidden, a.seed)?;
    let outcome = m.time("train", || train(net, &train_set, Some(&val_set), &cfg))?;
    if let Some(h) = &a.history {
        let mut csv = String::from("epoch,lr,train_flow,train_liouville,val_flow,val_liouville,val_score\n");
        for e in &outcome.history {
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                e.epoch, e.lr, e.train.flow, e.train.liouville, e.val.flow, e.val.liouville, e.val_score
            )
            .expect("writing to a String");
        }
        m.write_output(h, csv.as_bytes())?;
    }
    let bytes = save_checkpoint(&outcome.net);
    finish(m, &a.out, &bytes)?;
    let best = &outcome.history[outcome.best_epoch];
    println!(
        "trained {} parameters; best epoch {} (val flow {:.3e}, liouville {:.3e}); wrote {}",
        outcome.net.num_params(),
        outcome.best_epoch,
        best.val.flow,
        best.val.liouville,
        a.out.display()
    );
    Ok(())
}

fn partition(a: PartitionArgs, m: &mut RunManifest) -> Result<()> {
    m.jobs = Some(a.jobs);
    let net = read_net(m, &a.net)?;
    if !a.t.is_finite() || a.t < 0.0 {
        return Err(Error::Argument("--t must be a non-negative time".into()));
    }
    let domain = match (&a.domain, net.system) {
        (Some(d), _) => parse::domain(d)?,
        (None, Some(id)) => SystemSpec::new(id).init_domain,
        (None, None) => {
            return Err(Error::Argument(
                "--domain is required for a network without a system".into(),
            ))
        }
    };
    if domain.dim() != net.state_dim {
        return Err(Error::Dimension {
            expected: net.state_dim,
            found: domain.dim(),
        });
    }
    let opts = EnumerateOptions {
        budget: a.budget,
        jobs: a.jobs,
    };
    let part = m.time("enumerate", || {
        Partition::build(&net, a.t, &domain.to_polyhedron(), opts)
    })?;
    let mut bytes = Vec::new();
    part.write_json(&mut bytes)?;
    finish(m, &a.out, &bytes)?;
    println!("{} cells at t = {}; wrote {}", part.cells.len(), a.t, a.out.display());
    Ok(())
}

fn support_of(part: &Partition) -> Result<HyperRectangle> {
    bounding_box(&part.domain)
}

fn reach(a: ReachArgs, m: &mut RunManifest) -> Result<()> {
    m.jobs = Some(a.jobs);
    let part = read_partition(m, &a.cells)?;
    let rho0 = parse::rho0(&a.rho0, &support_of(&part)?)?;
    let cells = m.time("reach", || with_jobs(a.jobs, || forward_reach(&part.cells, &rho0)))??;
    let (p_lo, p_hi) = cells.iter().fold((0.0, 0.0), |(l, h), c| (l + c.p_lo, h + c.p_hi));
    if let Some(csv_path) = &a.csv {
        let names = parse::state_names(part.system, part.state_dim);
        let mut csv = String::from("cell,source,rho_lo,rho_hi,p_lo,p_hi,volume");
        for n in &names {
            write!(csv, ",{n}_lo,{n}_hi").expect("writing to a String");
        }
        csv.push('\n');
        for (i, c) in cells.iter().enumerate() {
            write!(
                csv,
                "{i},{},{},{},{},{},{}",
                c.source, c.rho_lo, c.rho_hi, c.p_lo, c.p_hi, c.volume
            )
            .expect("writing to a String");
            let ob = &part.cells[c.source].out_box;
            for j in 0..names.len() {
                write!(csv, ",{},{}", ob.lo[j + 1], ob.hi[j + 1]).expect("writing to a String");
            }
            csv.push('\n');
        }
        m.write_output(csv_path, csv.as_bytes())?;
    }
    let report = ReachReport {
        version: REACH_VERSION,
        system: part.system,
        t: part.t,
        rho0,
        p_lo,
        p_hi,
        cells,
    };
    finish(m, &a.out, &to_json(&report)?)?;
    println!(
        "{} reach cells at t = {}; total probability in [{p_lo}, {p_hi}]; wrote {}",
        report.cells.len(),
        report.t,
        a.out.display()
    );
    Ok(())
}

fn z_range(zmin: Option<f64>, zmax: Option<f64>) -> Result<ZRange> {
    ZRange::new(zmin.unwrap_or(f64::NEG_INFINITY), zmax.unwrap_or(f64::INFINITY))
}

#[derive(Serialize)]
struct QueryReport<T: Serialize> {
    t: f64,
    set: String,
    zmin: Option<f64>,
    zmax: Option<f64>,
    p_lo: f64,
    p_hi: f64,
    pieces: Vec<T>,
}

fn query(a: QueryArgs, m: &mut RunManifest, backward: bool) -> Result<()> {
    m.jobs = Some(a.jobs);
    let part = read_partition(m, &a.cells)?;
    let names = parse::state_names(part.system, part.state_dim);
    let set = parse::linear_set(&a.set, &names)?;
    let z = z_range(a.zmin, a.zmax)?;
    let rho0 = parse::rho0(&a.rho0, &support_of(&part)?)?;
    let (bytes, p_lo, p_hi, count) = if backward {
        let regions = m.time("backward", || {
            with_jobs(a.jobs, || backward_reach(&part.cells, &set, z, &rho0))
        })??;
        let (p_lo, p_hi) = regions.iter().fold((0.0, 0.0), |(l, h), r| (l + r.p_lo, h + r.p_hi));
        let n = regions.len();
        let report = QueryReport {
            t: part.t,
            set: a.set.clone(),
            zmin: a.zmin,
            zmax: a.zmax,
            p_lo,
            p_hi,
            pieces: regions,
        };
        (to_json(&report)?, p_lo, p_hi, n)
    } else {
        let hits = m.time("query", || {
            with_jobs(a.jobs, || query_hits(&part.cells, &set, z, &rho0))
        })??;
        let (p_lo, p_hi) = hits.iter().fold((0.0, 0.0), |(l, h), r| (l + r.p_lo, h + r.p_hi));
        let n = hits.len();
        let report = QueryReport {
            t: part.t,
            set: a.set.clone(),
            zmin: a.zmin,
            zmax: a.zmax,
            p_lo,
            p_hi,
            pieces: hits,
        };
        (to_json(&report)?, p_lo, p_hi, n)
    };
    if let Some(out) = &a.out {
        finish(m, out, &bytes)?;
    }
    println!("cells hit: {count}; probability in [{p_lo}, {p_hi}]");
    Ok(())
}

fn slice_files(a: &VerifyArgs) -> Result<Vec<PathBuf>> {
    if let Some(dir) = &a.cells_dir {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            name.ends_with(".json") && !name.ends_with(".manifest.json")
        });
        files.sort();
        if files.is_empty() {
            return Err(Error::Argument(format!("no partition caches in {}", dir.display())));
        }
        Ok(files)
    } else if !a.cells.is_empty() {
        Ok(a.cells.clone())
    } else {
        Err(Error::Argument("give --cells-dir or --cells".into()))
    }
}

fn on_off(s: &str) -> Result<bool> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        other => Err(Error::Argument(format!("expected on or off, found {other:?}"))),
    }
}

fn verify(a: VerifyArgs, m: &mut RunManifest) -> Result<()> {
    m.jobs = Some(a.jobs);
    let heuristic = on_off(&a.heuristic)?;
    let mut slices = Vec::new();
    for f in slice_files(&a)? {
        slices.push(read_partition(m, &f)?);
    }
    slices.sort_by(|x, y| x.t.total_cmp(&y.t));
    let first = &slices[0];
    if let Some(bad) = slices.iter().find(|s| s.state_dim != first.state_dim) {
        return Err(Error::Dimension {
            expected: first.state_dim,
            found: bad.state_dim,
        });
    }
    let names = parse::state_names(first.system, first.state_dim);
    let unsafe_set = parse::linear_set(&a.unsafe_set, &names)?;
    let rho0 = parse::rho0(&a.rho0, &support_of(first)?)?;
    let mut verdict = if a.density_min.is_some() || a.density_max.is_some() {
        let (lo, hi) = (a.density_min.unwrap_or(0.0), a.density_max.unwrap_or(f64::INFINITY));
        m.time("verify", || {
            with_jobs(a.jobs, || {
                verify_density_range(&slices, &unsafe_set, lo, hi, &rho0, heuristic)
            })
        })??
    } else {
        let z = z_range(a.zmin, a.zmax)?;
        m.time("verify", || {
            with_jobs(a.jobs, || verify_safety(&slices, &unsafe_set, z, &rho0, heuristic))
        })??
    };
    // Wall-clock time belongs in the manifest, not in the reproducible artifact.
    verdict.stats.elapsed_ms = 0.0;
    if let Some(out) = &a.out {
        finish(m, out, &to_json(&verdict)?)?;
    }
    println!(
        "{}: probability in [{}, {}] over {} slices; {} LP calls, {} box rejections",
        if verdict.safe { "safe" } else { "unsafe" },
        verdict.p_lo,
        verdict.p_hi,
        verdict.slices.len(),
        verdict.stats.lp_calls,
        verdict.stats.box_rejections
    );
    Ok(())
}

/// Step index of time `t` on a grid of step `dt`.
fn step_of(t: f64, dt: f64, len: usize) -> Result<usize> {
    let k = (t / dt).round();
    if !(k >= 0.0) || (k * dt - t).abs() > 1e-6 * t.abs().max(1.0) || k as usize >= len {
        return Err(Error::Argument(format!(
            "time {t} is not a recorded step (dt = {dt}, {len} states)"
        )));
    }
    Ok(k as usize)
}

fn eval_density(a: EvalDensityArgs, m: &mut RunManifest) -> Result<()> {
    m.jobs = Some(a.jobs);
    let net = read_net(m, &a.net)?;
    let truth_data = read_dataset(m, &a.truth)?;
    let fit_data = match &a.fit {
        Some(p) => Some(read_dataset(m, p)?),
        None => None,
    };
    let system = net.system.unwrap_or(truth_data.system);
    let rho0 = SystemSpec::new(system).initial_distribution()?;
    let len = truth_data
        .trajectories
        .iter()
        .map(|t| t.states.len())
        .min()
        .unwrap_or(0);
    let steps: Vec<usize> = match &a.times {
        Some(list) => parse::number_list(list)?
            .into_iter()
            .map(|t| step_of(t, truth_data.dt, len))
            .collect::<Result<_>>()?,
        None => (1..len).collect(),
    };
    for b in &a.baselines {
        if b != "hist" && b != "kde" {
            return Err(Error::Argument(format!("unknown baseline {b:?}; use hist or kde")));
        }
    }
    let learned = DensityEstimator::Learned { net, rho0 };
    let mut csv = String::from("t,estimator,kl,n\n");
    m.time("evaluate", || {
        with_jobs(a.jobs, || -> Result<()> {
            for &k in &steps {
                let truth = truth_at_step(&truth_data, k)?;
                let t = truth[0].t;
                let fit: Vec<Vec<f64>> = match &fit_data {
                    Some(f) => {
                        let kf = step_of(t, f.dt, usize::MAX)?;
                        f.trajectories
                            .iter()
                            .map(|tr| {
                                tr.states
                                    .get(kf)
                                    .cloned()
                                    .ok_or_else(|| Error::Argument(format!("fit samples have no step {kf}")))
                            })
                            .collect::<Result<_>>()?
                    }
                    None => truth.iter().map(|s| s.state.clone()).collect(),
                };
                let d = fit[0].len();
                let mut estimators = vec![];
                for b in &a.baselines {
                    estimators.push(match b.as_str() {
                        "hist" => {
                            let bins = a
                                .bins
                                .unwrap_or_else(|| (fit.len() as f64).powf(1.0 / (d as f64 + 2.0)).ceil() as usize);
                            histogram_density(&fit, bins)?
                        }
                        _ => kde_density(&fit, a.bandwidth.map(|h| vec![h]))?,
                    });
                }
                let mut scored = vec![("learned", kl_divergence(&truth, &learned, a.floor)?)];
                for e in &estimators {
                    scored.push((e.name(), kl_divergence(&truth, e, a.floor)?));
                }
                for (name, kl) in scored {
                    writeln!(csv, "{t},{name},{kl},{}", truth.len()).expect("writing to a String");
                }
            }
            Ok(())
        })
    })??;
    finish(m, &a.out, csv.as_bytes())?;
    println!("scored {} times; wrote {}", steps.len(), a.out.display());
    Ok(())
}

fn eval_volume(a: EvalVolumeArgs, m: &mut RunManifest) -> Result<()> {
    let bytes = m.read_input(&a.reach)?;
    let report: ReachReport = serde_json::from_slice(&bytes).map_err(|e| Error::from_json(&e, &bytes))?;
    if report.version != REACH_VERSION {
        return Err(Error::UnsupportedVersion {
            found: report.version,
            expected: REACH_VERSION,
        });
    }
    let thresholds = parse::number_list(&a.thresholds)?;
    let (total, _) = volume_at_probability(&report.cells, 1.0)?;
    let reference = match &a.samples {
        Some(p) => {
            let data = read_dataset(m, p)?;
            let len = data.trajectories.iter().map(|t| t.states.len()).min().unwrap_or(0);
            let k = step_of(report.t, data.dt, len)?;
            let pts: Vec<Vec<f64>> = data.trajectories.iter().map(|t| t.states[k].clone()).collect();
            Some(if pts[0].len() == 2 {
                (convex_hull_area_2d(&pts)?, "hull2d")
            } else {
                (bounding_box_volume(&pts)?, "bbox")
            })
        }
        None => None,
    };
    let mut csv =
        String::from("threshold,volume,achieved_p,fraction_of_total,reference_volume,relative_volume,reference_kind\n");
    for th in thresholds {
        let (vol, p) = volume_at_probability(&report.cells, th)?;
        let frac = if total > 0.0 { vol / total } else { 0.0 };
        match reference {
            Some((rv, kind)) => writeln!(csv, "{th},{vol},{p},{frac},{rv},{},{kind}", vol / rv),
            None => writeln!(csv, "{th},{vol},{p},{frac},,,none"),
        }
        .expect("writing to a String");
    }
    finish(m, &a.out, csv.as_bytes())?;
    println!("wrote {}", a.out.display());
    Ok(())
}
