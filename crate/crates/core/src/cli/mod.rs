//! The `densreach` command-line interface.
//!
//! Every subcommand writes its artifact plus a `<artifact>.manifest.json`
//! with digests and timings. Exit codes: 0 on success, 1 when the data or
//! the problem itself is the obstacle (infeasible, budget exceeded, corrupt
//! input), 2 on usage errors.

mod commands;
pub mod parse;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for domain errors.
pub const EXIT_DOMAIN: i32 = 1;
/// Exit code for usage errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "densreach",
    version,
    about = "Learned reachable-state densities with exact polyhedral reachability",
    args_override_self = true,
    propagate_version = true
)]
pub struct Cli {
    /// JSON object supplying default values for any flag of the subcommand
    /// (keys are flag names; flags given on the command line win).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate trajectories of a benchmark system (JSON lines).
    Simulate(SimulateArgs),
    /// Train a density network on a trajectory dataset.
    Train(TrainArgs),
    /// Enumerate the affine cells of a trained network at one time.
    Partition(PartitionArgs),
    /// Forward reachable set with density and probability bounds.
    Reach(ReachArgs),
    /// Probability bracket that the state at time t lies in a query set.
    Query(QueryArgs),
    /// Initial states whose learned image lies in a query set.
    Backward(QueryArgs),
    /// Check whether any time slice meets an unsafe set.
    Verify(VerifyArgs),
    /// KL divergence of the learned density and baselines to ground truth.
    EvalDensity(EvalDensityArgs),
    /// Reachable-set volume needed to cover given probability levels.
    EvalVolume(EvalVolumeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Train(_) => "train",
            Command::Partition(_) => "partition",
            Command::Reach(_) => "reach",
            Command::Query(_) => "query",
            Command::Backward(_) => "backward",
            Command::Verify(_) => "verify",
            Command::EvalDensity(_) => "eval-density",
            Command::EvalVolume(_) => "eval-volume",
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Benchmark system: vdp, dint, kop, robot, car or scalar1d.
    #[arg(long)]
    pub system: String,
    /// Number of trajectories.
    #[arg(long)]
    pub n: usize,
    /// Steps per trajectory (default: the system's horizon).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Time step (default: the system's step).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    /// Also integrate the true density along each trajectory.
    #[arg(long)]
    pub with_density: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (0: all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training trajectories (JSON lines).
    #[arg(long)]
    pub data: PathBuf,
    /// Validation trajectories; without it a seeded fraction of --data is
    /// held out.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Held-out fraction when --val is absent.
    #[arg(long, default_value_t = 0.1)]
    pub val_split: f64,
    /// Hidden layer widths, e.g. 64,64,64.
    #[arg(long, default_value = "64,64,64")]
    pub hidden: String,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    /// Time steps drawn per trajectory and epoch (default: all).
    #[arg(long)]
    pub pairs_per_traj: Option<usize>,
    /// Liouville residual: gain or log-gain.
    #[arg(long, default_value = "gain")]
    pub residual: String,
    #[arg(long, default_value_t = 0.1)]
    pub lr_final_ratio: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss history (CSV).
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub net: PathBuf,
    /// Time at which the network is sliced.
    #[arg(long)]
    pub t: f64,
    /// Input box "lo,hi;lo,hi;…" (default: the system's initial box).
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    /// Maximum number of cells.
    #[arg(long, default_value_t = crate::rpm::DEFAULT_CELL_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReachArgs {
    /// Partition cache written by `partition`.
    #[arg(long)]
    pub cells: PathBuf,
    /// Initial density: uniform or gauss:mu=…,sigma=… (support: the
    /// partition domain's bounding box).
    #[arg(long, default_value = "uniform")]
    pub rho0: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-cell summary for plotting.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub cells: PathBuf,
    /// Query set as linear constraints, e.g. "x>=-0.5,x<=0,y>=-0.5,y<=0".
    #[arg(long, allow_hyphen_values = true)]
    pub set: String,
    #[arg(long, default_value = "uniform")]
    pub rho0: String,
    /// Lower bound on the density output z (default: unbounded).
    #[arg(long, allow_hyphen_values = true)]
    pub zmin: Option<f64>,
    /// Upper bound on the density output z (default: unbounded).
    #[arg(long, allow_hyphen_values = true)]
    pub zmax: Option<f64>,
    /// Output JSON (default: summary on stdout only).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Directory of partition caches, one per time slice.
    #[arg(long, conflicts_with = "cells")]
    pub cells_dir: Option<PathBuf>,
    /// Comma-separated partition caches.
    #[arg(long, value_delimiter = ',')]
    pub cells: Vec<PathBuf>,
    /// Unsafe set as linear constraints.
    #[arg(long = "unsafe", allow_hyphen_values = true)]
    pub unsafe_set: String,
    #[arg(long, allow_hyphen_values = true)]
    pub zmin: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub zmax: Option<f64>,
    /// Lower bound on the absolute density ρ0·exp(t·z) instead of a z range.
    #[arg(long, conflicts_with_all = ["zmin", "zmax"])]
    pub density_min: Option<f64>,
    /// Upper bound on the absolute density (default: unbounded).
    #[arg(long, conflicts_with_all = ["zmin", "zmax"])]
    pub density_max: Option<f64>,
    /// Bounding-box pre-check before each LP: on or off.
    #[arg(long, default_value = "on")]
    pub heuristic: String,
    #[arg(long, default_value = "uniform")]
    pub rho0: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvalDensityArgs {
    #[arg(long)]
    pub net: PathBuf,
    /// Trajectories with true densities (`simulate --with-density`).
    #[arg(long)]
    pub truth: PathBuf,
    /// Samples the baselines are fitted on (default: the truth states).
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Baselines to score besides the network: hist, kde.
    #[arg(long, default_value = "hist,kde", value_delimiter = ',')]
    pub baselines: Vec<String>,
    /// Times to evaluate (default: every step after the first).
    #[arg(long)]
    pub times: Option<String>,
    /// Histogram bins per coordinate (default: ceil(n^(1/(d+2)))).
    #[arg(long)]
    pub bins: Option<usize>,
    /// KDE bandwidth (default: Silverman-style rule per coordinate).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, default_value_t = crate::eval::DEFAULT_KL_FLOOR)]
    pub floor: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvalVolumeArgs {
    /// Forward reachable set written by `reach`.
    #[arg(long)]
    pub reach: PathBuf,
    #[arg(long, default_value = "0.5,0.7,0.8,0.9,0.99,1.0")]
    pub thresholds: String,
    /// Trajectories whose states at the reach time give the reference
    /// volume (2-D convex hull, otherwise bounding box).
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Flags supplied by a config file, as `--key=value` tokens.
fn config_tokens(path: &std::path::Path) -> Result<Vec<OsString>> {
    let bytes = std::fs::read(path)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| Error::from_json(&e, &bytes))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Argument("config file must hold a JSON object".into()))?;
    let mut out = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        let text = match v {
            serde_json::Value::Bool(true) => {
                out.push(OsString::from(flag));
                continue;
            }
            serde_json::Value::Bool(false) | serde_json::Value::Null => continue,
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            serde_json::Value::Object(_) => {
                return Err(Error::Argument(format!("config key {key:?} holds an object")));
            }
        };
        out.push(OsString::from(format!("{flag}={text}")));
    }
    Ok(out)
}

/// Inserts config-file flags right after the subcommand so that later
/// command-line flags override them.
fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config = None;
    let mut sub_pos = None;
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if a == "--config" {
            config = argv.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if sub_pos.is_none() && !a.starts_with('-') {
            sub_pos = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(pos)) = (config, sub_pos) else {
        return Ok(argv);
    };
    let tokens = config_tokens(&path)?;
    let mut merged = argv[..=pos].to_vec();
    merged.extend(tokens);
    merged.extend_from_slice(&argv[pos + 1..]);
    Ok(merged)
}

fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_DOMAIN
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let merged = match merge_config(argv.clone()) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(&merged) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let command_line = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let name = cli.command.name();
    match commands::dispatch(cli.command, command_line) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {name}: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_flags_precede_command_line_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(
            &cfg,
            r#"{"seed": 3, "n": 10, "with_density": true, "hidden": [8, 8], "off": false}"#,
        )
        .unwrap();
        let argv = os(&[
            "densreach",
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--seed",
            "9",
        ]);
        let merged = merge_config(argv).unwrap();
        let text: Vec<String> = merged.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        let sub = text.iter().position(|s| s == "simulate").unwrap();
        assert_eq!(
            &text[sub + 1..],
            &["--hidden=8,8", "--n=10", "--seed=3", "--with-density", "--seed", "9"]
        );
    }

    #[test]
    fn later_flags_win() {
        let cli = Cli::try_parse_from([
            "densreach",
            "simulate",
            "--system",
            "vdp",
            "--n=1",
            "--seed=3",
            "--out",
            "o",
            "--seed",
            "9",
        ])
        .unwrap();
        let Command::Simulate(a) = cli.command else { panic!() };
        assert_eq!(a.seed, 9);
    }

    #[test]
    fn usage_exit_codes() {
        assert_eq!(run(["densreach", "--help"]), EXIT_OK);
        assert_eq!(
            run(["densreach", "simulate", "--system", "vdp", "--n", "2", "--out", "x"]),
            EXIT_USAGE
        );
        assert_eq!(run(["densreach", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["densreach", "simulate", "--sytem", "vdp"]), EXIT_USAGE);
    }
}
