//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p densreach --test acceptance`. The process exits
//! non-zero if any criterion fails. Expensive artifacts (the trained van der
//! Pol and robot networks and their partitions) are built once and shared
//! between criteria.

use std::time::Instant;

use rand::Rng;

use densreach::distribution::{sample_initial, InitialDistribution};
use densreach::eval::{histogram_density, kl_divergence, truth_at_step, volume_at_probability, DensityEstimator};
use densreach::geometry::{HyperRectangle, Polyhedron};
use densreach::liouville::{
    augmented_flow, closed_form_1d, flow_1d, simulate_dataset, simulate_with_density, split_dataset, TrainingBatch,
    TrajectoryDataset,
};
use densreach::net::{loss_and_grad, save_checkpoint, train, DensityNet, LossWeights, ResidualForm, TrainConfig};
use densreach::reach::{forward_reach, query_probability, verify_density_range, ZRange};
use densreach::rng;
use densreach::rpm::{slice_net, with_jobs, EnumerateOptions, Partition, SlicedNet};
use densreach::systems::{SystemId, SystemSpec};

struct Ledger {
    failures: usize,
}

impl Ledger {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String, started: Instant) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} [{id:>2}] {name}: {detail} ({:.1} s)",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
    }

    fn error(&mut self, id: u32, name: &str, err: densreach::Error, started: Instant) {
        self.record(id, name, false, format!("error: {err}"), started);
    }
}

fn split(data: TrajectoryDataset, seed: u64) -> (TrajectoryDataset, TrajectoryDataset) {
    split_dataset(data, 0.9, seed)
}

fn train_system(
    id: SystemId,
    n: usize,
    hidden: &[usize],
    epochs: usize,
    data_seed: u64,
) -> densreach::Result<(DensityNet, TrajectoryDataset)> {
    let spec = SystemSpec::new(id);
    let data = simulate_dataset(&spec, n, spec.default_steps, spec.default_dt, data_seed, true)?;
    let (tr, val) = split(data.clone(), 1);
    let cfg = TrainConfig {
        lr: 2e-3,
        epochs,
        seed: 1,
        hidden: hidden.to_vec(),
        pairs_per_traj: Some(10),
        residual: ResidualForm::LogGain,
        ..TrainConfig::default()
    };
    let net = DensityNet::new(spec.state_dim, hidden, cfg.seed)?;
    Ok((train(net, &tr, Some(&val), &cfg)?.net, data))
}

fn uniform_box(lo: &[f64], hi: &[f64]) -> HyperRectangle {
    HyperRectangle::new(lo.to_vec(), hi.to_vec()).expect("valid box")
}

/// Learned density beats the histogram against the closed-form density.
fn closed_form_kl(l: &mut Ledger) {
    const NAME: &str = "closed-form density: learned KL < histogram KL";
    let started = Instant::now();
    let run = || -> densreach::Result<(bool, String)> {
        let spec = SystemSpec::new(SystemId::Scalar1d);
        let data = simulate_dataset(&spec, 10_000, spec.default_steps, spec.default_dt, 3, true)?;
        let (tr, val) = split(data.clone(), 1);
        let cfg = TrainConfig {
            lr: 2e-3,
            epochs: 60,
            seed: 1,
            hidden: vec![64, 64, 64],
            pairs_per_traj: Some(4),
            residual: ResidualForm::LogGain,
            ..TrainConfig::default()
        };
        let net = train(DensityNet::new(1, &cfg.hidden, 1)?, &tr, Some(&val), &cfg)?.net;
        let learned = DensityEstimator::Learned {
            net,
            rho0: spec.initial_distribution()?,
        };
        let mut ok = true;
        let mut detail = Vec::new();
        for t in [0.25, 0.5, 0.75] {
            let k = (t / data.dt).round() as usize;
            let truth = truth_at_step(&data, k)?;
            let samples: Vec<Vec<f64>> = truth.iter().map(|s| s.state.clone()).collect();
            let bins = (samples.len() as f64).powf(1.0 / 3.0).ceil() as usize;
            let hist = histogram_density(&samples, bins)?;
            let kl_net = kl_divergence(&truth, &learned, 1e-12)?.abs();
            let kl_hist = kl_divergence(&truth, &hist, 1e-12)?.abs();
            ok &= kl_net < kl_hist;
            detail.push(format!("t={t}: {kl_net:.2e} vs {kl_hist:.2e}"));
        }
        let secs = started.elapsed().as_secs_f64();
        ok &= secs < 600.0;
        Ok((ok, detail.join(", ")))
    };
    match run() {
        Ok((ok, d)) => l.record(1, NAME, ok, d, started),
        Err(e) => l.error(1, NAME, e, started),
    }
}

/// Augmented ODE against the closed form, and zero-divergence invariance.
fn ode_correctness(l: &mut Ledger) {
    const NAME: &str = "augmented ODE vs closed form; divergence-free density constant";
    let started = Instant::now();
    let run = || -> densreach::Result<(bool, String)> {
        let spec = SystemSpec::new(SystemId::Scalar1d);
        let mut max_err: f64 = 0.0;
        for i in 0..20 {
            let x0 = (i as f64 + 0.5) / 20.0;
            for j in 0..20 {
                let t = j as f64 / 19.0;
                let s = augmented_flow(&spec, &[x0], 1.0, t, 1e-3)?;
                let x = flow_1d(x0, t);
                let rho = closed_form_1d(x, t)?;
                max_err = max_err.max((s.x[0] - x).abs()).max((s.rho - rho).abs());
            }
        }
        let kop = SystemSpec::new(SystemId::Kop);
        let dist = kop.initial_distribution()?;
        let mut max_rel: f64 = 0.0;
        for x0 in sample_initial(&dist, 20, 5)? {
            let r0 = dist.density(&x0);
            let tr = simulate_with_density(&kop, &x0, r0, kop.default_dt, 80)?;
            for r in tr.rho.as_deref().unwrap_or_default() {
                max_rel = max_rel.max((r - r0).abs() / r0);
            }
        }
        Ok((
            max_err < 1e-4 && max_rel < 1e-9,
            format!("max closed-form error {max_err:.2e}, density drift {max_rel:.2e}"),
        ))
    };
    match run() {
        Ok((ok, d)) => l.record(2, NAME, ok, d, started),
        Err(e) => l.error(2, NAME, e, started),
    }
}

/// Maximum pointwise error against the network, sample coverage and
/// relative volume defect of a partition.
fn exactness(part: &Partition, sliced: &SlicedNet, domain: &HyperRectangle, n: usize, seed: u64) -> (f64, f64, f64) {
    let mut r = rng::derive(seed, 3);
    let mut covered = 0usize;
    let mut max_err: f64 = 0.0;
    for _ in 0..n {
        let x: Vec<f64> = domain
            .lo
            .iter()
            .zip(&domain.hi)
            .map(|(a, b)| r.gen_range(*a..*b))
            .collect();
        if let Some(&k) = part.locate(&x, 1e-9).first() {
            covered += 1;
            let err = part.cells[k]
                .apply(&x)
                .iter()
                .zip(sliced.output(&x))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            max_err = max_err.max(err);
        }
    }
    let vol: f64 = part.cells.iter().map(|c| c.volume).sum();
    (
        max_err,
        covered as f64 / n as f64,
        (vol - domain.volume()).abs() / domain.volume(),
    )
}

fn random_net(seed: u64) -> DensityNet {
    let mut net = DensityNet::new(2, &[8, 8], seed).expect("valid widths");
    let mut r = rng::derive(seed, 11);
    for layer in &mut net.layers {
        for b in &mut layer.bias {
            *b = r.gen_range(-0.5..0.5);
        }
    }
    net
}

fn rpm_exactness(l: &mut Ledger, vdp: &DensityNet) {
    const NAME: &str = "cell maps exact, full coverage, volumes sum to domain";
    let started = Instant::now();
    let run = || -> densreach::Result<(bool, String)> {
        let domain = uniform_box(&[-2.5, -2.5], &[2.5, 2.5]);
        let mut worst = (0.0f64, 1.0f64, 0.0f64);
        let mut cells = Vec::new();
        let mut nets: Vec<DensityNet> = (0..20).map(random_net).collect();
        nets.push(vdp.clone());
        for (i, net) in nets.iter().enumerate() {
            let t = if i < 20 { 0.5 } else { 1.0 };
            let part = Partition::build(net, t, &domain.to_polyhedron(), EnumerateOptions::default())?;
            let (e, c, v) = exactness(&part, &slice_net(net, t), &domain, 10_000, i as u64);
            worst = (worst.0.max(e), worst.1.min(c), worst.2.max(v));
            cells.push(part.cells.len());
        }
        let secs = started.elapsed().as_secs_f64();
        Ok((
            worst.0 < 1e-9 && worst.1 == 1.0 && worst.2 < 1e-4 && secs < 300.0,
            format!(
                "max error {:.2e}, coverage {:.4}, volume defect {:.2e}, cells {}..{} (vdp {})",
                worst.0,
                worst.1,
                worst.2,
                cells[..20].iter().min().unwrap(),
                cells[..20].iter().max().unwrap(),
                cells[20]
            ),
        ))
    };
    match run() {
        Ok((ok, d)) => l.record(3, NAME, ok, d, started),
        Err(e) => l.error(3, NAME, e, started),
    }
}

fn probability_conservation(l: &mut Ledger, parts: &[Partition]) {
    const NAME: &str = "cell probabilities sum to one";
    let started = Instant::now();
    let run = || -> densreach::Result<(bool, String)> {
        let rho0 = InitialDistribution::uniform(SystemSpec::new(SystemId::Vdp).init_domain)?;
        let mut worst: f64 = 0.0;
        let mut detail = Vec::new();
        for p in parts {
            let reach = forward_reach(&p.cells, &rho0)?;
            let lo: f64 = reach.iter().map(|c| c.p_lo).sum();
            let hi: f64 = reach.iter().map(|c| c.p_hi).sum();
            worst = worst.max((lo - 1.0).abs()).max((hi - 1.0).abs());
            detail.push(format!("t={}: [{lo:.12}, {hi:.12}]", p.t));
        }
        Ok((worst < 1e-4, detail.join(", ")))
    };
    match run() {
        Ok((ok, d)) => l.record(4, NAME, ok, d, started),
        Err(e) => l.error(4, NAME, e, started),
    }
}

fn bracketing(l: &mut Ledger, vdp: &DensityNet, parts: &[Partition]) {
    const NAME: &str = "probability brackets contain Monte-Carlo mass";
    let started = Instant::now();
    let run = || -> densreach::Result<(bool, String)> {
        let domain = SystemSpec::new(SystemId::Vdp).init_domain;
        let rho0 = InitialDistribution::uniform(domain.clone())?;
        let n = 100_000;
        let x0s = sample_initial(&rho0, n, 21)?;
        let mut r = rng::derive(7, 5);
        let (mut inside, mut total) = (0, 0);
        let mut worst = String::new();
        for p in parts {
            let sliced = slice_net(vdp, p.t);
            let images: Vec<Vec<f64>> = x0s.iter().map(|x| sliced.output(x)[1..].to_vec()).collect();
            for _ in 0..10 {
                let c = &images[r.gen_range(0..n)];
                let half: Vec<f64> = (0..2).map(|_| r.gen_range(0.1..0.8)).collect();
                let lo: Vec<f64> = c.iter().zip(&half).map(|(a, h)| a - h).collect();
                let hi: Vec<f64> = c.iter().zip(&half).map(|(a, h)| a + h).collect();
                let q = Polyhedron::from_box(&lo, &hi);
                let (p_lo, p_hi) = query_probability(&p.cells, &q, ZRange::UNBOUNDED, &rho0)?;
                let hits = images
                    .iter()
                    .filter(|y| y.iter().zip(lo.iter().zip(&hi)).all(|(v, (a, b))| v >= a && v <= b))
                    .count();
                let mc = hits as f64 / n as f64;
                let sigma = (mc * (1.0 - mc) / n as f64).sqrt();
                total += 1;
                if mc >= p_lo - 3.0 * sigma && mc <= p_hi + 3.0 * sigma {
                    inside += 1;
                } else {
                    worst = format!("; outside at t={}: mc {mc:.5} vs [{p_lo:.5}, {p_hi:.5}]", p.t);
                }
            }
        }
        Ok((inside * 30 >= 29 * total, format!("{inside}/{total} inside{worst}")))
    };
    match run() {
        Ok((ok, d)) => l.record(5, NAME, ok, d, started),
        Err(e) => l.error(5, NAME, e, started),
    }
}

fn concentration(l: &mut Ledger, late: &Partition) {
    const NAME: &str = "probability concentrates in a small volume";
    let started = Instant::now();
    let run = || -> densreach::Result<(bool, String)> {
        let rho0 = InitialDistribution::uniform(SystemSpec::new(SystemId::Vdp).init_domain)?;
        let reach = forward_reach(&late.cells, &rho0)?;
        let thresholds = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0];
        let vols: Vec<f64> = thresholds
            .iter()
            .map(|&p| volume_at_probability(&reach, p).map(|v| v.0))
            .collect::<densreach::Result<_>>()?;
        let monotone = vols.windows(2).all(|w| w[0] <= w[1]);
        let ratio = vols[4] / vols[7];
        Ok((
            ratio <= 0.5 && monotone,
            format!("t={}: vol(0.9)/vol(1.0) = {ratio:.3}, monotone = {monotone}", late.t),
        ))
    };
    match run() {
        Ok((ok, d)) => l.record(6, NAME, ok, d, started),
        Err(e) => l.error(6, NAME, e, started),
    }
}

fn robot_unsafe() -> Polyhedron {
    let mut p = Polyhedron::whole_space(4);
    for (row, rhs) in [
        (vec![1.0, 0.0, 0.0, 0.0], 0.0),
        (vec![-1.0, 0.0, 0.0, 0.0], 0.5),
        (vec![0.0, 1.0, 0.0, 0.0], 0.0),
        (vec![0.0, -1.0, 0.0, 0.0], 0.5),
    ] {
        p.push(row, rhs);
    }
    p
}

fn heuristic_equivalence(l: &mut Ledger, robot: &[Partition]) {
    const NAME: &str = "box heuristic: same verdicts, fewer LPs";
    let started = Instant::now();
    let run = || -> densreach::Result<(bool, String)> {
        let rho0 = SystemSpec::new(SystemId::Robot).initial_distribution()?;
        let unsafe_set = robot_unsafe();
        let bands = [
            ("low", (-10f64).exp(), 2f64.exp()),
            ("medium", 2f64.exp(), 3f64.exp()),
            ("high", 3f64.exp(), f64::INFINITY),
        ];
        let expected = [false, false, true];
        let (mut on_lp, mut off_lp) = (0, 0);
        let mut ok = true;
        let mut detail = Vec::new();
        for ((name, lo, hi), want_safe) in bands.iter().zip(expected) {
            let on = verify_density_range(robot, &unsafe_set, *lo, *hi, &rho0, true)?;
            let off = verify_density_range(robot, &unsafe_set, *lo, *hi, &rho0, false)?;
            ok &= on.safe == off.safe && on.safe == want_safe;
            on_lp += on.stats.lp_calls;
            off_lp += off.stats.lp_calls;
            detail.push(format!(
                "{name}: {} ({} vs {} LPs)",
                if on.safe { "safe" } else { "unsafe" },
                on.stats.lp_calls,
                off.stats.lp_calls
            ));
        }
        let saving = 1.0 - on_lp as f64 / off_lp.max(1) as f64;
        ok &= saving >= 0.3;
        Ok((ok, format!("{}; LP saving {:.0}%", detail.join(", "), 100.0 * saving)))
    };
    match run() {
        Ok((ok, d)) => l.record(7, NAME, ok, d, started),
        Err(e) => l.error(7, NAME, e, started),
    }
}

fn sigma_monotonicity(l: &mut Ledger, at_one: &Partition) {
    const NAME: &str = "collision probability grows with initial spread";
    let started = Instant::now();
    let run = || -> densreach::Result<(bool, String)> {
        let support = SystemSpec::new(SystemId::Robot).init_domain;
        let obstacle = {
            let mut q = Polyhedron::from_box(&[-0.8, -0.8], &[0.8, 0.8]);
            q.a.iter_mut().for_each(|row| row.extend([0.0, 0.0]));
            q.dim = 4;
            q
        };
        // Nominal start: the far corner of the initial box at the lowest speed.
        let mu = vec![-1.8, -1.8, 0.0, 1.0];
        let mut p_hi = Vec::new();
        for sigma in [0.02, 0.1, 0.5, 1.0] {
            let rho0 = InitialDistribution::truncated_gaussian(support.clone(), mu.clone(), vec![sigma; 4])?;
            p_hi.push(query_probability(&at_one.cells, &obstacle, ZRange::UNBOUNDED, &rho0)?.1);
        }
        let monotone = p_hi.windows(2).all(|w| w[0] <= w[1]);
        Ok((
            monotone && p_hi[0] < 0.1 * p_hi[3],
            format!(
                "p_hi at sigma 0.02/0.1/0.5/1.0 = {:.3e} / {:.3e} / {:.3e} / {:.3e}",
                p_hi[0], p_hi[1], p_hi[2], p_hi[3]
            ),
        ))
    };
    match run() {
        Ok((ok, d)) => l.record(8, NAME, ok, d, started),
        Err(e) => l.error(8, NAME, e, started),
    }
}

fn gradient_check(l: &mut Ledger) {
    const NAME: &str = "backpropagation matches central differences";
    let started = Instant::now();
    let run = || -> densreach::Result<(bool, String)> {
        let spec = SystemSpec::new(SystemId::Vdp);
        let data = simulate_dataset(&spec, 16, 10, spec.default_dt, 9, false)?;
        let mut net = DensityNet::new(2, &[16, 16], 4)?;
        net.fit_normalization(&data);
        let batch = TrainingBatch::from_pairs(&data, &TrainingBatch::all_pairs(&data))?;
        let weights = LossWeights::plain(0.7);
        let mut r = rng::derive(13, 1);
        let mut worst: f64 = 0.0;
        for trial in 0..50 {
            let form = if trial % 2 == 0 {
                ResidualForm::Gain
            } else {
                ResidualForm::LogGain
            };
            let (_, grads) = loss_and_grad(&net, &batch, &weights, form)?;
            let dir: Vec<(Vec<f64>, Vec<f64>)> = net
                .layers
                .iter()
                .map(|layer| {
                    (
                        (0..layer.weights.len()).map(|_| r.gen_range(-1.0..1.0)).collect(),
                        (0..layer.bias.len()).map(|_| r.gen_range(-1.0..1.0)).collect(),
                    )
                })
                .collect();
            let analytic: f64 = grads
                .iter()
                .zip(&dir)
                .map(|(g, (dw, db))| {
                    g.weights.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>()
                        + g.bias.iter().zip(db).map(|(a, b)| a * b).sum::<f64>()
                })
                .sum();
            let h = 1e-6;
            let shifted = |s: f64| -> densreach::Result<f64> {
                let mut m = net.clone();
                for (layer, (dw, db)) in m.layers.iter_mut().zip(&dir) {
                    layer.weights.iter_mut().zip(dw).for_each(|(w, d)| *w += s * d);
                    layer.bias.iter_mut().zip(db).for_each(|(b, d)| *b += s * d);
                }
                Ok(densreach::net::loss_terms(&m, &batch, form)?.total(&weights))
            };
            let numeric = (shifted(h)? - shifted(-h)?) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max(rel);
        }
        Ok((
            worst < 1e-4,
            format!("max relative error {worst:.2e} over 50 directions"),
        ))
    };
    match run() {
        Ok((ok, d)) => l.record(9, NAME, ok, d, started),
        Err(e) => l.error(9, NAME, e, started),
    }
}

/// Serialized artifacts of a small end-to-end run under `jobs` workers.
fn pipeline_bytes(jobs: usize) -> densreach::Result<Vec<Vec<u8>>> {
    with_jobs(jobs, || -> densreach::Result<Vec<Vec<u8>>> {
        let spec = SystemSpec::new(SystemId::Vdp);
        let data = simulate_dataset(&spec, 200, 20, spec.default_dt, 17, true)?;
        let mut data_bytes = Vec::new();
        data.write_jsonl(&mut data_bytes)?;
        let (tr, val) = split(data, 17);
        let cfg = TrainConfig {
            epochs: 5,
            seed: 17,
            hidden: vec![16, 16],
            ..TrainConfig::default()
        };
        let net = train(DensityNet::new(2, &cfg.hidden, 17)?, &tr, Some(&val), &cfg)?.net;
        let ckpt = save_checkpoint(&net);
        let opts = EnumerateOptions {
            jobs,
            ..Default::default()
        };
        let part = Partition::build(&net, 0.5, &spec.init_domain.to_polyhedron(), opts)?;
        let mut part_bytes = Vec::new();
        part.write_json(&mut part_bytes)?;
        let rho0 = spec.initial_distribution()?;
        let reach = forward_reach(&part.cells, &rho0)?;
        let reach_bytes = serde_json::to_vec(&reach).expect("serializable");
        let q = Polyhedron::from_box(&[-1.0, -1.0], &[1.0, 1.0]);
        let mut verdict = verify_density_range(std::slice::from_ref(&part), &q, 0.01, 1.0, &rho0, true)?;
        verdict.stats.elapsed_ms = 0.0;
        let verdict_bytes = serde_json::to_vec(&verdict).expect("serializable");
        Ok(vec![data_bytes, ckpt, part_bytes, reach_bytes, verdict_bytes])
    })?
}

fn determinism(l: &mut Ledger) {
    const NAME: &str = "byte-identical artifacts across reruns and worker counts";
    let started = Instant::now();
    let run = || -> densreach::Result<(bool, String)> {
        let a = pipeline_bytes(1)?;
        let b = pipeline_bytes(1)?;
        let c = pipeline_bytes(4)?;
        let names = ["dataset", "checkpoint", "partition", "reach", "verdict"];
        let differing: Vec<&str> = names
            .iter()
            .zip(a.iter().zip(b.iter().zip(&c)))
            .filter(|(_, (x, (y, z)))| x != y || x != z)
            .map(|(n, _)| *n)
            .collect();
        Ok((
            differing.is_empty(),
            if differing.is_empty() {
                format!("{} artifacts identical for jobs 1, 1, 4", names.len())
            } else {
                format!("differing: {}", differing.join(", "))
            },
        ))
    };
    match run() {
        Ok((ok, d)) => l.record(10, NAME, ok, d, started),
        Err(e) => l.error(10, NAME, e, started),
    }
}

fn main() {
    let started = Instant::now();
    let mut l = Ledger { failures: 0 };

    closed_form_kl(&mut l);
    ode_correctness(&mut l);

    let vdp_started = Instant::now();
    let vdp = train_system(SystemId::Vdp, 2000, &[64, 64, 64], 150, 11).and_then(|(net, _)| {
        let domain = SystemSpec::new(SystemId::Vdp).init_domain.to_polyhedron();
        let parts = [0.5, 1.0, 2.5]
            .iter()
            .map(|&t| Partition::build(&net, t, &domain, EnumerateOptions::default()))
            .collect::<densreach::Result<Vec<_>>>()?;
        Ok((net, parts))
    });
    println!(
        "     van der Pol network and partitions built in {:.1} s",
        vdp_started.elapsed().as_secs_f64()
    );
    match &vdp {
        Ok((net, parts)) => {
            println!(
                "     van der Pol cells per slice: {}",
                parts
                    .iter()
                    .map(|p| format!("t={}: {}", p.t, p.cells.len()))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            rpm_exactness(&mut l, net);
            probability_conservation(&mut l, parts);
            bracketing(&mut l, net, parts);
            concentration(&mut l, &parts[2]);
        }
        Err(e) => {
            for (id, name) in [
                (3, "rpm exactness"),
                (4, "conservation"),
                (5, "bracketing"),
                (6, "concentration"),
            ] {
                l.record(id, name, false, format!("van der Pol setup failed: {e}"), vdp_started);
            }
        }
    }

    let robot_started = Instant::now();
    let robot_parts: densreach::Result<Vec<Partition>> = train_system(SystemId::Robot, 2000, &[32, 32], 100, 11)
        .and_then(|(net, _)| {
            let domain = SystemSpec::new(SystemId::Robot).init_domain.to_polyhedron();
            [1.0, 1.5, 2.0]
                .iter()
                .map(|&t| Partition::build(&net, t, &domain, EnumerateOptions::default()))
                .collect()
        });
    println!(
        "     robot network and partitions built in {:.1} s",
        robot_started.elapsed().as_secs_f64()
    );
    match &robot_parts {
        Ok(parts) => {
            println!(
                "     robot cells per slice: {}",
                parts
                    .iter()
                    .map(|p| format!("t={}: {}", p.t, p.cells.len()))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            heuristic_equivalence(&mut l, parts);
            sigma_monotonicity(&mut l, &parts[0]);
        }
        Err(e) => {
            for (id, name) in [(7, "heuristic equivalence"), (8, "sigma monotonicity")] {
                l.record(id, name, false, format!("robot setup failed: {e}"), robot_started);
            }
        }
    }

    gradient_check(&mut l);
    determinism(&mut l);

    println!(
        "acceptance: {} failing criteria, total {:.1} s",
        l.failures,
        started.elapsed().as_secs_f64()
    );
    if l.failures > 0 {
        std::process::exit(1);
    }
}
