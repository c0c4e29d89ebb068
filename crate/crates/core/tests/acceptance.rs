//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test -p mabn-core --test acceptance -- --nocapture` to see
//! the report lines.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use mabn_core::harness::metrics::MeanSe;
use mabn_core::harness::{
    preset_instance, ArtifactSink, Experiment, RepStreams, RunConfig, VariantResult, PRESETS,
};
use mabn_core::inference::ipw_increment;
use mabn_core::policy::select_arm;
use mabn_core::{
    Clustering, Environment, EnvironmentSpec, ExposureKind, ExposureMapping, LegitimateArmIndex,
    MadSchedule, Network, Result,
};

fn report(criterion: u32, ok: bool, elapsed: Duration, limit: Duration, detail: String) {
    let within = elapsed <= limit;
    println!(
        "criterion {criterion:>2}: {} | {detail} | {:.2}s (limit {}s)",
        if ok && within { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
    assert!(within, "criterion {criterion} exceeded its runtime limit");
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

/// Hashes every stream instead of storing it.
#[derive(Default)]
struct HashSink {
    streams: BTreeMap<String, Hashing>,
}

#[derive(Default)]
struct Hashing(Sha256);

impl Write for Hashing {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl ArtifactSink for HashSink {
    fn stream(&mut self, name: &str) -> Result<&mut dyn Write> {
        Ok(self.streams.entry(name.to_string()).or_default())
    }
}

impl HashSink {
    fn digests(self) -> BTreeMap<String, Vec<u8>> {
        self.streams
            .into_iter()
            .map(|(k, h)| (k, h.0.finalize().to_vec()))
            .collect()
    }
}

/// Discards everything.
#[derive(Default)]
struct NullSink(std::io::Sink);

impl ArtifactSink for NullSink {
    fn stream(&mut self, _: &str) -> Result<&mut dyn Write> {
        Ok(&mut self.0)
    }
}

fn stationary(
    n_units: usize,
    arm_count: u32,
    means: &[f64],
    clusters: Vec<Vec<usize>>,
) -> RunConfig {
    let mut cfg = preset_instance("instance1").unwrap();
    cfg.instance.n_units = n_units;
    cfg.instance.edges = (1..n_units).map(|u| [u, u + 1]).collect();
    cfg.instance.clusters = clusters;
    cfg.instance.arm_count = arm_count;
    cfg.instance.mapping = ExposureKind::PerUnitArm;
    cfg.instance.environment = EnvironmentSpec::stationary(means.to_vec());
    cfg
}

fn fix_a() -> (Network, Clustering) {
    let net = Network::new(4, &[(1, 2), (2, 3), (3, 4)]).unwrap();
    let clu = Clustering::new(&net, vec![vec![1, 2], vec![3, 4]]).unwrap();
    (net, clu)
}

#[test]
fn criterion_01_enumeration_exactness() {
    let start = Instant::now();
    let (net, clu) = fix_a();
    let map = ExposureMapping::new(ExposureKind::PerUnitArm, 2, &clu).unwrap();
    let index = LegitimateArmIndex::enumerate(&map, &net, &clu, 1 << 20).unwrap();
    let got: Vec<Vec<u32>> = index.arms().iter().map(|a| a.per_unit.clone()).collect();
    // every (k1, k1, k2, k2)
    let mut want = Vec::new();
    for k1 in 0..2 {
        for k2 in 0..2 {
            want.push(vec![k1, k1, k2, k2]);
        }
    }
    let ok = got == want;
    report(
        1,
        ok,
        start.elapsed(),
        secs(1),
        format!("FIX-A arms {got:?}"),
    );
}

#[test]
fn criterion_02_sampling_round_trip() {
    let start = Instant::now();
    let mut draws = 0;
    let mut bad = 0;
    for name in PRESETS {
        let inst = preset_instance(name).unwrap().instance.build().unwrap();
        let mapping = inst.index.mapping();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let k = rng.random_range(0..inst.n_arms());
            let arm = inst.index.arm(k).unwrap();
            let real = inst.index.sample_real_arm(arm, &mut rng).unwrap();
            if mapping.exposure_vector(real, &inst.network).unwrap() != arm.per_unit {
                bad += 1;
            }
            draws += 1;
        }
    }
    report(
        2,
        bad == 0,
        start.elapsed(),
        secs(10),
        format!(
            "{draws} draws over {} presets, {bad} mismatches",
            PRESETS.len()
        ),
    );
}

/// Blockwise EXP3 written directly from the reward-estimate form.
struct ReferenceExp3 {
    n: usize,
    rewards: Vec<f64>,
    block_start: u64,
}

impl ReferenceExp3 {
    fn probabilities(&mut self, t: u64) -> Vec<f64> {
        let start = 1u64 << (63 - t.leading_zeros());
        if start != self.block_start {
            self.block_start = start;
            self.rewards = vec![0.0; self.n];
        }
        if t == start {
            return vec![1.0 / self.n as f64; self.n];
        }
        let n = self.n as f64;
        let eps = (n.ln() / (n * start as f64)).sqrt();
        let max = self.rewards.iter().cloned().fold(f64::MIN, f64::max);
        let w: Vec<f64> = self
            .rewards
            .iter()
            .map(|r| (eps * (r - max)).exp())
            .collect();
        let z: f64 = w.iter().sum();
        w.iter().map(|x| x / z).collect()
    }

    fn update(&mut self, probs: &[f64], arm: usize, reward: f64) {
        for (a, r) in self.rewards.iter_mut().enumerate() {
            let hit = if a == arm {
                (1.0 - reward) / probs[a]
            } else {
                0.0
            };
            *r += 1.0 - hit;
        }
    }
}

#[test]
fn criterion_03_exp3_reduction() {
    let start = Instant::now();
    let mut cfg = preset_instance("main_scaled").unwrap();
    cfg.horizon = 2000;
    cfg.logging.log_probabilities = true;
    let exp = Experiment::new(cfg).unwrap();
    let rep = 3;
    let record = &exp.records(MadSchedule::Standard, rep..rep + 1).unwrap()[0];
    let logged = record.probabilities.as_ref().unwrap();

    let inst = exp.instance();
    let mut streams = RepStreams::new(exp.config().master_seed, rep);
    let mut env = Environment::new(
        &inst.environment,
        &inst.index,
        &inst.network,
        streams.environment_seed,
    )
    .unwrap();
    env.materialize(2000);
    let mut reference = ReferenceExp3 {
        n: inst.n_arms(),
        rewards: vec![0.0; inst.n_arms()],
        block_start: 0,
    };
    let mut max_diff: f64 = 0.0;
    let mut arm_mismatches = 0;
    for t in 1..=2000u64 {
        let probs = reference.probabilities(t);
        let row = &logged[t as usize - 1];
        for (p, (q, r)) in probs.iter().zip(row.alg.iter().zip(&row.mad)) {
            max_diff = max_diff.max((p - q).abs()).max((p - r).abs());
        }
        let arm = select_arm(&probs, &mut streams.policy);
        if arm != record.rounds[t as usize - 1].arm {
            arm_mismatches += 1;
        }
        let real = inst
            .index
            .sample_witness(arm, &mut streams.witness)
            .unwrap();
        let reward = env
            .realize_reward(t, arm, real, &mut streams.reward)
            .unwrap();
        reference.update(&probs, arm, reward);
    }
    report(
        3,
        max_diff <= 1e-12 && arm_mismatches == 0,
        start.elapsed(),
        secs(5),
        format!(
            "max |pi - pi_ref| = {max_diff:.3e} over 2000 rounds, {arm_mismatches} arm mismatches"
        ),
    );
}

#[test]
fn criterion_04_uniform_reduction() {
    let start = Instant::now();
    let mut cfg = stationary(4, 2, &[0.9, 0.1, 0.5, 0.3], vec![vec![1, 2], vec![3, 4]]);
    cfg.horizon = 40_000;
    let exp = Experiment::new(cfg).unwrap();
    assert_eq!(exp.instance().n_arms(), 4);
    let record = &exp.records(MadSchedule::Uniform, 0..1).unwrap()[0];
    let mut counts = [0usize; 4];
    for r in &record.rounds {
        counts[r.arm] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / 40_000.0).collect();
    let ok = freqs.iter().all(|f| (f - 0.25).abs() <= 0.0075);
    report(
        4,
        ok,
        start.elapsed(),
        secs(10),
        format!("frequencies {freqs:.4?}"),
    );
}

#[test]
fn criterion_05_ipw_unbiasedness() {
    let start = Instant::now();
    // star-like instance with several witnesses per arm
    let cfg = preset_instance("instance4").unwrap();
    let inst = cfg.instance.build().unwrap();
    let n_units = inst.network.n_units();
    let own: Vec<Vec<f64>> = (0..n_units)
        .map(|i| vec![0.2 + 0.05 * i as f64, 0.9 - 0.07 * i as f64])
        .collect();
    let spillover: Vec<f64> = (0..n_units).map(|i| 0.1 * (i % 4) as f64).collect();
    let spec = EnvironmentSpec::UnitLevelFixedMeans {
        own: own.clone(),
        spillover: spillover.clone(),
    };
    let env = Environment::new(&spec, &inst.index, &inst.network, 0).unwrap();
    let n = inst.n_arms();

    // outcome of a real assignment, computed from scratch
    let outcome = |a: &[u32]| -> f64 {
        let mut total = 0.0;
        for i in 0..n_units {
            let ns = inst.network.neighbors(i + 1).unwrap();
            let treated = ns.iter().filter(|&&j| a[j - 1] == 1).count() as f64;
            total += (1.0 - spillover[i]) * own[i][a[i] as usize]
                + spillover[i] * treated / ns.len() as f64;
        }
        total / n_units as f64
    };
    let mean: Vec<f64> = (0..n)
        .map(|k| {
            let pool = inst.index.witness_pool(k).unwrap();
            pool.iter().map(|w| outcome(w)).sum::<f64>() / pool.len() as f64
        })
        .collect();

    // frozen, deliberately uneven propensities
    let raw: Vec<f64> = (0..n).map(|k| 1.0 + (k % 3) as f64).collect();
    let z: f64 = raw.iter().sum();
    let probs: Vec<f64> = raw.iter().map(|r| r / z).collect();

    let mut exact_err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut expectation = 0.0;
            for s in 0..n {
                let pool = inst.index.witness_pool(s).unwrap();
                for w in pool {
                    let r = env
                        .realize_reward(1, s, w, &mut ChaCha8Rng::seed_from_u64(0))
                        .unwrap();
                    expectation +=
                        probs[s] / pool.len() as f64 * ipw_increment(s, r, &probs, (i, j)).unwrap();
                }
            }
            exact_err = exact_err.max((expectation - (mean[i] - mean[j])).abs());
        }
    }

    let (i, j) = (0, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| {
            let s = select_arm(&probs, &mut rng);
            let w = inst.index.sample_witness(s, &mut rng).unwrap();
            let r = env.realize_reward(1, s, w, &mut rng).unwrap();
            ipw_increment(s, r, &probs, (i, j)).unwrap()
        })
        .collect();
    let mc = MeanSe::of(&draws);
    let tau = mean[i] - mean[j];
    let ok = exact_err <= 1e-12 && (mc.mean - tau).abs() <= 3.0 * mc.se;
    report(
        5,
        ok,
        start.elapsed(),
        secs(30),
        format!(
            "exact max error {exact_err:.2e} over {} ordered pairs; MC {:.5} vs tau {tau:.5} (se {:.5})",
            n * (n - 1),
            mc.mean,
            mc.se
        ),
    );
}

#[test]
fn criterion_06_anytime_coverage() {
    let start = Instant::now();
    let mut cfg = stationary(4, 2, &[0.8, 0.35, 0.6, 0.2], vec![vec![1, 2], vec![3, 4]]);
    cfg.horizon = 2000;
    cfg.replications = 500;
    cfg.cs.tilde_delta = 0.05;
    cfg.logging.monitor_coverage = true;
    let exp = Experiment::new(cfg).unwrap();
    let result = exp
        .run_variant(MadSchedule::Uniform, &mut NullSink::default())
        .unwrap();
    let failures = result.summary.coverage_failures.unwrap();
    let rate = failures as f64 / 500.0;
    report(
        6,
        rate <= 0.08,
        start.elapsed(),
        secs(300),
        format!("{failures}/500 replications left the sequence for some pair at some t (rate {rate:.3})"),
    );
}

fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + x.ln() / n, b + y.ln() / n)
    });
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in points {
        sxy += (x.ln() - mx) * (y.ln() - my);
        sxx += (x.ln() - mx).powi(2);
    }
    sxy / sxx
}

#[test]
fn criterion_07_width_rate() {
    let start = Instant::now();
    let mut slopes = Vec::new();
    for (alpha, target) in [(0.0, -0.5), (0.4, -0.3)] {
        // widest pair of the scaled main instance
        let mut cfg = preset_instance("main_scaled").unwrap();
        cfg.horizon = 5000;
        cfg.replications = 100;
        cfg.logging.cs_stride = Some(50);
        let exp = Experiment::new(cfg).unwrap();
        let result = exp
            .run_variant(MadSchedule::PowerLaw { alpha }, &mut NullSink::default())
            .unwrap();
        let s = &result.summary;
        let points: Vec<(f64, f64)> = s
            .rounds
            .iter()
            .zip(&s.widest_width)
            .filter(|(t, _)| (500..=5000).contains(*t))
            .map(|(&t, w)| (t as f64, w.mean))
            .collect();
        slopes.push((alpha, target, log_log_slope(&points)));
    }
    let ok = slopes
        .iter()
        .all(|(_, target, s)| (s - target).abs() <= 0.08);
    let detail = slopes
        .iter()
        .map(|(a, target, s)| format!("alpha {a}: slope {s:.3} (target {target})"))
        .collect::<Vec<_>>()
        .join("; ");
    report(7, ok, start.elapsed(), secs(300), detail);
}

struct MainRun {
    results: Vec<VariantResult>,
    digests: BTreeMap<String, Vec<u8>>,
    elapsed: Duration,
}

fn main_scaled_config() -> RunConfig {
    let mut cfg = preset_instance("main_scaled").unwrap();
    cfg.horizon = 10_000;
    cfg.replications = 200;
    cfg.master_seed = 20_240_601;
    cfg.schedules = vec![
        MadSchedule::Uniform,
        MadSchedule::PowerLaw { alpha: 0.1 },
        MadSchedule::PowerLaw { alpha: 0.49 },
        MadSchedule::Standard,
    ];
    cfg
}

fn main_run() -> &'static MainRun {
    static RUN: OnceLock<MainRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let exp = Experiment::new(main_scaled_config()).unwrap();
        let mut sink = HashSink::default();
        let results = exp.run_all(&mut sink).unwrap();
        MainRun {
            results,
            digests: sink.digests(),
            elapsed: start.elapsed(),
        }
    })
}

fn variant(run: &MainRun, schedule: MadSchedule) -> &VariantResult {
    run.results.iter().find(|r| r.schedule == schedule).unwrap()
}

#[test]
fn criterion_08_regret_ordering() {
    let run = main_run();
    let uniform = variant(run, MadSchedule::Uniform).summary.final_regret;
    let a01 = variant(run, MadSchedule::PowerLaw { alpha: 0.1 })
        .summary
        .final_regret;
    let a049 = variant(run, MadSchedule::PowerLaw { alpha: 0.49 })
        .summary
        .final_regret;
    let standard = variant(run, MadSchedule::Standard).summary.final_regret;
    let se = |a: MeanSe, b: MeanSe| (a.se * a.se + b.se * b.se).sqrt();
    let gap1 = uniform.mean - a01.mean;
    let gap2 = a01.mean - a049.mean;
    let close = (a049.mean - standard.mean).abs();
    let ok = gap1 > 2.0 * se(uniform, a01)
        && gap2 > 2.0 * se(a01, a049)
        && close <= 2.0 * se(a049, standard);
    report(
        8,
        ok,
        run.elapsed,
        secs(600),
        format!(
            "regret uniform {:.1}±{:.1}, a0.1 {:.1}±{:.1}, a0.49 {:.1}±{:.1}, standard {:.1}±{:.1}; \
             gaps {gap1:.1} (2se {:.1}), {gap2:.1} (2se {:.1}), |a0.49-standard| {close:.1} (2se {:.1})",
            uniform.mean,
            uniform.se,
            a01.mean,
            a01.se,
            a049.mean,
            a049.se,
            standard.mean,
            standard.se,
            2.0 * se(uniform, a01),
            2.0 * se(a01, a049),
            2.0 * se(a049, standard),
        ),
    );
}

#[test]
fn criterion_09_ate_error_ordering() {
    let run = main_run();
    let q = |s| variant(run, s).summary.max_error_quartiles;
    let standard = q(MadSchedule::Standard);
    let uniform = q(MadSchedule::Uniform);
    let a01 = q(MadSchedule::PowerLaw { alpha: 0.1 });
    let iqr = |x: mabn_core::harness::Quartiles| x.q3 - x.q1;
    let ok = standard.median > uniform.median
        && standard.median > a01.median
        && iqr(standard) > iqr(uniform)
        && iqr(standard) > iqr(a01);
    report(
        9,
        ok,
        run.elapsed,
        secs(600),
        format!(
            "median max error standard {:.4}, uniform {:.4}, a0.1 {:.4}; IQR {:.4}, {:.4}, {:.4}",
            standard.median,
            uniform.median,
            a01.median,
            iqr(standard),
            iqr(uniform),
            iqr(a01)
        ),
    );
}

#[test]
fn criterion_10_pareto_boundedness() {
    let start = Instant::now();
    let alpha = 0.45;
    let horizons = [2500u64, 5000, 10_000, 20_000];
    let mut products = Vec::new();
    for &t in &horizons {
        let mut cfg = stationary(1, 2, &[0.8, 0.3], vec![vec![1]]);
        cfg.horizon = t;
        cfg.replications = 100;
        let exp = Experiment::new(cfg).unwrap();
        let n = exp.instance().n_arms() as f64;
        assert!((n * t as f64).sqrt() <= (t as f64).powf(1.0 - alpha));
        let result = exp
            .run_variant(MadSchedule::PowerLaw { alpha }, &mut NullSink::default())
            .unwrap();
        products.push(result.summary.pareto);
    }
    let growth: Vec<f64> = products.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let ok = growth.iter().all(|g| *g <= 0.30);
    report(
        10,
        ok,
        start.elapsed(),
        secs(900),
        format!("alpha {alpha}: e*sqrt(R) {products:.3?} at T {horizons:?}; growth per doubling {growth:.3?}"),
    );
}

#[test]
fn criterion_11_determinism() {
    let first = main_run();
    let start = Instant::now();
    let exp = Experiment::new(main_scaled_config())
        .unwrap()
        .sequential(true);
    let mut sink = HashSink::default();
    exp.run_all(&mut sink).unwrap();
    let again = sink.digests();
    let ok = again == first.digests && again.len() == 2 + 1 + 2 * 4;
    report(
        11,
        ok,
        first.elapsed + start.elapsed(),
        secs(1200),
        format!(
            "{} artifacts, byte-identical on repeat: {}",
            again.len(),
            again == first.digests
        ),
    );
}
