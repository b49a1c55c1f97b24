//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line; any failure makes the process exit non-zero.

use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phaselock_core::encoding::{binarize, outer_product_weights, pattern_to_phases, Pattern, PatternSet};
use phaselock_core::energy::{hopfield_energy, smoothed_energy_trace};
use phaselock_core::hidden::{fisher_report, visible_marginal, BipartiteEnergyModel};
use phaselock_core::phase::{
    integrate_trace, kuramoto_rhs, wrap_phase, CouplingMatrix, Integrator, NaturalFrequencies, NetworkTopology,
    PhaseState, SymmetryMode,
};
use phaselock_core::protocol::{
    batch_configs, batch_run, BatchOptions, BatchResult, ExperimentSchedule,
    PatternSource, RunConfig, SegmentMode,
};
use phaselock_core::stability::{find_fixed_point, find_fixed_point_with, perturbation_bound, predicted_shift, FixedPointSearch, Gauge};
use phaselock_core::sysid::{extract_phase, fit_kuramoto, FitConfig, VoltageTrace};

const RUNS: usize = 100;
const MASTER_SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn stored_pair() -> PatternSet {
    PatternSet::new(vec![
        Pattern::new(vec![1, -1, 1, -1]).unwrap(),
        Pattern::new(vec![1, 1, -1, -1]).unwrap(),
    ])
    .unwrap()
}

fn random_symmetric(rng: &mut ChaCha8Rng, topology: &NetworkTopology) -> CouplingMatrix {
    let mut k = CouplingMatrix::zeros(topology, SymmetryMode::Symmetric);
    for (i, j) in k.stored_pairs() {
        k.set(i, j, rng.random_range(-1.0..1.0));
    }
    k
}

fn random_phases(rng: &mut ChaCha8Rng, n: usize) -> PhaseState {
    PhaseState((0..n).map(|_| rng.random_range(-PI..PI)).collect())
}

// 1
fn gradient_flow_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let n = [2, 4, 8][case % 3];
        let mask: Vec<Vec<bool>> = {
            let mut m = vec![vec![false; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    let on = rng.random_bool(0.7);
                    m[i][j] = on;
                    m[j][i] = on;
                }
            }
            m
        };
        let topo = NetworkTopology::with_mask(mask, 1).unwrap();
        let k = random_symmetric(&mut rng, &topo);
        let s = random_phases(&mut rng, n);
        let v = kuramoto_rhs(&s, &k, &NaturalFrequencies::homogeneous(n)).unwrap();
        for i in 0..n {
            let mut up = s.clone();
            up.0[i] += h;
            let mut down = s.clone();
            down.0[i] -= h;
            let grad = (hopfield_energy(&up, &k) - hopfield_energy(&down, &k)) / (2.0 * h);
            worst = worst.max((v[i] + grad).abs());
        }
    }
    Outcome::new(worst <= 1e-6, format!("max |rhs + grad E| = {worst:.2e} (limit 1e-6)"))
}

// 2
fn lyapunov_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let topo = NetworkTopology::flat(4, 2).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let k = random_symmetric(&mut rng, &topo);
        let s = random_phases(&mut rng, 4);
        let tr = integrate_trace(&s, &k, &NaturalFrequencies::homogeneous(4), 10.0, 1e-3, 1, Integrator::Euler).unwrap();
        let e: Vec<f64> = tr.iter().map(|p| hopfield_energy(p, &k)).collect();
        for w in e.windows(2) {
            worst = worst.max(w[1] - w[0]);
        }
    }
    Outcome::new(worst <= 1e-9, format!("largest per-step energy increase {worst:.2e} (limit 1e-9)"))
}

// 3
fn stored_pattern_minima() -> Outcome {
    let ps = stored_pair();
    let k = outer_product_weights(&ps, 1.0).unwrap();
    let mut energies = Vec::new();
    for code in 0..16u32 {
        let bits = (0..4).map(|b| if code >> b & 1 == 1 { -1 } else { 1 }).collect();
        let p = Pattern::new(bits).unwrap();
        energies.push((hopfield_energy(&pattern_to_phases(&p), &k), p));
    }
    let min = energies.iter().map(|(e, _)| *e).fold(f64::INFINITY, f64::min);
    let mut ok = (min + 2.0).abs() < 1e-12;
    let mut max_residual: f64 = 0.0;
    for p in ps.patterns() {
        for q in [p.clone(), p.negated()] {
            let e = energies.iter().find(|(_, r)| *r == q).unwrap().0;
            ok &= (e - min).abs() < 1e-12;
            let rep = find_fixed_point(&pattern_to_phases(&q), &k, &NaturalFrequencies::homogeneous(4), 1e-8).unwrap();
            ok &= rep.iterations == 0;
            max_residual = max_residual.max(rep.residual_norm);
        }
    }
    ok &= max_residual < 1e-12;
    Outcome::new(ok, format!("minimum energy {min:.3}, stored patterns and negations attain it, max residual {max_residual:.1e}"))
}

fn flat_train_config() -> RunConfig {
    let schedule = ExperimentSchedule::alternating(SegmentMode::Train, 160, 0.5, 2, 0.1).unwrap();
    RunConfig::new(NetworkTopology::flat(4, 2).unwrap(), stored_pair(), schedule)
}

// 4
fn training_convergence() -> Outcome {
    let cfgs = batch_configs(&flat_train_config(), RUNS, MASTER_SEED, PatternSource::RandomPair).unwrap();
    let r = batch_run(&cfgs, &BatchOptions::default()).unwrap();
    let m = r.mse.unwrap().mean;
    let n = m.len();
    let (first, last) = (m[0], m[n - 1]);
    let band = 0.05 * first;
    let mut low = f64::INFINITY;
    let mut rise: f64 = 0.0;
    for &x in &m[n / 10..] {
        low = low.min(x);
        rise = rise.max(x - low);
    }
    Outcome::new(
        last < 0.1 * first && rise <= band,
        format!("mean mse {first:.4} -> {last:.4} (ratio {:.4}, limit 0.1), worst rise {rise:.4} (band {band:.4})", last / first),
    )
}

fn then_recall(train: ExperimentSchedule, recall: ExperimentSchedule, settle: f64) -> ExperimentSchedule {
    ExperimentSchedule::new(train.segments.into_iter().chain(recall.segments).collect(), settle).unwrap()
}

// 5
fn associative_recall() -> Outcome {
    let train = ExperimentSchedule::alternating(SegmentMode::Train, 160, 0.5, 2, 0.1).unwrap();
    let recall = ExperimentSchedule::alternating(SegmentMode::Recall, 2, 2.0, 2, 0.5).unwrap();
    let schedule = then_recall(train, recall, 0.1);
    let base = RunConfig::new(NetworkTopology::flat(4, 2).unwrap(), stored_pair(), schedule);
    let cfgs = batch_configs(&base, RUNS, MASTER_SEED, PatternSource::Fixed).unwrap();
    let r = batch_run(&cfgs, &BatchOptions { keep_runs: true, ..Default::default() }).unwrap();
    let starts = base.schedule.segment_starts();
    let mut good = 0;
    for run in &r.runs {
        let ok = run.trace.iter().all(|rec| {
            let seg = &base.schedule.segments[rec.segment];
            if seg.mode != SegmentMode::Recall || rec.time - starts[rec.segment] < 0.5 - 1e-9 {
                return true;
            }
            let p = base.target_patterns.get(seg.pattern);
            let b = binarize(&PhaseState(rec.phases.clone()), 0);
            (2..4).all(|o| b.bits()[o] == p.bits()[o] * p.bits()[0])
        });
        good += ok as usize;
    }
    Outcome::new(good == RUNS, format!("{good}/{RUNS} seeds recall the active pattern after the settle window"))
}

fn layered_config(dispersion: f64) -> RunConfig {
    let train = ExperimentSchedule::alternating(SegmentMode::Train, 80, 2.0, 2, 0.5).unwrap();
    let recall = ExperimentSchedule::alternating(SegmentMode::Recall, 6, 2.0, 2, 0.5).unwrap();
    let mut c = RunConfig::new(NetworkTopology::layered(&[2, 4, 2]).unwrap(), stored_pair(), then_recall(train, recall, 0.5));
    c.freq_dispersion = dispersion;
    c
}

fn layered_batch(dispersion: f64) -> (RunConfig, BatchResult) {
    let base = layered_config(dispersion);
    let cfgs = batch_configs(&base, RUNS, MASTER_SEED, PatternSource::RecallablePair).unwrap();
    let r = batch_run(&cfgs, &BatchOptions { keep_runs: true, ..Default::default() }).unwrap();
    (base, r)
}

fn first_recall(c: &RunConfig) -> usize {
    c.schedule.segments.iter().position(|s| s.mode == SegmentMode::Recall).unwrap()
}

/// Mean steady accuracy and, per switch between recall segments, the lowest
/// mean accuracy inside the settle window against the steady means on
/// either side.
fn accuracy_profile(c: &RunConfig, r: &BatchResult) -> (f64, Vec<(f64, f64, f64)>) {
    let steady = r.summaries.iter().map(|s| s.steady_accuracy).sum::<f64>() / r.summaries.len() as f64;
    let starts = c.schedule.segment_starts();
    let settle = c.schedule.settle_time;
    let seg_of = |i: usize| r.runs[0].trace[i].segment;
    let steady_mean = |seg: usize| {
        let xs: Vec<f64> = (0..r.times.len())
            .filter(|&i| seg_of(i) == seg && r.times[i] - starts[seg] >= settle - 1e-9)
            .map(|i| r.accuracy.mean[i])
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let mut dips = Vec::new();
    for seg in first_recall(c) + 1..c.schedule.segments.len() {
        let low = (0..r.times.len())
            .filter(|&i| seg_of(i) == seg && r.times[i] - starts[seg] < settle - 1e-9)
            .map(|i| r.accuracy.mean[i])
            .fold(f64::INFINITY, f64::min);
        dips.push((steady_mean(seg - 1), low, steady_mean(seg)));
    }
    (steady, dips)
}

fn recall_accuracy_outcome(c: &RunConfig, r: &BatchResult, threshold: f64) -> Outcome {
    let (steady, dips) = accuracy_profile(c, r);
    let dips_ok = dips.iter().all(|&(before, low, after)| low < before && after > low);
    let text: Vec<String> = dips.iter().map(|(b, l, a)| format!("{b:.2}/{l:.2}/{a:.2}")).collect();
    Outcome::new(
        steady > threshold && dips_ok,
        format!("steady accuracy {steady:.4} (limit > {threshold}); switch dips before/low/after {}", text.join(" ")),
    )
}

// 8
fn energy_sawtooth(c: &RunConfig, r: &BatchResult) -> Outcome {
    let half = 5;
    let starts = c.schedule.segment_starts();
    let dt = c.sample_interval();
    let idx = |t: f64| (t / dt).round() as usize;
    let recall_starts: Vec<usize> = starts[first_recall(c)..].iter().map(|&t| idx(t)).collect();
    let mut good = 0;
    let mut worst_rel: f64 = 0.0;
    let mut missed_jumps = 0;
    for run in &r.runs {
        let e: Vec<f64> = run.trace.iter().map(|t| t.energy).collect();
        let sm = smoothed_energy_trace(&e, 2 * half + 1).unwrap();
        let mut ok = true;
        for w in 1..recall_starts.len() {
            let is = recall_starts[w];
            let pre = sm[is - half - 1];
            if !(sm[is + 1] > pre) {
                ok = false;
                missed_jumps += 1;
            }
            let next = recall_starts.get(w + 1).copied().unwrap_or(e.len() - 1);
            let rel = (sm[next - half - 1] - pre).abs() / pre.abs();
            worst_rel = worst_rel.max(rel);
            ok &= rel <= 0.05;
        }
        good += ok as usize;
    }
    Outcome::new(
        good >= 95,
        format!("{good}/{RUNS} runs show the sawtooth (need 95); missed jumps {missed_jumps}, worst re-relaxation gap {:.1}%", 100.0 * worst_rel),
    )
}

// 9
fn stability_bound() -> Outcome {
    let mut c = flat_train_config();
    c.seed = MASTER_SEED;
    let out = phaselock_core::protocol::run_training(&c).unwrap();
    let k = out.weights;
    let base = NaturalFrequencies(out.frequencies.0.iter().map(|w| w / c.coupling_gain).collect());
    let search = FixedPointSearch {
        gauge: Gauge::Pinned { indices: vec![0, 1] },
        tol: 1e-13,
        ..Default::default()
    };
    let start = pattern_to_phases(c.target_patterns.get(0));
    let orig = find_fixed_point_with(&start, &k, &base, &search).unwrap();
    if !orig.is_minimum {
        return Outcome::new(false, format!("trained fixed point is not a strict minimum (lambda_min {:.3e})", orig.lambda_min));
    }
    let relax = |dw: &[f64]| -> Vec<f64> {
        let f = NaturalFrequencies(base.0.iter().zip(dw).map(|(a, b)| a + b).collect());
        let rep = find_fixed_point_with(&orig.phi_star, &k, &f, &search).unwrap();
        let d: Vec<f64> = rep.phi_star.0.iter().zip(&orig.phi_star.0).map(|(a, b)| a - b).collect();
        search.gauge.fix_displacement(&d)
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_bound_ratio: f64 = 0.0;
    let (mut lo_ratio, mut hi_ratio) = (f64::INFINITY, 0.0f64);
    for _ in 0..20 {
        let dir: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let unit: Vec<f64> = dir.iter().map(|x| x / norm(&dir)).collect();
        let scaled = |s: f64| -> Vec<f64> { unit.iter().map(|x| x * s).collect() };

        let dw = scaled(0.01 * orig.lambda_min);
        let bound = perturbation_bound(&orig, &NaturalFrequencies(dw.clone())).unwrap();
        worst_bound_ratio = worst_bound_ratio.max(norm(&relax(&dw)) / bound);

        let err = |s: f64| {
            let dw = scaled(s);
            let measured = relax(&dw);
            let predicted = predicted_shift(&orig, &NaturalFrequencies(dw)).unwrap();
            let diff: Vec<f64> = measured.iter().zip(&predicted).map(|(a, b)| a - b).collect();
            norm(&diff)
        };
        let ratio = err(1e-2) / err(1e-3);
        lo_ratio = lo_ratio.min(ratio);
        hi_ratio = hi_ratio.max(ratio);
    }
    let ok = worst_bound_ratio <= 1.1 && lo_ratio >= 100.0 / 3.0 && hi_ratio <= 300.0;
    Outcome::new(
        ok,
        format!(
            "lambda_min {:.3}; displacement/bound max {worst_bound_ratio:.3} (limit 1.1); error ratio across 10x range {lo_ratio:.1}..{hi_ratio:.1} (quadratic 100, factor 3)",
            orig.lambda_min
        ),
    )
}

// 10
fn fisher_null_space() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_gap: f64 = 0.0;
    let mut worst_change: f64 = 0.0;
    let mut ok = true;
    for _ in 0..20 {
        let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let model = BipartiteEnergyModel::from_rows(&rows, 1.0).unwrap();
        let rep = fisher_report(&model, 1e-8);
        let lmax = *rep.eigenvalues.last().unwrap();
        let lmin = rep.eigenvalues[0];
        worst_gap = worst_gap.max(lmin / lmax);
        ok &= rep.eigenvalues.len() == 16 && lmin <= 1e-8 * lmax && !rep.null_directions.is_empty();
        let before = visible_marginal(&model).log_probs;
        for dir in &rep.null_directions {
            let after = visible_marginal(&model.stepped(dir, 1e-4).unwrap()).log_probs;
            for (a, b) in after.iter().zip(&before) {
                worst_change = worst_change.max((a - b).abs());
            }
        }
    }
    ok &= worst_change <= 1e-7;
    Outcome::new(
        ok,
        format!("max lambda_min/lambda_max {worst_gap:.1e} (limit 1e-8); max log-probability change {worst_change:.1e} (limit 1e-7)"),
    )
}

// 11
fn sysid_round_trip() -> Outcome {
    let topo = NetworkTopology::flat(4, 2).unwrap();
    let rate = 1000.0;
    let carrier = 20.0;
    let seconds = 10.0;
    let mut worst_k: f64 = 0.0;
    let mut worst_lock: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(1100 + seed);
        let k = random_symmetric(&mut rng, &topo);
        let freqs = NaturalFrequencies((0..4).map(|_| rng.random_range(-0.05..0.05)).collect());
        let s0 = random_phases(&mut rng, 4);
        let tr = integrate_trace(&s0, &k, &freqs, seconds, 1.0 / rate, 1, Integrator::Rk4).unwrap();
        let channels: Vec<Vec<f64>> = (0..4)
            .map(|c| tr.iter().enumerate().map(|(t, s)| (TAU * carrier * t as f64 / rate + s.0[c]).cos()).collect())
            .collect();
        let ex = extract_phase(&VoltageTrace::new(rate, channels).unwrap()).unwrap();
        let obs = ex.interior();
        let fit = fit_kuramoto(&obs, ex.dt, &topo, &FitConfig::default()).unwrap();
        for (i, j) in k.stored_pairs() {
            worst_k = worst_k.max((fit.k_hat.get(i, j) - k.get(i, j)).abs());
        }
        let len = obs[0].len();
        let initial: Vec<f64> = obs.iter().map(|c| c[0]).collect();
        let pred = fit.predict(&initial, ex.dt, len, 1);
        for c in 1..4 {
            let observed = obs[c][len - 1] - obs[0][len - 1];
            let predicted = pred[c][len - 1] - pred[0][len - 1];
            worst_lock = worst_lock.max(wrap_phase(observed - predicted).abs());
        }
    }
    Outcome::new(
        worst_k <= 0.05 && worst_lock <= 0.05,
        format!("max coupling error {worst_k:.4} (limit 0.05); max locking phase error {worst_lock:.4} rad (limit 0.05)"),
    )
}

// 12
fn determinism() -> Outcome {
    let mut c = layered_config(0.05);
    c.seed = 12;
    let a = phaselock_core::protocol::run_training(&c).unwrap();
    let b = phaselock_core::protocol::run_training(&c).unwrap();
    let bits = |o: &phaselock_core::protocol::RunOutput| -> Vec<u64> {
        o.trace
            .iter()
            .flat_map(|r| r.phases.iter().chain(&r.weights).chain(&r.accuracy).chain([&r.energy, &r.time]).map(|x| x.to_bits()).collect::<Vec<_>>())
            .collect()
    };
    let same_trace = bits(&a) == bits(&b);
    let cfgs = batch_configs(&flat_train_config(), 16, MASTER_SEED, PatternSource::RandomPair).unwrap();
    let one = batch_run(&cfgs, &BatchOptions { workers: 1, ..Default::default() }).unwrap();
    let many = batch_run(&cfgs, &BatchOptions { workers: 8, ..Default::default() }).unwrap();
    Outcome::new(
        same_trace && one == many,
        format!("repeat run bit-identical: {same_trace}; 1 vs 8 workers identical: {}", one == many),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |id: u32, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let took = t.elapsed();
        let in_time = took < limit;
        let pass = o.pass && in_time;
        failures += !pass as usize;
        println!(
            "[{}] {id:>2} {name}: {}; {:.1} s (limit {} s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    };
    let s = Duration::from_secs;
    report(1, "gradient-flow identity", s(5), &mut gradient_flow_identity);
    report(2, "lyapunov monotonicity", s(10), &mut lyapunov_monotonicity);
    report(3, "stored-pattern minima", s(1), &mut stored_pattern_minima);
    report(4, "training convergence", s(120), &mut training_convergence);
    report(5, "associative recall", s(60), &mut associative_recall);

    report(6, "continuous-learning recall accuracy", s(300), &mut || {
        let (c, r) = layered_batch(0.05);
        recall_accuracy_outcome(&c, &r, 0.95)
    });
    report(7, "dispersion robustness", s(300), &mut || {
        let (c, r) = layered_batch(0.20);
        recall_accuracy_outcome(&c, &r, 0.90)
    });
    report(8, "energy sawtooth", s(300), &mut || {
        let (c, r) = layered_batch(0.05);
        energy_sawtooth(&c, &r)
    });
    report(9, "stability bound", s(30), &mut stability_bound);
    report(10, "fisher null space", s(30), &mut fisher_null_space);
    report(11, "sysid round trip", s(120), &mut sysid_round_trip);
    report(12, "determinism and parallel invariance", s(60), &mut determinism);

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
