use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{recall_accuracy, relative_target, weight_mse};
use super::{stream_rng, RunConfig, SegmentMode, Stream};
use crate::encoding::{bit_phase, outer_product_weights, Pattern};
use crate::energy::energy_of;
use crate::error::{config_err, Error, Result};
use crate::phase::{step_count, CouplingMatrix, NaturalFrequencies, PhaseState};
use crate::plasticity::{clamp_in_place, driven_velocity, plasticity_in_place, DriveSpec};

/// One sampled instant of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Seconds since the start of the run.
    pub time: f64,
    /// Index of the active schedule segment.
    pub segment: usize,
    pub phases: Vec<f64>,
    /// Stored coupling entries in `CouplingMatrix::stored_pairs` order.
    pub weights: Vec<f64>,
    pub energy: f64,
    /// Per-output accuracy against the active pattern.
    pub accuracy: Vec<f64>,
    /// Distance to the outer-product matrix; flat networks only.
    pub mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub initial_weights: CouplingMatrix,
    pub weights: CouplingMatrix,
    pub final_phases: PhaseState,
    pub frequencies: NaturalFrequencies,
    pub trace: Vec<TraceRecord>,
}

/// Train from random initial weights and phases. Recall segments may follow
/// the training segments; phases are re-randomised when the schedule first
/// moves from training to recall.
pub fn run_training(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    if !config.schedule.has_mode(SegmentMode::Train) {
        return config_err("training schedule contains no train segments");
    }
    let n = config.topology.n();
    let mut k = CouplingMatrix::zeros(&config.topology, config.symmetry);
    let (lo, hi) = config.init_weight_range;
    let mut rng = stream_rng(config.seed, Stream::Weights);
    for (i, j) in k.stored_pairs() {
        let w = if hi > lo { rng.random_range(lo..hi) } else { lo };
        k.set(i, j, w);
    }
    let phases = random_phases(config.seed, Stream::TrainPhases, n);
    simulate(config, k, phases)
}

/// Recall with given weights from random initial phases. Every segment must
/// be a recall segment.
pub fn run_recall(config: &RunConfig, k: &CouplingMatrix) -> Result<RunOutput> {
    config.validate()?;
    if config.schedule.has_mode(SegmentMode::Train) {
        return config_err("recall schedule contains train segments");
    }
    let n = config.topology.n();
    if k.n() != n {
        return config_err(format!("weights are {}×{} but the topology has {n} oscillators", k.n(), k.n()));
    }
    for i in 0..n {
        for j in 0..n {
            if k.get(i, j) != 0.0 && !config.topology.allows(i, j) {
                return config_err(format!("weight ({i}, {j}) is outside the topology mask"));
            }
        }
    }
    if !k.is_finite() || k.max_abs() > 1.0 {
        return config_err("weights must be finite and inside [-1, 1]");
    }
    let phases = random_phases(config.seed, Stream::RecallPhases, n);
    simulate(config, k.clone(), phases)
}

fn random_phases(seed: u64, stream: Stream, n: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    (0..n).map(|_| rng.random_range(-PI..PI)).collect()
}

fn device_frequencies(config: &RunConfig) -> NaturalFrequencies {
    let mut rng = stream_rng(config.seed, Stream::Frequencies);
    let d = config.freq_dispersion;
    NaturalFrequencies::new(
        (0..config.topology.n())
            .map(|_| {
                let u: f64 = if d > 0.0 { rng.random_range(-d..d) } else { 0.0 };
                config.frequency_scale * u
            })
            .collect(),
    )
}

struct SegmentPlan {
    steps: usize,
    drive: DriveSpec,
    plastic: bool,
    mode: SegmentMode,
    target: Pattern,
}

fn plan(config: &RunConfig) -> Result<Vec<SegmentPlan>> {
    let topo = &config.topology;
    let n = topo.n();
    let n_in = topo.inputs().len();
    let outputs: Vec<usize> = topo.outputs().collect();
    config
        .schedule
        .segments
        .iter()
        .map(|seg| {
            let p = config.target_patterns.get(seg.pattern);
            let clamped = topo.inputs().map(|i| (i, bit_phase(p.bits()[i]))).collect();
            let nudged = match seg.mode {
                SegmentMode::Train => outputs
                    .iter()
                    .enumerate()
                    .map(|(m, &o)| (o, bit_phase(p.bits()[n_in + m])))
                    .collect(),
                SegmentMode::Recall => Vec::new(),
            };
            let steps = step_count(seg.duration, config.dt);
            if steps == 0 {
                return config_err(format!("segment of {} s is shorter than dt", seg.duration));
            }
            Ok(SegmentPlan {
                steps,
                drive: DriveSpec::new(clamped, nudged, n)?,
                plastic: seg.mode == SegmentMode::Train || config.plastic_recall,
                mode: seg.mode,
                target: relative_target(p, 0, n_in..n_in + outputs.len()),
            })
        })
        .collect()
}

fn simulate(config: &RunConfig, mut k: CouplingMatrix, mut phases: Vec<f64>) -> Result<RunOutput> {
    let plans = plan(config)?;
    let initial_weights = k.clone();
    let freqs = device_frequencies(config);
    let outputs: Vec<usize> = config.topology.outputs().collect();
    let ideal = if config.topology.hidden().is_empty() {
        Some(outer_product_weights(&config.target_patterns, 1.0)?.masked(&config.topology))
    } else {
        None
    };
    let total_steps: usize = plans.iter().map(|p| p.steps).sum();
    let mut trace = Vec::with_capacity(total_steps / config.sample_every + 2);
    let mut velocity = vec![0.0; phases.len()];
    let gain = config.coupling_gain;
    let learning = config.learning;
    let dt = config.dt;

    let record = |step: usize, seg: usize, phases: &[f64], k: &CouplingMatrix, target: &Pattern| -> Result<TraceRecord> {
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical(format!("phases became non-finite at t = {}", step as f64 * dt)));
        }
        let state = PhaseState(phases.to_vec());
        Ok(TraceRecord {
            time: step as f64 * dt,
            segment: seg,
            phases: state.0.clone(),
            weights: k.stored_values(),
            energy: energy_of(phases, k),
            accuracy: recall_accuracy(&state, target, &outputs, 0),
            mse: ideal.as_ref().map(|i| weight_mse(k, i)).transpose()?,
        })
    };

    clamp_in_place(&mut phases, &plans[0].drive);
    trace.push(record(0, 0, &phases, &k, &plans[0].target)?);
    let mut step = 0usize;
    let mut prev_mode = plans[0].mode;
    for (s, p) in plans.iter().enumerate() {
        if prev_mode == SegmentMode::Train && p.mode == SegmentMode::Recall {
            phases = random_phases(config.seed, Stream::RecallPhases, phases.len());
        }
        prev_mode = p.mode;
        for _ in 0..p.steps {
            clamp_in_place(&mut phases, &p.drive);
            driven_velocity(&phases, &k, &freqs.0, &p.drive, learning.k_nudge, gain, &mut velocity);
            if p.plastic {
                plasticity_in_place(&phases, &mut k, &learning, dt);
            }
            for (ph, v) in phases.iter_mut().zip(&velocity) {
                *ph += dt * v;
            }
            step += 1;
            if step % config.sample_every == 0 {
                trace.push(record(step, s, &phases, &k, &p.target)?);
            }
        }
    }
    if !k.is_finite() {
        return Err(Error::Numerical("weights became non-finite".into()));
    }
    Ok(RunOutput {
        initial_weights,
        weights: k,
        final_phases: PhaseState(phases),
        frequencies: freqs,
        trace,
    })
}
