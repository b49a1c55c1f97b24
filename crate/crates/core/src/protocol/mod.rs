//! Training and recall experiments: schedules, run configuration, seeding,
//! metrics and batch aggregation.

mod batch;
mod metrics;
mod run;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{Pattern, PatternSet};
use crate::error::{config_err, Result};
use crate::phase::{NetworkTopology, SymmetryMode};
use crate::plasticity::LearningParams;

pub use batch::{batch_configs, batch_run, BatchOptions, BatchResult, PatternSource, RunSummary, Series, steady_mask};
pub use metrics::{mean_accuracy, recall_accuracy, relative_target, rolling_mean, weight_mse};
pub use run::{run_recall, run_training, RunOutput, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentMode {
    /// Inputs clamped, outputs nudged, plasticity on.
    Train,
    /// Inputs clamped, outputs free.
    Recall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    /// Seconds.
    pub duration: f64,
    /// Index into the run's target patterns.
    pub pattern: usize,
    pub mode: SegmentMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSchedule {
    pub segments: Vec<Segment>,
    /// Seconds after each segment start excluded from steady-state metrics.
    pub settle_time: f64,
}

impl ExperimentSchedule {
    pub fn new(segments: Vec<Segment>, settle_time: f64) -> Result<Self> {
        let s = Self { segments, settle_time };
        s.validate()?;
        Ok(s)
    }

    /// `count` segments of equal length cycling through patterns `0..n_patterns`.
    pub fn alternating(
        mode: SegmentMode,
        count: usize,
        interval: f64,
        n_patterns: usize,
        settle_time: f64,
    ) -> Result<Self> {
        if n_patterns == 0 {
            return config_err("need at least one pattern to alternate");
        }
        Self::new(
            (0..count)
                .map(|i| Segment {
                    duration: interval,
                    pattern: i % n_patterns,
                    mode,
                })
                .collect(),
            settle_time,
        )
    }

    /// Append another schedule's segments. The settle time of `self` is kept.
    pub fn then(mut self, other: &ExperimentSchedule) -> Result<Self> {
        self.segments.extend(other.segments.iter().cloned());
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return config_err("schedule has no segments");
        }
        if !(self.settle_time >= 0.0) || !self.settle_time.is_finite() {
            return config_err(format!("settle_time must be non-negative, got {}", self.settle_time));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration > 0.0) || !s.duration.is_finite() {
                return config_err(format!("segment {i} has non-positive duration {}", s.duration));
            }
            if self.settle_time >= s.duration {
                return config_err(format!(
                    "settle_time {} is not shorter than segment {i} ({} s)",
                    self.settle_time, s.duration
                ));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Start time of every segment.
    pub fn segment_starts(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t += s.duration;
                start
            })
            .collect()
    }

    pub fn has_mode(&self, mode: SegmentMode) -> bool {
        self.segments.iter().any(|s| s.mode == mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub topology: NetworkTopology,
    pub symmetry: SymmetryMode,
    pub learning: LearningParams,
    /// Euler step, s.
    pub dt: f64,
    pub seed: u64,
    /// Bounds of the uniform initial weight distribution.
    pub init_weight_range: (f64, f64),
    /// Fractional half-width of the natural frequency spread.
    pub freq_dispersion: f64,
    /// Rotating-frame frequency unit, rad/s; Δω_i = frequency_scale · U(±freq_dispersion).
    pub frequency_scale: f64,
    /// Coupling strength in rad/s per unit weight.
    pub coupling_gain: f64,
    /// Steps between trace records.
    pub sample_every: usize,
    /// Keep plasticity active during recall segments.
    pub plastic_recall: bool,
    pub schedule: ExperimentSchedule,
    /// Full visible patterns, inputs followed by outputs.
    pub target_patterns: PatternSet,
}

impl RunConfig {
    /// Default settings around a topology, its target patterns and a
    /// schedule.
    pub fn new(topology: NetworkTopology, target_patterns: PatternSet, schedule: ExperimentSchedule) -> Self {
        Self {
            topology,
            symmetry: SymmetryMode::Symmetric,
            learning: LearningParams::default(),
            dt: 1e-3,
            seed: 0,
            init_weight_range: (-0.25, 0.25),
            freq_dispersion: 0.05,
            frequency_scale: DEFAULT_FREQUENCY_SCALE,
            coupling_gain: DEFAULT_COUPLING_GAIN,
            sample_every: 10,
            plastic_recall: true,
            schedule,
            target_patterns,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.learning.validate()?;
        self.schedule.validate()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return config_err(format!("dt must be positive, got {}", self.dt));
        }
        let (lo, hi) = self.init_weight_range;
        if !(lo >= -1.0 && hi <= 1.0 && lo <= hi) {
            return config_err(format!("init_weight_range [{lo}, {hi}] must lie inside [-1, 1]"));
        }
        if !(self.freq_dispersion >= 0.0) || !self.freq_dispersion.is_finite() {
            return config_err(format!("freq_dispersion must be non-negative, got {}", self.freq_dispersion));
        }
        if !(self.frequency_scale >= 0.0) || !self.frequency_scale.is_finite() {
            return config_err("frequency_scale must be non-negative");
        }
        if !(self.coupling_gain > 0.0) || !self.coupling_gain.is_finite() {
            return config_err("coupling_gain must be positive");
        }
        if self.sample_every == 0 {
            return config_err("sample_every must be at least 1");
        }
        if self.target_patterns.pattern_len() != self.topology.n_visible() {
            return config_err(format!(
                "target patterns have length {} but the network has {} visible oscillators",
                self.target_patterns.pattern_len(),
                self.topology.n_visible()
            ));
        }
        if let Some(s) = self.schedule.segments.iter().find(|s| s.pattern >= self.target_patterns.len()) {
            return config_err(format!("segment refers to missing pattern {}", s.pattern));
        }
        Ok(())
    }

    /// Seconds between trace records.
    pub fn sample_interval(&self) -> f64 {
        self.dt * self.sample_every as f64
    }
}

/// Default coupling strength, rad/s per unit weight.
pub const DEFAULT_COUPLING_GAIN: f64 = 100.0;
/// Default rotating-frame frequency unit, rad/s.
pub const DEFAULT_FREQUENCY_SCALE: f64 = 100.0;

/// Independent random streams of one run.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Frequencies = 0,
    Weights = 1,
    TrainPhases = 2,
    RecallPhases = 3,
    Patterns = 4,
}

pub(crate) fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `index` in a batch: the SplitMix64 output at counter
/// position `index + 1` of a generator started at `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn random_pattern(rng: &mut ChaCha8Rng, n: usize) -> Pattern {
    Pattern::new((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
        .expect("non-empty ±1 pattern")
}

/// Two patterns drawn uniformly, redrawn while equal or exactly opposite.
pub fn random_pattern_pair(seed: u64, visible_size: usize) -> Result<PatternSet> {
    if visible_size < 2 {
        return config_err(format!("visible size must be at least 2, got {visible_size}"));
    }
    let mut rng = stream_rng(seed, Stream::Patterns);
    loop {
        let a = random_pattern(&mut rng, visible_size);
        let b = random_pattern(&mut rng, visible_size);
        if !a.gauge_equivalent(&b) {
            return PatternSet::new(vec![a, b]);
        }
    }
}

/// Like [`random_pattern_pair`], but the input parts (first `n_inputs`
/// entries) must also differ up to a global sign, so that the inputs alone
/// determine which pattern is meant.
pub fn random_recallable_pair(seed: u64, visible_size: usize, n_inputs: usize) -> Result<PatternSet> {
    if n_inputs < 2 || n_inputs >= visible_size {
        return config_err("recallable pairs need at least two inputs and one output");
    }
    let mut rng = stream_rng(seed, Stream::Patterns);
    loop {
        let a = random_pattern(&mut rng, visible_size);
        let b = random_pattern(&mut rng, visible_size);
        if !a.select(0..n_inputs).gauge_equivalent(&b.select(0..n_inputs)) {
            return PatternSet::new(vec![a, b]);
        }
    }
}
