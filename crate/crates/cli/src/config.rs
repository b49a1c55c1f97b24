//! The experiment config document. Every key has a default, unknown keys are
//! rejected, and the fully resolved document is echoed into each summary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use phaselock_core::encoding::{Pattern, PatternSet};
use phaselock_core::phase::{NetworkTopology, SymmetryMode};
use phaselock_core::plasticity::LearningParams;
use phaselock_core::protocol::{
    ExperimentSchedule, PatternSource, RunConfig, Segment, SegmentMode, DEFAULT_COUPLING_GAIN, DEFAULT_FREQUENCY_SCALE,
};
use phaselock_core::stability::Gauge;
use phaselock_core::sysid::FitConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigDocument {
    pub topology: TopologySection,
    pub patterns: PatternsSection,
    pub learning: LearningParams,
    pub schedule: ScheduleSection,
    pub simulation: SimulationSection,
    pub batch: BatchSection,
    pub analysis: AnalysisSection,
    pub fit: FitSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologySection {
    /// One entry: flat, fully connected. Several: layered, adjacent layers
    /// coupled.
    pub layer_sizes: Vec<usize>,
    /// Inputs of a flat network; layered networks use the first layer.
    pub n_inputs: Option<usize>,
    pub symmetry: SymmetryMode,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self {
            layer_sizes: vec![4],
            n_inputs: Some(2),
            symmetry: SymmetryMode::Symmetric,
        }
    }
}

impl TopologySection {
    pub fn build(&self) -> Result<NetworkTopology, CliError> {
        Ok(NetworkTopology::from_layers(&self.layer_sizes, self.n_inputs)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatternsSection {
    /// Visible patterns of ±1, inputs first.
    pub vectors: Vec<Vec<i8>>,
}

impl Default for PatternsSection {
    fn default() -> Self {
        Self {
            vectors: vec![vec![1, -1, 1, -1], vec![1, 1, -1, -1]],
        }
    }
}

impl PatternsSection {
    pub fn build(&self) -> Result<PatternSet, CliError> {
        let ps = self
            .vectors
            .iter()
            .map(|v| Pattern::new(v.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PatternSet::new(ps)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    /// Seconds after each switch excluded from steady-state statistics.
    pub settle_time: f64,
    pub blocks: Vec<Block>,
}

/// `count` segments of `interval` seconds cycling through the patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub mode: SegmentMode,
    pub count: usize,
    pub interval: f64,
    #[serde(default)]
    pub first_pattern: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            settle_time: 0.5,
            blocks: vec![
                Block {
                    mode: SegmentMode::Train,
                    count: 40,
                    interval: 2.0,
                    first_pattern: 0,
                },
                Block {
                    mode: SegmentMode::Recall,
                    count: 4,
                    interval: 2.0,
                    first_pattern: 0,
                },
            ],
        }
    }
}

impl ScheduleSection {
    pub fn build(&self, n_patterns: usize, only: Option<SegmentMode>) -> Result<ExperimentSchedule, CliError> {
        let mut segments = Vec::new();
        for b in self.blocks.iter().filter(|b| only.is_none_or(|m| b.mode == m)) {
            if b.first_pattern >= n_patterns {
                return Err(CliError::usage(format!(
                    "schedule block starts at pattern {} but only {n_patterns} patterns exist",
                    b.first_pattern
                )));
            }
            segments.extend((0..b.count).map(|i| Segment {
                duration: b.interval,
                pattern: (b.first_pattern + i) % n_patterns,
                mode: b.mode,
            }));
        }
        Ok(ExperimentSchedule::new(segments, self.settle_time)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub seed: u64,
    /// Euler step, s.
    pub dt: f64,
    /// Steps between trace records.
    pub sample_every: usize,
    /// rad/s per unit weight.
    pub coupling_gain: f64,
    /// rad/s per unit of dispersion.
    pub frequency_scale: f64,
    /// Half-width of the natural frequency spread, as a fraction.
    pub freq_dispersion: f64,
    pub init_weight_range: [f64; 2],
    pub plastic_recall: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            seed: 0,
            dt: 1e-3,
            sample_every: 10,
            coupling_gain: DEFAULT_COUPLING_GAIN,
            frequency_scale: DEFAULT_FREQUENCY_SCALE,
            freq_dispersion: 0.05,
            init_weight_range: [-0.25, 0.25],
            plastic_recall: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchSection {
    pub runs: usize,
    pub patterns: PatternSource,
    /// 0 uses every available core.
    pub workers: usize,
    /// Trailing window of the rolling mean, in samples.
    pub rolling_window: usize,
}

impl Default for BatchSection {
    fn default() -> Self {
        Self {
            runs: 100,
            patterns: PatternSource::Fixed,
            workers: 0,
            rolling_window: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Inverse temperature of the bipartite model.
    pub beta: f64,
    /// Null directions have eigenvalue ≤ threshold · λ_max.
    pub fisher_threshold: f64,
    /// Fixed-point gauge; defaults to pinning the inputs.
    pub gauge: Option<Gauge>,
    /// Residual tolerance of the fixed-point search, rad/s.
    pub tolerance: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            beta: 1.0,
            fisher_threshold: 1e-8,
            gauge: None,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub symmetry: SymmetryMode,
    pub coupling_gain: f64,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub fd_step: f64,
    pub substeps: usize,
    /// Allowed couplings; fully connected when absent.
    pub mask: Option<Vec<Vec<bool>>>,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            symmetry: f.symmetry,
            coupling_gain: f.coupling_gain,
            max_iterations: f.max_iterations,
            relative_tolerance: f.relative_tolerance,
            fd_step: f.fd_step,
            substeps: f.substeps,
            mask: None,
        }
    }
}

impl FitSection {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            symmetry: self.symmetry,
            coupling_gain: self.coupling_gain,
            max_iterations: self.max_iterations,
            relative_tolerance: self.relative_tolerance,
            fd_step: self.fd_step,
            substeps: self.substeps,
        }
    }

    pub fn topology(&self, n: usize) -> Result<NetworkTopology, CliError> {
        let mask = match &self.mask {
            Some(m) => m.clone(),
            None => (0..n).map(|i| (0..n).map(|j| i != j).collect()).collect(),
        };
        if mask.len() != n {
            return Err(CliError::usage(format!("fit.mask is {}×{} but the trace has {n} channels", mask.len(), mask.len())));
        }
        Ok(NetworkTopology::with_mask(mask, 1)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Write SVG plots next to the data files.
    pub svg: bool,
    /// Samples per channel shown in the fit overlay.
    pub overlay_samples: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            svg: true,
            overlay_samples: 2000,
        }
    }
}

impl ConfigDocument {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Core run settings; `only` restricts the schedule to one mode.
    pub fn run_config(&self, only: Option<SegmentMode>) -> Result<RunConfig, CliError> {
        let topology = self.topology.build()?;
        let patterns = self.patterns.build()?;
        let schedule = self.schedule.build(patterns.len(), only)?;
        let s = &self.simulation;
        let mut c = RunConfig::new(topology, patterns, schedule);
        c.symmetry = self.topology.symmetry;
        c.learning = self.learning;
        c.dt = s.dt;
        c.seed = s.seed;
        c.sample_every = s.sample_every;
        c.coupling_gain = s.coupling_gain;
        c.frequency_scale = s.frequency_scale;
        c.freq_dispersion = s.freq_dispersion;
        c.init_weight_range = (s.init_weight_range[0], s.init_weight_range[1]);
        c.plastic_recall = s.plastic_recall;
        c.validate()?;
        Ok(c)
    }
}
