use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mean_accuracy, rolling_mean};
use super::run::{run_recall, run_training, RunOutput, TraceRecord};
use super::{derive_seed, random_pattern_pair, random_recallable_pair, RunConfig, SegmentMode};
use crate::error::{config_err, Error, Result};
use crate::phase::CouplingMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternSource {
    /// Every run uses the base config's patterns.
    #[default]
    Fixed,
    /// A fresh admissible pair per run.
    RandomPair,
    /// A fresh pair per run whose input parts are distinguishable.
    RecallablePair,
}

/// Per-run copies of `base` with derived seeds and, optionally, fresh
/// pattern pairs.
pub fn batch_configs(base: &RunConfig, runs: usize, master_seed: u64, source: PatternSource) -> Result<Vec<RunConfig>> {
    if runs == 0 {
        return config_err("batch needs at least one run");
    }
    let n_vis = base.topology.n_visible();
    let n_in = base.topology.inputs().len();
    (0..runs as u64)
        .map(|i| {
            let mut c = base.clone();
            c.seed = derive_seed(master_seed, i);
            match source {
                PatternSource::Fixed => {}
                PatternSource::RandomPair => c.target_patterns = random_pattern_pair(c.seed, n_vis)?,
                PatternSource::RecallablePair => c.target_patterns = random_recallable_pair(c.seed, n_vis, n_in)?,
            }
            Ok(c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    /// Trailing window for rolling averages, in samples.
    pub rolling_window: usize,
    /// Run recall with these weights instead of training.
    pub weights: Option<CouplingMatrix>,
    /// Keep every run's full output in the result.
    pub keep_runs: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            workers: 0,
            rolling_window: 100,
            weights: None,
            keep_runs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub rolling: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub initial_mse: Option<f64>,
    pub final_mse: Option<f64>,
    /// Mean accuracy over samples outside the settle windows.
    pub steady_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub times: Vec<f64>,
    pub mse: Option<Series>,
    pub accuracy: Series,
    pub energy: Series,
    pub summaries: Vec<RunSummary>,
    pub runs: Vec<RunOutput>,
}

/// Samples counted as steady state: recall segments (or every segment when
/// the schedule has no recall) outside the post-switch settle window.
pub fn steady_mask(config: &RunConfig, trace: &[TraceRecord]) -> Vec<bool> {
    let starts = config.schedule.segment_starts();
    let recall_only = config.schedule.has_mode(SegmentMode::Recall);
    let eps = 1e-9;
    trace
        .iter()
        .map(|r| {
            let seg = &config.schedule.segments[r.segment];
            (!recall_only || seg.mode == SegmentMode::Recall)
                && r.time - starts[r.segment] >= config.schedule.settle_time - eps
        })
        .collect()
}

fn summarize(config: &RunConfig, out: &RunOutput) -> RunSummary {
    let mask = steady_mask(config, &out.trace);
    let (sum, count) = out
        .trace
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (r, _)| (s + mean_accuracy(&r.accuracy), c + 1));
    RunSummary {
        seed: config.seed,
        initial_mse: out.trace.first().and_then(|r| r.mse),
        final_mse: out.trace.last().and_then(|r| r.mse),
        steady_accuracy: if count > 0 { sum / count as f64 } else { f64::NAN },
    }
}

fn aggregate(columns: &[Vec<f64>], window: usize) -> Series {
    let len = columns[0].len();
    let runs = columns.len() as f64;
    let mut mean = vec![0.0; len];
    for c in columns {
        for (m, x) in mean.iter_mut().zip(c) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= runs);
    let mut var = vec![0.0; len];
    for c in columns {
        for ((v, x), m) in var.iter_mut().zip(c).zip(&mean) {
            *v += (x - m).powi(2);
        }
    }
    let std = var.iter().map(|v| (v / runs).sqrt()).collect();
    let rolling = rolling_mean(&mean, window);
    Series { mean, std, rolling }
}

/// Run every config independently and aggregate pointwise. Results are
/// identical for any worker count.
pub fn batch_run(configs: &[RunConfig], options: &BatchOptions) -> Result<BatchResult> {
    let Some(first) = configs.first() else {
        return config_err("batch needs at least one run");
    };
    if options.rolling_window == 0 {
        return config_err("rolling window must be positive");
    }
    for c in configs {
        if c.schedule != first.schedule || c.dt != first.dt || c.sample_every != first.sample_every {
            return config_err("all runs in a batch must share schedule, dt and sample_every");
        }
        if c.topology != first.topology {
            return config_err("all runs in a batch must share the topology");
        }
    }
    let run_one = |c: &RunConfig| -> Result<RunOutput> {
        match &options.weights {
            Some(k) => run_recall(c, k),
            None => run_training(c),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outputs: Vec<RunOutput> = pool.install(|| configs.par_iter().map(run_one).collect::<Result<Vec<_>>>())?;

    let times = outputs[0].trace.iter().map(|r| r.time).collect();
    let column = |f: &dyn Fn(&TraceRecord) -> f64| -> Vec<Vec<f64>> {
        outputs.iter().map(|o| o.trace.iter().map(f).collect()).collect()
    };
    let w = options.rolling_window;
    let mse = outputs[0].trace[0]
        .mse
        .is_some()
        .then(|| aggregate(&column(&|r| r.mse.unwrap_or(f64::NAN)), w));
    let accuracy = aggregate(&column(&|r| mean_accuracy(&r.accuracy)), w);
    let energy = aggregate(&column(&|r| r.energy), w);
    let summaries = configs.iter().zip(&outputs).map(|(c, o)| summarize(c, o)).collect();
    Ok(BatchResult {
        times,
        mse,
        accuracy,
        energy,
        summaries,
        runs: if options.keep_runs { outputs } else { Vec::new() },
    })
}
