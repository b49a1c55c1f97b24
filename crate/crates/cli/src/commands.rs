use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use phaselock_core::encoding::{binarize, bit_phase, Pattern};
use phaselock_core::hidden::{fisher_report, BipartiteEnergyModel, FisherReport};
use phaselock_core::phase::{CouplingMatrix, NaturalFrequencies, NetworkTopology, PhaseState};
use phaselock_core::protocol::{
    batch_configs, batch_run, mean_accuracy, run_recall, run_training, steady_mask, BatchOptions, BatchResult,
    RunConfig, RunOutput, RunSummary, SegmentMode, Series,
};
use phaselock_core::stability::{find_fixed_point_with, FixedPointReport, FixedPointSearch, Gauge};
use phaselock_core::sysid::{extract_phase, fit_kuramoto, VoltageTrace};

use crate::config::{ConfigDocument, FitSection};
use crate::output::{aggregate_csv, trace_csv, Outputs, WeightsFile, VERSION};
use crate::svg::{self, Band, Line, Panel, PALETTE};
use crate::CliError;

#[derive(Serialize)]
struct SegmentStats {
    index: usize,
    mode: SegmentMode,
    pattern: usize,
    start: f64,
    duration: f64,
    mean_accuracy: f64,
    min_accuracy: f64,
    /// Mean over samples past the settle window.
    steady_accuracy: Option<f64>,
    mean_energy: f64,
}

fn segment_stats(config: &RunConfig, out: &RunOutput) -> Vec<SegmentStats> {
    let starts = config.schedule.segment_starts();
    let mask = steady_mask(config, &out.trace);
    let settle = config.schedule.settle_time;
    config
        .schedule
        .segments
        .iter()
        .enumerate()
        .map(|(s, seg)| {
            let recs: Vec<_> = out.trace.iter().filter(|r| r.segment == s).collect();
            let acc: Vec<f64> = recs.iter().map(|r| mean_accuracy(&r.accuracy)).collect();
            let steady: Vec<f64> = out
                .trace
                .iter()
                .zip(&mask)
                .filter(|(r, &m)| r.segment == s && m && r.time - starts[s] >= settle - 1e-9)
                .map(|(r, _)| mean_accuracy(&r.accuracy))
                .collect();
            let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
            SegmentStats {
                index: s,
                mode: seg.mode,
                pattern: seg.pattern,
                start: starts[s],
                duration: seg.duration,
                mean_accuracy: mean(&acc),
                min_accuracy: acc.iter().copied().fold(f64::INFINITY, f64::min),
                steady_accuracy: (!steady.is_empty()).then(|| mean(&steady)),
                mean_energy: recs.iter().map(|r| r.energy).sum::<f64>() / recs.len() as f64,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct RunReport<'a> {
    version: &'static str,
    command: &'static str,
    config: &'a ConfigDocument,
    seed: u64,
    wall_time_s: f64,
    initial_mse: Option<f64>,
    final_mse: Option<f64>,
    /// Mean accuracy over steady samples of the recall segments (of all
    /// segments when there is no recall).
    steady_accuracy: Option<f64>,
    segments: Vec<SegmentStats>,
}

fn steady_accuracy(config: &RunConfig, out: &RunOutput) -> Option<f64> {
    let mask = steady_mask(config, &out.trace);
    let xs: Vec<f64> = out
        .trace
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(r, _)| mean_accuracy(&r.accuracy))
        .collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn load(config: &Path, seed: Option<u64>) -> Result<ConfigDocument, CliError> {
    let mut doc = ConfigDocument::load(config)?;
    if let Some(s) = seed {
        doc.simulation.seed = s;
    }
    Ok(doc)
}

fn run_files(command: &'static str, doc: &ConfigDocument, c: &RunConfig, out: &RunOutput, started: Instant) -> Result<Outputs, CliError> {
    let mut files = Outputs::default();
    files.add("trace.csv", trace_csv(&out.trace, &c.topology, c.symmetry));
    files.add_json("weights.json", &WeightsFile::new(&out.weights, &doc.topology, &c.target_patterns))?;
    files.add_json(
        "summary.json",
        &RunReport {
            version: VERSION,
            command,
            config: doc,
            seed: c.seed,
            wall_time_s: started.elapsed().as_secs_f64(),
            initial_mse: out.trace.first().and_then(|r| r.mse),
            final_mse: out.trace.last().and_then(|r| r.mse),
            steady_accuracy: steady_accuracy(c, out),
            segments: segment_stats(c, out),
        },
    )?;
    Ok(files)
}

pub fn train(config: &Path, out_dir: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let started = Instant::now();
    let doc = load(config, seed)?;
    let c = doc.run_config(None)?;
    let out = run_training(&c)?;
    run_files("train", &doc, &c, &out, started)?.commit(out_dir)
}

pub fn recall(config: &Path, weights: &Path, out_dir: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let started = Instant::now();
    let doc = load(config, seed)?;
    let c = doc.run_config(Some(SegmentMode::Recall))?;
    let w = WeightsFile::load(weights)?;
    let k = w.matrix()?;
    if w.network()? != c.topology {
        return Err(CliError::usage(format!(
            "weights in {} were saved for layers {:?}, the config describes {:?}",
            weights.display(),
            w.topology.layer_sizes,
            doc.topology.layer_sizes
        )));
    }
    let out = run_recall(&c, &k)?;
    run_files("recall", &doc, &c, &out, started)?.commit(out_dir)
}

#[derive(Serialize)]
struct BatchReport<'a> {
    version: &'static str,
    command: &'static str,
    config: &'a ConfigDocument,
    master_seed: u64,
    workers: usize,
    wall_time_s: f64,
    runs: &'a [RunSummary],
}

fn series_panel(title: &str, y_label: &str, times: &[f64], s: &Series, color: usize) -> Panel {
    let lo = s.mean.iter().zip(&s.std).map(|(m, d)| m - d).collect();
    let hi = s.mean.iter().zip(&s.std).map(|(m, d)| m + d).collect();
    Panel {
        title: title.into(),
        x_label: "time (s)".into(),
        y_label: y_label.into(),
        lines: vec![
            Line {
                label: "mean".into(),
                xs: times.to_vec(),
                ys: s.mean.clone(),
                color: PALETTE[color].into(),
                dashed: false,
            },
            Line {
                label: "rolling mean".into(),
                xs: times.to_vec(),
                ys: s.rolling.clone(),
                color: "#333333".into(),
                dashed: true,
            },
        ],
        bands: vec![Band {
            xs: times.to_vec(),
            lo,
            hi,
            color: PALETTE[color].into(),
        }],
    }
}

fn aggregate_svg(r: &BatchResult, runs: usize) -> String {
    let mut panels = Vec::new();
    if let Some(m) = &r.mse {
        panels.push(series_panel(&format!("weight MSE, mean ± σ over {runs} runs"), "MSE", &r.times, m, 0));
    }
    panels.push(series_panel(&format!("output accuracy, mean ± σ over {runs} runs"), "accuracy", &r.times, &r.accuracy, 2));
    panels.push(series_panel(&format!("energy, mean ± σ over {runs} runs"), "energy", &r.times, &r.energy, 1));
    svg::render(&panels)
}

pub fn batch(config: &Path, out_dir: &Path, seed: Option<u64>, workers: Option<usize>) -> Result<(), CliError> {
    let started = Instant::now();
    let doc = load(config, seed)?;
    let c = doc.run_config(None)?;
    let configs = batch_configs(&c, doc.batch.runs, c.seed, doc.batch.patterns)?;
    let workers = workers.unwrap_or(doc.batch.workers);
    let r = batch_run(
        &configs,
        &BatchOptions {
            workers,
            rolling_window: doc.batch.rolling_window,
            ..Default::default()
        },
    )?;
    let mut files = Outputs::default();
    files.add("aggregate.csv", aggregate_csv(&r));
    if doc.output.svg {
        files.add("aggregate.svg", aggregate_svg(&r, configs.len()));
    }
    files.add_json(
        "summary.json",
        &BatchReport {
            version: VERSION,
            command: "batch",
            config: &doc,
            master_seed: c.seed,
            workers,
            wall_time_s: started.elapsed().as_secs_f64(),
            runs: &r.summaries,
        },
    )?;
    files.commit(out_dir)
}

#[derive(Serialize)]
struct FixedPointEntry {
    pattern: Vec<i8>,
    /// Pattern read back from the fixed point relative to oscillator 0.
    recovered: Vec<i8>,
    matches_pattern: bool,
    report: FixedPointReport,
}

#[derive(Serialize)]
struct StabilityReport {
    version: &'static str,
    gauge: Gauge,
    tolerance: f64,
    fixed_points: Vec<FixedPointEntry>,
}

/// Full network state for a visible pattern; hidden units start aligned with
/// their local field.
fn initial_state(p: &Pattern, k: &CouplingMatrix, topo: &NetworkTopology) -> PhaseState {
    let n = topo.n();
    let visible = topo.visible();
    let mut spins = vec![0.0; n];
    for (b, &i) in p.bits().iter().zip(&visible) {
        spins[i] = *b as f64;
    }
    for h in topo.hidden() {
        let field: f64 = visible.iter().map(|&i| k.get(h, i) * spins[i]).sum();
        spins[h] = if field >= 0.0 { 1.0 } else { -1.0 };
    }
    PhaseState(spins.iter().map(|&s| bit_phase(s as i8)).collect())
}

fn analysis_inputs(weights: &Path, config: Option<&Path>) -> Result<(ConfigDocument, WeightsFile, CouplingMatrix, NetworkTopology), CliError> {
    let w = WeightsFile::load(weights)?;
    let doc = ConfigDocument::load_or_default(config)?;
    let k = w.matrix()?;
    let topo = w.network()?;
    Ok((doc, w, k, topo))
}

pub fn analyze_stability(weights: &Path, config: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let (doc, w, k, topo) = analysis_inputs(weights, config)?;
    let patterns = match config {
        Some(_) => doc.patterns.build()?.patterns().to_vec(),
        None => w.pattern_set()?,
    };
    if let Some(p) = patterns.iter().find(|p| p.len() != topo.n_visible()) {
        return Err(CliError::usage(format!("pattern of length {} does not fit {} visible oscillators", p.len(), topo.n_visible())));
    }
    let gauge = doc.analysis.gauge.clone().unwrap_or(Gauge::Pinned {
        indices: topo.inputs().collect(),
    });
    let search = FixedPointSearch {
        gauge: gauge.clone(),
        tol: doc.analysis.tolerance,
        ..Default::default()
    };
    let freqs = NaturalFrequencies::homogeneous(topo.n());
    let visible = topo.visible();
    let mut fixed_points = Vec::new();
    for p in &patterns {
        let report = find_fixed_point_with(&initial_state(p, &k, &topo), &k, &freqs, &search)?;
        let full = binarize(&report.phi_star, 0);
        let recovered: Vec<i8> = visible.iter().map(|&i| full.bits()[i]).collect();
        let expected: Vec<i8> = p.bits().iter().map(|b| b * p.bits()[0]).collect();
        fixed_points.push(FixedPointEntry {
            pattern: p.bits().to_vec(),
            matches_pattern: recovered == expected,
            recovered,
            report,
        });
    }
    let mut files = Outputs::default();
    files.add_json(
        "stability.json",
        &StabilityReport {
            version: VERSION,
            gauge,
            tolerance: doc.analysis.tolerance,
            fixed_points,
        },
    )?;
    files.commit(out_dir)
}

#[derive(Serialize)]
struct FisherFile {
    version: &'static str,
    #[serde(flatten)]
    report: FisherReport,
}

pub fn analyze_fisher(weights: &Path, config: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let (doc, _, k, topo) = analysis_inputs(weights, config)?;
    let model = BipartiteEnergyModel::from_coupling(&k, &topo, doc.analysis.beta)?;
    let report = fisher_report(&model, doc.analysis.fisher_threshold);
    let mut files = Outputs::default();
    files.add_json("fisher.json", &FisherFile { version: VERSION, report })?;
    files.commit(out_dir)
}

#[derive(Serialize)]
struct FitFile<'a> {
    version: &'static str,
    fit: &'a FitSection,
    sample_rate: f64,
    /// Samples dropped at each end of the recording before fitting.
    edge_samples: usize,
    k_hat: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
    /// Zero-mean frequency offsets, rad/s.
    delta_omega_hat: Vec<f64>,
    final_loss: f64,
    iterations: usize,
    converged: bool,
    loss_history: Vec<f64>,
    /// Final phase differences to channel 0, wrapped to (−π, π].
    observed_locking: Vec<f64>,
    predicted_locking: Vec<f64>,
}

pub fn fit(trace: &Path, config: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let doc = ConfigDocument::load_or_default(config)?;
    let file = std::fs::File::open(trace).map_err(|e| CliError::usage(format!("cannot read trace {}: {e}", trace.display())))?;
    let voltages = VoltageTrace::from_csv(std::io::BufReader::new(file))?;
    let n = voltages.n_channels();
    let topo = doc.fit.topology(n)?;
    let ex = extract_phase(&voltages)?;
    let obs = ex.interior();
    let fit = fit_kuramoto(&obs, ex.dt, &topo, &doc.fit.fit_config())?;

    let len = obs[0].len();
    let initial: Vec<f64> = obs.iter().map(|c| c[0]).collect();
    let mut pred = fit.predict(&initial, ex.dt, len, doc.fit.substeps);
    // the model cannot see the common rotation; borrow it from the data
    for t in 0..len {
        let shift = (0..n).map(|c| obs[c][t] - pred[c][t]).sum::<f64>() / n as f64;
        for p in pred.iter_mut() {
            p[t] += shift;
        }
    }
    let locking = |s: &[Vec<f64>]| -> Vec<f64> { (1..n).map(|c| phaselock_core::phase::wrap_phase(s[c][len - 1] - s[0][len - 1])).collect() };

    let shown = len.min(doc.output.overlay_samples.max(2));
    let times: Vec<f64> = (0..shown).map(|i| (ex.edge + i) as f64 * ex.dt).collect();
    let panels: Vec<Panel> = (0..n)
        .map(|c| Panel {
            title: format!("channel {c}"),
            x_label: "time (s)".into(),
            y_label: "cos φ".into(),
            lines: vec![
                Line {
                    label: "observed".into(),
                    xs: times.clone(),
                    ys: obs[c][..shown].iter().map(|p| p.cos()).collect(),
                    color: PALETTE[0].into(),
                    dashed: false,
                },
                Line {
                    label: "fitted".into(),
                    xs: times.clone(),
                    ys: pred[c][..shown].iter().map(|p| p.cos()).collect(),
                    color: PALETTE[1].into(),
                    dashed: true,
                },
            ],
            bands: vec![],
        })
        .collect();

    let mut files = Outputs::default();
    files.add_json(
        "fit.json",
        &FitFile {
            version: VERSION,
            fit: &doc.fit,
            sample_rate: voltages.sample_rate(),
            edge_samples: ex.edge,
            k_hat: fit.k_hat.rows(),
            mask: fit.k_hat.mask_rows(),
            delta_omega_hat: fit.delta_omega_hat.0.clone(),
            final_loss: fit.final_loss,
            iterations: fit.iterations,
            converged: fit.converged,
            loss_history: fit.loss_history.clone(),
            observed_locking: locking(&obs),
            predicted_locking: locking(&pred),
        },
    )?;
    if doc.output.svg {
        files.add("overlay.svg", svg::render(&panels));
    }
    files.commit(out_dir)
}
