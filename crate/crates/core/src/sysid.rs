//! Phase extraction from voltage recordings and Kuramoto parameter fits.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::phase::{
    step_in_place, CouplingMatrix, Integrator, NaturalFrequencies, NetworkTopology, StepScratch, SymmetryMode,
};

/// Fewest samples per oscillation period accepted by [`extract_phase`].
pub const MIN_SAMPLES_PER_PERIOD: f64 = 16.0;
/// Fraction of samples at each end of an extracted series treated as
/// unreliable.
pub const EDGE_FRACTION: f64 = 0.05;

/// Multichannel voltage samples on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageTrace {
    sample_rate: f64,
    channels: Vec<Vec<f64>>,
}

impl VoltageTrace {
    pub fn new(sample_rate: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return config_err(format!("sample rate must be positive, got {sample_rate}"));
        }
        let Some(first) = channels.first() else {
            return config_err("voltage trace has no channels");
        };
        let len = first.len();
        if channels.iter().any(|c| c.len() != len) {
            return config_err("voltage channels differ in length");
        }
        if len < 2 * MIN_SAMPLES_PER_PERIOD as usize {
            return config_err(format!("voltage trace has only {len} samples"));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return config_err("voltage trace contains non-finite samples");
        }
        Ok(Self { sample_rate, channels })
    }

    /// Parse `t,ch0,ch1,...` CSV. The sample rate comes from the time column,
    /// which must be uniformly spaced.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Config(format!("voltage csv: {e}")))?.clone();
        if header.get(0) != Some("t") || header.len() < 2 {
            return config_err("voltage csv header must be `t,ch0,ch1,...`");
        }
        let n_ch = header.len() - 1;
        let mut times = Vec::new();
        let mut channels = vec![Vec::new(); n_ch];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Config(format!("voltage csv: {e}")))?;
            let line = row + 2;
            let parse = |i: usize| -> Result<f64> {
                let field = rec.get(i).unwrap_or("");
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("voltage csv line {line}, column {}: bad number `{field}`", i + 1)))
            };
            times.push(parse(0)?);
            for (c, ch) in channels.iter_mut().enumerate() {
                ch.push(parse(c + 1)?);
            }
        }
        if times.len() < 2 {
            return config_err("voltage csv needs at least two samples");
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(dt > 0.0) {
            return config_err("voltage csv time column must increase");
        }
        if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1e-9) + 1e-12) {
            return config_err("voltage csv time column is not uniformly spaced");
        }
        Self::new(1.0 / dt, channels)
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.channels[0].len()
    }
}

/// Unwrapped instantaneous phases, one series per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedPhases {
    pub phases: Vec<Vec<f64>>,
    pub dt: f64,
    /// Samples at each end that are edge-unreliable.
    pub edge: usize,
}

impl ExtractedPhases {
    pub fn is_reliable(&self, sample: usize) -> bool {
        let len = self.phases[0].len();
        sample >= self.edge && sample + self.edge < len
    }

    /// The reliable interior of every channel.
    pub fn interior(&self) -> Vec<Vec<f64>> {
        let len = self.phases[0].len();
        self.phases.iter().map(|p| p[self.edge..len - self.edge].to_vec()).collect()
    }
}

/// Instantaneous phase of each channel from its analytic signal.
pub fn extract_phase(trace: &VoltageTrace) -> Result<ExtractedPhases> {
    let n = trace.n_samples();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut phases = Vec::with_capacity(trace.n_channels());
    let taper = tukey(n, 2.0 * EDGE_FRACTION);
    let taper_sum: f64 = taper.iter().sum();
    for (c, raw) in trace.channels.iter().enumerate() {
        let plain_mean = raw.iter().sum::<f64>() / n as f64;
        let scale = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if raw.iter().all(|v| (v - plain_mean).abs() <= 1e-12 * (1.0 + scale)) {
            return Err(Error::DegenerateSignal {
                channel: c,
                reason: "channel is constant".into(),
            });
        }
        // a plain mean is biased by the fractional last cycle; the tapered
        // one is not
        let mean = raw.iter().zip(&taper).map(|(v, w)| v * w).sum::<f64>() / taper_sum;
        let mut buf: Vec<Complex<f64>> = raw.iter().zip(&taper).map(|(v, w)| Complex::new((v - mean) * w, 0.0)).collect();
        forward.process(&mut buf);

        let half = n / 2;
        let peak = (1..=half)
            .max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))
            .unwrap_or(1);
        let samples_per_period = n as f64 / peak as f64;
        if samples_per_period < MIN_SAMPLES_PER_PERIOD {
            return Err(Error::DegenerateSignal {
                channel: c,
                reason: format!("{samples_per_period:.1} samples per period, need {MIN_SAMPLES_PER_PERIOD}"),
            });
        }

        // keep DC and Nyquist, double positive, zero negative frequencies
        for (i, z) in buf.iter_mut().enumerate() {
            let w = if i == 0 || (n % 2 == 0 && i == half) {
                1.0
            } else if i <= (n - 1) / 2 {
                2.0
            } else {
                0.0
            };
            *z *= w / n as f64;
        }
        inverse.process(&mut buf);
        phases.push(unwrap(buf.iter().map(|z| z.arg())));
    }
    Ok(ExtractedPhases {
        phases,
        dt: 1.0 / trace.sample_rate,
        edge: (EDGE_FRACTION * n as f64).ceil() as usize,
    })
}

/// Tukey window whose cosine ramps cover `fraction` of the samples in total.
/// Tapering inside the edge regions keeps the periodic wrap-around of the
/// FFT from leaking into the interior phases.
fn tukey(n: usize, fraction: f64) -> Vec<f64> {
    let ramp = (fraction * (n - 1) as f64 / 2.0).max(1.0);
    (0..n)
        .map(|i| {
            let d = (i.min(n - 1 - i)) as f64 + 1.0;
            if d >= ramp {
                1.0
            } else {
                0.5 * (1.0 - (std::f64::consts::PI * d / ramp).cos())
            }
        })
        .collect()
}

/// Unwrap so successive differences lie in `(−π, π]`.
pub fn unwrap(wrapped: impl IntoIterator<Item = f64>) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    let mut out: Vec<f64> = Vec::new();
    for a in wrapped {
        let next = match out.last() {
            None => a,
            Some(&prev) => {
                let mut d = (a - prev).rem_euclid(TAU);
                if d > PI {
                    d -= TAU;
                }
                prev + d
            }
        };
        out.push(next);
    }
    out
}

/// Settings for [`fit_kuramoto`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub symmetry: SymmetryMode,
    /// Coupling gain of the fitted model; fitted entries are in rad/s per
    /// unit of this gain.
    pub coupling_gain: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step improves the loss by less than this
    /// fraction.
    pub relative_tolerance: f64,
    /// Finite-difference step, relative to the parameter magnitude.
    pub fd_step: f64,
    /// Integrator steps per observation interval.
    pub substeps: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            symmetry: SymmetryMode::Symmetric,
            coupling_gain: 1.0,
            max_iterations: 5000,
            relative_tolerance: 1e-8,
            fd_step: 1e-4,
            substeps: 1,
        }
    }
}

/// Fitted model. Frequencies are reported with zero mean since phase
/// differences cannot see a common offset.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub k_hat: CouplingMatrix,
    pub delta_omega_hat: NaturalFrequencies,
    pub final_loss: f64,
    pub iterations: usize,
    /// Loss after every accepted step, starting from the initial guess.
    pub loss_history: Vec<f64>,
    pub coupling_gain: f64,
    pub converged: bool,
}

impl FitResult {
    /// Simulate the fitted model from `initial`, returning `samples` values
    /// per channel spaced `dt` apart.
    pub fn predict(&self, initial: &[f64], dt: f64, samples: usize, substeps: usize) -> Vec<Vec<f64>> {
        simulate(initial, &self.k_hat, &self.delta_omega_hat.0, self.coupling_gain, dt, samples, substeps)
    }
}

fn simulate(initial: &[f64], k: &CouplingMatrix, freqs: &[f64], gain: f64, dt: f64, samples: usize, substeps: usize) -> Vec<Vec<f64>> {
    let n = initial.len();
    let h = dt / substeps as f64;
    let mut out = vec![Vec::with_capacity(samples); n];
    let mut phases = initial.to_vec();
    let mut scratch = StepScratch::new(n);
    for s in 0..samples {
        if s > 0 {
            for _ in 0..substeps {
                step_in_place(&mut phases, k, freqs, gain, h, Integrator::Rk4, &mut scratch);
            }
        }
        for (o, p) in out.iter_mut().zip(&phases) {
            o.push(*p);
        }
    }
    out
}

#[derive(Clone)]
struct Model<'a> {
    observed: &'a [Vec<f64>],
    /// Samples of each series entering the loss.
    horizon: usize,
    template: CouplingMatrix,
    pairs: Vec<(usize, usize)>,
    config: &'a FitConfig,
    dt: f64,
}

impl Model<'_> {
    fn n(&self) -> usize {
        self.observed.len()
    }

    /// Parameters are the stored couplings followed by `Δω_1..Δω_{n-1}`;
    /// `Δω_0` is minus their sum.
    fn unpack(&self, theta: &[f64]) -> (CouplingMatrix, Vec<f64>) {
        let mut k = self.template.clone();
        for (&(i, j), &v) in self.pairs.iter().zip(theta) {
            k.set(i, j, v);
        }
        let rest = &theta[self.pairs.len()..];
        let mut w = Vec::with_capacity(self.n());
        w.push(-rest.iter().sum::<f64>());
        w.extend_from_slice(rest);
        (k, w)
    }

    fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        let (k, w) = self.unpack(theta);
        let len = self.horizon;
        let initial: Vec<f64> = self.observed.iter().map(|c| c[0]).collect();
        let sim = simulate(&initial, &k, &w, self.config.coupling_gain, self.dt, len, self.config.substeps);
        let mut r = Vec::with_capacity((self.n() - 1) * (len - 1));
        for i in 1..self.n() {
            for t in 1..len {
                let model = sim[i][t] - sim[0][t];
                let data = self.observed[i][t] - self.observed[0][t];
                r.push(model - data);
            }
        }
        r
    }
}

fn mean_square(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64
}

/// Shortest horizon of a continuation, in samples.
const MIN_HORIZON: usize = 50;
/// Horizons grow by this factor per stage.
const HORIZON_GROWTH: usize = 2;
/// Stages before the full horizon, one entry per continuation. Many short
/// stages escape cycle-slip minima; few long ones resist fitting noise.
const SCHEDULES: [usize; 2] = [4, 2];

/// Fit couplings and frequency offsets to observed unwrapped phases by
/// minimising the mean squared error of the phase differences to channel 0.
/// The simulated trajectory starts from the first observed sample.
///
/// The loss over a long horizon has spurious minima where the model slips a
/// cycle. Levenberg–Marquardt therefore runs on a sequence of growing
/// prefixes of the data, each warm-starting the next, and finishes on the
/// full series. Two such continuations run independently and the one with
/// the lower full-horizon loss is returned; `iterations` counts its stages.
pub fn fit_kuramoto(observed: &[Vec<f64>], dt: f64, topology: &NetworkTopology, config: &FitConfig) -> Result<FitResult> {
    let n = observed.len();
    if n < 2 {
        return config_err("fit needs at least two channels");
    }
    let len = observed[0].len();
    if observed.iter().any(|c| c.len() != len) {
        return config_err("observed series differ in length");
    }
    if len < 3 {
        return config_err("fit needs at least three samples per channel");
    }
    if topology.n() != n {
        return config_err(format!("topology has {} oscillators but {n} channels were given", topology.n()));
    }
    if !(dt > 0.0) || config.substeps == 0 || !(config.fd_step > 0.0) || !(config.coupling_gain > 0.0) {
        return config_err("dt, substeps, fd_step and coupling_gain must be positive");
    }
    if observed.iter().flatten().any(|v| !v.is_finite()) {
        return config_err("observed phases contain non-finite values");
    }

    let template = CouplingMatrix::zeros(topology, config.symmetry);
    let pairs = template.stored_pairs();
    let model = Model {
        observed,
        horizon: len,
        template,
        pairs,
        config,
        dt,
    };

    let span = (len - 1) as f64 * dt;
    let velocity: Vec<f64> = observed.iter().map(|c| (c[len - 1] - c[0]) / span).collect();
    let mean_v = velocity.iter().sum::<f64>() / n as f64;
    let mut start = vec![0.0; model.pairs.len()];
    start.extend(velocity[1..].iter().map(|v| v - mean_v));

    let runs: Vec<Result<(Stage, usize)>> = SCHEDULES
        .par_iter()
        .map(|&stages| continuation(model.clone(), &start, stages))
        .collect();
    let mut best: Option<(Stage, usize)> = None;
    let mut failure = None;
    for r in runs {
        match r {
            Ok(r) if best.as_ref().is_none_or(|b| r.0.loss < b.0.loss) => best = Some(r),
            Ok(_) => {}
            Err(e) => failure = failure.or(Some(e)),
        }
    }
    let Some((s, iterations)) = best else {
        return Err(failure.expect("every schedule failed"));
    };
    let (k_hat, w) = model.unpack(&s.theta);
    Ok(FitResult {
        k_hat,
        delta_omega_hat: NaturalFrequencies(w),
        final_loss: s.loss,
        iterations,
        loss_history: s.history,
        coupling_gain: config.coupling_gain,
        converged: s.converged,
    })
}

/// Growing horizons `len / 2^stages, …, len / 2, len`, each stage
/// warm-started from the previous one.
fn continuation(mut model: Model, start: &[f64], stages: usize) -> Result<(Stage, usize)> {
    let len = model.observed[0].len();
    let mut horizons = vec![len];
    while horizons.len() <= stages {
        let h = horizons[horizons.len() - 1] / HORIZON_GROWTH;
        if h < MIN_HORIZON {
            break;
        }
        horizons.push(h);
    }
    horizons.reverse();

    let budget = model.config.max_iterations;
    let mut iterations = 0;
    let mut theta = start.to_vec();
    let mut stage = None;
    for &h in &horizons {
        model.horizon = h;
        // a short horizon can overfit a weakly identified direction; fall
        // back to the data-driven start when it explains this horizon better
        if theta != start && mean_square(&model.residuals(start)) < mean_square(&model.residuals(&theta)) {
            theta = start.to_vec();
        }
        let s = levenberg_marquardt(&model, theta, budget.saturating_sub(iterations), iterations)?;
        iterations += s.iterations;
        theta = s.theta.clone();
        stage = Some(s);
    }
    Ok((stage.expect("at least one stage"), iterations))
}

struct Stage {
    theta: Vec<f64>,
    loss: f64,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(model: &Model, mut theta: Vec<f64>, max_iterations: usize, offset: usize) -> Result<Stage> {
    let config = model.config;
    let p = theta.len();
    let mut r = model.residuals(&theta);
    let mut loss = mean_square(&r);
    if !loss.is_finite() {
        return Err(Error::FitDivergence {
            iteration: offset,
            last_params: theta,
        });
    }
    let mut history = vec![loss];
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut normal = normal_equations(model, &theta, &r).map_err(|_| Error::FitDivergence {
        iteration: offset,
        last_params: theta.clone(),
    })?;

    while iterations < max_iterations && loss > 0.0 {
        iterations += 1;
        let (jtj, jtr) = &normal;
        let mut a = jtj.clone();
        let floor = jtj.diagonal().max() * 1e-12 + f64::MIN_POSITIVE;
        for d in 0..p {
            a[(d, d)] += mu * jtj[(d, d)].max(floor);
        }
        let step = match a.clone().cholesky() {
            Some(ch) => ch.solve(&(-jtr)),
            None => match a.lu().solve(&(-jtr)) {
                Some(s) => s,
                None => {
                    mu *= 10.0;
                    continue;
                }
            },
        };
        let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
        let trial_r = model.residuals(&trial);
        let trial_loss = mean_square(&trial_r);
        if trial_loss.is_finite() && trial_loss < loss {
            let improvement = (loss - trial_loss) / loss;
            theta = trial;
            r = trial_r;
            loss = trial_loss;
            history.push(loss);
            mu = (mu / 3.0).max(1e-15);
            if improvement < config.relative_tolerance {
                converged = true;
                break;
            }
            normal = normal_equations(model, &theta, &r).map_err(|_| Error::FitDivergence {
                iteration: offset + iterations,
                last_params: theta.clone(),
            })?;
        } else {
            mu *= 4.0;
            if mu > 1e20 {
                // no descent direction left at machine precision
                converged = true;
                break;
            }
        }
    }
    Ok(Stage {
        theta,
        loss,
        history,
        iterations,
        converged: converged || loss == 0.0,
    })
}

/// `JᵀJ` and `Jᵀr` with a central-difference Jacobian.
fn normal_equations(model: &Model, theta: &[f64], r: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = theta.len();
    let m = r.len();
    let mut jac = DMatrix::zeros(m, p);
    let mut probe = theta.to_vec();
    for c in 0..p {
        let h = model.config.fd_step * theta[c].abs().max(1.0);
        probe[c] = theta[c] + h;
        let up = model.residuals(&probe);
        probe[c] = theta[c] - h;
        let down = model.residuals(&probe);
        probe[c] = theta[c];
        for row in 0..m {
            jac[(row, c)] = (up[row] - down[row]) / (2.0 * h);
        }
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Jacobian".into()));
    }
    let rv = DVector::from_column_slice(r);
    Ok((jac.tr_mul(&jac), jac.tr_mul(&rv)))
}
