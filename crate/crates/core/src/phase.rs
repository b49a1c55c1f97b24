//! Network state and Kuramoto phase dynamics.
//!
//! Phases live in a frame rotating at the common carrier frequency, so a
//! homogeneous network at rest has zero velocity. Phases are kept unwrapped
//! during integration; [`PhaseState::reduced`] maps them to `[-π, π)` for
//! display and encoding.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Wrap an angle to `[-π, π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can return exactly 2π for tiny negative inputs
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Layered or flat network layout plus the coupling mask.
///
/// Oscillators are numbered layer by layer. The first `n_inputs` oscillators
/// are inputs, the last `n_outputs` are outputs, anything in between is hidden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    layer_sizes: Vec<usize>,
    n_inputs: usize,
    n_outputs: usize,
    mask: Vec<bool>,
}

impl NetworkTopology {
    /// Fully connected network of `n` oscillators, the first `n_inputs` of
    /// which are inputs and the rest outputs.
    pub fn flat(n: usize, n_inputs: usize) -> Result<Self> {
        if n < 2 {
            return config_err("a flat network needs at least two oscillators");
        }
        if n_inputs == 0 || n_inputs >= n {
            return config_err(format!(
                "flat network of {n} oscillators needs 1..{} inputs, got {n_inputs}",
                n - 1
            ));
        }
        let mut mask = vec![true; n * n];
        for i in 0..n {
            mask[i * n + i] = false;
        }
        Ok(Self {
            layer_sizes: vec![n],
            n_inputs,
            n_outputs: n - n_inputs,
            mask,
        })
    }

    /// Layered network with bipartite coupling between adjacent layers only.
    pub fn layered(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return config_err("a layered network needs at least two layers");
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return config_err("layer sizes must be positive");
        }
        let n: usize = layer_sizes.iter().sum();
        let mut offsets = Vec::with_capacity(layer_sizes.len() + 1);
        let mut acc = 0;
        for &s in layer_sizes {
            offsets.push(acc);
            acc += s;
        }
        offsets.push(acc);
        let mut mask = vec![false; n * n];
        for l in 0..layer_sizes.len() - 1 {
            for i in offsets[l]..offsets[l + 1] {
                for j in offsets[l + 1]..offsets[l + 2] {
                    mask[i * n + j] = true;
                    mask[j * n + i] = true;
                }
            }
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            n_inputs: layer_sizes[0],
            n_outputs: *layer_sizes.last().unwrap(),
            mask,
        })
    }

    /// Build from a layer description: a single layer means a flat network
    /// with `n_inputs` inputs, several layers mean a layered network.
    pub fn from_layers(layer_sizes: &[usize], n_inputs: Option<usize>) -> Result<Self> {
        match layer_sizes {
            [] => config_err("layer_sizes must not be empty"),
            [n] => Self::flat(*n, n_inputs.unwrap_or(n / 2)),
            _ => {
                if let Some(ni) = n_inputs {
                    if ni != layer_sizes[0] {
                        return config_err(format!(
                            "n_inputs = {ni} disagrees with first layer size {}",
                            layer_sizes[0]
                        ));
                    }
                }
                Self::layered(layer_sizes)
            }
        }
    }

    /// Topology with an explicit symmetric mask and no designated layers.
    pub fn with_mask(mask: Vec<Vec<bool>>, n_inputs: usize) -> Result<Self> {
        let n = mask.len();
        if n < 2 || mask.iter().any(|row| row.len() != n) {
            return config_err("mask must be a square matrix of size ≥ 2");
        }
        for i in 0..n {
            if mask[i][i] {
                return config_err("mask diagonal must be false");
            }
            for j in 0..n {
                if mask[i][j] != mask[j][i] {
                    return config_err(format!("mask is not symmetric at ({i}, {j})"));
                }
            }
        }
        if n_inputs == 0 || n_inputs >= n {
            return config_err("n_inputs must be in 1..n");
        }
        Ok(Self {
            layer_sizes: vec![n],
            n_inputs,
            n_outputs: n - n_inputs,
            mask: mask.into_iter().flatten().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.layer_sizes.iter().sum()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn is_layered(&self) -> bool {
        self.layer_sizes.len() > 1
    }

    pub fn inputs(&self) -> Range<usize> {
        0..self.n_inputs
    }

    pub fn outputs(&self) -> Range<usize> {
        let n = self.n();
        n - self.n_outputs..n
    }

    pub fn hidden(&self) -> Range<usize> {
        self.n_inputs..self.n() - self.n_outputs
    }

    /// Visible oscillators (inputs followed by outputs), in pattern order.
    pub fn visible(&self) -> Vec<usize> {
        self.inputs().chain(self.outputs()).collect()
    }

    pub fn n_visible(&self) -> usize {
        self.n_inputs + self.n_outputs
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n() + j]
    }

    pub fn mask_rows(&self) -> Vec<Vec<bool>> {
        let n = self.n();
        self.mask.chunks(n).map(|r| r.to_vec()).collect()
    }

    /// Masked pairs with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.allows(i, j))
            .collect()
    }
}

/// Oscillator phases in radians (rotating frame, unwrapped).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseState(pub Vec<f64>);

impl PhaseState {
    pub fn new(phases: Vec<f64>) -> Self {
        Self(phases)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Canonical representative with every phase in `[-π, π)`.
    pub fn reduced(&self) -> Self {
        Self(self.0.iter().map(|&p| wrap_phase(p)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|p| p.is_finite())
    }
}

/// Per-oscillator deviation from the rotating-frame frequency, rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NaturalFrequencies(pub Vec<f64>);

impl NaturalFrequencies {
    pub fn new(delta_omega: Vec<f64>) -> Self {
        Self(delta_omega)
    }

    pub fn homogeneous(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryMode {
    #[default]
    Symmetric,
    DirectedPair,
}

/// Coupling matrix `K` together with the mask of allowed synapses.
///
/// The diagonal is always zero and masked-out entries are always zero. In
/// [`SymmetryMode::Symmetric`] every write keeps `k[i][j] == k[j][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    k: DMatrix<f64>,
    mask: DMatrix<bool>,
    mode: SymmetryMode,
}

impl CouplingMatrix {
    /// All-zero couplings over the topology mask.
    pub fn zeros(topology: &NetworkTopology, mode: SymmetryMode) -> Self {
        let n = topology.n();
        Self {
            k: DMatrix::zeros(n, n),
            mask: DMatrix::from_fn(n, n, |i, j| topology.allows(i, j)),
            mode,
        }
    }

    /// Fully connected zero matrix of size `n`.
    pub fn zeros_full(n: usize, mode: SymmetryMode) -> Self {
        Self {
            k: DMatrix::zeros(n, n),
            mask: DMatrix::from_fn(n, n, |i, j| i != j),
            mode,
        }
    }

    /// Build from explicit rows. Off-diagonal entries are all unmasked; the
    /// diagonal must be zero and, in symmetric mode, the rows symmetric.
    pub fn from_rows(rows: &[Vec<f64>], mode: SymmetryMode) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return config_err("coupling matrix must be square and non-empty");
        }
        let mask = DMatrix::from_fn(n, n, |i, j| i != j);
        Self::from_rows_masked(rows, mask, mode)
    }

    /// Build from rows plus an explicit mask, rejecting invariant violations.
    pub fn from_rows_with_mask(
        rows: &[Vec<f64>],
        mask: &[Vec<bool>],
        mode: SymmetryMode,
    ) -> Result<Self> {
        let n = rows.len();
        if mask.len() != n || mask.iter().any(|r| r.len() != n) {
            return config_err("mask shape does not match coupling rows");
        }
        let m = DMatrix::from_fn(n, n, |i, j| mask[i][j]);
        Self::from_rows_masked(rows, m, mode)
    }

    fn from_rows_masked(rows: &[Vec<f64>], mask: DMatrix<bool>, mode: SymmetryMode) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return config_err("coupling matrix must be square");
        }
        let k = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        for i in 0..n {
            for j in 0..n {
                let v = k[(i, j)];
                if !v.is_finite() {
                    return config_err(format!("non-finite coupling at ({i}, {j})"));
                }
                if i == j && v != 0.0 {
                    return config_err(format!("diagonal entry ({i}, {i}) must be zero"));
                }
                if !mask[(i, j)] && v != 0.0 {
                    return config_err(format!("coupling ({i}, {j}) is outside the mask"));
                }
                if mode == SymmetryMode::Symmetric && v != k[(j, i)] {
                    return config_err(format!("coupling not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(Self { k, mask, mode })
    }

    /// Restrict to a topology's mask, zeroing everything outside it.
    pub fn masked(mut self, topology: &NetworkTopology) -> Self {
        let n = self.n();
        assert_eq!(n, topology.n(), "topology size mismatch");
        for i in 0..n {
            for j in 0..n {
                let allowed = topology.allows(i, j);
                self.mask[(i, j)] = allowed;
                if !allowed {
                    self.k[(i, j)] = 0.0;
                }
            }
        }
        self
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn mode(&self) -> SymmetryMode {
        self.mode
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.k[(i, j)]
    }

    #[inline]
    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)]
    }

    /// Symmetrised coupling seen by the pair energy.
    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        match self.mode {
            SymmetryMode::Symmetric => self.k[(i, j)],
            SymmetryMode::DirectedPair => 0.5 * (self.k[(i, j)] + self.k[(j, i)]),
        }
    }

    /// Set an entry (and its partner in symmetric mode). Writes outside the
    /// mask are ignored.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        if !self.mask[(i, j)] {
            return;
        }
        self.k[(i, j)] = value;
        if self.mode == SymmetryMode::Symmetric {
            self.k[(j, i)] = value;
        }
    }

    /// Clip every entry to `[-1, 1]`.
    pub fn clip(&mut self) {
        self.k.apply(|v| *v = v.clamp(-1.0, 1.0));
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.k
    }

    pub fn mask_rows(&self) -> Vec<Vec<bool>> {
        let n = self.n();
        (0..n).map(|i| (0..n).map(|j| self.mask[(i, j)]).collect()).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        (0..n).map(|i| (0..n).map(|j| self.k[(i, j)]).collect()).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.k == self.k.transpose()
    }

    /// Index pairs stored for this mode: `i < j` when symmetric, every
    /// ordered masked pair otherwise. This is the flattening order used in
    /// traces (row-major).
    pub fn stored_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if !self.mask[(i, j)] {
                    continue;
                }
                if self.mode == SymmetryMode::Symmetric && j < i {
                    continue;
                }
                out.push((i, j));
            }
        }
        out
    }

    pub fn stored_values(&self) -> Vec<f64> {
        self.stored_pairs().into_iter().map(|(i, j)| self.k[(i, j)]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.k.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.k.iter().all(|v| v.is_finite())
    }
}

/// Phase velocity `dφ_i/dt = Δω_i − Σ_j k[i][j]·sin(φ_i − φ_j)`.
pub fn kuramoto_rhs(
    state: &PhaseState,
    k: &CouplingMatrix,
    freqs: &NaturalFrequencies,
) -> Result<Vec<f64>> {
    check_dims(state, k, freqs)?;
    let mut out = vec![0.0; state.len()];
    rhs_into(&state.0, k, &freqs.0, 1.0, &mut out);
    Ok(out)
}

pub(crate) fn check_dims(
    state: &PhaseState,
    k: &CouplingMatrix,
    freqs: &NaturalFrequencies,
) -> Result<()> {
    if state.len() != k.n() || freqs.len() != k.n() {
        return config_err(format!(
            "dimension mismatch: {} phases, {}x{} couplings, {} frequencies",
            state.len(),
            k.n(),
            k.n(),
            freqs.len()
        ));
    }
    Ok(())
}

/// Velocity with couplings scaled by `gain` (rad/s per unit weight).
#[inline]
pub(crate) fn rhs_into(phases: &[f64], k: &CouplingMatrix, freqs: &[f64], gain: f64, out: &mut [f64]) {
    let n = phases.len();
    let m = k.matrix();
    for i in 0..n {
        let pi = phases[i];
        let mut acc = 0.0;
        for j in 0..n {
            let kij = m[(i, j)];
            if kij != 0.0 {
                acc += kij * (pi - phases[j]).sin();
            }
        }
        out[i] = freqs[i] - gain * acc;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

/// One explicit step of the chosen integrator.
pub fn integrate_step(
    state: &PhaseState,
    k: &CouplingMatrix,
    freqs: &NaturalFrequencies,
    dt: f64,
    method: Integrator,
) -> Result<PhaseState> {
    check_dims(state, k, freqs)?;
    if !(dt > 0.0) {
        return config_err(format!("time step must be positive, got {dt}"));
    }
    let mut next = state.0.clone();
    let mut scratch = StepScratch::new(state.len());
    step_in_place(&mut next, k, &freqs.0, 1.0, dt, method, &mut scratch);
    Ok(PhaseState(next))
}

pub(crate) struct StepScratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl StepScratch {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

pub(crate) fn step_in_place(
    phases: &mut [f64],
    k: &CouplingMatrix,
    freqs: &[f64],
    gain: f64,
    dt: f64,
    method: Integrator,
    s: &mut StepScratch,
) {
    match method {
        Integrator::Euler => {
            rhs_into(phases, k, freqs, gain, &mut s.k1);
            for (p, v) in phases.iter_mut().zip(&s.k1) {
                *p += dt * v;
            }
        }
        Integrator::Rk4 => {
            let n = phases.len();
            rhs_into(phases, k, freqs, gain, &mut s.k1);
            for i in 0..n {
                s.tmp[i] = phases[i] + 0.5 * dt * s.k1[i];
            }
            rhs_into(&s.tmp, k, freqs, gain, &mut s.k2);
            for i in 0..n {
                s.tmp[i] = phases[i] + 0.5 * dt * s.k2[i];
            }
            rhs_into(&s.tmp, k, freqs, gain, &mut s.k3);
            for i in 0..n {
                s.tmp[i] = phases[i] + dt * s.k3[i];
            }
            rhs_into(&s.tmp, k, freqs, gain, &mut s.k4);
            for i in 0..n {
                phases[i] += dt / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
            }
        }
    }
}

/// Number of whole steps of size `dt` in `duration`, tolerant of roundoff.
pub(crate) fn step_count(duration: f64, dt: f64) -> usize {
    ((duration / dt) + 1e-9).floor() as usize
}

/// Integrate for `duration`, sampling every `sample_every` steps. The first
/// sample is the initial state.
pub fn integrate_trace(
    initial: &PhaseState,
    k: &CouplingMatrix,
    freqs: &NaturalFrequencies,
    duration: f64,
    dt: f64,
    sample_every: usize,
    method: Integrator,
) -> Result<Vec<PhaseState>> {
    check_dims(initial, k, freqs)?;
    if !(dt > 0.0) {
        return config_err(format!("time step must be positive, got {dt}"));
    }
    if duration < dt {
        return config_err(format!("duration {duration} is shorter than dt {dt}"));
    }
    if sample_every == 0 {
        return config_err("sample_every must be at least 1");
    }
    let steps = step_count(duration, dt);
    let mut out = Vec::with_capacity(steps / sample_every + 1);
    let mut phases = initial.0.clone();
    let mut scratch = StepScratch::new(phases.len());
    out.push(initial.clone());
    for step in 1..=steps {
        step_in_place(&mut phases, k, &freqs.0, 1.0, dt, method, &mut scratch);
        if step % sample_every == 0 {
            out.push(PhaseState(phases.clone()));
        }
    }
    Ok(out)
}
