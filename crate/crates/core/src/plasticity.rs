//! Local Hebbian plasticity with weight decay, plus the external drives
//! (input clamping and output nudging) used while training.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::phase::{
    check_dims, rhs_into, wrap_phase, CouplingMatrix, NaturalFrequencies, PhaseState, SymmetryMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningParams {
    /// Learning rate, 1/s.
    pub eta: f64,
    /// Weight decay coefficient (dimensionless).
    pub lambda: f64,
    /// Nudge gain, 1/s.
    pub k_nudge: f64,
}

impl LearningParams {
    pub fn new(eta: f64, lambda: f64, k_nudge: f64) -> Result<Self> {
        let p = Self { eta, lambda, k_nudge };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return config_err(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return config_err(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.k_nudge >= 0.0) || !self.k_nudge.is_finite() {
            return config_err(format!("k_nudge must be non-negative, got {}", self.k_nudge));
        }
        Ok(())
    }
}

/// Defaults suit the default coupling gain: the nudge is twice as strong as
/// a unit coupling, and learning is slow against the switching interval.
impl Default for LearningParams {
    fn default() -> Self {
        Self {
            eta: 0.05,
            lambda: 0.5,
            k_nudge: 200.0,
        }
    }
}

/// Which oscillators are held at a phase and which are pulled toward one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    clamped: Vec<(usize, f64)>,
    nudged: Vec<(usize, f64)>,
}

impl DriveSpec {
    pub fn new(clamped: Vec<(usize, f64)>, nudged: Vec<(usize, f64)>, n: usize) -> Result<Self> {
        for &(i, p) in clamped.iter().chain(&nudged) {
            if i >= n {
                return config_err(format!("drive index {i} out of range for {n} oscillators"));
            }
            if !p.is_finite() {
                return config_err(format!("drive target for oscillator {i} is not finite"));
            }
        }
        let mut seen = vec![false; n];
        for &(i, _) in &clamped {
            if std::mem::replace(&mut seen[i], true) {
                return config_err(format!("oscillator {i} clamped twice"));
            }
        }
        let mut seen_n = vec![false; n];
        for &(i, _) in &nudged {
            if seen[i] {
                return config_err(format!("oscillator {i} is both clamped and nudged"));
            }
            if std::mem::replace(&mut seen_n[i], true) {
                return config_err(format!("oscillator {i} nudged twice"));
            }
        }
        Ok(Self { clamped, nudged })
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn clamped(&self) -> &[(usize, f64)] {
        &self.clamped
    }

    pub fn nudged(&self) -> &[(usize, f64)] {
        &self.nudged
    }
}

/// `rate[i][j] = η·(cos(φ_i − φ_j) − λ·k[i][j])` on allowed entries.
pub fn hebbian_rate(state: &PhaseState, k: &CouplingMatrix, params: &LearningParams) -> DMatrix<f64> {
    assert_eq!(state.len(), k.n(), "dimension mismatch");
    let n = k.n();
    DMatrix::from_fn(n, n, |i, j| {
        if k.allows(i, j) {
            params.eta * ((state.0[i] - state.0[j]).cos() - params.lambda * k.get(i, j))
        } else {
            0.0
        }
    })
}

/// One Euler step of the weight dynamics followed by clipping to `[-1, 1]`.
pub fn apply_plasticity_step(
    state: &PhaseState,
    k: &CouplingMatrix,
    params: &LearningParams,
    dt: f64,
) -> Result<CouplingMatrix> {
    if !(dt > 0.0) {
        return config_err(format!("time step must be positive, got {dt}"));
    }
    if state.len() != k.n() {
        return config_err("dimension mismatch between phases and couplings");
    }
    let mut next = k.clone();
    plasticity_in_place(&state.0, &mut next, params, dt);
    Ok(next)
}

/// In-place weight update used by the simulation loop.
pub(crate) fn plasticity_in_place(phases: &[f64], k: &mut CouplingMatrix, params: &LearningParams, dt: f64) {
    let n = k.n();
    let mode = k.mode();
    let eta_dt = params.eta * dt;
    let lambda = params.lambda;
    for i in 0..n {
        let j0 = if mode == SymmetryMode::Symmetric { i + 1 } else { 0 };
        for j in j0..n {
            if !k.allows(i, j) {
                continue;
            }
            let c = (phases[i] - phases[j]).cos();
            let m = k.matrix_mut();
            let v = (m[(i, j)] + eta_dt * (c - lambda * m[(i, j)])).clamp(-1.0, 1.0);
            m[(i, j)] = v;
            if mode == SymmetryMode::Symmetric {
                m[(j, i)] = v;
            }
        }
    }
}

/// `−k_nudge·wrap(φ − φ*)` on nudged oscillators, zero elsewhere.
pub fn nudge_rate(state: &PhaseState, drive: &DriveSpec, params: &LearningParams) -> Vec<f64> {
    let mut out = vec![0.0; state.len()];
    add_nudge(&state.0, drive, params.k_nudge, &mut out);
    out
}

#[inline]
fn add_nudge(phases: &[f64], drive: &DriveSpec, k_nudge: f64, out: &mut [f64]) {
    for &(i, target) in &drive.nudged {
        out[i] -= k_nudge * wrap_phase(phases[i] - target);
    }
}

/// Set clamped oscillators exactly to their targets.
pub fn apply_clamp(state: &PhaseState, drive: &DriveSpec) -> PhaseState {
    let mut s = state.clone();
    clamp_in_place(&mut s.0, drive);
    s
}

#[inline]
pub(crate) fn clamp_in_place(phases: &mut [f64], drive: &DriveSpec) {
    for &(i, target) in &drive.clamped {
        phases[i] = target;
    }
}

/// Driven Euler step of the phases: clamp, add nudges, freeze clamped
/// oscillators, advance. Couplings are scaled by `gain`.
pub(crate) fn driven_phase_step(
    phases: &mut [f64],
    k: &CouplingMatrix,
    freqs: &[f64],
    drive: &DriveSpec,
    k_nudge: f64,
    gain: f64,
    dt: f64,
    velocity: &mut [f64],
) {
    clamp_in_place(phases, drive);
    driven_velocity(phases, k, freqs, drive, k_nudge, gain, velocity);
    for (p, v) in phases.iter_mut().zip(velocity.iter()) {
        *p += dt * v;
    }
}

/// Coupling plus nudge velocity, zero on clamped oscillators. Phases are
/// assumed to be clamped already.
#[inline]
pub(crate) fn driven_velocity(
    phases: &[f64],
    k: &CouplingMatrix,
    freqs: &[f64],
    drive: &DriveSpec,
    k_nudge: f64,
    gain: f64,
    velocity: &mut [f64],
) {
    rhs_into(phases, k, freqs, gain, velocity);
    add_nudge(phases, drive, k_nudge, velocity);
    for &(i, _) in &drive.clamped {
        velocity[i] = 0.0;
    }
}

/// One coupled step of the full learning system: phases and weights both
/// advance from the same pre-step state.
pub fn coupled_step(
    state: &PhaseState,
    k: &CouplingMatrix,
    freqs: &NaturalFrequencies,
    drive: &DriveSpec,
    params: &LearningParams,
    dt: f64,
    plastic: bool,
) -> Result<(PhaseState, CouplingMatrix)> {
    check_dims(state, k, freqs)?;
    if !(dt > 0.0) {
        return config_err(format!("time step must be positive, got {dt}"));
    }
    let mut phases = state.0.clone();
    clamp_in_place(&mut phases, drive);
    let mut next_k = k.clone();
    if plastic {
        plasticity_in_place(&phases, &mut next_k, params, dt);
    }
    let mut v = vec![0.0; phases.len()];
    driven_phase_step(&mut phases, k, &freqs.0, drive, params.k_nudge, 1.0, dt, &mut v);
    Ok((PhaseState(phases), next_k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::hopfield_energy;
    use crate::phase::NetworkTopology;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pair(k12: f64) -> CouplingMatrix {
        CouplingMatrix::from_rows(&[vec![0.0, k12], vec![k12, 0.0]], SymmetryMode::Symmetric).unwrap()
    }

    fn params(eta: f64, lambda: f64) -> LearningParams {
        LearningParams::new(eta, lambda, 5.0).unwrap()
    }

    #[test]
    fn rate_examples() {
        let r = hebbian_rate(&PhaseState::new(vec![0.4, 0.4]), &pair(0.3), &params(0.7, 0.0));
        assert_abs_diff_eq!(r[(0, 1)], 0.7, epsilon = 1e-15);
        let r = hebbian_rate(&PhaseState::new(vec![PI, 0.0]), &pair(0.3), &params(0.7, 0.0));
        assert_abs_diff_eq!(r[(0, 1)], -0.7, epsilon = 1e-15);
        assert_eq!(r[(0, 0)], 0.0);
    }

    #[test]
    fn decay_fixed_point_beyond_clip_bound() {
        // cos = 1, λ = 0.5: rate vanishes at k = 2, so the clip at 1 binds
        let p = params(1.0, 0.5);
        let r = hebbian_rate(&PhaseState::zeros(2), &pair(1.0), &p);
        assert!(r[(0, 1)] > 0.0);
        let two = CouplingMatrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]], SymmetryMode::Symmetric).unwrap();
        assert_abs_diff_eq!(hebbian_rate(&PhaseState::zeros(2), &two, &p)[(0, 1)], 0.0, epsilon = 1e-15);
        let k = apply_plasticity_step(&PhaseState::zeros(2), &pair(1.0), &p, 0.1).unwrap();
        assert_eq!(k.get(0, 1), 1.0);
    }

    #[test]
    fn step_examples() {
        let k = apply_plasticity_step(&PhaseState::zeros(2), &pair(0.0), &params(1.0, 0.0), 0.01).unwrap();
        assert_abs_diff_eq!(k.get(0, 1), 0.01, epsilon = 1e-15);
        let k = apply_plasticity_step(&PhaseState::zeros(2), &pair(1.0), &params(1.0, 0.0), 0.01).unwrap();
        assert_eq!(k.get(0, 1), 1.0);
        let k = apply_plasticity_step(&PhaseState::new(vec![0.0, PI]), &pair(1.0), &params(1.0, 1.0), 0.01).unwrap();
        assert_abs_diff_eq!(k.get(0, 1), 0.98, epsilon = 1e-15);
        assert!(apply_plasticity_step(&PhaseState::zeros(2), &pair(0.0), &params(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn mask_respected() {
        let t = NetworkTopology::layered(&[1, 1, 1]).unwrap();
        let k = CouplingMatrix::zeros(&t, SymmetryMode::Symmetric);
        let k = apply_plasticity_step(&PhaseState::zeros(3), &k, &params(1.0, 0.0), 0.1).unwrap();
        assert_eq!(k.get(0, 2), 0.0);
        assert_abs_diff_eq!(k.get(0, 1), 0.1, epsilon = 1e-15);
        assert_eq!(k.get(1, 1), 0.0);
    }

    #[test]
    fn hebbian_is_negative_energy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 5;
        let mut k = CouplingMatrix::zeros_full(n, SymmetryMode::Symmetric);
        for i in 0..n {
            for j in i + 1..n {
                k.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
        let s = PhaseState::new((0..n).map(|_| rng.random_range(-PI..PI)).collect());
        let eta = 0.8;
        let r = hebbian_rate(&s, &k, &params(eta, 0.0));
        let h = 1e-5;
        for i in 0..n {
            for j in i + 1..n {
                let mut kp = k.clone();
                let mut km = k.clone();
                kp.set(i, j, k.get(i, j) + h);
                km.set(i, j, k.get(i, j) - h);
                let g = (hopfield_energy(&s, &kp) - hopfield_energy(&s, &km)) / (2.0 * h);
                assert!((r[(i, j)] + eta * g).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn in_phase_pair_converges_toward_inverse_lambda() {
        let p = params(1.0, 2.0); // fixed point 0.5, inside the clip range
        let mut k = pair(-0.3);
        let mut prev = k.get(0, 1);
        for _ in 0..5000 {
            k = apply_plasticity_step(&PhaseState::zeros(2), &k, &p, 0.01).unwrap();
            let v = k.get(0, 1);
            assert!(v >= prev && v <= 0.5);
            prev = v;
        }
        assert_abs_diff_eq!(prev, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn nudge_examples() {
        let p = LearningParams::new(0.5, 0.5, 5.0).unwrap();
        let d = DriveSpec::new(vec![], vec![(1, 1.0)], 2).unwrap();
        assert_eq!(nudge_rate(&PhaseState::new(vec![0.0, 1.0]), &d, &p), vec![0.0, 0.0]);
        let v = nudge_rate(&PhaseState::new(vec![0.0, 1.2]), &d, &p);
        assert_abs_diff_eq!(v[1], -1.0, epsilon = 1e-12);
        assert_eq!(v[0], 0.0);
        let v = nudge_rate(&PhaseState::new(vec![0.0, 1.0 + 2.0 * PI]), &d, &p);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn drive_validation() {
        assert!(DriveSpec::new(vec![(0, 0.0)], vec![(0, 1.0)], 3).is_err());
        assert!(DriveSpec::new(vec![(3, 0.0)], vec![], 3).is_err());
        assert!(DriveSpec::new(vec![(0, 0.0), (0, 1.0)], vec![], 3).is_err());
        assert!(DriveSpec::new(vec![(0, 0.0)], vec![(1, 1.0)], 3).is_ok());
    }

    #[test]
    fn clamp_examples() {
        let d = DriveSpec::new(vec![(0, 0.0), (1, PI)], vec![], 3).unwrap();
        let s = apply_clamp(&PhaseState::new(vec![1.0, 2.0, 3.0]), &d);
        assert_eq!(s.0, vec![0.0, PI, 3.0]);
        let x = PhaseState::new(vec![0.5, -0.5]);
        assert_eq!(apply_clamp(&x, &DriveSpec::none()), x);
    }

    #[test]
    fn clamp_then_step_freezes_clamped() {
        let k = CouplingMatrix::from_rows(
            &[vec![0.0, 0.5, 0.8], vec![0.5, 0.0, -0.4], vec![0.8, -0.4, 0.0]],
            SymmetryMode::Symmetric,
        )
        .unwrap();
        let d = DriveSpec::new(vec![(0, 0.0), (1, PI)], vec![], 3).unwrap();
        let (s, _) = coupled_step(
            &PhaseState::new(vec![1.0, 1.0, 1.0]),
            &k,
            &NaturalFrequencies::homogeneous(3),
            &d,
            &params(0.5, 0.5),
            0.01,
            true,
        )
        .unwrap();
        assert_eq!(s.0[0], 0.0);
        assert_eq!(s.0[1], PI);
        assert!((s.0[2] - 1.0).abs() > 1e-4);
    }

    proptest! {
        #[test]
        fn weights_stay_bounded_and_symmetric(
            seed in 0u64..1000,
            eta in 0.01f64..50.0,
            lambda in 0.0f64..3.0,
            dt in 1e-4f64..0.5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 4;
            let mut k = CouplingMatrix::zeros_full(n, SymmetryMode::Symmetric);
            for i in 0..n {
                for j in i + 1..n {
                    k.set(i, j, rng.random_range(-1.0..1.0));
                }
            }
            let p = LearningParams::new(eta, lambda, 0.0).unwrap();
            for _ in 0..50 {
                let s = PhaseState::new((0..n).map(|_| rng.random_range(-PI..PI)).collect());
                k = apply_plasticity_step(&s, &k, &p, dt).unwrap();
                prop_assert!(k.max_abs() <= 1.0);
                prop_assert!(k.is_symmetric());
            }
        }
    }
}
