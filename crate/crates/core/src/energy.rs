//! Hopfield/Kuramoto energies, Gibbs surprise and trace smoothing.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::phase::{CouplingMatrix, NaturalFrequencies, PhaseState};

/// `F(φ) = −Σ_{i<j} k[i][j]·cos(φ_i − φ_j)`.
///
/// Directed-pair matrices contribute the mean of the two directions.
pub fn hopfield_energy(state: &PhaseState, k: &CouplingMatrix) -> f64 {
    assert_eq!(state.len(), k.n(), "dimension mismatch");
    energy_of(&state.0, k)
}

#[inline]
pub(crate) fn energy_of(phases: &[f64], k: &CouplingMatrix) -> f64 {
    let n = phases.len();
    let mut e = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let kij = k.pair(i, j);
            if kij != 0.0 {
                e -= kij * (phases[i] - phases[j]).cos();
            }
        }
    }
    e
}

/// Hopfield energy plus the frequency bias `−Σ_i Δω_i·φ_i` on unwrapped
/// phases. Its negative gradient is exactly the Kuramoto velocity field.
pub fn biased_energy(state: &PhaseState, k: &CouplingMatrix, freqs: &NaturalFrequencies) -> f64 {
    assert_eq!(freqs.len(), state.len(), "dimension mismatch");
    let bias: f64 = state.0.iter().zip(&freqs.0).map(|(p, w)| p * w).sum();
    hopfield_energy(state, k) - bias
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurpriseParams {
    pub beta: f64,
}

impl SurpriseParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return config_err(format!("beta must be positive, got {beta}"));
        }
        Ok(Self { beta })
    }
}

impl Default for SurpriseParams {
    fn default() -> Self {
        Self { beta: 1.0 }
    }
}

/// Gibbs surprise `−ln p(φ) = β·F(φ) + ln Z`.
pub fn surprise(state: &PhaseState, k: &CouplingMatrix, params: SurpriseParams, log_z: f64) -> f64 {
    params.beta * hopfield_energy(state, k) + log_z
}

/// Centered moving average with truncated windows at the edges.
pub fn smoothed_energy_trace(energies: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window % 2 == 0 {
        return config_err(format!("smoothing window must be odd and positive, got {window}"));
    }
    if window > energies.len() {
        return config_err(format!(
            "smoothing window {window} exceeds series length {}",
            energies.len()
        ));
    }
    let half = window / 2;
    let n = energies.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &e in energies {
        prefix.push(prefix.last().unwrap() + e);
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect())
}
