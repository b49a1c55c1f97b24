use crate::encoding::{bit_phase, Pattern};
use crate::error::{config_err, Result};
use crate::phase::{CouplingMatrix, PhaseState};

/// Mean squared difference over allowed off-diagonal entries (both triangles).
pub fn weight_mse(k: &CouplingMatrix, ideal: &CouplingMatrix) -> Result<f64> {
    let n = k.n();
    if ideal.n() != n {
        return config_err(format!("matrix sizes differ: {n} vs {}", ideal.n()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if k.allows(i, j) != ideal.allows(i, j) {
                return config_err(format!("masks differ at ({i}, {j})"));
            }
            if k.allows(i, j) {
                sum += (k.get(i, j) - ideal.get(i, j)).powi(2);
                count += 1;
            }
        }
    }
    if count == 0 {
        return config_err("no coupled pairs to compare");
    }
    Ok(sum / count as f64)
}

/// Output bits expressed relative to the reference bit: +1 means the output
/// should be in phase with the reference oscillator.
pub fn relative_target(pattern: &Pattern, reference: usize, outputs: impl IntoIterator<Item = usize>) -> Pattern {
    let r = pattern.bits()[reference];
    Pattern::new(outputs.into_iter().map(|o| pattern.bits()[o] * r).collect()).expect("non-empty outputs")
}

/// Per-output accuracy `½(cos(φ* − φ) + 1)` with every phase measured from
/// the reference oscillator. `target[m]` is the desired bit of
/// `output_indices[m]` relative to the reference.
pub fn recall_accuracy(
    state: &PhaseState,
    target: &Pattern,
    output_indices: &[usize],
    reference_index: usize,
) -> Vec<f64> {
    assert_eq!(target.len(), output_indices.len(), "one target bit per output");
    assert!(reference_index < state.len(), "reference index out of range");
    let r = state.0[reference_index];
    output_indices
        .iter()
        .zip(target.bits())
        .map(|(&o, &b)| 0.5 * ((bit_phase(b) - (state.0[o] - r)).cos() + 1.0))
        .collect()
}

pub fn mean_accuracy(acc: &[f64]) -> f64 {
    acc.iter().sum::<f64>() / acc.len() as f64
}

/// Trailing moving average, truncated at the start of the series.
pub fn rolling_mean(x: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0, "window must be positive");
    let mut out = Vec::with_capacity(x.len());
    let mut sum = 0.0;
    for i in 0..x.len() {
        sum += x[i];
        if i >= window {
            sum -= x[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}
