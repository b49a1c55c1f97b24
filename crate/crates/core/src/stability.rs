//! Fixed points of the phase dynamics, their Hessians, and first-order
//! sensitivity to frequency dispersion.
//!
//! The homogeneous energy is invariant under a global phase rotation, so the
//! full Hessian always has a zero mode. Two gauges remove it:
//!
//! * [`Gauge::Projected`] restricts the Hessian to displacements orthogonal
//!   to the all-ones vector. This is the right reduction for a free network.
//! * [`Gauge::Pinned`] holds a set of oscillators fixed (e.g. clamped inputs)
//!   and keeps the principal sub-matrix over the remaining ones.
//!
//! `lambda_min` always refers to the reduced matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::phase::{check_dims, rhs_into, CouplingMatrix, NaturalFrequencies, PhaseState};

/// Smallest reduced eigenvalue still counted as strictly positive.
pub const MINIMUM_EIGENVALUE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gauge {
    /// Remove the global rotation; shifts are reported relative to `reference`.
    Projected { reference: usize },
    /// Hold these oscillators fixed.
    Pinned { indices: Vec<usize> },
}

impl Default for Gauge {
    fn default() -> Self {
        Gauge::Projected { reference: 0 }
    }
}

impl Gauge {
    /// Orthonormal basis (columns) of the admissible displacement subspace.
    fn basis(&self, n: usize) -> Result<DMatrix<f64>> {
        match self {
            Gauge::Projected { reference } => {
                if *reference >= n {
                    return config_err(format!("reference {reference} out of range"));
                }
                // Helmert basis of the zero-sum subspace
                Ok(DMatrix::from_fn(n, n - 1, |i, c| {
                    let k = c + 1;
                    let norm = ((k * (k + 1)) as f64).sqrt();
                    if i < k {
                        1.0 / norm
                    } else if i == k {
                        -(k as f64) / norm
                    } else {
                        0.0
                    }
                }))
            }
            Gauge::Pinned { indices } => {
                if indices.iter().any(|&i| i >= n) {
                    return config_err("pinned index out of range");
                }
                let free: Vec<usize> = (0..n).filter(|i| !indices.contains(i)).collect();
                Ok(DMatrix::from_fn(n, free.len(), |i, c| if free[c] == i { 1.0 } else { 0.0 }))
            }
        }
    }

    /// Project a velocity onto the admissible subspace in place.
    fn project_velocity(&self, v: &mut [f64]) {
        match self {
            Gauge::Projected { .. } => {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                v.iter_mut().for_each(|x| *x -= mean);
            }
            Gauge::Pinned { indices } => {
                for &i in indices {
                    v[i] = 0.0;
                }
            }
        }
    }

    /// Gauge-fixed representative of a displacement.
    pub fn fix_displacement(&self, d: &[f64]) -> Vec<f64> {
        match self {
            Gauge::Projected { .. } => {
                let mean = d.iter().sum::<f64>() / d.len() as f64;
                d.iter().map(|x| x - mean).collect()
            }
            Gauge::Pinned { indices } => d
                .iter()
                .enumerate()
                .map(|(i, &x)| if indices.contains(&i) { 0.0 } else { x })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub phi_star: PhaseState,
    pub residual_norm: f64,
    /// Gauge-fixed Hessian (rows).
    pub hessian: Vec<Vec<f64>>,
    pub lambda_min: f64,
    pub is_minimum: bool,
    pub gauge: Gauge,
    pub iterations: usize,
}

impl FixedPointReport {
    fn reduced(&self) -> DMatrix<f64> {
        let m = self.hessian.len();
        DMatrix::from_fn(m, m, |i, j| self.hessian[i][j])
    }
}

/// Analytic Hessian of the Hopfield energy:
/// diagonal `Σ_j k_ij cos(φ_i − φ_j)`, off-diagonal `−k_ij cos(φ_i − φ_j)`.
pub fn energy_hessian(state: &PhaseState, k: &CouplingMatrix) -> DMatrix<f64> {
    let n = k.n();
    assert_eq!(state.len(), n, "dimension mismatch");
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let c = k.pair(i, j) * (state.0[i] - state.0[j]).cos();
            h[(i, j)] = -c;
            h[(i, i)] += c;
        }
    }
    h
}

/// Gauge-reduced Hessian `Qᵀ H Q`.
pub fn reduced_hessian(state: &PhaseState, k: &CouplingMatrix, gauge: &Gauge) -> Result<DMatrix<f64>> {
    let q = gauge.basis(k.n())?;
    let h = energy_hessian(state, k);
    let r = q.transpose() * h * &q;
    // symmetrise away roundoff
    Ok((&r + r.transpose()) * 0.5)
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Relaxation settings for [`find_fixed_point_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSearch {
    pub gauge: Gauge,
    /// Relaxation step, s.
    pub dt: f64,
    pub max_iter: usize,
    /// Stop once the gauge-fixed velocity norm is below this, rad/s.
    pub tol: f64,
}

impl Default for FixedPointSearch {
    fn default() -> Self {
        Self {
            gauge: Gauge::default(),
            dt: 1e-2,
            max_iter: 1_000_000,
            tol: 1e-8,
        }
    }
}

/// Relax the dynamics from `initial` until the velocity norm drops below
/// `tol`, using the projected gauge with oscillator 0 as reference.
pub fn find_fixed_point(
    initial: &PhaseState,
    k: &CouplingMatrix,
    freqs: &NaturalFrequencies,
    tol: f64,
) -> Result<FixedPointReport> {
    find_fixed_point_with(
        initial,
        k,
        freqs,
        &FixedPointSearch {
            tol,
            ..Default::default()
        },
    )
}

pub fn find_fixed_point_with(
    initial: &PhaseState,
    k: &CouplingMatrix,
    freqs: &NaturalFrequencies,
    search: &FixedPointSearch,
) -> Result<FixedPointReport> {
    check_dims(initial, k, freqs)?;
    if !(search.tol > 0.0) {
        return config_err(format!("tolerance must be positive, got {}", search.tol));
    }
    if !(search.dt > 0.0) {
        return config_err("relaxation step must be positive");
    }
    let n = k.n();
    // validates the gauge before any work
    search.gauge.basis(n)?;
    let mut phases = initial.0.clone();
    let mut v = vec![0.0; n];
    let mut iterations = 0;
    let residual = loop {
        rhs_into(&phases, k, &freqs.0, 1.0, &mut v);
        search.gauge.project_velocity(&mut v);
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !r.is_finite() {
            return Err(Error::Divergence {
                iterations,
                residual: r,
            });
        }
        if r < search.tol {
            break r;
        }
        if iterations >= search.max_iter {
            return Err(Error::Divergence {
                iterations,
                residual: r,
            });
        }
        for (p, x) in phases.iter_mut().zip(&v) {
            *p += search.dt * x;
        }
        iterations += 1;
    };
    let phi_star = PhaseState(phases);
    let h = reduced_hessian(&phi_star, k, &search.gauge)?;
    let lambda_min = min_eigenvalue(&h);
    Ok(FixedPointReport {
        phi_star,
        residual_norm: residual,
        hessian: (0..h.nrows()).map(|i| h.row(i).iter().copied().collect()).collect(),
        lambda_min,
        is_minimum: lambda_min > MINIMUM_EIGENVALUE_TOL,
        gauge: search.gauge.clone(),
        iterations,
    })
}

/// First-order bound `‖Δω‖₂ / λ_min` on the fixed-point displacement.
pub fn perturbation_bound(report: &FixedPointReport, delta_omega: &NaturalFrequencies) -> Result<f64> {
    if !report.is_minimum || !(report.lambda_min > 0.0) {
        return Err(Error::Precondition(format!(
            "fixed point is not a strict minimum (lambda_min = {:.3e})",
            report.lambda_min
        )));
    }
    if delta_omega.len() != report.phi_star.len() {
        return config_err("dispersion vector has the wrong length");
    }
    Ok(delta_omega.norm() / report.lambda_min)
}

/// Linear-response shift `H⁻¹ Δω` on the gauge-fixed subspace, embedded back
/// into full coordinates (reference entry zero, pinned entries zero).
pub fn predicted_shift(report: &FixedPointReport, delta_omega: &NaturalFrequencies) -> Result<Vec<f64>> {
    let n = report.phi_star.len();
    if delta_omega.len() != n {
        return config_err("dispersion vector has the wrong length");
    }
    let q = report.gauge.basis(n)?;
    let h = report.reduced();
    let rhs = q.transpose() * DVector::from_column_slice(delta_omega.as_slice());
    let chol = h.clone().cholesky();
    let y = match chol {
        Some(c) => c.solve(&rhs),
        None => {
            let lu = h.lu();
            if lu.determinant().abs() < 1e-300 {
                return Err(Error::Precondition("gauge-fixed Hessian is singular".into()));
            }
            lu.solve(&rhs)
                .ok_or_else(|| Error::Precondition("gauge-fixed Hessian is singular".into()))?
        }
    };
    if report.lambda_min.abs() < MINIMUM_EIGENVALUE_TOL {
        return Err(Error::Precondition("gauge-fixed Hessian is singular".into()));
    }
    let delta = q * y;
    let offset = match &report.gauge {
        Gauge::Projected { reference } => delta[*reference],
        Gauge::Pinned { .. } => 0.0,
    };
    Ok(delta.iter().map(|d| d - offset).collect())
}
