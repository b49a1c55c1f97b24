//! Exact enumeration of the binary visible/hidden energy model
//! `E(v, h) = −vᵀ W h` (no hidden-hidden couplings).
//!
//! Configuration index `c` encodes a ±1 vector with bit `i` set meaning
//! entry `i` is −1. W parameters are flattened row-major by visible index.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::encoding::Pattern;
use crate::error::{config_err, Result};
use crate::phase::{CouplingMatrix, NetworkTopology};

/// Largest `n_visible + n_hidden` accepted for exact enumeration.
pub const MAX_ENUMERATION_UNITS: usize = 20;

/// Ties in log-probability closer than this count as equal.
pub const LOG_PROB_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteEnergyModel {
    w: DMatrix<f64>,
    beta: f64,
}

impl BipartiteEnergyModel {
    pub fn new(w: DMatrix<f64>, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return config_err(format!("beta must be positive, got {beta}"));
        }
        if w.nrows() == 0 || w.ncols() == 0 {
            return config_err("model needs at least one visible and one hidden unit");
        }
        if w.nrows() + w.ncols() > MAX_ENUMERATION_UNITS {
            return config_err(format!(
                "{} visible + {} hidden units exceeds the enumeration bound of {MAX_ENUMERATION_UNITS}",
                w.nrows(),
                w.ncols()
            ));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return config_err("W contains non-finite entries");
        }
        Ok(Self { w, beta })
    }

    pub fn from_rows(rows: &[Vec<f64>], beta: f64) -> Result<Self> {
        let nv = rows.len();
        let nh = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nh) {
            return config_err("W rows have unequal lengths");
        }
        Self::new(DMatrix::from_fn(nv, nh, |a, k| rows[a][k]), beta)
    }

    /// Visible × hidden block of a trained coupling matrix. Visible units are
    /// the inputs followed by the outputs.
    pub fn from_coupling(k: &CouplingMatrix, topology: &NetworkTopology, beta: f64) -> Result<Self> {
        if k.n() != topology.n() {
            return config_err("coupling matrix does not match topology");
        }
        let vis = topology.visible();
        let hid: Vec<usize> = topology.hidden().collect();
        if hid.is_empty() {
            return config_err("topology has no hidden layer");
        }
        Self::new(DMatrix::from_fn(vis.len(), hid.len(), |a, h| k.pair(vis[a], hid[h])), beta)
    }

    pub fn n_visible(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.w.ncols()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn w_rows(&self) -> Vec<Vec<f64>> {
        (0..self.w.nrows()).map(|a| self.w.row(a).iter().copied().collect()).collect()
    }

    pub fn n_params(&self) -> usize {
        self.w.len()
    }

    /// W flattened row-major.
    pub fn params(&self) -> Vec<f64> {
        self.w_rows().concat()
    }

    /// Copy with `θ + eps·direction` (row-major flattening).
    pub fn stepped(&self, direction: &[f64], eps: f64) -> Result<Self> {
        if direction.len() != self.n_params() {
            return config_err("direction length does not match parameter count");
        }
        let nh = self.n_hidden();
        let w = DMatrix::from_fn(self.n_visible(), nh, |a, k| self.w[(a, k)] + eps * direction[a * nh + k]);
        Self::new(w, self.beta)
    }
}

fn spins(code: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| if code >> i & 1 == 1 { -1.0 } else { 1.0 }).collect()
}

/// Configuration index of a pattern (bit set where the entry is −1).
pub fn config_index(p: &Pattern) -> usize {
    p.bits()
        .iter()
        .enumerate()
        .fold(0, |c, (i, &b)| if b < 0 { c | 1 << i } else { c })
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `−vᵀ W h`.
pub fn model_energy(v: &Pattern, h: &Pattern, model: &BipartiteEnergyModel) -> Result<f64> {
    if v.len() != model.n_visible() || h.len() != model.n_hidden() {
        return config_err("pattern dimensions do not match the model");
    }
    let mut e = 0.0;
    for a in 0..v.len() {
        for k in 0..h.len() {
            e -= v.get(a) * model.w[(a, k)] * h.get(k);
        }
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleDistribution {
    pub log_probs: Vec<f64>,
    pub log_z: f64,
}

impl VisibleDistribution {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }
}

/// Per-visible-configuration quantities from one pass over the joint.
struct Enumeration {
    /// `ln Σ_h exp(β vᵀWh)` per visible config.
    log_weight: Vec<f64>,
    /// `E[h | v]` per visible config.
    hidden_mean: Vec<Vec<f64>>,
}

fn enumerate(model: &BipartiteEnergyModel) -> Enumeration {
    let (nv, nh) = (model.n_visible(), model.n_hidden());
    let hs: Vec<Vec<f64>> = (0..1usize << nh).map(|c| spins(c, nh)).collect();
    let mut log_weight = Vec::with_capacity(1 << nv);
    let mut hidden_mean = Vec::with_capacity(1 << nv);
    let mut terms = vec![0.0; hs.len()];
    for vc in 0..1usize << nv {
        let v = spins(vc, nv);
        // field on each hidden unit
        let field: Vec<f64> = (0..nh).map(|k| (0..nv).map(|a| v[a] * model.w[(a, k)]).sum()).collect();
        for (t, h) in terms.iter_mut().zip(&hs) {
            *t = model.beta * field.iter().zip(h).map(|(f, x)| f * x).sum::<f64>();
        }
        let lw = log_sum_exp(&terms);
        let mut mean = vec![0.0; nh];
        for (t, h) in terms.iter().zip(&hs) {
            let p = (t - lw).exp();
            for k in 0..nh {
                mean[k] += p * h[k];
            }
        }
        log_weight.push(lw);
        hidden_mean.push(mean);
    }
    Enumeration { log_weight, hidden_mean }
}

/// Exact `p(v) = Z⁻¹ Σ_h exp(−β E(v, h))` in log space.
pub fn visible_marginal(model: &BipartiteEnergyModel) -> VisibleDistribution {
    marginal_from(&enumerate(model))
}

fn marginal_from(en: &Enumeration) -> VisibleDistribution {
    let log_z = log_sum_exp(&en.log_weight);
    VisibleDistribution {
        log_probs: en.log_weight.iter().map(|l| l - log_z).collect(),
        log_z,
    }
}

/// Score vectors `∇_W ln p(v)` for every visible configuration, flattened
/// row-major, together with the marginal.
pub fn score_vectors(model: &BipartiteEnergyModel) -> (VisibleDistribution, Vec<Vec<f64>>) {
    let (nv, nh) = (model.n_visible(), model.n_hidden());
    let en = enumerate(model);
    let dist = marginal_from(&en);
    let conditional: Vec<Vec<f64>> = (0..1usize << nv)
        .map(|vc| {
            let v = spins(vc, nv);
            let m = &en.hidden_mean[vc];
            (0..nv).flat_map(|a| (0..nh).map(move |k| (a, k))).map(|(a, k)| v[a] * m[k]).collect()
        })
        .collect();
    let p = dist.probs();
    let mut joint = vec![0.0; nv * nh];
    for (pv, c) in p.iter().zip(&conditional) {
        for (j, x) in joint.iter_mut().zip(c) {
            *j += pv * x;
        }
    }
    let scores = conditional
        .into_iter()
        .map(|c| c.iter().zip(&joint).map(|(x, m)| model.beta * (x - m)).collect())
        .collect();
    (dist, scores)
}

/// Exact Fisher information over the W parameters.
pub fn fisher_information(model: &BipartiteEnergyModel) -> DMatrix<f64> {
    let (dist, scores) = score_vectors(model);
    let d = model.n_params();
    let mut f = DMatrix::zeros(d, d);
    for (lp, s) in dist.log_probs.iter().zip(&scores) {
        let p = lp.exp();
        for i in 0..d {
            for j in i..d {
                f[(i, j)] += p * s[i] * s[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            f[(i, j)] = f[(j, i)];
        }
    }
    f
}

/// Unit eigenvectors whose eigenvalue is at most `threshold · λ_max`.
pub fn null_directions(fisher: &DMatrix<f64>, threshold: f64) -> Vec<Vec<f64>> {
    assert!(fisher.is_square(), "matrix must be square");
    if fisher.nrows() == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(fisher.clone());
    let lmax = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = threshold * lmax.max(0.0);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] <= cut).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    idx.into_iter()
        .map(|i| {
            let v = eig.eigenvectors.column(i);
            let norm = v.norm();
            v.iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Eigenvalues in ascending order.
pub fn spectrum(fisher: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(fisher.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// True when `v_star` attains the largest visible probability.
pub fn is_visible_low_energy(v_star: &Pattern, model: &BipartiteEnergyModel) -> Result<bool> {
    if v_star.len() != model.n_visible() {
        return config_err("pattern length does not match the visible layer");
    }
    let dist = visible_marginal(model);
    let best = dist.log_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(dist.log_probs[config_index(v_star)] >= best - LOG_PROB_TIE_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub beta: f64,
    pub parameter_order: String,
    pub w: Vec<Vec<f64>>,
    pub threshold: f64,
    pub eigenvalues: Vec<f64>,
    pub null_directions: Vec<Vec<f64>>,
    pub visible: VisibleDistribution,
}

pub fn fisher_report(model: &BipartiteEnergyModel, threshold: f64) -> FisherReport {
    let f = fisher_information(model);
    FisherReport {
        n_visible: model.n_visible(),
        n_hidden: model.n_hidden(),
        beta: model.beta,
        parameter_order: "row-major W[visible][hidden]".into(),
        w: model.w_rows(),
        threshold,
        eigenvalues: spectrum(&f),
        null_directions: null_directions(&f, threshold),
        visible: visible_marginal(model),
    }
}
