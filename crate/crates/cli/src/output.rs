//! File formats. Nothing touches the output directory until every file has
//! been produced in memory, so a failed command leaves no partial outputs.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use phaselock_core::encoding::{Pattern, PatternSet};
use phaselock_core::phase::{CouplingMatrix, NetworkTopology, SymmetryMode};
use phaselock_core::protocol::{BatchResult, TraceRecord};

use crate::config::TopologySection;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits, enough to round-trip any f64.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::usage(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    pub fn commit(self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
        for (name, bytes) in self.files {
            let path = dir.join(&name);
            std::fs::write(&path, bytes).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Coupling column names, matching `CouplingMatrix::stored_pairs` order.
fn weight_columns(topology: &NetworkTopology, symmetry: SymmetryMode) -> Vec<String> {
    CouplingMatrix::zeros(topology, symmetry)
        .stored_pairs()
        .into_iter()
        .map(|(i, j)| format!("k_{i}_{j}"))
        .collect()
}

/// `t, phi_0..phi_{n-1}, k_<i>_<j>.., energy, acc_0..acc_{m-1}`.
pub fn trace_csv(trace: &[TraceRecord], topology: &NetworkTopology, symmetry: SymmetryMode) -> String {
    let n = topology.n();
    let m = topology.outputs().len();
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("phi_{i}")));
    header.extend(weight_columns(topology, symmetry));
    header.push("energy".into());
    header.extend((0..m).map(|i| format!("acc_{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for r in trace {
        let row: Vec<String> = std::iter::once(r.time)
            .chain(r.phases.iter().copied())
            .chain(r.weights.iter().copied())
            .chain(std::iter::once(r.energy))
            .chain(r.accuracy.iter().copied())
            .map(num)
            .collect();
        out += &row.join(",");
        out.push('\n');
    }
    out
}

/// `t` followed by mean, std and rolling mean of each metric.
pub fn aggregate_csv(r: &BatchResult) -> String {
    let mut metrics = Vec::new();
    if let Some(m) = &r.mse {
        metrics.push(("mse", m));
    }
    metrics.push(("accuracy", &r.accuracy));
    metrics.push(("energy", &r.energy));
    let mut out = String::from("t");
    for (name, _) in &metrics {
        let _ = write!(out, ",{name}_mean,{name}_std,{name}_rolling");
    }
    out.push('\n');
    for (i, t) in r.times.iter().enumerate() {
        out += &num(*t);
        for (_, s) in &metrics {
            let _ = write!(out, ",{},{},{}", num(s.mean[i]), num(s.std[i]), num(s.rolling[i]));
        }
        out.push('\n');
    }
    out
}

/// Saved coupling matrix with the topology and patterns it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub version: String,
    pub topology: TopologySection,
    pub patterns: Vec<Vec<i8>>,
    /// Row-major coupling matrix.
    pub rows: Vec<Vec<f64>>,
    /// `false` marks couplings outside the topology; they are always zero.
    pub mask: Vec<Vec<bool>>,
}

impl WeightsFile {
    pub fn new(k: &CouplingMatrix, topology: &TopologySection, patterns: &PatternSet) -> Self {
        Self {
            version: VERSION.into(),
            topology: topology.clone(),
            patterns: patterns.patterns().iter().map(|p| p.bits().to_vec()).collect(),
            rows: k.rows(),
            mask: k.mask_rows(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read weights {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("weights {}: {e}", path.display())))
    }

    pub fn matrix(&self) -> Result<CouplingMatrix, CliError> {
        Ok(CouplingMatrix::from_rows_with_mask(&self.rows, &self.mask, self.topology.symmetry)?)
    }

    pub fn network(&self) -> Result<NetworkTopology, CliError> {
        let t = self.topology.build()?;
        if t.mask_rows() != self.mask {
            return Err(CliError::usage("weights mask does not match the stored topology"));
        }
        Ok(t)
    }

    pub fn pattern_set(&self) -> Result<Vec<Pattern>, CliError> {
        Ok(self.patterns.iter().map(|p| Pattern::new(p.clone())).collect::<Result<_, _>>()?)
    }
}
