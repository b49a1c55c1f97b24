//! Binary phase coding: patterns ↔ phases, and outer-product couplings.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::phase::{CouplingMatrix, PhaseState, SymmetryMode};

/// A vector of ±1 logical values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct Pattern(Vec<i8>);

impl Pattern {
    pub fn new(bits: Vec<i8>) -> Result<Self> {
        if bits.is_empty() {
            return config_err("pattern must not be empty");
        }
        if let Some(b) = bits.iter().find(|&&b| b != 1 && b != -1) {
            return config_err(format!("pattern entries must be +1 or -1, found {b}"));
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i] as f64
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|b| -b).collect())
    }

    /// Sub-pattern made of the given positions.
    pub fn select(&self, positions: impl IntoIterator<Item = usize>) -> Self {
        Self(positions.into_iter().map(|i| self.0[i]).collect())
    }

    /// Same pattern up to a global sign flip, i.e. indistinguishable by
    /// relative phases.
    pub fn gauge_equivalent(&self, other: &Self) -> bool {
        *self == *other || *self == other.negated()
    }
}

impl TryFrom<Vec<i8>> for Pattern {
    type Error = crate::Error;
    fn try_from(v: Vec<i8>) -> Result<Self> {
        Pattern::new(v)
    }
}

impl From<Pattern> for Vec<i8> {
    fn from(p: Pattern) -> Self {
        p.0
    }
}

/// A non-empty list of equal-length patterns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Pattern>", into = "Vec<Pattern>")]
pub struct PatternSet(Vec<Pattern>);

impl PatternSet {
    pub fn new(patterns: Vec<Pattern>) -> Result<Self> {
        let Some(first) = patterns.first() else {
            return config_err("pattern set must contain at least one pattern");
        };
        let len = first.len();
        if patterns.iter().any(|p| p.len() != len) {
            return config_err("all patterns in a set must have the same length");
        }
        Ok(Self(patterns))
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pattern_len(&self) -> usize {
        self.0[0].len()
    }

    pub fn get(&self, i: usize) -> &Pattern {
        &self.0[i]
    }
}

impl TryFrom<Vec<Pattern>> for PatternSet {
    type Error = crate::Error;
    fn try_from(v: Vec<Pattern>) -> Result<Self> {
        PatternSet::new(v)
    }
}

impl From<PatternSet> for Vec<Pattern> {
    fn from(p: PatternSet) -> Self {
        p.0
    }
}

/// +1 ↦ 0 rad, −1 ↦ π rad.
pub fn bit_phase(bit: i8) -> f64 {
    if bit > 0 {
        0.0
    } else {
        PI
    }
}

pub fn pattern_to_phases(p: &Pattern) -> PhaseState {
    PhaseState::new(p.bits().iter().map(|&b| bit_phase(b)).collect())
}

/// Read out a pattern after shifting every phase so the reference oscillator
/// sits at zero. Entry `i` is +1 when `cos(φ_i) ≥ 0`.
pub fn binarize(state: &PhaseState, reference_index: usize) -> Pattern {
    assert!(reference_index < state.len(), "reference index out of range");
    let r = state.0[reference_index];
    Pattern(
        state
            .0
            .iter()
            .map(|&p| if (p - r).cos() >= 0.0 { 1 } else { -1 })
            .collect(),
    )
}

/// Scaled Hopfield outer product `scale/m · Σ_μ s^μ s^μᵀ` with the diagonal
/// zeroed and entries clipped to `[-1, 1]`.
pub fn outer_product_weights(ps: &PatternSet, scale: f64) -> Result<CouplingMatrix> {
    if ps.is_empty() {
        return config_err("cannot build couplings from an empty pattern set");
    }
    if !(scale >= 0.0) || !scale.is_finite() {
        return config_err(format!("scale must be a non-negative finite number, got {scale}"));
    }
    let n = ps.pattern_len();
    let m = ps.len() as f64;
    let mut k = CouplingMatrix::zeros_full(n, SymmetryMode::Symmetric);
    for i in 0..n {
        for j in i + 1..n {
            let sum: f64 = ps.patterns().iter().map(|p| p.get(i) * p.get(j)).sum();
            k.set(i, j, (scale * sum / m).clamp(-1.0, 1.0));
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::hopfield_energy;
    use proptest::prelude::*;

    fn pat(b: &[i8]) -> Pattern {
        Pattern::new(b.to_vec()).unwrap()
    }

    pub(crate) fn two_patterns() -> PatternSet {
        PatternSet::new(vec![pat(&[1, -1, 1, -1]), pat(&[1, 1, -1, -1])]).unwrap()
    }

    #[test]
    fn pattern_phases() {
        assert_eq!(pattern_to_phases(&pat(&[1, -1, 1, -1])).0, vec![0.0, PI, 0.0, PI]);
        assert_eq!(pattern_to_phases(&pat(&[1, 1, -1, -1])).0, vec![0.0, 0.0, PI, PI]);
        assert_eq!(pattern_to_phases(&pat(&[1, 1, 1])).0, vec![0.0; 3]);
    }

    #[test]
    fn invalid_patterns_rejected() {
        assert!(Pattern::new(vec![1, 0, -1]).is_err());
        assert!(Pattern::new(vec![]).is_err());
        assert!(PatternSet::new(vec![]).is_err());
        assert!(PatternSet::new(vec![pat(&[1, 1]), pat(&[1])]).is_err());
    }

    #[test]
    fn binarize_examples() {
        let expect = pat(&[1, -1, 1, -1]);
        assert_eq!(binarize(&PhaseState::new(vec![0.0, PI, 0.0, PI]), 0), expect);
        assert_eq!(
            binarize(&PhaseState::new(vec![0.1, PI - 0.1, 0.05, PI + 0.2]), 0),
            expect
        );
        assert_eq!(binarize(&PhaseState::new(vec![PI, 0.0, PI, 0.0]), 0), expect);
        // ties at ±π/2 go to +1
        assert_eq!(binarize(&PhaseState::new(vec![0.0, PI / 2.0]), 0), pat(&[1, 1]));
    }

    #[test]
    fn two_pattern_outer_product() {
        let k = outer_product_weights(&two_patterns(), 1.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if (i, j) == (0, 3) || (i, j) == (3, 0) || (i, j) == (1, 2) || (i, j) == (2, 1) {
                    -1.0
                } else {
                    0.0
                };
                assert_eq!(k.get(i, j), expect, "({i},{j})");
            }
        }
    }

    #[test]
    fn single_pattern_and_zero_scale() {
        let ones = PatternSet::new(vec![pat(&[1, 1, 1, 1])]).unwrap();
        let k = outer_product_weights(&ones, 1.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(k.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
        let z = outer_product_weights(&two_patterns(), 0.0).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn scaled_outer_product_is_clipped() {
        let k = outer_product_weights(&two_patterns(), 3.0).unwrap();
        assert_eq!(k.get(0, 3), -1.0);
        assert_eq!(k.max_abs(), 1.0);
    }

    #[test]
    fn stored_patterns_are_energy_minima_by_enumeration() {
        let ps = two_patterns();
        let k = outer_product_weights(&ps, 1.0).unwrap();
        let mut energies = Vec::new();
        for code in 0..16u32 {
            let bits: Vec<i8> = (0..4).map(|i| if code >> i & 1 == 1 { -1 } else { 1 }).collect();
            let p = pat(&bits);
            energies.push((hopfield_energy(&pattern_to_phases(&p), &k), p));
        }
        let min = energies.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
        let max = energies.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        assert!((min + 2.0).abs() < 1e-12);
        assert!((max - 2.0).abs() < 1e-12);
        for p in ps.patterns() {
            for q in [p.clone(), p.negated()] {
                let e = energies.iter().find(|(_, r)| *r == q).unwrap().0;
                assert!((e - min).abs() < 1e-12);
            }
        }
        let e_bad = energies.iter().find(|(_, r)| *r == pat(&[1, -1, -1, 1])).unwrap().0;
        assert!((e_bad - 2.0).abs() < 1e-12);
    }

    fn arb_pattern(n: usize) -> impl Strategy<Value = Pattern> {
        prop::collection::vec(prop::bool::ANY, n)
            .prop_map(|v| Pattern::new(v.into_iter().map(|b| if b { 1 } else { -1 }).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn binarize_round_trip(p in (2usize..10).prop_flat_map(arb_pattern)) {
            let r = p.bits().iter().position(|&b| b == 1);
            if let Some(r) = r {
                prop_assert_eq!(binarize(&pattern_to_phases(&p), r), p);
            } else {
                // all −1: the reference sits at π, readout is the negation
                prop_assert_eq!(binarize(&pattern_to_phases(&p), 0), p.negated());
            }
        }

        #[test]
        fn outer_product_sign_symmetric(
            ps in (2usize..8).prop_flat_map(|n| prop::collection::vec(arb_pattern(n), 1..4)),
            scale in 0.0f64..2.0,
        ) {
            let set = PatternSet::new(ps.clone()).unwrap();
            let neg = PatternSet::new(ps.iter().map(|p| p.negated()).collect()).unwrap();
            let a = outer_product_weights(&set, scale).unwrap();
            let b = outer_product_weights(&neg, scale).unwrap();
            prop_assert_eq!(a.rows(), b.rows());
            prop_assert!(a.is_symmetric());
            prop_assert!(a.max_abs() <= 1.0);
        }
    }
}
