//! Master forget gates: monotone per-position vectors whose coordinate sum
//! encodes a syntactic distance.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{
    distance_problem, distances_from_tree, induce_tree, solve, ContextSpec, DistanceSeq, Fit, Induced,
    TabulatedPredictor,
};
use crate::grammar::ValidationReport;
use crate::metrics::{represented_mass, CorpusItem, Prediction};
use crate::tree::{ParseTree, Sentence, TreeError};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GateVector(pub Vec<f64>);

impl GateVector {
    /// `rank` zeros followed by ones, `dim` entries in total.
    pub fn step(rank: usize, dim: usize) -> Self {
        GateVector((0..dim).map(|j| if j < rank { 0.0 } else { 1.0 }).collect())
    }

    pub fn dims(&self) -> &[f64] {
        &self.0
    }
}

/// Gate vectors for positions `2..=n`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GateSeq(pub Vec<GateVector>);

#[derive(Debug, Clone, PartialEq)]
pub enum GateViolation {
    TooShort { position: usize, len: usize },
    UnevenDimension { position: usize, expected: usize, found: usize },
    OutOfRange { position: usize, dim: usize, value: f64 },
    FirstNotZero { position: usize, value: f64 },
    LastNotOne { position: usize, value: f64 },
    Monotonicity { position: usize, dim: usize },
}

impl fmt::Display for GateViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateViolation::TooShort { position, len } => {
                write!(f, "position {position}: {len} dims, need at least 2")
            }
            GateViolation::UnevenDimension { position, expected, found } => {
                write!(f, "position {position}: {found} dims, expected {expected}")
            }
            GateViolation::OutOfRange { position, dim, value } => {
                write!(f, "position {position}: dims[{dim}] = {value} outside [0, 1]")
            }
            GateViolation::FirstNotZero { position, value } => {
                write!(f, "position {position}: dims[1] ≠ 0 (got {value})")
            }
            GateViolation::LastNotOne { position, value } => {
                write!(f, "position {position}: dims[D] ≠ 1 (got {value})")
            }
            GateViolation::Monotonicity { position, dim } => {
                write!(f, "position {position}: monotonicity at dims {dim}→{}", dim + 1)
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("invalid gates:\n{0}")]
    Invalid(ValidationReport<GateViolation>),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("gates need a tree with at least 2 leaves")]
    TooFewLeaves,
}

/// Reports every range, endpoint, monotonicity and dimension problem.
/// Dimensions are 1-based in messages; positions start at 2.
pub fn validate_gates(g: &GateSeq) -> ValidationReport<GateViolation> {
    let mut violations = Vec::new();
    let expected = g.0.first().map(|v| v.0.len());
    for (i, v) in g.0.iter().enumerate() {
        let position = i + 2;
        let dims = &v.0;
        if let Some(expected) = expected {
            if dims.len() != expected {
                violations.push(GateViolation::UnevenDimension { position, expected, found: dims.len() });
            }
        }
        if dims.len() < 2 {
            violations.push(GateViolation::TooShort { position, len: dims.len() });
            continue;
        }
        for (j, &x) in dims.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                violations.push(GateViolation::OutOfRange { position, dim: j + 1, value: x });
            }
        }
        if dims[0] != 0.0 {
            violations.push(GateViolation::FirstNotZero { position, value: dims[0] });
        }
        let last = dims[dims.len() - 1];
        if last != 1.0 {
            violations.push(GateViolation::LastNotOne { position, value: last });
        }
        for j in 1..dims.len() {
            if dims[j - 1] > dims[j] {
                violations.push(GateViolation::Monotonicity { position, dim: j });
            }
        }
    }
    ValidationReport { violations }
}

/// `d_t = D - Σ_j f_{t,j}`.
pub fn distances_from_gates(g: &GateSeq) -> Result<DistanceSeq, GateError> {
    let report = validate_gates(g);
    if !report.is_clean() {
        return Err(GateError::Invalid(report));
    }
    Ok(DistanceSeq(g.0.iter().map(|v| v.0.len() as f64 - v.0.iter().sum::<f64>()).collect()))
}

/// Lossless gate encoding of a binary tree with `D = n`: position `t` gets
/// the dense rank `r_t` of its LCA distance and the vector `0^{r_t} 1^{D-r_t}`.
///
/// Dense ranking keeps the strict order inside every constituent, which is
/// all tree induction looks at; unrelated boundaries may share a rank.
pub fn gates_from_tree(t: &ParseTree) -> Result<GateSeq, GateError> {
    let d = distances_from_tree(t)?;
    let n = d.0.len() + 1;
    if n < 2 {
        return Err(GateError::TooFewLeaves);
    }
    let mut distinct: Vec<f64> = d.0.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let ranks = d.0.iter().map(|x| distinct.iter().position(|y| y == x).expect("value present") + 1);
    Ok(GateSeq(ranks.map(|r| GateVector::step(r, n)).collect()))
}

impl TabulatedPredictor<GateVector> {
    pub fn gates(&self, s: &Sentence) -> Option<GateSeq> {
        self.outputs(s).map(GateSeq)
    }

    pub fn predict(&self, s: &Sentence) -> Option<Induced> {
        let d = distances_from_gates(&self.gates(s)?).ok()?;
        induce_tree(s, &d).ok()
    }
}

/// The restricted optimum with outputs forced to be valid gate vectors.
///
/// Selection is the distance optimizer's; its integer levels `ℓ` become step
/// vectors of rank `ℓ + 1` in a shared dimension, and the reported mass comes
/// from running the gate predictor through the distance reduction.
pub fn best_restricted_gate_distance(corpus: &[CorpusItem], spec: &ContextSpec) -> Fit<GateVector> {
    let problem = distance_problem(corpus, spec);
    let weights: Vec<f64> = corpus.iter().map(|c| c.prob).collect();
    let solved = solve(&problem, &weights);
    let dim = solved.levels.iter().copied().max().unwrap_or(0) + 2;
    let table: BTreeMap<String, GateVector> = problem
        .keys
        .iter()
        .enumerate()
        .map(|(v, k)| (k.clone(), GateVector::step(solved.levels[v] + 1, dim)))
        .collect();
    let predictor = TabulatedPredictor { spec: *spec, table };
    let mass = represented_mass(corpus, |s| predictor.predict(s).map(Prediction::from));
    Fit {
        predictor,
        represented_mass: mass,
        optimum: solved.selection_mass,
        exact: solved.exact,
        selected: solved.selected,
    }
}
