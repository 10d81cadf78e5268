//! A sandbox for probabilistic context-free grammars and the parsers that
//! read tree structure off left-to-right context.
//!
//! - [`grammar`]: grammars, validation, the text format, CNF conversion and
//!   sampling.
//! - [`chart`]: CKY Viterbi, inside probabilities and parse enumeration.
//! - [`distance`] and [`gates`]: syntactic distances, master-gate vectors and
//!   the best predictors a restricted context admits.
//! - [`transition`]: the NT/SHIFT/REDUCE machine and restricted policies.
//! - [`lab`]: the right-influenced grammars and exhaustive certification.
//! - [`metrics`]: span F1 and represented probability mass.

pub mod chart;
pub mod distance;
pub mod gates;
pub mod gen;
pub mod grammar;
pub mod lab;
pub mod metrics;
pub mod oracle;
mod select;
pub mod transition;
pub mod tree;

pub use chart::{cky_viterbi, count_parses, enumerate_parses, inside_log_prob, ChartError, ParseForest, ScoredParse};
pub use distance::{
    context_key, distances_from_tree, fit_best_restricted_distance, induce_tree, ContextSpec, Direction,
    DistanceError, DistanceSeq, Fit, Induced, LeftContext, TabulatedPredictor,
};
pub use gates::{
    best_restricted_gate_distance, distances_from_gates, gates_from_tree, validate_gates, GateError, GateSeq,
    GateVector, GateViolation,
};
pub use grammar::{
    parse_grammar, sample, to_cnf, CnfPcfg, GrammarError, Pcfg, Rule, Sampler, Symbol, ValidationReport,
    Violation,
};
pub use lab::{
    build_right_influenced, enumerate_language, verify_theorem, LabError, Paradigm, RightInfluencedSpec,
    TheoremReport,
};
pub use metrics::{represented_mass, spans, unlabeled_f1, CorpusItem, Prediction, Prf};
pub use transition::{
    execute, fit_best_restricted_policy, oracle_transitions, PolicyContext, PolicyFit, Transition,
    TransitionError, TransitionPolicy, TransitionSeq,
};
pub use tree::{ParseTree, Sentence, TreeError};
