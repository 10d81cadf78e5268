//! PCFG representation, validation, CNF conversion, sampling and scoring.

mod cnf;
mod sample;
mod text;

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::ParseTree;

pub use cnf::to_cnf;
pub use sample::{sample, Sampler, DEFAULT_EXPANSION_CAP};
pub use text::parse_grammar;

/// Tolerance for the per-lhs probability sum check.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("grammar has no rules")]
    NoRules,
    #[error("empty language")]
    EmptyLanguage,
    #[error("invalid grammar:\n{0}")]
    Invalid(ValidationReport<Violation>),
    #[error("unit cycle through {}", .0.join(" -> "))]
    UnitCycle(Vec<String>),
    #[error("rule {0} is not in Chomsky normal form")]
    NotCnf(String),
    #[error("derivation cap exceeded ({0} expansions)")]
    DerivationCapExceeded(usize),
    #[error("no rules for nonterminal {0}")]
    NoRulesFor(String),
    #[error("no rule {0}")]
    NoMatchingRule(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    Terminal(String),
    Nonterminal(String),
}

impl Symbol {
    pub fn t(name: impl Into<String>) -> Self {
        Symbol::Terminal(name.into())
    }

    pub fn nt(name: impl Into<String>) -> Self {
        Symbol::Nonterminal(name.into())
    }

    pub fn name(&self) -> &str {
        match self {
            Symbol::Terminal(n) | Symbol::Nonterminal(n) => n,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Symbol::Terminal(_))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Terminal(n) => write!(f, "'{n}'"),
            Symbol::Nonterminal(n) => f.write_str(n),
        }
    }
}

/// A production `lhs -> rhs` with its conditional probability.
///
/// The probability is kept in both linear and log form; scoring composes the
/// log form.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    lhs: String,
    rhs: Vec<Symbol>,
    prob: f64,
    log_prob: f64,
}

impl Rule {
    pub fn new(lhs: impl Into<String>, rhs: Vec<Symbol>, prob: f64) -> Self {
        Rule { lhs: lhs.into(), rhs, prob, log_prob: prob.ln() }
    }

    pub fn lhs(&self) -> &str {
        &self.lhs
    }

    pub fn rhs(&self) -> &[Symbol] {
        &self.rhs
    }

    pub fn prob(&self) -> f64 {
        self.prob
    }

    pub fn log_prob(&self) -> f64 {
        self.log_prob
    }

    fn production(&self) -> String {
        let rhs = if self.rhs.is_empty() {
            "ε".to_string()
        } else {
            self.rhs.iter().map(Symbol::to_string).collect::<Vec<_>>().join(" ")
        };
        format!("{} -> {}", self.lhs, rhs)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @ {}", self.production(), self.prob)
    }
}

/// Problems found by [`Pcfg::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ProbabilitySum { lhs: String, sum: f64 },
    ProbabilityRange { rule: String, prob: f64 },
    UndeclaredSymbol(String),
    NamespaceClash(String),
    EmptyRhs(String),
    DuplicateRule(String),
    Unreachable(String),
    Nonproductive(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ProbabilitySum { lhs, sum } => write!(f, "probabilities for {lhs} sum to {sum}"),
            Violation::ProbabilityRange { rule, prob } => {
                write!(f, "probability {prob} of {rule} is outside (0, 1]")
            }
            Violation::UndeclaredSymbol(s) => write!(f, "undeclared symbol {s}"),
            Violation::NamespaceClash(s) => write!(f, "{s} is both a terminal and a nonterminal"),
            Violation::EmptyRhs(lhs) => write!(f, "empty right-hand side for non-start symbol {lhs}"),
            Violation::DuplicateRule(r) => write!(f, "duplicate rule {r}"),
            Violation::Unreachable(s) => write!(f, "unreachable nonterminal {s}"),
            Violation::Nonproductive(s) => write!(f, "nonproductive nonterminal {s}"),
        }
    }
}

/// A list of violations; empty means well-formed.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport<V> {
    pub violations: Vec<V>,
}

impl<V> ValidationReport<V> {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl<V: fmt::Display> fmt::Display for ValidationReport<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok: no violations");
        }
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        Ok(())
    }
}

/// A probabilistic context-free grammar.
#[derive(Debug, Clone)]
pub struct Pcfg {
    terminals: BTreeSet<String>,
    nonterminals: Vec<String>,
    start: String,
    rules: Vec<Rule>,
    index: HashMap<(String, Vec<Symbol>), usize>,
}

impl PartialEq for Pcfg {
    fn eq(&self, other: &Self) -> bool {
        self.terminals == other.terminals
            && self.nonterminals == other.nonterminals
            && self.start == other.start
            && self.rules == other.rules
    }
}

impl Pcfg {
    /// Declares terminals from the rule bodies and nonterminals from the start
    /// symbol plus every left-hand side, in order of first appearance.
    pub fn new(start: impl Into<String>, rules: Vec<Rule>) -> Self {
        let start = start.into();
        let terminals = rules
            .iter()
            .flat_map(|r| r.rhs.iter())
            .filter(|s| s.is_terminal())
            .map(|s| s.name().to_string())
            .collect();
        let mut nonterminals = vec![start.clone()];
        for r in &rules {
            if !nonterminals.contains(&r.lhs) {
                nonterminals.push(r.lhs.clone());
            }
        }
        Self::with_symbols(terminals, nonterminals, start, rules)
    }

    pub fn with_symbols(
        terminals: BTreeSet<String>,
        nonterminals: Vec<String>,
        start: impl Into<String>,
        rules: Vec<Rule>,
    ) -> Self {
        let mut index = HashMap::new();
        for (i, r) in rules.iter().enumerate() {
            index.entry((r.lhs.clone(), r.rhs.clone())).or_insert(i);
        }
        Pcfg { terminals, nonterminals, start: start.into(), rules, index }
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn terminals(&self) -> &BTreeSet<String> {
        &self.terminals
    }

    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn is_nonterminal(&self, name: &str) -> bool {
        self.nonterminals.iter().any(|n| n == name)
    }

    pub fn rules_for<'a>(&'a self, lhs: &'a str) -> impl Iterator<Item = &'a Rule> + 'a {
        self.rules.iter().filter(move |r| r.lhs == lhs)
    }

    pub fn find_rule(&self, lhs: &str, rhs: &[Symbol]) -> Option<&Rule> {
        self.index.get(&(lhs.to_string(), rhs.to_vec())).map(|&i| &self.rules[i])
    }

    /// Lists every well-formedness violation; never fails.
    pub fn validate(&self) -> ValidationReport<Violation> {
        let mut violations = Vec::new();
        let nts: HashSet<&str> = self.nonterminals.iter().map(String::as_str).collect();

        for name in &self.terminals {
            if nts.contains(name.as_str()) {
                violations.push(Violation::NamespaceClash(name.clone()));
            }
        }

        let mut sums: Vec<(&str, f64)> = Vec::new();
        let mut seen = HashSet::new();
        let mut undeclared = BTreeSet::new();
        for r in &self.rules {
            if !(r.prob > 0.0 && r.prob <= 1.0) {
                violations.push(Violation::ProbabilityRange { rule: r.production(), prob: r.prob });
            }
            match sums.iter_mut().find(|(l, _)| *l == r.lhs) {
                Some((_, s)) => *s += r.prob,
                None => sums.push((&r.lhs, r.prob)),
            }
            if !seen.insert((&r.lhs, &r.rhs)) {
                violations.push(Violation::DuplicateRule(r.production()));
            }
            if r.rhs.is_empty() && r.lhs != self.start {
                violations.push(Violation::EmptyRhs(r.lhs.clone()));
            }
            if !nts.contains(r.lhs.as_str()) {
                undeclared.insert(r.lhs.clone());
            }
            for s in &r.rhs {
                let declared = match s {
                    Symbol::Terminal(t) => self.terminals.contains(t),
                    Symbol::Nonterminal(n) => nts.contains(n.as_str()),
                };
                if !declared {
                    undeclared.insert(s.name().to_string());
                }
            }
        }
        violations.extend(undeclared.into_iter().map(Violation::UndeclaredSymbol));
        for (lhs, sum) in sums {
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                violations.push(Violation::ProbabilitySum { lhs: lhs.to_string(), sum });
            }
        }

        let reachable = self.reachable();
        let productive = self.productive();
        for n in &self.nonterminals {
            if !reachable.contains(n.as_str()) {
                violations.push(Violation::Unreachable(n.clone()));
            }
        }
        for n in &self.nonterminals {
            if !productive.contains(n.as_str()) {
                violations.push(Violation::Nonproductive(n.clone()));
            }
        }
        ValidationReport { violations }
    }

    pub(crate) fn reachable(&self) -> HashSet<&str> {
        let mut seen: HashSet<&str> = HashSet::from([self.start.as_str()]);
        let mut queue = VecDeque::from([self.start.as_str()]);
        while let Some(a) = queue.pop_front() {
            for r in self.rules_for(a) {
                for s in &r.rhs {
                    if let Symbol::Nonterminal(b) = s {
                        if seen.insert(b.as_str()) {
                            queue.push_back(b.as_str());
                        }
                    }
                }
            }
        }
        seen
    }

    pub(crate) fn productive(&self) -> HashSet<&str> {
        let mut productive: HashSet<&str> = HashSet::new();
        loop {
            let before = productive.len();
            for r in &self.rules {
                if productive.contains(r.lhs.as_str()) {
                    continue;
                }
                let ok = r.rhs.iter().all(|s| match s {
                    Symbol::Terminal(t) => self.terminals.contains(t),
                    Symbol::Nonterminal(n) => productive.contains(n.as_str()),
                });
                if ok {
                    productive.insert(r.lhs.as_str());
                }
            }
            if productive.len() == before {
                return productive;
            }
        }
    }

    /// Sum of rule log-probabilities over the derivation `t`.
    pub fn tree_log_prob(&self, t: &ParseTree) -> Result<f64, GrammarError> {
        match t {
            ParseTree::Leaf(tok) => Err(GrammarError::NoMatchingRule(format!("for bare leaf '{tok}'"))),
            ParseTree::Node { label, children } => {
                let rhs: Vec<Symbol> = children
                    .iter()
                    .map(|c| match c {
                        ParseTree::Leaf(tok) => Symbol::t(tok.clone()),
                        ParseTree::Node { label, .. } => Symbol::nt(label.clone()),
                    })
                    .collect();
                let rule = self.find_rule(label, &rhs).ok_or_else(|| {
                    let body: Vec<String> = rhs.iter().map(Symbol::to_string).collect();
                    GrammarError::NoMatchingRule(format!("{label} -> {}", body.join(" ")))
                })?;
                let mut total = rule.log_prob;
                for c in children {
                    if !c.is_leaf() {
                        total += self.tree_log_prob(c)?;
                    }
                }
                Ok(total)
            }
        }
    }

    /// Every rule body reversed; the language is reversed accordingly.
    pub fn mirrored(&self) -> Pcfg {
        let rules = self
            .rules
            .iter()
            .map(|r| Rule::new(r.lhs.clone(), r.rhs.iter().rev().cloned().collect(), r.prob))
            .collect();
        Pcfg::with_symbols(self.terminals.clone(), self.nonterminals.clone(), self.start.clone(), rules)
    }
}

impl fmt::Display for Pcfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "start: {}", self.start)?;
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BinaryRule {
    pub lhs: usize,
    pub left: usize,
    pub right: usize,
    pub log_prob: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LexicalRule {
    pub lhs: usize,
    pub log_prob: f64,
}

/// A PCFG whose rules are all `A -> B C`, `A -> a` or `S -> ε`.
///
/// The start symbol may occur in a rule body as long as the grammar has no
/// `S -> ε` rule. Nonterminals are numbered in declaration order and rules
/// keep their declaration order, which fixes the Viterbi tie-break.
#[derive(Debug, Clone)]
pub struct CnfPcfg {
    grammar: Pcfg,
    compiled: Compiled,
}

impl PartialEq for CnfPcfg {
    fn eq(&self, other: &Self) -> bool {
        self.grammar == other.grammar
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Compiled {
    pub binary: Vec<BinaryRule>,
    pub lexical: HashMap<String, Vec<LexicalRule>>,
    pub start: usize,
    pub empty_log_prob: Option<f64>,
}

impl TryFrom<Pcfg> for CnfPcfg {
    type Error = GrammarError;

    fn try_from(grammar: Pcfg) -> Result<Self, Self::Error> {
        let nt_ids: HashMap<String, usize> =
            grammar.nonterminals.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let has_epsilon = grammar.rules.iter().any(|r| r.rhs.is_empty());
        let id_of = |n: &str, r: &Rule| {
            nt_ids.get(n).copied().ok_or_else(|| GrammarError::NotCnf(r.production()))
        };
        let start = nt_ids.get(&grammar.start).copied().ok_or_else(|| GrammarError::NoRulesFor(grammar.start.clone()))?;
        let mut compiled = Compiled { start, ..Compiled::default() };
        for r in &grammar.rules {
            let lhs = id_of(&r.lhs, r)?;
            match r.rhs.as_slice() {
                [] if r.lhs == grammar.start => compiled.empty_log_prob = Some(r.log_prob),
                [Symbol::Terminal(a)] => compiled
                    .lexical
                    .entry(a.clone())
                    .or_default()
                    .push(LexicalRule { lhs, log_prob: r.log_prob }),
                [Symbol::Nonterminal(b), Symbol::Nonterminal(c)] => {
                    if has_epsilon && (*b == grammar.start || *c == grammar.start) {
                        return Err(GrammarError::NotCnf(r.production()));
                    }
                    compiled.binary.push(BinaryRule {
                        lhs,
                        left: id_of(b, r)?,
                        right: id_of(c, r)?,
                        log_prob: r.log_prob,
                    });
                }
                _ => return Err(GrammarError::NotCnf(r.production())),
            }
        }
        Ok(CnfPcfg { grammar, compiled })
    }
}

impl CnfPcfg {
    pub fn grammar(&self) -> &Pcfg {
        &self.grammar
    }

    pub fn into_inner(self) -> Pcfg {
        self.grammar
    }

    pub(crate) fn compiled(&self) -> &Compiled {
        &self.compiled
    }

    pub(crate) fn nt_name(&self, id: usize) -> &str {
        &self.grammar.nonterminals[id]
    }

    pub fn num_nonterminals(&self) -> usize {
        self.grammar.nonterminals.len()
    }

    pub fn mirrored(&self) -> CnfPcfg {
        CnfPcfg::try_from(self.grammar.mirrored()).expect("mirroring preserves CNF")
    }
}

impl Deref for CnfPcfg {
    type Target = Pcfg;

    fn deref(&self) -> &Pcfg {
        &self.grammar
    }
}

impl fmt::Display for CnfPcfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.grammar.fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(text: &str) -> Pcfg {
        parse_grammar(text).unwrap()
    }

    #[test]
    fn single_rule_grammar_is_valid() {
        assert!(g("S -> 'a' @ 1.0").validate().is_clean());
    }

    #[test]
    fn undeclared_symbol_is_reported() {
        let report = g("S -> A B @ 1.0\nB -> 'b' @ 1").validate();
        let msgs: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        assert!(msgs.contains(&"undeclared symbol A".to_string()), "{msgs:?}");
    }

    #[test]
    fn probability_sum_is_reported() {
        let report = g("S -> 'a' @ 0.7").validate();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].to_string(), "probabilities for S sum to 0.7");
    }

    #[test]
    fn reachability_and_productivity() {
        let report = g("S -> 'a' @ 1\nU -> 'u' @ 1\nS2 -> S2 'x' @ 1").validate();
        let msgs: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        assert!(msgs.contains(&"unreachable nonterminal U".to_string()));
        assert!(msgs.contains(&"nonproductive nonterminal S2".to_string()));
    }

    #[test]
    fn epsilon_only_on_start() {
        let report = g("S -> A @ 1\nA -> @ 1").validate();
        assert!(report.violations.iter().any(|v| matches!(v, Violation::EmptyRhs(a) if a == "A")));
        assert!(g("S -> 'a' @ 0.5\nS -> ε @ 0.5").validate().is_clean());
    }

    #[test]
    fn tree_log_prob_examples() {
        let one = g("S -> 'a' @ 1");
        assert_eq!(one.tree_log_prob(&"(S a)".parse().unwrap()).unwrap(), 0.0);
        let err = one.tree_log_prob(&"(S b)".parse().unwrap()).unwrap_err();
        assert_eq!(err.to_string(), "no rule S -> 'b'");

        let ss = g("S -> S S @ 0.4\nS -> 'x' @ 0.6");
        let lp = ss.tree_log_prob(&"(S (S x) (S x))".parse().unwrap()).unwrap();
        assert!((lp - (0.4f64 * 0.6 * 0.6).ln()).abs() < 1e-12);
    }

    #[test]
    fn cnf_check() {
        assert!(CnfPcfg::try_from(g("S -> S S @ 0.4\nS -> 'x' @ 0.6")).is_ok());
        assert!(matches!(
            CnfPcfg::try_from(g("S -> 'a' 'b' @ 1")),
            Err(GrammarError::NotCnf(_))
        ));
        assert!(matches!(
            CnfPcfg::try_from(g("S -> S S @ 0.4\nS -> 'x' @ 0.5\nS -> @ 0.1")),
            Err(GrammarError::NotCnf(_))
        ));
    }
}
