//! Max-likelihood parsing and sentence probabilities for CNF grammars.
//!
//! [`cky_viterbi`] and [`inside_log_prob`] fill a span chart; [`enumerate_parses`]
//! is a separate top-down recursion over (nonterminal, span) that never reads
//! the Viterbi chart, so the two can check each other.

use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::grammar::CnfPcfg;
use crate::tree::{ParseTree, Sentence};

/// Relative slack under which two Viterbi scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("empty sentence")]
    EmptySentence,
    #[error("unparseable sentence: {reason} (span [{start}, {end}))")]
    Unparseable { start: usize, end: usize, reason: String },
    #[error("not in language")]
    NotInLanguage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredParse {
    pub tree: ParseTree,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseForest {
    /// Sorted by descending log-probability.
    pub parses: Vec<ScoredParse>,
    pub truncated: bool,
}

impl fmt::Display for ScoredParse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.tree, self.log_prob)
    }
}

fn beats(candidate: f64, best: f64) -> bool {
    candidate > best + TIE_TOLERANCE * best.abs().max(1.0)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[derive(Clone, Copy)]
enum Back {
    Lexical,
    Binary { split: usize, left: usize, right: usize },
}

/// Chart indexed by (start, end) with one slot per nonterminal.
struct Chart<T> {
    n: usize,
    nts: usize,
    cells: Vec<T>,
}

impl<T: Clone> Chart<T> {
    fn new(n: usize, nts: usize, init: T) -> Self {
        Chart { n, nts, cells: vec![init; (n + 1) * (n + 1) * nts] }
    }

    fn at(&self, i: usize, j: usize, a: usize) -> &T {
        &self.cells[(i * (self.n + 1) + j) * self.nts + a]
    }

    fn at_mut(&mut self, i: usize, j: usize, a: usize) -> &mut T {
        &mut self.cells[(i * (self.n + 1) + j) * self.nts + a]
    }
}

/// Points at the first token no preterminal covers, or else the whole span.
fn diagnose(g: &CnfPcfg, s: &Sentence) -> ChartError {
    for (i, tok) in s.tokens().iter().enumerate() {
        if !g.compiled().lexical.contains_key(tok) {
            return ChartError::Unparseable {
                start: i,
                end: i + 1,
                reason: format!("no rule rewrites to '{tok}'"),
            };
        }
    }
    ChartError::Unparseable {
        start: 0,
        end: s.len(),
        reason: format!("{} does not derive the sentence", g.start()),
    }
}

/// The highest-probability parse. Ties go to the smaller split point, then
/// to the rule declared first.
pub fn cky_viterbi(g: &CnfPcfg, s: &Sentence) -> Result<ScoredParse, ChartError> {
    if s.is_empty() {
        return Err(ChartError::EmptySentence);
    }
    let c = g.compiled();
    let n = s.len();
    let mut chart: Chart<Option<(f64, Back)>> = Chart::new(n, g.num_nonterminals(), None);
    for (i, tok) in s.tokens().iter().enumerate() {
        for lex in c.lexical.get(tok).map(Vec::as_slice).unwrap_or(&[]) {
            let slot = chart.at_mut(i, i + 1, lex.lhs);
            if slot.is_none_or(|(best, _)| beats(lex.log_prob, best)) {
                *slot = Some((lex.log_prob, Back::Lexical));
            }
        }
    }
    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width;
            for k in i + 1..j {
                for r in &c.binary {
                    let (Some((lb, _)), Some((rb, _))) = (*chart.at(i, k, r.left), *chart.at(k, j, r.right))
                    else {
                        continue;
                    };
                    let cand = r.log_prob + lb + rb;
                    let slot = chart.at_mut(i, j, r.lhs);
                    if slot.is_none_or(|(best, _)| beats(cand, best)) {
                        *slot = Some((cand, Back::Binary { split: k, left: r.left, right: r.right }));
                    }
                }
            }
        }
    }
    if chart.at(0, n, c.start).is_none() {
        return Err(diagnose(g, s));
    }

    fn build(g: &CnfPcfg, s: &Sentence, chart: &Chart<Option<(f64, Back)>>, i: usize, j: usize, a: usize) -> ParseTree {
        let (_, back) = chart.at(i, j, a).expect("backpointer to a filled cell");
        let label = g.nt_name(a);
        match back {
            Back::Lexical => ParseTree::node(label, vec![ParseTree::leaf(s.tokens()[i].clone())]),
            Back::Binary { split, left, right } => ParseTree::node(
                label,
                vec![build(g, s, chart, i, split, left), build(g, s, chart, split, j, right)],
            ),
        }
    }
    let tree = build(g, s, &chart, 0, n, c.start);
    let log_prob = g.tree_log_prob(&tree).expect("Viterbi tree uses grammar rules");
    Ok(ScoredParse { tree, log_prob })
}

/// `log P(s)` summed over all parses.
pub fn inside_log_prob(g: &CnfPcfg, s: &Sentence) -> Result<f64, ChartError> {
    let c = g.compiled();
    if s.is_empty() {
        return c.empty_log_prob.ok_or(ChartError::NotInLanguage);
    }
    let n = s.len();
    let mut chart: Chart<f64> = Chart::new(n, g.num_nonterminals(), f64::NEG_INFINITY);
    for (i, tok) in s.tokens().iter().enumerate() {
        for lex in c.lexical.get(tok).map(Vec::as_slice).unwrap_or(&[]) {
            let slot = chart.at_mut(i, i + 1, lex.lhs);
            *slot = log_add(*slot, lex.log_prob);
        }
    }
    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width;
            for k in i + 1..j {
                for r in &c.binary {
                    let lb = *chart.at(i, k, r.left);
                    let rb = *chart.at(k, j, r.right);
                    if lb == f64::NEG_INFINITY || rb == f64::NEG_INFINITY {
                        continue;
                    }
                    let slot = chart.at_mut(i, j, r.lhs);
                    *slot = log_add(*slot, r.log_prob + lb + rb);
                }
            }
        }
    }
    let total = *chart.at(0, n, c.start);
    if total == f64::NEG_INFINITY {
        Err(ChartError::NotInLanguage)
    } else {
        Ok(total)
    }
}

/// Number of parses, saturating at `u128::MAX`.
pub fn count_parses(g: &CnfPcfg, s: &Sentence) -> u128 {
    let mut e = Enumerator::new(g, s, 0);
    if s.is_empty() {
        return 0;
    }
    e.count(g.compiled().start, 0, s.len())
}

/// Every parse when there are at most `cap`, otherwise the `cap` best.
pub fn enumerate_parses(g: &CnfPcfg, s: &Sentence, cap: usize) -> Result<ParseForest, ChartError> {
    if s.is_empty() {
        return Err(ChartError::EmptySentence);
    }
    let cap = cap.max(1);
    let mut e = Enumerator::new(g, s, cap);
    let start = g.compiled().start;
    let total = e.count(start, 0, s.len());
    if total == 0 {
        return Err(diagnose(g, s));
    }
    let parses = e
        .parses(start, 0, s.len())
        .iter()
        .map(|(lp, d)| ScoredParse { tree: e.build(d), log_prob: *lp })
        .collect();
    Ok(ParseForest { parses, truncated: total > cap as u128 })
}

/// A derivation with shared sub-derivations; trees are built only for the
/// parses handed back to the caller.
enum Derivation {
    Lexical { lhs: usize, pos: usize },
    Binary { lhs: usize, left: Rc<Derivation>, right: Rc<Derivation> },
}

type Derivations = Vec<(f64, Rc<Derivation>)>;

struct Enumerator<'a> {
    g: &'a CnfPcfg,
    s: &'a Sentence,
    cap: usize,
    /// Binary rule indices by left-hand side.
    by_lhs: Vec<Vec<usize>>,
    memo: Vec<Option<Rc<Derivations>>>,
    counts: Vec<Option<u128>>,
}

impl<'a> Enumerator<'a> {
    fn new(g: &'a CnfPcfg, s: &'a Sentence, cap: usize) -> Self {
        let nts = g.num_nonterminals();
        let mut by_lhs = vec![Vec::new(); nts];
        for (i, r) in g.compiled().binary.iter().enumerate() {
            by_lhs[r.lhs].push(i);
        }
        let cells = nts * (s.len() + 1) * (s.len() + 1);
        Enumerator { g, s, cap, by_lhs, memo: vec![None; cells], counts: vec![None; cells] }
    }

    fn cell(&self, a: usize, i: usize, j: usize) -> usize {
        let w = self.s.len() + 1;
        (a * w + i) * w + j
    }

    fn count(&mut self, a: usize, i: usize, j: usize) -> u128 {
        let cell = self.cell(a, i, j);
        if let Some(c) = self.counts[cell] {
            return c;
        }
        let c = self.g.compiled();
        let mut total: u128 = 0;
        if j == i + 1 {
            let tok = &self.s.tokens()[i];
            total = c.lexical.get(tok).map_or(0, |v| v.iter().filter(|l| l.lhs == a).count() as u128);
        } else {
            for ri in 0..self.by_lhs[a].len() {
                let r = &c.binary[self.by_lhs[a][ri]];
                for k in i + 1..j {
                    let left = self.count(r.left, i, k);
                    if left == 0 {
                        continue;
                    }
                    let right = self.count(r.right, k, j);
                    total = total.saturating_add(left.saturating_mul(right));
                }
            }
        }
        self.counts[cell] = Some(total);
        total
    }

    /// All derivations of `a` over `[i, j)`, best first, pruned to `cap`.
    /// Pruning keeps the global top-`cap`: a sub-derivation outside its
    /// cell's top-`cap` is beaten by `cap` alternatives in any context.
    fn parses(&mut self, a: usize, i: usize, j: usize) -> Rc<Derivations> {
        let cell = self.cell(a, i, j);
        if let Some(v) = &self.memo[cell] {
            return v.clone();
        }
        let c = self.g.compiled();
        let mut out: Derivations = Vec::new();
        if j == i + 1 {
            let tok = &self.s.tokens()[i];
            for lex in c.lexical.get(tok).map(Vec::as_slice).unwrap_or(&[]) {
                if lex.lhs == a {
                    out.push((lex.log_prob, Rc::new(Derivation::Lexical { lhs: a, pos: i })));
                }
            }
        } else {
            for k in i + 1..j {
                for ri in 0..self.by_lhs[a].len() {
                    let r = &c.binary[self.by_lhs[a][ri]];
                    if self.count(r.left, i, k) == 0 || self.count(r.right, k, j) == 0 {
                        continue;
                    }
                    let left = self.parses(r.left, i, k);
                    let right = self.parses(r.right, k, j);
                    for (lp, ld) in left.iter() {
                        for (rp, rd) in right.iter() {
                            let d = Derivation::Binary { lhs: a, left: ld.clone(), right: rd.clone() };
                            out.push((r.log_prob + lp + rp, Rc::new(d)));
                        }
                    }
                }
            }
        }
        out.sort_by(|x, y| y.0.total_cmp(&x.0));
        out.truncate(self.cap);
        let out = Rc::new(out);
        self.memo[cell] = Some(out.clone());
        out
    }

    fn build(&self, d: &Derivation) -> ParseTree {
        match d {
            Derivation::Lexical { lhs, pos } => {
                ParseTree::node(self.g.nt_name(*lhs), vec![ParseTree::leaf(self.s.tokens()[*pos].clone())])
            }
            Derivation::Binary { lhs, left, right } => {
                ParseTree::node(self.g.nt_name(*lhs), vec![self.build(left), self.build(right)])
            }
        }
    }
}
