//! Brute-force reference computations used to cross-check the chart code.
//!
//! These work directly on the original (possibly non-CNF) rules and share no
//! code with [`crate::chart`] or the CNF converter.

use std::collections::HashMap;

use crate::grammar::{Pcfg, Symbol};
use crate::tree::Sentence;

/// `P(s)` under an arbitrary grammar by memoised span recursion over the
/// original rule bodies.
///
/// Requires that no nonterminal other than the start derives ε, that the
/// start does not occur in rule bodies when it has an ε rule, and that unit
/// rules form no cycle; these keep the recursion well-founded.
pub fn sentence_probability(g: &Pcfg, s: &Sentence) -> f64 {
    if s.is_empty() {
        return g.rules_for(g.start()).filter(|r| r.rhs().is_empty()).map(|r| r.prob()).sum();
    }
    let mut o = Oracle { g, tokens: s.tokens(), memo: HashMap::new(), seq_memo: HashMap::new() };
    o.derive(g.start(), 0, s.len())
}

struct Oracle<'a> {
    g: &'a Pcfg,
    tokens: &'a [String],
    memo: HashMap<(&'a str, usize, usize), f64>,
    seq_memo: HashMap<(usize, usize, usize, usize), f64>,
}

impl<'a> Oracle<'a> {
    fn derive(&mut self, a: &'a str, i: usize, j: usize) -> f64 {
        if let Some(&p) = self.memo.get(&(a, i, j)) {
            return p;
        }
        let mut total = 0.0;
        for (ri, r) in self.g.rules().iter().enumerate() {
            if r.lhs() != a || r.rhs().is_empty() {
                continue;
            }
            total += r.prob() * self.sequence(ri, 0, i, j);
        }
        self.memo.insert((a, i, j), total);
        total
    }

    /// Probability that `rhs[pos..]` of rule `ri` derives tokens `[i, j)`,
    /// every symbol covering at least one token.
    fn sequence(&mut self, ri: usize, pos: usize, i: usize, j: usize) -> f64 {
        let rule = &self.g.rules()[ri];
        let rest = rule.rhs().len() - pos;
        if rest == 0 {
            return if i == j { 1.0 } else { 0.0 };
        }
        if j - i < rest {
            return 0.0;
        }
        if let Some(&p) = self.seq_memo.get(&(ri, pos, i, j)) {
            return p;
        }
        let sym = &rule.rhs()[pos];
        let mut total = 0.0;
        // the last symbol must take the whole remaining span
        let ends: Vec<usize> = if rest == 1 { vec![j] } else { (i + 1..=j - (rest - 1)).collect() };
        for k in ends {
            let head = match sym {
                Symbol::Terminal(t) => {
                    if k == i + 1 && self.tokens[i] == *t {
                        1.0
                    } else {
                        0.0
                    }
                }
                Symbol::Nonterminal(n) => self.derive(n.as_str(), i, k),
            };
            if head > 0.0 {
                total += head * self.sequence(ri, pos + 1, k, j);
            }
        }
        self.seq_memo.insert((ri, pos, i, j), total);
        total
    }
}
