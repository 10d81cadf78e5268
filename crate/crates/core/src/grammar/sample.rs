//! Seeded top-down sampling of derivations.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GrammarError, Pcfg, Symbol};
use crate::tree::{ParseTree, Sentence};

pub const DEFAULT_EXPANSION_CAP: usize = 10_000;

/// Draws independent derivations from a grammar with a reproducible stream.
pub struct Sampler<'g> {
    grammar: &'g Pcfg,
    by_lhs: HashMap<&'g str, Vec<usize>>,
    rng: ChaCha8Rng,
    cap: usize,
}

struct Frame<'g> {
    label: &'g str,
    rhs: &'g [Symbol],
    next: usize,
    children: Vec<ParseTree>,
}

impl<'g> Sampler<'g> {
    pub fn new(grammar: &'g Pcfg, seed: u64) -> Self {
        let mut by_lhs: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, r) in grammar.rules().iter().enumerate() {
            by_lhs.entry(r.lhs()).or_default().push(i);
        }
        Sampler { grammar, by_lhs, rng: ChaCha8Rng::seed_from_u64(seed), cap: DEFAULT_EXPANSION_CAP }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    fn choose(&mut self, lhs: &str) -> Result<&'g [Symbol], GrammarError> {
        let candidates = self
            .by_lhs
            .get(lhs)
            .ok_or_else(|| GrammarError::NoRulesFor(lhs.to_string()))?;
        let rules = self.grammar.rules();
        let mut u: f64 = self.rng.gen();
        for &i in candidates {
            u -= rules[i].prob();
            if u < 0.0 {
                return Ok(rules[i].rhs());
            }
        }
        // rounding left a sliver of mass; give it to the last rule
        Ok(rules[*candidates.last().unwrap()].rhs())
    }

    /// One derivation tree and its yield. Uses an explicit stack, so deep
    /// derivations up to the cap do not recurse.
    pub fn sample(&mut self) -> Result<(ParseTree, Sentence), GrammarError> {
        let start: &'g str = self.grammar.start();
        let mut expansions = 1;
        let rhs = self.choose(start)?;
        let mut stack = vec![Frame { label: start, rhs, next: 0, children: Vec::new() }];
        loop {
            let top = stack.last_mut().unwrap();
            if top.next == top.rhs.len() {
                let done = stack.pop().unwrap();
                // an S -> ε derivation is the only childless node
                let tree = ParseTree::Node { label: done.label.to_string(), children: done.children };
                match stack.last_mut() {
                    Some(parent) => parent.children.push(tree),
                    None => {
                        let sentence = tree.yield_of();
                        return Ok((tree, sentence));
                    }
                }
                continue;
            }
            let rhs: &'g [Symbol] = top.rhs;
            let sym = &rhs[top.next];
            top.next += 1;
            match sym {
                Symbol::Terminal(t) => top.children.push(ParseTree::Leaf(t.clone())),
                Symbol::Nonterminal(n) => {
                    expansions += 1;
                    if expansions > self.cap {
                        return Err(GrammarError::DerivationCapExceeded(self.cap));
                    }
                    let rhs = self.choose(n)?;
                    stack.push(Frame { label: n, rhs, next: 0, children: Vec::new() });
                }
            }
        }
    }
}

/// A single derivation drawn with `seed`.
pub fn sample(g: &Pcfg, seed: u64) -> Result<(ParseTree, Sentence), GrammarError> {
    Sampler::new(g, seed).sample()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;

    #[test]
    fn deterministic_grammar() {
        let g = parse_grammar("S -> 'a' @ 1").unwrap();
        for seed in [0, 1, 99] {
            let (t, s) = sample(&g, seed).unwrap();
            assert_eq!(t.to_string(), "(S a)");
            assert_eq!(s.to_string(), "a");
        }
    }

    #[test]
    fn equal_seeds_give_identical_streams() {
        let g = parse_grammar("S -> S S @ 0.4\nS -> 'x' @ 0.6").unwrap();
        let mut a = Sampler::new(&g, 7);
        let mut b = Sampler::new(&g, 7);
        for _ in 0..200 {
            assert_eq!(a.sample().unwrap(), b.sample().unwrap());
        }
    }

    #[test]
    fn cap_is_enforced() {
        let g = parse_grammar("S -> S S @ 0.9\nS -> 'x' @ 0.1").unwrap();
        let mut s = Sampler::new(&g, 3).with_cap(50);
        let hit = (0..100).any(|_| matches!(s.sample(), Err(GrammarError::DerivationCapExceeded(50))));
        assert!(hit);
    }

    #[test]
    fn sampled_trees_score_under_the_grammar() {
        let g = parse_grammar("S -> S S @ 0.4\nS -> 'x' @ 0.6").unwrap();
        let mut s = Sampler::new(&g, 11);
        for _ in 0..100 {
            let (t, sent) = s.sample().unwrap();
            assert_eq!(t.yield_of(), sent);
            assert!(g.tree_log_prob(&t).unwrap() <= 0.0);
        }
    }
}
