//! Tree and grammar generators for exhaustive and randomized checks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::grammar::{CnfPcfg, Pcfg, Rule, Symbol};
use crate::tree::ParseTree;

fn leaves(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("w{i}")).collect()
}

/// Every full binary tree over `n` leaves (`w1..wn`), internal nodes `_X`.
/// There are Catalan(n-1) of them.
pub fn all_binary_shapes(n: usize) -> Vec<ParseTree> {
    all_labeled_binary_trees(n, &[crate::tree::UNLABELED])
}

/// Every binary tree over `n` leaves with each internal node labeled from
/// `labels`.
pub fn all_labeled_binary_trees(n: usize, labels: &[&str]) -> Vec<ParseTree> {
    fn build(tokens: &[String], labels: &[&str]) -> Vec<ParseTree> {
        if tokens.len() == 1 {
            return vec![ParseTree::leaf(tokens[0].clone())];
        }
        let mut out = Vec::new();
        for k in 1..tokens.len() {
            let left = build(&tokens[..k], labels);
            let right = build(&tokens[k..], labels);
            for l in &left {
                for r in &right {
                    for label in labels {
                        out.push(ParseTree::node(*label, vec![l.clone(), r.clone()]));
                    }
                }
            }
        }
        out
    }
    if n == 0 {
        return Vec::new();
    }
    build(&leaves(n), labels)
}

/// A random binary tree over `n` leaves, splitting each span uniformly.
pub fn random_binary_tree<R: Rng>(rng: &mut R, n: usize) -> ParseTree {
    random_labeled_tree(rng, n, &[crate::tree::UNLABELED])
}

pub fn random_labeled_tree<R: Rng>(rng: &mut R, n: usize, labels: &[&str]) -> ParseTree {
    fn build<R: Rng>(rng: &mut R, tokens: &[String], labels: &[&str]) -> ParseTree {
        if tokens.len() == 1 {
            return ParseTree::leaf(tokens[0].clone());
        }
        let k = rng.gen_range(1..tokens.len());
        let label = *labels.choose(rng).expect("at least one label");
        let left = build(rng, &tokens[..k], labels);
        let right = build(rng, &tokens[k..], labels);
        ParseTree::node(label, vec![left, right])
    }
    assert!(n > 0, "trees need at least one leaf");
    build(rng, &leaves(n), labels)
}

fn normalized<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Keeps only rules of nonterminals reachable from the start.
fn reachable_only(start: &str, rules: Vec<Rule>) -> Pcfg {
    let g = Pcfg::new(start, rules.clone());
    let keep = g.reachable();
    Pcfg::new(start, rules.into_iter().filter(|r| keep.contains(r.lhs())).collect())
}

/// A random CNF grammar with up to `max_nt` nonterminals and `max_t`
/// terminals. Every nonterminal has a lexical rule, so all are productive.
pub fn random_cnf_grammar<R: Rng>(rng: &mut R, max_nt: usize, max_t: usize) -> CnfPcfg {
    let n_nt = rng.gen_range(1..=max_nt.max(1));
    let n_t = rng.gen_range(1..=max_t.max(1));
    let nts: Vec<String> = (0..n_nt).map(|i| if i == 0 { "S".to_string() } else { format!("N{i}") }).collect();
    let ts: Vec<String> = (0..n_t).map(|i| format!("t{i}")).collect();
    let mut rules = Vec::new();
    for a in &nts {
        let mut bodies: Vec<Vec<Symbol>> = Vec::new();
        let n_lex = rng.gen_range(1..=2.min(n_t));
        for t in ts.choose_multiple(rng, n_lex) {
            bodies.push(vec![Symbol::t(t)]);
        }
        let n_bin = rng.gen_range(1..=2);
        for _ in 0..n_bin {
            let body = vec![Symbol::nt(nts.choose(rng).unwrap()), Symbol::nt(nts.choose(rng).unwrap())];
            if !bodies.contains(&body) {
                bodies.push(body);
            }
        }
        for (body, p) in bodies.iter().zip(normalized(rng, bodies.len())) {
            rules.push(Rule::new(a.clone(), body.clone(), p));
        }
    }
    CnfPcfg::try_from(reachable_only("S", rules)).expect("generated rules are CNF")
}

/// A random grammar outside CNF: bodies of length 1 to 4 mixing terminals and
/// nonterminals, unit rules (only towards later nonterminals, so they form no
/// cycle) and terminal-only bodies guaranteeing productivity.
pub fn random_non_cnf_grammar<R: Rng>(rng: &mut R, max_nt: usize, max_t: usize) -> Pcfg {
    let n_nt = rng.gen_range(2..=max_nt.max(2));
    let n_t = rng.gen_range(1..=max_t.max(1));
    let nts: Vec<String> = (0..n_nt).map(|i| if i == 0 { "S".to_string() } else { format!("N{i}") }).collect();
    let ts: Vec<String> = (0..n_t).map(|i| format!("t{i}")).collect();
    let mut rules = Vec::new();
    for (i, a) in nts.iter().enumerate() {
        let mut bodies: Vec<Vec<Symbol>> = Vec::new();
        let len = rng.gen_range(1..=3);
        bodies.push((0..len).map(|_| Symbol::t(ts.choose(rng).unwrap())).collect());
        if i + 1 < n_nt && rng.gen_bool(0.7) {
            bodies.push(vec![Symbol::nt(&nts[rng.gen_range(i + 1..n_nt)])]);
        }
        for _ in 0..rng.gen_range(1..=2) {
            let len = rng.gen_range(2..=4);
            let body: Vec<Symbol> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        Symbol::nt(nts.choose(rng).unwrap())
                    } else {
                        Symbol::t(ts.choose(rng).unwrap())
                    }
                })
                .collect();
            bodies.push(body);
        }
        bodies.dedup();
        let mut unique: Vec<Vec<Symbol>> = Vec::new();
        for b in bodies {
            if !unique.contains(&b) {
                unique.push(b);
            }
        }
        for (body, p) in unique.iter().zip(normalized(rng, unique.len())) {
            rules.push(Rule::new(a.clone(), body.clone(), p));
        }
    }
    reachable_only("S", rules)
}
