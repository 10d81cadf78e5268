//! Probability-preserving conversion to Chomsky normal form.
//!
//! Stages: ε-elimination (keeping only `S -> ε`), unit-rule folding, pruning,
//! right-branching binarization with `_BINk` nonterminals, and `_Tx`
//! preterminals for terminals inside binary bodies.

use std::collections::{HashMap, HashSet};

use super::{CnfPcfg, GrammarError, Pcfg, Rule, Symbol};

const FIXED_POINT_ITERS: usize = 1_000_000;

pub fn to_cnf(g: &Pcfg) -> Result<CnfPcfg, GrammarError> {
    if !g.productive().contains(g.start()) {
        return Err(GrammarError::EmptyLanguage);
    }
    let report = g.validate();
    if !report.is_clean() {
        return Err(GrammarError::Invalid(report));
    }
    if let Ok(cnf) = CnfPcfg::try_from(g.clone()) {
        return Ok(cnf);
    }

    let mut names = Names::new(g);
    let mut start = g.start().to_string();
    let mut rules = RuleSet::default();
    for r in g.rules() {
        rules.add(r.lhs(), r.rhs().to_vec(), r.prob());
    }

    let start_is_nullable = g.rules_for(g.start()).any(|r| r.rhs().is_empty());
    let start_in_body = g.rules().iter().any(|r| r.rhs().contains(&Symbol::nt(g.start())));
    if start_is_nullable && start_in_body {
        let fresh = names.fresh("_S");
        rules.add(&fresh, vec![Symbol::nt(start.clone())], 1.0);
        start = fresh;
    }

    let rules = eliminate_epsilon(rules, &start);
    let rules = fold_units(rules)?;
    let rules = prune(rules, &start);
    let rules = binarize(rules, &mut names);

    let mut nonterminals = vec![start.clone()];
    for (lhs, _, _) in &rules.items {
        if !nonterminals.contains(lhs) {
            nonterminals.push(lhs.clone());
        }
    }
    let out: Vec<Rule> = rules.items.into_iter().map(|(l, r, p)| Rule::new(l, r, p)).collect();
    let pcfg = Pcfg::with_symbols(g.terminals().clone(), nonterminals, start, out);
    CnfPcfg::try_from(pcfg)
}

/// Ordered rule multiset with duplicate bodies merged by summing mass.
#[derive(Default, Debug)]
struct RuleSet {
    items: Vec<(String, Vec<Symbol>, f64)>,
    index: HashMap<(String, Vec<Symbol>), usize>,
}

impl RuleSet {
    fn add(&mut self, lhs: &str, rhs: Vec<Symbol>, prob: f64) {
        if prob <= 0.0 {
            return;
        }
        let key = (lhs.to_string(), rhs);
        match self.index.get(&key) {
            Some(&i) => self.items[i].2 += prob,
            None => {
                self.index.insert(key.clone(), self.items.len());
                self.items.push((key.0, key.1, prob));
            }
        }
    }

    fn lhs_order(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.items
            .iter()
            .filter(|(l, _, _)| seen.insert(l.clone()))
            .map(|(l, _, _)| l.clone())
            .collect()
    }
}

struct Names {
    used: HashSet<String>,
    counter: usize,
}

impl Names {
    fn new(g: &Pcfg) -> Self {
        let mut used: HashSet<String> = g.nonterminals().iter().cloned().collect();
        used.extend(g.terminals().iter().cloned());
        Names { used, counter: 0 }
    }

    fn fresh(&mut self, prefix: &str) -> String {
        loop {
            self.counter += 1;
            let name = format!("{prefix}{}", self.counter);
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }

    fn preterminal(&mut self, terminal: &str, cache: &mut HashMap<String, String>) -> (String, bool) {
        if let Some(n) = cache.get(terminal) {
            return (n.clone(), false);
        }
        let mut name = format!("_T{terminal}");
        while !self.used.insert(name.clone()) {
            name.push('\'');
        }
        cache.insert(terminal.to_string(), name.clone());
        (name, true)
    }
}

/// Probability that each nonterminal derives the empty string: the least
/// fixed point of `e(A) = Σ p(A -> α) Π e(X)`, reached by iteration from 0.
fn empty_probabilities(rules: &RuleSet) -> HashMap<String, f64> {
    let mut e: HashMap<String, f64> = rules.lhs_order().into_iter().map(|n| (n, 0.0)).collect();
    if !rules.items.iter().any(|(_, r, _)| r.is_empty()) {
        return e;
    }
    for _ in 0..FIXED_POINT_ITERS {
        let mut next: HashMap<String, f64> = e.keys().map(|k| (k.clone(), 0.0)).collect();
        for (lhs, rhs, p) in &rules.items {
            let prod: f64 = rhs
                .iter()
                .map(|s| match s {
                    Symbol::Terminal(_) => 0.0,
                    Symbol::Nonterminal(n) => e.get(n).copied().unwrap_or(0.0),
                })
                .product();
            *next.get_mut(lhs).unwrap() += p * prod;
        }
        let converged = next.iter().all(|(k, v)| *v == e[k]);
        e = next;
        if converged {
            break;
        }
    }
    e
}

fn eliminate_epsilon(rules: RuleSet, start: &str) -> RuleSet {
    let e = empty_probabilities(&rules);
    if e.values().all(|&v| v == 0.0) {
        return rules;
    }
    let empty_of = |s: &Symbol| match s {
        Symbol::Terminal(_) => 0.0,
        Symbol::Nonterminal(n) => e.get(n).copied().unwrap_or(0.0),
    };
    let mut out = RuleSet::default();
    for (lhs, rhs, p) in &rules.items {
        let nullable: Vec<usize> = (0..rhs.len()).filter(|&i| empty_of(&rhs[i]) > 0.0).collect();
        // normalise so the nonempty part of each non-start symbol sums to one
        let denom = if lhs == start { 1.0 } else { 1.0 - e[lhs] };
        if denom <= 0.0 {
            continue;
        }
        for mask in 0u64..(1u64 << nullable.len()) {
            let mut weight = *p;
            let mut kept = Vec::with_capacity(rhs.len());
            let mut bit = 0;
            for (i, sym) in rhs.iter().enumerate() {
                if bit < nullable.len() && nullable[bit] == i {
                    let ei = empty_of(sym);
                    if mask & (1 << bit) != 0 {
                        weight *= ei;
                    } else {
                        weight *= 1.0 - ei;
                        kept.push(sym.clone());
                    }
                    bit += 1;
                } else {
                    kept.push(sym.clone());
                }
            }
            if !kept.is_empty() {
                out.add(lhs, kept, weight / denom);
            }
        }
    }
    if e[start] > 0.0 {
        out.add(start, Vec::new(), e[start]);
    }
    out
}

/// `A -> A @ q` is absorbed by scaling A's other rules by `1 / (1 - q)`.
/// ε-elimination produces these from bodies such as `S S`.
fn fold_self_loops(rules: RuleSet) -> RuleSet {
    let mut loops: HashMap<String, f64> = HashMap::new();
    for (lhs, rhs, p) in &rules.items {
        if rhs.as_slice() == [Symbol::nt(lhs.clone())] {
            loops.insert(lhs.clone(), *p);
        }
    }
    if loops.is_empty() {
        return rules;
    }
    let mut out = RuleSet::default();
    for (lhs, rhs, p) in rules.items {
        match loops.get(&lhs) {
            Some(_) if rhs.as_slice() == [Symbol::nt(lhs.clone())] => {}
            Some(q) => out.add(&lhs, rhs, p / (1.0 - q)),
            None => out.add(&lhs, rhs, p),
        }
    }
    out
}

fn fold_units(rules: RuleSet) -> Result<RuleSet, GrammarError> {
    let rules = fold_self_loops(rules);
    let order = rules.lhs_order();
    let mut units: HashMap<&str, Vec<(&str, f64)>> = HashMap::new();
    for (lhs, rhs, p) in &rules.items {
        if let [Symbol::Nonterminal(b)] = rhs.as_slice() {
            units.entry(lhs.as_str()).or_default().push((b.as_str(), *p));
        }
    }
    if units.is_empty() {
        return Ok(rules);
    }

    // reverse topological order of the unit graph; a back edge is a cycle
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit<'a>(
        n: &'a str,
        units: &HashMap<&'a str, Vec<(&'a str, f64)>>,
        marks: &mut HashMap<&'a str, Mark>,
        path: &mut Vec<&'a str>,
        post: &mut Vec<&'a str>,
    ) -> Result<(), GrammarError> {
        match marks.get(n) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Open) => {
                let from = path.iter().position(|p| *p == n).unwrap_or(0);
                let mut cycle: Vec<String> = path[from..].iter().map(|s| s.to_string()).collect();
                cycle.push(n.to_string());
                return Err(GrammarError::UnitCycle(cycle));
            }
            None => {}
        }
        marks.insert(n, Mark::Open);
        path.push(n);
        for &(b, _) in units.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            visit(b, units, marks, path, post)?;
        }
        path.pop();
        marks.insert(n, Mark::Done);
        post.push(n);
        Ok(())
    }
    let mut marks = HashMap::new();
    let mut post = Vec::new();
    for n in &order {
        visit(n, &units, &mut marks, &mut Vec::new(), &mut post)?;
    }

    // closure[A][B] = total probability of unit paths A =>* B
    let mut closure: HashMap<&str, Vec<(&str, f64)>> = HashMap::new();
    for &a in &post {
        let mut acc: Vec<(&str, f64)> = vec![(a, 1.0)];
        for &(b, p) in units.get(a).map(Vec::as_slice).unwrap_or(&[]) {
            for &(c, q) in &closure[b] {
                match acc.iter_mut().find(|(x, _)| *x == c) {
                    Some((_, w)) => *w += p * q,
                    None => acc.push((c, p * q)),
                }
            }
        }
        closure.insert(a, acc);
    }

    let mut out = RuleSet::default();
    for a in &order {
        for &(b, w) in &closure[a.as_str()] {
            for (lhs, rhs, q) in &rules.items {
                if lhs == b && !matches!(rhs.as_slice(), [Symbol::Nonterminal(_)]) {
                    out.add(a, rhs.clone(), w * q);
                }
            }
        }
    }
    Ok(out)
}

fn prune(rules: RuleSet, start: &str) -> RuleSet {
    let mut reachable: HashSet<&str> = HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(a) = stack.pop() {
        for (lhs, rhs, _) in &rules.items {
            if lhs == a {
                for s in rhs {
                    if let Symbol::Nonterminal(b) = s {
                        if reachable.insert(b) {
                            stack.push(b);
                        }
                    }
                }
            }
        }
    }
    let mut out = RuleSet::default();
    for (lhs, rhs, p) in &rules.items {
        if reachable.contains(lhs.as_str()) {
            out.add(lhs, rhs.clone(), *p);
        }
    }
    out
}

fn binarize(rules: RuleSet, names: &mut Names) -> RuleSet {
    let mut out = RuleSet::default();
    let mut preterminals: HashMap<String, String> = HashMap::new();
    let mut lexical = RuleSet::default();
    let mut lift = |s: &Symbol, names: &mut Names, lexical: &mut RuleSet| match s {
        Symbol::Nonterminal(_) => s.clone(),
        Symbol::Terminal(t) => {
            let (name, new) = names.preterminal(t, &mut preterminals);
            if new {
                lexical.add(&name, vec![s.clone()], 1.0);
            }
            Symbol::nt(name)
        }
    };
    for (lhs, rhs, p) in rules.items {
        if rhs.len() <= 1 {
            out.add(&lhs, rhs, p);
            continue;
        }
        let body: Vec<Symbol> = rhs.iter().map(|s| lift(s, names, &mut lexical)).collect();
        let mut owner = lhs;
        let mut prob = p;
        let mut rest = body.as_slice();
        while rest.len() > 2 {
            let next = names.fresh("_BIN");
            out.add(&owner, vec![rest[0].clone(), Symbol::nt(next.clone())], prob);
            owner = next;
            prob = 1.0;
            rest = &rest[1..];
        }
        out.add(&owner, rest.to_vec(), prob);
    }
    for (lhs, rhs, p) in lexical.items {
        out.add(&lhs, rhs, p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::inside_log_prob;
    use crate::grammar::parse_grammar;
    use crate::oracle::sentence_probability;
    use crate::tree::Sentence;

    fn prob_cnf(g: &CnfPcfg, s: &str) -> f64 {
        inside_log_prob(g, &s.parse::<Sentence>().unwrap()).map(f64::exp).unwrap_or(0.0)
    }

    #[test]
    fn cnf_input_is_unchanged() {
        let g = parse_grammar("S -> A B @ 1\nA -> 'a' @ 1\nB -> 'b' @ 1").unwrap();
        let cnf = to_cnf(&g).unwrap();
        assert_eq!(cnf.grammar(), &g);
    }

    #[test]
    fn binarizes_long_terminal_rule() {
        let g = parse_grammar("S -> 'a' 'b' 'c' @ 1").unwrap();
        let cnf = to_cnf(&g).unwrap();
        let text = cnf.to_string();
        assert_eq!(
            text,
            "start: S\nS -> _Ta _BIN1 @ 1\n_BIN1 -> _Tb _Tc @ 1\n_Ta -> 'a' @ 1\n_Tb -> 'b' @ 1\n_Tc -> 'c' @ 1\n"
        );
        assert!(cnf.validate().is_clean());
        assert_eq!(sentence_probability(&g, &"a b c".parse().unwrap()), 1.0);
        assert!((prob_cnf(&cnf, "a b c") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn folds_unit_rules() {
        let g = parse_grammar("S -> A @ 0.5\nS -> 'x' @ 0.5\nA -> 'y' @ 1").unwrap();
        let cnf = to_cnf(&g).unwrap();
        assert!(cnf.rules().iter().all(|r| r.rhs().len() != 1 || r.rhs()[0].is_terminal()));
        assert!(cnf.validate().is_clean(), "{}", cnf.validate());
        for s in ["y", "x"] {
            assert!((sentence_probability(&g, &s.parse().unwrap()) - 0.5).abs() < 1e-12);
            assert!((prob_cnf(&cnf, s) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_chain_probabilities_multiply() {
        let g = parse_grammar(
            "S -> A @ 0.5\nS -> 'x' 'x' @ 0.5\nA -> B @ 0.4\nA -> 'a' @ 0.6\nB -> 'b' 'b' 'b' @ 1",
        )
        .unwrap();
        let cnf = to_cnf(&g).unwrap();
        assert!(cnf.validate().is_clean());
        assert!((prob_cnf(&cnf, "b b b") - 0.2).abs() < 1e-12);
        assert!((prob_cnf(&cnf, "a") - 0.3).abs() < 1e-12);
        assert!((prob_cnf(&cnf, "x x") - 0.5).abs() < 1e-12);
    }

    #[test]
    fn start_epsilon_is_kept() {
        let g = parse_grammar("S -> 'a' 'b' @ 0.75\nS -> ε @ 0.25").unwrap();
        let cnf = to_cnf(&g).unwrap();
        assert!(cnf.validate().is_clean());
        assert_eq!(cnf.compiled().empty_log_prob.map(f64::exp), Some(0.25));
        assert!((prob_cnf(&cnf, "a b") - 0.75).abs() < 1e-12);
    }

    #[test]
    fn nullable_start_inside_bodies() {
        // e = P(S =>* ε) solves e = 0.2 + 0.3 e^2; P("x") = 0.5 / (1 - 0.6 e)
        let g = parse_grammar("S -> S S @ 0.3\nS -> 'x' @ 0.5\nS -> ε @ 0.2").unwrap();
        let cnf = to_cnf(&g).unwrap();
        assert!(cnf.validate().is_clean(), "{}", cnf.validate());
        let e = (1.0 - (1.0f64 - 0.24).sqrt()) / 0.6;
        assert!((cnf.compiled().empty_log_prob.unwrap().exp() - e).abs() < 1e-12);
        let px = 0.5 / (1.0 - 0.6 * e);
        assert!((prob_cnf(&cnf, "x") - px).abs() < 1e-12 * px);
    }

    #[test]
    fn empty_language_and_unit_cycles() {
        let g = parse_grammar("S -> S 'a' @ 1").unwrap();
        assert_eq!(to_cnf(&g).unwrap_err(), GrammarError::EmptyLanguage);
        let cyc = parse_grammar("S -> A @ 0.5\nS -> 'x' @ 0.5\nA -> S @ 0.5\nA -> 'y' @ 0.5").unwrap();
        assert!(matches!(to_cnf(&cyc), Err(GrammarError::UnitCycle(_))));
        let bad = parse_grammar("S -> 'x' @ 0.5").unwrap();
        assert!(matches!(to_cnf(&bad), Err(GrammarError::Invalid(_))));
    }

    #[test]
    fn reserved_names_do_not_collide() {
        let g = parse_grammar("S -> _BIN1 'c' 'd' @ 1\n_BIN1 -> 'a' @ 1").unwrap();
        let cnf = to_cnf(&g).unwrap();
        assert!(cnf.validate().is_clean());
        assert!((prob_cnf(&cnf, "a c d") - 1.0).abs() < 1e-12);
    }
}
