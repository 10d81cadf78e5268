//! The right-influenced grammar family and exhaustive certification of the
//! restricted-context bounds on it.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{cky_viterbi, ChartError};
use crate::distance::{fit_best_restricted_distance, ContextSpec};
use crate::gates::best_restricted_gate_distance;
use crate::grammar::{CnfPcfg, GrammarError, Pcfg, Rule, Symbol};
use crate::metrics::CorpusItem;
use crate::transition::{fit_best_restricted_policy, PolicyContext};
use crate::tree::Sentence;

/// Tolerance used when checking masses against `1/m` and `1`.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("right-influenced grammars need m >= 2 and L' >= 1 (got m = {m}, L' = {l_prime})")]
    BadSpec { m: usize, l_prime: usize },
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("language is not finite: {0} is recursive")]
    Infinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RightInfluencedSpec {
    pub m: usize,
    pub l_prime: usize,
}

impl RightInfluencedSpec {
    pub fn new(m: usize, l_prime: usize) -> Result<Self, LabError> {
        if m < 2 || l_prime < 1 {
            return Err(LabError::BadSpec { m, l_prime });
        }
        Ok(RightInfluencedSpec { m, l_prime })
    }

    /// Number of shared `a` tokens before the final `c_k`.
    pub fn prefix_len(&self) -> usize {
        self.m + 1 + self.l_prime
    }

    pub fn sentence(&self, k: usize) -> Sentence {
        Sentence::new((1..=self.prefix_len()).map(|i| format!("a{i}")).chain([format!("c{k}")]))
    }
}

fn preterminal(tok: &str) -> String {
    format!("T_{tok}")
}

/// Right-branching prob-1 chain `name →* tokens`; a single token uses the
/// lexical rule directly.
fn chain(name: &str, tokens: &[String], rules: &mut Vec<Rule>) {
    if let [only] = tokens {
        rules.push(Rule::new(name, vec![Symbol::t(only)], 1.0));
        return;
    }
    let mut lhs = name.to_string();
    for (i, tok) in tokens.iter().enumerate().take(tokens.len() - 1) {
        let rest = if i + 2 == tokens.len() { preterminal(&tokens[i + 1]) } else { format!("{name}_{}", i + 2) };
        rules.push(Rule::new(lhs, vec![Symbol::nt(preterminal(tok)), Symbol::nt(rest.clone())], 1.0));
        lhs = rest;
    }
}

/// `S → A_k B_k` with probability `1/m`, `A_k → A_k^l A_k^r` with `A_k^l`
/// spanning `a_1..a_k` and `A_k^r` spanning `a_{k+1}..a_{m+1}`, and
/// `B_k → B_k' T_{c_k}` with `B_k'` spanning `a_{m+2}..a_{m+1+L'}`.
pub fn build_right_influenced(spec: RightInfluencedSpec) -> Result<CnfPcfg, LabError> {
    let RightInfluencedSpec { m, l_prime } = RightInfluencedSpec::new(spec.m, spec.l_prime)?;
    let a: Vec<String> = (1..=m + 1 + l_prime).map(|i| format!("a{i}")).collect();
    let mut rules = Vec::new();
    for k in 1..=m {
        rules.push(Rule::new("S", vec![Symbol::nt(format!("A{k}")), Symbol::nt(format!("B{k}"))], 1.0 / m as f64));
    }
    for k in 1..=m {
        rules.push(Rule::new(format!("A{k}"), vec![Symbol::nt(format!("Al{k}")), Symbol::nt(format!("Ar{k}"))], 1.0));
        chain(&format!("Al{k}"), &a[..k], &mut rules);
        chain(&format!("Ar{k}"), &a[k..=m], &mut rules);
        rules.push(Rule::new(
            format!("B{k}"),
            vec![Symbol::nt(format!("Bp{k}")), Symbol::nt(preterminal(&format!("c{k}")))],
            1.0,
        ));
        chain(&format!("Bp{k}"), &a[m + 1..], &mut rules);
    }
    // single-token chains use lexical rules, so some preterminals go unused
    let used: std::collections::HashSet<String> =
        rules.iter().flat_map(|r| r.rhs().iter()).map(|s| s.name().to_string()).collect();
    for tok in a.iter().cloned().chain((1..=m).map(|k| format!("c{k}"))) {
        if used.contains(&preterminal(&tok)) {
            rules.push(Rule::new(preterminal(&tok), vec![Symbol::t(&tok)], 1.0));
        }
    }
    Ok(CnfPcfg::try_from(Pcfg::new("S", rules))?)
}

/// Every sentence of a finite language with its total probability, in order
/// of first derivation. Works on any grammar without recursion.
pub fn finite_language(g: &Pcfg) -> Result<Vec<(Sentence, f64)>, LabError> {
    fn expand<'g>(
        g: &'g Pcfg,
        a: &'g str,
        memo: &mut HashMap<&'g str, Vec<(Vec<String>, f64)>>,
        active: &mut Vec<&'g str>,
    ) -> Result<Vec<(Vec<String>, f64)>, LabError> {
        if let Some(v) = memo.get(a) {
            return Ok(v.clone());
        }
        if active.contains(&a) {
            return Err(LabError::Infinite(a.to_string()));
        }
        active.push(a);
        let mut out: Vec<(Vec<String>, f64)> = Vec::new();
        for r in g.rules_for(a) {
            let mut partial: Vec<(Vec<String>, f64)> = vec![(Vec::new(), r.prob())];
            for sym in r.rhs() {
                let options = match sym {
                    Symbol::Terminal(t) => vec![(vec![t.clone()], 1.0)],
                    Symbol::Nonterminal(n) => expand(g, n, memo, active)?,
                };
                partial = partial
                    .iter()
                    .flat_map(|(w, p)| options.iter().map(move |(v, q)| ([w.clone(), v.clone()].concat(), p * q)))
                    .collect();
            }
            out.extend(partial);
        }
        active.pop();
        memo.insert(a, out.clone());
        Ok(out)
    }
    let mut order: Vec<Vec<String>> = Vec::new();
    let mut total: HashMap<Vec<String>, f64> = HashMap::new();
    for (w, p) in expand(g, g.start(), &mut HashMap::new(), &mut Vec::new())? {
        if !total.contains_key(&w) {
            order.push(w.clone());
        }
        *total.entry(w).or_default() += p;
    }
    Ok(order.into_iter().map(|w| (Sentence::new(w.clone()), total[&w])).collect())
}

/// The finite language of `g` with CKY gold trees.
pub fn corpus_of(g: &CnfPcfg) -> Result<Vec<CorpusItem>, LabError> {
    finite_language(g)?
        .into_iter()
        .map(|(sentence, prob)| {
            let gold = cky_viterbi(g, &sentence)?.tree;
            Ok(CorpusItem { sentence, gold, prob })
        })
        .collect()
}

/// The `m` sentences `l_k` with probabilities and gold trees.
pub fn enumerate_language(spec: RightInfluencedSpec) -> Result<Vec<CorpusItem>, LabError> {
    corpus_of(&build_right_influenced(spec)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Distance,
    Gates,
    Transitions,
}

impl Paradigm {
    pub const ALL: [Paradigm; 3] = [Paradigm::Distance, Paradigm::Gates, Paradigm::Transitions];
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::Distance => "distance",
            Paradigm::Gates => "gates",
            Paradigm::Transitions => "transitions",
        })
    }
}

impl FromStr for Paradigm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "distance" => Ok(Paradigm::Distance),
            "gates" => Ok(Paradigm::Gates),
            "transitions" => Ok(Paradigm::Transitions),
            _ => Err(format!("unknown paradigm `{s}` (expected distance, gates or transitions)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceVerdict {
    pub sentence: Sentence,
    pub prob: f64,
    pub represented: bool,
    pub mirrored_represented: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub paradigm: Paradigm,
    pub m: usize,
    pub l_prime: usize,
    pub context: String,
    /// False for full-sentence contexts.
    pub restricted: bool,
    pub represented_mass: f64,
    /// Mass for the mirrored grammar read right to left.
    pub mirrored_mass: f64,
    pub bound: f64,
    pub full_context_mass: f64,
    pub exact: bool,
    pub consistent: bool,
    pub problems: Vec<String>,
    pub per_sentence: Vec<SentenceVerdict>,
}

struct Outcome {
    hits: Vec<bool>,
    mass: f64,
    optimum: f64,
    exact: bool,
}

fn policy_context(ctx: &ContextSpec) -> PolicyContext {
    let base = if ctx.full_sentence {
        PolicyContext::full_sentence()
    } else {
        PolicyContext::lookahead(ctx.right_lookahead)
    };
    PolicyContext { direction: ctx.direction, ..base }
}

fn run(paradigm: Paradigm, corpus: &[CorpusItem], ctx: &ContextSpec) -> Outcome {
    let hit_with = |pred: Option<crate::distance::Induced>, item: &CorpusItem| {
        pred.is_some_and(|p| !p.tie && p.tree.same_shape(&item.gold))
    };
    let (hits, mass, optimum, exact): (Vec<bool>, f64, f64, bool) = match paradigm {
        Paradigm::Distance => {
            let fit = fit_best_restricted_distance(corpus, ctx);
            let hits = corpus.iter().map(|c| hit_with(fit.predictor.predict(&c.sentence), c)).collect();
            (hits, fit.represented_mass, fit.optimum, fit.exact)
        }
        Paradigm::Gates => {
            let fit = best_restricted_gate_distance(corpus, ctx);
            let hits = corpus.iter().map(|c| hit_with(fit.predictor.predict(&c.sentence), c)).collect();
            (hits, fit.represented_mass, fit.optimum, fit.exact)
        }
        Paradigm::Transitions => {
            let fit = fit_best_restricted_policy(corpus, policy_context(ctx));
            let hits = corpus.iter().map(|c| fit.policy.parse(&c.sentence).as_ref() == Some(&c.gold)).collect();
            (hits, fit.represented_mass, fit.optimum, fit.exact)
        }
    };
    Outcome { hits, mass, optimum, exact }
}

/// Fits the best `paradigm` predictor restricted to `ctx` on `G_{m,L'}`, and
/// the same on the mirrored grammar with the context read right to left,
/// then checks the masses against `1/m` (restricted, lookahead `<= L'`) or
/// `1` (full sentence).
///
/// For transitions only the lookahead and direction of `ctx` matter; the
/// policy always sees the whole prefix.
pub fn verify_theorem(
    spec: RightInfluencedSpec,
    paradigm: Paradigm,
    ctx: &ContextSpec,
) -> Result<TheoremReport, LabError> {
    let g = build_right_influenced(spec)?;
    let corpus = corpus_of(&g)?;
    let mirror = corpus_of(&g.mirrored())?;

    let main = run(paradigm, &corpus, ctx);
    let mirrored = run(paradigm, &mirror, &ctx.reversed());
    let full = run(paradigm, &corpus, &ContextSpec::full_sentence());
    let bound = 1.0 / spec.m as f64;

    let mut problems = Vec::new();
    let near = |a: f64, b: f64| (a - b).abs() <= MASS_TOLERANCE;
    if !near(full.mass, 1.0) {
        problems.push(format!("full-context mass {} ≠ 1", full.mass));
    }
    for (what, o) in [("restricted", &main), ("mirrored", &mirrored), ("full-context", &full)] {
        if !near(o.mass, o.optimum) {
            problems.push(format!("{what}: evaluated mass {} differs from optimum {}", o.mass, o.optimum));
        }
        if !o.exact {
            problems.push(format!("{what}: search was not exhaustive"));
        }
    }
    if ctx.full_sentence {
        if !near(main.mass, 1.0) || !near(mirrored.mass, 1.0) {
            problems.push(format!("full-sentence masses {} / {} ≠ 1", main.mass, mirrored.mass));
        }
    } else if ctx.right_lookahead <= spec.l_prime {
        for (what, mass) in [("restricted", main.mass), ("mirrored", mirrored.mass)] {
            if !near(mass, bound) {
                problems.push(format!("{what} mass {mass} ≠ 1/m = {bound}"));
            }
        }
    }

    let per_sentence = corpus
        .iter()
        .zip(&main.hits)
        .zip(&mirrored.hits)
        .map(|((item, &represented), &mirrored_represented)| SentenceVerdict {
            sentence: item.sentence.clone(),
            prob: item.prob,
            represented,
            mirrored_represented,
        })
        .collect();
    let describe = match paradigm {
        Paradigm::Transitions => policy_context(ctx).to_string(),
        _ => ctx.to_string(),
    };
    Ok(TheoremReport {
        paradigm,
        m: spec.m,
        l_prime: spec.l_prime,
        context: describe,
        restricted: !ctx.full_sentence,
        represented_mass: main.mass,
        mirrored_mass: mirrored.mass,
        bound,
        full_context_mass: full.mass,
        exact: main.exact && mirrored.exact && full.exact,
        consistent: problems.is_empty(),
        problems,
        per_sentence,
    })
}
