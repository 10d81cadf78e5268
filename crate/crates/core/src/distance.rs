//! Syntactic distances: greedy tree induction, the LCA-depth encoding of a
//! binary tree, and the best distance function a restricted context allows.
//!
//! Positions follow the usual convention: `d_t` (for `2 <= t <= n`) scores
//! the boundary between tokens `t-1` and `t`, and is stored at index `t-2`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{represented_mass, CorpusItem, Prediction};
use crate::select::best_subset;
use crate::tree::{ParseTree, Sentence, TreeError};

pub const SENTENCE_START: &str = "⟨S⟩";
pub const SENTENCE_END: &str = "⟨/S⟩";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("{distances} distances for a sentence of {tokens} tokens (need {})", tokens.saturating_sub(1))]
    LengthMismatch { tokens: usize, distances: usize },
    #[error("empty sentence")]
    EmptySentence,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistanceSeq(pub Vec<f64>);

impl DistanceSeq {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// `d_t` for `2 <= t <= n`.
    pub fn at(&self, t: usize) -> f64 {
        self.0[t - 2]
    }
}

/// Output of [`induce_tree`]; `tie` is set when some split had more than one
/// maximal distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Induced {
    pub tree: ParseTree,
    pub tie: bool,
}

impl From<Induced> for Prediction {
    fn from(i: Induced) -> Self {
        Prediction { tree: i.tree, ambiguous: i.tie }
    }
}

/// Splits each span at its largest distance, leftmost on ties, and recurses
/// on both halves. Internal nodes are labeled `_X`.
pub fn induce_tree(s: &Sentence, d: &DistanceSeq) -> Result<Induced, DistanceError> {
    let n = s.len();
    if n == 0 {
        return Err(DistanceError::EmptySentence);
    }
    if d.0.len() != n - 1 {
        return Err(DistanceError::LengthMismatch { tokens: n, distances: d.0.len() });
    }
    fn split(tokens: &[String], d: &[f64], lo: usize, hi: usize, tie: &mut bool) -> ParseTree {
        if hi - lo == 1 {
            return ParseTree::leaf(tokens[lo].clone());
        }
        // boundary before token k has distance d[k - 1]
        let mut best = lo + 1;
        for k in lo + 2..hi {
            if d[k - 1] > d[best - 1] {
                best = k;
            }
        }
        if (lo + 1..hi).any(|k| k != best && d[k - 1] == d[best - 1]) {
            *tie = true;
        }
        ParseTree::join(split(tokens, d, lo, best, tie), split(tokens, d, best, hi, tie))
    }
    let mut tie = false;
    let tree = split(s.tokens(), &d.0, 0, n, &mut tie);
    Ok(Induced { tree, tie })
}

/// `d_t = n - depth(LCA(w_{t-1}, w_t))` with the root at depth 0, computed on
/// the unlabeled shape (unary chains collapsed).
pub fn distances_from_tree(t: &ParseTree) -> Result<DistanceSeq, TreeError> {
    t.check_binary()?;
    let shape = t.unlabeled();
    let n = shape.num_leaves();
    let mut d = vec![0.0; n.saturating_sub(1)];
    fn walk(node: &ParseTree, depth: usize, offset: usize, n: usize, d: &mut [f64]) -> usize {
        match node {
            ParseTree::Leaf(_) => 1,
            ParseTree::Node { children, .. } => {
                let left = walk(&children[0], depth + 1, offset, n, d);
                d[offset + left - 1] = (n - depth) as f64;
                left + walk(&children[1], depth + 1, offset + left, n, d)
            }
        }
    }
    walk(&shape, 0, 0, n, &mut d);
    Ok(DistanceSeq(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftContext {
    Unbounded,
    /// Tokens `w_{t-L} ..`; the pair `(w_{t-1}, w_t)` is always visible.
    Window(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    LeftToRight,
    /// Same context shape read from the sentence end.
    RightToLeft,
}

/// Which tokens a predictor may read when scoring the boundary before `w_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSpec {
    pub left: LeftContext,
    pub right_lookahead: usize,
    pub include_position: bool,
    /// The whole sentence plus the position; other fields are ignored.
    pub full_sentence: bool,
    #[serde(default)]
    pub direction: Direction,
}

impl ContextSpec {
    pub fn left_unbounded(lookahead: usize) -> Self {
        ContextSpec {
            left: LeftContext::Unbounded,
            right_lookahead: lookahead,
            include_position: false,
            full_sentence: false,
            direction: Direction::LeftToRight,
        }
    }

    pub fn window(left: usize, lookahead: usize) -> Self {
        ContextSpec { left: LeftContext::Window(left), ..Self::left_unbounded(lookahead) }
    }

    pub fn full_sentence() -> Self {
        ContextSpec { full_sentence: true, include_position: true, ..Self::left_unbounded(0) }
    }

    pub fn with_position(mut self) -> Self {
        self.include_position = true;
        self
    }

    pub fn reversed(mut self) -> Self {
        self.direction = match self.direction {
            Direction::LeftToRight => Direction::RightToLeft,
            Direction::RightToLeft => Direction::LeftToRight,
        };
        self
    }
}

impl fmt::Display for ContextSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.full_sentence {
            f.write_str("full sentence + position")?;
        } else {
            match self.left {
                LeftContext::Unbounded => f.write_str("unbounded left")?,
                LeftContext::Window(l) => write!(f, "left window {l}")?,
            }
            write!(f, ", lookahead {}", self.right_lookahead)?;
            if self.include_position {
                f.write_str(", position")?;
            }
        }
        if self.direction == Direction::RightToLeft {
            f.write_str(", right-to-left")?;
        }
        Ok(())
    }
}

/// Canonical string of everything visible when scoring `d_t`.
///
/// Position 0 is the start pad `⟨S⟩`. Window positions that fall outside the
/// sentence are padded (`⟨S⟩` on the left, `⟨/S⟩` on the right) so the
/// boundary keeps a fixed offset inside the key; equal keys therefore mean
/// equal visible contexts at the same relative boundary.
pub fn context_key(s: &Sentence, t: usize, spec: &ContextSpec) -> String {
    let n = s.len();
    assert!((2..=n).contains(&t), "position {t} outside 2..={n}");
    if spec.direction == Direction::RightToLeft {
        let ltr = ContextSpec { direction: Direction::LeftToRight, ..*spec };
        return context_key(&s.reversed(), n + 2 - t, &ltr);
    }
    if spec.full_sentence {
        return format!("{s} @{t}");
    }
    let first = match spec.left {
        LeftContext::Unbounded => 0,
        LeftContext::Window(l) => t as isize - l.max(1) as isize,
    };
    let last = (t + spec.right_lookahead) as isize;
    let mut parts: Vec<&str> = Vec::with_capacity((last - first + 1) as usize);
    for p in first..=last {
        parts.push(match p {
            p if p <= 0 => SENTENCE_START,
            p if p as usize > n => SENTENCE_END,
            p => &s.tokens()[p as usize - 1],
        });
    }
    let mut key = parts.join(" ");
    if spec.include_position {
        key.push_str(&format!(" @{t}"));
    }
    key
}

/// A predictor given as a lookup table from context key to output; sentences
/// with equal keys at a position necessarily receive equal outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedPredictor<O> {
    pub spec: ContextSpec,
    pub table: BTreeMap<String, O>,
}

impl<O: Clone> TabulatedPredictor<O> {
    /// Outputs for positions `2..=n`, or `None` if some context was never
    /// tabulated.
    pub fn outputs(&self, s: &Sentence) -> Option<Vec<O>> {
        (2..=s.len()).map(|t| self.table.get(&context_key(s, t, &self.spec)).cloned()).collect()
    }
}

impl TabulatedPredictor<f64> {
    pub fn distances(&self, s: &Sentence) -> Option<DistanceSeq> {
        self.outputs(s).map(DistanceSeq)
    }

    pub fn predict(&self, s: &Sentence) -> Option<Induced> {
        induce_tree(s, &self.distances(s)?).ok()
    }
}

/// Result of fitting a tabulated predictor to a corpus.
#[derive(Debug, Clone)]
pub struct Fit<O> {
    pub predictor: TabulatedPredictor<O>,
    /// Mass the fitted predictor actually reproduces, measured by running it.
    pub represented_mass: f64,
    /// Objective value reported by the optimizer.
    pub optimum: f64,
    /// False when some interaction component was too large for exhaustive search.
    pub exact: bool,
    /// Which corpus items the optimizer chose to get right.
    pub selected: Vec<bool>,
}

/// Ordering constraints one sentence's gold shape imposes on the context
/// variables: `(a, b)` means `value(a) > value(b)` is required.
pub(crate) struct DistanceProblem {
    pub keys: Vec<String>,
    pub vars: Vec<Vec<usize>>,
    pub edges: Vec<Vec<(usize, usize)>>,
    pub viable: Vec<bool>,
}

pub(crate) fn distance_problem(corpus: &[CorpusItem], spec: &ContextSpec) -> DistanceProblem {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut keys = Vec::new();
    let mut vars = Vec::with_capacity(corpus.len());
    let mut edges = Vec::with_capacity(corpus.len());
    let mut viable = Vec::with_capacity(corpus.len());
    for item in corpus {
        let n = item.sentence.len();
        let v: Vec<usize> = (2..=n)
            .map(|t| {
                let key = context_key(&item.sentence, t, spec);
                *ids.entry(key.clone()).or_insert_with(|| {
                    keys.push(key);
                    keys.len() - 1
                })
            })
            .collect();
        let mut e = Vec::new();
        let ok = item.gold.yield_of() == item.sentence && item.gold.check_binary().is_ok();
        if ok {
            // each constituent's split boundary must beat every other
            // boundary inside it
            fn walk(node: &ParseTree, offset: usize, vars: &[usize], out: &mut Vec<(usize, usize)>) -> usize {
                match node {
                    ParseTree::Leaf(_) => 1,
                    ParseTree::Node { children, .. } => {
                        let left = walk(&children[0], offset, vars, out);
                        let right = walk(&children[1], offset + left, vars, out);
                        let split = offset + left;
                        for b in offset + 1..offset + left + right {
                            if b != split {
                                out.push((vars[split - 1], vars[b - 1]));
                            }
                        }
                        left + right
                    }
                }
            }
            walk(&item.gold.unlabeled(), 0, &v, &mut e);
        }
        e.sort_unstable();
        e.dedup();
        viable.push(ok && acyclic(&e));
        vars.push(v);
        edges.push(e);
    }
    DistanceProblem { keys, vars, edges, viable }
}

fn acyclic(edges: &[(usize, usize)]) -> bool {
    levels(edges).is_some()
}

/// Longest-path level of every variable in the "greater than" graph
/// (sinks at 0); `None` on a cycle.
fn levels(edges: &[(usize, usize)]) -> Option<HashMap<usize, usize>> {
    let mut out: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(a, b) in edges {
        out.entry(a).or_default().push(b);
        out.entry(b).or_default();
    }
    let mut level: HashMap<usize, usize> = HashMap::new();
    let mut on_path: HashMap<usize, bool> = HashMap::new();
    fn visit(
        v: usize,
        out: &HashMap<usize, Vec<usize>>,
        level: &mut HashMap<usize, usize>,
        on_path: &mut HashMap<usize, bool>,
    ) -> Option<usize> {
        if let Some(&l) = level.get(&v) {
            return Some(l);
        }
        if on_path.insert(v, true).is_some() {
            return None;
        }
        let mut l = 0;
        for &u in &out[&v] {
            l = l.max(visit(u, out, level, on_path)? + 1);
        }
        level.insert(v, l);
        Some(l)
    }
    let mut nodes: Vec<usize> = out.keys().copied().collect();
    nodes.sort_unstable();
    for v in nodes {
        visit(v, &out, &mut level, &mut on_path)?;
    }
    Some(level)
}

pub(crate) struct Solved {
    pub selection_mass: f64,
    pub exact: bool,
    pub selected: Vec<bool>,
    /// Level per variable id (0 for unconstrained variables).
    pub levels: Vec<usize>,
}

pub(crate) fn solve(problem: &DistanceProblem, weights: &[f64]) -> Solved {
    let mut owners: HashMap<usize, usize> = HashMap::new();
    let mut links = Vec::new();
    for (i, vs) in problem.vars.iter().enumerate() {
        for &v in vs {
            match owners.get(&v) {
                Some(&j) => links.push((j, i)),
                None => {
                    owners.insert(v, i);
                }
            }
        }
    }
    let sel = best_subset(weights, &links, |i| problem.viable[i], |chosen, i| {
        let mut all: Vec<(usize, usize)> = problem.edges[i].clone();
        for &c in chosen {
            all.extend_from_slice(&problem.edges[c]);
        }
        acyclic(&all)
    });
    let all: Vec<(usize, usize)> = (0..weights.len())
        .filter(|&i| sel.chosen[i])
        .flat_map(|i| problem.edges[i].iter().copied())
        .collect();
    let lv = levels(&all).expect("selected constraints are consistent");
    let levels = (0..problem.keys.len()).map(|v| lv.get(&v).copied().unwrap_or(0)).collect();
    Solved { selection_mass: sel.mass, exact: sel.exact, selected: sel.chosen, levels }
}

/// The largest probability mass of `corpus` whose gold bracketing any
/// distance function measurable with respect to `spec` can induce without
/// ties, together with a table realising it.
///
/// A sentence is induced correctly exactly when, inside every gold
/// constituent, the split boundary's distance strictly exceeds all others.
/// These strict inequalities between context keys are consistent iff they
/// form an acyclic graph, so the optimum is a maximum-weight subset of
/// sentences with an acyclic union, found exhaustively per group of
/// sentences that share keys. Values are then longest-path levels.
pub fn fit_best_restricted_distance(corpus: &[CorpusItem], spec: &ContextSpec) -> Fit<f64> {
    let problem = distance_problem(corpus, spec);
    let weights: Vec<f64> = corpus.iter().map(|c| c.prob).collect();
    let solved = solve(&problem, &weights);
    let table = problem
        .keys
        .iter()
        .enumerate()
        .map(|(v, k)| (k.clone(), solved.levels[v] as f64))
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

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> Sentence {
        x.parse().unwrap()
    }

    fn t(x: &str) -> ParseTree {
        x.parse().unwrap()
    }

    #[test]
    fn induce_examples() {
        let abc = s("a b c");
        let r = induce_tree(&abc, &DistanceSeq(vec![3.0, 2.0])).unwrap();
        assert_eq!(r.tree.to_string(), "(_X a (_X b c))");
        assert!(!r.tie);
        let r = induce_tree(&abc, &DistanceSeq(vec![2.0, 3.0])).unwrap();
        assert_eq!(r.tree.to_string(), "(_X (_X a b) c)");
        let r = induce_tree(&abc, &DistanceSeq(vec![2.0, 2.0])).unwrap();
        assert_eq!(r.tree.to_string(), "(_X a (_X b c))");
        assert!(r.tie);
        let one = induce_tree(&s("a"), &DistanceSeq(vec![])).unwrap();
        assert_eq!(one.tree, ParseTree::leaf("a"));
        assert!(induce_tree(&abc, &DistanceSeq(vec![1.0])).is_err());
    }

    #[test]
    fn lca_distances() {
        assert_eq!(distances_from_tree(&t("(_X a (_X b c))")).unwrap().0, vec![3.0, 2.0]);
        assert_eq!(distances_from_tree(&t("(_X (_X a b) c)")).unwrap().0, vec![2.0, 3.0]);
        assert_eq!(distances_from_tree(&t("(_X a b)")).unwrap().0, vec![2.0]);
        assert!(distances_from_tree(&t("(X a b c)")).is_err());
        // preterminals are collapsed first
        assert_eq!(distances_from_tree(&t("(S (A a) (B b))")).unwrap().0, vec![2.0]);
    }

    #[test]
    fn context_key_examples() {
        let abc = s("a b c");
        assert_eq!(context_key(&abc, 2, &ContextSpec::left_unbounded(0)), "⟨S⟩ a b");
        assert_eq!(context_key(&abc, 2, &ContextSpec::window(1, 1)), "a b c");
        assert_eq!(context_key(&abc, 3, &ContextSpec::left_unbounded(1)), "⟨S⟩ a b c ⟨/S⟩");
        assert_eq!(context_key(&abc, 2, &ContextSpec::window(3, 0)), "⟨S⟩ ⟨S⟩ a b");
        assert_eq!(context_key(&abc, 3, &ContextSpec::left_unbounded(0).with_position()), "⟨S⟩ a b c @3");
        assert_eq!(context_key(&abc, 3, &ContextSpec::full_sentence()), "a b c @3");
        // right-to-left reads the reversed sentence
        assert_eq!(context_key(&abc, 3, &ContextSpec::left_unbounded(0).reversed()), "⟨S⟩ c b");
    }

    #[test]
    fn keys_of_right_influenced_prefixes_agree() {
        let l1 = s("a1 a2 a3 a4 c1");
        let l2 = s("a1 a2 a3 a4 c2");
        let spec = ContextSpec::left_unbounded(1);
        for t in 2..=3 {
            assert_eq!(context_key(&l1, t, &spec), context_key(&l2, t, &spec));
        }
        // at t = 4 the lookahead reaches the final token
        assert_ne!(context_key(&l1, 4, &spec), context_key(&l2, 4, &spec));
    }

    #[test]
    fn restricted_fit_on_two_way_ambiguity() {
        let corpus = vec![
            CorpusItem { sentence: s("a b c x"), gold: t("(_X (_X a (_X b c)) x)"), prob: 0.6 },
            CorpusItem { sentence: s("a b c y"), gold: t("(_X (_X (_X a b) c) y)"), prob: 0.4 },
        ];
        let fit = fit_best_restricted_distance(&corpus, &ContextSpec::left_unbounded(0));
        assert_eq!(fit.optimum, 0.6);
        assert_eq!(fit.represented_mass, 0.6);
        assert_eq!(fit.selected, vec![true, false]);
        let full = fit_best_restricted_distance(&corpus, &ContextSpec::full_sentence());
        assert_eq!(full.represented_mass, 1.0);
        // one token of lookahead at t = 3 already separates them
        let ahead = fit_best_restricted_distance(&corpus, &ContextSpec::left_unbounded(1));
        assert_eq!(ahead.represented_mass, 1.0);
    }

    #[test]
    fn predictor_is_measurable() {
        let corpus = vec![
            CorpusItem { sentence: s("a b c x"), gold: t("(_X (_X a (_X b c)) x)"), prob: 0.5 },
            CorpusItem { sentence: s("a b c y"), gold: t("(_X (_X (_X a b) c) y)"), prob: 0.5 },
        ];
        let spec = ContextSpec::left_unbounded(0);
        let fit = fit_best_restricted_distance(&corpus, &spec);
        let d1 = fit.predictor.distances(&corpus[0].sentence).unwrap();
        let d2 = fit.predictor.distances(&corpus[1].sentence).unwrap();
        for t in 2..=4 {
            if context_key(&corpus[0].sentence, t, &spec) == context_key(&corpus[1].sentence, t, &spec) {
                assert_eq!(d1.at(t), d2.at(t));
            }
        }
    }

    #[test]
    fn json_forms() {
        let d = DistanceSeq(vec![3.0, 2.5]);
        assert_eq!(serde_json::to_string(&d).unwrap(), "[3.0,2.5]");
        let back: DistanceSeq = serde_json::from_str("[3, 2]").unwrap();
        assert_eq!(back.0, vec![3.0, 2.0]);
    }
}
