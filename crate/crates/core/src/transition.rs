//! Top-down transition parsing: the NT(X)/SHIFT/REDUCE stack machine, oracle
//! sequences, and context-restricted transition policies.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::distance::{Direction, SENTENCE_END};
use crate::metrics::CorpusItem;
use crate::select::best_subset;
use crate::tree::{ParseTree, Sentence};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Transition {
    Nt(String),
    Shift,
    Reduce,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transition::Nt(x) => write!(f, "NT({x})"),
            Transition::Shift => f.write_str("SHIFT"),
            Transition::Reduce => f.write_str("REDUCE"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransitionError {
    #[error("unknown transition `{0}`")]
    Syntax(String),
    #[error("SHIFT with no open nonterminal at step {0}")]
    ShiftOutsideConstituent(usize),
    #[error("SHIFT with an empty buffer at step {0}")]
    BufferEmpty(usize),
    #[error("REDUCE with no open nonterminal at step {0}")]
    ReduceWithoutOpen(usize),
    #[error("REDUCE of empty constituent {label} at step {step}")]
    EmptyConstituent { label: String, step: usize },
    #[error("NT({label}) after the tree was completed at step {step}")]
    AfterCompletion { label: String, step: usize },
    #[error("sequence ended with {open} open nonterminals and {remaining} unread tokens")]
    Incomplete { open: usize, remaining: usize },
    #[error("a bare token is not a constituent")]
    BareLeaf,
    #[error("grouping {grouping:?} does not partition {len} transitions")]
    BadGrouping { grouping: Vec<usize>, len: usize },
}

impl FromStr for Transition {
    type Err = TransitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SHIFT" => Ok(Transition::Shift),
            "REDUCE" => Ok(Transition::Reduce),
            _ => s
                .strip_prefix("NT(")
                .and_then(|r| r.strip_suffix(')'))
                .filter(|l| !l.is_empty() && !l.contains(char::is_whitespace))
                .map(|l| Transition::Nt(l.to_string()))
                .ok_or_else(|| TransitionError::Syntax(s.to_string())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TransitionJson {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl Serialize for Transition {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let (kind, label) = match self {
            Transition::Nt(l) => ("NT", Some(l.clone())),
            Transition::Shift => ("SHIFT", None),
            Transition::Reduce => ("REDUCE", None),
        };
        TransitionJson { kind: kind.to_string(), label }.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Transition {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let j = TransitionJson::deserialize(de)?;
        match (j.kind.as_str(), j.label) {
            ("NT", Some(l)) => Ok(Transition::Nt(l)),
            ("SHIFT", None) => Ok(Transition::Shift),
            ("REDUCE", None) => Ok(Transition::Reduce),
            (k, l) => Err(serde::de::Error::custom(format!("bad transition kind {k} with label {l:?}"))),
        }
    }
}

/// A transition sequence and the number of transitions `N_t` performed
/// while reading each token `w_t`.
///
/// A transition belongs to the position of the most recent SHIFT; anything
/// before the first SHIFT belongs to position 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionSeq {
    pub flat: Vec<Transition>,
    pub grouping: Vec<usize>,
}

impl TransitionSeq {
    pub fn from_flat(flat: Vec<Transition>) -> Self {
        let mut grouping: Vec<usize> = Vec::new();
        let mut shifts = 0;
        for tr in &flat {
            if *tr == Transition::Shift {
                shifts += 1;
            }
            let pos = shifts.max(1);
            if grouping.len() < pos {
                grouping.resize(pos, 0);
            }
            grouping[pos - 1] += 1;
        }
        TransitionSeq { flat, grouping }
    }

    pub fn from_blocks(blocks: Vec<Vec<Transition>>) -> Result<Self, TransitionError> {
        let seq = Self::from_flat(blocks.concat());
        let grouping: Vec<usize> = blocks.iter().map(Vec::len).collect();
        if seq.grouping != grouping {
            return Err(TransitionError::BadGrouping { grouping, len: seq.flat.len() });
        }
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    /// The per-position blocks `z^1, z^2, ...`.
    pub fn blocks(&self) -> Vec<&[Transition]> {
        let mut out = Vec::with_capacity(self.grouping.len());
        let mut at = 0;
        for &k in &self.grouping {
            out.push(&self.flat[at..at + k]);
            at += k;
        }
        out
    }
}

impl fmt::Display for TransitionSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.flat.iter().map(Transition::to_string).collect();
        f.write_str(&parts.join(" "))
    }
}

impl FromStr for TransitionSeq {
    type Err = TransitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let flat = s.split_whitespace().map(str::parse).collect::<Result<Vec<_>, _>>()?;
        Ok(TransitionSeq::from_flat(flat))
    }
}

enum Item {
    Open(String),
    Done(ParseTree),
}

/// The stack machine, advanced one transition at a time.
pub struct Machine<'s> {
    tokens: &'s [String],
    next: usize,
    stack: Vec<Item>,
    steps: usize,
}

impl<'s> Machine<'s> {
    pub fn new(s: &'s Sentence) -> Self {
        Machine { tokens: s.tokens(), next: 0, stack: Vec::new(), steps: 0 }
    }

    fn open_count(&self) -> usize {
        self.stack.iter().filter(|i| matches!(i, Item::Open(..))).count()
    }

    pub fn step(&mut self, tr: &Transition) -> Result<(), TransitionError> {
        self.steps += 1;
        let step = self.steps;
        match tr {
            Transition::Nt(label) => {
                if self.open_count() == 0 && !self.stack.is_empty() {
                    return Err(TransitionError::AfterCompletion { label: label.clone(), step });
                }
                self.stack.push(Item::Open(label.clone()));
            }
            Transition::Shift => {
                if self.open_count() == 0 {
                    return Err(TransitionError::ShiftOutsideConstituent(step));
                }
                let Some(tok) = self.tokens.get(self.next) else {
                    return Err(TransitionError::BufferEmpty(step));
                };
                self.next += 1;
                self.stack.push(Item::Done(ParseTree::leaf(tok.clone())));
            }
            Transition::Reduce => {
                let Some(open_at) = self.stack.iter().rposition(|i| matches!(i, Item::Open(..))) else {
                    return Err(TransitionError::ReduceWithoutOpen(step));
                };
                let children: Vec<ParseTree> = self
                    .stack
                    .drain(open_at + 1..)
                    .map(|i| match i {
                        Item::Done(t) => t,
                        Item::Open(..) => unreachable!("no open item above the innermost one"),
                    })
                    .collect();
                let Some(Item::Open(label)) = self.stack.pop() else { unreachable!() };
                if children.is_empty() {
                    return Err(TransitionError::EmptyConstituent { label, step });
                }
                self.stack.push(Item::Done(ParseTree::node(label, children)));
            }
        }
        Ok(())
    }

    /// The completed tree, if the machine is in a final state.
    pub fn finish(mut self) -> Result<ParseTree, TransitionError> {
        let remaining = self.tokens.len() - self.next;
        if remaining == 0 && self.stack.len() == 1 {
            if let Some(Item::Done(t)) = self.stack.pop() {
                return Ok(t);
            }
        }
        Err(TransitionError::Incomplete { open: self.open_count(), remaining })
    }
}

/// Runs `z` on `s` from an empty stack and returns the single completed
/// constituent. Constituents may have any number of children.
pub fn execute(s: &Sentence, z: &TransitionSeq) -> Result<ParseTree, TransitionError> {
    let mut m = Machine::new(s);
    for tr in &z.flat {
        m.step(tr)?;
    }
    m.finish()
}

/// Depth-first linearization: NT on entry, SHIFT per token, REDUCE on exit.
pub fn oracle_transitions(t: &ParseTree) -> Result<TransitionSeq, TransitionError> {
    if t.is_leaf() {
        return Err(TransitionError::BareLeaf);
    }
    fn walk(t: &ParseTree, out: &mut Vec<Transition>) {
        match t {
            ParseTree::Leaf(_) => out.push(Transition::Shift),
            ParseTree::Node { label, children } => {
                out.push(Transition::Nt(label.clone()));
                for c in children {
                    walk(c, out);
                }
                out.push(Transition::Reduce);
            }
        }
    }
    let mut flat = Vec::new();
    walk(t, &mut flat);
    Ok(TransitionSeq::from_flat(flat))
}

/// What a transition policy may look at when choosing the block for `w_t`:
/// the tokens up to `w_{t+L'}` (or the whole sentence) and every earlier
/// block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyContext {
    /// `None` means the whole sentence is visible.
    pub lookahead: Option<usize>,
    #[serde(default)]
    pub direction: Direction,
}

impl PolicyContext {
    pub fn lookahead(l: usize) -> Self {
        PolicyContext { lookahead: Some(l), direction: Direction::LeftToRight }
    }

    pub fn full_sentence() -> Self {
        PolicyContext { lookahead: None, direction: Direction::LeftToRight }
    }

    pub fn reversed(mut self) -> Self {
        self.direction = match self.direction {
            Direction::LeftToRight => Direction::RightToLeft,
            Direction::RightToLeft => Direction::LeftToRight,
        };
        self
    }

    /// Key for the block at position `t` (1-based) given earlier blocks,
    /// with `s` already oriented in reading order.
    fn key(&self, s: &Sentence, t: usize, history: &[Transition]) -> String {
        let n = s.len();
        let visible = match self.lookahead {
            None => s.to_string(),
            Some(l) => (1..=t + l)
                .map(|p| if p <= n { s.tokens()[p - 1].as_str() } else { SENTENCE_END })
                .collect::<Vec<_>>()
                .join(" "),
        };
        let past: Vec<String> = history.iter().map(Transition::to_string).collect();
        format!("{visible} @{t} | {}", past.join(" "))
    }
}

impl fmt::Display for PolicyContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.lookahead {
            None => f.write_str("full sentence")?,
            Some(l) => write!(f, "prefix, lookahead {l}")?,
        }
        if self.direction == Direction::RightToLeft {
            f.write_str(", right-to-left")?;
        }
        Ok(())
    }
}

/// A deterministic policy stored as context key → transition block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPolicy {
    pub context: PolicyContext,
    pub table: BTreeMap<String, Vec<Transition>>,
}

impl TransitionPolicy {
    /// Runs the policy position by position; `None` when it meets an unseen
    /// context or produces an illegal sequence. Right-to-left policies parse
    /// the reversed sentence and return the tree mirrored back.
    pub fn parse(&self, s: &Sentence) -> Option<ParseTree> {
        let rtl = self.context.direction == Direction::RightToLeft;
        let oriented = if rtl { s.reversed() } else { s.clone() };
        let mut history: Vec<Transition> = Vec::new();
        let mut machine = Machine::new(&oriented);
        for t in 1..=oriented.len() {
            let block = self.table.get(&self.context.key(&oriented, t, &history))?;
            for tr in block {
                machine.step(tr).ok()?;
            }
            history.extend(block.iter().cloned());
        }
        let tree = machine.finish().ok()?;
        Some(if rtl { tree.mirrored() } else { tree })
    }
}

/// A policy key and the block the gold run emits under it.
type KeyedBlock = (String, Vec<Transition>);

#[derive(Debug, Clone)]
pub struct PolicyFit {
    pub policy: TransitionPolicy,
    /// Mass of sentences whose gold tree, labels included, the fitted policy
    /// reproduces.
    pub represented_mass: f64,
    pub optimum: f64,
    pub exact: bool,
    pub selected: Vec<bool>,
}

/// The largest probability mass of `corpus` any policy restricted to
/// `context` can parse exactly.
///
/// Each sentence fixes a block per context key along its oracle run. Two
/// sentences conflict iff some key is shared but the required blocks differ;
/// otherwise their tables merge. The optimum is therefore a maximum-weight
/// set of pairwise compatible sentences.
pub fn fit_best_restricted_policy(corpus: &[CorpusItem], context: PolicyContext) -> PolicyFit {
    let rtl = context.direction == Direction::RightToLeft;
    let mut runs: Vec<Option<Vec<KeyedBlock>>> = Vec::with_capacity(corpus.len());
    for item in corpus {
        let (s, gold) = if rtl {
            (item.sentence.reversed(), item.gold.mirrored())
        } else {
            (item.sentence.clone(), item.gold.clone())
        };
        let run = oracle_transitions(&gold).ok().filter(|_| gold.yield_of() == s).map(|z| {
            let mut history = Vec::new();
            let mut steps = Vec::new();
            for block in z.blocks() {
                let t = steps.len() + 1;
                steps.push((context.key(&s, t, &history), block.to_vec()));
                history.extend_from_slice(block);
            }
            steps
        });
        runs.push(run);
    }

    let mut by_key: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, run) in runs.iter().enumerate() {
        for (k, _) in run.iter().flatten() {
            by_key.entry(k.as_str()).or_default().push(i);
        }
    }
    let mut conflicts: Vec<(usize, usize)> = Vec::new();
    let block_of = |i: usize, key: &str| -> &Vec<Transition> {
        &runs[i].as_ref().expect("run exists").iter().find(|(k, _)| k == key).expect("key in run").1
    };
    for (key, items) in &by_key {
        for (x, &i) in items.iter().enumerate() {
            for &j in &items[x + 1..] {
                if i != j && block_of(i, key) != block_of(j, key) {
                    conflicts.push((i.min(j), i.max(j)));
                }
            }
        }
    }
    conflicts.sort_unstable();
    conflicts.dedup();

    let weights: Vec<f64> = corpus.iter().map(|c| c.prob).collect();
    let sel = best_subset(&weights, &conflicts, |i| runs[i].is_some(), |chosen, i| {
        chosen.iter().all(|&c| conflicts.binary_search(&(c.min(i), c.max(i))).is_err())
    });

    let mut table = BTreeMap::new();
    for (i, run) in runs.iter().enumerate() {
        if sel.chosen[i] {
            for (k, block) in run.iter().flatten() {
                table.insert(k.clone(), block.clone());
            }
        }
    }
    let policy = TransitionPolicy { context, table };
    let represented_mass = corpus
        .iter()
        .filter(|item| policy.parse(&item.sentence).as_ref() == Some(&item.gold))
        .map(|item| item.prob)
        .sum();
    PolicyFit { policy, represented_mass, optimum: sel.mass, exact: sel.exact, selected: sel.chosen }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coffee() -> ParseTree {
        "(S (NP (N I)) (VP (V drink) (NP (NP (N coffee)) (PP (P with) (N milk)))))".parse().unwrap()
    }

    const COFFEE_ORACLE: &str = "NT(S) NT(NP) NT(N) SHIFT REDUCE REDUCE NT(VP) NT(V) SHIFT REDUCE \
        NT(NP) NT(NP) NT(N) SHIFT REDUCE REDUCE NT(PP) NT(P) SHIFT REDUCE NT(N) SHIFT REDUCE \
        REDUCE REDUCE REDUCE REDUCE";

    #[test]
    fn table_one_tree() {
        let z = oracle_transitions(&coffee()).unwrap();
        assert_eq!(z.to_string(), COFFEE_ORACLE.split_whitespace().collect::<Vec<_>>().join(" "));
        assert_eq!(z.len(), 27);
        assert_eq!(z.grouping, vec![8, 5, 5, 3, 6]);
        assert_eq!(execute(&coffee().yield_of(), &z).unwrap(), coffee());
    }

    #[test]
    fn grouping_follows_last_shift() {
        let z: TransitionSeq = "NT(S) SHIFT NT(A) SHIFT REDUCE REDUCE".parse().unwrap();
        assert_eq!(z.grouping, vec![3, 3]);
        assert_eq!(z.blocks()[1], &[Transition::Shift, Transition::Reduce, Transition::Reduce][..]);
        assert!(TransitionSeq::from_blocks(vec![vec![Transition::Nt("S".into())], vec![Transition::Shift]]).is_err());
    }

    #[test]
    fn illegal_sequences_name_the_step() {
        let s: Sentence = "a".parse().unwrap();
        let run = |z: &str| execute(&s, &z.parse().unwrap()).unwrap_err().to_string();
        assert_eq!(run("NT(S) REDUCE"), "REDUCE of empty constituent S at step 2");
        assert_eq!(run("SHIFT"), "SHIFT with no open nonterminal at step 1");
        assert_eq!(run("NT(S) SHIFT REDUCE REDUCE"), "REDUCE with no open nonterminal at step 4");
        assert_eq!(run("NT(S) SHIFT SHIFT"), "SHIFT with an empty buffer at step 3");
        assert!(run("NT(S) SHIFT").contains("1 open"));
        assert!(run("NT(S) SHIFT REDUCE NT(T)").contains("after the tree was completed"));
        assert!("NT() SHIFT".parse::<TransitionSeq>().is_err());
    }

    #[test]
    fn nary_constituents() {
        let t: ParseTree = "(S a b c)".parse().unwrap();
        let z = oracle_transitions(&t).unwrap();
        assert_eq!(execute(&t.yield_of(), &z).unwrap(), t);
        assert!(oracle_transitions(&ParseTree::leaf("a")).is_err());
    }

    #[test]
    fn json_forms() {
        let z: TransitionSeq = "NT(S) SHIFT REDUCE".parse().unwrap();
        let j = serde_json::to_string(&z).unwrap();
        assert_eq!(
            j,
            r#"{"flat":[{"kind":"NT","label":"S"},{"kind":"SHIFT"},{"kind":"REDUCE"}],"grouping":[3]}"#
        );
        assert_eq!(serde_json::from_str::<TransitionSeq>(&j).unwrap(), z);
        assert!(serde_json::from_str::<Transition>(r#"{"kind":"SHIFT","label":"X"}"#).is_err());
    }

    #[test]
    fn policy_fit_prefers_heavier_sentence() {
        let corpus = vec![
            CorpusItem { sentence: "a b c".parse().unwrap(), gold: "(S (A a b) c)".parse().unwrap(), prob: 0.3 },
            CorpusItem { sentence: "a b d".parse().unwrap(), gold: "(S a (B b d))".parse().unwrap(), prob: 0.7 },
        ];
        // the blocks differ at position 1 and the keys agree there
        let fit = fit_best_restricted_policy(&corpus, PolicyContext::lookahead(1));
        assert_eq!(fit.selected, vec![false, true]);
        assert_eq!(fit.represented_mass, 0.7);
        let full = fit_best_restricted_policy(&corpus, PolicyContext::lookahead(2));
        assert_eq!(full.represented_mass, 1.0);
        let full = fit_best_restricted_policy(&corpus, PolicyContext::full_sentence());
        assert_eq!(full.represented_mass, 1.0);
        // read from the right, the final token is visible immediately
        let rtl = fit_best_restricted_policy(&corpus, PolicyContext::lookahead(0).reversed());
        assert_eq!(rtl.represented_mass, 1.0);
    }
}
