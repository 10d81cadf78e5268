//! Unlabeled bracketing comparison and representation mass.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{ParseTree, Sentence};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("yield mismatch: gold `{gold}` vs predicted `{pred}`")]
pub struct YieldMismatch {
    pub gold: Sentence,
    pub pred: Sentence,
}

/// A sentence, its max-likelihood parse and its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub sentence: Sentence,
    pub gold: ParseTree,
    pub prob: f64,
}

/// 1-based inclusive spans of all constituents covering at least two tokens.
pub type SpanSet = BTreeSet<(usize, usize)>;

pub fn spans(t: &ParseTree) -> SpanSet {
    fn walk(t: &ParseTree, start: usize, out: &mut SpanSet) -> usize {
        match t {
            ParseTree::Leaf(_) => 1,
            ParseTree::Node { children, .. } => {
                let mut width = 0;
                for c in children {
                    width += walk(c, start + width, out);
                }
                if width >= 2 {
                    out.insert((start, start + width - 1));
                }
                width
            }
        }
    }
    let mut out = SpanSet::new();
    walk(t, 1, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Span precision, recall and F1; `0/0` counts as 1.
pub fn unlabeled_f1(gold: &ParseTree, pred: &ParseTree) -> Result<Prf, YieldMismatch> {
    let (gy, py) = (gold.yield_of(), pred.yield_of());
    if gy != py {
        return Err(YieldMismatch { gold: gy, pred: py });
    }
    let (g, p) = (spans(gold), spans(pred));
    let hits = g.intersection(&p).count() as f64;
    let ratio = |num: f64, den: usize| if den == 0 { 1.0 } else { num / den as f64 };
    let precision = ratio(hits, p.len());
    let recall = ratio(hits, g.len());
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(Prf { precision, recall, f1 })
}

/// What a parser returns for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub tree: ParseTree,
    /// Set when the parser had to break a tie.
    pub ambiguous: bool,
}

/// Total probability of corpus sentences whose gold bracketing the predictor
/// reproduces without ambiguity.
pub fn represented_mass<F>(corpus: &[CorpusItem], mut predictor: F) -> f64
where
    F: FnMut(&Sentence) -> Option<Prediction>,
{
    corpus
        .iter()
        .filter(|item| match predictor(&item.sentence) {
            Some(p) => !p.ambiguous && p.tree.same_shape(&item.gold),
            None => false,
        })
        .map(|item| item.prob)
        .sum()
}
