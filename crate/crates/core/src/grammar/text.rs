//! Line-oriented grammar text format.
//!
//! ```text
//! # comment
//! start: S
//! S -> NP VP @ 1.0
//! NP -> 'she' @ 0.5
//! ```
//!
//! Terminals are single-quoted, nonterminals bare. An empty body (or a lone
//! `ε`) denotes the empty string. Without a `start:` line the first rule's
//! left-hand side is the start symbol.

use super::{GrammarError, Pcfg, Rule, Symbol};

pub fn parse_grammar(text: &str) -> Result<Pcfg, GrammarError> {
    let mut start = None;
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| GrammarError::Syntax { line: line_no, msg: msg.to_string() };
        if let Some(rest) = line.strip_prefix("start:") {
            let name = rest.trim();
            if name.is_empty() || name.contains(char::is_whitespace) || name.starts_with('\'') {
                return Err(err("start line needs exactly one nonterminal"));
            }
            start = Some(name.to_string());
            continue;
        }
        let (lhs, rest) = line.split_once("->").ok_or_else(|| err("expected `->`"))?;
        let lhs = lhs.trim();
        if lhs.is_empty() || lhs.contains(char::is_whitespace) || lhs.starts_with('\'') {
            return Err(err("left-hand side must be a single nonterminal"));
        }
        let (body, prob) = rest.rsplit_once('@').ok_or_else(|| err("expected `@ <prob>`"))?;
        let prob: f64 = prob
            .trim()
            .parse()
            .map_err(|_| err(&format!("bad probability `{}`", prob.trim())))?;
        let mut rhs = Vec::new();
        for tok in body.split_whitespace() {
            rhs.push(parse_symbol(tok).ok_or_else(|| err(&format!("bad symbol `{tok}`")))?);
        }
        if rhs == [Symbol::nt("ε")] {
            rhs.clear();
        }
        rules.push(Rule::new(lhs, rhs, prob));
    }
    let start = match start {
        Some(s) => s,
        None => rules.first().ok_or(GrammarError::NoRules)?.lhs().to_string(),
    };
    Ok(Pcfg::new(start, rules))
}

fn parse_symbol(tok: &str) -> Option<Symbol> {
    if let Some(inner) = tok.strip_prefix('\'') {
        let inner = inner.strip_suffix('\'')?;
        (!inner.is_empty()).then(|| Symbol::t(inner))
    } else {
        Some(Symbol::nt(tok))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_start() {
        let g = parse_grammar(
            "# toy\n\nstart: S\nS -> A B @ 1.0  # top\nA -> 'a' @ 1\nB -> 'b' @1\n",
        )
        .unwrap();
        assert_eq!(g.start(), "S");
        assert_eq!(g.rules().len(), 3);
        assert_eq!(g.rules()[0].rhs(), &[Symbol::nt("A"), Symbol::nt("B")]);
        assert_eq!(g.rules()[2].prob(), 1.0);
    }

    #[test]
    fn start_defaults_to_first_lhs() {
        let g = parse_grammar("X -> 'x' @ 1").unwrap();
        assert_eq!(g.start(), "X");
    }

    #[test]
    fn epsilon_forms() {
        let g = parse_grammar("S -> 'a' @ 0.5\nS -> ε @ 0.25\nS -> @ 0.25").unwrap();
        assert!(g.rules()[1].rhs().is_empty());
        assert!(g.rules()[2].rhs().is_empty());
    }

    #[test]
    fn round_trips_through_display() {
        let g = parse_grammar("start: S\nS -> A 'b' C @ 0.3\nS -> 'x' @ 0.7\nA -> 'a' @ 1\nC -> ε @ 1").unwrap();
        let again = parse_grammar(&g.to_string()).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let e = parse_grammar("S -> 'a' @ 1\nS 'b' @ 1").unwrap_err();
        assert_eq!(e, GrammarError::Syntax { line: 2, msg: "expected `->`".into() });
        assert!(matches!(parse_grammar("S -> 'a' @ x"), Err(GrammarError::Syntax { line: 1, .. })));
        assert!(matches!(parse_grammar("S -> '' @ 1"), Err(GrammarError::Syntax { .. })));
        assert_eq!(parse_grammar("# nothing\n"), Err(GrammarError::NoRules));
    }
}
