use pcfg_sandbox::*;

#[test]
fn language_shape() {
    for m in 2..=5 {
        for l_prime in 1..=3 {
            let spec = RightInfluencedSpec::new(m, l_prime).unwrap();
            let g = build_right_influenced(spec).unwrap();
            assert!(g.validate().is_clean());
            let corpus = enumerate_language(spec).unwrap();
            assert_eq!(corpus.len(), m);
            let total: f64 = corpus.iter().map(|c| c.prob).sum();
            assert!((total - 1.0).abs() < 1e-12);
            for item in &corpus {
                let toks = item.sentence.tokens();
                assert_eq!(toks.len(), m + 2 + l_prime);
                // Only the last token tells the sentences apart.
                assert_eq!(&toks[..toks.len() - 1], &corpus[0].sentence.tokens()[..toks.len() - 1]);
                assert_eq!(count_parses(&g, &item.sentence), 1);
                assert!((item.prob - 1.0 / m as f64).abs() < 1e-12);
                assert_eq!(item.gold.yield_of(), item.sentence);
            }
        }
    }
}

#[test]
fn gold_trees_differ_in_the_prefix() {
    let corpus = enumerate_language(RightInfluencedSpec::new(3, 1).unwrap()).unwrap();
    let shapes: Vec<_> = corpus.iter().map(|c| spans(&c.gold)).collect();
    for (i, a) in shapes.iter().enumerate() {
        for b in &shapes[i + 1..] {
            // Split points inside a1..a4 move with k.
            assert_ne!(a, b);
        }
    }
}

#[test]
fn rejects_degenerate_specs() {
    assert!(matches!(RightInfluencedSpec::new(1, 1), Err(LabError::BadSpec { .. })));
    assert!(RightInfluencedSpec::new(2, 0).is_err());
}

#[test]
fn restricted_contexts_hit_the_bound() {
    let spec = RightInfluencedSpec::new(3, 2).unwrap();
    for paradigm in Paradigm::ALL {
        for lookahead in 0..=2 {
            let r = verify_theorem(spec, paradigm, &ContextSpec::left_unbounded(lookahead)).unwrap();
            assert!(r.consistent, "{paradigm} L'={lookahead}: {:?}", r.problems);
            assert!((r.represented_mass - 1.0 / 3.0).abs() < 1e-12);
            assert!((r.mirrored_mass - 1.0 / 3.0).abs() < 1e-12);
            assert!((r.full_context_mass - 1.0).abs() < 1e-12);
            assert_eq!(r.per_sentence.len(), 3);
        }
    }
}

#[test]
fn report_json_round_trips() {
    let spec = RightInfluencedSpec::new(2, 1).unwrap();
    let r = verify_theorem(spec, Paradigm::Gates, &ContextSpec::window(2, 1)).unwrap();
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["paradigm"], "gates");
    assert_eq!(json["m"], 2);
    let back: TheoremReport = serde_json::from_value(json).unwrap();
    assert_eq!(back, r);
    for p in Paradigm::ALL {
        assert_eq!(p.to_string().parse::<Paradigm>().unwrap(), p);
    }
}
