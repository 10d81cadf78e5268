use pcfg_sandbox::gen::{random_binary_tree, random_labeled_tree};
use pcfg_sandbox::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn binary_tree(n: usize, seed: u64) -> ParseTree {
    random_labeled_tree(&mut ChaCha8Rng::seed_from_u64(seed), n, &["A", "B", "C"])
}

/// Trees with any arity, including unary chains over leaves and phrases.
fn nary_tree<R: Rng>(rng: &mut R, tokens: &[String], depth: usize) -> ParseTree {
    let label = ["S", "NP", "VP", "PP"][rng.gen_range(0..4)];
    if tokens.len() == 1 {
        let leaf = ParseTree::leaf(tokens[0].clone());
        return match rng.gen_range(0..3) {
            0 if depth > 0 => leaf,
            0 | 1 => ParseTree::node(label, vec![leaf]),
            _ => ParseTree::node(label, vec![ParseTree::node("N", vec![leaf])]),
        };
    }
    let parts = rng.gen_range(2..=tokens.len().min(4));
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, tokens.len() - 1, parts - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut children = Vec::new();
    let mut start = 0;
    for end in cuts.into_iter().chain([tokens.len()]) {
        children.push(nary_tree(rng, &tokens[start..end], depth + 1));
        start = end;
    }
    let node = ParseTree::node(label, children);
    if depth > 0 && rng.gen_bool(0.2) {
        ParseTree::node("X", vec![node])
    } else {
        node
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distances_round_trip(n in 2usize..16, seed: u64) {
        let t = binary_tree(n, seed);
        let d = distances_from_tree(&t).unwrap();
        prop_assert_eq!(d.values().len(), n - 1);
        let induced = induce_tree(&t.yield_of(), &d).unwrap();
        prop_assert!(!induced.tie);
        prop_assert!(induced.tree.same_shape(&t));
    }

    #[test]
    fn induction_ignores_monotone_rescaling(n in 2usize..12, seed: u64, scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let t = random_binary_tree(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let d = distances_from_tree(&t).unwrap();
        let warped = DistanceSeq(d.values().iter().map(|x| (scale * x + shift).exp()).collect());
        let a = induce_tree(&t.yield_of(), &d).unwrap();
        let b = induce_tree(&t.yield_of(), &warped).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn gate_encoding_round_trips(n in 2usize..14, seed: u64) {
        let t = binary_tree(n, seed);
        let g = gates_from_tree(&t).unwrap();
        prop_assert!(validate_gates(&g).is_clean());
        let d = distances_from_gates(&g).unwrap();
        prop_assert!(induce_tree(&t.yield_of(), &d).unwrap().tree.same_shape(&t));
    }

    #[test]
    fn gate_distances_stay_in_range_and_fall_when_gates_rise(
        dim in 2usize..8,
        raw in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 8), 1..6),
        which in any::<prop::sample::Index>(),
        bump in 0.0f64..=1.0,
    ) {
        let seq = GateSeq(raw.iter().map(|v| {
            let mut inner: Vec<f64> = v[..dim - 2].to_vec();
            inner.sort_by(f64::total_cmp);
            let mut dims = vec![0.0];
            dims.extend(inner);
            dims.push(1.0);
            GateVector(dims)
        }).collect());
        prop_assert!(validate_gates(&seq).is_clean());
        let d = distances_from_gates(&seq).unwrap();
        for x in d.values() {
            prop_assert!((0.0..=(dim - 1) as f64).contains(x));
        }
        // Raise one interior gate and repair monotonicity upwards.
        let t = which.index(seq.0.len());
        let mut raised = seq.clone();
        let dims = &mut raised.0[t].0;
        if dim > 2 {
            let j = 1 + which.index(dim - 2);
            dims[j] = (dims[j] + bump).min(1.0);
            for k in j + 1..dim {
                dims[k] = dims[k].max(dims[k - 1]);
            }
        }
        let e = distances_from_gates(&raised).unwrap();
        prop_assert!(e.at(t + 2) <= d.at(t + 2));
    }

    #[test]
    fn transitions_round_trip(n in 1usize..10, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tokens: Vec<String> = (1..=n).map(|i| format!("w{i}")).collect();
        let t = nary_tree(&mut rng, &tokens, 0);
        let z = oracle_transitions(&t).unwrap();
        prop_assert_eq!(execute(&t.yield_of(), &z).unwrap(), t.clone());
        prop_assert_eq!(z.blocks().len(), n);
        let text = z.to_string();
        let back: TransitionSeq = text.parse().unwrap();
        prop_assert_eq!(back, z);
    }

    #[test]
    fn f1_is_symmetric_and_one_on_self(n in 2usize..12, a: u64, b: u64) {
        let x = random_binary_tree(&mut ChaCha8Rng::seed_from_u64(a), n);
        let y = random_binary_tree(&mut ChaCha8Rng::seed_from_u64(b), n);
        let xy = unlabeled_f1(&x, &y).unwrap();
        let yx = unlabeled_f1(&y, &x).unwrap();
        prop_assert!((xy.f1 - yx.f1).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&xy.f1));
        prop_assert_eq!(unlabeled_f1(&x, &x).unwrap().f1, 1.0);
        prop_assert_eq!(xy.f1 == 1.0, x.same_shape(&y));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampled_trees_never_outweigh_their_sentence(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gen::random_cnf_grammar(&mut rng, 4, 3);
        let mut sampler = Sampler::new(g.grammar(), seed).with_cap(200);
        for _ in 0..5 {
            let Ok((tree, s)) = sampler.sample() else { continue };
            if s.len() > 8 {
                continue;
            }
            let lp = g.grammar().tree_log_prob(&tree).unwrap();
            let inside = inside_log_prob(&g, &s).unwrap();
            prop_assert!(lp <= inside + 1e-9, "{lp} > {inside} for {s}");
            let best = cky_viterbi(&g, &s).unwrap();
            prop_assert!(lp <= best.log_prob + 1e-9);
        }
    }

    #[test]
    fn cnf_conversion_preserves_string_probabilities(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gen::random_non_cnf_grammar(&mut rng, 4, 2);
        let cnf = to_cnf(&g).unwrap();
        prop_assert!(cnf.validate().is_clean());
        let terminals: Vec<String> = g.terminals().iter().cloned().collect();
        for _ in 0..6 {
            let len = rng.gen_range(1..=5);
            let s = Sentence::new((0..len).map(|_| terminals[rng.gen_range(0..terminals.len())].clone()));
            let want = oracle::sentence_probability(&g, &s);
            let got = inside_log_prob(&cnf, &s).map(f64::exp).unwrap_or(0.0);
            prop_assert!((want - got).abs() <= 1e-9 * want.max(1.0), "{s}: {want} vs {got}");
        }
    }
}

/// Every assignment of small integers to the context keys, scored by running
/// tree induction. Independent of the optimizer's constraint graph.
fn brute_force_distance_optimum(corpus: &[CorpusItem], spec: &ContextSpec) -> f64 {
    let mut keys: Vec<String> = corpus
        .iter()
        .flat_map(|c| (2..=c.sentence.len()).map(|t| context_key(&c.sentence, t, spec)))
        .collect();
    keys.sort();
    keys.dedup();
    let k = keys.len();
    let mut values = vec![0usize; k];
    let mut best = 0.0f64;
    loop {
        let predictor = TabulatedPredictor {
            spec: *spec,
            table: keys.iter().cloned().zip(values.iter().map(|&v| v as f64)).collect(),
        };
        best = best.max(represented_mass(corpus, |s| predictor.predict(s).map(Prediction::from)));
        let mut i = 0;
        while i < k {
            values[i] += 1;
            if values[i] < k {
                break;
            }
            values[i] = 0;
            i += 1;
        }
        if i == k {
            return best;
        }
    }
}

fn small_corpus(seed: u64) -> Vec<CorpusItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus: Vec<CorpusItem> = Vec::new();
    let size = rng.gen_range(2..=6);
    while corpus.len() < size {
        let n = rng.gen_range(2..=4);
        let tokens: Vec<String> = (0..n).map(|_| ["a", "b"][rng.gen_range(0..2)].to_string()).collect();
        let shape = random_binary_tree(&mut rng, n);
        let gold = relabel(&shape, &mut tokens.iter());
        let sentence = Sentence::new(tokens);
        if corpus.iter().any(|c| c.sentence == sentence) {
            continue;
        }
        corpus.push(CorpusItem { sentence, gold, prob: rng.gen_range(0.05..1.0) });
    }
    corpus
}

fn relabel<'a>(t: &ParseTree, tokens: &mut impl Iterator<Item = &'a String>) -> ParseTree {
    if t.is_leaf() {
        return ParseTree::leaf(tokens.next().unwrap().clone());
    }
    ParseTree::node(t.label(), t.children().iter().map(|c| relabel(c, tokens)).collect())
}

#[test]
fn distance_optimizer_matches_brute_force() {
    let spec = ContextSpec::window(1, 0);
    let mut checked = 0;
    for seed in 0..400u64 {
        let corpus = small_corpus(seed);
        let keys: std::collections::BTreeSet<String> = corpus
            .iter()
            .flat_map(|c| (2..=c.sentence.len()).map(|t| context_key(&c.sentence, t, &spec)))
            .collect();
        if keys.len() > 6 {
            continue;
        }
        let fit = fit_best_restricted_distance(&corpus, &spec);
        let brute = brute_force_distance_optimum(&corpus, &spec);
        assert!(fit.exact);
        assert!((fit.represented_mass - brute).abs() < 1e-9, "seed {seed}: {} vs {brute}", fit.represented_mass);
        assert!((fit.optimum - fit.represented_mass).abs() < 1e-9);
        let gates = best_restricted_gate_distance(&corpus, &spec);
        assert!((gates.represented_mass - brute).abs() < 1e-9, "seed {seed}: gates");
        checked += 1;
    }
    assert!(checked > 50, "only {checked} corpora small enough");
}

#[test]
fn full_context_represents_everything() {
    for seed in 0..50u64 {
        let corpus = small_corpus(seed);
        let total: f64 = corpus.iter().map(|c| c.prob).sum();
        let d = fit_best_restricted_distance(&corpus, &ContextSpec::full_sentence());
        assert!((d.represented_mass - total).abs() < 1e-9);
        let p = fit_best_restricted_policy(&corpus, PolicyContext::full_sentence());
        assert!((p.represented_mass - total).abs() < 1e-9);
    }
}

#[test]
fn fitted_predictors_are_functions_of_the_key() {
    // Two sentences sharing every key get the same distances, whatever the gold.
    let spec = ContextSpec::window(1, 0);
    for seed in 0..100u64 {
        let corpus = small_corpus(seed);
        let fit = fit_best_restricted_distance(&corpus, &spec);
        for a in &corpus {
            for b in &corpus {
                if a.sentence.len() != b.sentence.len() {
                    continue;
                }
                let (da, db) = (fit.predictor.distances(&a.sentence), fit.predictor.distances(&b.sentence));
                for t in 2..=a.sentence.len() {
                    if context_key(&a.sentence, t, &spec) == context_key(&b.sentence, t, &spec) {
                        assert_eq!(da.as_ref().map(|d| d.at(t)), db.as_ref().map(|d| d.at(t)));
                    }
                }
            }
        }
    }
}
