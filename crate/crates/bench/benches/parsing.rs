use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use pcfg_sandbox::gen::{random_binary_tree, random_cnf_grammar};
use pcfg_sandbox::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sentence(rng: &mut ChaCha8Rng, g: &CnfPcfg, n: usize) -> Sentence {
    let ts: Vec<&String> = g.grammar().terminals().iter().collect();
    Sentence::new((0..n).map(|_| ts[rng.gen_range(0..ts.len())].clone()))
}

fn charts(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let g = random_cnf_grammar(&mut rng, 6, 3);
    let mut group = c.benchmark_group("chart");
    for n in [8, 16, 32] {
        let s = random_sentence(&mut rng, &g, n);
        group.bench_with_input(BenchmarkId::new("cky", n), &s, |b, s| b.iter(|| cky_viterbi(&g, black_box(s))));
        group.bench_with_input(BenchmarkId::new("inside", n), &s, |b, s| {
            b.iter(|| inside_log_prob(&g, black_box(s)))
        });
    }
    let s = random_sentence(&mut rng, &g, 8);
    group.bench_function("enumerate/8", |b| b.iter(|| enumerate_parses(&g, black_box(&s), 10_000)));
    group.finish();
}

fn encodings(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = random_binary_tree(&mut rng, 64);
    let s = t.yield_of();
    let d = distances_from_tree(&t).unwrap();
    c.bench_function("distances/induce/64", |b| b.iter(|| induce_tree(&s, black_box(&d))));
    c.bench_function("gates/from_tree/64", |b| b.iter(|| gates_from_tree(black_box(&t))));
    let z = oracle_transitions(&t).unwrap();
    c.bench_function("transitions/execute/64", |b| b.iter(|| execute(&s, black_box(&z))));
}

fn certification(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify_theorem");
    group.sample_size(10);
    for m in [4, 10] {
        let spec = RightInfluencedSpec::new(m, 3).unwrap();
        for p in Paradigm::ALL {
            group.bench_function(format!("{p}/m={m}"), |b| {
                b.iter(|| verify_theorem(spec, p, &ContextSpec::left_unbounded(3)).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, charts, encodings, certification);
criterion_main!(benches);
