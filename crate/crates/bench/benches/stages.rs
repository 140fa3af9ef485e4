use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dagfault_core::attribution::{background_sample, explain_model, CoalitionBudget};
use dagfault_core::causal::{notears, pc, rfci, ConstraintConfig, NotearsConfig};
use dagfault_core::classifiers::{fit, ModelKind, ModelSpec};
use dagfault_core::synth::{default_names, tep_like, LinearSem, SemConfig, TepLikeConfig};

fn causal(c: &mut Criterion) {
    let sem = LinearSem::random(&SemConfig { n_vars: 11, edge_prob: 0.3, ..Default::default() }, 1);
    let x = sem.sample(2000, 1);
    let names = default_names(11);
    let cfg = ConstraintConfig::default();
    c.bench_function("pc_11v_2000", |b| b.iter(|| pc(black_box(x.view()), &names, &cfg).unwrap()));
    c.bench_function("rfci_11v_2000", |b| b.iter(|| rfci(black_box(x.view()), &names, &cfg).unwrap()));
    let mut g = c.benchmark_group("slow");
    g.sample_size(10);
    g.bench_function("notears_11v_2000", |b| {
        b.iter(|| notears(black_box(x.view()), &names, 0.05, &NotearsConfig::default()).unwrap())
    });
    g.finish();
}

fn classify_and_explain(c: &mut Criterion) {
    let ds =
        tep_like(&TepLikeConfig { n_normal: 300, n_per_fault: 30, faults: vec![1, 2, 4, 6], ..Default::default() }, 2)
            .unwrap();
    let spec = ModelSpec::new(ModelKind::Knn, Default::default(), 0);
    c.bench_function("knn_fit_52v", |b| b.iter(|| fit(&spec, black_box(&ds)).unwrap()));
    let model = fit(&spec, &ds).unwrap();
    let bg = background_sample(&ds, 50, 3);
    let sample = background_sample(&ds, 5, 4);
    let mut g = c.benchmark_group("slow");
    g.sample_size(10);
    g.bench_function("kernel_shap_knn_5rows", |b| {
        b.iter(|| explain_model(&model, black_box(&sample), &bg, &CoalitionBudget::default(), 5).unwrap())
    });
    g.finish();
}

criterion_group!(benches, causal, classify_and_explain);
criterion_main!(benches);
