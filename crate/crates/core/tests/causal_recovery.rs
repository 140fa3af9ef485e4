mod common;

use dagfault_core::causal::{
    fci_with_test, ica_lingam, notears, pc, pc_with_test, rfci, rfci_with_test, ConstraintConfig, DSepOracle,
    LingamConfig, NotearsConfig,
};
use dagfault_core::consensus::{skeleton_hamming, structural_hamming};
use dagfault_core::synth::{LinearSem, Noise, SemConfig};

use common::*;

#[test]
fn pc_matches_equivalence_class_on_every_four_node_dag() {
    let dags = all_dags(4);
    assert_eq!(dags.len(), 543);
    let truth = cpdags_by_class(&dags, &names(4));
    for (parents, cpdag) in dags.iter().zip(&truth) {
        let o = DSepOracle::new(parents.clone());
        let g = pc_with_test(&o, &names(4), &ConstraintConfig::default()).unwrap().graph;
        assert_eq!(structural_hamming(&g, cpdag).unwrap(), 0, "{parents:?}");
    }
}

#[test]
fn pag_skeleton_equals_cpdag_skeleton_without_latents() {
    let dags = all_dags(4);
    let truth = cpdags_by_class(&dags, &names(4));
    for (parents, cpdag) in dags.iter().zip(&truth) {
        let o = DSepOracle::new(parents.clone());
        let f = fci_with_test(&o, &names(4), &ConstraintConfig::default()).unwrap().graph;
        let r = rfci_with_test(&o, &names(4), &ConstraintConfig::default()).unwrap().graph;
        assert_eq!(skeleton_hamming(&f, cpdag).unwrap(), 0, "fci {parents:?}");
        assert_eq!(skeleton_hamming(&r, cpdag).unwrap(), 0, "rfci {parents:?}");
        assert!(f.validate().is_ok() && r.validate().is_ok());
    }
}

fn five_node(seed: u64) -> LinearSem {
    LinearSem::random(&SemConfig { n_vars: 5, edge_prob: 0.4, noise: Noise::Uniform, ..Default::default() }, seed)
}

#[test]
fn independent_pair_gives_empty_graphs() {
    let sem = LinearSem::from_weights(ndarray::Array2::zeros((2, 2)), Noise::Gaussian, vec![1.0, 1.0]).unwrap();
    let x = sem.sample(5000, 3);
    let cfg = ConstraintConfig::default();
    assert_eq!(pc(x.view(), &names(2), &cfg).unwrap().graph.n_edges(), 0);
    assert_eq!(rfci(x.view(), &names(2), &cfg).unwrap().graph.n_edges(), 0);
}

#[test]
fn rfci_skeleton_agrees_with_fci() {
    let mut agree = 0;
    for seed in 0..50 {
        let sem = five_node(seed);
        let x = sem.sample(2000, seed);
        let cfg = ConstraintConfig::default();
        let f = dagfault_core::causal::fci(x.view(), &names(5), &cfg).unwrap().graph;
        let r = rfci(x.view(), &names(5), &cfg).unwrap().graph;
        if skeleton_hamming(&f, &r).unwrap() == 0 {
            agree += 1;
        }
    }
    assert!(agree >= 48, "{agree}/50");
}

#[test]
fn lingam_orders_uniform_noise_sems() {
    let mut ok = 0;
    for seed in 0..50 {
        let sem = five_node(seed);
        let x = sem.sample(5000, seed);
        let fit = ica_lingam(x.view(), &names(5), &LingamConfig::default(), seed).unwrap();
        if order_consistent(&fit.order, &sem.parents()) {
            ok += 1;
        }
    }
    assert!(ok >= 45, "{ok}/50");
}

#[test]
fn notears_recovers_equal_variance_sems() {
    let mut ok = 0;
    for seed in 0..50 {
        let sem = five_node(seed);
        let x = sem.sample(5000, seed);
        let fit = notears(x.view(), &names(5), 0.05, &NotearsConfig::default()).unwrap();
        if fit.h < 1e-8 && directed_distance(&sem.parents(), &fit.graph) <= 1 {
            ok += 1;
        }
    }
    assert!(ok >= 40, "{ok}/50");
}

#[test]
fn pc_skeleton_on_sampled_data() {
    let mut ok = 0;
    for seed in 0..50 {
        let sem = five_node(seed);
        let x = sem.sample(5000, seed);
        let g = pc(x.view(), &names(5), &ConstraintConfig::default()).unwrap().graph;
        if skeleton_distance(&sem.parents(), &g) <= 1 {
            ok += 1;
        }
    }
    assert!(ok >= 40, "{ok}/50");
}

#[test]
fn rfci_uses_fewer_tests_than_fci_on_dense_graphs() {
    for seed in 0..10 {
        let sem = LinearSem::random(&SemConfig { n_vars: 10, edge_prob: 0.5, ..Default::default() }, 100 + seed);
        let x = sem.sample(2000, seed);
        let cfg = ConstraintConfig::default();
        let f = dagfault_core::causal::fci(x.view(), &names(10), &cfg).unwrap();
        let r = rfci(x.view(), &names(10), &cfg).unwrap();
        assert!(r.ci_calls < f.ci_calls, "seed {seed}: rfci {} vs fci {}", r.ci_calls, f.ci_calls);
    }
}

#[test]
fn lingam_b_is_nearly_triangular_in_its_order() {
    let sem = five_node(7);
    let x = sem.sample(10_000, 7);
    let fit = ica_lingam(x.view(), &names(5), &LingamConfig::default(), 7).unwrap();
    let pos: Vec<usize> = (0..5).map(|v| fit.order.iter().position(|&o| o == v).unwrap()).collect();
    let (mut upper, mut total) = (0.0, 0.0);
    for i in 0..5 {
        for j in 0..5 {
            let m = fit.b[[i, j]].powi(2);
            total += m;
            if pos[j] > pos[i] {
                upper += m;
            }
        }
    }
    assert!(upper / total < 0.05, "{upper} / {total}");
}
