use std::path::PathBuf;

use heteroinf::bn::{parse_bif, BayesianNetwork, Evidence};
use heteroinf::exact::posterior_marginals_ve;
use heteroinf::sampling::{build_test_set, build_training_set, EvidencePolicy, GibbsConfig, SamplerKind, VeOracle};

fn load(name: &str) -> BayesianNetwork {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/networks").join(format!("{name}.bif"));
    parse_bif(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Largest deviation between sample frequencies and exact prior marginals.
fn marginal_error(network: &BayesianNetwork, sampler: SamplerKind, n: usize, seed: u64) -> f64 {
    let data = build_training_set(network, n, sampler, seed).unwrap();
    let exact = posterior_marginals_ve(network, &Evidence::empty()).unwrap();
    let mut worst: f64 = 0.0;
    for v in 0..network.len() {
        let mut counts = vec![0usize; network.cardinality(v)];
        for s in &data.samples {
            counts[s.0[v]] += 1;
        }
        for (c, p) in counts.iter().zip(exact.get(v).unwrap()) {
            worst = worst.max((*c as f64 / n as f64 - p).abs());
        }
    }
    worst
}

#[test]
fn ancestral_marginals_on_asia() {
    assert!(marginal_error(&load("asia"), SamplerKind::Ancestral, 100_000, 5) <= 0.01);
}

#[test]
fn gibbs_marginals_on_asia() {
    let cfg = GibbsConfig { burn_in: 5000, thinning: 10, chains: 200, allow_zero: true };
    assert!(marginal_error(&load("asia"), SamplerKind::Gibbs(cfg), 20_000, 5) <= 0.02);
}

#[test]
fn gibbs_marginals_on_alarm() {
    let cfg = GibbsConfig { burn_in: 5000, thinning: 10, chains: 1000, allow_zero: true };
    assert!(marginal_error(&load("alarm"), SamplerKind::Gibbs(cfg), 10_000, 9) <= 0.02);
}

#[test]
fn training_sets_are_seeded() {
    let asia = load("asia");
    let a = build_training_set(&asia, 10_000, SamplerKind::Ancestral, 7).unwrap();
    let b = build_training_set(&asia, 10_000, SamplerKind::Ancestral, 7).unwrap();
    assert_eq!(a.samples.len(), 10_000);
    assert_eq!(a, b);
    assert_eq!(a.samples, b.samples);
    assert_eq!(build_training_set(&asia, 1, SamplerKind::Ancestral, 7).unwrap().samples.len(), 1);
}

#[test]
fn survey_test_set_is_small_and_exact() {
    let survey = load("survey");
    let ts = build_test_set(&survey, 1000, 11, &EvidencePolicy::UniformCount, None, &VeOracle).unwrap();
    assert!(ts.len() <= 1000 && !ts.is_empty());
    let prior = posterior_marginals_ve(&survey, &Evidence::empty()).unwrap();
    for case in &ts.cases {
        for d in case.truth.marginals.values() {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        if case.evidence.is_empty() {
            assert_eq!(case.truth, prior);
        }
    }
}
