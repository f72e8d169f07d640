//! Training data (full joint samples), labelled test sets, and the small
//! synthesized networks used to study inference from a Markov blanket.

mod io;

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::bn::{topological_order, Assignment, BayesianNetwork, Cpt, Evidence, Variable};
use crate::error::{Error, Result};
use crate::exact::{posterior_marginals_ve, PosteriorMarginals};
use crate::rng::{seeded, stream, SeededRng};

pub use io::{read_dataset_csv, read_testset_csv, write_dataset_csv, write_testset_csv};

/// Draws an index from a discrete distribution given a uniform draw in [0, 1).
fn categorical(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let mut target = u * total;
    for (i, &p) in probs.iter().enumerate() {
        if target < p {
            return i;
        }
        target -= p;
    }
    // rounding: fall back to the last state with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Exact forward sampler reusing a precomputed topological order.
#[derive(Debug, Clone)]
pub struct AncestralSampler<'a> {
    network: &'a BayesianNetwork,
    order: Vec<usize>,
    cards: Vec<usize>,
}

impl<'a> AncestralSampler<'a> {
    pub fn new(network: &'a BayesianNetwork) -> Result<Self> {
        Ok(Self {
            network,
            order: topological_order(network)?,
            cards: network.cardinalities(),
        })
    }

    pub fn sample(&self, rng: &mut SeededRng) -> Assignment {
        let mut values = vec![0usize; self.network.len()];
        for &v in &self.order {
            let row = self.network.cpt_row(v, &self.cards, &values);
            values[v] = categorical(row, rng.random::<f64>());
        }
        Assignment(values)
    }
}

pub fn ancestral_sample(network: &BayesianNetwork, rng: &mut SeededRng) -> Result<Assignment> {
    Ok(AncestralSampler::new(network)?.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub burn_in: usize,
    pub thinning: usize,
    /// Independent chains, each started from an ancestral draw. Samples are
    /// split as evenly as possible and concatenated chain by chain.
    pub chains: usize,
    /// Permit CPTs with zero entries (the chain may then be reducible).
    pub allow_zero: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { burn_in: 5000, thinning: 10, chains: 1, allow_zero: false }
    }
}

/// Systematic-scan Gibbs sampler over all variables.
pub fn gibbs_sample(
    network: &BayesianNetwork,
    rng: &mut SeededRng,
    config: &GibbsConfig,
    n: usize,
) -> Result<Vec<Assignment>> {
    if !config.allow_zero {
        if let Some(cpt) = network.cpts.iter().find(|c| c.table.iter().any(|&p| p <= 0.0)) {
            return Err(Error::ZeroSupport(network.variables[cpt.child].name.clone()));
        }
    }
    if config.thinning == 0 || config.chains == 0 {
        return Err(Error::Config("thinning and chains must be at least 1".into()));
    }
    let sampler = AncestralSampler::new(network)?;
    let cards = network.cardinalities();
    let kmax = cards.iter().copied().max().unwrap_or(0);
    let mut conditional = vec![0.0; kmax];
    let mut out = Vec::with_capacity(n);
    for chain in 0..config.chains {
        let quota = n / config.chains + usize::from(chain < n % config.chains);
        if quota == 0 {
            continue;
        }
        let mut state = sampler.sample(rng).0;
        let sweeps = config.burn_in + quota * config.thinning;
        for sweep in 1..=sweeps {
            for v in 0..network.len() {
                let k = cards[v];
                for s in 0..k {
                    state[v] = s;
                    let mut p = network.cpt_row(v, &cards, &state)[s];
                    for &c in network.children(v) {
                        if p == 0.0 {
                            break;
                        }
                        p *= network.cpt_row(c, &cards, &state)[state[c]];
                    }
                    conditional[s] = p;
                }
                if conditional[..k].iter().all(|&p| p <= 0.0) {
                    return Err(Error::ZeroSupport(network.variables[v].name.clone()));
                }
                state[v] = categorical(&conditional[..k], rng.random::<f64>());
            }
            if sweep > config.burn_in && (sweep - config.burn_in) % config.thinning == 0 {
                out.push(Assignment(state.clone()));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SamplerKind {
    Ancestral,
    Gibbs(GibbsConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkRef {
    pub name: String,
    pub hash: String,
}

impl NetworkRef {
    pub fn of(network: &BayesianNetwork) -> Self {
        Self { name: network.name.clone(), hash: network_hash(network) }
    }
}

/// SHA-256 of the canonical JSON form.
pub fn network_hash(network: &BayesianNetwork) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(network.to_canonical_json().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub network: NetworkRef,
    pub sampler: SamplerKind,
    pub seed: u64,
    #[serde(skip)]
    pub samples: Vec<Assignment>,
}

pub fn build_training_set(
    network: &BayesianNetwork,
    n: usize,
    sampler: SamplerKind,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("training set size must be at least 1".into()));
    }
    let mut rng = seeded(seed);
    let samples = match &sampler {
        SamplerKind::Ancestral => {
            let s = AncestralSampler::new(network)?;
            (0..n).map(|_| s.sample(&mut rng)).collect()
        }
        SamplerKind::Gibbs(cfg) => gibbs_sample(network, &mut rng, cfg, n)?,
    };
    Ok(Dataset { network: NetworkRef::of(network), sampler, seed, samples })
}

/// How evidence is drawn from a full sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvidencePolicy {
    /// Observed count uniform on {0, ..., M-1}, then a uniform subset of that size.
    UniformCount,
    /// Each listed variable observed independently with the given probability.
    Independent { observables: Vec<usize>, probability: f64 },
}

impl EvidencePolicy {
    pub fn draw(&self, sample: &Assignment, rng: &mut SeededRng) -> Evidence {
        match self {
            EvidencePolicy::UniformCount => {
                let m = sample.0.len();
                let count = rng.random_range(0..m.max(1));
                let mut chosen = index::sample(rng, m, count).into_vec();
                chosen.sort_unstable();
                chosen.into_iter().map(|v| (v, sample.0[v])).collect()
            }
            EvidencePolicy::Independent { observables, probability } => observables
                .iter()
                .filter(|_| rng.random::<f64>() < *probability)
                .map(|&v| (v, sample.0[v]))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub evidence: Evidence,
    pub truth: PosteriorMarginals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSet {
    pub network: NetworkRef,
    pub seed: u64,
    pub policy: EvidencePolicy,
    /// Variables scored by the metrics; `None` scores every variable.
    pub targets: Option<Vec<usize>>,
    #[serde(skip)]
    pub cases: Vec<TestCase>,
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// First `fraction` of the cases (rounded up) and the remainder.
    pub fn split(&self, fraction: f64) -> (TestSet, TestSet) {
        let head = ((self.cases.len() as f64) * fraction).ceil() as usize;
        let head = head.min(self.cases.len());
        let mut a = self.clone();
        let mut b = self.clone();
        a.cases.truncate(head);
        b.cases.drain(..head);
        (a, b)
    }
}

pub trait PosteriorOracle {
    fn posterior(&self, network: &BayesianNetwork, evidence: &Evidence) -> Result<PosteriorMarginals>;
}

/// Variable elimination.
pub struct VeOracle;

impl PosteriorOracle for VeOracle {
    fn posterior(&self, network: &BayesianNetwork, evidence: &Evidence) -> Result<PosteriorMarginals> {
        posterior_marginals_ve(network, evidence)
    }
}

impl<F> PosteriorOracle for F
where
    F: Fn(&BayesianNetwork, &Evidence) -> Result<PosteriorMarginals>,
{
    fn posterior(&self, network: &BayesianNetwork, evidence: &Evidence) -> Result<PosteriorMarginals> {
        self(network, evidence)
    }
}

/// Distinct evidence sets labelled with exact posteriors. Duplicate draws are
/// rejected; after `100 * max_n` attempts the set is returned as is.
pub fn build_test_set(
    network: &BayesianNetwork,
    max_n: usize,
    seed: u64,
    policy: &EvidencePolicy,
    targets: Option<Vec<usize>>,
    oracle: &dyn PosteriorOracle,
) -> Result<TestSet> {
    if max_n == 0 {
        return Err(Error::Config("test set size must be at least 1".into()));
    }
    let sampler = AncestralSampler::new(network)?;
    let mut rng = seeded(seed);
    let mut seen = HashSet::new();
    let mut cases = Vec::new();
    let mut attempts = 0;
    while cases.len() < max_n && attempts < 100 * max_n {
        attempts += 1;
        let sample = sampler.sample(&mut rng);
        let evidence = policy.draw(&sample, &mut rng);
        if !seen.insert(evidence.clone()) {
            continue;
        }
        let truth = oracle.posterior(network, &evidence)?;
        cases.push(TestCase { evidence, truth });
    }
    Ok(TestSet { network: NetworkRef::of(network), seed, policy: policy.clone(), targets, cases })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SynthKind {
    /// Parent to child: `P -> T`, observe P.
    A,
    /// Uncle to parent: `T -> C <- U`, observe U.
    B,
    /// Child to parent: `T -> C`, observe C.
    C,
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [SynthKind::A, SynthKind::B, SynthKind::C];

    pub fn label(self) -> &'static str {
        match self {
            SynthKind::A => "A",
            SynthKind::B => "B",
            SynthKind::C => "C",
        }
    }
}

impl std::str::FromStr for SynthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(SynthKind::A),
            "B" => Ok(SynthKind::B),
            "C" => Ok(SynthKind::C),
            other => Err(Error::Config(format!("unknown synthesized kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthProblem {
    pub kind: SynthKind,
    pub network: BayesianNetwork,
    pub target: usize,
    pub policy: EvidencePolicy,
}

/// Row drawn uniformly from the probability simplex (unit Dirichlet).
fn simplex_row(k: usize, rng: &mut SeededRng) -> Vec<f64> {
    let g: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|x| x / s).collect()
}

pub fn synth_markov_border(kind: SynthKind, seed: u64) -> SynthProblem {
    let mut rng = seeded(seed);
    let var = |n: &str| Variable::new(n, &["0", "1"]);
    let mut cpt = |child: usize, parents: Vec<usize>| {
        let rows = 1usize << parents.len();
        let table = (0..rows).flat_map(|_| simplex_row(2, &mut rng)).collect();
        Cpt { child, parents, table }
    };
    let (name, variables, cpts, target, observables) = match kind {
        SynthKind::A => {
            let cpts = vec![cpt(0, vec![]), cpt(1, vec![0])];
            ("synth-A", vec![var("P"), var("T")], cpts, 1, vec![0])
        }
        SynthKind::B => {
            let cpts = vec![cpt(0, vec![]), cpt(1, vec![]), cpt(2, vec![0, 1])];
            ("synth-B", vec![var("T"), var("U"), var("C")], cpts, 0, vec![1])
        }
        SynthKind::C => {
            let cpts = vec![cpt(0, vec![]), cpt(1, vec![0])];
            ("synth-C", vec![var("T"), var("C")], cpts, 0, vec![1])
        }
    };
    let network = BayesianNetwork::new(name, variables, cpts).expect("synthesized network is valid");
    SynthProblem {
        kind,
        network,
        target,
        policy: EvidencePolicy::Independent { observables, probability: 0.5 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HyperPrior {
    PointMass { value: f64 },
    Uniform { low: f64, high: f64 },
}

impl HyperPrior {
    fn draw(&self, rng: &mut SeededRng) -> f64 {
        match *self {
            HyperPrior::PointMass { value } => value,
            HyperPrior::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub prior: HyperPrior,
    pub draws: usize,
    pub mean_delta: f64,
    pub var_delta: f64,
    pub mean_alpha: f64,
    pub var_alpha: f64,
    /// Whether `Var[delta] >= Var[alpha]` held in this run.
    pub delta_variance_not_smaller: bool,
}

/// Monte Carlo moments of the child success probability
/// `delta = alpha*beta + gamma - alpha*gamma` with i.i.d. hyperparameters.
pub fn hyperprior_variance_report(prior: &HyperPrior, n_draws: usize, seed: u64) -> Result<VarianceReport> {
    if n_draws < 1000 {
        return Err(Error::Config("at least 1000 draws are required".into()));
    }
    let mut rng = stream(seed, 0xD17A);
    let mut deltas = Vec::with_capacity(n_draws);
    let mut alphas = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let (a, b, g) = (prior.draw(&mut rng), prior.draw(&mut rng), prior.draw(&mut rng));
        alphas.push(a);
        deltas.push(a * b + g - a * g);
    }
    let moments = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, var)
    };
    let (mean_delta, var_delta) = moments(&deltas);
    let (mean_alpha, var_alpha) = moments(&alphas);
    Ok(VarianceReport {
        prior: *prior,
        draws: n_draws,
        mean_delta,
        var_delta,
        mean_alpha,
        var_alpha,
        delta_variance_not_smaller: var_delta >= var_alpha,
    })
}
