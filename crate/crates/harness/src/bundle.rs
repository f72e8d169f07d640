//! Generated training and test data on disk: `network.json`, `train.csv`,
//! `test.csv` and a `bundle.json` with seeds, policies and file hashes.

use std::fs;
use std::path::Path;

use heteroinf::bn::BayesianNetwork;
use heteroinf::sampling::{
    build_test_set, build_training_set, read_dataset_csv, read_testset_csv, synth_markov_border, write_dataset_csv,
    write_testset_csv, Dataset, EvidencePolicy, SamplerKind, TestSet, VeOracle,
};
use heteroinf::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::NetworkSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub source: NetworkSource,
    pub train_size: usize,
    pub test_size: usize,
    pub sampler: SamplerKind,
    pub seed_data: u64,
    pub seed_test: u64,
}

impl DataSpec {
    pub fn new(source: NetworkSource, seed_data: u64, seed_test: u64) -> Self {
        Self { source, train_size: 10_000, test_size: 1_000, sampler: SamplerKind::Ancestral, seed_data, seed_test }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub name: String,
    pub spec: DataSpec,
    pub network: BayesianNetwork,
    pub dataset: Dataset,
    pub testset: TestSet,
    /// Observation policy used when drawing training masks.
    pub train_policy: EvidencePolicy,
    /// Target variable of a synthetic Markov-border problem.
    pub target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHashes {
    pub network: String,
    pub train_csv: String,
    pub test_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub name: String,
    pub spec: DataSpec,
    pub dataset: Dataset,
    pub testset: TestSet,
    pub train_policy: EvidencePolicy,
    pub target: Option<usize>,
    pub hashes: FileHashes,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

pub fn generate(spec: &DataSpec) -> Result<Bundle> {
    if spec.test_size == 0 {
        return Err(Error::Config("test size must be at least 1".into()));
    }
    let (network, policy, target) = match &spec.source {
        NetworkSource::Synth { kind, seed } => {
            let p = synth_markov_border(*kind, *seed);
            (p.network, p.policy, Some(p.target))
        }
        src => (src.load()?, EvidencePolicy::UniformCount, None),
    };
    let dataset = build_training_set(&network, spec.train_size, spec.sampler, spec.seed_data)?;
    let targets = target.map(|t| vec![t]);
    let testset = build_test_set(&network, spec.test_size, spec.seed_test, &policy, targets, &VeOracle)?;
    Ok(Bundle { name: spec.source.name(), spec: spec.clone(), network, dataset, testset, train_policy: policy, target })
}

impl Bundle {
    pub fn write(&self, dir: &Path) -> Result<BundleMeta> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let net_json = self.network.to_canonical_json();
        let mut train = Vec::new();
        write_dataset_csv(&self.network, &self.dataset, &mut train)?;
        let mut test = Vec::new();
        write_testset_csv(&self.network, &self.testset, &mut test)?;
        let meta = BundleMeta {
            name: self.name.clone(),
            spec: self.spec.clone(),
            dataset: self.dataset.clone(),
            testset: self.testset.clone(),
            train_policy: self.train_policy.clone(),
            target: self.target,
            hashes: FileHashes {
                network: self.dataset.network.hash.clone(),
                train_csv: sha256_hex(&train),
                test_csv: sha256_hex(&test),
            },
        };
        for (file, bytes) in [
            ("network.json", net_json.into_bytes()),
            ("train.csv", train),
            ("test.csv", test),
            ("bundle.json", serde_json::to_vec_pretty(&meta)?),
        ] {
            let p = dir.join(file);
            fs::write(&p, bytes).map_err(|e| io_err(&p, e))?;
        }
        Ok(meta)
    }

    /// Reads a bundle back and checks every file against its recorded hash.
    pub fn load(dir: &Path) -> Result<Bundle> {
        let read = |file: &str| {
            let p = dir.join(file);
            fs::read(&p).map_err(|e| io_err(&p, e))
        };
        let meta: BundleMeta = serde_json::from_slice(&read("bundle.json")?)?;
        let network = BayesianNetwork::from_canonical_json(&String::from_utf8_lossy(&read("network.json")?))?;
        let hash = heteroinf::sampling::network_hash(&network);
        if hash != meta.hashes.network {
            return Err(Error::Alignment(format!("network hash {hash} does not match bundle {}", meta.hashes.network)));
        }
        let train = read("train.csv")?;
        let test = read("test.csv")?;
        if sha256_hex(&train) != meta.hashes.train_csv || sha256_hex(&test) != meta.hashes.test_csv {
            return Err(Error::Alignment("data files do not match their recorded hashes".into()));
        }
        let mut dataset = meta.dataset;
        dataset.samples = read_dataset_csv(&network, train.as_slice())?;
        let mut testset = meta.testset;
        testset.cases = read_testset_csv(&network, test.as_slice())?;
        Ok(Bundle {
            name: meta.name,
            spec: meta.spec,
            network,
            dataset,
            testset,
            train_policy: meta.train_policy,
            target: meta.target,
        })
    }
}
