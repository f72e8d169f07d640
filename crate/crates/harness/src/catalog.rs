//! Benchmark networks shipped in `data/networks` and their reference statistics.

use std::path::{Path, PathBuf};

use heteroinf::bn::{parse_bif, BayesianNetwork, ReferenceStats};
use heteroinf::sampling::{synth_markov_border, SynthKind};
use heteroinf::{Error, Result};
use serde::{Deserialize, Serialize};

pub const BENCHMARKS: [&str; 6] = ["alarm", "asia", "child", "insurance", "survey", "win95pts"];

/// Reference node/edge/parameter counts and structure summaries.
pub fn reference_stats(name: &str) -> Option<ReferenceStats> {
    let r = |nodes, edges, parameters, avg_markov_blanket, avg_degree, max_in_degree| ReferenceStats {
        nodes,
        edges,
        parameters,
        avg_markov_blanket,
        avg_degree,
        max_in_degree,
    };
    Some(match name {
        "alarm" => r(37, 46, 509, 3.51, 2.49, 4),
        "asia" => r(8, 8, 18, 2.5, 2.0, 2),
        "child" => r(20, 25, 230, 3.0, 1.25, 2),
        "insurance" => r(27, 52, 984, 5.19, 3.85, 3),
        "survey" => r(6, 6, 21, 2.67, 2.0, 2),
        "win95pts" => r(76, 112, 574, 5.92, 2.95, 7),
        _ => return None,
    })
}

/// Reference EAR (AD, KL, ACC) per benchmark.
pub fn reference_ear(name: &str) -> Option<(f64, f64, f64)> {
    Some(match name {
        "alarm" => (0.05, 0.08, 0.96),
        "asia" => (0.07, 0.05, 0.91),
        "child" => (0.09, 0.13, 0.82),
        "insurance" => (0.09, 0.13, 0.82),
        "survey" => (0.02, 0.00, 0.98),
        "win95pts" => (0.07, 0.14, 0.93),
        _ => return None,
    })
}

/// Directory holding the benchmark `.bif` files; `HETEROINF_DATA` overrides it.
pub fn data_dir() -> PathBuf {
    match std::env::var_os("HETEROINF_DATA") {
        Some(d) => PathBuf::from(d),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/networks"),
    }
}

/// Where a network comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum NetworkSource {
    /// A benchmark name (`asia`) or a path to a `.bif` file.
    Bif { path: String },
    /// Synthetic Markov-border network with its CPT seed.
    Synth { kind: SynthKind, seed: u64 },
}

impl NetworkSource {
    /// `asia`, `path/to/net.bif`, or `synth-a[:seed]`.
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(rest) = spec.strip_prefix("synth-") {
            let (kind, seed) = match rest.split_once(':') {
                Some((k, s)) => (k, s.parse().map_err(|_| Error::Config(format!("bad synth seed in `{spec}`")))?),
                None => (rest, 0),
            };
            return Ok(NetworkSource::Synth { kind: kind.parse()?, seed });
        }
        Ok(NetworkSource::Bif { path: spec.to_string() })
    }

    pub fn name(&self) -> String {
        match self {
            NetworkSource::Bif { path } => Path::new(path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.clone()),
            NetworkSource::Synth { kind, .. } => format!("synth-{}", kind.label().to_lowercase()),
        }
    }

    fn bif_path(path: &str) -> PathBuf {
        let p = PathBuf::from(path);
        if p.extension().is_none() && !p.exists() {
            data_dir().join(format!("{path}.bif"))
        } else {
            p
        }
    }

    pub fn load(&self) -> Result<BayesianNetwork> {
        match self {
            NetworkSource::Bif { path } => {
                let file = Self::bif_path(path);
                let text = std::fs::read_to_string(&file)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", file.display())))?;
                parse_bif(&text)
            }
            NetworkSource::Synth { kind, seed } => Ok(synth_markov_border(*kind, *seed).network),
        }
    }
}

pub fn load_benchmark(name: &str) -> Result<BayesianNetwork> {
    NetworkSource::Bif { path: name.to_string() }.load()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sources() {
        assert_eq!(NetworkSource::parse("asia").unwrap().name(), "asia");
        assert_eq!(NetworkSource::parse("x/y/net.bif").unwrap().name(), "net");
        assert_eq!(
            NetworkSource::parse("synth-c:4").unwrap(),
            NetworkSource::Synth { kind: SynthKind::C, seed: 4 }
        );
        assert!(NetworkSource::parse("synth-q").is_err());
        assert!(reference_stats("nope").is_none());
    }

    #[test]
    fn benchmarks_load() {
        for name in BENCHMARKS {
            let net = load_benchmark(name).unwrap();
            assert_eq!(net.len(), reference_stats(name).unwrap().nodes);
        }
    }
}
