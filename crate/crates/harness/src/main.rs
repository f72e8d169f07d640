use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use heteroinf::metrics::OraclePredictor;
use heteroinf::models::{ModelConfig, ModelKind, TrainedModel};
use heteroinf::sampling::{GibbsConfig, SamplerKind};
use heteroinf::{Error, Result};
use heteroinf_harness::bundle::{generate, io_err, Bundle, DataSpec};
use heteroinf_harness::catalog::NetworkSource;
use heteroinf_harness::experiment::{
    append_csv, check_compatible, default_model_config, emit_report, metrics_header, metrics_row, run_experiment,
    sweep, train_on, write_json, write_sweep_csv, ExperimentConfig, RunRecord, DEFAULT_THRESHOLDS,
};
use heteroinf_harness::study::{compare_nc, markov_border, write_markov_border, write_study, StudyConfig};

#[derive(Parser)]
#[command(name = "heteroinf", version, about = "Posterior inference with neural generative models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampler {
    Ancestral,
    Gibbs,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a training set and an exactly labelled test set.
    GenData {
        /// Benchmark name, path to a .bif file, or synth-a|b|c[:seed].
        #[arg(long)]
        network: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_data: u64,
        #[arg(long)]
        seed_test: u64,
        #[arg(long, default_value_t = 10_000)]
        train_size: usize,
        #[arg(long, default_value_t = 1_000)]
        test_size: usize,
        #[arg(long, value_enum, default_value_t = Sampler::Ancestral)]
        sampler: Sampler,
        #[arg(long, default_value_t = 5_000)]
        burn_in: usize,
        #[arg(long, default_value_t = 10)]
        thinning: usize,
        #[arg(long, default_value_t = 1)]
        chains: usize,
    },
    /// Train one model on a data bundle and write its checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_model: u64,
        /// JSON model configuration; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Target variable name (NC).
        #[arg(long)]
        target: Option<String>,
    },
    /// Score a checkpoint (or the exact oracle) on the held-out test cases.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        seed_predict: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        score_all_variables: bool,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Metrics over a grid of dominant-probability thresholds.
    SweepThreshold {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        seed_predict: u64,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        score_all_variables: bool,
    },
    /// All models on the synthetic Markov-border networks.
    MarkovBorder {
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<ModelKind>>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        train_size: usize,
    },
    /// EAR against the single-target NC on the synthetic networks.
    CompareNc {
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        train_size: usize,
    },
    /// Run a whole experiment from a JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Consolidate run records into one report.
    Report {
        #[arg(long, num_args = 0..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn load_model(bundle: &Bundle, path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let model = TrainedModel::from_json(&text)?;
    check_compatible(bundle, &model)?;
    Ok(model)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { network, out, seed_data, seed_test, train_size, test_size, sampler, burn_in, thinning, chains } => {
            let mut spec = DataSpec::new(NetworkSource::parse(&network)?, seed_data, seed_test);
            spec.train_size = train_size;
            spec.test_size = test_size;
            if let Sampler::Gibbs = sampler {
                spec.sampler = SamplerKind::Gibbs(GibbsConfig { burn_in, thinning, chains, ..GibbsConfig::default() });
            }
            let meta = generate(&spec)?.write(&out)?;
            println!("{}", serde_json::to_string_pretty(&meta.hashes)?);
        }
        Command::Train { data, model, out, seed_model, config, epochs, target } => {
            let bundle = Bundle::load(&data)?;
            let mut mc = match config {
                Some(p) => read_json::<ModelConfig>(&p)?,
                None => default_model_config(&bundle.spec.source, model, seed_model),
            };
            mc.kind = model;
            mc.seed = seed_model;
            if let Some(e) = epochs {
                mc.epochs = e;
            }
            if let Some(t) = target {
                mc.target = Some(bundle.network.index_of(&t).ok_or_else(|| Error::Config(format!("unknown variable `{t}`")))?);
            }
            let trained = train_on(&bundle, &mc)?;
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
            }
            std::fs::write(&out, trained.to_json()?).map_err(|e| io_err(&out, e))?;
            println!(
                "{} trained: {} epochs, best validation AD {:?}",
                model,
                trained.log.epochs.len(),
                trained.log.best_validation_ad
            );
        }
        Command::Eval { data, checkpoint, oracle, seed_predict, out, score_all_variables, threshold } => {
            let bundle = Bundle::load(&data)?;
            let grid = [threshold.unwrap_or(0.0)];
            let (label, seed, mut report) = if oracle {
                let o = OraclePredictor { network: &bundle.network };
                ("ORACLE".to_string(), seed_predict, sweep(&bundle, &o, seed_predict, &grid, score_all_variables)?.remove(0))
            } else {
                let m = load_model(&bundle, checkpoint.as_deref().expect("clap enforces"))?;
                (m.kind.label().to_string(), m.config.seed, sweep(&bundle, &m, seed_predict, &grid, score_all_variables)?.remove(0))
            };
            if threshold.is_none() {
                report.threshold = None;
            }
            std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            write_json(&out.join(format!("{}_{}.json", bundle.name, label.to_lowercase())), &report)?;
            let row = metrics_row(&bundle.name, &bundle.dataset.network.hash, &label, seed, &report);
            append_csv(&out.join("metrics.csv"), &metrics_header(), &row)?;
            println!("{}", row.join(","));
        }
        Command::SweepThreshold { data, checkpoint, oracle, seed_predict, grid, out, score_all_variables } => {
            let bundle = Bundle::load(&data)?;
            let grid = grid.unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
            if grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(Error::Config("thresholds must lie in [0, 1]".into()));
            }
            let reports = if oracle {
                sweep(&bundle, &OraclePredictor { network: &bundle.network }, seed_predict, &grid, score_all_variables)?
            } else {
                let m = load_model(&bundle, checkpoint.as_deref().expect("clap enforces"))?;
                sweep(&bundle, &m, seed_predict, &grid, score_all_variables)?
            };
            write_sweep_csv(&out, &reports)?;
        }
        Command::MarkovBorder { seeds, out, models, epochs, train_size } => {
            let mut c = StudyConfig::new(seeds, models.unwrap_or_else(|| ModelKind::TABLE.to_vec()));
            c.epochs = epochs;
            c.train_size = train_size;
            let result = markov_border(&c)?;
            write_markov_border(&result, &out)?;
        }
        Command::CompareNc { seeds, out, epochs, train_size } => {
            let mut c = StudyConfig::new(seeds, vec![]);
            c.epochs = epochs;
            c.train_size = train_size;
            write_study(&compare_nc(&c)?, &out)?;
        }
        Command::Run { config, out } => {
            let mut cfg: ExperimentConfig = read_json(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let record = run_experiment(&cfg)?;
            for r in &record.results {
                println!("{} {}: AD {:?} KL {:?} ACC {:?}", record.dataset, r.model, r.report.ad, r.report.kl, r.report.acc);
            }
        }
        Command::Report { runs, out } => {
            let records = runs.iter().map(|p| read_json::<RunRecord>(p)).collect::<Result<Vec<_>>>()?;
            let files = emit_report(&records, &out)?;
            println!("{}", serde_json::to_string_pretty(&files)?);
        }
    }
    Ok(())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Syntax { .. } => "syntax",
        Error::Config(_) => "config",
        Error::Alignment(_) => "alignment",
        Error::Diverged { .. } => "diverged",
        Error::Json(_) => "json",
        _ => "inference",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": error_kind(&e), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
