use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use disagree_lab::corpus::{self, CorpusStats};
use disagree_lab::experiment::{self, CorpusSource, ExperimentConfig};
use disagree_lab::kvconfig::KvConfig;
use disagree_lab::synthgen::{self, PopulationSpec};
use disagree_lab::{Error, ErrorKind, Result};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INTERNAL: i32 = 4;

/// Multi-annotator toxicity models with sociodemographic group layers.
#[derive(Debug, Parser)]
#[command(name = "disagree-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic annotator population.
    Generate {
        /// Population spec (flat key-value file).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the `seed` key of the spec.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Sample comments from a corpus until an annotator target is reached.
    Sample {
        /// Config with `corpus.*` keys, including `corpus.sample_target`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces `corpus.sample_seed`.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Run the cross-validation protocol and write result tables.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Replaces `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses every CPU.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Replaces `experiment.seed`.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Print the result tables of an experiment directory.
    Report {
        /// Results directory (defaults to --out).
        dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_stats(stats: &CorpusStats) {
    println!(
        "{} annotations, {} annotators, {} comments, {:.2}% toxic",
        stats.annotations,
        stats.annotators,
        stats.comments,
        100.0 * stats.toxic_fraction
    );
}

fn generate(config: &Path, out: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut kv = KvConfig::from_file(config)?;
    if let Some(seed) = seed_override {
        kv.set("seed", seed.to_string());
    }
    let spec = PopulationSpec::from_kv(&kv, "")?;
    kv.ensure_all_used()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (corpus, _) = synthgen::generate_to_dir(&spec, out)?;
    print_stats(&corpus::corpus_stats(&corpus));
    Ok(())
}

fn sample(config: &Path, out: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut kv = KvConfig::from_file(config)?;
    if let Some(seed) = seed_override {
        kv.set("corpus.sample_seed", seed.to_string());
    }
    let base = config.parent().unwrap_or(Path::new("."));
    let source = CorpusSource::from_kv(&kv, base)?;
    kv.ensure_all_used()?;
    if !matches!(source, CorpusSource::Files { sample: Some(_), .. }) {
        return Err(Error::config(
            "sample needs corpus.source = files and corpus.sample_target",
        ));
    }
    let corpus = experiment::load_corpus_source(&source)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    corpus::write_corpus(&corpus, out)?;
    print_stats(&corpus::corpus_stats(&corpus));
    Ok(())
}

fn run_experiment(
    config: &Path,
    out: Option<PathBuf>,
    jobs: usize,
    seed_override: Option<u64>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let outcome = experiment::run_experiment(&cfg, jobs)?;
    print!("{}", outcome.summary);
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    if !experiment::is_complete(dir) {
        log::warn!("{} does not hold a complete run", dir.display());
    }
    print!("{}", experiment::report::render_dir(dir)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out, seed_override } => generate(&config, &out, seed_override),
        Command::Sample { config, out, seed_override } => sample(&config, &out, seed_override),
        Command::Experiment { config, out, jobs, seed_override } => {
            run_experiment(&config, out, jobs, seed_override)
        }
        Command::Report { dir, out } => {
            let dir = dir
                .or(out)
                .ok_or_else(|| Error::config("report needs a results directory"))?;
            report(&dir)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DISAGREE_LAB_LOG", "error"))
        .init();
    let default_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(move |info| {
        default_hook(info);
        std::process::exit(EXIT_INTERNAL);
    }));

    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => EXIT_CONFIG,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Internal => EXIT_INTERNAL as u8,
            })
        }
    }
}
