use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use textsep::corpus::{default_classes, generate_corpus, Corpus, CorpusConfig, KnowledgeMode};
use textsep::dsp::StftConfig;
use textsep::mixer::GainPolicy;
use textsep::separator::Objective;
use textsep_cli::config::{read_document, EvalJob, MixgenJob};
use textsep_cli::{
    run_eval_dirs, run_eval_manifests, run_mixgen, run_parse, run_separation, run_train, CliError, Estimator,
    MixgenOptions, PipelineConfig, Preset, RunOutcome, RunStatus, TrainJob,
};

#[derive(Parser)]
#[command(name = "textsep", version, about = "Text-conditioned audio source separation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Enriched,
    ClassOnly,
}

impl From<Mode> for KnowledgeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Enriched => KnowledgeMode::Enriched,
            Mode::ClassOnly => KnowledgeMode::ClassOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Default,
    Small,
    Micro,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    MultiLevel,
    SingleLevel,
}

#[derive(Subcommand)]
enum Command {
    /// Write the toy corpus (WAVs, index.json, descriptors).
    Corpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        clips_per_class: usize,
        #[arg(long, default_value_t = 1.0)]
        clip_seconds: f64,
    },
    /// Generate four-source mixture trees with manifests and a caption registry.
    Mixgen {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corpus directory; the built-in toy corpus when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Draw from held-out clips.
        #[arg(long)]
        held_out: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a separator and write a checkpoint plus a per-epoch CSV.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        steps_per_epoch: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Caption, parse and separate a mixture: one WAV per parsed source.
    Separate {
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        captions: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Caption and parse only.
    Parse {
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        captions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score separations: estimate/reference directories, or mixture
    /// manifests separated by a checkpoint or the oracle.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        estimates: Option<PathBuf>,
        #[arg(long)]
        references: Option<PathBuf>,
        #[arg(long)]
        manifests: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn pipeline_config(
    config: Option<&Path>,
    checkpoint: Option<PathBuf>,
    captions: Option<PathBuf>,
    parallelism: Option<usize>,
    out: Option<PathBuf>,
) -> Result<PipelineConfig, CliError> {
    let mut cfg = match config {
        Some(p) => read_document(p)?,
        None => PipelineConfig::default(),
    };
    if checkpoint.is_some() {
        cfg.checkpoint = checkpoint;
    }
    if captions.is_some() {
        cfg.captioner.registry = captions;
    }
    if let Some(n) = parallelism {
        cfg.parallelism = n;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(outcome: RunOutcome) -> Result<(), CliError> {
    println!("{}", outcome.manifest_path.display());
    if outcome.manifest.status == RunStatus::Empty {
        eprintln!("warning: no sources parsed; wrote an empty manifest");
    }
    match outcome.error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Corpus { out, seed, clips_per_class, clip_seconds } => {
            let cfg = CorpusConfig { seed, clips_per_class, clip_seconds, ..CorpusConfig::default() };
            generate_corpus(&default_classes(), &cfg, &out)?;
            println!("{}", out.join("index.json").display());
        }
        Command::Mixgen { config, corpus, count, seed, mode, held_out, out } => {
            let mut job: MixgenJob = match &config {
                Some(p) => read_document(p)?,
                None => MixgenJob::default(),
            };
            job.corpus = corpus.or(job.corpus);
            job.count = count.unwrap_or(job.count);
            job.seed = seed.unwrap_or(job.seed);
            job.knowledge_mode = mode.map(Into::into).unwrap_or(job.knowledge_mode);
            job.held_out |= held_out;
            let out = out.or(job.out).ok_or_else(|| CliError::Config("mixgen needs --out".into()))?;
            let corpus = match &job.corpus {
                Some(root) => Corpus::load(root)?,
                None => Corpus::generate(&default_classes(), &CorpusConfig::default())?,
            };
            let opts = MixgenOptions {
                count: job.count,
                seed: job.seed,
                knowledge_mode: job.knowledge_mode,
                held_out: job.held_out,
                gain: GainPolicy::default(),
            };
            let (path, _) = run_mixgen(&corpus, &opts, &out)?;
            println!("{}", path.display());
        }
        Command::Train { config, corpus, preset, epochs, steps_per_epoch, seed, objective, mode, resume, out } => {
            let mut job = match &config {
                Some(p) => TrainJob::load(p)?,
                None => TrainJob::default(),
            };
            job.corpus = corpus.or(job.corpus);
            if let Some(p) = preset {
                job.separator = None;
                job.preset = match p {
                    PresetArg::Default => Preset::Default,
                    PresetArg::Small => Preset::Small,
                    PresetArg::Micro => Preset::Micro,
                    PresetArg::Full => Preset::Full,
                };
            }
            job.train.epochs = epochs.unwrap_or(job.train.epochs);
            job.train.steps_per_epoch = steps_per_epoch.unwrap_or(job.train.steps_per_epoch);
            job.train.rng_seed = seed.unwrap_or(job.train.rng_seed);
            if let Some(o) = objective {
                job.train.objective = match o {
                    ObjectiveArg::MultiLevel => Objective::MultiLevel,
                    ObjectiveArg::SingleLevel => Objective::SingleLevel,
                };
            }
            job.knowledge_mode = mode.map(Into::into).unwrap_or(job.knowledge_mode);
            let res = run_train(&job, &out, resume.as_deref())?;
            println!("{}\n{}", res.checkpoint.display(), res.csv.display());
        }
        Command::Separate { input, config, checkpoint, captions, parallelism, out } => {
            let cfg = pipeline_config(config.as_deref(), checkpoint, captions, parallelism, out)?;
            finish(run_separation(&input, &cfg, &cfg.output_dir))?;
        }
        Command::Parse { input, config, captions, out } => {
            let cfg = pipeline_config(config.as_deref(), None, captions, None, out)?;
            finish(run_parse(&input, &cfg, &cfg.output_dir))?;
        }
        Command::Evaluate { config, estimates, references, manifests, checkpoint, oracle, out } => {
            let mut job: EvalJob = match &config {
                Some(p) => read_document(p)?,
                None => EvalJob::default(),
            };
            job.estimates = estimates.or(job.estimates);
            job.references = references.or(job.references);
            job.manifests = manifests.or(job.manifests);
            job.checkpoint = checkpoint.or(job.checkpoint);
            job.oracle |= oracle;
            let out = out.or(job.out).ok_or_else(|| CliError::Config("evaluate needs --out".into()))?;
            let report = match (&job.estimates, &job.references, &job.manifests) {
                (Some(e), Some(r), None) => run_eval_dirs(e, r)?,
                (None, None, Some(m)) if job.oracle => run_eval_manifests(m, Estimator::Oracle, &StftConfig::default())?,
                (None, None, Some(m)) => {
                    let ck = job
                        .checkpoint
                        .as_ref()
                        .ok_or_else(|| CliError::Config("--manifests needs --checkpoint or --oracle".into()))?;
                    let model = textsep_cli::eval::load_checkpoint_model(ck)?;
                    let stft = model.config.stft;
                    run_eval_manifests(m, Estimator::Model(&model), &stft)?
                }
                _ => return Err(CliError::Config("give --estimates with --references, or --manifests".into())),
            };
            report.write(&out)?;
            println!(
                "{}\nmean SDR {:.3} ± {:.3} dB, mean SIR {:.3} ± {:.3} dB",
                out.display(),
                report.report.mean_sdr,
                report.report.std_sdr,
                report.report.mean_sir,
                report.report.std_sir
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
