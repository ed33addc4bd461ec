use std::path::{Path, PathBuf};

use textsep::corpus::{default_classes, Corpus, CorpusConfig};
use textsep::separator::{resume, write_epoch_csv, Checkpoint, ClipPart, ClipPool, EpochLog, SeparatorModel, TrainState};
use textsep::Error;

use crate::config::TrainJob;
use crate::error::CliError;

pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub csv: PathBuf,
    pub logs: Vec<EpochLog>,
}

/// The job's corpus, or the built-in toy corpus generated in memory.
pub fn job_corpus(job: &TrainJob) -> Result<Corpus, CliError> {
    Ok(match &job.corpus {
        Some(root) => Corpus::load(root)?,
        None => Corpus::generate(&default_classes(), &CorpusConfig::default())?,
    })
}

/// `<checkpoint stem>.csv` next to the checkpoint.
pub fn csv_path_for(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("csv")
}

/// Trains (or resumes from `resume_from`), saving the checkpoint and CSV
/// after every epoch. Divergence writes the last good state to `<out stem>.last_good.ckpt` and
/// reports that path.
pub fn run_train(job: &TrainJob, out: &Path, resume_from: Option<&Path>) -> Result<TrainOutput, CliError> {
    job.validate()?;
    let corpus = job_corpus(job)?;
    let classes = job.classes.clone().unwrap_or_else(|| corpus.class_ids());
    let pool = ClipPool::from_corpus(&corpus, &classes, job.knowledge_mode, ClipPart::Train)?;
    let csv = csv_path_for(out);
    let (state, mut logs) = match resume_from {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let state = ck.into_train_state(Some(job.train))?;
            let done = state.epoch;
            let logs = read_epoch_csv(&csv_path_for(p))?.into_iter().filter(|l| l.epoch < done).collect();
            (state, logs)
        }
        None => (TrainState::new(SeparatorModel::new(job.separator_config())?, job.train), Vec::new()),
    };
    let target = state.train_config.epochs;
    let mut state = state;
    while state.epoch < target {
        state.train_config.epochs = state.epoch + 1;
        let step = resume(state, &pool, |log| {
            log::info!("epoch {} lr {:.2e} loss {:.6} ({:.1}s)", log.epoch, log.lr, log.mean_loss, log.wall_seconds);
            logs.push(log.clone());
        });
        state = match step {
            Ok(s) => s,
            Err(Error::TrainingDiverged { epoch, step, mut last_good }) => {
                last_good.train_config.epochs = target;
                let path = out.with_extension("last_good.ckpt");
                Checkpoint::from_state(&last_good).save(&path)?;
                return Err(CliError::Diverged {
                    message: format!("training diverged at epoch {epoch}, step {step}; last good state: {}", path.display()),
                    checkpoint: Some(path),
                });
            }
            Err(e) => return Err(e.into()),
        };
        state.train_config.epochs = target;
        Checkpoint::from_state(&state).save(out)?;
        write_epoch_csv(&csv, &logs)?;
    }
    if logs.is_empty() || !out.exists() {
        Checkpoint::from_state(&state).save(out)?;
        write_epoch_csv(&csv, &logs)?;
    }
    Ok(TrainOutput { checkpoint: out.to_path_buf(), csv, logs })
}

/// Reads a CSV written by `write_epoch_csv`; missing file means no rows.
pub fn read_epoch_csv(path: &Path) -> Result<Vec<EpochLog>, CliError> {
    let Ok(text) = std::fs::read_to_string(path) else { return Ok(Vec::new()) };
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || CliError::Other(format!("{}: malformed row {l:?}", path.display()));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(EpochLog {
                epoch: f[0].parse().map_err(|_| bad())?,
                lr: f[1].parse().map_err(|_| bad())?,
                mean_loss: f[2].parse().map_err(|_| bad())?,
                wall_seconds: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
