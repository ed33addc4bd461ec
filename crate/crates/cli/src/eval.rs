use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use textsep::dsp::wav::read_wav;
use textsep::dsp::{stft, StftConfig, Waveform};
use textsep::metrics::{evaluate_batch, EvalReport};
use textsep::mixer::{MixtureManifest, PromptNode};
use textsep::separator::{separate, Checkpoint, MaskPredictor, OracleMasks};

use crate::config::SCHEMA_VERSION;
use crate::error::{io_err, CliError};

/// Evaluation report as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    /// `directories`, `oracle` or `checkpoint`.
    pub mode: String,
    pub case_names: Vec<String>,
    #[serde(flatten)]
    pub report: EvalReport,
}

impl ReportFile {
    /// Writes `<out>` (JSON) and `<out stem>.csv` (one summary row).
    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let json = serde_json::to_string_pretty(self).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(out, json + "\n").map_err(|e| io_err(out, e))?;
        let csv = out.with_extension("csv");
        std::fs::write(&csv, self.report.csv_summary()).map_err(|e| io_err(&csv, e))
    }
}

fn missing(p: &Path) -> CliError {
    CliError::Io(format!("missing: {}", p.display()))
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| if want_dirs { p.is_dir() } else { p.extension().is_some_and(|e| e == "wav") })
        .collect();
    out.sort();
    Ok(out)
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<Waveform>, CliError> {
    paths.iter().map(|p| Ok(read_wav(p, None)?)).collect()
}

/// Cases are the subdirectories of `references` (or `references` itself
/// when it has none); each is matched by name under `estimates`. WAVs in a
/// case are best-matched regardless of their names.
pub fn run_eval_dirs(estimates: &Path, references: &Path) -> Result<ReportFile, CliError> {
    if !references.is_dir() {
        return Err(missing(references));
    }
    if !estimates.is_dir() {
        return Err(missing(estimates));
    }
    let sub = sorted_entries(references, true)?;
    let pairs: Vec<(String, PathBuf, PathBuf)> = if sub.is_empty() {
        vec![(".".into(), estimates.to_path_buf(), references.to_path_buf())]
    } else {
        sub.iter()
            .map(|r| {
                let name = r.file_name().expect("dir name").to_string_lossy().into_owned();
                (name.clone(), estimates.join(&name), r.clone())
            })
            .collect()
    };
    let mut cases = Vec::new();
    let mut names = Vec::new();
    for (name, est_dir, ref_dir) in pairs {
        if !est_dir.is_dir() {
            return Err(missing(&est_dir));
        }
        let refs = read_all(&sorted_entries(&ref_dir, false)?)?;
        let est = read_all(&sorted_entries(&est_dir, false)?)?;
        if refs.is_empty() || est.is_empty() {
            return Err(CliError::Io(format!("case {name}: no WAV files")));
        }
        cases.push((est, refs));
        names.push(name);
    }
    Ok(ReportFile { schema_version: SCHEMA_VERSION, mode: "directories".into(), case_names: names, report: evaluate_batch(&cases)? })
}

/// How `run_eval_manifests` produces its estimates.
pub enum Estimator<'a> {
    /// Ideal ratio masks from the references: the ceiling.
    Oracle,
    Model(&'a dyn MaskPredictor),
}

/// Mixture manifests (`mix_*.json`) in `dir`, sorted.
pub fn mixture_manifests(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(missing(dir));
    }
    let rd = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            name.starts_with("mix_") && name.ends_with(".json")
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Separates every root mixture into its four leaf prompts and scores the
/// results against the gain-scaled leaves.
pub fn run_eval_manifests(dir: &Path, estimator: Estimator, stft_cfg: &StftConfig) -> Result<ReportFile, CliError> {
    let paths = mixture_manifests(dir)?;
    if paths.is_empty() {
        return Err(CliError::Io(format!("no mix_*.json manifests in {}", dir.display())));
    }
    let mut cases = Vec::new();
    let mut names = Vec::new();
    for path in &paths {
        let m = MixtureManifest::read(path)?;
        for f in m.leaf_wavs.iter().chain(std::iter::once(&m.root_wav)) {
            if !dir.join(f).exists() {
                return Err(missing(&dir.join(f)));
            }
        }
        let root = read_wav(dir.join(&m.root_wav), None)?;
        let refs = m.scaled_leaves(dir)?;
        let prompts: Vec<String> = PromptNode::SINGLES.iter().map(|n| m.prompts[n].clone()).collect();
        let est = match &estimator {
            Estimator::Oracle => {
                let mags = refs.iter().map(|r| Ok(stft(r, stft_cfg)?.magnitude())).collect::<textsep::Result<Vec<_>>>()?;
                separate(&root, &prompts, &OracleMasks::from_sources(&prompts, &mags)?, stft_cfg)?
            }
            Estimator::Model(p) => separate(&root, &prompts, *p, stft_cfg)?,
        };
        cases.push((est, refs));
        names.push(path.file_stem().expect("manifest stem").to_string_lossy().into_owned());
    }
    let mode = match estimator {
        Estimator::Oracle => "oracle",
        Estimator::Model(_) => "checkpoint",
    };
    Ok(ReportFile { schema_version: SCHEMA_VERSION, mode: mode.into(), case_names: names, report: evaluate_batch(&cases)? })
}

/// Loads a checkpoint's model for `Estimator::Model`.
pub fn load_checkpoint_model(path: &Path) -> Result<textsep::separator::SeparatorModel, CliError> {
    if !path.exists() {
        return Err(missing(path));
    }
    Ok(Checkpoint::load(path)?.model)
}
