//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header (configs, vocabulary, tensor names and shapes, counters), then
//! every tensor as little-endian `f64` in header order: parameters, and
//! when present the Adam first and second moments.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::SeparatorConfig;
use super::model::SeparatorModel;
use super::tokenizer::Vocabulary;
use super::train::{TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::nn::AdamState;

pub const MAGIC: &[u8; 8] = b"TXSEPCK1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: [usize; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: SeparatorConfig,
    vocab: Vocabulary,
    tensors: Vec<TensorInfo>,
    epoch: usize,
    step: usize,
    train_config: Option<TrainConfig>,
    adam_t: Option<u64>,
}

/// Everything a checkpoint holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SeparatorModel,
    pub adam: Option<AdamState>,
    pub epoch: usize,
    pub step: usize,
    pub train_config: Option<TrainConfig>,
}

impl Checkpoint {
    pub fn from_model(model: SeparatorModel) -> Self {
        Self { model, adam: None, epoch: 0, step: 0, train_config: None }
    }

    pub fn from_state(state: &TrainState) -> Self {
        Self {
            model: state.model.clone(),
            adam: Some(state.adam.clone()),
            epoch: state.epoch,
            step: state.step,
            train_config: Some(state.train_config),
        }
    }

    /// Resumable state; `train_config` overrides the stored one (for
    /// example to extend the epoch count).
    pub fn into_train_state(self, train_config: Option<TrainConfig>) -> Result<TrainState> {
        let tc = train_config
            .or(self.train_config)
            .ok_or_else(|| Error::Checkpoint("checkpoint has no training configuration".into()))?;
        let adam = self.adam.unwrap_or_else(|| AdamState::new(&self.model.params));
        Ok(TrainState { model: self.model, adam, epoch: self.epoch, step: self.step, train_config: tc })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self
            .model
            .names()
            .iter()
            .zip(&self.model.params)
            .map(|(name, p)| TensorInfo { name: name.clone(), shape: [p.nrows(), p.ncols()] })
            .collect();
        let header = Header {
            config: self.model.config,
            vocab: self.model.vocab.clone(),
            tensors,
            epoch: self.epoch,
            step: self.step,
            train_config: self.train_config,
            adam_t: self.adam.as_ref().map(|a| a.t),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * 3 * self.model.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |ts: &[Array2<f64>]| {
            for t in ts {
                for v in t.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        };
        put(&self.model.params);
        if let Some(a) = &self.adam {
            put(&a.m);
            put(&a.v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..).ok_or_else(|| bad("truncated header"))?;
        if hlen > body.len() {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        header.config.validate()?;
        let mut data = &body[hlen..];
        let mut take = |info: &TensorInfo| -> Result<Array2<f64>> {
            let n = info.shape[0] * info.shape[1];
            if data.len() < 8 * n {
                return Err(Error::Checkpoint(format!("tensor {} is truncated", info.name)));
            }
            let vals = data[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            data = &data[8 * n..];
            Ok(Array2::from_shape_vec((info.shape[0], info.shape[1]), vals).expect("shape matches length"))
        };
        let params = header.tensors.iter().map(&mut take).collect::<Result<Vec<_>>>()?;
        let adam = match header.adam_t {
            Some(t) => {
                let m = header.tensors.iter().map(&mut take).collect::<Result<Vec<_>>>()?;
                let v = header.tensors.iter().map(&mut take).collect::<Result<Vec<_>>>()?;
                Some(AdamState { m, v, t })
            }
            None => None,
        };
        if !data.is_empty() {
            return Err(bad("trailing bytes after tensors"));
        }
        let vocab = header.vocab.restored();
        let fresh = SeparatorModel::new(header.config)?;
        let names: Vec<String> = header.tensors.iter().map(|t| t.name.clone()).collect();
        let layout_ok = fresh.names() == names.as_slice()
            && fresh.params.iter().zip(&names).zip(&params).all(|((a, name), b)| {
                if name == "text.emb" {
                    b.dim() == (vocab.size(), a.ncols())
                } else {
                    a.dim() == b.dim()
                }
            });
        if !layout_ok {
            return Err(bad("tensor layout does not match the configuration"));
        }
        let model = SeparatorModel::from_parts(header.config, vocab, names, params);
        Ok(Self { model, adam, epoch: header.epoch, step: header.step, train_config: header.train_config })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
