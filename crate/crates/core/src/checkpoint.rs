//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `MMCLCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, the JSON header, then every parameter
//! as little-endian `f64` in manifest order, followed by the optimizer's first
//! and second moments in the same order when present.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{MmclError, Result};
use crate::model::Mmcl;
use crate::optim::{Adam, AdamHyper};
use crate::params::ParamGroup;
use crate::tensor::Matrix;

const MAGIC: &[u8; 8] = b"MMCLCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    group: ParamGroup,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AdamMeta {
    step: u64,
    hyper: AdamHyper,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    config: Config,
    config_hash: String,
    seed: u64,
    epoch: usize,
    val_loss: Option<f64>,
    input_dims: [usize; 3],
    params: Vec<ManifestEntry>,
    adam: Option<AdamMeta>,
}

/// A trained model together with the state needed to resume or audit it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: Config,
    pub seed: u64,
    /// 1-based epoch the parameters were taken from
    pub epoch: usize,
    /// validation regression loss at that epoch
    pub val_loss: Option<f64>,
    pub model: Mmcl,
    pub optimizer: Option<Adam>,
}

fn write_f64s(out: &mut Vec<u8>, m: &Matrix) {
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn manifest(model: &Mmcl) -> Vec<ManifestEntry> {
    model
        .store
        .entries()
        .iter()
        .map(|e| ManifestEntry {
            name: e.name.clone(),
            group: e.group,
            rows: e.value.rows(),
            cols: e.value.cols(),
        })
        .collect()
}

impl Checkpoint {
    pub fn config_hash(&self) -> Result<String> {
        self.config.hash()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config.clone(),
            config_hash: self.config.hash()?,
            seed: self.seed,
            epoch: self.epoch,
            val_loss: self.val_loss.filter(|v| v.is_finite()),
            input_dims: self.model.input_dims,
            params: manifest(&self.model),
            adam: self.optimizer.as_ref().map(|a| AdamMeta {
                step: a.step,
                hyper: a.hyper.clone(),
            }),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * 3 * self.model.num_parameters());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for e in self.model.store.entries() {
            write_f64s(&mut out, &e.value);
        }
        if let Some(adam) = &self.optimizer {
            for m in adam.m.iter().chain(&adam.v) {
                write_f64s(&mut out, m);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| MmclError::Checkpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(MmclError::Checkpoint(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        if header.config.hash()? != header.config_hash {
            return Err(bad("config hash does not match the embedded config"));
        }
        let mut model = Mmcl::new(
            &header.config.model,
            header.input_dims,
            header.config.train.ablation.replace_transformer_with_linear,
            header.seed,
        )?;
        if manifest(&model) != header.params {
            return Err(bad("parameter manifest does not match the architecture in the embedded config"));
        }
        let mut payload = &body[hlen..];
        let mut read_matrix = |rows: usize, cols: usize| -> Result<Matrix> {
            let need = rows * cols * 8;
            if payload.len() < need {
                return Err(bad("truncated parameter payload"));
            }
            let data = payload[..need]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            payload = &payload[need..];
            Matrix::from_vec(rows, cols, data)
        };
        let ids: Vec<_> = model.store.ids().collect();
        for (id, e) in ids.iter().zip(&header.params) {
            *model.store.get_mut(*id) = read_matrix(e.rows, e.cols)?;
        }
        let optimizer = match &header.adam {
            None => None,
            Some(meta) => {
                let mut m = Vec::with_capacity(ids.len());
                for e in &header.params {
                    m.push(read_matrix(e.rows, e.cols)?);
                }
                let mut v = Vec::with_capacity(ids.len());
                for e in &header.params {
                    v.push(read_matrix(e.rows, e.cols)?);
                }
                Some(Adam {
                    hyper: meta.hyper.clone(),
                    step: meta.step,
                    m,
                    v,
                })
            }
        };
        if !payload.is_empty() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Checkpoint {
            config: header.config,
            seed: header.seed,
            epoch: header.epoch,
            val_loss: header.val_loss,
            model,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
