//! The run configuration file: one TOML document with `synth`, `model`,
//! `train` and `grid` tables. Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SynthSpec;
use crate::error::{MmclError, Result};
use crate::losses::LossWeights;
use crate::model::{AblationFlags, LossVariants, ModalityMask, ModelConfig};

/// Ordering of the cross-modal pairing phases over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    /// origin/origin, then predict/predict, then origin/predict
    #[default]
    Curriculum,
    /// mean of the three pairings at every step
    Averaged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairingSchedule {
    pub mode: PairingMode,
    /// training-progress fractions where the second and third phases start
    pub boundaries: [f64; 2],
}

impl Default for PairingSchedule {
    fn default() -> Self {
        PairingSchedule {
            mode: PairingMode::Curriculum,
            boundaries: [1.0 / 3.0, 2.0 / 3.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub text_lr: f64,
    pub lr: f64,
    pub warmup_fraction: f64,
    /// train / validation / test fractions used when a single dataset is split
    pub split: [f64; 3],
    /// require equal sequence lengths across modalities
    pub aligned: bool,
    pub weights: LossWeights,
    pub ablation: AblationFlags,
    pub modalities: ModalityMask,
    pub pairing: PairingSchedule,
    pub variants: LossVariants,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seeds: vec![1],
            epochs: 30,
            batch_size: 32,
            text_lr: 1e-3,
            lr: 1e-3,
            warmup_fraction: 0.1,
            split: [0.7, 0.15, 0.15],
            aligned: true,
            weights: LossWeights::default(),
            ablation: AblationFlags::default(),
            modalities: ModalityMask::default(),
            pairing: PairingSchedule::default(),
            variants: LossVariants::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(MmclError::config("train.seeds", "need at least one seed"));
        }
        if self.epochs == 0 {
            return Err(MmclError::config("train.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(MmclError::config("train.batch_size", "must be positive"));
        }
        if self.batch_size < 2 && self.ablation.enabled().any_contrastive() {
            return Err(MmclError::config("train.batch_size", "contrastive losses need batches of at least 2"));
        }
        for (field, lr) in [("train.text_lr", self.text_lr), ("train.lr", self.lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(MmclError::config(field, "must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(MmclError::config("train.warmup_fraction", "must lie in [0, 1)"));
        }
        if self.split.iter().any(|&r| !(r > 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(MmclError::config("train.split", "ratios must be positive and sum to 1"));
        }
        let [b1, b2] = self.pairing.boundaries;
        if !(0.0 <= b1 && b1 <= b2 && b2 <= 1.0) {
            return Err(MmclError::config("train.pairing.boundaries", "need 0 <= first <= second <= 1"));
        }
        self.modalities.validate()?;
        self.weights.validate().map_err(|e| match e {
            MmclError::Config { field, message } => MmclError::Config {
                field: format!("train.{field}"),
                message,
            },
            other => other,
        })
    }
}

/// The complete configuration document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub synth: SynthSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// hyper-parameter name -> candidate values, for grid search
    pub grid: BTreeMap<String, Vec<f64>>,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        for (k, vals) in &self.grid {
            if vals.is_empty() {
                return Err(MmclError::config(format!("grid.{k}"), "needs at least one value"));
            }
            let mut probe = self.clone();
            probe.apply_override(k, vals[0])?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = unknown_field(&msg).unwrap_or_else(|| "config".to_string());
            MmclError::config(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| MmclError::config("config", e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }

    /// Sets one numeric hyper-parameter by name (grid keys and sweeps).
    pub fn apply_override(&mut self, key: &str, value: f64) -> Result<()> {
        let w = &mut self.train.weights;
        match key {
            "tau" => w.tau = value,
            "mu" => w.mu = value,
            "eta" => w.eta = value,
            "alpha" => w.alpha = value,
            "beta" => w.beta = value,
            "gamma" => w.gamma = value,
            "kappa" => w.kappa = value,
            "lambda" => {
                if value != 1.0 && value != 2.0 {
                    return Err(MmclError::config("grid.lambda", "must be 1 or 2"));
                }
                w.lambda = value as u8;
            }
            "lr" => self.train.lr = value,
            "text_lr" => self.train.text_lr = value,
            "cutoff_ratio" => self.model.encoder.cutoff_ratio = value,
            other => {
                return Err(MmclError::config(
                    format!("grid.{other}"),
                    "unknown hyper-parameter (expected one of tau, mu, eta, alpha, beta, gamma, kappa, lambda, lr, text_lr, cutoff_ratio)",
                ))
            }
        }
        Ok(())
    }
}

/// Pulls the key name out of serde's "unknown field `x`, expected ..." message.
fn unknown_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}
