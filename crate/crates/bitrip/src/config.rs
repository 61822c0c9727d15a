//! Training configuration as flat `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! errors. Later assignments win, so command-line overrides are applied
//! with [`TrainConfig::set`] after the file.

use std::path::PathBuf;

use bitrip_core::loss::LossKind;
use bitrip_core::tracker::CovMode;
use serde::Serialize;

use crate::{Error, Result};

pub const DATA_DIR_ENV: &str = "BITRIP_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub dataset: DatasetKind,
    #[serde(serialize_with = "ser_loss")]
    pub loss: LossKind,
    #[serde(serialize_with = "ser_mode")]
    pub cov_mode: CovMode,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub per_class: usize,
    pub margin: f64,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Covariance jitter scale; 0 disables it.
    pub jitter: f64,
    pub accumulate_across_epochs: bool,
    pub normalize_embeddings: bool,
    pub val_fraction: f64,
    /// Record elapsed seconds in the metrics file instead of 0.
    pub wall_clock: bool,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub blob_classes: usize,
    pub blob_per_class: usize,
    pub blob_test_per_class: usize,
    pub blob_dim: usize,
    pub blob_spread: f64,
}

fn ser_loss<S: serde::Serializer>(v: &LossKind, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(loss_name(*v))
}

fn ser_mode<S: serde::Serializer>(v: &CovMode, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(mode_name(*v))
}

pub fn loss_name(v: LossKind) -> &'static str {
    match v {
        LossKind::Triplet => "but",
        LossKind::Nca => "bunca",
    }
}

pub fn mode_name(v: CovMode) -> &'static str {
    match v {
        CovMode::Standard => "standard",
        CovMode::PaperLiteral => "paper-literal",
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Mnist,
            loss: LossKind::Triplet,
            cov_mode: CovMode::Standard,
            embed_dim: 16,
            hidden: vec![256],
            per_class: 5,
            margin: 0.25,
            lr: 3e-5,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            jitter: 1e-6,
            accumulate_across_epochs: true,
            normalize_embeddings: false,
            val_fraction: 0.3,
            wall_clock: false,
            data_dir: PathBuf::from("data/mnist"),
            out_dir: PathBuf::from("runs/latest"),
            train_limit: None,
            test_limit: None,
            blob_classes: 3,
            blob_per_class: 100,
            blob_test_per_class: 50,
            blob_dim: 10,
            blob_spread: 1.0,
        }
    }
}

fn cfg_err(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{key} = {value:?}: {what}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| cfg_err(key, value, "not a valid number"))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(cfg_err(key, value, "expected true or false")),
    }
}

fn limit(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "none" || value.is_empty() {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

impl TrainConfig {
    /// Defaults for the synthetic blob task.
    pub fn blobs() -> Self {
        Self { dataset: DatasetKind::Blobs, embed_dim: 2, hidden: vec![32], lr: 1e-4, ..Self::default() }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dataset" => {
                self.dataset = match v {
                    "mnist" => DatasetKind::Mnist,
                    "blobs" => DatasetKind::Blobs,
                    _ => return Err(cfg_err(key, v, "expected mnist or blobs")),
                }
            }
            "loss" => {
                self.loss = match v {
                    "but" | "triplet" => LossKind::Triplet,
                    "bunca" | "nca" => LossKind::Nca,
                    _ => return Err(cfg_err(key, v, "expected but or bunca")),
                }
            }
            "cov_mode" => {
                self.cov_mode = match v {
                    "standard" => CovMode::Standard,
                    "paper-literal" => CovMode::PaperLiteral,
                    _ => return Err(cfg_err(key, v, "expected standard or paper-literal")),
                }
            }
            "embed_dim" => self.embed_dim = num(key, v)?,
            "hidden" => {
                self.hidden = if v.is_empty() || v == "none" {
                    Vec::new()
                } else {
                    v.split(',').map(|s| num(key, s.trim())).collect::<Result<_>>()?
                }
            }
            "per_class" => self.per_class = num(key, v)?,
            "margin" => self.margin = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "max_epochs" => self.max_epochs = num(key, v)?,
            "patience" => self.patience = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "jitter" => self.jitter = num(key, v)?,
            "accumulate_across_epochs" => self.accumulate_across_epochs = flag(key, v)?,
            "normalize_embeddings" => self.normalize_embeddings = flag(key, v)?,
            "val_fraction" => self.val_fraction = num(key, v)?,
            "wall_clock" => self.wall_clock = flag(key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "train_limit" => self.train_limit = limit(key, v)?,
            "test_limit" => self.test_limit = limit(key, v)?,
            "blob_classes" => self.blob_classes = num(key, v)?,
            "blob_per_class" => self.blob_per_class = num(key, v)?,
            "blob_test_per_class" => self.blob_test_per_class = num(key, v)?,
            "blob_dim" => self.blob_dim = num(key, v)?,
            "blob_spread" => self.blob_spread = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` assignments, one per line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Applies a single `KEY=VALUE` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("{kv:?}: expected KEY=VALUE")))?;
        self.set(k, v)
    }

    /// Honours the data directory environment override.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            self.data_dir = PathBuf::from(dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if self.embed_dim < 2 {
            return fail("embed_dim must be at least 2");
        }
        if self.per_class < 1 {
            return fail("per_class must be at least 1");
        }
        if !(self.margin >= 0.0) || !self.margin.is_finite() {
            return fail("margin must be non-negative");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return fail("lr must be positive");
        }
        if self.max_epochs < 1 {
            return fail("max_epochs must be at least 1");
        }
        if self.patience < 1 {
            return fail("patience must be at least 1");
        }
        if !(self.jitter >= 0.0) {
            return fail("jitter must be non-negative");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail("val_fraction must lie in (0, 1)");
        }
        if self.hidden.contains(&0) {
            return fail("hidden layer widths must be positive");
        }
        if self.dataset == DatasetKind::Blobs {
            if self.blob_classes < 2 || self.blob_per_class < 2 || self.blob_test_per_class < 1 || self.blob_dim < 1 {
                return fail("blobs need at least 2 classes, 2 training points per class and dim 1");
            }
            if !(self.blob_spread >= 0.0) {
                return fail("blob_spread must be non-negative");
            }
        }
        Ok(())
    }

    /// `[q, hidden.., d]`.
    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(self.embed_dim);
        dims
    }

    pub fn eps_scale(&self) -> Option<f64> {
        (self.jitter > 0.0).then_some(self.jitter)
    }
}
