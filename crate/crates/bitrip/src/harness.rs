//! The training loop, evaluation and retrieval behind the CLI.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use bitrip_core::data::{balanced_batches, blob_centers, sample_blobs, Dataset};
use bitrip_core::eval::{recall_at_k, retrieve_topk, EmbeddedSet};
use bitrip_core::mlp::{init_params, MlpModel};
use bitrip_core::step::{embed_batch, train_step, StepConfig};
use bitrip_core::tracker::ClassTracker;
use bitrip_core::Rng;
use serde::Serialize;

use crate::checkpoint::{self, Checkpoint};
use crate::config::{DatasetKind, TrainConfig};
use crate::{idx, Error, Result};

/// Recall depths reported during training.
pub const RECALL_KS: [usize; 4] = [1, 4, 8, 16];

pub const METRICS_HEADER: &str = "epoch,batch,loss,r1,r4,r8,r16,seconds";

// Independent random streams derived from the seed.
const STREAM_CENTERS: u64 = 0;
const STREAM_TRAIN_DATA: u64 = 1;
const STREAM_TEST_DATA: u64 = 2;
const STREAM_SPLIT: u64 = 3;
const STREAM_INIT: u64 = 4;
const STREAM_BATCHES: u64 = 5;
const STREAM_TRIPLETS: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}; expected train, val or test"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn get(&self, s: Split) -> &Dataset {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

fn limited(ds: Dataset, n: Option<usize>) -> Result<Dataset> {
    match n {
        Some(n) if n < ds.len() => Ok(ds.head(n)?),
        _ => Ok(ds),
    }
}

/// MNIST file names inside the data directory.
pub const MNIST_FILES: [&str; 4] =
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];

/// Loads or generates the train, validation and test splits. The
/// validation split is a stratified holdout of the training data.
pub fn load_splits(cfg: &TrainConfig) -> Result<Splits> {
    let (full, test) = match cfg.dataset {
        DatasetKind::Mnist => {
            let p = |f: &str| cfg.data_dir.join(f);
            let train = idx::load_idx(&p(MNIST_FILES[0]), &p(MNIST_FILES[1]))?;
            let test = idx::load_idx(&p(MNIST_FILES[2]), &p(MNIST_FILES[3]))?;
            (train, test)
        }
        DatasetKind::Blobs => {
            let centers = blob_centers(
                cfg.blob_classes,
                cfg.blob_dim,
                cfg.blob_spread,
                &mut Rng::with_stream(cfg.seed, STREAM_CENTERS),
            )?;
            let train =
                sample_blobs(&centers, cfg.blob_per_class, cfg.blob_spread, &mut Rng::with_stream(cfg.seed, STREAM_TRAIN_DATA))?;
            let test = sample_blobs(
                &centers,
                cfg.blob_test_per_class,
                cfg.blob_spread,
                &mut Rng::with_stream(cfg.seed, STREAM_TEST_DATA),
            )?;
            (train, test)
        }
    };
    let full = limited(full, cfg.train_limit)?;
    let test = limited(test, cfg.test_limit)?;
    let (train, val) = full.stratified_split(cfg.val_fraction, &mut Rng::with_stream(cfg.seed, STREAM_SPLIT))?;
    Ok(Splits { train, val, test })
}

/// Embeds `ds` with the model as the loss sees it.
pub fn embed_dataset(model: &MlpModel, normalize: bool, ds: &Dataset) -> Result<EmbeddedSet> {
    if model.input_dim() != ds.input_dim() {
        return Err(Error::DimMismatch { expected: model.input_dim(), found: ds.input_dim() });
    }
    let v = embed_batch(model, &ds.inputs, normalize)?;
    Ok(EmbeddedSet::new(v, ds.labels.clone())?)
}

/// Recall for every `k` below the set size; deeper `k` report `None`.
pub fn recall_row(model: &MlpModel, normalize: bool, ds: &Dataset, ks: &[usize]) -> Result<Vec<(usize, Option<f64>)>> {
    let set = embed_dataset(model, normalize, ds)?;
    let ok: Vec<usize> = ks.iter().copied().filter(|&k| k < set.len()).collect();
    let got = recall_at_k(&set, &ok)?;
    Ok(ks.iter().map(|&k| (k, got.iter().find(|(kk, _)| *kk == k).map(|(_, r)| *r))).collect())
}

/// One line of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: Option<f64>,
    /// R@1, R@4, R@8, R@16 on the validation split.
    pub recall: Option<[Option<f64>; 4]>,
    pub seconds: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl MetricsRecord {
    pub fn csv_line(&self) -> String {
        let r = self.recall.unwrap_or([None; 4]);
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.batch,
            opt(self.loss),
            opt(r[0]),
            opt(r[1]),
            opt(r[2]),
            opt(r[3]),
            self.seconds
        )
    }
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallSummary {
    pub r1: Option<f64>,
    pub r4: Option<f64>,
    pub r8: Option<f64>,
    pub r16: Option<f64>,
}

impl From<[Option<f64>; 4]> for RecallSummary {
    fn from(r: [Option<f64>; 4]) -> Self {
        Self { r1: r[0], r4: r[1], r8: r[2], r16: r[3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub config: TrainConfig,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub classes: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub baseline_val: RecallSummary,
    pub best_val: RecallSummary,
    pub baseline_test: RecallSummary,
    pub test: RecallSummary,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: MlpModel,
    pub tracker: ClassTracker,
    pub metrics: Vec<MetricsRecord>,
    pub summary: TrainSummary,
}

fn four(row: &[(usize, Option<f64>)]) -> [Option<f64>; 4] {
    [row[0].1, row[1].1, row[2].1, row[3].1]
}

/// The untrained model a run with `cfg` starts from.
pub fn init_model(cfg: &TrainConfig, input_dim: usize) -> Result<MlpModel> {
    Ok(init_params(&cfg.layer_dims(input_dim), &mut Rng::with_stream(cfg.seed, STREAM_INIT))?)
}

/// Trains on already loaded splits. Nothing is written to disk.
pub fn train_on(cfg: &TrainConfig, data: &Splits) -> Result<TrainResult> {
    cfg.validate()?;
    let start = Instant::now();
    let secs = || if cfg.wall_clock { start.elapsed().as_secs_f64() } else { 0.0 };
    let classes = data.train.classes();
    let mut model = init_model(cfg, data.train.input_dim())?;
    let mut tracker = ClassTracker::new(classes, cfg.embed_dim, cfg.cov_mode);
    let mut batch_rng = Rng::with_stream(cfg.seed, STREAM_BATCHES);
    let mut triplet_rng = Rng::with_stream(cfg.seed, STREAM_TRIPLETS);
    let step_cfg = StepConfig {
        loss: cfg.loss,
        margin: cfg.margin,
        lr: cfg.lr,
        eps_scale: cfg.eps_scale(),
        normalize: cfg.normalize_embeddings,
    };
    let norm = cfg.normalize_embeddings;

    let baseline = four(&recall_row(&model, norm, &data.val, &RECALL_KS)?);
    let baseline_test = four(&recall_row(&model, norm, &data.test, &RECALL_KS)?);
    let mut metrics =
        vec![MetricsRecord { epoch: 0, batch: 0, loss: None, recall: Some(baseline), seconds: secs() }];

    let mut best = (baseline, 0usize, model.clone(), tracker.clone());
    let mut stale = 0;
    let mut epochs_run = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        if !cfg.accumulate_across_epochs {
            tracker.reset();
        }
        let batches = balanced_batches(&data.train, cfg.per_class, &mut batch_rng)?;
        let mut total = 0.0;
        for (t, indices) in batches.iter().enumerate() {
            let sub = data.train.subset(indices)?;
            let out =
                train_step(&mut model, &mut tracker, &sub.inputs, &sub.labels, cfg.per_class, &step_cfg, &mut triplet_rng)
                    .map_err(|source| Error::Step { epoch, batch: t + 1, source })?;
            total += out.loss;
            metrics.push(MetricsRecord { epoch, batch: t + 1, loss: Some(out.loss), recall: None, seconds: secs() });
        }
        let r = four(&recall_row(&model, norm, &data.val, &RECALL_KS)?);
        let mean_loss = (!batches.is_empty()).then(|| total / batches.len() as f64);
        metrics.push(MetricsRecord { epoch, batch: batches.len(), loss: mean_loss, recall: Some(r), seconds: secs() });
        epochs_run = epoch;
        if r[0] > best.0[0] {
            best = (r, epoch, model.clone(), tracker.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    let (best_val, best_epoch, model, tracker) = best;
    let test = four(&recall_row(&model, norm, &data.test, &RECALL_KS)?);
    let summary = TrainSummary {
        config: cfg.clone(),
        train_size: data.train.len(),
        val_size: data.val.len(),
        test_size: data.test.len(),
        classes,
        epochs_run,
        best_epoch,
        stopped_early,
        baseline_val: baseline.into(),
        best_val: best_val.into(),
        baseline_test: baseline_test.into(),
        test: test.into(),
        seconds: secs(),
    };
    Ok(TrainResult { model, tracker, metrics, summary })
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "model.btrp";

/// Loads data, trains, and writes metrics, summary and the best checkpoint
/// into `cfg.out_dir`.
pub fn train(cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let data = load_splits(cfg)?;
    let res = train_on(cfg, &data)?;
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    write(METRICS_FILE, metrics_csv(&res.metrics).as_bytes())?;
    write(SUMMARY_FILE, serde_json::to_string_pretty(&res.summary)?.as_bytes())?;
    let ck = Checkpoint { model: res.model.clone(), normalize: cfg.normalize_embeddings, tracker: res.tracker.clone() };
    checkpoint::save(&ck, &dir.join(CHECKPOINT_FILE))?;
    Ok(res)
}

/// R@k of a checkpointed model on one split.
pub fn evaluate(ck: &Checkpoint, data: &Splits, split: Split, ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    let set = embed_dataset(&ck.model, ck.normalize, data.get(split))?;
    Ok(recall_at_k(&set, ks)?)
}

pub fn evaluate_file(path: &Path, cfg: &TrainConfig, split: Split, ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    let ck = checkpoint::load(path)?;
    evaluate(&ck, &load_splits(cfg)?, split, ks)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Retrieved {
    pub index: usize,
    pub label: usize,
    pub distance: f64,
}

/// The `k` nearest items to item `query` of the split, excluding the query.
pub fn retrieve(ck: &Checkpoint, data: &Splits, split: Split, query: usize, k: usize) -> Result<Vec<Retrieved>> {
    let ds = data.get(split);
    if query >= ds.len() {
        return Err(Error::IndexOutOfRange { index: query, len: ds.len() });
    }
    let set = embed_dataset(&ck.model, ck.normalize, ds)?;
    if k >= set.len() {
        return Err(bitrip_core::Error::KTooLarge { k, m: set.len() }.into());
    }
    let q = set.vectors().row(query).to_vec();
    Ok(retrieve_topk(&set, &q, k + 1)?
        .into_iter()
        .filter(|n| n.index != query)
        .take(k)
        .map(|n| Retrieved { index: n.index, label: set.labels()[n.index], distance: n.distance })
        .collect())
}

/// Writes a blob dataset as IDX files named like the MNIST ones.
pub fn synth(cfg: &TrainConfig, dir: &Path) -> Result<()> {
    let blobs = TrainConfig { dataset: DatasetKind::Blobs, ..cfg.clone() };
    blobs.validate()?;
    let centers =
        blob_centers(blobs.blob_classes, blobs.blob_dim, blobs.blob_spread, &mut Rng::with_stream(blobs.seed, STREAM_CENTERS))?;
    let train =
        sample_blobs(&centers, blobs.blob_per_class, blobs.blob_spread, &mut Rng::with_stream(blobs.seed, STREAM_TRAIN_DATA))?;
    let test = sample_blobs(
        &centers,
        blobs.blob_test_per_class,
        blobs.blob_spread,
        &mut Rng::with_stream(blobs.seed, STREAM_TEST_DATA),
    )?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    idx::write_idx(&train, &dir.join(MNIST_FILES[0]), &dir.join(MNIST_FILES[1]))?;
    idx::write_idx(&test, &dir.join(MNIST_FILES[2]), &dir.join(MNIST_FILES[3]))
}
