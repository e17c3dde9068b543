//! One training run: a unimodal or early-fused bimodal feature set in,
//! dev scores, a checkpoint and fusion-ready prediction tracks out.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::{ReportRow, RowKind};
use crate::dataio::{
    load_label_csv, shift_labels, unshift_predictions, write_label_csv, Dataset, FeatureSet,
    LabelTrack, Manifest, Standardizer,
};
use crate::fusion::{early_fuse_sets, PredictionSet, PredictionTrack};
use crate::metrics::MtlWeights;
use crate::seqmodel::{
    predict, train, Checkpoint, EpochRecord, ModelConfig, ParamSet, Sequence, SequenceSet,
    TrainConfig,
};
use crate::{Error, Result};

/// Optional overrides of the desk-scale model defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub lstm_units: Option<Vec<usize>>,
    pub dropout_rate: Option<f64>,
}

/// Optional overrides of the desk-scale training defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub rmsprop_decay: Option<f64>,
    pub rmsprop_epsilon: Option<f64>,
}

fn default_shift() -> i64 {
    1
}

/// A single experiment as stored in TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub id: String,
    pub manifest: PathBuf,
    /// One name for a unimodal run, two for early fusion.
    pub feature_sets: Vec<String>,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub weights: MtlWeights,
    /// Frames the labels are moved earlier to absorb annotation delay.
    #[serde(default = "default_shift")]
    pub label_shift: i64,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(id: &str, manifest: &Path, feature_sets: &[&str], seed: u64) -> Self {
        Self {
            id: id.into(),
            manifest: manifest.to_path_buf(),
            feature_sets: feature_sets.iter().map(|s| s.to_string()).collect(),
            model: ModelOverrides::default(),
            train: TrainOverrides::default(),
            weights: MtlWeights::default(),
            label_shift: default_shift(),
            seed,
            out_dir: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if spec.manifest.is_relative() {
            if let Some(dir) = path.parent() {
                spec.manifest = dir.join(&spec.manifest);
            }
        }
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn kind(&self) -> RowKind {
        if self.feature_sets.len() == 2 {
            RowKind::Bimodal
        } else {
            RowKind::Unimodal
        }
    }

    pub fn validate_against(&self, manifest: &Manifest) -> Result<()> {
        if !(1..=2).contains(&self.feature_sets.len()) {
            return Err(Error::Config(format!(
                "{} feature sets given, need 1 or 2",
                self.feature_sets.len()
            )));
        }
        if let Some(missing) = self
            .feature_sets
            .iter()
            .find(|f| !manifest.has_feature_set(f))
        {
            return Err(Error::Config(format!(
                "feature set {missing} is not in the manifest"
            )));
        }
        self.train_config(0).validate()?;
        Ok(())
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        let mut m = ModelConfig::desk(input_dim);
        if let Some(u) = &self.model.lstm_units {
            m.lstm_units = u.clone();
        }
        if let Some(d) = self.model.dropout_rate {
            m.dropout_rate = d;
        }
        m
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let base = TrainConfig::desk();
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate.unwrap_or(base.learning_rate),
            batch_size: t.batch_size.unwrap_or(base.batch_size),
            epochs: t.epochs.unwrap_or(base.epochs),
            rmsprop_decay: t.rmsprop_decay.unwrap_or(base.rmsprop_decay),
            rmsprop_epsilon: t.rmsprop_epsilon.unwrap_or(base.rmsprop_epsilon),
            weights: self.weights,
            rng_seed: seed,
            frozen_heads: [false; 3],
        }
    }
}

/// Everything a run produces besides its files.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub row: ReportRow,
    pub checkpoint: Checkpoint,
    /// Unshifted predictions for every train and dev subject.
    pub predictions: PredictionSet,
    pub history: Vec<EpochRecord>,
}

/// The input feature set of `spec`, early-fused when two are named.
pub fn input_features(dataset: &Dataset, spec: &ExperimentSpec) -> Result<FeatureSet> {
    match spec.feature_sets.as_slice() {
        [a] => Ok(dataset.feature_set(a)?.clone()),
        [a, b] => Ok(early_fuse_sets(
            dataset.feature_set(a)?,
            dataset.feature_set(b)?,
        )?),
        other => Err(Error::Config(format!(
            "{} feature sets given, need 1 or 2",
            other.len()
        ))),
    }
}

fn sequence_set(
    features: &FeatureSet,
    std: &Standardizer,
    labels: &[LabelTrack],
    steps: usize,
) -> Result<SequenceSet> {
    let mut seqs = Vec::with_capacity(labels.len());
    for l in labels {
        let t = std.apply(features.track(&l.subject_id)?)?;
        seqs.push(Sequence {
            id: l.subject_id.clone(),
            inputs: t.frames,
            labels: l.values.clone(),
            mask: t.mask,
        });
    }
    Ok(SequenceSet::new(steps, features.dim, seqs)?)
}

/// Trains on `dataset` as described by `spec`, with `seed` for all RNG.
pub fn run_on_dataset(
    dataset: &Dataset,
    spec: &ExperimentSpec,
    seed: u64,
) -> Result<ExperimentOutcome> {
    let start = Instant::now();
    let features = input_features(dataset, spec)?;
    let std = Standardizer::fit(
        dataset
            .train
            .iter()
            .map(|s| features.track(s))
            .collect::<std::result::Result<Vec<_>, _>>()?,
    )?;

    let shifted = |subjects: &[String]| -> Result<Vec<LabelTrack>> {
        subjects
            .iter()
            .map(|s| Ok(shift_labels(dataset.label(s)?, spec.label_shift)?))
            .collect()
    };
    let train_set = sequence_set(&features, &std, &shifted(&dataset.train)?, dataset.max_len)?;
    let dev_set = sequence_set(&features, &std, &shifted(&dataset.dev)?, dataset.max_len)?;

    let model_cfg = spec.model_config(features.dim);
    let train_cfg = spec.train_config(seed);
    let outcome = train(&train_set, &dev_set, &model_cfg, &train_cfg)?;

    let predictions = predictions_for(
        &outcome.params,
        &train_set,
        &dev_set,
        &spec.id,
        spec.label_shift,
    )?;
    let dev_scores = predictions.score(&dataset.labels, &dataset.dev)?;

    let mut row = ReportRow::ok(&spec.id, spec.kind(), dev_scores, Some(spec.weights), seed);
    row.best_epoch = outcome.best_epoch;
    row.elapsed_ms = start.elapsed().as_millis() as u64;
    Ok(ExperimentOutcome {
        row,
        checkpoint: Checkpoint::new(&outcome.params, spec.label_shift, Some(std)),
        predictions,
        history: outcome.history,
    })
}

fn predictions_for(
    params: &ParamSet,
    train_set: &SequenceSet,
    dev_set: &SequenceSet,
    id: &str,
    shift: i64,
) -> Result<PredictionSet> {
    let mut tracks = Vec::new();
    for set in [train_set, dev_set] {
        for (seq, values) in set.sequences.iter().zip(predict(params, set)?) {
            let raw = LabelTrack {
                subject_id: seq.id.clone(),
                values,
                mask: seq.mask,
            };
            let unshifted = unshift_predictions(&raw, shift)?;
            tracks.push(PredictionTrack::from_labels(id, &unshifted));
        }
    }
    Ok(PredictionSet::new(id, tracks))
}

pub const PRED_TRAIN_FILE: &str = "pred_train.csv";
pub const PRED_DEV_FILE: &str = "pred_dev.csv";

/// Writes `spec.toml`, `checkpoint.json`, `history.json` and the train/dev
/// prediction CSVs into `dir`.
pub fn persist(
    dir: &Path,
    spec: &ExperimentSpec,
    dataset: &Dataset,
    out: &ExperimentOutcome,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    let mut stored = spec.clone();
    stored.seed = out.row.seed;
    write("spec.toml", stored.to_toml()?)?;
    out.checkpoint.save(&dir.join("checkpoint.json"))?;
    write(
        "history.json",
        serde_json::to_string_pretty(&out.history).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    write_predictions(dir, &out.predictions, dataset)
}

pub fn write_predictions(dir: &Path, preds: &PredictionSet, dataset: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (file, subjects) in [
        (PRED_TRAIN_FILE, &dataset.train),
        (PRED_DEV_FILE, &dataset.dev),
    ] {
        let mut tracks: Vec<LabelTrack> = Vec::with_capacity(subjects.len());
        for s in subjects {
            let t = preds
                .tracks
                .get(s)
                .ok_or_else(|| Error::Config(format!("no predictions for {s}")))?;
            tracks.push(t.to_labels());
        }
        tracks.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        write_label_csv(&dir.join(file), &tracks)?;
    }
    Ok(())
}

/// Reads predictions written by [`write_predictions`], padded to `max_len`.
pub fn read_predictions(dir: &Path, source_id: &str, max_len: usize) -> Result<PredictionSet> {
    let mut tracks = Vec::new();
    for file in [PRED_TRAIN_FILE, PRED_DEV_FILE] {
        for t in load_label_csv(&dir.join(file))? {
            tracks.push(PredictionTrack::from_labels(source_id, &t.pad_to(max_len)?));
        }
    }
    Ok(PredictionSet::new(source_id, tracks))
}

/// Loads the manifest, runs, persists under `out_dir/<id>` when an output
/// directory is known, and appends to `out_dir/report.csv`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    seed_override: Option<u64>,
    out_dir: Option<&Path>,
) -> Result<ReportRow> {
    let tag = |e: Error| e.in_experiment(&spec.id);
    let manifest = Manifest::read(&spec.manifest).map_err(|e| tag(e.into()))?;
    spec.validate_against(&manifest).map_err(tag)?;
    let dataset = manifest.load_dataset().map_err(|e| tag(e.into()))?;
    let seed = seed_override.unwrap_or(spec.seed);
    let out = run_on_dataset(&dataset, spec, seed).map_err(tag)?;
    if let Some(dir) = out_dir.or(spec.out_dir.as_deref()) {
        persist(&dir.join(&spec.id), spec, &dataset, &out).map_err(tag)?;
        super::report::append_rows(
            &dir.join(super::REPORT_FILE),
            std::slice::from_ref(&out.row),
        )?;
    }
    Ok(out.row)
}
