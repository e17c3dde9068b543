//! Early fusion (feature concatenation), late fusion (per-attribute SVR
//! over stacked prediction tracks) and multistage late fusion.
//!
//! Late fusion works frame by frame. For K input sources the SVR input of a
//! frame is the 3K-vector of every source's (arousal, valence, liking)
//! prediction, standardized with statistics of the fitting split. One SVR
//! is fitted per attribute. Stage `k > 1` of multistage fusion takes only
//! the fused output of stage `k - 1` as its single source.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{DataError, FeatureSet, FeatureTrack, LabelTrack, Mask, Standardizer};
use crate::metrics::{Attribute, AttributeTriple, MetricsError, SplitScores};
use crate::svr::{fit_svr, Kernel, SvrConfig, SvrError, SvrModel};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("early fusion: {0}")]
    Mismatch(String),
    #[error("late fusion needs at least one source")]
    NoSources,
    #[error("source {source_id}: {reason}")]
    Source { source_id: String, reason: String },
    #[error("n_stages must be at least 1")]
    NoStages,
    #[error(transparent)]
    Svr(#[from] SvrError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type FusionResult<T> = std::result::Result<T, FusionError>;

/// Concatenates two tracks of the same subject frame by frame (`a` first).
pub fn early_fuse(a: &FeatureTrack, b: &FeatureTrack) -> FusionResult<FeatureTrack> {
    if a.subject_id != b.subject_id {
        return Err(FusionError::Mismatch(format!(
            "subjects {} and {}",
            a.subject_id, b.subject_id
        )));
    }
    if a.mask != b.mask {
        return Err(FusionError::Mismatch(format!(
            "subject {}: {}/{} frames vs {}/{}",
            a.subject_id,
            a.mask.valid(),
            a.len(),
            b.mask.valid(),
            b.len()
        )));
    }
    let dim = a.dim + b.dim;
    let mut frames = Vec::with_capacity(a.len() * dim);
    for t in 0..a.len() {
        frames.extend_from_slice(a.frame(t));
        frames.extend_from_slice(b.frame(t));
    }
    Ok(FeatureTrack {
        feature_set: early_name(&a.feature_set, &b.feature_set),
        subject_id: a.subject_id.clone(),
        dim,
        frames,
        mask: a.mask,
    })
}

pub fn early_name(a: &str, b: &str) -> String {
    format!("{a}+{b}")
}

/// [`early_fuse`] over every subject of two feature sets.
pub fn early_fuse_sets(a: &FeatureSet, b: &FeatureSet) -> FusionResult<FeatureSet> {
    if a.tracks.keys().ne(b.tracks.keys()) {
        return Err(FusionError::Mismatch(format!(
            "{} and {} cover different subjects",
            a.name, b.name
        )));
    }
    let tracks = a
        .tracks
        .values()
        .zip(b.tracks.values())
        .map(|(x, y)| early_fuse(x, y))
        .collect::<FusionResult<Vec<_>>>()?;
    Ok(FeatureSet::from_tracks(
        early_name(&a.name, &b.name),
        tracks,
    )?)
}

/// All unordered pairs, in input order.
pub fn bimodal_pairs<T: Clone>(items: &[T]) -> Vec<(T, T)> {
    let mut out = Vec::new();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            out.push((items[i].clone(), items[j].clone()));
        }
    }
    out
}

/// One source's predictions for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrack {
    pub source_id: String,
    pub subject_id: String,
    pub frames: Vec<AttributeTriple>,
    pub mask: Mask,
}

impl PredictionTrack {
    pub fn from_labels(source_id: &str, t: &LabelTrack) -> Self {
        Self {
            source_id: source_id.to_string(),
            subject_id: t.subject_id.clone(),
            frames: t.values.clone(),
            mask: t.mask,
        }
    }

    pub fn to_labels(&self) -> LabelTrack {
        LabelTrack {
            subject_id: self.subject_id.clone(),
            values: self.frames.clone(),
            mask: self.mask,
        }
    }

    pub fn valid_frames(&self) -> &[AttributeTriple] {
        &self.frames[..self.mask.valid()]
    }
}

/// Every subject's predictions from one source (experiment or stage).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub source_id: String,
    pub tracks: BTreeMap<String, PredictionTrack>,
}

impl PredictionSet {
    pub fn new(source_id: impl Into<String>, tracks: Vec<PredictionTrack>) -> Self {
        let source_id = source_id.into();
        let tracks = tracks
            .into_iter()
            .map(|mut t| {
                t.source_id = source_id.clone();
                (t.subject_id.clone(), t)
            })
            .collect();
        Self { source_id, tracks }
    }

    pub fn from_labels(source_id: &str, labels: &[LabelTrack]) -> Self {
        Self::new(
            source_id,
            labels
                .iter()
                .map(|l| PredictionTrack::from_labels(source_id, l))
                .collect(),
        )
    }

    fn track(&self, subject: &str) -> FusionResult<&PredictionTrack> {
        self.tracks.get(subject).ok_or_else(|| FusionError::Source {
            source_id: self.source_id.clone(),
            reason: format!("no predictions for subject {subject}"),
        })
    }

    /// Scores this source against `labels` on `subjects`.
    pub fn score(
        &self,
        labels: &BTreeMap<String, LabelTrack>,
        subjects: &[String],
    ) -> FusionResult<SplitScores> {
        let mut pairs = Vec::with_capacity(subjects.len());
        for s in subjects {
            let p = self.track(s)?;
            let l = labels.get(s).ok_or_else(|| FusionError::Source {
                source_id: "labels".into(),
                reason: format!("no labels for subject {s}"),
            })?;
            if p.mask.valid() != l.mask.valid() {
                return Err(FusionError::Source {
                    source_id: self.source_id.clone(),
                    reason: format!("subject {s}: mask differs from labels"),
                });
            }
            pairs.push((p.valid_frames(), l.valid_values()));
        }
        Ok(SplitScores::compute(pairs)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitSplit {
    Train,
    /// Fits the fusion SVRs on dev labels: scores are optimistic.
    Dev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FusionKernel {
    Linear,
    /// RBF with `gamma = 1 / input_dim`.
    RbfAuto,
    Rbf {
        gamma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub c: f64,
    pub epsilon: f64,
    pub kernel: FusionKernel,
    pub tol: f64,
    pub max_passes: usize,
    pub fit_split: FitSplit,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let base = SvrConfig::for_dim(1);
        Self {
            c: base.c,
            epsilon: base.epsilon,
            kernel: FusionKernel::RbfAuto,
            tol: base.tol,
            max_passes: base.max_passes,
            fit_split: FitSplit::Train,
            seed: 0,
        }
    }
}

impl FusionConfig {
    fn svr_config(&self, dim: usize, attr: Attribute) -> SvrConfig {
        let kernel = match self.kernel {
            FusionKernel::Linear => Kernel::Linear,
            FusionKernel::RbfAuto => Kernel::Rbf {
                gamma: 1.0 / dim as f64,
            },
            FusionKernel::Rbf { gamma } => Kernel::Rbf { gamma },
        };
        SvrConfig {
            c: self.c,
            epsilon: self.epsilon,
            kernel,
            tol: self.tol,
            max_passes: self.max_passes,
            seed: crate::rng::derive_seed(self.seed, attr.name()),
        }
    }
}

/// Subject lists for fitting and scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionSplits<'a> {
    pub train: &'a [String],
    pub dev: &'a [String],
    pub labels: &'a BTreeMap<String, LabelTrack>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionStageResult {
    pub stage_index: usize,
    /// Source ids this stage consumed.
    pub inputs: Vec<String>,
    /// Stage ids from stage 1 up to and including this one.
    pub provenance: Vec<String>,
    pub standardizer: Standardizer,
    /// One SVR per attribute, arousal first.
    pub models: [SvrModel; 3],
    pub fused: PredictionSet,
    pub dev: SplitScores,
}

impl FusionStageResult {
    pub fn dev_ccc(&self) -> AttributeTriple {
        self.dev.global
    }
}

fn stacked_rows(sources: &[&PredictionSet], subjects: &[String]) -> FusionResult<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for s in subjects {
        let tracks: Vec<&PredictionTrack> = sources
            .iter()
            .map(|p| p.track(s))
            .collect::<FusionResult<_>>()?;
        let mask = tracks[0].mask;
        if let Some(t) = tracks.iter().find(|t| t.mask != mask) {
            return Err(FusionError::Source {
                source_id: t.source_id.clone(),
                reason: format!("subject {s}: mask differs from {}", tracks[0].source_id),
            });
        }
        for f in 0..mask.valid() {
            rows.push(tracks.iter().flat_map(|t| t.frames[f].to_array()).collect());
        }
    }
    Ok(rows)
}

pub fn stage_id(k: usize) -> String {
    format!("stage{k}")
}

fn fuse_stage(
    stage_index: usize,
    sources: &[&PredictionSet],
    splits: &FusionSplits<'_>,
    cfg: &FusionConfig,
    provenance: Vec<String>,
) -> FusionResult<FusionStageResult> {
    if sources.is_empty() {
        return Err(FusionError::NoSources);
    }
    let fit_subjects = match cfg.fit_split {
        FitSplit::Train => splits.train,
        FitSplit::Dev => splits.dev,
    };
    let mut fit_rows = stacked_rows(sources, fit_subjects)?;
    let dim = 3 * sources.len();
    let standardizer = Standardizer::fit_rows(dim, fit_rows.iter().map(Vec::as_slice))?;
    fit_rows.iter_mut().for_each(|r| standardizer.apply_row(r));

    let mut targets: [Vec<f64>; 3] = Default::default();
    for s in fit_subjects {
        let l = splits.labels.get(s).ok_or_else(|| FusionError::Source {
            source_id: "labels".into(),
            reason: format!("no labels for subject {s}"),
        })?;
        let expected = sources[0].track(s)?.mask;
        if l.mask.valid() != expected.valid() {
            return Err(FusionError::Source {
                source_id: "labels".into(),
                reason: format!("subject {s}: label mask differs from predictions"),
            });
        }
        for v in l.valid_values() {
            for attr in Attribute::ALL {
                targets[attr.index()].push(v.get(attr));
            }
        }
    }
    let models: Vec<SvrModel> = Attribute::ALL
        .iter()
        .map(|&attr| {
            fit_svr(
                &fit_rows,
                &targets[attr.index()],
                &cfg.svr_config(dim, attr),
            )
        })
        .collect::<Result<_, _>>()?;
    let models: [SvrModel; 3] = models.try_into().expect("three attributes");

    let id = stage_id(stage_index);
    let mut tracks = Vec::new();
    for s in splits.train.iter().chain(splits.dev) {
        let template = sources[0].track(s)?;
        let mut rows = stacked_rows(sources, std::slice::from_ref(s))?;
        let mut frames = vec![AttributeTriple::ZERO; template.frames.len()];
        for (f, row) in rows.iter_mut().enumerate() {
            standardizer.apply_row(row);
            for attr in Attribute::ALL {
                frames[f].set(attr, models[attr.index()].predict_one(row)?);
            }
        }
        tracks.push(PredictionTrack {
            source_id: id.clone(),
            subject_id: s.clone(),
            frames,
            mask: template.mask,
        });
    }
    let fused = PredictionSet::new(id, tracks);
    let dev = fused.score(splits.labels, splits.dev)?;
    Ok(FusionStageResult {
        stage_index,
        inputs: sources.iter().map(|s| s.source_id.clone()).collect(),
        provenance,
        standardizer,
        models,
        fused,
        dev,
    })
}

/// Single-stage late fusion of `sources`.
pub fn late_fuse(
    sources: &[PredictionSet],
    splits: &FusionSplits<'_>,
    cfg: &FusionConfig,
) -> FusionResult<FusionStageResult> {
    let refs: Vec<&PredictionSet> = sources.iter().collect();
    fuse_stage(1, &refs, splits, cfg, vec![stage_id(1)])
}

/// Stage 1 fuses `sources`; every later stage refits on the previous
/// stage's fused output alone.
pub fn multistage_fuse(
    sources: &[PredictionSet],
    n_stages: usize,
    splits: &FusionSplits<'_>,
    cfg: &FusionConfig,
) -> FusionResult<Vec<FusionStageResult>> {
    if n_stages == 0 {
        return Err(FusionError::NoStages);
    }
    let mut out: Vec<FusionStageResult> = vec![late_fuse(sources, splits, cfg)?];
    for k in 2..=n_stages {
        let prev = out.last().expect("stage 1 present");
        let mut provenance = prev.provenance.clone();
        provenance.push(stage_id(k));
        let stage = fuse_stage(k, &[&prev.fused], splits, cfg, provenance)?;
        out.push(stage);
    }
    Ok(out)
}

/// Ids ordered by descending mean CCC, ties by id, truncated to `k`.
pub fn select_top_k(results: &[(String, AttributeTriple)], k: usize) -> Vec<String> {
    let mut v: Vec<&(String, AttributeTriple)> = results.iter().collect();
    v.sort_by(|a, b| {
        b.1.mean()
            .total_cmp(&a.1.mean())
            .then_with(|| a.0.cmp(&b.0))
    });
    v.into_iter().take(k).map(|(id, _)| id.clone()).collect()
}
