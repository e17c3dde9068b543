//! Feature and label tracks, CSV ingestion, padding, label shift,
//! standardization, corpus manifests and the synthetic corpus generator.

mod csvio;
mod manifest;
mod shift;
mod standardize;
pub mod synth;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::AttributeTriple;

pub use csvio::{
    feature_csv_string, label_csv_string, load_feature_csv, load_label_csv, parse_feature_csv,
    parse_label_csv, write_feature_csv, write_label_csv,
};
pub use manifest::{FeatureSetEntry, Manifest, Splits};
pub use shift::{shift_labels, shift_values, unshift_predictions};
pub use standardize::Standardizer;
pub use synth::{synth_corpus, ModalitySpec, SynthSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: empty file")]
    Empty { file: String },
    #[error("{file}: bad header: {reason}")]
    Header { file: String, reason: String },
    #[error("{file}: line {line}, column {column}: {reason}")]
    Cell {
        file: String,
        line: usize,
        column: String,
        reason: String,
    },
    #[error("{file}: line {line}: {reason}")]
    Row {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("mask is not a contiguous valid prefix")]
    NonPrefixMask,
    #[error("mask has {valid} valid frames but length {len}")]
    BadMask { valid: usize, len: usize },
    #[error("track {subject} has {len} frames, exceeds max_len {max_len}")]
    TooLong {
        subject: String,
        len: usize,
        max_len: usize,
    },
    #[error("shift of {shift} frames needs more than {valid} valid frames")]
    ShiftTooLarge { shift: i64, valid: usize },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("synthetic spec: {0}")]
    Synth(String),
}

pub type DataResult<T> = std::result::Result<T, DataError>;

/// Validity mask of a padded sequence: the first `valid` of `len` frames
/// are real, the rest are padding. Only contiguous prefixes are
/// representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    len: usize,
    valid: usize,
}

impl Mask {
    pub fn full(len: usize) -> Self {
        Self { len, valid: len }
    }

    pub fn prefix(valid: usize, len: usize) -> DataResult<Self> {
        if valid > len {
            return Err(DataError::BadMask { valid, len });
        }
        Ok(Self { len, valid })
    }

    pub fn from_bits(bits: &[bool]) -> DataResult<Self> {
        let valid = bits.iter().take_while(|&&b| b).count();
        if bits[valid..].iter().any(|&b| b) {
            return Err(DataError::NonPrefixMask);
        }
        Ok(Self {
            len: bits.len(),
            valid,
        })
    }

    pub fn to_bits(self) -> Vec<bool> {
        (0..self.len).map(|t| t < self.valid).collect()
    }

    pub fn len(self) -> usize {
        self.len
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    pub fn valid(self) -> usize {
        self.valid
    }

    pub fn is_valid(self, t: usize) -> bool {
        t < self.valid
    }

    pub fn padded_to(self, len: usize) -> DataResult<Self> {
        Self::prefix(self.valid, len)
    }
}

/// Per-subject frame matrix (`len x dim`, row-major) of one feature set.
/// Padded frames are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    pub feature_set: String,
    pub subject_id: String,
    pub dim: usize,
    pub frames: Vec<f64>,
    pub mask: Mask,
}

impl FeatureTrack {
    pub fn new(
        feature_set: impl Into<String>,
        subject_id: impl Into<String>,
        dim: usize,
        frames: Vec<f64>,
    ) -> DataResult<Self> {
        let subject_id = subject_id.into();
        if dim == 0 || !frames.len().is_multiple_of(dim) {
            return Err(DataError::Dataset(format!(
                "track {subject_id}: {} values is not a multiple of dim {dim}",
                frames.len()
            )));
        }
        let len = frames.len() / dim;
        Ok(Self {
            feature_set: feature_set.into(),
            subject_id,
            dim,
            frames,
            mask: Mask::full(len),
        })
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.dim..(t + 1) * self.dim]
    }

    pub fn valid_frames(&self) -> &[f64] {
        &self.frames[..self.mask.valid() * self.dim]
    }

    pub fn pad_to(&self, max_len: usize) -> DataResult<Self> {
        if self.len() > max_len {
            return Err(DataError::TooLong {
                subject: self.subject_id.clone(),
                len: self.len(),
                max_len,
            });
        }
        let mut frames = self.frames.clone();
        frames.resize(max_len * self.dim, 0.0);
        Ok(Self {
            frames,
            mask: self.mask.padded_to(max_len)?,
            ..self.clone()
        })
    }
}

/// Per-subject (arousal, valence, liking) series; used for labels and
/// for predictions alike.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrack {
    pub subject_id: String,
    pub values: Vec<AttributeTriple>,
    pub mask: Mask,
}

impl LabelTrack {
    pub fn new(subject_id: impl Into<String>, values: Vec<AttributeTriple>) -> Self {
        let mask = Mask::full(values.len());
        Self {
            subject_id: subject_id.into(),
            values,
            mask,
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn valid_values(&self) -> &[AttributeTriple] {
        &self.values[..self.mask.valid()]
    }

    pub fn pad_to(&self, max_len: usize) -> DataResult<Self> {
        if self.len() > max_len {
            return Err(DataError::TooLong {
                subject: self.subject_id.clone(),
                len: self.len(),
                max_len,
            });
        }
        let mut values = self.values.clone();
        values.resize(max_len, AttributeTriple::ZERO);
        Ok(Self {
            subject_id: self.subject_id.clone(),
            values,
            mask: self.mask.padded_to(max_len)?,
        })
    }
}

/// Pads every track with zero frames up to `max_len`. Tracks longer than
/// `max_len` are rejected, never truncated.
pub fn pad_to(tracks: &[FeatureTrack], max_len: usize) -> DataResult<Vec<FeatureTrack>> {
    tracks.iter().map(|t| t.pad_to(max_len)).collect()
}

/// All subjects' tracks for one feature set, keyed by subject id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub name: String,
    pub dim: usize,
    pub tracks: BTreeMap<String, FeatureTrack>,
}

impl FeatureSet {
    pub fn from_tracks(name: impl Into<String>, tracks: Vec<FeatureTrack>) -> DataResult<Self> {
        let name = name.into();
        let dim = tracks
            .first()
            .map(|t| t.dim)
            .ok_or_else(|| DataError::Dataset(format!("feature set {name} has no tracks")))?;
        let mut map = BTreeMap::new();
        for t in tracks {
            if t.dim != dim {
                return Err(DataError::Dataset(format!(
                    "feature set {name}: subject {} has dim {}, expected {dim}",
                    t.subject_id, t.dim
                )));
            }
            if map.insert(t.subject_id.clone(), t).is_some() {
                return Err(DataError::Dataset(format!(
                    "feature set {name}: duplicate subject"
                )));
            }
        }
        Ok(Self {
            name,
            dim,
            tracks: map,
        })
    }

    pub fn track(&self, subject: &str) -> DataResult<&FeatureTrack> {
        self.tracks.get(subject).ok_or_else(|| {
            DataError::Dataset(format!(
                "feature set {} has no subject {subject}",
                self.name
            ))
        })
    }
}

/// A padded corpus: feature sets, labels and a train/dev split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub max_len: usize,
    pub feature_sets: Vec<FeatureSet>,
    pub labels: BTreeMap<String, LabelTrack>,
    pub train: Vec<String>,
    pub dev: Vec<String>,
}

impl Dataset {
    /// Validates and pads. Every subject in either split must have labels
    /// and every feature set, with matching valid lengths.
    pub fn new(
        max_len: usize,
        feature_sets: Vec<FeatureSet>,
        labels: Vec<LabelTrack>,
        train: Vec<String>,
        dev: Vec<String>,
    ) -> DataResult<Self> {
        if train.is_empty() || dev.is_empty() {
            return Err(DataError::Dataset(
                "train and dev splits must be non-empty".into(),
            ));
        }
        if let Some(s) = train.iter().find(|s| dev.contains(s)) {
            return Err(DataError::Dataset(format!(
                "subject {s} is in both train and dev"
            )));
        }
        let mut label_map = BTreeMap::new();
        for l in labels {
            let padded = l.pad_to(max_len)?;
            label_map.insert(padded.subject_id.clone(), padded);
        }
        let mut padded_sets = Vec::with_capacity(feature_sets.len());
        for fs in feature_sets {
            let mut tracks = BTreeMap::new();
            for (s, t) in fs.tracks {
                tracks.insert(s, t.pad_to(max_len)?);
            }
            padded_sets.push(FeatureSet { tracks, ..fs });
        }
        for s in train.iter().chain(&dev) {
            let label = label_map
                .get(s)
                .ok_or_else(|| DataError::Dataset(format!("subject {s} has no labels")))?;
            for fs in &padded_sets {
                let t = fs.track(s)?;
                if t.mask != label.mask {
                    return Err(DataError::Dataset(format!(
                        "subject {s}: feature set {} has {} frames, labels have {}",
                        fs.name,
                        t.mask.valid(),
                        label.mask.valid()
                    )));
                }
            }
        }
        Ok(Self {
            max_len,
            feature_sets: padded_sets,
            labels: label_map,
            train,
            dev,
        })
    }

    pub fn feature_set(&self, name: &str) -> DataResult<&FeatureSet> {
        self.feature_sets
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| DataError::Dataset(format!("unknown feature set {name}")))
    }

    pub fn feature_set_names(&self) -> Vec<String> {
        self.feature_sets.iter().map(|f| f.name.clone()).collect()
    }

    pub fn label(&self, subject: &str) -> DataResult<&LabelTrack> {
        self.labels
            .get(subject)
            .ok_or_else(|| DataError::Dataset(format!("no labels for subject {subject}")))
    }

    /// Train subjects followed by dev subjects.
    pub fn subjects(&self) -> impl Iterator<Item = &String> {
        self.train.iter().chain(&self.dev)
    }
}
