//! Synthetic corpora for desk-scale verification.
//!
//! Each subject gets three independent latent emotion series (one per
//! attribute), produced by a unit-variance AR(1) low-pass filter over white
//! noise. Labels are the latents scaled by `label_scale` and delayed by
//! `annotation_delay` frames. A modality's features are a fixed random
//! linear mix of the latents, weighted per attribute by the modality's
//! `signal` strengths, plus white noise of standard deviation `noise`, then
//! a per-column offset and scale.
//!
//! Every random draw is seeded from `(seed, purpose, name)`, so adding a
//! modality or a subject does not disturb the others.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, DataResult, Dataset, FeatureSet, FeatureTrack, LabelTrack};
use crate::metrics::{Attribute, AttributeTriple};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub dim: usize,
    /// Signal strength per attribute; 0 means the modality carries none.
    pub signal: AttributeTriple,
    pub noise: f64,
}

impl ModalitySpec {
    pub fn new(name: &str, dim: usize, signal: [f64; 3], noise: f64) -> Self {
        Self {
            name: name.to_string(),
            dim,
            signal: AttributeTriple::from_array(signal),
            noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_train: usize,
    pub n_dev: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// AR(1) coefficient of the latent series, in `[0, 1)`.
    pub smoothing: f64,
    pub label_scale: f64,
    pub annotation_delay: usize,
    pub modalities: Vec<ModalitySpec>,
}

impl Default for SynthSpec {
    /// Twelve feature sets with complementary attribute coverage.
    fn default() -> Self {
        let m = ModalitySpec::new;
        Self {
            n_train: 24,
            n_dev: 12,
            min_len: 60,
            max_len: 100,
            smoothing: 0.95,
            label_scale: 0.5,
            annotation_delay: 1,
            modalities: vec![
                m("fs01", 8, [1.0, 0.1, 0.1], 1.0),
                m("fs02", 6, [0.8, 0.0, 0.3], 1.0),
                m("fs03", 8, [0.1, 1.0, 0.1], 1.0),
                m("fs04", 6, [0.0, 0.8, 0.3], 1.0),
                m("fs05", 10, [0.5, 0.5, 0.5], 1.5),
                m("fs06", 6, [0.1, 0.1, 0.8], 1.5),
                m("fs07", 4, [0.6, 0.0, 0.0], 2.0),
                m("fs08", 4, [0.0, 0.6, 0.0], 2.0),
                m("fs09", 8, [0.3, 0.3, 0.0], 2.5),
                m("fs10", 6, [0.0, 0.0, 0.4], 2.5),
                m("fs11", 5, [0.2, 0.2, 0.2], 3.0),
                m("fs12", 5, [0.1, 0.0, 0.1], 3.0),
            ],
        }
    }
}

impl SynthSpec {
    /// Modality `a` carries arousal only, `b` valence only.
    pub fn two_modality() -> Self {
        Self {
            modalities: vec![
                ModalitySpec::new("a", 6, [1.0, 0.0, 0.0], 0.5),
                ModalitySpec::new("b", 6, [0.0, 1.0, 0.0], 0.5),
            ],
            ..Self::default()
        }
    }

    /// One noise-free modality whose features are a fixed linear map of
    /// the labels (no annotation delay).
    pub fn linear_map() -> Self {
        Self {
            annotation_delay: 0,
            modalities: vec![ModalitySpec::new("lin", 6, [1.0, 1.0, 1.0], 0.0)],
            ..Self::default()
        }
    }

    fn validate(&self) -> DataResult<()> {
        let bad = |m: &str| Err(DataError::Synth(m.to_string()));
        if self.n_train == 0 || self.n_dev == 0 {
            return bad("n_train and n_dev must be positive");
        }
        if self.min_len < 4 || self.min_len > self.max_len {
            return bad("need 4 <= min_len <= max_len");
        }
        if self.annotation_delay + 2 > self.min_len {
            return bad("annotation_delay too large for min_len");
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return bad("smoothing must be in [0, 1)");
        }
        if !(self.label_scale.is_finite() && self.label_scale > 0.0) {
            return bad("label_scale must be positive");
        }
        if self.modalities.is_empty() {
            return bad("at least one modality is required");
        }
        for m in &self.modalities {
            if m.dim == 0 || !m.noise.is_finite() || m.noise < 0.0 || !m.signal.is_finite() {
                return bad(&format!("modality {} has invalid dim/noise/signal", m.name));
            }
        }
        Ok(())
    }

    pub fn subject_ids(&self) -> Vec<String> {
        (0..self.n_train + self.n_dev)
            .map(|i| format!("s{i:03}"))
            .collect()
    }
}

fn latent(seed: u64, subject: &str, len: usize, rho: f64) -> [Vec<f64>; 3] {
    let mut rng = rng_for(seed, &format!("latent/{subject}"));
    let innov = (1.0 - rho * rho).sqrt();
    std::array::from_fn(|_| {
        let mut z: f64 = rng.sample(StandardNormal);
        (0..len)
            .map(|_| {
                let out = z;
                let e: f64 = rng.sample(StandardNormal);
                z = rho * z + innov * e;
                out
            })
            .collect()
    })
}

/// Generates a corpus; bit-identical for identical `(seed, spec)`.
pub fn synth_corpus(seed: u64, spec: &SynthSpec) -> DataResult<Dataset> {
    spec.validate()?;
    let subjects = spec.subject_ids();
    let delay = spec.annotation_delay;

    let loadings: Vec<Vec<[f64; 3]>> = spec
        .modalities
        .iter()
        .map(|m| {
            let mut rng = rng_for(seed, &format!("loading/{}", m.name));
            (0..m.dim)
                .map(|_| std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal)))
                .collect()
        })
        .collect();
    let affine: Vec<Vec<(f64, f64)>> = spec
        .modalities
        .iter()
        .map(|m| {
            let mut rng = rng_for(seed, &format!("affine/{}", m.name));
            (0..m.dim)
                .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(0.5..3.0)))
                .collect()
        })
        .collect();

    let mut labels = Vec::with_capacity(subjects.len());
    let mut tracks: Vec<Vec<FeatureTrack>> = vec![Vec::new(); spec.modalities.len()];
    for subject in &subjects {
        let len =
            rng_for(seed, &format!("length/{subject}")).random_range(spec.min_len..=spec.max_len);
        // emotion[t + delay] is the state at frame t
        let emotion = latent(seed, subject, len + delay, spec.smoothing);
        let values = (0..len)
            .map(|t| {
                AttributeTriple::from_array(std::array::from_fn(|a| {
                    spec.label_scale * emotion[a][t]
                }))
            })
            .collect();
        labels.push(LabelTrack::new(subject.clone(), values));

        for (mi, m) in spec.modalities.iter().enumerate() {
            let mut rng = rng_for(seed, &format!("noise/{}/{subject}", m.name));
            let mut frames = Vec::with_capacity(len * m.dim);
            for t in 0..len {
                for (j, load) in loadings[mi].iter().enumerate() {
                    let signal: f64 = Attribute::ALL
                        .iter()
                        .map(|&a| load[a.index()] * m.signal.get(a) * emotion[a.index()][t + delay])
                        .sum();
                    let e: f64 = rng.sample(StandardNormal);
                    let (offset, scale) = affine[mi][j];
                    frames.push(offset + scale * (signal + m.noise * e));
                }
            }
            tracks[mi].push(FeatureTrack::new(&m.name, subject.clone(), m.dim, frames)?);
        }
    }
    let sets = spec
        .modalities
        .iter()
        .zip(tracks)
        .map(|(m, t)| FeatureSet::from_tracks(&m.name, t))
        .collect::<DataResult<Vec<_>>>()?;
    let (train, dev) = subjects.split_at(spec.n_train);
    Dataset::new(spec.max_len, sets, labels, train.to_vec(), dev.to_vec())
}
