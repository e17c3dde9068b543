//! Random search over the multitask loss weights.
//!
//! Trial 0 is always the shipped default `(0.7, 0.2, 1.0)`; in comparator
//! mode, where `gamma = 1 - alpha - beta`, it is `(0.7, 0.2, 0.1)`. Every
//! trial trains with the same seed so trials differ only in their weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::experiment::{run_on_dataset, ExperimentOutcome, ExperimentSpec};
use super::report::{ReportRow, RowKind};
use crate::dataio::Dataset;
use crate::metrics::MtlWeights;
use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_trials: usize,
    /// Upper end of the sampling range for every weight.
    pub weight_max: f64,
    /// Fixes `gamma = 1.0` in random trials.
    pub pin_gamma: bool,
    /// Samples `(alpha, beta)` with `alpha + beta <= 1`, `gamma = 1 - alpha - beta`.
    pub comparator: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_trials: 20,
            weight_max: 1.0,
            pin_gamma: false,
            comparator: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if !(self.weight_max.is_finite() && self.weight_max > 0.0) {
            return Err(Error::Config(format!(
                "weight_max must be positive, got {}",
                self.weight_max
            )));
        }
        if self.comparator && (self.pin_gamma || self.weight_max != 1.0) {
            return Err(Error::Config(
                "comparator mode fixes gamma and the [0, 1] range".into(),
            ));
        }
        Ok(())
    }

    pub fn anchor(&self) -> MtlWeights {
        if self.comparator {
            MtlWeights::comparator(0.7, 0.2).expect("valid comparator anchor")
        } else {
            MtlWeights::default()
        }
    }
}

/// Anchor first, then `n_trials - 1` random draws.
pub fn sample_weights(cfg: &SearchConfig, seed: u64) -> Result<Vec<MtlWeights>> {
    cfg.validate()?;
    let mut rng = rng_for(seed, "weight-search");
    let mut out = vec![cfg.anchor()];
    while out.len() < cfg.n_trials {
        let w = if cfg.comparator {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            if a + b > 1.0 {
                continue;
            }
            MtlWeights::comparator(a, b)?
        } else {
            let mut draw = || rng.random_range(0.0..=cfg.weight_max);
            let (a, b) = (draw(), draw());
            let g = if cfg.pin_gamma { 1.0 } else { draw() };
            MtlWeights::new(a, b, g)?
        };
        out.push(w);
    }
    Ok(out)
}

pub struct SearchOutcome {
    pub best_index: usize,
    pub best_weights: MtlWeights,
    /// The best trial's full outcome, reported under the base id.
    pub best: ExperimentOutcome,
    /// One row per trial, failed trials included.
    pub trials: Vec<ReportRow>,
}

pub fn trial_id(base: &str, i: usize) -> String {
    format!("{base}.t{i:02}")
}

/// Runs every trial of [`sample_weights`] and keeps the best by dev
/// average CCC; earlier trials win ties.
pub fn search_weights(
    dataset: &Dataset,
    spec: &ExperimentSpec,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<SearchOutcome> {
    let candidates = sample_weights(cfg, seed)?;
    let mut trials = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64, ExperimentOutcome)> = None;
    for (i, w) in candidates.iter().enumerate() {
        let id = trial_id(&spec.id, i);
        let trial_spec = ExperimentSpec {
            id: id.clone(),
            weights: *w,
            ..spec.clone()
        };
        match run_on_dataset(dataset, &trial_spec, seed) {
            Ok(mut out) => {
                out.row.kind = RowKind::Trial;
                let avg = out.row.average().unwrap_or(f64::NEG_INFINITY);
                trials.push(out.row.clone());
                if best.as_ref().is_none_or(|(_, b, _)| avg > *b) {
                    best = Some((i, avg, out));
                }
            }
            Err(e) => {
                let e = e.in_experiment(&id);
                log::warn!("{e}");
                let mut row = ReportRow::failed(&id, RowKind::Trial, seed, &e);
                row.weights = Some(*w);
                trials.push(row);
            }
        }
    }
    let (best_index, _, mut best) =
        best.ok_or_else(|| Error::Config(format!("{}: every search trial failed", spec.id)))?;
    best.row.id = spec.id.clone();
    best.row.kind = spec.kind();
    best.predictions = crate::fusion::PredictionSet::new(
        spec.id.clone(),
        best.predictions.tracks.into_values().collect(),
    );
    Ok(SearchOutcome {
        best_index,
        best_weights: candidates[best_index],
        best,
        trials,
    })
}
