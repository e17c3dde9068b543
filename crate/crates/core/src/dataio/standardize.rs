use serde::{Deserialize, Serialize};

use super::{DataError, DataResult, FeatureTrack};

/// Per-feature z-scoring with statistics from the fitting split. Columns
/// with zero spread are only centred. Padded frames stay exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits on the valid frames of `tracks`.
    pub fn fit<'a, I>(tracks: I) -> DataResult<Self>
    where
        I: IntoIterator<Item = &'a FeatureTrack>,
    {
        let tracks: Vec<&FeatureTrack> = tracks.into_iter().collect();
        let dim = tracks
            .first()
            .map(|t| t.dim)
            .ok_or_else(|| DataError::Dataset("cannot fit a standardizer on zero tracks".into()))?;
        let rows = || {
            tracks
                .iter()
                .flat_map(|t| t.valid_frames().chunks_exact(t.dim))
        };
        Self::fit_rows(dim, rows())
    }

    /// Fits on raw rows of length `dim`.
    pub fn fit_rows<'a, I>(dim: usize, rows: I) -> DataResult<Self>
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        for r in rows.clone() {
            if r.len() != dim {
                return Err(DataError::Dataset(format!(
                    "row of length {} for dim {dim}",
                    r.len()
                )));
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(DataError::Dataset(
                "cannot fit a standardizer on zero frames".into(),
            ));
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }

    pub fn apply(&self, track: &FeatureTrack) -> DataResult<FeatureTrack> {
        if track.dim != self.dim() {
            return Err(DataError::Dataset(format!(
                "standardizer dim {} does not match track dim {}",
                self.dim(),
                track.dim
            )));
        }
        let mut out = track.clone();
        let valid = out.mask.valid() * out.dim;
        for row in out.frames[..valid].chunks_exact_mut(track.dim) {
            self.apply_row(row);
        }
        Ok(out)
    }
}
