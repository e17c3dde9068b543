//! Annotation-delay compensation.
//!
//! A positive shift moves labels earlier in time: frame `t` receives the
//! label of frame `t + k`. The `k` vacated frames at the end of the valid
//! prefix repeat the last valid label. A negative shift moves values later
//! and repeats the first valid value. Padded frames are never touched.

use super::{DataError, DataResult, LabelTrack, Mask};
use crate::metrics::AttributeTriple;

pub fn shift_values(
    values: &[AttributeTriple],
    mask: Mask,
    k: i64,
) -> DataResult<Vec<AttributeTriple>> {
    let valid = mask.valid();
    if k.unsigned_abs() as usize >= valid.max(1) && k != 0 {
        return Err(DataError::ShiftTooLarge { shift: k, valid });
    }
    let mut out = values.to_vec();
    if k == 0 {
        return Ok(out);
    }
    for (t, slot) in out.iter_mut().enumerate().take(valid) {
        let src = (t as i64 + k).clamp(0, valid as i64 - 1) as usize;
        *slot = values[src];
    }
    Ok(out)
}

/// Shifts labels `frames` steps toward the front.
pub fn shift_labels(labels: &LabelTrack, frames: i64) -> DataResult<LabelTrack> {
    Ok(LabelTrack {
        subject_id: labels.subject_id.clone(),
        values: shift_values(&labels.values, labels.mask, frames)?,
        mask: labels.mask,
    })
}

/// Inverse of [`shift_labels`] on the overlap region.
pub fn unshift_predictions(preds: &LabelTrack, frames: i64) -> DataResult<LabelTrack> {
    shift_labels(preds, -frames)
}
