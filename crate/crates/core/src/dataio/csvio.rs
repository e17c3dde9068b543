//! Canonical CSV schemas.
//!
//! Features: `subject_id,frame_index,f_0,...,f_{D-1}`.
//! Labels and predictions: `subject_id,frame_index,arousal,valence,liking`.
//!
//! Rows are ordered by subject then frame, `frame_index` counts from 0 per
//! subject, and only valid (unpadded) frames are written. Floats are
//! written with Rust's shortest round-trip formatting, so a file produced
//! by these writers is reproduced byte-for-byte by load + write.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use super::{DataError, DataResult, FeatureTrack, LabelTrack};
use crate::metrics::AttributeTriple;

const LABEL_COLUMNS: [&str; 3] = ["arousal", "valence", "liking"];

struct Block {
    subject: String,
    rows: Vec<f64>,
}

fn read_blocks<R: Read>(
    reader: R,
    file: &str,
    check_value_columns: impl Fn(&[String]) -> Result<(), String>,
) -> DataResult<(usize, Vec<Block>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => {
            return Err(DataError::Empty {
                file: file.to_string(),
            })
        }
        Some(r) => r.map_err(|e| DataError::Header {
            file: file.to_string(),
            reason: e.to_string(),
        })?,
    };
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if names.len() < 3 || names[0] != "subject_id" || names[1] != "frame_index" {
        return Err(DataError::Header {
            file: file.to_string(),
            reason: "expected subject_id,frame_index,<values...>".into(),
        });
    }
    check_value_columns(&names[2..]).map_err(|reason| DataError::Header {
        file: file.to_string(),
        reason,
    })?;
    let dim = names.len() - 2;

    let mut blocks: Vec<Block> = Vec::new();
    for (idx, rec) in records.enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| DataError::Row {
            file: file.to_string(),
            line,
            reason: e.to_string(),
        })?;
        if rec.len() != names.len() {
            return Err(DataError::Row {
                file: file.to_string(),
                line,
                reason: format!("expected {} fields, found {}", names.len(), rec.len()),
            });
        }
        let subject = &rec[0];
        if subject.is_empty() {
            return Err(DataError::Cell {
                file: file.to_string(),
                line,
                column: "subject_id".into(),
                reason: "empty subject id".into(),
            });
        }
        let frame: usize = rec[1].parse().map_err(|_| DataError::Cell {
            file: file.to_string(),
            line,
            column: "frame_index".into(),
            reason: format!("not a frame index: {:?}", &rec[1]),
        })?;
        let new_subject = blocks.last().is_none_or(|b| b.subject != subject);
        if new_subject {
            if let Some(prev) = blocks.last() {
                if prev.subject.as_str() > subject {
                    return Err(DataError::Row {
                        file: file.to_string(),
                        line,
                        reason: format!("subject {subject} out of order after {}", prev.subject),
                    });
                }
            }
            blocks.push(Block {
                subject: subject.to_string(),
                rows: Vec::new(),
            });
        }
        let block = blocks.last_mut().expect("pushed above");
        let expected = block.rows.len() / dim;
        if frame != expected {
            return Err(DataError::Cell {
                file: file.to_string(),
                line,
                column: "frame_index".into(),
                reason: format!("expected frame {expected}, found {frame}"),
            });
        }
        for (c, cell) in rec.iter().enumerate().skip(2) {
            let v: f64 = cell.parse().map_err(|_| DataError::Cell {
                file: file.to_string(),
                line,
                column: names[c].clone(),
                reason: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Cell {
                    file: file.to_string(),
                    line,
                    column: names[c].clone(),
                    reason: format!("non-finite value {cell}"),
                });
            }
            block.rows.push(v);
        }
    }
    if blocks.is_empty() {
        return Err(DataError::Empty {
            file: file.to_string(),
        });
    }
    Ok((dim, blocks))
}

fn check_feature_columns(cols: &[String]) -> Result<(), String> {
    for (i, c) in cols.iter().enumerate() {
        if *c != format!("f_{i}") {
            return Err(format!("column {} should be f_{i}, found {c}", i + 2));
        }
    }
    Ok(())
}

fn check_label_columns(cols: &[String]) -> Result<(), String> {
    if cols != LABEL_COLUMNS {
        return Err(format!(
            "expected arousal,valence,liking, found {}",
            cols.join(",")
        ));
    }
    Ok(())
}

pub fn parse_feature_csv<R: Read>(
    reader: R,
    file: &str,
    feature_set: &str,
) -> DataResult<Vec<FeatureTrack>> {
    let (dim, blocks) = read_blocks(reader, file, check_feature_columns)?;
    blocks
        .into_iter()
        .map(|b| FeatureTrack::new(feature_set, b.subject, dim, b.rows))
        .collect()
}

pub fn parse_label_csv<R: Read>(reader: R, file: &str) -> DataResult<Vec<LabelTrack>> {
    let (_, blocks) = read_blocks(reader, file, check_label_columns)?;
    Ok(blocks
        .into_iter()
        .map(|b| {
            let values = b
                .rows
                .chunks_exact(3)
                .map(|c| AttributeTriple::new(c[0], c[1], c[2]))
                .collect();
            LabelTrack::new(b.subject, values)
        })
        .collect())
}

fn open(path: &Path) -> DataResult<std::fs::File> {
    std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One track per subject, in file order.
pub fn load_feature_csv(path: &Path, feature_set: &str) -> DataResult<Vec<FeatureTrack>> {
    parse_feature_csv(open(path)?, &path.display().to_string(), feature_set)
}

pub fn load_label_csv(path: &Path) -> DataResult<Vec<LabelTrack>> {
    parse_label_csv(open(path)?, &path.display().to_string())
}

fn check_subject(id: &str) -> DataResult<()> {
    if id.is_empty() || id.contains([',', '"', '\n', '\r']) {
        return Err(DataError::Dataset(format!(
            "subject id {id:?} is not CSV-safe"
        )));
    }
    Ok(())
}

fn sorted<T>(tracks: &[T], id: impl Fn(&T) -> &str) -> Vec<&T> {
    let mut v: Vec<&T> = tracks.iter().collect();
    v.sort_by(|a, b| id(a).cmp(id(b)));
    v
}

pub fn feature_csv_string(tracks: &[FeatureTrack]) -> DataResult<String> {
    let dim = tracks.first().map_or(0, |t| t.dim);
    if dim == 0 || tracks.iter().any(|t| t.dim != dim) {
        return Err(DataError::Dataset(
            "feature tracks must share a non-zero dim".into(),
        ));
    }
    let mut out = String::from("subject_id,frame_index");
    for i in 0..dim {
        write!(out, ",f_{i}").unwrap();
    }
    out.push('\n');
    for t in sorted(tracks, |t| &t.subject_id) {
        check_subject(&t.subject_id)?;
        for f in 0..t.mask.valid() {
            write!(out, "{},{f}", t.subject_id).unwrap();
            for v in t.frame(f) {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn label_csv_string(tracks: &[LabelTrack]) -> DataResult<String> {
    let mut out = String::from("subject_id,frame_index,arousal,valence,liking\n");
    for t in sorted(tracks, |t| &t.subject_id) {
        check_subject(&t.subject_id)?;
        for (f, v) in t.valid_values().iter().enumerate() {
            writeln!(
                out,
                "{},{f},{},{},{}",
                t.subject_id, v.arousal, v.valence, v.liking
            )
            .unwrap();
        }
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> DataResult<()> {
    std::fs::write(path, contents).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_feature_csv(path: &Path, tracks: &[FeatureTrack]) -> DataResult<()> {
    write_file(path, &feature_csv_string(tracks)?)
}

/// Also used for prediction tracks.
pub fn write_label_csv(path: &Path, tracks: &[LabelTrack]) -> DataResult<()> {
    write_file(path, &label_csv_string(tracks)?)
}
