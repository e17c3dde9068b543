//! Report rows and their CSV/JSON forms.
//!
//! `report.csv` is append-only: every run adds rows, existing rows are never
//! rewritten. Columns, in order:
//!
//! ```text
//! id,kind,status,arousal,valence,liking,average,
//! seq_arousal,seq_valence,seq_liking,seq_average,
//! alpha,beta,gamma,seed,best_epoch,elapsed_ms,error
//! ```
//!
//! `arousal..average` are dev CCCs on the concatenation of all dev subjects;
//! `seq_*` are per-subject CCCs averaged over subjects. Score and weight
//! cells are empty on failed rows and weight cells are empty on fusion rows.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{AttributeTriple, MtlWeights, SplitScores};
use crate::{Error, Result};

pub const REPORT_HEADER: [&str; 18] = [
    "id",
    "kind",
    "status",
    "arousal",
    "valence",
    "liking",
    "average",
    "seq_arousal",
    "seq_valence",
    "seq_liking",
    "seq_average",
    "alpha",
    "beta",
    "gamma",
    "seed",
    "best_epoch",
    "elapsed_ms",
    "error",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Unimodal,
    Bimodal,
    Trial,
    Fusion,
}

impl RowKind {
    pub fn name(self) -> &'static str {
        match self {
            RowKind::Unimodal => "unimodal",
            RowKind::Bimodal => "bimodal",
            RowKind::Trial => "trial",
            RowKind::Fusion => "fusion",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            RowKind::Unimodal,
            RowKind::Bimodal,
            RowKind::Trial,
            RowKind::Fusion,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// Dev scores of one experiment or fusion stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    pub kind: RowKind,
    pub scores: Option<SplitScores>,
    pub weights: Option<MtlWeights>,
    pub seed: u64,
    pub best_epoch: Option<usize>,
    pub elapsed_ms: u64,
    pub error: Option<String>,
}

impl ReportRow {
    pub fn ok(
        id: &str,
        kind: RowKind,
        scores: SplitScores,
        weights: Option<MtlWeights>,
        seed: u64,
    ) -> Self {
        Self {
            id: id.into(),
            kind,
            scores: Some(scores),
            weights,
            seed,
            best_epoch: None,
            elapsed_ms: 0,
            error: None,
        }
    }

    pub fn failed(id: &str, kind: RowKind, seed: u64, err: &Error) -> Self {
        Self {
            id: id.into(),
            kind,
            scores: None,
            weights: None,
            seed,
            best_epoch: None,
            elapsed_ms: 0,
            error: Some(err.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.scores.is_some()
    }

    /// Global dev CCC per attribute.
    pub fn ccc(&self) -> Option<AttributeTriple> {
        self.scores.map(|s| s.global)
    }

    /// Mean of the three global dev CCCs.
    pub fn average(&self) -> Option<f64> {
        self.ccc().map(|c| c.mean())
    }

    /// Equality ignoring wall-clock time.
    pub fn same_result(&self, other: &Self) -> bool {
        Self {
            elapsed_ms: 0,
            ..self.clone()
        } == Self {
            elapsed_ms: 0,
            ..other.clone()
        }
    }

    pub fn to_record(&self) -> Vec<String> {
        let f = |v: f64| v.to_string();
        let mut rec = vec![self.id.clone(), self.kind.name().to_string()];
        rec.push(if self.is_ok() { "ok" } else { "failed" }.to_string());
        match self.scores {
            Some(s) => {
                for t in [s.global, s.per_sequence] {
                    rec.extend(t.to_array().map(f));
                    rec.push(f(t.mean()));
                }
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 8)),
        }
        match self.weights {
            Some(w) => rec.extend(w.to_array().map(f)),
            None => rec.extend(std::iter::repeat_n(String::new(), 3)),
        }
        rec.push(self.seed.to_string());
        rec.push(self.best_epoch.map(|e| e.to_string()).unwrap_or_default());
        rec.push(self.elapsed_ms.to_string());
        rec.push(self.error.clone().unwrap_or_default());
        rec
    }

    pub fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        let bad = |what: &str| {
            Error::Config(format!(
                "report row {:?}: bad {what}",
                rec.get(0).unwrap_or("")
            ))
        };
        if rec.len() != REPORT_HEADER.len() {
            return Err(bad("field count"));
        }
        let num = |i: usize| -> Result<Option<f64>> {
            let s = &rec[i];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(REPORT_HEADER[i]))
            }
        };
        let triple = |start: usize| -> Result<Option<AttributeTriple>> {
            match (num(start)?, num(start + 1)?, num(start + 2)?) {
                (Some(a), Some(v), Some(l)) => Ok(Some(AttributeTriple::new(a, v, l))),
                (None, None, None) => Ok(None),
                _ => Err(bad("score triple")),
            }
        };
        let scores = match (triple(3)?, triple(7)?) {
            (Some(global), Some(per_sequence)) => Some(SplitScores {
                global,
                per_sequence,
            }),
            (None, None) => None,
            _ => return Err(bad("scores")),
        };
        let weights = triple(11)?.map(|t| MtlWeights::from_array(t.to_array()));
        let error = if rec[17].is_empty() {
            None
        } else {
            Some(rec[17].to_string())
        };
        Ok(Self {
            id: rec[0].to_string(),
            kind: RowKind::parse(&rec[1]).ok_or_else(|| bad("kind"))?,
            scores,
            weights,
            seed: rec[14].parse().map_err(|_| bad("seed"))?,
            best_epoch: if rec[15].is_empty() {
                None
            } else {
                Some(rec[15].parse().map_err(|_| bad("best_epoch"))?)
            },
            elapsed_ms: rec[16].parse().map_err(|_| bad("elapsed_ms"))?,
            error,
        })
    }
}

/// Rows as CSV text, header included.
pub fn rows_csv_string(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut write = |rec: &[String]| {
        w.write_record(rec)
            .map_err(|e| Error::Config(e.to_string()))
    };
    write(&REPORT_HEADER.map(String::from))?;
    for r in rows {
        write(&r.to_record())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Appends `rows` to `path`, writing the header if the file is new or empty.
pub fn append_rows(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let is_new = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
    let text = rows_csv_string(rows)?;
    let body = if is_new {
        text.as_str()
    } else {
        text.split_once('\n').map_or("", |(_, rest)| rest)
    };
    file.write_all(body.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| Error::Config(e.to_string()))?;
    if header.iter().ne(REPORT_HEADER) {
        return Err(Error::Config(format!(
            "{}: not a report file",
            path.display()
        )));
    }
    r.records()
        .map(|rec| ReportRow::from_record(&rec.map_err(|e| Error::Config(e.to_string()))?))
        .collect()
}

/// Fixed-width table for terminals.
pub fn format_table(rows: &[ReportRow]) -> String {
    let mut out = format!(
        "{:<28} {:<9} {:>8} {:>8} {:>8} {:>8}\n",
        "id", "kind", "arousal", "valence", "liking", "average"
    );
    for r in rows {
        match r.ccc() {
            Some(c) => out.push_str(&format!(
                "{:<28} {:<9} {:>8.3} {:>8.3} {:>8.3} {:>8.3}\n",
                r.id,
                r.kind.name(),
                c.arousal,
                c.valence,
                c.liking,
                c.mean()
            )),
            None => out.push_str(&format!(
                "{:<28} {:<9} failed: {}\n",
                r.id,
                r.kind.name(),
                r.error.as_deref().unwrap_or("")
            )),
        }
    }
    out
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryLine {
    pub method: String,
    pub source: String,
    pub arousal: f64,
    pub valence: f64,
    pub liking: f64,
    pub average: f64,
}

impl SummaryLine {
    pub fn from_row(method: &str, row: &ReportRow) -> Option<Self> {
        let c = row.ccc()?;
        Some(Self {
            method: method.into(),
            source: row.id.clone(),
            arousal: c.arousal,
            valence: c.valence,
            liking: c.liking,
            average: c.mean(),
        })
    }
}

/// Average dev CCC after each fusion stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePoint {
    pub stage: usize,
    pub arousal: f64,
    pub valence: f64,
    pub liking: f64,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    /// Best unimodal, best bimodal, first late fusion and last stage.
    pub table: Vec<SummaryLine>,
    pub stages: Vec<StagePoint>,
    pub unimodal_top: Vec<String>,
    pub fusion_inputs: Vec<String>,
    pub fit_on_dev: bool,
    pub failed: Vec<String>,
}

impl PipelineSummary {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}
