//! The four-step procedure: unimodal runs, bimodal runs on the best
//! unimodal sets, late fusion of the best tracks, then repeated fusion.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::experiment::{
    persist, read_predictions, run_on_dataset, write_predictions, ExperimentSpec, ModelOverrides,
    TrainOverrides,
};
use super::report::{append_rows, PipelineSummary, ReportRow, RowKind, StagePoint, SummaryLine};
use super::{REPORT_FILE, SUMMARY_FILE};
use crate::dataio::{Dataset, Manifest};
use crate::fusion::{
    bimodal_pairs, multistage_fuse, select_top_k, FitSplit, FusionConfig, FusionSplits,
    FusionStageResult, PredictionSet,
};
use crate::metrics::{Attribute, MtlWeights};
use crate::rng::derive_seed;
use crate::{Error, Result};

fn default_shift() -> i64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub top_unimodal: usize,
    pub top_fusion: usize,
    pub stages: usize,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub weights: MtlWeights,
    #[serde(default = "default_shift")]
    pub label_shift: i64,
    #[serde(default)]
    pub fusion: FusionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            top_unimodal: 7,
            top_fusion: 11,
            stages: 5,
            model: ModelOverrides::default(),
            train: TrainOverrides::default(),
            weights: MtlWeights::default(),
            label_shift: default_shift(),
            fusion: FusionConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn spec(&self, id: &str, manifest: &Path, sets: &[&str], seed: u64) -> ExperimentSpec {
        ExperimentSpec {
            model: self.model.clone(),
            train: self.train.clone(),
            weights: self.weights,
            label_shift: self.label_shift,
            ..ExperimentSpec::new(id, manifest, sets, seed)
        }
    }
}

pub struct PipelineOutcome {
    /// Every row in execution order, failed ones included.
    pub rows: Vec<ReportRow>,
    pub stages: Vec<FusionStageResult>,
    pub summary: PipelineSummary,
}

pub fn unimodal_id(set: &str) -> String {
    format!("uni.{set}")
}

pub fn bimodal_id(a: &str, b: &str) -> String {
    format!("bi.{a}+{b}")
}

struct Runner<'a> {
    dataset: &'a Dataset,
    manifest: &'a Path,
    cfg: &'a PipelineConfig,
    seed: u64,
    out_dir: Option<&'a Path>,
    rows: Vec<ReportRow>,
    predictions: Vec<PredictionSet>,
}

impl Runner<'_> {
    fn record(&mut self, row: ReportRow) -> Result<()> {
        if let Some(dir) = self.out_dir {
            append_rows(&dir.join(REPORT_FILE), std::slice::from_ref(&row))?;
        }
        self.rows.push(row);
        Ok(())
    }

    /// Runs one experiment; failures become rows and do not stop the run.
    fn experiment(&mut self, id: &str, sets: &[&str]) -> Result<()> {
        let seed = derive_seed(self.seed, id);
        let spec = self.cfg.spec(id, self.manifest, sets, seed);
        let result = run_on_dataset(self.dataset, &spec, seed).and_then(|out| {
            if let Some(dir) = self.out_dir {
                persist(&dir.join(id), &spec, self.dataset, &out)?;
            }
            Ok(out)
        });
        match result {
            Ok(out) => {
                log::info!(
                    "{id}: average dev CCC {:.4}",
                    out.row.average().unwrap_or(f64::NAN)
                );
                self.predictions.push(out.predictions);
                self.record(out.row)
            }
            Err(e) => {
                let e = e.in_experiment(id);
                log::warn!("{e}");
                self.record(ReportRow::failed(id, spec.kind(), seed, &e))
            }
        }
    }

    fn ok_scores(&self, kind: RowKind) -> Vec<(String, crate::AttributeTriple)> {
        self.rows
            .iter()
            .filter(|r| r.kind == kind && r.is_ok())
            .map(|r| (r.id.clone(), r.ccc().unwrap()))
            .collect()
    }
}

/// Runs the pipeline on an already loaded dataset. Experiment seeds are
/// derived from `seed` and the experiment id.
pub fn run_pipeline_on(
    dataset: &Dataset,
    manifest_path: &Path,
    cfg: &PipelineConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<PipelineOutcome> {
    if cfg.stages == 0 || cfg.top_unimodal == 0 || cfg.top_fusion == 0 {
        return Err(Error::Config(
            "stages, top_unimodal and top_fusion must be positive".into(),
        ));
    }
    if cfg.fusion.fit_split == FitSplit::Dev {
        log::warn!("fusion SVRs are fitted on dev labels: fused dev scores are optimistic");
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let start = Instant::now();
    let mut runner = Runner {
        dataset,
        manifest: manifest_path,
        cfg,
        seed,
        out_dir,
        rows: vec![],
        predictions: vec![],
    };

    for name in dataset.feature_set_names() {
        runner.experiment(&unimodal_id(&name), &[&name])?;
    }
    let top_uni = select_top_k(&runner.ok_scores(RowKind::Unimodal), cfg.top_unimodal);
    let top_sets: Vec<String> = top_uni
        .iter()
        .map(|id| id.trim_start_matches("uni.").to_string())
        .collect();
    for (a, b) in bimodal_pairs(&top_sets) {
        runner.experiment(&bimodal_id(&a, &b), &[&a, &b])?;
    }

    let mut candidates = runner.ok_scores(RowKind::Unimodal);
    candidates.extend(runner.ok_scores(RowKind::Bimodal));
    let fusion_inputs = select_top_k(&candidates, cfg.top_fusion);
    let sources: Vec<PredictionSet> = fusion_inputs
        .iter()
        .map(|id| {
            runner
                .predictions
                .iter()
                .find(|p| &p.source_id == id)
                .cloned()
                .expect("ok rows have predictions")
        })
        .collect();

    let fusion_cfg = FusionConfig {
        seed: derive_seed(seed, "fusion"),
        ..cfg.fusion.clone()
    };
    let splits = FusionSplits {
        train: &dataset.train,
        dev: &dataset.dev,
        labels: &dataset.labels,
    };
    let stages =
        match fuse_and_persist(&sources, cfg.stages, &splits, &fusion_cfg, dataset, out_dir) {
            Ok(stages) => {
                for st in &stages {
                    runner.record(ReportRow::ok(
                        &st.provenance.last().unwrap().clone(),
                        RowKind::Fusion,
                        st.dev,
                        None,
                        fusion_cfg.seed,
                    ))?;
                }
                stages
            }
            Err(e) => {
                log::warn!("fusion failed: {e}");
                runner.record(ReportRow::failed(
                    "stage1",
                    RowKind::Fusion,
                    fusion_cfg.seed,
                    &e,
                ))?;
                vec![]
            }
        };

    let summary = summarize(
        &runner.rows,
        &stages,
        top_uni,
        fusion_inputs,
        cfg.fusion.fit_split == FitSplit::Dev,
    );
    if let Some(dir) = out_dir {
        let p = dir.join(SUMMARY_FILE);
        std::fs::write(&p, summary.to_json()?).map_err(|e| Error::io(p, e))?;
    }
    log::info!(
        "pipeline finished in {:.1} s",
        start.elapsed().as_secs_f64()
    );
    Ok(PipelineOutcome {
        rows: runner.rows,
        stages,
        summary,
    })
}

fn fuse_and_persist(
    sources: &[PredictionSet],
    n_stages: usize,
    splits: &FusionSplits<'_>,
    cfg: &FusionConfig,
    dataset: &Dataset,
    out_dir: Option<&Path>,
) -> Result<Vec<FusionStageResult>> {
    let stages = multistage_fuse(sources, n_stages, splits, cfg)?;
    if let Some(dir) = out_dir {
        for st in &stages {
            let sdir = dir.join(&st.fused.source_id);
            write_predictions(&sdir, &st.fused, dataset)?;
            for attr in Attribute::ALL {
                let p = sdir.join(format!("svr_{}.json", attr.name()));
                std::fs::write(&p, st.models[attr.index()].to_json()?)
                    .map_err(|e| Error::io(p, e))?;
            }
        }
    }
    Ok(stages)
}

fn best_of(rows: &[ReportRow], kind: RowKind) -> Option<&ReportRow> {
    let scored: Vec<_> = rows
        .iter()
        .filter(|r| r.kind == kind && r.is_ok())
        .map(|r| (r.id.clone(), r.ccc().unwrap()))
        .collect();
    let id = select_top_k(&scored, 1).pop()?;
    rows.iter().find(|r| r.id == id)
}

fn summarize(
    rows: &[ReportRow],
    stages: &[FusionStageResult],
    unimodal_top: Vec<String>,
    fusion_inputs: Vec<String>,
    fit_on_dev: bool,
) -> PipelineSummary {
    let mut table = Vec::new();
    if let Some(r) = best_of(rows, RowKind::Unimodal) {
        table.extend(SummaryLine::from_row("unimodal", r));
    }
    if let Some(r) = best_of(rows, RowKind::Bimodal) {
        table.extend(SummaryLine::from_row("bimodal", r));
    }
    let stage_rows: Vec<&ReportRow> = rows
        .iter()
        .filter(|r| r.kind == RowKind::Fusion && r.is_ok())
        .collect();
    if let Some(r) = stage_rows.first() {
        table.extend(SummaryLine::from_row("late fusion", r));
    }
    if stage_rows.len() > 1 {
        table.extend(SummaryLine::from_row(
            "multistage fusion",
            stage_rows[stage_rows.len() - 1],
        ));
    }
    let stages = stages
        .iter()
        .map(|s| {
            let c = s.dev_ccc();
            StagePoint {
                stage: s.stage_index,
                arousal: c.arousal,
                valence: c.valence,
                liking: c.liking,
                average: c.mean(),
            }
        })
        .collect();
    let failed = rows
        .iter()
        .filter(|r| !r.is_ok())
        .map(|r| r.id.clone())
        .collect();
    PipelineSummary {
        table,
        stages,
        unimodal_top,
        fusion_inputs,
        fit_on_dev,
        failed,
    }
}

pub fn run_pipeline(
    manifest_path: &Path,
    cfg: &PipelineConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<PipelineOutcome> {
    let manifest = Manifest::read(manifest_path)?;
    let dataset = manifest.load_dataset()?;
    run_pipeline_on(&dataset, manifest_path, cfg, seed, out_dir)
}

/// Multistage fusion of prediction directories written by earlier runs;
/// each directory's name becomes its source id.
pub fn fuse_directories(
    manifest_path: &Path,
    dirs: &[PathBuf],
    n_stages: usize,
    cfg: &FusionConfig,
    out_dir: Option<&Path>,
) -> Result<(Vec<FusionStageResult>, Vec<ReportRow>)> {
    if cfg.fit_split == FitSplit::Dev {
        log::warn!("fusion SVRs are fitted on dev labels: fused dev scores are optimistic");
    }
    let dataset = Manifest::read(manifest_path)?.load_dataset()?;
    let sources = dirs
        .iter()
        .map(|d| {
            let id = d
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| d.display().to_string());
            read_predictions(d, &id, dataset.max_len)
        })
        .collect::<Result<Vec<_>>>()?;
    let splits = FusionSplits {
        train: &dataset.train,
        dev: &dataset.dev,
        labels: &dataset.labels,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let stages = fuse_and_persist(&sources, n_stages, &splits, cfg, &dataset, out_dir)?;
    let rows: Vec<ReportRow> = stages
        .iter()
        .map(|st| ReportRow::ok(&st.fused.source_id, RowKind::Fusion, st.dev, None, cfg.seed))
        .collect();
    if let Some(dir) = out_dir {
        append_rows(&dir.join(REPORT_FILE), &rows)?;
    }
    Ok((stages, rows))
}
