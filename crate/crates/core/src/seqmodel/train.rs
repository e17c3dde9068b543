//! Minibatch training loop with best-epoch selection.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{forward, loss_and_gradients, Pass, SeqBatch};
use super::optim::{rmsprop_step, RmsPropState};
use super::{ModelConfig, ModelError, ModelResult, ParamSet, TrainConfig};
use crate::dataio::Mask;
use crate::metrics::{AttributeTriple, SplitScores};
use crate::rng::rng_for;

/// One padded sequence with its targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub id: String,
    /// `steps x dim`, row-major.
    pub inputs: Vec<f64>,
    pub labels: Vec<AttributeTriple>,
    pub mask: Mask,
}

/// Sequences sharing one padded length and input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    pub steps: usize,
    pub dim: usize,
    pub sequences: Vec<Sequence>,
}

impl SequenceSet {
    pub fn new(steps: usize, dim: usize, sequences: Vec<Sequence>) -> ModelResult<Self> {
        for s in &sequences {
            if s.inputs.len() != steps * dim || s.labels.len() != steps || s.mask.len() != steps {
                return Err(ModelError::Shape(format!(
                    "sequence {} does not match {steps} x {dim}",
                    s.id
                )));
            }
        }
        Ok(Self {
            steps,
            dim,
            sequences,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> ModelResult<(SeqBatch, Vec<AttributeTriple>)> {
        let mut inputs = Vec::with_capacity(idx.len() * self.steps * self.dim);
        let mut labels = Vec::with_capacity(idx.len() * self.steps);
        let mut masks = Vec::with_capacity(idx.len());
        for &i in idx {
            let s = &self.sequences[i];
            inputs.extend_from_slice(&s.inputs);
            labels.extend_from_slice(&s.labels);
            masks.push(s.mask);
        }
        Ok((SeqBatch::new(self.steps, self.dim, inputs, masks)?, labels))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: SplitScores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters of the best epoch by dev average CCC (global
    /// concatenation); the initial parameters when `epochs == 0`.
    pub params: ParamSet,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Predictions for each sequence, `steps` long with zeros on padding.
pub fn predict(params: &ParamSet, set: &SequenceSet) -> ModelResult<Vec<Vec<AttributeTriple>>> {
    set.sequences
        .iter()
        .map(|s| {
            let batch = SeqBatch::new(set.steps, set.dim, s.inputs.clone(), vec![s.mask])?;
            Ok(forward(params, &batch, Pass::Inference)?.predictions)
        })
        .collect()
}

/// Dev-style scores of `params` on `set` against its labels.
pub fn evaluate(params: &ParamSet, set: &SequenceSet) -> ModelResult<SplitScores> {
    let preds = predict(params, set)?;
    let pairs = preds.iter().zip(&set.sequences).map(|(p, s)| {
        let v = s.mask.valid();
        (&p[..v], &s.labels[..v])
    });
    Ok(SplitScores::compute(pairs)?)
}

pub fn train(
    train_set: &SequenceSet,
    dev_set: &SequenceSet,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> ModelResult<TrainOutcome> {
    train_with_observer(train_set, dev_set, model_cfg, cfg, |_, _| {})
}

/// [`train`], calling `observer(step, params)` after every optimizer step.
pub fn train_with_observer(
    train_set: &SequenceSet,
    dev_set: &SequenceSet,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, &ParamSet),
) -> ModelResult<TrainOutcome> {
    model_cfg.validate()?;
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptySplit("train"));
    }
    if dev_set.is_empty() {
        return Err(ModelError::EmptySplit("dev"));
    }
    if train_set.dim != model_cfg.input_dim || dev_set.dim != model_cfg.input_dim {
        return Err(ModelError::Shape(
            "data dim does not match model input_dim".into(),
        ));
    }

    let mut init_rng = rng_for(cfg.rng_seed, "init");
    let mut shuffle_rng = rng_for(cfg.rng_seed, "shuffle");
    let mut dropout_rng = rng_for(cfg.rng_seed, "dropout");

    let mut params = ParamSet::init(model_cfg, &mut init_rng)?;
    let mut state = RmsPropState::new(params.len());
    let frozen: Vec<_> = (0..3)
        .filter(|&k| cfg.frozen_heads[k])
        .map(|k| params.head_range(k))
        .collect();

    let mut best: Option<(f64, usize, ParamSet)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let (batch, labels) = train_set.batch(idx)?;
            let (report, mut grads) = loss_and_gradients(
                &params,
                &batch,
                &labels,
                &cfg.weights,
                Pass::Training(&mut dropout_rng),
            )?;
            for r in &frozen {
                grads.as_flat_mut()[r.clone()]
                    .iter_mut()
                    .for_each(|g| *g = 0.0);
            }
            rmsprop_step(params.as_flat_mut(), grads.as_flat(), &mut state, cfg)?;
            step += 1;
            observer(step, &params);
            loss_sum += report.total;
            n_batches += 1;
        }
        let dev = evaluate(&params, dev_set)?;
        let score = dev.global.mean();
        log::debug!(
            "epoch {epoch}: loss {:.4} dev {:.4}",
            loss_sum / n_batches as f64,
            score
        );
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, params.clone()));
        }
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n_batches as f64,
            dev,
        });
    }
    Ok(match best {
        Some((_, epoch, p)) => TrainOutcome {
            params: p,
            history,
            best_epoch: Some(epoch),
        },
        None => TrainOutcome {
            params,
            history,
            best_epoch: None,
        },
    })
}
