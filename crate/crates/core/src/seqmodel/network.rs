//! Forward pass and backpropagation through time.

use rand::Rng;

use super::{ModelError, ModelResult, ParamSet};
use crate::dataio::{FeatureTrack, Mask};
use crate::metrics::{
    ccc_loss, ccc_loss_with_grad, Attribute, AttributeTriple, MtlLoss, MtlWeights,
};
use crate::rng::ModelRng;

/// A padded batch: `batch x steps x dim` inputs, one mask per sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    pub steps: usize,
    pub dim: usize,
    pub inputs: Vec<f64>,
    pub masks: Vec<Mask>,
}

impl SeqBatch {
    pub fn new(steps: usize, dim: usize, inputs: Vec<f64>, masks: Vec<Mask>) -> ModelResult<Self> {
        if inputs.len() != masks.len() * steps * dim {
            return Err(ModelError::Shape(format!(
                "{} input values for {} x {steps} x {dim}",
                inputs.len(),
                masks.len()
            )));
        }
        if let Some(m) = masks.iter().find(|m| m.len() != steps) {
            return Err(ModelError::Shape(format!(
                "mask of length {} for {steps} steps",
                m.len()
            )));
        }
        Ok(Self {
            steps,
            dim,
            inputs,
            masks,
        })
    }

    pub fn from_tracks(tracks: &[&FeatureTrack]) -> ModelResult<Self> {
        let first = tracks
            .first()
            .ok_or_else(|| ModelError::Shape("empty batch".into()))?;
        let (steps, dim) = (first.len(), first.dim);
        let mut inputs = Vec::with_capacity(tracks.len() * steps * dim);
        for t in tracks {
            if t.len() != steps || t.dim != dim {
                return Err(ModelError::Shape(
                    "tracks in a batch must share length and dim".into(),
                ));
            }
            inputs.extend_from_slice(&t.frames);
        }
        Self::new(steps, dim, inputs, tracks.iter().map(|t| t.mask).collect())
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn sequence(&self, b: usize) -> &[f64] {
        let n = self.steps * self.dim;
        &self.inputs[b * n..(b + 1) * n]
    }
}

/// Dropout is active only in training passes.
pub enum Pass<'a> {
    Inference,
    Training(&'a mut ModelRng),
}

struct LayerCache {
    input: Vec<f64>,
    /// Activated gates per frame: input, forget, cell, output.
    gates: Vec<f64>,
    cell: Vec<f64>,
    tanh_cell: Vec<f64>,
    hidden: Vec<f64>,
    dropout: Option<Vec<f64>>,
    output: Vec<f64>,
}

pub(crate) struct SeqCache {
    valid: usize,
    layers: Vec<LayerCache>,
}

pub struct ForwardOutput {
    /// `batch x steps` predictions; padded frames are zero.
    pub predictions: Vec<AttributeTriple>,
    pub(crate) caches: Vec<SeqCache>,
}

impl ForwardOutput {
    pub fn sequence(&self, b: usize, steps: usize) -> &[AttributeTriple] {
        &self.predictions[b * steps..(b + 1) * steps]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn lstm_layer(
    params: &ParamSet,
    l: usize,
    input: Vec<f64>,
    valid: usize,
    dropout_rate: f64,
    rng: Option<&mut ModelRng>,
) -> LayerCache {
    let lay = params.layer(l);
    let (d, h) = (lay.input_dim, lay.units);
    let w_in = params.w_input(l);
    let w_rec = params.w_recurrent(l);
    let bias = params.bias(l);

    let mut gates = vec![0.0; valid * 4 * h];
    let mut cell = vec![0.0; valid * h];
    let mut tanh_cell = vec![0.0; valid * h];
    let mut hidden = vec![0.0; valid * h];
    let mut z = vec![0.0; 4 * h];
    for t in 0..valid {
        let x = &input[t * d..(t + 1) * d];
        z.copy_from_slice(bias);
        for (r, zr) in z.iter_mut().enumerate() {
            let row = &w_in[r * d..(r + 1) * d];
            *zr += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        if t > 0 {
            let hp = &hidden[(t - 1) * h..t * h];
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &w_rec[r * h..(r + 1) * h];
                *zr += row.iter().zip(hp).map(|(w, v)| w * v).sum::<f64>();
            }
        }
        let g = &mut gates[t * 4 * h..(t + 1) * 4 * h];
        for u in 0..h {
            g[u] = sigmoid(z[u]);
            g[h + u] = sigmoid(z[h + u]);
            g[2 * h + u] = z[2 * h + u].tanh();
            g[3 * h + u] = sigmoid(z[3 * h + u]);
        }
        for u in 0..h {
            let c_prev = if t > 0 { cell[(t - 1) * h + u] } else { 0.0 };
            let c = g[h + u] * c_prev + g[u] * g[2 * h + u];
            cell[t * h + u] = c;
            let tc = c.tanh();
            tanh_cell[t * h + u] = tc;
            hidden[t * h + u] = g[3 * h + u] * tc;
        }
    }
    let (dropout, output) = match rng {
        Some(rng) if dropout_rate > 0.0 => {
            let keep = 1.0 - dropout_rate;
            let scales: Vec<f64> = (0..valid * h)
                .map(|_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect();
            let out = hidden.iter().zip(&scales).map(|(a, s)| a * s).collect();
            (Some(scales), out)
        }
        _ => (None, hidden.clone()),
    };
    LayerCache {
        input,
        gates,
        cell,
        tanh_cell,
        hidden,
        dropout,
        output,
    }
}

/// Runs the network over every valid frame of every sequence.
pub fn forward(
    params: &ParamSet,
    batch: &SeqBatch,
    mut pass: Pass<'_>,
) -> ModelResult<ForwardOutput> {
    let cfg = params.config();
    if batch.dim != cfg.input_dim {
        return Err(ModelError::Shape(format!(
            "batch dim {} but model input_dim {}",
            batch.dim, cfg.input_dim
        )));
    }
    if batch.inputs.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("input"));
    }
    let h_last = cfg.last_units();
    let mut predictions = vec![AttributeTriple::ZERO; batch.len() * batch.steps];
    let mut caches = Vec::with_capacity(batch.len());
    for b in 0..batch.len() {
        let valid = batch.masks[b].valid();
        let mut input = batch.sequence(b)[..valid * batch.dim].to_vec();
        let mut layers = Vec::with_capacity(params.num_layers());
        for l in 0..params.num_layers() {
            let rng = match &mut pass {
                Pass::Training(r) => Some(&mut **r),
                Pass::Inference => None,
            };
            let cache = lstm_layer(params, l, input, valid, cfg.dropout_rate, rng);
            input = cache.output.clone();
            layers.push(cache);
        }
        let out = &layers.last().expect("at least one layer").output;
        for t in 0..valid {
            let hrow = &out[t * h_last..(t + 1) * h_last];
            let mut y = [0.0; 3];
            for (k, yk) in y.iter_mut().enumerate() {
                let w = params.head_weights(k);
                *yk = params.head_bias(k) + w.iter().zip(hrow).map(|(a, v)| a * v).sum::<f64>();
            }
            predictions[b * batch.steps + t] = AttributeTriple::from_array(y);
        }
        caches.push(SeqCache { valid, layers });
    }
    Ok(ForwardOutput {
        predictions,
        caches,
    })
}

/// Batch loss: mean over sequences of the weighted CCC loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub components: AttributeTriple,
}

/// Weighted multitask CCC loss of one batch and its exact gradient.
///
/// Each sequence's loss is computed on its valid frames only; the batch
/// loss is the mean over sequences. Heads with zero weight receive exactly
/// zero gradient.
pub fn loss_and_gradients(
    params: &ParamSet,
    batch: &SeqBatch,
    labels: &[AttributeTriple],
    weights: &MtlWeights,
    pass: Pass<'_>,
) -> ModelResult<(LossReport, ParamSet)> {
    if labels.len() != batch.len() * batch.steps {
        return Err(ModelError::Shape(format!(
            "{} labels for {} x {}",
            labels.len(),
            batch.len(),
            batch.steps
        )));
    }
    if batch.is_empty() {
        return Err(ModelError::Shape("empty batch".into()));
    }
    let fwd = forward(params, batch, pass)?;
    let mut grads = params.zeros_like();
    let inv_b = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut comp = [0.0; 3];

    for (b, cache) in fwd.caches.iter().enumerate() {
        let v = cache.valid;
        let pred = &fwd.sequence(b, batch.steps)[..v];
        let truth = &labels[b * batch.steps..b * batch.steps + v];
        let mut seq_comp = AttributeTriple::ZERO;
        // dL/dy per frame and head
        let mut dy = vec![[0.0f64; 3]; v];
        for attr in Attribute::ALL {
            let k = attr.index();
            let x: Vec<f64> = pred.iter().map(|p| p.get(attr)).collect();
            let y: Vec<f64> = truth.iter().map(|p| p.get(attr)).collect();
            let w = weights.get(attr);
            let loss = if w != 0.0 {
                let (loss, g) = ccc_loss_with_grad(&x, &y)
                    .map_err(|source| ModelError::Loss { index: b, source })?;
                for (d, gi) in dy.iter_mut().zip(g) {
                    d[k] = w * inv_b * gi;
                }
                loss
            } else {
                ccc_loss(&x, &y).map_err(|source| ModelError::Loss { index: b, source })?
            };
            seq_comp.set(attr, loss);
        }
        let seq = MtlLoss::combine(seq_comp, weights);
        total += seq.total;
        for (c, s) in comp.iter_mut().zip(seq_comp.to_array()) {
            *c += s;
        }
        backward_sequence(params, cache, &dy, weights, &mut grads);
    }
    let report = LossReport {
        total: total * inv_b,
        components: AttributeTriple::from_array(comp.map(|c| c * inv_b)),
    };
    Ok((report, grads))
}

fn backward_sequence(
    params: &ParamSet,
    cache: &SeqCache,
    dy: &[[f64; 3]],
    weights: &MtlWeights,
    grads: &mut ParamSet,
) {
    let v = cache.valid;
    let h_last = params.config().last_units();
    let top = cache.layers.last().expect("at least one layer");
    let active: Vec<usize> = Attribute::ALL
        .iter()
        .filter(|a| weights.get(**a) != 0.0)
        .map(|a| a.index())
        .collect();

    // heads
    let mut d_out = vec![0.0; v * h_last];
    for &k in &active {
        let w = params.head_weights(k).to_vec();
        let (gw, gb) = grads.head_mut(k);
        for t in 0..v {
            let g = dy[t][k];
            let hrow = &top.output[t * h_last..(t + 1) * h_last];
            for ((gwi, hi), (doi, wi)) in gw
                .iter_mut()
                .zip(hrow)
                .zip(d_out[t * h_last..(t + 1) * h_last].iter_mut().zip(&w))
            {
                *gwi += g * hi;
                *doi += g * wi;
            }
            *gb += g;
        }
    }

    for l in (0..params.num_layers()).rev() {
        let lay = params.layer(l);
        let (d, h) = (lay.input_dim, lay.units);
        let c = &cache.layers[l];
        let w_in = params.w_input(l);
        let w_rec = params.w_recurrent(l);

        // through dropout
        let d_hidden: Vec<f64> = match &c.dropout {
            Some(s) => d_out.iter().zip(s).map(|(a, b)| a * b).collect(),
            None => d_out,
        };
        let mut d_input = if l > 0 { vec![0.0; v * d] } else { Vec::new() };
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let mut g_w_in = vec![0.0; 4 * h * d];
        let mut g_w_rec = vec![0.0; 4 * h * h];
        let mut g_bias = vec![0.0; 4 * h];

        for t in (0..v).rev() {
            let g = &c.gates[t * 4 * h..(t + 1) * 4 * h];
            for u in 0..h {
                let (i, f, gg, o) = (g[u], g[h + u], g[2 * h + u], g[3 * h + u]);
                let tc = c.tanh_cell[t * h + u];
                let dh = d_hidden[t * h + u] + dh_next[u];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[u];
                let c_prev = if t > 0 { c.cell[(t - 1) * h + u] } else { 0.0 };
                dz[u] = dc * gg * i * (1.0 - i);
                dz[h + u] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + u] = dc * i * (1.0 - gg * gg);
                dz[3 * h + u] = d_o * o * (1.0 - o);
                dc_next[u] = dc * f;
            }
            let x = &c.input[t * d..(t + 1) * d];
            for r in 0..4 * h {
                let z = dz[r];
                g_bias[r] += z;
                for (gw, xv) in g_w_in[r * d..(r + 1) * d].iter_mut().zip(x) {
                    *gw += z * xv;
                }
            }
            if t > 0 {
                let hp = &c.hidden[(t - 1) * h..t * h];
                for r in 0..4 * h {
                    let z = dz[r];
                    for (gw, hv) in g_w_rec[r * h..(r + 1) * h].iter_mut().zip(hp) {
                        *gw += z * hv;
                    }
                }
            }
            dh_next.iter_mut().for_each(|x| *x = 0.0);
            for r in 0..4 * h {
                let z = dz[r];
                for (dn, w) in dh_next.iter_mut().zip(&w_rec[r * h..(r + 1) * h]) {
                    *dn += z * w;
                }
            }
            if l > 0 {
                let dx = &mut d_input[t * d..(t + 1) * d];
                for r in 0..4 * h {
                    let z = dz[r];
                    for (dxv, w) in dx.iter_mut().zip(&w_in[r * d..(r + 1) * d]) {
                        *dxv += z * w;
                    }
                }
            }
        }
        for (a, b) in grads.w_input_mut(l).iter_mut().zip(&g_w_in) {
            *a += b;
        }
        for (a, b) in grads.w_recurrent_mut(l).iter_mut().zip(&g_w_rec) {
            *a += b;
        }
        for (a, b) in grads.bias_mut(l).iter_mut().zip(&g_bias) {
            *a += b;
        }
        d_out = d_input;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::mtl_loss;
    use crate::seqmodel::ModelConfig;
    use rand::SeedableRng;

    fn small_model(seed: u64, input_dim: usize, units: Vec<usize>) -> ParamSet {
        let cfg = ModelConfig {
            input_dim,
            lstm_units: units,
            dropout_rate: 0.3,
        };
        ParamSet::init(&cfg, &mut ModelRng::seed_from_u64(seed)).unwrap()
    }

    fn random_batch(
        seed: u64,
        b: usize,
        t: usize,
        d: usize,
        valid: &[usize],
    ) -> (SeqBatch, Vec<AttributeTriple>) {
        let mut rng = ModelRng::seed_from_u64(seed);
        let mut inputs = vec![0.0; b * t * d];
        let mut labels = vec![AttributeTriple::ZERO; b * t];
        let mut masks = Vec::new();
        for s in 0..b {
            for f in 0..valid[s] {
                for j in 0..d {
                    inputs[(s * t + f) * d + j] = rng.random_range(-1.0..1.0);
                }
                labels[s * t + f] = AttributeTriple::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
            }
            masks.push(Mask::prefix(valid[s], t).unwrap());
        }
        (SeqBatch::new(t, d, inputs, masks).unwrap(), labels)
    }

    #[test]
    fn output_shape_and_determinism() {
        let p = small_model(1, 3, vec![4, 2]);
        let (batch, _) = random_batch(2, 2, 5, 3, &[5, 3]);
        let a = forward(&p, &batch, Pass::Inference).unwrap();
        let b = forward(&p, &batch, Pass::Inference).unwrap();
        assert_eq!(a.predictions.len(), 2 * 5);
        assert_eq!(a.predictions, b.predictions);
        assert_eq!(a.predictions[5 + 3], AttributeTriple::ZERO);
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let p = small_model(1, 3, vec![2]);
        let (batch, _) = random_batch(2, 1, 4, 2, &[4]);
        assert!(matches!(
            forward(&p, &batch, Pass::Inference),
            Err(ModelError::Shape(_))
        ));
        let (mut batch, _) = random_batch(2, 1, 4, 3, &[4]);
        batch.inputs[0] = f64::INFINITY;
        assert!(matches!(
            forward(&p, &batch, Pass::Inference),
            Err(ModelError::NonFinite(_))
        ));
    }

    #[test]
    fn loss_matches_metrics_mtl_loss() {
        let p = small_model(3, 2, vec![3]);
        let (batch, labels) = random_batch(4, 2, 6, 2, &[6, 4]);
        let w = MtlWeights::new(0.7, 0.2, 1.0).unwrap();
        let (report, _) = loss_and_gradients(&p, &batch, &labels, &w, Pass::Inference).unwrap();
        let fwd = forward(&p, &batch, Pass::Inference).unwrap();
        let mut expect = 0.0;
        for (b, v) in [(0, 6), (1, 4)] {
            let pred = &fwd.sequence(b, 6)[..v];
            let truth = &labels[b * 6..b * 6 + v];
            expect += mtl_loss(pred, truth, &w).unwrap().total;
        }
        assert!((report.total - expect / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_heads_get_zero_gradient() {
        let p = small_model(5, 2, vec![3, 2]);
        let (batch, labels) = random_batch(6, 3, 5, 2, &[5, 5, 3]);
        let w = MtlWeights::single_task(Attribute::Arousal);
        let (_, g) = loss_and_gradients(&p, &batch, &labels, &w, Pass::Inference).unwrap();
        for k in [1, 2] {
            assert!(g.as_flat()[g.head_range(k)].iter().all(|&v| v == 0.0));
        }
        assert!(g.as_flat()[g.head_range(0)].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn appended_padding_is_bit_exact() {
        let p = small_model(7, 2, vec![3, 2]);
        let (batch, labels) = random_batch(8, 2, 5, 2, &[5, 4]);
        // same content padded to 9 steps
        let t2 = 9;
        let mut inputs = vec![0.0; 2 * t2 * 2];
        let mut labels2 = vec![AttributeTriple::ZERO; 2 * t2];
        for s in 0..2 {
            inputs[s * t2 * 2..s * t2 * 2 + 10].copy_from_slice(batch.sequence(s));
            labels2[s * t2..s * t2 + 5].copy_from_slice(&labels[s * 5..s * 5 + 5]);
        }
        let masks = batch
            .masks
            .iter()
            .map(|m| m.padded_to(t2).unwrap())
            .collect();
        let padded = SeqBatch::new(t2, 2, inputs, masks).unwrap();
        let w = MtlWeights::default();
        let mut r1 = ModelRng::seed_from_u64(1);
        let mut r2 = ModelRng::seed_from_u64(1);
        let (l1, g1) =
            loss_and_gradients(&p, &batch, &labels, &w, Pass::Training(&mut r1)).unwrap();
        let (l2, g2) =
            loss_and_gradients(&p, &padded, &labels2, &w, Pass::Training(&mut r2)).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1.as_flat(), g2.as_flat());
    }
}
