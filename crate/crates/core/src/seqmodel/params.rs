//! Flat parameter storage.
//!
//! All parameters live in one `Vec<f64>`. Per layer, in order: input
//! weights (`4H x D`, row-major), recurrent weights (`4H x H`), bias
//! (`4H`). Gate rows are ordered input, forget, cell, output. After the
//! layers come the three heads, each `H_last` weights followed by a bias.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{ModelConfig, ModelError, ModelResult};
use crate::rng::ModelRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LayerLayout {
    pub input_dim: usize,
    pub units: usize,
    pub w_input: usize,
    pub w_recurrent: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    config: ModelConfig,
    layers: Vec<LayerLayout>,
    heads: usize,
    data: Vec<f64>,
}

fn layout(config: &ModelConfig) -> (Vec<LayerLayout>, usize, usize) {
    let mut off = 0;
    let mut input_dim = config.input_dim;
    let mut layers = Vec::with_capacity(config.lstm_units.len());
    for &units in &config.lstm_units {
        let w_input = off;
        let w_recurrent = w_input + 4 * units * input_dim;
        let bias = w_recurrent + 4 * units * units;
        off = bias + 4 * units;
        layers.push(LayerLayout {
            input_dim,
            units,
            w_input,
            w_recurrent,
            bias,
        });
        input_dim = units;
    }
    let heads = off;
    let total = heads + 3 * (input_dim + 1);
    (layers, heads, total)
}

impl ParamSet {
    pub fn zeros(config: &ModelConfig) -> ModelResult<Self> {
        config.validate()?;
        let (layers, heads, total) = layout(config);
        Ok(Self {
            config: config.clone(),
            layers,
            heads,
            data: vec![0.0; total],
        })
    }

    pub fn from_flat(config: &ModelConfig, data: Vec<f64>) -> ModelResult<Self> {
        let mut p = Self::zeros(config)?;
        if data.len() != p.data.len() {
            return Err(ModelError::Shape(format!(
                "flat vector has {} values, model needs {}",
                data.len(),
                p.data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("parameter"));
        }
        p.data = data;
        Ok(p)
    }

    /// Glorot-uniform input and head weights, orthogonal recurrent weights,
    /// zero biases except forget gates at 1.
    pub fn init(config: &ModelConfig, rng: &mut ModelRng) -> ModelResult<Self> {
        let mut p = Self::zeros(config)?;
        for l in 0..p.layers.len() {
            let lay = p.layers[l];
            let h = lay.units;
            let limit = (6.0 / (lay.input_dim + 4 * h) as f64).sqrt();
            for w in p.w_input_mut(l) {
                *w = rng.random_range(-limit..limit);
            }
            let q = orthogonal_columns(4 * h, h, rng);
            p.w_recurrent_mut(l).copy_from_slice(&q);
            let bias = p.bias_mut(l);
            bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        }
        let h = p.config.last_units();
        let limit = (6.0 / (h + 1) as f64).sqrt();
        for k in 0..3 {
            let r = p.head_weights_range(k);
            for w in &mut p.data[r] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub(crate) fn layer(&self, l: usize) -> LayerLayout {
        self.layers[l]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            data: vec![0.0; self.data.len()],
            ..self.clone()
        }
    }

    fn w_input_range(&self, l: usize) -> Range<usize> {
        let lay = self.layers[l];
        lay.w_input..lay.w_recurrent
    }

    fn w_recurrent_range(&self, l: usize) -> Range<usize> {
        let lay = self.layers[l];
        lay.w_recurrent..lay.bias
    }

    fn bias_range(&self, l: usize) -> Range<usize> {
        let lay = self.layers[l];
        lay.bias..lay.bias + 4 * lay.units
    }

    pub fn w_input(&self, l: usize) -> &[f64] {
        &self.data[self.w_input_range(l)]
    }

    pub fn w_input_mut(&mut self, l: usize) -> &mut [f64] {
        let r = self.w_input_range(l);
        &mut self.data[r]
    }

    pub fn w_recurrent(&self, l: usize) -> &[f64] {
        &self.data[self.w_recurrent_range(l)]
    }

    pub fn w_recurrent_mut(&mut self, l: usize) -> &mut [f64] {
        let r = self.w_recurrent_range(l);
        &mut self.data[r]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        &self.data[self.bias_range(l)]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let r = self.bias_range(l);
        &mut self.data[r]
    }

    /// Flat range of head `k` (weights then bias).
    pub fn head_range(&self, k: usize) -> Range<usize> {
        assert!(k < 3, "head index {k} out of range");
        let width = self.config.last_units() + 1;
        let start = self.heads + k * width;
        start..start + width
    }

    fn head_weights_range(&self, k: usize) -> Range<usize> {
        let r = self.head_range(k);
        r.start..r.end - 1
    }

    pub fn head_weights(&self, k: usize) -> &[f64] {
        &self.data[self.head_weights_range(k)]
    }

    pub fn head_bias(&self, k: usize) -> f64 {
        self.data[self.head_range(k).end - 1]
    }

    pub(crate) fn head_mut(&mut self, k: usize) -> (&mut [f64], &mut f64) {
        let r = self.head_range(k);
        let (w, b) = self.data[r].split_at_mut(self.config.last_units());
        (w, &mut b[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `rows x cols` row-major matrix with orthonormal columns (`rows >= cols`),
/// from modified Gram-Schmidt on a Gaussian draw.
fn orthogonal_columns(rows: usize, cols: usize, rng: &mut ModelRng) -> Vec<f64> {
    let mut cols_v: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while cols_v.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
        for q in &cols_v {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|a| *a /= n);
            cols_v.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for (c, q) in cols_v.iter().enumerate() {
        for (r, v) in q.iter().enumerate() {
            out[r * cols + c] = *v;
        }
    }
    out
}
