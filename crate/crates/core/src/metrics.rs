//! Agreement metrics and the weighted multitask CCC loss.
//!
//! Every statistic here uses **population** moments (divide by N, not N-1).
//! Lin's concordance correlation coefficient is defined on population
//! moments and the convention changes results: for `x = [1, 2, 3]`,
//! `y = [2, 4, 6]` the population CCC is `4/11`, while the sample
//! convention would give `4/9`.
//!
//! CCC is computed in covariance form,
//!
//! ```text
//! ccc = 2 cov(x, y) / (var(x) + var(y) + (mean(x) - mean(y))^2)
//! ```
//!
//! so a constant prediction against a varying target scores 0 rather than
//! raising. Pearson correlation on its own still rejects zero variance. The
//! fully degenerate case (both inputs constant with equal means) is 0/0 and
//! is reported as [`MetricsError::Degenerate`] instead of silently scoring 1.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 values, got {0}")]
    TooShort(usize),
    #[error("zero variance in {0} input")]
    ZeroVariance(&'static str),
    #[error("degenerate CCC: both inputs constant with equal means (0/0)")]
    Degenerate,
    #[error("non-finite weight {name} = {value}")]
    InvalidWeight { name: &'static str, value: f64 },
    #[error(
        "comparator weights need alpha, beta in [0,1] and alpha + beta <= 1, got ({alpha}, {beta})"
    )]
    InvalidComparator { alpha: f64, beta: f64 },
}

pub type MetricsResult<T> = std::result::Result<T, MetricsError>;

/// One of the three emotion dimensions. Channel order is fixed everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Arousal,
    Valence,
    Liking,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Arousal, Attribute::Valence, Attribute::Liking];

    pub fn index(self) -> usize {
        match self {
            Attribute::Arousal => 0,
            Attribute::Valence => 1,
            Attribute::Liking => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Arousal => "arousal",
            Attribute::Valence => "valence",
            Attribute::Liking => "liking",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-frame (arousal, valence, liking) values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeTriple {
    pub arousal: f64,
    pub valence: f64,
    pub liking: f64,
}

impl AttributeTriple {
    pub const ZERO: AttributeTriple = AttributeTriple {
        arousal: 0.0,
        valence: 0.0,
        liking: 0.0,
    };

    pub fn new(arousal: f64, valence: f64, liking: f64) -> Self {
        Self {
            arousal,
            valence,
            liking,
        }
    }

    pub fn splat(v: f64) -> Self {
        Self::new(v, v, v)
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.arousal, self.valence, self.liking]
    }

    pub fn get(&self, attr: Attribute) -> f64 {
        match attr {
            Attribute::Arousal => self.arousal,
            Attribute::Valence => self.valence,
            Attribute::Liking => self.liking,
        }
    }

    pub fn set(&mut self, attr: Attribute, v: f64) {
        match attr {
            Attribute::Arousal => self.arousal = v,
            Attribute::Valence => self.valence = v,
            Attribute::Liking => self.liking = v,
        }
    }

    /// Arithmetic mean of the three channels.
    pub fn mean(&self) -> f64 {
        (self.arousal + self.valence + self.liking) / 3.0
    }

    pub fn is_finite(&self) -> bool {
        self.arousal.is_finite() && self.valence.is_finite() && self.liking.is_finite()
    }
}

/// Population moments of a pair of sequences.
///
/// `pearson` is 0 when either standard deviation is 0 (it is undefined
/// there); `cov_xy == pearson * std_x * std_y` holds otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CccStats {
    pub n: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    pub std_x: f64,
    pub std_y: f64,
    pub pearson: f64,
    pub cov_xy: f64,
    var_x: f64,
    var_y: f64,
}

impl CccStats {
    pub fn compute(x: &[f64], y: &[f64]) -> MetricsResult<Self> {
        check_pair(x, y)?;
        let n = x.len() as f64;
        let mean_x = x.iter().sum::<f64>() / n;
        let mean_y = y.iter().sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        let mut sxy = 0.0;
        for (&a, &b) in x.iter().zip(y) {
            let dx = a - mean_x;
            let dy = b - mean_y;
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        let var_x = sxx / n;
        let var_y = syy / n;
        let cov_xy = sxy / n;
        let std_x = var_x.sqrt();
        let std_y = var_y.sqrt();
        let pearson = if std_x > 0.0 && std_y > 0.0 {
            cov_xy / (std_x * std_y)
        } else {
            0.0
        };
        Ok(Self {
            n: x.len(),
            mean_x,
            mean_y,
            std_x,
            std_y,
            pearson,
            cov_xy,
            var_x,
            var_y,
        })
    }

    pub fn var_x(&self) -> f64 {
        self.var_x
    }

    pub fn var_y(&self) -> f64 {
        self.var_y
    }

    pub fn ccc(&self) -> MetricsResult<f64> {
        let dm = self.mean_x - self.mean_y;
        let den = self.var_x + self.var_y + dm * dm;
        if den == 0.0 {
            return Err(MetricsError::Degenerate);
        }
        Ok(2.0 * self.cov_xy / den)
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> MetricsResult<()> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetricsError::TooShort(x.len()));
    }
    Ok(())
}

/// Pearson correlation. Errors on zero variance in either input.
pub fn pearson(x: &[f64], y: &[f64]) -> MetricsResult<f64> {
    let s = CccStats::compute(x, y)?;
    if s.std_x == 0.0 {
        return Err(MetricsError::ZeroVariance("first"));
    }
    if s.std_y == 0.0 {
        return Err(MetricsError::ZeroVariance("second"));
    }
    Ok(s.pearson)
}

/// Lin's concordance correlation coefficient (population moments).
pub fn ccc(x: &[f64], y: &[f64]) -> MetricsResult<f64> {
    CccStats::compute(x, y)?.ccc()
}

/// `1 - ccc(x, y)`, in `[0, 2]`.
pub fn ccc_loss(x: &[f64], y: &[f64]) -> MetricsResult<f64> {
    Ok(1.0 - ccc(x, y)?)
}

/// CCC restricted to frames where `mask` is set.
pub fn masked_ccc(x: &[f64], y: &[f64], mask: &[bool]) -> MetricsResult<f64> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if mask.len() != x.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: mask.len(),
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&a, &b), _)| (a, b))
        .unzip();
    ccc(&xs, &ys)
}

/// CCC loss of predictions `x` against targets `y` together with the
/// derivative of that loss with respect to every prediction.
pub fn ccc_loss_with_grad(x: &[f64], y: &[f64]) -> MetricsResult<(f64, Vec<f64>)> {
    let s = CccStats::compute(x, y)?;
    let n = x.len() as f64;
    let dm = s.mean_x - s.mean_y;
    let den = s.var_x + s.var_y + dm * dm;
    if den == 0.0 {
        return Err(MetricsError::Degenerate);
    }
    let num = 2.0 * s.cov_xy;
    let loss = 1.0 - num / den;
    let den2 = den * den;
    let grad = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let dnum = 2.0 * (yi - s.mean_y) / n;
            let dden = 2.0 * ((xi - s.mean_x) + dm) / n;
            -(dnum * den - num * dden) / den2
        })
        .collect();
    Ok((loss, grad))
}

/// Mean squared error; diagnostic only.
pub fn mse(x: &[f64], y: &[f64]) -> MetricsResult<f64> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(MetricsError::TooShort(0));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64)
}

/// Weighting factors for the arousal, valence and liking CCC losses.
///
/// The sum is not restricted to 1. [`MtlWeights::comparator`] builds the
/// two-parameter form where `gamma = 1 - (alpha + beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtlWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for MtlWeights {
    /// The tuned optimum `(0.7, 0.2, 1.0)`.
    fn default() -> Self {
        Self {
            alpha: 0.7,
            beta: 0.2,
            gamma: 1.0,
        }
    }
}

impl MtlWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> MetricsResult<Self> {
        for (name, value) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !value.is_finite() || value < 0.0 {
                return Err(MetricsError::InvalidWeight { name, value });
            }
        }
        Ok(Self { alpha, beta, gamma })
    }

    /// Two-parameter weighting with `gamma = 1 - (alpha + beta)`, all in `[0, 1]`.
    pub fn comparator(alpha: f64, beta: f64) -> MetricsResult<Self> {
        let ok = (0.0..=1.0).contains(&alpha) && (0.0..=1.0).contains(&beta) && alpha + beta <= 1.0;
        if !ok {
            return Err(MetricsError::InvalidComparator { alpha, beta });
        }
        Ok(Self {
            alpha,
            beta,
            gamma: (1.0 - (alpha + beta)).max(0.0),
        })
    }

    /// Weight 1 on one attribute, 0 on the others.
    pub fn single_task(attr: Attribute) -> Self {
        let mut w = [0.0; 3];
        w[attr.index()] = 1.0;
        Self::from_array(w)
    }

    pub fn uniform() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }

    pub fn from_array(w: [f64; 3]) -> Self {
        Self {
            alpha: w[0],
            beta: w[1],
            gamma: w[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn get(&self, attr: Attribute) -> f64 {
        self.to_array()[attr.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtlLoss {
    pub total: f64,
    pub components: AttributeTriple,
}

impl MtlLoss {
    pub fn combine(components: AttributeTriple, w: &MtlWeights) -> Self {
        let total = w.alpha * components.arousal
            + w.beta * components.valence
            + w.gamma * components.liking;
        Self { total, components }
    }
}

pub(crate) fn channel(values: &[AttributeTriple], attr: Attribute) -> Vec<f64> {
    values.iter().map(|t| t.get(attr)).collect()
}

/// Weighted sum of per-attribute CCC losses over one sequence.
pub fn mtl_loss(
    pred: &[AttributeTriple],
    truth: &[AttributeTriple],
    w: &MtlWeights,
) -> MetricsResult<MtlLoss> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    let mut components = AttributeTriple::ZERO;
    for attr in Attribute::ALL {
        let l = ccc_loss(&channel(pred, attr), &channel(truth, attr))?;
        components.set(attr, l);
    }
    Ok(MtlLoss::combine(components, w))
}

/// CCC per attribute over a set of sequences, scored two ways.
///
/// `global` concatenates every valid frame of every sequence; `per_sequence`
/// is the mean of the per-sequence CCCs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitScores {
    pub global: AttributeTriple,
    pub per_sequence: AttributeTriple,
}

impl SplitScores {
    /// Scores `(prediction, truth)` pairs, each already cut to its valid frames.
    pub fn compute<'a, I>(pairs: I) -> MetricsResult<Self>
    where
        I: IntoIterator<Item = (&'a [AttributeTriple], &'a [AttributeTriple])>,
    {
        let mut all_pred = Vec::new();
        let mut all_truth = Vec::new();
        let mut per_seq = [0.0; 3];
        let mut count = 0usize;
        for (p, t) in pairs {
            if p.len() != t.len() {
                return Err(MetricsError::LengthMismatch {
                    left: p.len(),
                    right: t.len(),
                });
            }
            for attr in Attribute::ALL {
                per_seq[attr.index()] += ccc(&channel(p, attr), &channel(t, attr))?;
            }
            all_pred.extend_from_slice(p);
            all_truth.extend_from_slice(t);
            count += 1;
        }
        if count == 0 {
            return Err(MetricsError::TooShort(0));
        }
        let mut global = AttributeTriple::ZERO;
        for attr in Attribute::ALL {
            global.set(
                attr,
                ccc(&channel(&all_pred, attr), &channel(&all_truth, attr))?,
            );
        }
        let per_sequence = AttributeTriple::from_array(per_seq.map(|s| s / count as f64));
        Ok(Self {
            global,
            per_sequence,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pearson_cases() {
        assert!(close(
            pearson(&[1., 2., 3.], &[1., 2., 3.]).unwrap(),
            1.0,
            1e-15
        ));
        assert!(close(
            pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap(),
            -1.0,
            1e-15
        ));
        assert!(close(
            pearson(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap(),
            0.8,
            1e-15
        ));
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(
            pearson(&[1., 2.], &[1.]),
            Err(MetricsError::LengthMismatch { left: 2, right: 1 })
        );
        assert_eq!(pearson(&[1.], &[1.]), Err(MetricsError::TooShort(1)));
        assert_eq!(
            pearson(&[1., 1.], &[1., 2.]),
            Err(MetricsError::ZeroVariance("first"))
        );
        assert_eq!(
            pearson(&[1., 2.], &[3., 3.]),
            Err(MetricsError::ZeroVariance("second"))
        );
    }

    #[test]
    fn ccc_cases() {
        assert_eq!(ccc(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 1.0);
        assert_eq!(ccc(&[1., 2., 3.], &[5., 5., 5.]).unwrap(), 0.0);
        assert!(close(
            ccc(&[1., 2., 3.], &[2., 4., 6.]).unwrap(),
            4.0 / 11.0,
            1e-15
        ));
    }

    #[test]
    fn ccc_degenerate_is_error() {
        assert_eq!(
            ccc(&[2., 2., 2.], &[2., 2., 2.]),
            Err(MetricsError::Degenerate)
        );
        // constant but different means is fine
        assert_eq!(ccc(&[2., 2.], &[3., 3.]).unwrap(), 0.0);
    }

    #[test]
    fn loss_cases() {
        assert_eq!(ccc_loss(&[0.3, -1.0, 2.0], &[0.3, -1.0, 2.0]).unwrap(), 0.0);
        assert!(close(
            ccc_loss(&[1., 2., 3.], &[2., 4., 6.]).unwrap(),
            7.0 / 11.0,
            1e-15
        ));
        let x = [-1.0, 0.5, 0.5];
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!(close(ccc_loss(&x, &y).unwrap(), 2.0, 1e-15));
    }

    #[test]
    fn masked_cases() {
        let m = masked_ccc(&[1., 2., 9.], &[1., 2., 7.], &[true, true, false]).unwrap();
        assert_eq!(m, 1.0);
        let x = [1., 2., 3., 4.];
        let y = [1., 3., 2., 4.];
        assert_eq!(
            masked_ccc(&x, &y, &[true; 4]).unwrap(),
            ccc(&x, &y).unwrap()
        );
        // equal means and variances: ccc collapses to pearson
        assert!(close(masked_ccc(&x, &y, &[true; 4]).unwrap(), 0.8, 1e-15));
        assert_eq!(
            masked_ccc(&x, &y, &[true, false, false, false]),
            Err(MetricsError::TooShort(1))
        );
    }

    #[test]
    fn mtl_loss_cases() {
        let pred: Vec<_> = (0..5)
            .map(|i| AttributeTriple::new(i as f64, (i * i) as f64, -(i as f64)))
            .collect();
        let truth: Vec<_> = (0..5)
            .map(|i| AttributeTriple::new((i as f64).sin(), 1.0 - i as f64, (i % 2) as f64))
            .collect();
        let stl = mtl_loss(&pred, &truth, &MtlWeights::single_task(Attribute::Arousal)).unwrap();
        assert_eq!(stl.total, stl.components.arousal);

        let unit = MtlLoss::combine(AttributeTriple::splat(1.0), &MtlWeights::default());
        assert!(close(unit.total, 1.9, 1e-15));
        assert_eq!(MtlWeights::default().to_array(), [0.7, 0.2, 1.0]);
    }

    #[test]
    fn weight_constructors() {
        assert!(MtlWeights::new(0.5, 3.0, 2.0).is_ok());
        assert!(MtlWeights::new(-0.1, 0.0, 0.0).is_err());
        assert!(MtlWeights::new(f64::NAN, 0.0, 0.0).is_err());
        let c = MtlWeights::comparator(0.7, 0.3).unwrap();
        assert_eq!(c.gamma, 0.0);
        assert!(MtlWeights::comparator(0.7, 0.4).is_err());
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        let x = [0.3, -0.2, 0.9, 0.1, 0.4];
        let y = [0.5, -0.6, 1.2, 0.0, 0.2];
        let (_, g) = ccc_loss_with_grad(&x, &y).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (ccc_loss(&xp, &y).unwrap() - ccc_loss(&xm, &y).unwrap()) / (2.0 * h);
            assert!(close(fd, g[i], 1e-8), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn split_scores_global_vs_per_sequence() {
        let a: Vec<_> = (0..4).map(|i| AttributeTriple::splat(i as f64)).collect();
        let b: Vec<_> = (0..4)
            .map(|i| AttributeTriple::splat(10.0 + i as f64))
            .collect();
        let s = SplitScores::compute([(&a[..], &a[..]), (&b[..], &b[..])]).unwrap();
        assert_eq!(s.per_sequence, AttributeTriple::splat(1.0));
        assert_eq!(s.global, AttributeTriple::splat(1.0));
    }

    fn seq_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn ccc_self_and_symmetry((x, y) in seq_pair()) {
            let sx = CccStats::compute(&x, &y).unwrap();
            prop_assume!(sx.std_x > 1e-9 && sx.std_y > 1e-9);
            prop_assert_eq!(ccc(&x, &x).unwrap(), 1.0);
            prop_assert_eq!(ccc(&x, &y).unwrap(), ccc(&y, &x).unwrap());
        }

        #[test]
        fn ccc_affine_invariance((x, y) in seq_pair(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
            let s = CccStats::compute(&x, &y).unwrap();
            prop_assume!(s.std_x > 1e-6 && s.std_y > 1e-6);
            let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let ay: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            prop_assert_eq!(ccc(&ax, &ax).unwrap(), 1.0);
            prop_assert!((ccc(&ax, &ay).unwrap() - ccc(&x, &y).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn ccc_attenuates_pearson((x, y) in seq_pair()) {
            let s = CccStats::compute(&x, &y).unwrap();
            prop_assume!(s.std_x > 1e-6 && s.std_y > 1e-6);
            let c = ccc(&x, &y).unwrap();
            prop_assert!(c.abs() <= s.pearson.abs() + 1e-12);
            if s.pearson > 0.0 {
                prop_assert!(c <= s.pearson + 1e-12);
            }
            let l = ccc_loss(&x, &y).unwrap();
            prop_assert!((-1e-12..=2.0 + 1e-12).contains(&l));
        }

        #[test]
        fn cov_matches_pearson_product((x, y) in seq_pair()) {
            let s = CccStats::compute(&x, &y).unwrap();
            prop_assume!(s.std_x > 0.0 && s.std_y > 0.0);
            prop_assert!((s.cov_xy - s.pearson * s.std_x * s.std_y).abs() <= 1e-12 * (1.0 + s.cov_xy.abs()));
        }

        #[test]
        fn full_mask_is_bit_exact((x, y) in seq_pair()) {
            let mask = vec![true; x.len()];
            prop_assert_eq!(masked_ccc(&x, &y, &mask), ccc(&x, &y));
        }

        #[test]
        fn unit_components_sum_weights(a in 0.0f64..3.0, b in 0.0f64..3.0, g in 0.0f64..3.0) {
            let w = MtlWeights::new(a, b, g).unwrap();
            let l = MtlLoss::combine(AttributeTriple::splat(1.0), &w);
            prop_assert!((l.total - (a + b + g)).abs() < 1e-12);
        }
    }
}
