//! Epsilon-insensitive support vector regression.
//!
//! The dual is solved in its 2N-variable form,
//!
//! ```text
//! min  1/2 a'Qa + p'a   s.t.  y'a = 0,  0 <= a <= C
//! ```
//!
//! with `a = [alpha; alpha*]`, `y = [+1..; -1..]`, `p = [eps - t; eps + t]`
//! for targets `t`, and `Q_st = y_s y_t K(x_s, x_t)`. The regression
//! coefficients are `beta_i = alpha_i - alpha*_i` and
//! `f(x) = sum_i beta_i K(x_i, x) + b`.

mod smo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use smo::{fit_svr, fit_svr_detailed, SvrSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvrError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("need at least 2 training points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid SVR config: {0}")]
    Config(String),
    #[error("model dump: {0}")]
    Dump(String),
}

pub type SvrResult<T> = std::result::Result<T, SvrError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

/// Linear: `a.b`; RBF: `exp(-gamma |a-b|^2)`.
pub fn kernel_eval(a: &[f64], b: &[f64], kernel: &Kernel) -> SvrResult<f64> {
    if a.len() != b.len() {
        return Err(SvrError::Dimension(format!("{} vs {}", a.len(), b.len())));
    }
    Ok(kernel_unchecked(a, b, kernel))
}

#[inline]
pub(crate) fn kernel_unchecked(a: &[f64], b: &[f64], kernel: &Kernel) -> f64 {
    match *kernel {
        Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        Kernel::Rbf { gamma } => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-gamma * d2).exp()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub kernel: Kernel,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Iteration budget, in units of the 2N dual variables.
    pub max_passes: usize,
    /// Seeds the random fallback in working-pair selection.
    pub seed: u64,
}

impl SvrConfig {
    /// RBF with `gamma = 1/dim`, `C = 1`, `epsilon = 0.01`, `tol = 1e-3`.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            c: 1.0,
            epsilon: 0.01,
            kernel: Kernel::Rbf {
                gamma: 1.0 / dim.max(1) as f64,
            },
            tol: 1e-3,
            max_passes: 200,
            seed: 0,
        }
    }

    pub fn linear(c: f64, epsilon: f64) -> Self {
        Self {
            c,
            epsilon,
            kernel: Kernel::Linear,
            ..Self::for_dim(1)
        }
    }

    pub fn validate(&self) -> SvrResult<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(SvrError::Config(format!(
                "c must be positive, got {}",
                self.c
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(SvrError::Config(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(SvrError::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if let Kernel::Rbf { gamma } = self.kernel {
            if !(gamma.is_finite() && gamma > 0.0) {
                return Err(SvrError::Config(format!(
                    "rbf gamma must be positive, got {gamma}"
                )));
            }
        }
        if self.max_passes == 0 {
            return Err(SvrError::Config("max_passes must be positive".into()));
        }
        Ok(())
    }
}

/// A fitted model. Only points with non-zero coefficient are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub dim: usize,
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub config: SvrConfig,
    pub converged: bool,
    pub iterations: usize,
}

pub const SVR_DUMP_FORMAT: &str = "affect-fusion.svr";
pub const SVR_DUMP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Dump {
    format: String,
    version: u32,
    model: SvrModel,
}

impl SvrModel {
    pub fn predict_one(&self, x: &[f64]) -> SvrResult<f64> {
        if x.len() != self.dim {
            return Err(SvrError::Dimension(format!(
                "query dim {} vs model dim {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, b)| b * kernel_unchecked(sv, x, &self.config.kernel))
            .sum::<f64>()
            + self.bias)
    }

    pub fn num_support_vectors(&self) -> usize {
        self.dual_coefs.len()
    }

    /// Versioned JSON dump; round-trips bit-exactly.
    pub fn to_json(&self) -> SvrResult<String> {
        let d = Dump {
            format: SVR_DUMP_FORMAT.into(),
            version: SVR_DUMP_VERSION,
            model: self.clone(),
        };
        serde_json::to_string(&d).map_err(|e| SvrError::Dump(e.to_string()))
    }

    pub fn from_json(text: &str) -> SvrResult<Self> {
        let d: Dump = serde_json::from_str(text).map_err(|e| SvrError::Dump(e.to_string()))?;
        if d.format != SVR_DUMP_FORMAT || d.version != SVR_DUMP_VERSION {
            return Err(SvrError::Dump(format!(
                "unsupported dump {} v{}",
                d.format, d.version
            )));
        }
        Ok(d.model)
    }
}

/// `f(x)` for every row of `x`.
pub fn predict_svr(model: &SvrModel, x: &[Vec<f64>]) -> SvrResult<Vec<f64>> {
    x.iter().map(|row| model.predict_one(row)).collect()
}
