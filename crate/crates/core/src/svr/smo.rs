//! Sequential minimal optimization for the epsilon-SVR dual.
//!
//! Working pair: `i` is the maximal KKT violator in the up set, `j` the
//! low-set index with the best second-order gain against `i`. When a step
//! makes no progress (both variables clipped back), the next `j` is drawn
//! at random from the violating low-set candidates. Stops when the
//! maximal violation `m(a) - M(a)` drops below `tol`.

use rand::Rng;

use super::{kernel_unchecked, Kernel, SvrConfig, SvrError, SvrModel, SvrResult};
use crate::rng::rng_for;

const TAU: f64 = 1e-12;
const DENSE_LIMIT: usize = 8000;

enum Gram<'a> {
    Dense { n: usize, k: Vec<f64> },
    OnDemand { x: &'a [Vec<f64>], kernel: Kernel },
}

impl Gram<'_> {
    fn row(&self, i: usize, out: &mut [f64]) {
        match self {
            Gram::Dense { n, k } => out.copy_from_slice(&k[i * n..(i + 1) * n]),
            Gram::OnDemand { x, kernel } => {
                for (o, xj) in out.iter_mut().zip(x.iter()) {
                    *o = kernel_unchecked(&x[i], xj, kernel);
                }
            }
        }
    }
}

/// Full dual solution alongside the fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrSolution {
    pub model: SvrModel,
    /// `beta_i = alpha_i - alpha*_i` for every training point.
    pub beta: Vec<f64>,
    /// `1/2 a'Qa + p'a` at the returned point.
    pub objective: f64,
}

pub fn fit_svr(x: &[Vec<f64>], y: &[f64], cfg: &SvrConfig) -> SvrResult<SvrModel> {
    Ok(fit_svr_detailed(x, y, cfg)?.model)
}

pub fn fit_svr_detailed(x: &[Vec<f64>], y: &[f64], cfg: &SvrConfig) -> SvrResult<SvrSolution> {
    cfg.validate()?;
    let n = x.len();
    if n != y.len() {
        return Err(SvrError::Dimension(format!(
            "{n} rows but {} targets",
            y.len()
        )));
    }
    if n < 2 {
        return Err(SvrError::TooFewPoints(n));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(SvrError::Dimension("ragged input rows".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SvrError::NonFinite("input"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SvrError::NonFinite("target"));
    }

    let gram = if n <= DENSE_LIMIT {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = kernel_unchecked(&x[i], &x[j], &cfg.kernel);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Gram::Dense { n, k }
    } else {
        Gram::OnDemand {
            x,
            kernel: cfg.kernel,
        }
    };
    let diag: Vec<f64> = x
        .iter()
        .map(|r| kernel_unchecked(r, r, &cfg.kernel))
        .collect();

    let l = 2 * n;
    let c = cfg.c;
    let sign = |s: usize| if s < n { 1.0 } else { -1.0 };
    let p: Vec<f64> = (0..l)
        .map(|s| {
            if s < n {
                cfg.epsilon - y[s]
            } else {
                cfg.epsilon + y[s - n]
            }
        })
        .collect();
    let mut alpha = vec![0.0; l];
    let mut grad = p.clone();
    let qd = |s: usize| diag[s % n];

    let mut rng = rng_for(cfg.seed, "smo");
    let mut row_i = vec![0.0; n];
    let mut row_j = vec![0.0; n];
    let max_iter = cfg.max_passes.saturating_mul(l).max(100);
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;

    while iterations < max_iter {
        // i: argmax over I_up of -y_s G_s
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for s in 0..l {
            let up = if s < n { alpha[s] < c } else { alpha[s] > 0.0 };
            if up {
                let v = -sign(s) * grad[s];
                if v >= gmax {
                    gmax = v;
                    i = s;
                }
            }
        }
        if i == usize::MAX {
            converged = true;
            break;
        }
        gram.row(i % n, &mut row_i);
        let yi = sign(i);
        // j: low-set candidates that violate against i
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best_gain = f64::INFINITY;
        let mut candidates = Vec::new();
        for s in 0..l {
            let low = if s < n { alpha[s] > 0.0 } else { alpha[s] < c };
            if !low {
                continue;
            }
            let ys = sign(s);
            let v = -ys * grad[s];
            // -M(a) tracks max of y_s G_s
            if -v >= gmax2 {
                gmax2 = -v;
            }
            let diff = gmax - v;
            if diff > 0.0 {
                // Q_ii + Q_ss - 2 y_i y_s Q_is = K_ii + K_ss - 2 K_is
                let mut quad = qd(i) + qd(s) - 2.0 * row_i[s % n];
                if quad <= 0.0 {
                    quad = TAU;
                }
                let gain = -(diff * diff) / quad;
                if stalled {
                    candidates.push(s);
                }
                if gain <= best_gain {
                    best_gain = gain;
                    j = s;
                }
            }
        }
        if gmax + gmax2 < cfg.tol || j == usize::MAX {
            converged = true;
            break;
        }
        if stalled && !candidates.is_empty() {
            j = candidates[rng.random_range(0..candidates.len())];
        }
        iterations += 1;

        gram.row(j % n, &mut row_j);
        let yj = sign(j);
        // Q_ij = y_i y_j K_ij
        let q_ij = yi * yj * row_i[j % n];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yi != yj {
            let mut quad = qd(i) + qd(j) + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qd(i) + qd(j) - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        debug_assert!((0.0..=c).contains(&alpha[i]) && (0.0..=c).contains(&alpha[j]));
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        stalled = di == 0.0 && dj == 0.0;
        if !stalled {
            for s in 0..l {
                let ys = sign(s);
                grad[s] += ys * (yi * row_i[s % n] * di + yj * row_j[s % n] * dj);
            }
        }
    }
    if !converged {
        log::warn!(
            "SMO stopped after {iterations} iterations without reaching tol {}",
            cfg.tol
        );
    }

    // bias from free variables, otherwise the midpoint of the feasible range
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for s in 0..l {
        let ys = sign(s);
        let yg = ys * grad[s];
        if alpha[s] >= c {
            if ys < 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else if alpha[s] <= 0.0 {
            if ys > 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    let objective = 0.5 * (0..l).map(|s| alpha[s] * (grad[s] + p[s])).sum::<f64>();

    let beta: Vec<f64> = (0..n).map(|i| alpha[i] - alpha[i + n]).collect();
    let (support_vectors, dual_coefs): (Vec<Vec<f64>>, Vec<f64>) = beta
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(i, b)| (x[i].clone(), *b))
        .unzip();
    let model = SvrModel {
        dim,
        support_vectors,
        dual_coefs,
        bias: -rho,
        config: cfg.clone(),
        converged,
        iterations,
    };
    Ok(SvrSolution {
        model,
        beta,
        objective,
    })
}
