#![allow(clippy::needless_range_loop)]

//! Independent reference implementations shared by the integration tests
//! and the acceptance runner. None of these call into the library's
//! numerical code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Lin's coefficient by direct summation, population moments.
pub fn naive_ccc(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for i in 0..x.len() {
        sx += x[i];
        sy += y[i];
    }
    let (mx, my) = (sx / n, sy / n);
    let mut vx = 0.0;
    let mut vy = 0.0;
    let mut cxy = 0.0;
    for i in 0..x.len() {
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
        cxy += (x[i] - mx) * (y[i] - my);
    }
    2.0 * (cxy / n) / (vx / n + vy / n + (mx - my) * (mx - my))
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Scalar LSTM forward read straight off the documented flat layout:
/// per layer `W (4H x D)`, `U (4H x H)`, `b (4H)`, gates i, f, g, o; then
/// three heads of `H_last` weights and a bias. Returns `T x 3`.
pub fn reference_forward(
    flat: &[f64],
    input_dim: usize,
    units: &[usize],
    xs: &[Vec<f64>],
) -> Vec<[f64; 3]> {
    let mut off = 0;
    let mut seq: Vec<Vec<f64>> = xs.to_vec();
    let mut d = input_dim;
    for &h in units {
        let w = |r: usize, c: usize| flat[off + r * d + c];
        let u_off = off + 4 * h * d;
        let u = |r: usize, c: usize| flat[u_off + r * h + c];
        let b_off = u_off + 4 * h * h;
        let b = |r: usize| flat[b_off + r];
        let mut hprev = vec![0.0; h];
        let mut cprev = vec![0.0; h];
        let mut out = Vec::with_capacity(seq.len());
        for x in &seq {
            let pre = |r: usize| {
                let mut s = b(r);
                for c in 0..d {
                    s += w(r, c) * x[c];
                }
                for c in 0..h {
                    s += u(r, c) * hprev[c];
                }
                s
            };
            let mut hn = vec![0.0; h];
            let mut cn = vec![0.0; h];
            for k in 0..h {
                let i = sig(pre(k));
                let f = sig(pre(h + k));
                let g = pre(2 * h + k).tanh();
                let o = sig(pre(3 * h + k));
                cn[k] = f * cprev[k] + i * g;
                hn[k] = o * cn[k].tanh();
            }
            out.push(hn.clone());
            hprev = hn;
            cprev = cn;
        }
        seq = out;
        off = b_off + 4 * h;
        d = h;
    }
    seq.iter()
        .map(|hrow| {
            let mut y = [0.0; 3];
            for (k, yk) in y.iter_mut().enumerate() {
                let base = off + k * (d + 1);
                *yk = flat[base + d] + (0..d).map(|c| flat[base + c] * hrow[c]).sum::<f64>();
            }
            y
        })
        .collect()
}

/// Central differences of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()
}

pub fn linear(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn gram(x: &[Vec<f64>], k: impl Fn(&[f64], &[f64]) -> f64) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| x.iter().map(|b| k(a, b)).collect())
        .collect()
}

/// Dual objective in coefficient form,
/// `1/2 b'Kb - t'b + eps |b|_1`, which equals the 2N-variable objective
/// whenever `alpha_i alpha*_i = 0`.
pub fn svr_dual_objective(k: &[Vec<f64>], t: &[f64], eps: f64, beta: &[f64]) -> f64 {
    let n = t.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * k[i][j] * beta[j];
        }
    }
    0.5 * quad - (0..n).map(|i| t[i] * beta[i]).sum::<f64>()
        + eps * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Projection of `v` onto `{0 <= a <= c, y'a = 0}` for `y` in {+1, -1}:
/// `a = clip(v - lambda y)` with `lambda` found by bisection.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c))
            .collect()
    };
    let g = |lam: f64| -> f64 { at(lam).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient on the 2N-variable dual. Returns the
/// coefficients `alpha - alpha*` and the objective value at them.
pub fn qp_oracle(k: &[Vec<f64>], t: &[f64], c: f64, eps: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = t.len();
    let m = 2 * n;
    let y: Vec<f64> = (0..m).map(|s| if s < n { 1.0 } else { -1.0 }).collect();
    let p: Vec<f64> = (0..m)
        .map(|s| if s < n { eps - t[s] } else { eps + t[s - n] })
        .collect();
    let q: Vec<Vec<f64>> = (0..m)
        .map(|s| (0..m).map(|r| y[s] * y[r] * k[s % n][r % n]).collect())
        .collect();
    let lip = q
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|s| p[s] + (0..m).map(|r| q[s][r] * a[r]).sum::<f64>())
            .collect()
    };
    let obj = |a: &[f64]| -> f64 {
        let g: f64 = (0..m)
            .map(|s| (0..m).map(|r| a[s] * q[s][r] * a[r]).sum::<f64>())
            .sum();
        0.5 * g + (0..m).map(|s| p[s] * a[s]).sum::<f64>()
    };
    let mut a = vec![0.0; m];
    let mut z = a.clone();
    let mut tk = 1.0f64;
    for _ in 0..iters {
        let g = grad(&z);
        let step: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - gi / lip).collect();
        let next = project(&step, &y, c);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        z = next
            .iter()
            .zip(&a)
            .map(|(x, xo)| x + (tk - 1.0) / tn * (x - xo))
            .collect();
        a = next;
        tk = tn;
    }
    let beta = (0..n).map(|i| a[i] - a[i + n]).collect();
    (beta, obj(&a))
}

/// Random regression instance: `n` points in `dim` dimensions.
pub fn svr_instance(r: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let t = x
        .iter()
        .map(|row| row.iter().sum::<f64>().sin() + r.random_range(-0.3..0.3))
        .collect();
    (x, t)
}

/// KKT residual of a fitted model at its training points:
/// the worst violation of `|r_i| <= eps` for zero coefficients,
/// `|r_i| = eps` for free ones and `|r_i| >= eps` at the bound, with
/// `r_i = t_i - f(x_i)`. Also the worst box violation.
pub fn kkt_violation(
    k: &[Vec<f64>],
    t: &[f64],
    beta: &[f64],
    bias: f64,
    c: f64,
    eps: f64,
) -> (f64, f64) {
    let n = t.len();
    let bound_tol = 1e-9 * c.max(1.0);
    let mut slack: f64 = 0.0;
    let mut boxv: f64 = 0.0;
    for i in 0..n {
        let f = bias + (0..n).map(|j| beta[j] * k[i][j]).sum::<f64>();
        let r = t[i] - f;
        let b = beta[i];
        boxv = boxv.max(b.abs() - c);
        let v = if b.abs() <= bound_tol {
            r.abs() - eps
        } else if b.abs() >= c - bound_tol {
            // at the bound the residual must lie outside the tube, on b's side
            eps - r * b.signum()
        } else {
            (r * b.signum() - eps).abs()
        };
        slack = slack.max(v);
    }
    (slack.max(0.0), boxv.max(0.0))
}
