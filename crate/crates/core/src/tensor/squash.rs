//! Reparameterized tanh-squashed diagonal Gaussian.
//!
//! `u = mean + exp(log_std) * noise`, `action = tanh(u)`, and the log
//! density carries the change-of-variables term `-Σ log(1 - tanh(u)²)`.

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone)]
pub struct SquashedSample {
    /// Squashed action, every component strictly inside (-1, 1).
    pub action: Matrix,
    /// Log density of `action`, one entry per row.
    pub log_prob: Vec<f64>,
    pub pre_tanh: Matrix,
    pub std: Matrix,
    pub noise: Matrix,
    /// Whether the raw log-std was inside the clamp range (gradient mask).
    clamp_active: Vec<bool>,
}

/// `log(1 - tanh(u)^2)` without cancellation for large |u|.
#[inline]
pub(crate) fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    };
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

/// Keeps `tanh` strictly inside the open interval even when it rounds to ±1.
#[inline]
fn open_tanh(u: f64) -> f64 {
    let a = u.tanh();
    const EDGE: f64 = 1.0 - f64::EPSILON;
    a.clamp(-EDGE, EDGE)
}

pub fn squashed_gaussian_sample(
    mean: &Matrix,
    log_std: &Matrix,
    noise: &Matrix,
) -> Result<SquashedSample> {
    if mean.shape() != log_std.shape() || mean.shape() != noise.shape() {
        return Err(Error::invalid(format!(
            "mean {:?}, log_std {:?} and noise {:?} must share a shape",
            mean.shape(),
            log_std.shape(),
            noise.shape()
        )));
    }
    let (n, k) = mean.shape();
    let mut action = Matrix::zeros(n, k);
    let mut pre_tanh = Matrix::zeros(n, k);
    let mut std = Matrix::zeros(n, k);
    let mut log_prob = vec![0.0; n];
    let mut clamp_active = vec![false; n * k];
    for r in 0..n {
        let mut lp = 0.0;
        for c in 0..k {
            let raw = log_std.get(r, c);
            let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
            clamp_active[r * k + c] = raw > LOG_STD_MIN && raw < LOG_STD_MAX;
            let s = ls.exp();
            let eps = noise.get(r, c);
            let u = mean.get(r, c) + s * eps;
            std.set(r, c, s);
            pre_tanh.set(r, c, u);
            action.set(r, c, open_tanh(u));
            lp += -0.5 * eps * eps - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
        }
        log_prob[r] = lp;
    }
    Ok(SquashedSample {
        action,
        log_prob,
        pre_tanh,
        std,
        noise: noise.clone(),
        clamp_active,
    })
}

/// Pulls gradients with respect to the action and the log density back to
/// the mean and (raw) log-std inputs, holding the noise fixed.
pub fn squashed_gaussian_backward(
    sample: &SquashedSample,
    action_grad: &Matrix,
    log_prob_grad: &[f64],
) -> Result<(Matrix, Matrix)> {
    let (n, k) = sample.action.shape();
    if action_grad.shape() != (n, k) || log_prob_grad.len() != n {
        return Err(Error::invalid(format!(
            "gradient shapes {:?}/{} do not match sample {:?}",
            action_grad.shape(),
            log_prob_grad.len(),
            (n, k)
        )));
    }
    let mut d_mean = Matrix::zeros(n, k);
    let mut d_log_std = Matrix::zeros(n, k);
    for r in 0..n {
        let glp = log_prob_grad[r];
        for c in 0..k {
            let u = sample.pre_tanh.get(r, c);
            let t = u.tanh();
            // d/du of the action and of the log density
            let d_action_du = 1.0 - t * t;
            let d_logp_du = 2.0 * t;
            let d_u = action_grad.get(r, c) * d_action_du + glp * d_logp_du;
            d_mean.set(r, c, d_u);
            if sample.clamp_active[r * k + c] {
                let s_eps = sample.std.get(r, c) * sample.noise.get(r, c);
                d_log_std.set(r, c, d_u * s_eps - glp);
            }
        }
    }
    Ok((d_mean, d_log_std))
}
