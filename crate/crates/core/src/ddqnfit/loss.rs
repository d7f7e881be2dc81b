use serde::{Deserialize, Serialize};

use super::FitError;

/// Weights of the squared-error and extremum-index terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub w_alpha: f64,
    /// Per sample of extremum misplacement.
    pub w_beta: f64,
    /// Weight of the reactive channel relative to the active one.
    pub w_q: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            w_alpha: 1.0,
            w_beta: 1e-4,
            w_q: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        let ok = self.w_alpha >= 0.0 && self.w_beta >= 0.0 && self.w_q >= 0.0;
        if !ok || (self.w_alpha == 0.0 && self.w_beta == 0.0) {
            return Err(FitError::InvalidConfig(format!(
                "loss weights must be >= 0 and not both zero, got {self:?}"
            )));
        }
        Ok(())
    }
}

fn argmin(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) })
        .0
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Mean squared difference plus misplacement of the minimum and maximum
/// samples, for one channel. Extremum ties resolve to the first index.
pub fn channel_loss(fit: &[f64], reference: &[f64], cfg: &LossConfig) -> Result<f64, FitError> {
    if fit.len() != reference.len() || fit.is_empty() {
        return Err(FitError::LengthMismatch {
            fit: fit.len(),
            reference: reference.len(),
        });
    }
    let l = fit.len() as f64;
    let sq: f64 = fit.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / l;
    let idx = argmin(fit).abs_diff(argmin(reference)) + argmax(fit).abs_diff(argmax(reference));
    Ok(cfg.w_alpha * sq + cfg.w_beta * idx as f64)
}

/// P-channel loss plus `w_q` times the Q-channel loss.
pub fn pq_loss(
    fit: (&[f64], &[f64]),
    reference: (&[f64], &[f64]),
    cfg: &LossConfig,
) -> Result<f64, FitError> {
    Ok(channel_loss(fit.0, reference.0, cfg)? + cfg.w_q * channel_loss(fit.1, reference.1, cfg)?)
}

/// Quantile-scoring weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PinballConfig {
    pub tau: f64,
    pub quantile: f64,
}

impl Default for PinballConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            quantile: 0.5,
        }
    }
}

impl PinballConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.tau > 0.0 && self.tau < 1.0 && self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(FitError::InvalidConfig(format!(
                "tau and quantile must lie in (0, 1), got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `max((x_hat - x) tau, (x_hat - x)(tau - 1))`.
pub fn pinball(x_hat: f64, x: f64, tau: f64) -> f64 {
    let d = x_hat - x;
    (d * tau).max(d * (tau - 1.0))
}

/// Linear-interpolation sample quantile (the common "type 7" definition).
/// Sorts `xs` in place.
pub fn empirical_quantile(xs: &mut [f64], o: f64) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(f64::total_cmp);
    let h = (xs.len() - 1) as f64 * o;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

/// Mean pinball loss of the per-snapshot sample quantile against the
/// reference, over every snapshot of every channel.
///
/// `samples[j][c]` is channel `c` of sample trajectory `j`;
/// `reference[c]` is channel `c` of the reference.
pub fn pinball_score(samples: &[Vec<Vec<f64>>], reference: &[Vec<f64>], cfg: &PinballConfig) -> f64 {
    assert!(!samples.is_empty());
    let mut total = 0.0;
    let mut count = 0usize;
    let mut column = Vec::with_capacity(samples.len());
    for (c, r) in reference.iter().enumerate() {
        for (k, &x) in r.iter().enumerate() {
            column.clear();
            column.extend(samples.iter().map(|s| s[c][k]));
            let x_hat = empirical_quantile(&mut column, cfg.quantile);
            total += pinball(x_hat, x, cfg.tau);
            count += 1;
        }
    }
    total / count.max(1) as f64
}

/// Plain root-mean-square difference.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}
