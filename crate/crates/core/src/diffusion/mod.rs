//! Noise schedule, forward corruption, x0-prediction losses and training,
//! reverse sampling, and decoding embeddings back to locations.

mod recover;
mod sample;
mod train;

use alloc::vec::Vec;

pub use recover::{recover_locations, recover_probabilities, Recovery};
pub use sample::{sample, sample_range, Denoise, GeneratedBatch, SampleConfig};
pub use train::{embed_dataset, train, LossRecord, TrainConfig, TrainReport};

use crate::autodiff::{Array, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::math;

/// Linear variance schedule with its cumulative products and posterior
/// variances. Steps are 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    beta_start: f64,
    beta_end: f64,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
    posterior_var: Vec<f64>,
}

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::InvalidConfig("schedule needs at least one step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "need 0 < beta_start ({beta_start}) <= beta_end ({beta_end}) < 1"
        )));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for b in &beta {
        acc *= 1.0 - b;
        alpha_bar.push(acc);
    }
    let posterior_var = (0..steps)
        .map(|i| if i == 0 { beta[0] } else { (1.0 - alpha_bar[i - 1]) / (1.0 - alpha_bar[i]) * beta[i] })
        .collect();
    Ok(NoiseSchedule { beta_start, beta_end, beta, alpha_bar, posterior_var })
}

impl NoiseSchedule {
    pub fn default_linear() -> Self {
        make_schedule(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END).expect("default schedule is valid")
    }

    /// The default schedule compressed to `steps`, keeping the same
    /// average per-step corruption (`β` bounds scaled by `1000 / steps`).
    pub fn scaled_linear(steps: usize) -> Result<Self> {
        let s = DEFAULT_STEPS as f64 / steps as f64;
        make_schedule(steps, DEFAULT_BETA_START * s, (DEFAULT_BETA_END * s).min(0.999))
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::InvalidConfig(alloc::format!("step {t} outside [1, {}]", self.steps())));
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        Ok(self.beta[self.check(t)?])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(1.0 - self.beta(t)?)
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Ok(1.0);
        }
        Ok(self.alpha_bar[self.check(t)?])
    }

    pub fn posterior_var(&self, t: usize) -> Result<f64> {
        Ok(self.posterior_var[self.check(t)?])
    }

    /// Coefficients `(c0, ct)` of the posterior mean `c0·x0 + ct·x_t`.
    pub fn posterior_mean_coefs(&self, t: usize) -> Result<(f64, f64)> {
        let ab = self.alpha_bar(t)?;
        let ab_prev = self.alpha_bar(t - 1)?;
        let beta = self.beta(t)?;
        let c0 = math::sqrt(ab_prev) * beta / (1.0 - ab);
        let ct = math::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
        Ok((c0, ct))
    }
}

/// `√ᾱ_t·e0 + √(1−ᾱ_t)·eps`.
pub fn forward_diffuse(e0: &Array, t: usize, eps: &Array, sched: &NoiseSchedule) -> Result<Array> {
    if e0.shape() != eps.shape() {
        return Err(Error::shape("forward_diffuse", e0.shape(), eps.shape()));
    }
    sched.check(t)?;
    let ab = sched.alpha_bar(t)?;
    let (a, b) = (math::sqrt(ab), math::sqrt(1.0 - ab));
    let data = e0.data().iter().zip(eps.data()).map(|(x, e)| a * x + b * e).collect();
    Array::new(e0.shape(), data)
}

/// Posterior mean `μ(x_t, x0)` of `q(x_{t−1} | x_t, x0)`.
pub fn posterior_mean(x_t: &Array, x0: &Array, t: usize, sched: &NoiseSchedule) -> Result<Array> {
    if x_t.shape() != x0.shape() {
        return Err(Error::shape("posterior_mean", x_t.shape(), x0.shape()));
    }
    let (c0, ct) = sched.posterior_mean_coefs(t)?;
    let data = x0.data().iter().zip(x_t.data()).map(|(a, b)| c0 * a + ct * b).collect();
    Array::new(x_t.shape(), data)
}

/// Mean squared error over all slots and dimensions.
pub fn loss_ind(e0: &Array, e0_hat: &Array) -> Result<f64> {
    if e0.shape() != e0_hat.shape() {
        return Err(Error::shape("loss_ind", e0.shape(), e0_hat.shape()));
    }
    let n = e0.len().max(1) as f64;
    Ok(e0.data().iter().zip(e0_hat.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// Mean over slots of `−Σ_i d_i·ln(p_i + 1e-12)`.
pub fn loss_pop(d_probs: &Array, pop: &Array) -> Result<f64> {
    if d_probs.shape() != pop.shape() {
        return Err(Error::shape("loss_pop", d_probs.shape(), pop.shape()));
    }
    let rows = d_probs.rows().max(1) as f64;
    let s: f64 = d_probs
        .data()
        .iter()
        .zip(pop.data())
        .map(|(d, p)| -d * math::ln(p + LOG_FLOOR))
        .sum();
    Ok(s / rows)
}
