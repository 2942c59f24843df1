use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{recover_locations, NoiseSchedule, Recovery};
use crate::autodiff::{Array, Tape};
use crate::denoiser::DenoiserParams;
use crate::error::{Error, Result};
use crate::graph::EmbeddingMatrix;
use crate::math;
use crate::mobility::{PopulationField, Trajectory};

/// Anything that predicts clean embeddings for a stack of noisy ones.
pub trait Denoise {
    /// `x_t` is `B·N × d`; `steps` holds one diffusion step per trajectory.
    fn predict_x0(&self, x_t: &Array, steps: &[usize], pop: &PopulationField) -> Result<Array>;
}

impl Denoise for DenoiserParams {
    fn predict_x0(&self, x_t: &Array, steps: &[usize], pop: &PopulationField) -> Result<Array> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = tape.constant(x_t.clone());
        let p = tape.constant(pop.as_array().clone());
        let out = self.denoise_batch(&mut tape, &bound, x, steps, p)?;
        Ok(tape.value(out).clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleConfig {
    pub seed: u64,
    /// Trajectories denoised together per call; does not affect results.
    pub batch_size: usize,
    pub ridge: Option<f64>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { seed: 0, batch_size: 64, ridge: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeneratedBatch {
    pub trajectories: Vec<Trajectory>,
    /// Per trajectory: `N × n_cells` location distributions `d`.
    pub probabilities: Vec<Array>,
    /// Per trajectory: the emitted clean embedding `e⁰`.
    pub embeddings: Vec<Array>,
    /// Last sampled state before emission (`e¹`).
    pub last_states: Vec<Array>,
    pub denoiser_calls: usize,
}

fn stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Ancestral sampling from `e^T ~ N(0, I)` down to `t = 1`, emitting the
/// final clean prediction and decoding it to cells.
///
/// Trajectory `i` draws all of its noise from its own stream derived from
/// `(seed, i)`, so results do not depend on `batch_size`.
pub fn sample(
    n: usize,
    pop: &PopulationField,
    model: &impl Denoise,
    m: &EmbeddingMatrix,
    sched: &NoiseSchedule,
    cfg: &SampleConfig,
) -> Result<GeneratedBatch> {
    sample_range(0..n, pop, model, m, sched, cfg)
}

/// Trajectories `range` of the sequence `sample` would produce; disjoint
/// ranges can be generated independently and concatenated.
pub fn sample_range(
    range: core::ops::Range<usize>,
    pop: &PopulationField,
    model: &impl Denoise,
    m: &EmbeddingMatrix,
    sched: &NoiseSchedule,
    cfg: &SampleConfig,
) -> Result<GeneratedBatch> {
    let n = range.end.saturating_sub(range.start);
    let mut out = GeneratedBatch::default();
    if n == 0 {
        return Ok(out);
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be positive".into()));
    }
    let (n_slots, d) = (pop.n_slots(), m.dim());
    let recovery = Recovery::new(m, cfg.ridge)?;
    let block = n_slots * d;
    let mut start = range.start;
    while start < range.end {
        let b = cfg.batch_size.min(range.end - start);
        let mut rngs: Vec<ChaCha8Rng> = (start..start + b).map(|i| stream(cfg.seed, i)).collect();
        let mut data = Vec::with_capacity(b * block);
        for rng in &mut rngs {
            data.extend((0..block).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
        let mut x = Array::new(&[b * n_slots, d], data)?;
        let mut last = x.clone();
        for t in (1..=sched.steps()).rev() {
            let steps = alloc::vec![t; b];
            let x0_hat = model.predict_x0(&x, &steps, pop)?;
            out.denoiser_calls += 1;
            if x0_hat.shape() != x.shape() {
                return Err(Error::shape("sample", x.shape(), x0_hat.shape()));
            }
            if t == 1 {
                last = x;
                x = x0_hat;
                break;
            }
            let (c0, ct) = sched.posterior_mean_coefs(t)?;
            let sd = math::sqrt(sched.posterior_var(t)?);
            let xs = x.data_mut();
            for (k, rng) in rngs.iter_mut().enumerate() {
                let range = k * block..(k + 1) * block;
                for (xi, hi) in xs[range.clone()].iter_mut().zip(&x0_hat.data()[range]) {
                    let z: f64 = rng.sample(StandardNormal);
                    *xi = c0 * hi + ct * *xi + sd * z;
                }
            }
            if !x.is_finite() {
                return Err(Error::NonFinite { what: "sampler state (step)", index: t });
            }
        }
        for k in 0..b {
            let rows = k * block..(k + 1) * block;
            let e0 = Array::new(&[n_slots, d], x.data()[rows.clone()].to_vec())?;
            let probs = recovery.probabilities(&e0)?;
            let cells = recover_locations(&probs);
            out.trajectories.push(Trajectory {
                user_id: format!("gen{:05}", start + k),
                day_index: 0,
                cells,
            });
            out.probabilities.push(probs);
            out.embeddings.push(e0);
            out.last_states.push(Array::new(&[n_slots, d], last.data()[rows].to_vec())?);
        }
        start += b;
    }
    Ok(out)
}
