use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{forward_diffuse, make_schedule, NoiseSchedule, Recovery, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS};
use crate::autodiff::{Adam, Array, Tape};
use crate::denoiser::DenoiserParams;
use crate::error::{Error, Result};
use crate::graph::EmbeddingMatrix;
use crate::mobility::{common_slots, PopulationField, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight `λ` of the population loss.
    pub lambda_pop: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Recovery ridge; `None` uses the scale-invariant default.
    pub ridge: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_pop: 0.5,
            learning_rate: 1e-3,
            batch_size: 16,
            diffusion_steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            epochs: 50,
            seed: 0,
            ridge: None,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(self.diffusion_steps, self.beta_start, self.beta_end)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_pop >= 0.0) || !self.lambda_pop.is_finite() {
            return Err(Error::InvalidConfig("lambda_pop must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("learning_rate, batch_size and epochs must be positive".into()));
        }
        self.schedule().map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss_ind: f64,
    /// Absent when `λ = 0`: the population loss is not evaluated.
    pub loss_pop: Option<f64>,
    pub loss_total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub params: DenoiserParams,
    pub losses: Vec<LossRecord>,
    /// Times the population field was read to build a loss target.
    pub population_reads: usize,
}

/// Stacks each trajectory's slot embeddings into an `N × d` array.
pub fn embed_dataset(dataset: &[Trajectory], m: &EmbeddingMatrix) -> Result<Vec<Array>> {
    dataset.iter().map(|t| m.embed(&t.cells)).collect()
}

/// x0-prediction training with `L = L_ind + λ·L_pop` and Adam updates.
///
/// Each step draws one diffusion step per trajectory uniformly from
/// `[1, T]`. `M` stays frozen.
pub fn train(
    dataset: &[Trajectory],
    pop: &PopulationField,
    m: &EmbeddingMatrix,
    mut params: DenoiserParams,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let n_slots = common_slots(dataset)?;
    let mcfg = params.config().clone();
    if m.dim() != mcfg.d_model || m.n_cells() != mcfg.n_cells || pop.n_cells() != mcfg.n_cells {
        return Err(Error::InvalidConfig(alloc::format!(
            "model expects d={} over {} cells; embeddings are {}×{}, population covers {} cells",
            mcfg.d_model,
            mcfg.n_cells,
            m.n_cells(),
            m.dim(),
            pop.n_cells()
        )));
    }
    if pop.n_slots() != n_slots {
        return Err(Error::shape("train", &[pop.n_slots()], &[n_slots]));
    }
    let sched = cfg.schedule()?;
    let e0s = embed_dataset(dataset, m)?;
    let recovery = if cfg.lambda_pop > 0.0 { Some(Recovery::new(m, cfg.ridge)?) } else { None };
    let projector = recovery.as_ref().map(|r| Arc::new(r.projector().clone()));
    let pop_shared = Arc::new(pop.as_array().clone());

    let d = mcfg.d_model;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut losses = Vec::new();
    let mut population_reads = 0;
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len();
            let mut clean = Vec::with_capacity(b * n_slots * d);
            let mut noisy = Vec::with_capacity(b * n_slots * d);
            let mut steps = Vec::with_capacity(b);
            for &i in batch {
                let t = rng.random_range(1..=sched.steps());
                let eps_data: Vec<f64> = (0..n_slots * d).map(|_| rng.sample(StandardNormal)).collect();
                let eps = Array::new(&[n_slots, d], eps_data)?;
                let xt = forward_diffuse(&e0s[i], t, &eps, &sched)?;
                clean.extend_from_slice(e0s[i].data());
                noisy.extend_from_slice(xt.data());
                steps.push(t);
            }

            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let x = tape.constant(Array::new(&[b * n_slots, d], noisy)?);
            let target = tape.constant(Array::new(&[b * n_slots, d], clean)?);
            let popv = tape.constant_shared(Arc::clone(&pop_shared));
            let e0_hat = params.denoise_batch(&mut tape, &bound, x, &steps, popv)?;
            let l_ind = tape.mse(e0_hat, target)?;
            let (total, l_pop) = match (&recovery, &projector) {
                (Some(rec), Some(proj)) => {
                    population_reads += 1;
                    let restricted = rec.restrict(pop.as_array())?;
                    let mut tiled = Vec::with_capacity(b * restricted.len());
                    for _ in 0..b {
                        tiled.extend_from_slice(restricted.data());
                    }
                    let pop_target = Array::new(&[b * n_slots, restricted.cols()], tiled)?;
                    let pv = tape.constant_shared(Arc::clone(proj));
                    let scores = tape.matmul(e0_hat, pv)?;
                    let probs = tape.softmax(scores, 1)?;
                    let l_pop = tape.cross_entropy(probs, &pop_target)?;
                    let weighted = tape.scale(l_pop, cfg.lambda_pop);
                    (tape.add(l_ind, weighted)?, Some(l_pop))
                }
                _ => (l_ind, None),
            };
            let record = LossRecord {
                step,
                loss_ind: tape.scalar(l_ind),
                loss_pop: l_pop.map(|v| tape.scalar(v)),
                loss_total: tape.scalar(total),
            };
            if !record.loss_total.is_finite() {
                return Err(Error::NonFinite { what: "training loss (step)", index: step });
            }
            let grads = tape.backward(total)?;
            let store = params.store_mut();
            store.zero_grad();
            store.accumulate(&tape, &grads);
            drop(tape);
            adam.step(store);
            losses.push(record);
            step += 1;
        }
    }
    Ok(TrainReport { params, losses, population_reads })
}
