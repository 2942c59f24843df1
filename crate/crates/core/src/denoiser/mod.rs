//! Population-conditioned denoiser: step embedding, temporal transformer
//! encoder, population projector, multi-head cross-attention and a gated
//! convolutional decoder. Predicts the clean trajectory embedding.

mod net;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use net::{step_embedding, Bound, CrossAttention, STEP_DIM};

use crate::autodiff::{Array, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::math;

/// Where cross-attention takes its values from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueSource {
    /// `W_V · p̌_k`: population content is mixed into the trajectory stream.
    Population,
    /// `W_V · ě_k`: population only shapes the mixing weights.
    Trajectory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_hidden: usize,
    pub pop_hidden: usize,
    /// Gated decoder channel count `C` (the first conv emits `2C`).
    pub channels: usize,
    pub kernel_width: usize,
    pub n_cells: usize,
    /// Adds a sinusoidal slot encoding before the encoder.
    pub slot_encoding: bool,
    pub value_source: ValueSource,
    /// Init scale of the last decoder conv relative to fan-in uniform.
    pub decoder_out_scale: f64,
    pub layer_norm_eps: f64,
}

impl DenoiserConfig {
    /// Full-size architecture: width 128, 8 heads, 4 layers, 64 channels.
    pub fn full(n_cells: usize) -> Self {
        DenoiserConfig {
            d_model: 128,
            n_heads: 8,
            n_layers: 4,
            ffn_hidden: 256,
            pop_hidden: 256,
            channels: 64,
            kernel_width: 3,
            n_cells,
            slot_encoding: true,
            value_source: ValueSource::Population,
            decoder_out_scale: 1e-2,
            layer_norm_eps: 1e-5,
        }
    }

    /// Small architecture for CPU-scale experiments.
    pub fn toy(n_cells: usize) -> Self {
        DenoiserConfig {
            d_model: 32,
            n_heads: 4,
            n_layers: 1,
            ffn_hidden: 64,
            pop_hidden: 64,
            channels: 32,
            ..Self::full(n_cells)
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} must be a positive multiple of n_heads {}", self.d_model, self.n_heads));
        }
        if self.ffn_hidden == 0 || self.pop_hidden == 0 || self.channels == 0 || self.n_cells == 0 {
            return bad("ffn_hidden, pop_hidden, channels and n_cells must be positive".into());
        }
        if self.kernel_width.is_multiple_of(2) {
            return bad(format!("kernel_width {} must be odd", self.kernel_width));
        }
        if !(self.decoder_out_scale >= 0.0) || !(self.layer_norm_eps > 0.0) {
            return bad("decoder_out_scale must be >= 0 and layer_norm_eps > 0".into());
        }
        Ok(())
    }
}

/// Parameter handles of one encoder layer.
#[derive(Clone, Debug)]
pub(crate) struct LayerIds {
    pub ln1: (ParamId, ParamId),
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub ln2: (ParamId, ParamId),
    pub ff1: (ParamId, ParamId),
    pub ff2: (ParamId, ParamId),
}

#[derive(Clone, Debug)]
pub(crate) struct Ids {
    pub step: (ParamId, ParamId),
    pub layers: Vec<LayerIds>,
    pub pop1: (ParamId, ParamId),
    pub pop2: (ParamId, ParamId),
    pub xq: ParamId,
    pub xk: ParamId,
    pub xv: ParamId,
    pub conv1: (ParamId, ParamId),
    pub conv2: (ParamId, ParamId),
}

/// All learnable weights of the denoiser together with its architecture.
#[derive(Clone, Debug)]
pub struct DenoiserParams {
    cfg: DenoiserConfig,
    store: ParamStore,
    ids: Ids,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn uniform(&mut self, shape: &[usize], fan_in: usize, scale: f64) -> Array {
        let a = scale / math::sqrt(fan_in as f64);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| a * (2.0 * self.rng.random::<f64>() - 1.0)).collect();
        Array::new(shape, data).expect("shape matches data")
    }
}

impl DenoiserParams {
    /// Fan-in uniform init for projections, unit/zero layer norms, zero biases.
    pub fn init(cfg: DenoiserConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = Init { rng: ChaCha8Rng::seed_from_u64(seed) };
        let mut store = ParamStore::new();
        let d = cfg.d_model;
        let linear = |store: &mut ParamStore, init: &mut Init, name: &str, i: usize, o: usize| -> Result<(ParamId, ParamId)> {
            let w = store.insert(&format!("{name}.w"), init.uniform(&[i, o], i, 1.0))?;
            let b = store.insert(&format!("{name}.b"), Array::zeros(&[o]))?;
            Ok((w, b))
        };
        let norm = |store: &mut ParamStore, name: &str| -> Result<(ParamId, ParamId)> {
            let g = store.insert(&format!("{name}.gamma"), Array::filled(&[d], 1.0))?;
            let b = store.insert(&format!("{name}.beta"), Array::zeros(&[d]))?;
            Ok((g, b))
        };
        let step = linear(&mut store, &mut init, "step", STEP_DIM, d)?;
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = format!("enc{l}");
            let ln1 = norm(&mut store, &format!("{p}.ln1"))?;
            let mut proj = |store: &mut ParamStore, n: &str| store.insert(&format!("{p}.{n}"), init.uniform(&[d, d], d, 1.0));
            let (wq, wk, wv, wo) = (proj(&mut store, "wq")?, proj(&mut store, "wk")?, proj(&mut store, "wv")?, proj(&mut store, "wo")?);
            let ln2 = norm(&mut store, &format!("{p}.ln2"))?;
            let ff1 = linear(&mut store, &mut init, &format!("{p}.ff1"), d, cfg.ffn_hidden)?;
            let ff2 = linear(&mut store, &mut init, &format!("{p}.ff2"), cfg.ffn_hidden, d)?;
            layers.push(LayerIds { ln1, wq, wk, wv, wo, ln2, ff1, ff2 });
        }
        let pop1 = linear(&mut store, &mut init, "pop1", cfg.n_cells, cfg.pop_hidden)?;
        let pop2 = linear(&mut store, &mut init, "pop2", cfg.pop_hidden, d)?;
        let mut proj = |store: &mut ParamStore, n: &str| store.insert(n, init.uniform(&[d, d], d, 1.0));
        let (xq, xk, xv) = (proj(&mut store, "xattn.wq")?, proj(&mut store, "xattn.wk")?, proj(&mut store, "xattn.wv")?);
        let (k, c) = (cfg.kernel_width, cfg.channels);
        let conv1 = (
            store.insert("dec.conv1.w", init.uniform(&[k, d, 2 * c], k * d, 1.0))?,
            store.insert("dec.conv1.b", Array::zeros(&[2 * c]))?,
        );
        let conv2 = (
            store.insert("dec.conv2.w", init.uniform(&[k, c, d], k * c, cfg.decoder_out_scale))?,
            store.insert("dec.conv2.b", Array::zeros(&[d]))?,
        );
        let ids = Ids { step, layers, pop1, pop2, xq, xk, xv, conv1, conv2 };
        Ok(DenoiserParams { cfg, store, ids })
    }

    /// Rebuilds parameters from a store holding every expected name and shape.
    pub fn from_store(cfg: DenoiserConfig, store: ParamStore) -> Result<Self> {
        let reference = Self::init(cfg, 0)?;
        if store.len() != reference.store.len() {
            return Err(Error::Invalid(format!(
                "checkpoint has {} parameters, architecture needs {}",
                store.len(),
                reference.store.len()
            )));
        }
        let mut out = reference;
        for id in out.store.ids().collect::<Vec<_>>() {
            let name = String::from(out.store.name(id));
            let src = store.id(&name).ok_or_else(|| Error::Invalid(format!("checkpoint lacks parameter {name}")))?;
            out.store.set(id, store.value(src).clone())?;
        }
        Ok(out)
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}
