use alloc::vec::Vec;

use super::{DenoiserParams, ValueSource};
use crate::autodiff::{Array, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::math;
use crate::mobility::PopulationField;

/// Width of the sinusoidal diffusion-step embedding.
pub const STEP_DIM: usize = 128;

/// `[sin(10^{j·4/63}·t) for j < 64, cos(10^{j·4/63}·t) for j < 64]`.
pub fn step_embedding(t: usize) -> Array {
    let half = STEP_DIM / 2;
    let t = t as f64;
    let mut out = Array::zeros(&[STEP_DIM]);
    for j in 0..half {
        let f = math::powf(10.0, j as f64 * 4.0 / 63.0);
        out.data_mut()[j] = math::sin(f * t);
        out.data_mut()[half + j] = math::cos(f * t);
    }
    out
}

fn slot_encoding(n_slots: usize, d: usize) -> Array {
    let mut pe = Array::zeros(&[n_slots, d]);
    for n in 0..n_slots {
        for i in 0..d {
            let rate = math::powf(10_000.0, (2 * (i / 2)) as f64 / d as f64);
            let a = n as f64 / rate;
            pe.set(n, i, if i % 2 == 0 { math::sin(a) } else { math::cos(a) });
        }
    }
    pe
}

#[derive(Clone, Copy, Debug)]
struct Lin {
    w: Var,
    b: Var,
}

#[derive(Clone, Debug)]
struct LayerVars {
    ln1: Lin,
    wq: Var,
    wk: Var,
    wv: Var,
    wo: Var,
    ln2: Lin,
    ff1: Lin,
    ff2: Lin,
}

/// Parameters bound to one tape; bind once, reuse for a whole batch.
#[derive(Clone, Debug)]
pub struct Bound {
    step: Lin,
    layers: Vec<LayerVars>,
    pop1: Lin,
    pop2: Lin,
    xq: Var,
    xk: Var,
    xv: Var,
    conv1: Lin,
    conv2: Lin,
}

/// Cross-attention output plus one `N × N` weight matrix per (trajectory, head).
#[derive(Clone, Debug)]
pub struct CrossAttention {
    pub output: Var,
    pub weights: Vec<Var>,
}

fn linear(tape: &mut Tape, x: Var, l: Lin) -> Result<Var> {
    let y = tape.matmul(x, l.w)?;
    tape.add_row(y, l.b)
}

fn blocks(tape: &Tape, x: Var, n_slots: usize) -> Result<usize> {
    let rows = tape.value(x).rows();
    if n_slots == 0 || !rows.is_multiple_of(n_slots) {
        return Err(Error::shape("slot blocks", tape.value(x).shape(), &[n_slots]));
    }
    Ok(rows / n_slots)
}

fn rows_of(tape: &mut Tape, x: Var, b: usize, n_slots: usize, n_blocks: usize) -> Result<Var> {
    if n_blocks == 1 {
        Ok(x)
    } else {
        tape.slice(x, 0, b * n_slots, n_slots)
    }
}

/// Scaled dot-product multi-head attention, independently per block of
/// `n_slots` query rows. `k` and `v` are either stacked like `q` or shared
/// by every block (`N × d`).
fn attend(tape: &mut Tape, q: Var, k: Var, v: Var, n_slots: usize, heads: usize) -> Result<(Var, Vec<Var>)> {
    let n_blocks = blocks(tape, q, n_slots)?;
    let d = tape.value(q).cols();
    let scale = 1.0 / math::sqrt((d / heads) as f64);
    let shared = |tape: &Tape, x: Var| tape.value(x).rows() == n_slots;
    let (k_shared, v_shared) = (shared(tape, k), shared(tape, v));
    let k_heads = if k_shared { Some(tape.split(k, 1, heads)?) } else { None };
    let v_heads = if v_shared { Some(tape.split(v, 1, heads)?) } else { None };
    let mut outs = Vec::with_capacity(n_blocks);
    let mut weights = Vec::with_capacity(n_blocks * heads);
    for b in 0..n_blocks {
        let qb = rows_of(tape, q, b, n_slots, n_blocks)?;
        let qh = tape.split(qb, 1, heads)?;
        let kh = match &k_heads {
            Some(h) => h.clone(),
            None => {
                let kb = rows_of(tape, k, b, n_slots, n_blocks)?;
                tape.split(kb, 1, heads)?
            }
        };
        let vh = match &v_heads {
            Some(h) => h.clone(),
            None => {
                let vb = rows_of(tape, v, b, n_slots, n_blocks)?;
                tape.split(vb, 1, heads)?
            }
        };
        let mut head_out = Vec::with_capacity(heads);
        for h in 0..heads {
            let s = tape.matmul_t(qh[h], kh[h])?;
            let s = tape.scale(s, scale);
            if !tape.value(s).is_finite() {
                return Err(Error::NonFinite { what: "attention scores", index: b * heads + h });
            }
            let a = tape.softmax(s, 1)?;
            weights.push(a);
            head_out.push(tape.matmul(a, vh[h])?);
        }
        outs.push(if heads == 1 { head_out[0] } else { tape.concat(&head_out, 1)? });
    }
    let out = if n_blocks == 1 { outs[0] } else { tape.concat(&outs, 0)? };
    Ok((out, weights))
}

impl DenoiserParams {
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.bind_store(tape, &self.store)
    }

    /// Binds a store with the same layout as this one, such as a perturbed
    /// copy during gradient checking.
    pub fn bind_store(&self, tape: &mut Tape, store: &ParamStore) -> Bound {
        let ids = &self.ids;
        let mut p = |id: ParamId| tape.param(store, id);
        fn lin((w, b): (ParamId, ParamId), p: &mut dyn FnMut(ParamId) -> Var) -> Lin {
            Lin { w: p(w), b: p(b) }
        }
        let step = lin(ids.step, &mut p);
        let layers = ids
            .layers
            .iter()
            .map(|l| LayerVars {
                ln1: lin(l.ln1, &mut p),
                wq: p(l.wq),
                wk: p(l.wk),
                wv: p(l.wv),
                wo: p(l.wo),
                ln2: lin(l.ln2, &mut p),
                ff1: lin(l.ff1, &mut p),
                ff2: lin(l.ff2, &mut p),
            })
            .collect();
        Bound {
            step,
            layers,
            pop1: lin(ids.pop1, &mut p),
            pop2: lin(ids.pop2, &mut p),
            xq: p(ids.xq),
            xk: p(ids.xk),
            xv: p(ids.xv),
            conv1: lin(ids.conv1, &mut p),
            conv2: lin(ids.conv2, &mut p),
        }
    }

    /// Temporal encoder `ě` over a stack of `B` trajectories (`B·N × d`),
    /// one diffusion step per trajectory.
    pub fn encode(&self, tape: &mut Tape, bound: &Bound, x: Var, steps: &[usize], n_slots: usize) -> Result<Var> {
        let cfg = &self.cfg;
        let n_blocks = blocks(tape, x, n_slots)?;
        if steps.len() != n_blocks || tape.value(x).cols() != cfg.d_model {
            return Err(Error::shape("encode", tape.value(x).shape(), &[steps.len(), n_slots, cfg.d_model]));
        }
        let mut t_data = Vec::with_capacity(n_blocks * STEP_DIM);
        for &t in steps {
            t_data.extend_from_slice(step_embedding(t).data());
        }
        let t_emb = tape.constant(Array::new(&[n_blocks, STEP_DIM], t_data)?);
        let t_proj = linear(tape, t_emb, bound.step)?;
        let tile: Vec<usize> = (0..n_blocks).flat_map(|b| core::iter::repeat_n(b, n_slots)).collect();
        let t_tiled = tape.lookup(t_proj, &tile)?;
        let mut h = tape.add(x, t_tiled)?;
        if cfg.slot_encoding {
            let pe = slot_encoding(n_slots, cfg.d_model);
            let mut data = Vec::with_capacity(n_blocks * pe.len());
            for _ in 0..n_blocks {
                data.extend_from_slice(pe.data());
            }
            let pe = tape.constant(Array::new(&[n_blocks * n_slots, cfg.d_model], data)?);
            h = tape.add(h, pe)?;
        }
        for l in &bound.layers {
            let z = tape.layer_norm(h, l.ln1.w, l.ln1.b, cfg.layer_norm_eps)?;
            let q = tape.matmul(z, l.wq)?;
            let k = tape.matmul(z, l.wk)?;
            let v = tape.matmul(z, l.wv)?;
            let (att, _) = attend(tape, q, k, v, n_slots, cfg.n_heads)?;
            let att = tape.matmul(att, l.wo)?;
            h = tape.add(h, att)?;
            let z = tape.layer_norm(h, l.ln2.w, l.ln2.b, cfg.layer_norm_eps)?;
            let f = linear(tape, z, l.ff1)?;
            let f = tape.silu(f)?;
            let f = linear(tape, f, l.ff2)?;
            h = tape.add(h, f)?;
        }
        Ok(h)
    }

    /// Two-layer perceptron `p̌_n = MLP(p_n)` applied to every slot row.
    pub fn project_population(&self, tape: &mut Tape, bound: &Bound, pop: Var) -> Result<Var> {
        let pv = tape.value(pop);
        if pv.cols() != self.cfg.n_cells {
            return Err(Error::shape("project_population", pv.shape(), &[self.cfg.n_cells]));
        }
        for r in 0..pv.rows() {
            let sum: f64 = pv.row(r).iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::NotNormalized { row: r, sum });
            }
        }
        let h = linear(tape, pop, bound.pop1)?;
        let h = tape.silu(h)?;
        linear(tape, h, bound.pop2)
    }

    /// Multi-head cross-attention with queries from `ě` (`B·N × d`) and
    /// keys from `p̌` (`N × d`), heads concatenated, plus a residual.
    pub fn cross_attention(&self, tape: &mut Tape, bound: &Bound, e: Var, pop_proj: Var, n_slots: usize) -> Result<CrossAttention> {
        if tape.value(pop_proj).rows() != n_slots {
            return Err(Error::shape("cross_attention", tape.value(e).shape(), tape.value(pop_proj).shape()));
        }
        let q = tape.matmul(e, bound.xq)?;
        let k = tape.matmul(pop_proj, bound.xk)?;
        let v_src = match self.cfg.value_source {
            ValueSource::Population => pop_proj,
            ValueSource::Trajectory => e,
        };
        let v = tape.matmul(v_src, bound.xv)?;
        let (att, weights) = attend(tape, q, k, v, n_slots, self.cfg.n_heads)?;
        let output = tape.add(e, att)?;
        Ok(CrossAttention { output, weights })
    }

    /// `conv → tanh(a) ⊙ sigmoid(b) → conv`, per trajectory, same padding.
    pub fn decode(&self, tape: &mut Tape, bound: &Bound, e: Var, n_slots: usize) -> Result<Var> {
        let n_blocks = blocks(tape, e, n_slots)?;
        let mut outs = Vec::with_capacity(n_blocks);
        for b in 0..n_blocks {
            let x = rows_of(tape, e, b, n_slots, n_blocks)?;
            let h = tape.conv1d(x, bound.conv1.w, bound.conv1.b)?;
            let c = self.cfg.channels;
            let a = tape.slice(h, 1, 0, c)?;
            let g = tape.slice(h, 1, c, c)?;
            let h = tape.gated(a, g)?;
            outs.push(tape.conv1d(h, bound.conv2.w, bound.conv2.b)?);
        }
        if n_blocks == 1 {
            Ok(outs[0])
        } else {
            tape.concat(&outs, 0)
        }
    }

    /// Full prediction of the clean embedding `ê⁰` for a stack of noisy
    /// trajectories. `pop` is the `N × n_cells` population field.
    pub fn denoise_batch(&self, tape: &mut Tape, bound: &Bound, x: Var, steps: &[usize], pop: Var) -> Result<Var> {
        let n_slots = tape.value(pop).rows();
        let e = self.encode(tape, bound, x, steps, n_slots)?;
        let p = self.project_population(tape, bound, pop)?;
        let ca = self.cross_attention(tape, bound, e, p, n_slots)?;
        let dec = self.decode(tape, bound, ca.output, n_slots)?;
        tape.add(ca.output, dec)
    }

    /// Convenience single-trajectory forward pass on a fresh tape.
    pub fn denoise(&self, e_t: &Array, t: usize, pop: &PopulationField) -> Result<Array> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = tape.constant(e_t.clone());
        let p = tape.constant(pop.as_array().clone());
        let out = self.denoise_batch(&mut tape, &bound, x, &[t], p)?;
        Ok(tape.value(out).clone())
    }
}
