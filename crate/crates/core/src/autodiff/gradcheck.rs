use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::math;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Above this many coordinates, random probe directions are used instead.
    pub max_coords: usize,
    pub n_probes: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            max_coords: 10_000,
            n_probes: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckMode {
    Coordinates,
    Probes,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub n_checks: usize,
    pub mode: CheckMode,
}

/// Relative difference with an absolute fallback for near-zero gradients.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

fn evaluate<F>(store: &ParamStore, f: &mut F) -> Result<f64>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(store, &mut tape)?;
    let v = tape.scalar(out);
    if !v.is_finite() {
        return Err(Error::NonFinite {
            what: "grad_check objective",
            index: 0,
        });
    }
    Ok(v)
}

/// Compares the reverse-mode gradient of `f` against central differences.
///
/// `f` records a scalar objective over `store` on a fresh tape. Parameter
/// values are restored before returning.
pub fn grad_check<F>(store: &mut ParamStore, mut f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&cfg.eps) {
        return Err(Error::InvalidConfig(alloc::format!(
            "grad_check eps {} outside [1e-7, 1e-3]",
            cfg.eps
        )));
    }
    let mut tape = Tape::new();
    let out = f(store, &mut tape)?;
    if !tape.scalar(out).is_finite() {
        return Err(Error::NonFinite {
            what: "grad_check objective",
            index: 0,
        });
    }
    let grads = tape.backward(out)?;
    store.zero_grad();
    store.accumulate(&tape, &grads);
    drop(tape);
    let analytic = store.flat_grads();
    let n = analytic.len();
    let eps = cfg.eps;

    let mut max_err: f64 = 0.0;
    if n <= cfg.max_coords {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            for j in 0..store.value(id).len() {
                let orig = store.value(id).data()[j];
                store.value_mut(id).data_mut()[j] = orig + eps;
                let fp = evaluate(store, &mut f);
                store.value_mut(id).data_mut()[j] = orig - eps;
                let fm = evaluate(store, &mut f);
                store.value_mut(id).data_mut()[j] = orig;
                let numeric = (fp? - fm?) / (2.0 * eps);
                let flat = flat_index(store, id.index(), j);
                max_err = max_err.max(rel_error(analytic[flat], numeric));
            }
        }
        return Ok(GradCheckReport {
            max_rel_error: max_err,
            n_checks: n,
            mode: CheckMode::Coordinates,
        });
    }

    let base = store.flat_values();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.n_probes {
        let mut dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = math::sqrt(dir.iter().map(|x| x * x).sum());
        dir.iter_mut().for_each(|x| *x /= norm);
        let directional: f64 = analytic.iter().zip(&dir).map(|(g, d)| g * d).sum();
        store.set_flat(&base);
        store.add_flat(eps, &dir);
        let fp = evaluate(store, &mut f);
        store.set_flat(&base);
        store.add_flat(-eps, &dir);
        let fm = evaluate(store, &mut f);
        store.set_flat(&base);
        let numeric = (fp? - fm?) / (2.0 * eps);
        max_err = max_err.max(rel_error(directional, numeric));
    }
    Ok(GradCheckReport {
        max_rel_error: max_err,
        n_checks: cfg.n_probes,
        mode: CheckMode::Probes,
    })
}

fn flat_index(store: &ParamStore, param: usize, j: usize) -> usize {
    store.ids().take(param).map(|id| store.value(id).len()).sum::<usize>() + j
}
