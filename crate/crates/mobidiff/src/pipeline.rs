//! The end-to-end stages as in-memory functions; the CLI adds file IO.

use std::collections::BTreeMap;

use mobidiff_core::denoiser::DenoiserParams;
use mobidiff_core::diffusion::{sample_range, train, GeneratedBatch, NoiseSchedule, SampleConfig, TrainReport};
use mobidiff_core::graph::{build_spatial_graph, train_line, visited_cells, EmbeddingMatrix};
use mobidiff_core::metrics::{report, MetricReport};
use mobidiff_core::mobility::{
    compute_population_field, resample_trajectory, GridSpec, PopulationField, RawPoint, Trajectory,
};

use crate::config::{seeds, RunConfig};
use crate::error::{CliError, Result};

/// Worker cap from `MOBIDIFF_THREADS`, else the available parallelism.
pub fn thread_limit() -> usize {
    std::env::var("MOBIDIFF_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestOutcome {
    pub trajectories: Vec<Trajectory>,
    pub users_kept: usize,
    pub users_dropped: usize,
    pub days_dropped: usize,
    pub points_outside: usize,
}

/// Groups points by user, sorts each user's points by time and resamples.
pub fn ingest(points: &[RawPoint], grid: &GridSpec, cfg: &RunConfig) -> Result<IngestOutcome> {
    let mut by_user: BTreeMap<&str, Vec<RawPoint>> = BTreeMap::new();
    for p in points {
        by_user.entry(p.user_id.as_str()).or_default().push(p.clone());
    }
    let rcfg = cfg.resample.core();
    let mut out = IngestOutcome::default();
    for pts in by_user.values_mut() {
        pts.sort_by_key(|p| p.timestamp);
        let r = resample_trajectory(pts, grid, &rcfg)?;
        out.days_dropped += r.days_dropped;
        out.points_outside += r.points_outside;
        if r.trajectories.is_empty() {
            out.users_dropped += 1;
        } else {
            out.users_kept += 1;
            out.trajectories.extend(r.trajectories);
        }
    }
    if out.trajectories.is_empty() {
        return Err(CliError::Input("no usable records".into()));
    }
    Ok(out)
}

pub fn population(trajs: &[Trajectory], grid: &GridSpec) -> Result<PopulationField> {
    Ok(compute_population_field(trajs, grid.n_cells())?)
}

/// Spatial graph over visited cells, LINE, then optional unit-RMS scaling.
pub fn embed(trajs: &[Trajectory], grid: &GridSpec, cfg: &RunConfig, seed: u64) -> Result<EmbeddingMatrix> {
    let line = cfg.line.core(seeds::line(seed));
    let graph = build_spatial_graph(grid, &visited_cells(trajs), line.k_neighbors, line.bandwidth_m)?;
    let m = train_line(&graph, grid.n_cells(), &line)?.embedding;
    Ok(if cfg.line.normalize { m.normalized()? } else { m })
}

pub fn train_model(
    trajs: &[Trajectory],
    pop: &PopulationField,
    m: &EmbeddingMatrix,
    cfg: &RunConfig,
    seed: u64,
) -> Result<TrainReport> {
    let mcfg = cfg.model.core(m.n_cells(), m.dim());
    let params = DenoiserParams::init(mcfg, seeds::init(seed))?;
    Ok(train(trajs, pop, m, params, &cfg.train.core(seeds::train(seed)))?)
}

/// Samples `n` trajectories, splitting the index range across up to
/// `threads` workers. Output does not depend on the split.
#[allow(clippy::too_many_arguments)]
pub fn generate(
    n: usize,
    pop: &PopulationField,
    params: &DenoiserParams,
    m: &EmbeddingMatrix,
    sched: &NoiseSchedule,
    cfg: &SampleConfig,
    threads: usize,
) -> Result<GeneratedBatch> {
    let workers = threads.clamp(1, n.max(1));
    let chunk = n.div_ceil(workers).max(1);
    let ranges: Vec<_> = (0..n).step_by(chunk).map(|s| s..(s + chunk).min(n)).collect();
    if ranges.len() <= 1 {
        return Ok(sample_range(0..n, pop, params, m, sched, cfg)?);
    }
    let parts: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|r| s.spawn(move || sample_range(r.clone(), pop, params, m, sched, cfg)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampling worker panicked")).collect()
    });
    let mut out = GeneratedBatch::default();
    let mut calls = 0;
    for part in parts {
        let part = part?;
        out.trajectories.extend(part.trajectories);
        out.probabilities.extend(part.probabilities);
        out.embeddings.extend(part.embeddings);
        out.last_states.extend(part.last_states);
        calls += part.denoiser_calls;
    }
    out.denoiser_calls = calls;
    Ok(out)
}

pub fn evaluate(real: &[Trajectory], gen: &[Trajectory], grid: &GridSpec, resolution: usize) -> Result<MetricReport> {
    Ok(report(real, gen, grid, resolution)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mobidiff_core::denoiser::DenoiserConfig;
    use mobidiff_core::diffusion::make_schedule;
    use mobidiff_core::mobility::{synth_world, Hotspot, SynthWorldConfig};

    #[test]
    fn threaded_generation_matches_serial() {
        let w = SynthWorldConfig {
            n_users: 8,
            n_cells_side: 4,
            n_home_cells: 4,
            hotspots: vec![Hotspot { slot_start: 0, slot_end: 10, cell: 5, weight: 1.0 }],
            ..SynthWorldConfig::toy(1)
        };
        let (trajs, pop) = synth_world(&w).unwrap();
        let grid = w.grid().unwrap();
        let cfg = RunConfig { line: crate::config::LineSection { dim: 8, n_epochs: 2, ..Default::default() }, ..Default::default() };
        let m = embed(&trajs, &grid, &cfg, 3).unwrap();
        let mc = DenoiserConfig { d_model: 8, n_heads: 2, ffn_hidden: 8, pop_hidden: 8, channels: 4, ..DenoiserConfig::toy(16) };
        let params = DenoiserParams::init(mc, 2).unwrap();
        let sched = make_schedule(5, 1e-2, 0.3).unwrap();
        let sc = SampleConfig { seed: 4, batch_size: 2, ridge: None };
        let a = generate(7, &pop, &params, &m, &sched, &sc, 1).unwrap();
        let b = generate(7, &pop, &params, &m, &sched, &sc, 3).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(generate(0, &pop, &params, &m, &sched, &sc, 4).unwrap().trajectories.len(), 0);
    }
}
