//! Statistical comparison of real and generated trajectory sets: per-feature
//! histograms, rank curves, population distributions and OD matrices, all
//! scored with the Jensen-Shannon divergence (natural log) or cosine
//! similarity.

mod features;
mod od;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

pub use features::{
    daily_locations, distances_km, durations_h, radius_km, trajectory_features, Binning, FeatureHistograms,
    Histogram,
};
pub use od::{od_matrix, od_matrix_hourly, od_similarity, od_similarity_hourly, OdMatrix, OdSimilarity};

use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::math;
use crate::mobility::{common_slots, CellId, GridSpec, Trajectory};

/// Rank-curve truncation depth over all users.
pub const GRANK_K: usize = 100;
/// Rank-curve truncation depth for a single user.
pub const IRANK_K: usize = 10;

const SUM_TOL: f64 = 1e-6;

fn check_distribution(p: &[f64], row: usize) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Invalid(alloc::format!("distribution {row} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::NotNormalized { row, sum });
    }
    Ok(())
}

/// Jensen-Shannon divergence with natural logarithm, in `[0, ln 2]`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape("jsd", &[p.len()], &[q.len()]));
    }
    check_distribution(p, 0)?;
    check_distribution(q, 1)?;
    let half_kl = |a: f64, m: f64| if a > 0.0 { 0.5 * a * math::ln(a / m) } else { 0.0 };
    let s: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let m = 0.5 * (a + b);
            half_kl(a, m) + half_kl(b, m)
        })
        .sum();
    Ok(s.clamp(0.0, core::f64::consts::LN_2))
}

/// Visit counts per cell, ranked descending with ties to the lower id.
fn ranked_counts(visits: impl Iterator<Item = CellId>) -> Vec<u64> {
    let mut counts: BTreeMap<CellId, u64> = BTreeMap::new();
    for c in visits {
        *counts.entry(c).or_insert(0) += 1;
    }
    let mut ranked: Vec<(CellId, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().map(|(_, n)| n).collect()
}

fn truncated_curve(ranked: &[u64], k: usize) -> Vec<f64> {
    let mut curve = vec![0.0; k];
    let top: u64 = ranked.iter().take(k).sum();
    if top > 0 {
        for (slot, &n) in curve.iter_mut().zip(ranked) {
            *slot = n as f64 / top as f64;
        }
    }
    curve
}

/// G-rank and I-rank curves, each normalized over its kept ranks.
///
/// I-rank groups trajectories by `user_id`, builds each user's curve and
/// averages them.
pub fn rank_distributions(trajs: &[Trajectory]) -> Result<(Vec<f64>, Vec<f64>)> {
    if trajs.is_empty() {
        return Err(Error::Empty("trajectory set"));
    }
    let global = truncated_curve(&ranked_counts(trajs.iter().flat_map(|t| t.cells.iter().copied())), GRANK_K);
    let mut by_user: BTreeMap<&str, Vec<CellId>> = BTreeMap::new();
    for t in trajs {
        by_user.entry(t.user_id.as_str()).or_default().extend_from_slice(&t.cells);
    }
    let mut individual = vec![0.0; IRANK_K];
    let mut users = 0usize;
    for cells in by_user.values() {
        if cells.is_empty() {
            continue;
        }
        let curve = truncated_curve(&ranked_counts(cells.iter().copied()), IRANK_K);
        for (acc, v) in individual.iter_mut().zip(curve) {
            *acc += v;
        }
        users += 1;
    }
    if users > 0 {
        individual.iter_mut().for_each(|v| *v /= users as f64);
    }
    Ok((global, individual))
}

/// Aggregate visit share per cell, block-summed to `resolution × resolution`.
pub fn population_heatmap(trajs: &[Trajectory], grid: &GridSpec, resolution: usize) -> Result<Array> {
    if resolution == 0 || !grid.n_rows.is_multiple_of(resolution) || !grid.n_cols.is_multiple_of(resolution) {
        return Err(Error::InvalidConfig(alloc::format!(
            "resolution {resolution} does not divide the {}x{} grid",
            grid.n_rows,
            grid.n_cols
        )));
    }
    let (br, bc) = (grid.n_rows / resolution, grid.n_cols / resolution);
    let mut out = Array::zeros(&[resolution, resolution]);
    let mut total = 0u64;
    for t in trajs {
        t.validate(grid.n_cells())?;
        for &c in &t.cells {
            let (r, col) = grid.row_col(c);
            let (i, j) = (r / br, col / bc);
            out.set(i, j, out.get(i, j) + 1.0);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("visits"));
    }
    Ok(out.scaled(1.0 / total as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationComparison {
    pub jsd: f64,
    pub resolution: usize,
    pub real: Array,
    pub generated: Array,
}

pub fn population_metric(
    real: &[Trajectory],
    gen: &[Trajectory],
    grid: &GridSpec,
    resolution: usize,
) -> Result<PopulationComparison> {
    if real.is_empty() || gen.is_empty() {
        return Err(Error::Empty("trajectory set"));
    }
    let a = population_heatmap(real, grid, resolution)?;
    let b = population_heatmap(gen, grid, resolution)?;
    Ok(PopulationComparison { jsd: jsd(a.data(), b.data())?, resolution, real: a, generated: b })
}

/// The eight scores plus the binning they were computed with.
///
/// A JSD is `None` when either side's histogram is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub distance_jsd: Option<f64>,
    pub radius_jsd: Option<f64>,
    pub duration_jsd: Option<f64>,
    pub dailyloc_jsd: Option<f64>,
    pub grank_jsd: Option<f64>,
    pub irank_jsd: Option<f64>,
    pub popdist_jsd: f64,
    pub od_cosine: f64,
    /// Set when either OD matrix has no transitions.
    pub od_zero_matrix: bool,
    pub binning: Binning,
    pub population: PopulationComparison,
}

fn hist_jsd(a: &Histogram, b: &Histogram) -> Result<Option<f64>> {
    if a.count == 0 || b.count == 0 {
        return Ok(None);
    }
    jsd(&a.masses, &b.masses).map(Some)
}

fn curve_jsd(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.iter().all(|&v| v == 0.0) || b.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    jsd(a, b).map(Some)
}

pub fn report(real: &[Trajectory], gen: &[Trajectory], grid: &GridSpec, resolution: usize) -> Result<MetricReport> {
    if real.is_empty() || gen.is_empty() {
        return Err(Error::Empty("trajectory set"));
    }
    let n_slots = common_slots(real)?;
    if common_slots(gen)? != n_slots {
        return Err(Error::shape("report", &[n_slots], &[common_slots(gen)?]));
    }
    let binning = Binning::standard(n_slots);
    let fr = trajectory_features(real, grid, &binning)?;
    let fg = trajectory_features(gen, grid, &binning)?;
    let (gr, ir) = rank_distributions(real)?;
    let (gg, ig) = rank_distributions(gen)?;
    let population = population_metric(real, gen, grid, resolution)?;
    let od = od_similarity(&od_matrix(real, grid.n_cells())?, &od_matrix(gen, grid.n_cells())?)?;
    Ok(MetricReport {
        distance_jsd: hist_jsd(&fr.distance, &fg.distance)?,
        radius_jsd: hist_jsd(&fr.radius, &fg.radius)?,
        duration_jsd: hist_jsd(&fr.duration, &fg.duration)?,
        dailyloc_jsd: hist_jsd(&fr.daily_loc, &fg.daily_loc)?,
        grank_jsd: curve_jsd(&gr, &gg)?,
        irank_jsd: curve_jsd(&ir, &ig)?,
        popdist_jsd: population.jsd,
        od_cosine: od.value,
        od_zero_matrix: od.zero_matrix,
        binning,
        population,
    })
}

#[cfg(test)]
mod tests;
