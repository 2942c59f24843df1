use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::mobility::{GridSpec, Trajectory};

/// Normalized counts over fixed bins `[edges[i], edges[i+1])`.
///
/// Values outside the edge range fall into the nearest end bin.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
    pub count: usize,
}

impl Histogram {
    pub fn from_values(edges: &[f64], values: &[f64]) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig("histogram edges must be strictly increasing".into()));
        }
        let bins = edges.len() - 1;
        let mut masses = alloc::vec![0.0; bins];
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { what: "histogram value", index: i });
            }
            let b = edges.partition_point(|&e| e <= v).saturating_sub(1).min(bins - 1);
            masses[b] += 1.0;
        }
        if !values.is_empty() {
            let n = values.len() as f64;
            masses.iter_mut().for_each(|m| *m /= n);
        }
        Ok(Histogram { edges: edges.to_vec(), masses, count: values.len() })
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }
}

/// Fixed bin edges for every feature, recorded alongside each report.
#[derive(Clone, Debug, PartialEq)]
pub struct Binning {
    /// Underflow bin `[0, 0.1)` followed by 50 log-spaced bins up to 100 km.
    pub distance_km: Vec<f64>,
    pub radius_km: Vec<f64>,
    /// 48 half-hour bins centred on multiples of 0.5 h.
    pub duration_h: Vec<f64>,
    /// Integer bins 1..=48.
    pub daily_loc: Vec<f64>,
    pub slot_hours: f64,
    pub grank_k: usize,
    pub irank_k: usize,
}

fn log_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut edges = alloc::vec![0.0];
    let (a, b) = (math::ln(lo), math::ln(hi));
    edges.extend((0..=bins).map(|i| math::exp(a + (b - a) * i as f64 / bins as f64)));
    edges
}

impl Binning {
    /// Standard edges for trajectories of `n_slots` equal slots over a day.
    pub fn standard(n_slots: usize) -> Self {
        let dist = log_edges(0.1, 100.0, 50);
        Binning {
            distance_km: dist.clone(),
            radius_km: dist,
            duration_h: (1..=49).map(|k| 0.5 * k as f64 - 0.25).collect(),
            daily_loc: (1..=49).map(|k| k as f64 - 0.5).collect(),
            slot_hours: 24.0 / n_slots.max(1) as f64,
            grank_k: super::GRANK_K,
            irank_k: super::IRANK_K,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureHistograms {
    pub distance: Histogram,
    pub radius: Histogram,
    pub duration: Histogram,
    pub daily_loc: Histogram,
}

/// Center-to-center distances between consecutive slots, in km.
pub fn distances_km(t: &Trajectory, grid: &GridSpec) -> Vec<f64> {
    t.cells.windows(2).map(|w| grid.distance_m(w[0], w[1]) / 1000.0).collect()
}

/// Root-mean-square distance of the slot points from their centroid, in km.
pub fn radius_km(t: &Trajectory, grid: &GridSpec) -> f64 {
    if t.cells.is_empty() {
        return 0.0;
    }
    let n = t.cells.len() as f64;
    let pts: Vec<(f64, f64)> = t.cells.iter().map(|&c| grid.center_m(c)).collect();
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let ss: f64 = pts.iter().map(|p| (p.0 - cx) * (p.0 - cx) + (p.1 - cy) * (p.1 - cy)).sum();
    math::sqrt(ss / n) / 1000.0
}

/// Lengths of maximal constant-cell runs, in hours.
pub fn durations_h(t: &Trajectory, slot_hours: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut run = 0usize;
    for (i, &c) in t.cells.iter().enumerate() {
        run += 1;
        if t.cells.get(i + 1) != Some(&c) {
            out.push(run as f64 * slot_hours);
            run = 0;
        }
    }
    out
}

pub fn daily_locations(t: &Trajectory) -> usize {
    t.cells.iter().collect::<BTreeSet<_>>().len()
}

pub fn trajectory_features(trajs: &[Trajectory], grid: &GridSpec, binning: &Binning) -> Result<FeatureHistograms> {
    if trajs.is_empty() {
        return Err(Error::Empty("trajectory set"));
    }
    let (mut dist, mut rad, mut dur, mut loc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for t in trajs {
        t.validate(grid.n_cells())?;
        dist.extend(distances_km(t, grid));
        rad.push(radius_km(t, grid));
        dur.extend(durations_h(t, binning.slot_hours));
        loc.push(daily_locations(t) as f64);
    }
    Ok(FeatureHistograms {
        distance: Histogram::from_values(&binning.distance_km, &dist)?,
        radius: Histogram::from_values(&binning.radius_km, &rad)?,
        duration: Histogram::from_values(&binning.duration_h, &dur)?,
        daily_loc: Histogram::from_values(&binning.daily_loc, &loc)?,
    })
}
