use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::mobility::{CellId, Trajectory};

/// Sparse `n_cells × n_cells` counts of consecutive-slot transitions,
/// stays included.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OdMatrix {
    pub n_cells: usize,
    pub counts: BTreeMap<(CellId, CellId), f64>,
}

impl OdMatrix {
    pub fn new(n_cells: usize) -> Self {
        OdMatrix { n_cells, counts: BTreeMap::new() }
    }

    pub fn add(&mut self, from: CellId, to: CellId, n: f64) -> Result<()> {
        if from >= self.n_cells || to >= self.n_cells {
            return Err(Error::UnknownNode(from.max(to)));
        }
        *self.counts.entry((from, to)).or_insert(0.0) += n;
        Ok(())
    }

    pub fn get(&self, from: CellId, to: CellId) -> f64 {
        self.counts.get(&(from, to)).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.counts.values().sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        let counts = self.counts.iter().map(|(&k, &v)| (k, v * a)).collect();
        OdMatrix { n_cells: self.n_cells, counts }
    }
}

pub fn od_matrix(trajs: &[Trajectory], n_cells: usize) -> Result<OdMatrix> {
    let mut od = OdMatrix::new(n_cells);
    for t in trajs {
        for w in t.cells.windows(2) {
            od.add(w[0], w[1], 1.0)?;
        }
    }
    Ok(od)
}

/// 24 matrices; the transition leaving slot `s` belongs to the hour in which
/// `s` starts.
pub fn od_matrix_hourly(trajs: &[Trajectory], n_cells: usize, slot_hours: f64) -> Result<Vec<OdMatrix>> {
    if !(slot_hours > 0.0) {
        return Err(Error::InvalidConfig("slot_hours must be positive".into()));
    }
    let mut out: Vec<OdMatrix> = (0..24).map(|_| OdMatrix::new(n_cells)).collect();
    for t in trajs {
        for (s, w) in t.cells.windows(2).enumerate() {
            let hour = (math::floor(s as f64 * slot_hours + 1e-9) as usize).min(23);
            out[hour].add(w[0], w[1], 1.0)?;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdSimilarity {
    pub value: f64,
    /// Either matrix was all zero; `value` is then defined as 0.
    pub zero_matrix: bool,
}

/// Cosine similarity of the flattened count vectors.
pub fn od_similarity(a: &OdMatrix, b: &OdMatrix) -> Result<OdSimilarity> {
    if a.n_cells != b.n_cells {
        return Err(Error::shape("od_similarity", &[a.n_cells], &[b.n_cells]));
    }
    let na: f64 = math::sqrt(a.counts.values().map(|v| v * v).sum());
    let nb: f64 = math::sqrt(b.counts.values().map(|v| v * v).sum());
    if na == 0.0 || nb == 0.0 {
        return Ok(OdSimilarity { value: 0.0, zero_matrix: true });
    }
    let dot: f64 = a.counts.iter().map(|(k, v)| v * b.counts.get(k).copied().unwrap_or(0.0)).sum();
    Ok(OdSimilarity { value: (dot / (na * nb)).clamp(-1.0, 1.0), zero_matrix: false })
}

pub fn od_similarity_hourly(a: &[OdMatrix], b: &[OdMatrix]) -> Result<Vec<OdSimilarity>> {
    if a.len() != b.len() {
        return Err(Error::shape("od_similarity_hourly", &[a.len()], &[b.len()]));
    }
    a.iter().zip(b).map(|(x, y)| od_similarity(x, y)).collect()
}
