use alloc::vec;
use alloc::vec::Vec;

use super::{common_slots, Trajectory};
use crate::autodiff::Array;
use crate::error::{Error, Result};

/// Per-slot probability of presence over cells (`n_slots × n_cells`).
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationField {
    probs: Array,
}

impl PopulationField {
    /// Wraps a matrix whose rows must be probability vectors within `1e-9`.
    pub fn from_array(probs: Array) -> Result<Self> {
        if probs.shape().len() != 2 || probs.rows() == 0 || probs.cols() == 0 {
            return Err(Error::shape("population_field", probs.shape(), &[]));
        }
        for r in 0..probs.rows() {
            let row = probs.row(r);
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::Invalid(alloc::format!("population row {r} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::NotNormalized { row: r, sum });
            }
        }
        Ok(PopulationField { probs })
    }

    pub fn n_slots(&self) -> usize {
        self.probs.rows()
    }

    pub fn n_cells(&self) -> usize {
        self.probs.cols()
    }

    pub fn row(&self, slot: usize) -> &[f64] {
        self.probs.row(slot)
    }

    pub fn as_array(&self) -> &Array {
        &self.probs
    }
}

/// `probs[n][c]` = share of trajectories located in cell `c` at slot `n`.
pub fn compute_population_field(dataset: &[Trajectory], n_cells: usize) -> Result<PopulationField> {
    let n_slots = common_slots(dataset)?;
    let mut counts = vec![0u64; n_slots * n_cells];
    for t in dataset {
        t.validate(n_cells)?;
        for (n, &c) in t.cells.iter().enumerate() {
            counts[n * n_cells + c] += 1;
        }
    }
    let total = dataset.len() as f64;
    let data: Vec<f64> = counts.into_iter().map(|k| k as f64 / total).collect();
    PopulationField::from_array(Array::new(&[n_slots, n_cells], data)?)
}
