use alloc::vec::Vec;

use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::graph::EmbeddingMatrix;
use crate::linalg::{default_ridge, ridge_pseudo_inverse};
use crate::math;
use crate::mobility::CellId;

/// Pseudo-inverse decoder for one embedding matrix.
///
/// Scores for a slot embedding `e` are `e · P(M)` restricted to decodable
/// cells (the reserved row and all-zero rows are masked), turned into a
/// distribution over cells by a softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Recovery {
    n_cells: usize,
    cells: Vec<CellId>,
    projector: Array,
}

impl Recovery {
    /// `ridge = None` selects `1e-6 · trace(MᵀM) / d`.
    pub fn new(m: &EmbeddingMatrix, ridge: Option<f64>) -> Result<Self> {
        let table = m.as_array();
        let ridge = ridge.unwrap_or_else(|| default_ridge(table));
        let pinv = ridge_pseudo_inverse(table, ridge).map_err(|e| match e {
            Error::NotPositiveDefinite { pivot } => Error::Invalid(alloc::format!(
                "pseudo-inverse failed at pivot {pivot}; increase the ridge (currently {ridge:e})"
            )),
            other => other,
        })?;
        let rows: Vec<usize> = m
            .decodable_rows()
            .iter()
            .enumerate()
            .filter_map(|(r, &ok)| ok.then_some(r))
            .collect();
        if rows.is_empty() {
            return Err(Error::Empty("decodable embedding rows"));
        }
        let d = m.dim();
        let mut projector = Array::zeros(&[d, rows.len()]);
        for i in 0..d {
            for (j, &r) in rows.iter().enumerate() {
                projector.set(i, j, pinv.get(i, r));
            }
        }
        let cells = rows.iter().map(|&r| EmbeddingMatrix::cell_of(r).expect("row 0 is masked")).collect();
        Ok(Recovery { n_cells: m.n_cells(), cells, projector })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Decodable cells, ascending; column `j` of scores refers to `cells()[j]`.
    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    /// `d × n_decodable` block of `P(M)`.
    pub fn projector(&self) -> &Array {
        &self.projector
    }

    pub fn scores(&self, e0_hat: &Array) -> Result<Array> {
        e0_hat.matmul(&self.projector)
    }

    /// Restricts a full `rows × n_cells` matrix to the decodable columns.
    pub fn restrict(&self, full: &Array) -> Result<Array> {
        if full.cols() != self.n_cells {
            return Err(Error::shape("restrict", full.shape(), &[self.n_cells]));
        }
        let mut out = Array::zeros(&[full.rows(), self.cells.len()]);
        for r in 0..full.rows() {
            for (j, &c) in self.cells.iter().enumerate() {
                out.set(r, j, full.get(r, c));
            }
        }
        Ok(out)
    }

    /// Per-slot distributions over all cells; masked cells get zero mass.
    pub fn probabilities(&self, e0_hat: &Array) -> Result<Array> {
        let scores = self.scores(e0_hat)?;
        let mut out = Array::zeros(&[scores.rows(), self.n_cells]);
        for r in 0..scores.rows() {
            let row = scores.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !m.is_finite() {
                return Err(Error::NonFinite { what: "recovery scores (row)", index: r });
            }
            let exps: Vec<f64> = row.iter().map(|s| math::exp(s - m)).collect();
            let z: f64 = exps.iter().sum();
            let dst = out.row_mut(r);
            for (&c, e) in self.cells.iter().zip(exps) {
                dst[c] = e / z;
            }
        }
        Ok(out)
    }
}

/// Per-slot distributions `d` over cells for a predicted clean embedding.
pub fn recover_probabilities(e0_hat: &Array, m: &EmbeddingMatrix, ridge: Option<f64>) -> Result<Array> {
    Recovery::new(m, ridge)?.probabilities(e0_hat)
}

/// Argmax cell per slot; ties go to the lowest cell id.
pub fn recover_locations(d_probs: &Array) -> Vec<CellId> {
    (0..d_probs.rows())
        .map(|r| {
            let row = d_probs.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
