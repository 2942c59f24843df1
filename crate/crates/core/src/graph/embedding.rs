use alloc::vec::Vec;

use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::mobility::CellId;

/// Location embedding table `M` with `n_cells + 1` rows.
///
/// Row 0 is reserved and zero. Cell `c` lives in row `c + 1`; cells absent
/// from the training graph keep an all-zero row, identical to the reserved
/// one.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    table: Array,
}

impl EmbeddingMatrix {
    pub fn from_array(table: Array) -> Result<Self> {
        if table.shape().len() != 2 || table.rows() < 2 || table.cols() == 0 {
            return Err(Error::shape("embedding_matrix", table.shape(), &[]));
        }
        if !table.cols().is_multiple_of(2) {
            return Err(Error::InvalidConfig(alloc::format!("embedding width {} must be even", table.cols())));
        }
        if let Some(i) = table.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "embedding matrix", index: i });
        }
        if table.row(0).iter().any(|&v| v != 0.0) {
            return Err(Error::Invalid("embedding row 0 is reserved and must be zero".into()));
        }
        Ok(EmbeddingMatrix { table })
    }

    pub fn n_cells(&self) -> usize {
        self.table.rows() - 1
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn as_array(&self) -> &Array {
        &self.table
    }

    pub fn row_of(cell: CellId) -> usize {
        cell + 1
    }

    pub fn cell_of(row: usize) -> Option<CellId> {
        row.checked_sub(1)
    }

    pub fn vector(&self, cell: CellId) -> Result<&[f64]> {
        if cell >= self.n_cells() {
            return Err(Error::UnknownNode(cell));
        }
        Ok(self.table.row(cell + 1))
    }

    pub fn first_order(&self, cell: CellId) -> Result<&[f64]> {
        Ok(&self.vector(cell)?[..self.dim() / 2])
    }

    pub fn second_order(&self, cell: CellId) -> Result<&[f64]> {
        Ok(&self.vector(cell)?[self.dim() / 2..])
    }

    /// Rows that may be decoded as a location: non-zero and not reserved.
    pub fn decodable_rows(&self) -> Vec<bool> {
        (0..self.table.rows())
            .map(|r| r > 0 && self.table.row(r).iter().any(|&v| v != 0.0))
            .collect()
    }

    /// Rescales so decodable rows have unit root-mean-square entries.
    ///
    /// Recovery is invariant to a global scale; diffusion is not, and its
    /// prior `N(0, I)` matches unit-scale data.
    pub fn normalized(&self) -> Result<Self> {
        let mask = self.decodable_rows();
        let (mut ss, mut n) = (0.0, 0usize);
        for (r, _) in mask.iter().enumerate().filter(|(_, &ok)| ok) {
            ss += self.table.row(r).iter().map(|v| v * v).sum::<f64>();
            n += self.dim();
        }
        if n == 0 {
            return Err(Error::Empty("decodable embedding rows"));
        }
        Self::from_array(self.table.scaled(1.0 / crate::math::sqrt(ss / n as f64)))
    }

    /// Stacks the embeddings of a cell sequence into `len × d`.
    pub fn embed(&self, cells: &[CellId]) -> Result<Array> {
        let d = self.dim();
        let mut out = Vec::with_capacity(cells.len() * d);
        for &c in cells {
            out.extend_from_slice(self.vector(c)?);
        }
        Array::new(&[cells.len(), d], out)
    }
}
