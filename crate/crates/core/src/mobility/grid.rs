use crate::error::{Error, Result};
use crate::math;

/// Identifier of a grid cell, `row * n_cols + col`.
pub type CellId = usize;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Square-cell grid anchored at its south-west corner.
///
/// Coordinates are projected with a local equirectangular approximation
/// around the origin; rows grow northwards, columns eastwards.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_size_m: f64,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl GridSpec {
    pub fn new(origin_lat: f64, origin_lon: f64, cell_size_m: f64, n_rows: usize, n_cols: usize) -> Result<Self> {
        let g = GridSpec {
            origin_lat,
            origin_lon,
            cell_size_m,
            n_rows,
            n_cols,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(Error::InvalidConfig("grid needs at least one row and column".into()));
        }
        if !(self.cell_size_m > 0.0) || !self.cell_size_m.is_finite() {
            return Err(Error::InvalidConfig("cell_size_m must be positive".into()));
        }
        if !(-90.0..=90.0).contains(&self.origin_lat) || !(-180.0..=180.0).contains(&self.origin_lon) {
            return Err(Error::InvalidConfig("grid origin outside lat/lon range".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn cell(&self, row: usize, col: usize) -> CellId {
        row * self.n_cols + col
    }

    pub fn row_col(&self, cell: CellId) -> (usize, usize) {
        (cell / self.n_cols, cell % self.n_cols)
    }

    fn meters_per_degree() -> f64 {
        EARTH_RADIUS_M * core::f64::consts::PI / 180.0
    }

    fn lon_scale(&self) -> f64 {
        math::cos(self.origin_lat.to_radians())
    }

    /// Local planar offset (east, north) in meters from the origin.
    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let k = Self::meters_per_degree();
        ((lon - self.origin_lon) * self.lon_scale() * k, (lat - self.origin_lat) * k)
    }

    pub fn unproject(&self, x: f64, y: f64) -> (f64, f64) {
        let k = Self::meters_per_degree();
        (self.origin_lat + y / k, self.origin_lon + x / (self.lon_scale() * k))
    }

    /// Planar center of a cell in meters.
    pub fn center_m(&self, cell: CellId) -> (f64, f64) {
        let (r, c) = self.row_col(cell);
        ((c as f64 + 0.5) * self.cell_size_m, (r as f64 + 0.5) * self.cell_size_m)
    }

    pub fn center_latlon(&self, cell: CellId) -> (f64, f64) {
        let (x, y) = self.center_m(cell);
        self.unproject(x, y)
    }

    /// Euclidean distance between cell centers in meters.
    pub fn distance_m(&self, a: CellId, b: CellId) -> f64 {
        let (ra, ca) = self.row_col(a);
        let (rb, cb) = self.row_col(b);
        let dr = ra as f64 - rb as f64;
        let dc = ca as f64 - cb as f64;
        math::sqrt(dr * dr + dc * dc) * self.cell_size_m
    }

    /// Maps a coordinate to its cell, rejecting points outside the bounding box.
    pub fn map_to_grid(&self, lat: f64, lon: f64) -> Result<CellId> {
        let out = Error::OutOfBounds { lat, lon };
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(out);
        }
        let (x, y) = self.project(lat, lon);
        let col = math::floor(x / self.cell_size_m);
        let row = math::floor(y / self.cell_size_m);
        if col < 0.0 || row < 0.0 || col >= self.n_cols as f64 || row >= self.n_rows as f64 {
            return Err(out);
        }
        Ok(self.cell(row as usize, col as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid64() -> GridSpec {
        GridSpec::new(39.8, 116.2, 1000.0, 64, 64).unwrap()
    }

    #[test]
    fn origin_maps_to_cell_zero() {
        let g = grid64();
        assert_eq!(g.map_to_grid(g.origin_lat, g.origin_lon).unwrap(), 0);
    }

    #[test]
    fn last_cell_is_4095() {
        let g = grid64();
        let (lat, lon) = g.center_latlon(4095);
        assert_eq!(g.map_to_grid(lat, lon).unwrap(), 4095);
        assert_eq!(g.n_cells(), 4096);
    }

    #[test]
    fn one_meter_outside_is_rejected() {
        let g = grid64();
        let (lat, lon) = g.unproject(-1.0, 10.0);
        assert!(matches!(g.map_to_grid(lat, lon), Err(Error::OutOfBounds { .. })));
        let (lat, lon) = g.unproject(10.0, 64_001.0);
        let err = g.map_to_grid(lat, lon).unwrap_err();
        assert_eq!(err, Error::OutOfBounds { lat, lon });
    }

    #[test]
    fn center_reprojection_is_idempotent() {
        let g = GridSpec::new(-33.9, 151.1, 750.0, 9, 13).unwrap();
        for cell in 0..g.n_cells() {
            let (lat, lon) = g.center_latlon(cell);
            assert_eq!(g.map_to_grid(lat, lon).unwrap(), cell);
        }
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::new(0.0, 0.0, 1000.0, 0, 4).is_err());
        assert!(GridSpec::new(0.0, 0.0, 0.0, 4, 4).is_err());
    }
}
