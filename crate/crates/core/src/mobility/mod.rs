//! Spatial and temporal data model: grids, raw GPS points, equal-interval
//! daily trajectories and the per-slot population field.

mod grid;
mod population;
mod resample;
mod synth;

use alloc::string::String;
use alloc::vec::Vec;

pub use grid::{CellId, GridSpec, EARTH_RADIUS_M};
pub use population::{compute_population_field, PopulationField};
pub use resample::{resample_trajectory, ResampleConfig, ResampleOutcome};
pub use synth::{synth_world, Hotspot, SynthWorldConfig};

use crate::error::{Error, Result};

/// Default day framing: 48 half-hour slots.
pub const DEFAULT_SLOTS: usize = 48;

/// One time-stamped GPS observation.
#[derive(Clone, Debug, PartialEq)]
pub struct RawPoint {
    pub user_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

impl RawPoint {
    pub fn new(user_id: impl Into<String>, timestamp: i64, lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::OutOfBounds { lat, lon });
        }
        Ok(RawPoint {
            user_id: user_id.into(),
            timestamp,
            lat,
            lon,
        })
    }
}

/// A user's day as one visited cell per time slot.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Trajectory {
    pub user_id: String,
    pub day_index: i64,
    pub cells: Vec<CellId>,
}

impl Trajectory {
    pub fn n_slots(&self) -> usize {
        self.cells.len()
    }

    pub fn validate(&self, n_cells: usize) -> Result<()> {
        if let Some(i) = self.cells.iter().position(|&c| c >= n_cells) {
            return Err(Error::Invalid(alloc::format!(
                "trajectory {}/{} slot {i}: cell {} >= {n_cells}",
                self.user_id,
                self.day_index,
                self.cells[i]
            )));
        }
        Ok(())
    }
}

/// Common slot count of a non-empty dataset.
pub fn common_slots(trajs: &[Trajectory]) -> Result<usize> {
    let first = trajs.first().ok_or(Error::Empty("trajectory set"))?;
    let n = first.n_slots();
    if n == 0 {
        return Err(Error::Invalid("trajectory with zero slots".into()));
    }
    if let Some(t) = trajs.iter().find(|t| t.n_slots() != n) {
        return Err(Error::Invalid(alloc::format!(
            "trajectory {}/{} has {} slots, expected {n}",
            t.user_id,
            t.day_index,
            t.n_slots()
        )));
    }
    Ok(n)
}
