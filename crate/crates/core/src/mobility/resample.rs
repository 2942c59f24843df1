use alloc::vec::Vec;

use super::{GridSpec, RawPoint, Trajectory};
use crate::error::{Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Clone, Debug, PartialEq)]
pub struct ResampleConfig {
    pub slot_minutes: u32,
    /// Days with fewer in-grid points than this are dropped.
    pub min_records: usize,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig {
            slot_minutes: 30,
            min_records: 10,
        }
    }
}

impl ResampleConfig {
    pub fn n_slots(&self) -> Result<usize> {
        if self.slot_minutes == 0 || 1440 % self.slot_minutes != 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "slot_minutes {} must divide 1440",
                self.slot_minutes
            )));
        }
        Ok((1440 / self.slot_minutes) as usize)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResampleOutcome {
    pub trajectories: Vec<Trajectory>,
    pub days_dropped: usize,
    pub points_outside: usize,
}

/// Converts one user's time-sorted points into one trajectory per day.
///
/// Slot `n` of a day takes the cell of the latest point observed at or
/// before the slot boundary `day_start + n * slot`; slots before the first
/// observation take the first observed cell. Points outside the grid are
/// counted and skipped.
pub fn resample_trajectory(points: &[RawPoint], grid: &GridSpec, cfg: &ResampleConfig) -> Result<ResampleOutcome> {
    let n_slots = cfg.n_slots()?;
    let slot_secs = i64::from(cfg.slot_minutes) * 60;
    let mut outcome = ResampleOutcome::default();
    let Some(first) = points.first() else {
        return Ok(outcome);
    };
    for w in points.windows(2) {
        if w[1].timestamp < w[0].timestamp {
            return Err(Error::Invalid(alloc::format!(
                "points for user {} are not sorted by timestamp",
                first.user_id
            )));
        }
    }
    if let Some(p) = points.iter().find(|p| p.user_id != first.user_id) {
        return Err(Error::Invalid(alloc::format!(
            "points from several users ({} and {})",
            first.user_id,
            p.user_id
        )));
    }

    let mut day_points: Vec<(i64, usize)> = Vec::new();
    let mut current_day = None;
    let flush = |day: i64, pts: &mut Vec<(i64, usize)>, outcome: &mut ResampleOutcome| {
        if pts.is_empty() {
            return;
        }
        if pts.len() < cfg.min_records {
            outcome.days_dropped += 1;
        } else {
            let day_start = day * SECONDS_PER_DAY;
            let mut cells = Vec::with_capacity(n_slots);
            let mut idx = 0;
            let mut current = pts[0].1;
            for n in 0..n_slots {
                let boundary = day_start + n as i64 * slot_secs;
                while idx < pts.len() && pts[idx].0 <= boundary {
                    current = pts[idx].1;
                    idx += 1;
                }
                cells.push(current);
            }
            outcome.trajectories.push(Trajectory {
                user_id: first.user_id.clone(),
                day_index: day,
                cells,
            });
        }
        pts.clear();
    };

    for p in points {
        let day = p.timestamp.div_euclid(SECONDS_PER_DAY);
        if current_day != Some(day) {
            if let Some(d) = current_day {
                flush(d, &mut day_points, &mut outcome);
            }
            current_day = Some(day);
        }
        match grid.map_to_grid(p.lat, p.lon) {
            Ok(cell) => day_points.push((p.timestamp, cell)),
            Err(_) => outcome.points_outside += 1,
        }
    }
    if let Some(d) = current_day {
        flush(d, &mut day_points, &mut outcome);
    }
    Ok(outcome)
}
