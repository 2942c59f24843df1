use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{compute_population_field, CellId, GridSpec, PopulationField, Trajectory, DEFAULT_SLOTS};
use crate::error::{Error, Result};

/// A cell that attracts agents during `[slot_start, slot_end)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hotspot {
    pub slot_start: usize,
    pub slot_end: usize,
    pub cell: CellId,
    pub weight: f64,
}

/// Seeded agent-based surrogate for a city's daily mobility.
///
/// Each agent owns a home cell. At every slot it either keeps its previous
/// cell (with probability `stay_prob`, when that cell is still a candidate)
/// or samples among its home (weight `home_bias`) and the currently active
/// hotspots (their weights).
#[derive(Clone, Debug, PartialEq)]
pub struct SynthWorldConfig {
    pub n_cells_side: usize,
    pub n_users: usize,
    pub n_days: usize,
    pub n_slots: usize,
    pub hotspots: Vec<Hotspot>,
    pub home_bias: f64,
    pub stay_prob: f64,
    /// Homes are drawn from this many distinct cells; 0 means every cell.
    pub n_home_cells: usize,
    pub cell_size_m: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub seed: u64,
}

impl SynthWorldConfig {
    /// A 16×16 toy city with a commute pattern: two work hubs by day, a
    /// leisure hub in the evening.
    pub fn toy(seed: u64) -> Self {
        let side = 16;
        let cell = |r: usize, c: usize| r * side + c;
        SynthWorldConfig {
            n_cells_side: side,
            n_users: 200,
            n_days: 1,
            n_slots: DEFAULT_SLOTS,
            hotspots: alloc::vec![
                Hotspot { slot_start: 16, slot_end: 36, cell: cell(4, 11), weight: 3.0 },
                Hotspot { slot_start: 18, slot_end: 34, cell: cell(11, 4), weight: 2.0 },
                Hotspot { slot_start: 36, slot_end: 42, cell: cell(8, 8), weight: 1.5 },
            ],
            home_bias: 1.0,
            stay_prob: 0.85,
            n_home_cells: 24,
            cell_size_m: 1000.0,
            origin_lat: 39.8,
            origin_lon: 116.2,
            seed,
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.origin_lat, self.origin_lon, self.cell_size_m, self.n_cells_side, self.n_cells_side)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidConfig(m));
        self.grid()?;
        let n_cells = self.n_cells_side * self.n_cells_side;
        if self.n_slots == 0 {
            return bad("n_slots must be positive".into());
        }
        if self.hotspots.is_empty() {
            return bad("at least one hotspot is required".into());
        }
        for (i, h) in self.hotspots.iter().enumerate() {
            if !(h.weight > 0.0) || !h.weight.is_finite() {
                return bad(format!("hotspot {i}: weight must be positive"));
            }
            if h.cell >= n_cells || h.slot_start >= h.slot_end || h.slot_end > self.n_slots {
                return bad(format!("hotspot {i}: cell or slot range out of bounds"));
            }
        }
        if !(self.home_bias >= 0.0) || !(0.0..=1.0).contains(&self.stay_prob) {
            return bad("home_bias must be >= 0 and stay_prob in [0, 1]".into());
        }
        if self.n_home_cells > n_cells {
            return bad("n_home_cells exceeds the number of cells".into());
        }
        Ok(())
    }
}

/// Generates the world's trajectories and their population field.
pub fn synth_world(cfg: &SynthWorldConfig) -> Result<(Vec<Trajectory>, PopulationField)> {
    cfg.validate()?;
    let n_cells = cfg.n_cells_side * cfg.n_cells_side;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let home_pool: Vec<CellId> = if cfg.n_home_cells == 0 {
        (0..n_cells).collect()
    } else {
        let mut pool = index::sample(&mut rng, n_cells, cfg.n_home_cells).into_vec();
        pool.sort_unstable();
        pool
    };
    let homes: Vec<CellId> = (0..cfg.n_users)
        .map(|_| home_pool[rng.random_range(0..home_pool.len())])
        .collect();

    let mut trajs = Vec::with_capacity(cfg.n_users * cfg.n_days);
    let mut candidates: Vec<(CellId, f64)> = Vec::new();
    for day in 0..cfg.n_days {
        for (u, &home) in homes.iter().enumerate() {
            let mut cells = Vec::with_capacity(cfg.n_slots);
            let mut prev: Option<CellId> = None;
            for slot in 0..cfg.n_slots {
                candidates.clear();
                if cfg.home_bias > 0.0 {
                    candidates.push((home, cfg.home_bias));
                }
                for h in &cfg.hotspots {
                    if (h.slot_start..h.slot_end).contains(&slot) {
                        candidates.push((h.cell, h.weight));
                    }
                }
                let stay_draw: f64 = rng.random();
                let choice_draw: f64 = rng.random();
                let cell = if candidates.is_empty() {
                    home
                } else if let Some(p) = prev.filter(|p| stay_draw < cfg.stay_prob && candidates.iter().any(|c| c.0 == *p)) {
                    p
                } else {
                    pick(&candidates, choice_draw)
                };
                cells.push(cell);
                prev = Some(cell);
            }
            trajs.push(Trajectory {
                user_id: format!("u{u:04}"),
                day_index: day as i64,
                cells,
            });
        }
    }
    let field = compute_population_field(&trajs, n_cells)?;
    Ok((trajs, field))
}

fn pick(candidates: &[(CellId, f64)], u: f64) -> CellId {
    let total: f64 = candidates.iter().map(|c| c.1).sum();
    let mut acc = 0.0;
    for &(cell, w) in candidates {
        acc += w / total;
        if u < acc {
            return cell;
        }
    }
    candidates[candidates.len() - 1].0
}
