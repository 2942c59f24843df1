//! Run configuration: a TOML file of sections, every key optional.

use std::path::{Path, PathBuf};

use mobidiff_core::denoiser::{DenoiserConfig, ValueSource};
use mobidiff_core::diffusion::TrainConfig;
use mobidiff_core::graph::LineConfig;
use mobidiff_core::mobility::{GridSpec, Hotspot, ResampleConfig, SynthWorldConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: PathsConfig,
    pub grid: GridConfig,
    pub resample: ResampleSection,
    pub line: LineSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub sample: SampleSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
}

/// Artifact locations; unset entries default to fixed names inside `--out`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub raw: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub embedding: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub losses: Option<PathBuf>,
    pub generated: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Artifact {
    Trajectories,
    Population,
    Embedding,
    Checkpoint,
    Losses,
    Generated,
    Report,
}

impl Artifact {
    pub fn file_name(self) -> &'static str {
        match self {
            Artifact::Trajectories => "trajectories.csv",
            Artifact::Population => "population.txt",
            Artifact::Embedding => "embedding.txt",
            Artifact::Checkpoint => "checkpoint.json",
            Artifact::Losses => "losses.csv",
            Artifact::Generated => "generated.csv",
            Artifact::Report => "report.json",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Artifact::Trajectories => "trajectory file",
            Artifact::Population => "population field",
            Artifact::Embedding => "embedding matrix",
            Artifact::Checkpoint => "checkpoint",
            Artifact::Losses => "loss curve",
            Artifact::Generated => "generated trajectories",
            Artifact::Report => "metric report",
        }
    }
}

impl PathsConfig {
    pub fn resolve(&self, artifact: Artifact, out: &Path) -> PathBuf {
        let explicit = match artifact {
            Artifact::Trajectories => &self.trajectories,
            Artifact::Population => &self.population,
            Artifact::Embedding => &self.embedding,
            Artifact::Checkpoint => &self.checkpoint,
            Artifact::Losses => &self.losses,
            Artifact::Generated => &self.generated,
            Artifact::Report => &self.report,
        };
        explicit.clone().unwrap_or_else(|| out.join(artifact.file_name()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_size_m: f64,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { origin_lat: 39.75, origin_lon: 116.15, cell_size_m: 1000.0, n_rows: 64, n_cols: 64 }
    }
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(self.origin_lat, self.origin_lon, self.cell_size_m, self.n_rows, self.n_cols)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleSection {
    pub slot_minutes: u32,
    pub min_records: usize,
}

impl Default for ResampleSection {
    fn default() -> Self {
        let d = ResampleConfig::default();
        ResampleSection { slot_minutes: d.slot_minutes, min_records: d.min_records }
    }
}

impl ResampleSection {
    pub fn core(&self) -> ResampleConfig {
        ResampleConfig { slot_minutes: self.slot_minutes, min_records: self.min_records }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSection {
    pub dim: usize,
    pub k_neighbors: usize,
    pub n_negative: usize,
    pub n_epochs: usize,
    pub learning_rate: f64,
    pub bandwidth_m: Option<f64>,
    pub samples_per_epoch: usize,
    /// Rescale the learned table to unit RMS before diffusion.
    pub normalize: bool,
}

impl Default for LineSection {
    fn default() -> Self {
        let d = LineConfig::default();
        LineSection {
            dim: d.dim,
            k_neighbors: d.k_neighbors,
            n_negative: d.n_negative,
            n_epochs: d.n_epochs,
            learning_rate: d.learning_rate,
            bandwidth_m: d.bandwidth_m,
            samples_per_epoch: d.samples_per_epoch,
            normalize: true,
        }
    }
}

impl LineSection {
    pub fn core(&self, seed: u64) -> LineConfig {
        LineConfig {
            dim: self.dim,
            k_neighbors: self.k_neighbors,
            n_negative: self.n_negative,
            n_epochs: self.n_epochs,
            learning_rate: self.learning_rate,
            bandwidth_m: self.bandwidth_m,
            samples_per_epoch: self.samples_per_epoch,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelPreset {
    #[default]
    Full,
    Toy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueSourceName {
    Population,
    Trajectory,
}

/// Denoiser architecture; unset keys come from the preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: ModelPreset,
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub n_layers: Option<usize>,
    pub ffn_hidden: Option<usize>,
    pub pop_hidden: Option<usize>,
    pub channels: Option<usize>,
    pub kernel_width: Option<usize>,
    pub slot_encoding: Option<bool>,
    pub value_source: Option<ValueSourceName>,
    pub decoder_out_scale: Option<f64>,
}

impl ModelSection {
    /// The architecture for `n_cells` cells; width follows the embedding
    /// unless set explicitly.
    pub fn core(&self, n_cells: usize, embedding_dim: usize) -> DenoiserConfig {
        let mut c = match self.preset {
            ModelPreset::Full => DenoiserConfig::full(n_cells),
            ModelPreset::Toy => DenoiserConfig::toy(n_cells),
        };
        c.d_model = self.d_model.unwrap_or(embedding_dim);
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        take!(n_heads, n_layers, ffn_hidden, pop_hidden, channels, kernel_width, slot_encoding, decoder_out_scale);
        if let Some(v) = self.value_source {
            c.value_source = match v {
                ValueSourceName::Population => ValueSource::Population,
                ValueSourceName::Trajectory => ValueSource::Trajectory,
            };
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lambda_pop: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub epochs: usize,
    pub ridge: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            lambda_pop: d.lambda_pop,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            diffusion_steps: d.diffusion_steps,
            beta_start: d.beta_start,
            beta_end: d.beta_end,
            epochs: d.epochs,
            ridge: d.ridge,
        }
    }
}

impl TrainSection {
    pub fn core(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lambda_pop: self.lambda_pop,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            diffusion_steps: self.diffusion_steps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            epochs: self.epochs,
            seed,
            ridge: self.ridge,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub count: usize,
    pub batch_size: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection { count: 200, batch_size: 64 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Side of the population heatmaps; defaults to the grid's row count.
    pub resolution: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HotspotConfig {
    pub slot_start: usize,
    pub slot_end: usize,
    pub cell: usize,
    pub weight: f64,
}

/// Synthetic world; unset keys come from the 16×16 toy city.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_cells_side: Option<usize>,
    pub n_users: Option<usize>,
    pub n_days: Option<usize>,
    pub n_slots: Option<usize>,
    pub hotspots: Option<Vec<HotspotConfig>>,
    pub home_bias: Option<f64>,
    pub stay_prob: Option<f64>,
    pub n_home_cells: Option<usize>,
}

impl SynthSection {
    /// The world on `grid`, whose rows and columns must both equal the side.
    pub fn core(&self, grid: &GridConfig, seed: u64) -> Result<SynthWorldConfig> {
        let mut c = SynthWorldConfig::toy(seed);
        c.n_cells_side = self.n_cells_side.unwrap_or(c.n_cells_side);
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        take!(n_users, n_days, n_slots, home_bias, stay_prob, n_home_cells);
        if let Some(hs) = &self.hotspots {
            c.hotspots = hs
                .iter()
                .map(|h| Hotspot { slot_start: h.slot_start, slot_end: h.slot_end, cell: h.cell, weight: h.weight })
                .collect();
        }
        if grid.n_rows != c.n_cells_side || grid.n_cols != c.n_cells_side {
            return Err(CliError::Config(format!(
                "synth world is {0}x{0} but [grid] is {1}x{2}",
                c.n_cells_side, grid.n_rows, grid.n_cols
            )));
        }
        c.cell_size_m = grid.cell_size_m;
        c.origin_lat = grid.origin_lat;
        c.origin_lon = grid.origin_lon;
        c.validate()?;
        Ok(c)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The master seed; commands that consume randomness require one.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| CliError::Config("a seed is required (--seed or `seed` in the config)".into()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Fixed offsets deriving per-stage seeds from the master seed.
pub mod seeds {
    pub fn synth(master: u64) -> u64 {
        master
    }

    pub fn line(master: u64) -> u64 {
        master.wrapping_add(0x1000)
    }

    pub fn init(master: u64) -> u64 {
        master.wrapping_add(0x2000)
    }

    pub fn train(master: u64) -> u64 {
        master.wrapping_add(0x3000)
    }

    pub fn sample(master: u64) -> u64 {
        master.wrapping_add(0x4000)
    }
}
