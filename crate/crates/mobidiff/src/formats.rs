//! On-disk artifact formats.
//!
//! Every writer is deterministic: identical values give identical bytes.
//! Reals are printed in Rust's shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mobidiff_core::autodiff::{Array, ParamStore};
use mobidiff_core::denoiser::{DenoiserConfig, DenoiserParams, ValueSource};
use mobidiff_core::diffusion::{make_schedule, LossRecord, NoiseSchedule};
use mobidiff_core::graph::EmbeddingMatrix;
use mobidiff_core::metrics::MetricReport;
use mobidiff_core::mobility::{PopulationField, RawPoint, Trajectory};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, Result};

pub fn read_text(path: &Path, what: &'static str) -> Result<String> {
    if !path.exists() {
        return Err(CliError::Missing { what, path: path.to_path_buf() });
    }
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Raw GPS points, `user_id,timestamp,lat,lon` with a header row.
pub fn parse_raw_csv(path: &Path, text: &str) -> Result<Vec<RawPoint>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::parse(path, 1, e))?.clone();
    let want = ["user_id", "timestamp", "lat", "lon"];
    if header.len() != 4 || header.iter().zip(want).any(|(h, w)| h != w) {
        return Err(CliError::parse(path, 1, format!("header must be {}", want.join(","))));
    }
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            CliError::parse(path, line, e)
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 4 {
            return Err(CliError::parse(path, line, format!("expected 4 fields, found {}", rec.len())));
        }
        let field = |i: usize| rec.get(i).unwrap_or("");
        let ts: i64 = field(1).parse().map_err(|_| CliError::parse(path, line, "timestamp must be integer seconds"))?;
        let lat: f64 = field(2).parse().map_err(|_| CliError::parse(path, line, "lat is not a number"))?;
        let lon: f64 = field(3).parse().map_err(|_| CliError::parse(path, line, "lon is not a number"))?;
        points.push(RawPoint::new(field(0), ts, lat, lon).map_err(|e| CliError::parse(path, line, e))?);
    }
    if points.is_empty() {
        return Err(CliError::Input("no usable records".into()));
    }
    Ok(points)
}

pub fn trajectories_to_csv(trajs: &[Trajectory], n_slots: usize) -> Result<String> {
    let mut out = String::from("user_id,day_index");
    for n in 0..n_slots {
        let _ = write!(out, ",c_{n}");
    }
    out.push('\n');
    for t in trajs {
        if t.cells.len() != n_slots {
            return Err(CliError::Input(format!("trajectory {} has {} slots, expected {n_slots}", t.user_id, t.cells.len())));
        }
        if t.user_id.contains([',', '\n', '"']) {
            return Err(CliError::Input(format!("user id {:?} contains a delimiter", t.user_id)));
        }
        let _ = write!(out, "{},{}", t.user_id, t.day_index);
        for c in &t.cells {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Returns the trajectories and the slot count named by the header.
pub fn parse_trajectories(path: &Path, text: &str) -> Result<(Vec<Trajectory>, usize)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| CliError::parse(path, 1, "missing header"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "user_id" || cols[1] != "day_index" {
        return Err(CliError::parse(path, 1, "header must start with user_id,day_index"));
    }
    for (n, c) in cols[2..].iter().enumerate() {
        if *c != format!("c_{n}") {
            return Err(CliError::parse(path, 1, format!("column {} should be c_{n}", n + 2)));
        }
    }
    let n_slots = cols.len() - 2;
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(CliError::parse(path, i + 1, format!("expected {} fields, found {}", cols.len(), f.len())));
        }
        let day_index = f[1].parse().map_err(|_| CliError::parse(path, i + 1, "day_index is not an integer"))?;
        let cells = f[2..]
            .iter()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| CliError::parse(path, i + 1, "cell ids must be non-negative integers"))?;
        out.push(Trajectory { user_id: f[0].to_string(), day_index, cells });
    }
    Ok((out, n_slots))
}

/// Space-separated rows, optionally preceded by `# `-prefixed header lines.
pub fn matrix_to_text(m: &Array, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

/// Returns the matrix and its header lines (without the `# ` prefix).
pub fn parse_matrix(path: &Path, text: &str) -> Result<(Array, Vec<String>)> {
    let mut header = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(h) = line.strip_prefix('#') {
            header.push(h.trim().to_string());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| CliError::parse(path, i + 1, "expected space-separated reals"))?;
        if rows.first().is_some_and(|f| f.len() != row.len()) {
            return Err(CliError::parse(path, i + 1, "ragged matrix row"));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::parse(path, 1, "empty matrix"));
    }
    Ok((Array::from_rows(&rows)?, header))
}

pub fn population_to_text(p: &PopulationField) -> String {
    matrix_to_text(p.as_array(), &[])
}

pub fn parse_population(path: &Path, text: &str) -> Result<PopulationField> {
    Ok(PopulationField::from_array(parse_matrix(path, text)?.0)?)
}

pub fn embedding_to_text(m: &EmbeddingMatrix) -> String {
    matrix_to_text(m.as_array(), &[format!("embedding n_cells={} d={} row0=reserved", m.n_cells(), m.dim())])
}

pub fn parse_embedding(path: &Path, text: &str) -> Result<EmbeddingMatrix> {
    Ok(EmbeddingMatrix::from_array(parse_matrix(path, text)?.0)?)
}

pub fn losses_to_csv(losses: &[LossRecord]) -> String {
    let mut out = String::from("step,loss_ind,loss_pop,loss_total\n");
    for l in losses {
        let pop = l.loss_pop.map(|v| format!("{v}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", l.step, l.loss_ind, pop, l.loss_total);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModelHeader {
    d_model: usize,
    n_heads: usize,
    n_layers: usize,
    ffn_hidden: usize,
    pop_hidden: usize,
    channels: usize,
    kernel_width: usize,
    n_cells: usize,
    slot_encoding: bool,
    value_source: String,
    decoder_out_scale: f64,
    layer_norm_eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ScheduleHeader {
    steps: usize,
    beta_start: f64,
    beta_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    model: ModelHeader,
    schedule: ScheduleHeader,
    ridge: Option<f64>,
    params: Vec<ParamEntry>,
}

const CHECKPOINT_FORMAT: &str = "mobidiff-checkpoint/1";

/// A trained denoiser with the schedule and recovery ridge it was trained with.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: DenoiserParams,
    pub schedule: NoiseSchedule,
    pub ridge: Option<f64>,
}

pub fn checkpoint_to_json(ck: &Checkpoint) -> String {
    let c = ck.params.config();
    let store = ck.params.store();
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        model: ModelHeader {
            d_model: c.d_model,
            n_heads: c.n_heads,
            n_layers: c.n_layers,
            ffn_hidden: c.ffn_hidden,
            pop_hidden: c.pop_hidden,
            channels: c.channels,
            kernel_width: c.kernel_width,
            n_cells: c.n_cells,
            slot_encoding: c.slot_encoding,
            value_source: match c.value_source {
                ValueSource::Population => "population".into(),
                ValueSource::Trajectory => "trajectory".into(),
            },
            decoder_out_scale: c.decoder_out_scale,
            layer_norm_eps: c.layer_norm_eps,
        },
        schedule: ScheduleHeader {
            steps: ck.schedule.steps(),
            beta_start: ck.schedule.beta_start(),
            beta_end: ck.schedule.beta_end(),
        },
        ridge: ck.ridge,
        params: store
            .ids()
            .map(|id| {
                let v = store.value(id);
                ParamEntry { name: store.name(id).to_string(), shape: v.shape().to_vec(), data: v.data().to_vec() }
            })
            .collect(),
    };
    let mut s = serde_json::to_string(&file).expect("checkpoint serializes");
    s.push('\n');
    s
}

pub fn parse_checkpoint(path: &Path, text: &str) -> Result<Checkpoint> {
    let f: CheckpointFile =
        serde_json::from_str(text).map_err(|e| CliError::parse(path, e.line(), e.to_string()))?;
    if f.format != CHECKPOINT_FORMAT {
        return Err(CliError::parse(path, 1, format!("unsupported checkpoint format {:?}", f.format)));
    }
    let m = f.model;
    let cfg = DenoiserConfig {
        d_model: m.d_model,
        n_heads: m.n_heads,
        n_layers: m.n_layers,
        ffn_hidden: m.ffn_hidden,
        pop_hidden: m.pop_hidden,
        channels: m.channels,
        kernel_width: m.kernel_width,
        n_cells: m.n_cells,
        slot_encoding: m.slot_encoding,
        value_source: match m.value_source.as_str() {
            "population" => ValueSource::Population,
            "trajectory" => ValueSource::Trajectory,
            other => return Err(CliError::parse(path, 1, format!("unknown value source {other:?}"))),
        },
        decoder_out_scale: m.decoder_out_scale,
        layer_norm_eps: m.layer_norm_eps,
    };
    let mut store = ParamStore::new();
    for p in f.params {
        store.insert(&p.name, Array::new(&p.shape, p.data)?)?;
    }
    Ok(Checkpoint {
        params: DenoiserParams::from_store(cfg, store)?,
        schedule: make_schedule(f.schedule.steps, f.schedule.beta_start, f.schedule.beta_end)?,
        ridge: f.ridge,
    })
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, |x| json!(x))
}

/// The eight scores under fixed keys plus binning metadata.
pub fn report_to_json(r: &MetricReport) -> String {
    let b = &r.binning;
    let v = json!({
        "distance_jsd": opt(r.distance_jsd),
        "radius_jsd": opt(r.radius_jsd),
        "duration_jsd": opt(r.duration_jsd),
        "dailyloc_jsd": opt(r.dailyloc_jsd),
        "grank_jsd": opt(r.grank_jsd),
        "irank_jsd": opt(r.irank_jsd),
        "popdist_jsd": r.popdist_jsd,
        "od_cosine": r.od_cosine,
        "od_zero_matrix": r.od_zero_matrix,
        "binning": {
            "distance_km_edges": b.distance_km,
            "radius_km_edges": b.radius_km,
            "duration_h_edges": b.duration_h,
            "dailyloc_edges": b.daily_loc,
            "slot_hours": b.slot_hours,
            "grank_k": b.grank_k,
            "irank_k": b.irank_k,
            "popdist_resolution": r.population.resolution,
            "log": "natural",
            "rank_ties": "ascending cell id",
        },
    });
    let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
    s.push('\n');
    s
}
