//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mobidiff_core::diffusion::SampleConfig;
use mobidiff_core::mobility::{synth_world, Trajectory};

use crate::config::{seeds, Artifact, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::{self, Checkpoint};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "mobidiff", version, about = "Population-aware trajectory diffusion pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resample a raw GPS CSV into trajectories and a population field.
    Ingest(Common),
    /// Learn location embeddings over the visited cells.
    Embed(Common),
    /// Train the denoiser.
    Train(TrainArgs),
    /// Sample trajectories from a trained checkpoint.
    Generate(Common),
    /// Compare generated trajectories against the real ones.
    Evaluate(EvalArgs),
    /// Write a seeded synthetic world.
    Synth(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for artifacts without an explicit path.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Overrides `train.lambda_pop`.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Population heatmap side (16, 32 or 64 on a 64×64 grid).
    #[arg(long)]
    pub resolution: Option<usize>,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn new(c: &Common) -> Result<Self> {
        let mut cfg = match &c.config {
            Some(p) => {
                if !p.exists() {
                    return Err(CliError::Missing { what: "config file", path: p.clone() });
                }
                RunConfig::load(p)?
            }
            None => RunConfig::default(),
        };
        if c.seed.is_some() {
            cfg.seed = c.seed;
        }
        Ok(Ctx { cfg, out: c.out.clone() })
    }

    fn path(&self, a: Artifact) -> PathBuf {
        self.cfg.paths.resolve(a, &self.out)
    }

    fn read(&self, a: Artifact) -> Result<(PathBuf, String)> {
        let p = self.path(a);
        let text = formats::read_text(&p, a.label())?;
        Ok((p, text))
    }

    fn trajectories(&self, a: Artifact) -> Result<Vec<Trajectory>> {
        let (p, text) = self.read(a)?;
        let (trajs, _) = formats::parse_trajectories(&p, &text)?;
        Ok(trajs)
    }

    fn write(&self, a: Artifact, text: &str) -> Result<PathBuf> {
        let p = self.path(a);
        formats::write_text(&p, text)?;
        Ok(p)
    }
}

fn n_slots(trajs: &[Trajectory], fallback: usize) -> usize {
    trajs.first().map_or(fallback, |t| t.cells.len())
}

fn ingest(c: &Common) -> Result<Vec<String>> {
    let ctx = Ctx::new(c)?;
    let raw = ctx.cfg.paths.raw.clone().ok_or_else(|| CliError::Config("paths.raw is required for ingest".into()))?;
    let text = formats::read_text(&raw, "raw trajectory CSV")?;
    let points = formats::parse_raw_csv(&raw, &text)?;
    let grid = ctx.cfg.grid.spec()?;
    let res = pipeline::ingest(&points, &grid, &ctx.cfg)?;
    let pop = pipeline::population(&res.trajectories, &grid)?;
    let slots = n_slots(&res.trajectories, 0);
    let t = ctx.write(Artifact::Trajectories, &formats::trajectories_to_csv(&res.trajectories, slots)?)?;
    let p = ctx.write(Artifact::Population, &formats::population_to_text(&pop))?;
    Ok(vec![
        format!(
            "users kept {} dropped {}; trajectories {}; days dropped {}; points outside grid {}",
            res.users_kept,
            res.users_dropped,
            res.trajectories.len(),
            res.days_dropped,
            res.points_outside
        ),
        format!("wrote {} and {}", t.display(), p.display()),
    ])
}

fn synth(c: &Common) -> Result<Vec<String>> {
    let ctx = Ctx::new(c)?;
    let seed = ctx.cfg.require_seed()?;
    let world = ctx.cfg.synth.core(&ctx.cfg.grid, seeds::synth(seed))?;
    let (trajs, pop) = synth_world(&world)?;
    let t = ctx.write(Artifact::Trajectories, &formats::trajectories_to_csv(&trajs, world.n_slots)?)?;
    let p = ctx.write(Artifact::Population, &formats::population_to_text(&pop))?;
    Ok(vec![format!("synthetic world: {} trajectories; wrote {} and {}", trajs.len(), t.display(), p.display())])
}

fn embed(c: &Common) -> Result<Vec<String>> {
    let ctx = Ctx::new(c)?;
    let seed = ctx.cfg.seed.unwrap_or(0);
    let trajs = ctx.trajectories(Artifact::Trajectories)?;
    let grid = ctx.cfg.grid.spec()?;
    let m = pipeline::embed(&trajs, &grid, &ctx.cfg, seed)?;
    let p = ctx.write(Artifact::Embedding, &formats::embedding_to_text(&m))?;
    Ok(vec![format!("embedding {}x{}; wrote {}", m.n_cells() + 1, m.dim(), p.display())])
}

fn train(a: &TrainArgs) -> Result<Vec<String>> {
    let mut ctx = Ctx::new(&a.common)?;
    if let Some(l) = a.lambda {
        ctx.cfg.train.lambda_pop = l;
    }
    let seed = ctx.cfg.require_seed()?;
    let trajs = ctx.trajectories(Artifact::Trajectories)?;
    let (pp, ptext) = ctx.read(Artifact::Population)?;
    let pop = formats::parse_population(&pp, &ptext)?;
    let (mp, mtext) = ctx.read(Artifact::Embedding)?;
    let m = formats::parse_embedding(&mp, &mtext)?;
    let rep = pipeline::train_model(&trajs, &pop, &m, &ctx.cfg, seed)?;
    let tcfg = ctx.cfg.train.core(seed);
    let ck = Checkpoint { params: rep.params, schedule: tcfg.schedule()?, ridge: tcfg.ridge };
    let cp = ctx.write(Artifact::Checkpoint, &formats::checkpoint_to_json(&ck))?;
    let lp = ctx.write(Artifact::Losses, &formats::losses_to_csv(&rep.losses))?;
    let last = rep.losses.last().map_or(f64::NAN, |l| l.loss_total);
    Ok(vec![format!(
        "trained {} steps (lambda {}), final loss {last}; wrote {} and {}",
        rep.losses.len(),
        tcfg.lambda_pop,
        cp.display(),
        lp.display()
    )])
}

fn generate(c: &Common) -> Result<Vec<String>> {
    let ctx = Ctx::new(c)?;
    let seed = ctx.cfg.require_seed()?;
    let (cp, ctext) = ctx.read(Artifact::Checkpoint)?;
    let ck = formats::parse_checkpoint(&cp, &ctext)?;
    let (pp, ptext) = ctx.read(Artifact::Population)?;
    let pop = formats::parse_population(&pp, &ptext)?;
    let (mp, mtext) = ctx.read(Artifact::Embedding)?;
    let m = formats::parse_embedding(&mp, &mtext)?;
    let scfg = SampleConfig { seed: seeds::sample(seed), batch_size: ctx.cfg.sample.batch_size, ridge: ck.ridge };
    let n = ctx.cfg.sample.count;
    let out = pipeline::generate(n, &pop, &ck.params, &m, &ck.schedule, &scfg, pipeline::thread_limit())?;
    let g = ctx.write(Artifact::Generated, &formats::trajectories_to_csv(&out.trajectories, pop.n_slots())?)?;
    Ok(vec![format!("generated {} trajectories; wrote {}", out.trajectories.len(), g.display())])
}

fn evaluate(a: &EvalArgs) -> Result<Vec<String>> {
    let ctx = Ctx::new(&a.common)?;
    let real = ctx.trajectories(Artifact::Trajectories)?;
    let gen = ctx.trajectories(Artifact::Generated)?;
    let grid = ctx.cfg.grid.spec()?;
    let res = a.resolution.or(ctx.cfg.eval.resolution).unwrap_or(grid.n_rows);
    let r = pipeline::evaluate(&real, &gen, &grid, res)?;
    let rp = ctx.write(Artifact::Report, &formats::report_to_json(&r))?;
    let dir = rp.parent().map(Path::to_path_buf).unwrap_or_default();
    for (side, m) in [("real", &r.population.real), ("generated", &r.population.generated)] {
        let p = dir.join(format!("heatmap_{res}_{side}.txt"));
        formats::write_text(&p, &formats::matrix_to_text(m, &[]))?;
    }
    Ok(vec![format!(
        "popdist_jsd {} od_cosine {}; wrote {}",
        r.popdist_jsd,
        r.od_cosine,
        rp.display()
    )])
}

pub fn run(cli: &Cli) -> Result<Vec<String>> {
    match &cli.command {
        Command::Ingest(c) => ingest(c),
        Command::Embed(c) => embed(c),
        Command::Train(a) => train(a),
        Command::Generate(c) => generate(c),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(c) => synth(c),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match run(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.one_line());
            1
        }
    }
}
