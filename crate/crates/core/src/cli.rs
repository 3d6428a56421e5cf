//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::checks::{equivariance_check, gradcheck};
use crate::error::{Error, Result};
use crate::geometry::{cell_center, grid_coordinates, rotate_instance, VoxelGrid};
use crate::grad::train::{train, validate};
use crate::io::{export_cube, generate, list_records, load_record, RunConfig, SyntheticSpec};
use crate::model::{evaluate_grid, DensityInstance, Model};
use crate::so3::RotationMatrix;

#[derive(Debug, Parser)]
#[command(
    name = "infgcn",
    version,
    about = "Equivariant density prediction on voxel grids"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for record-level parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Omit wall-clock fields so reports are byte-identical across runs.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on the configured dataset and write checkpoints and a JSON-lines log.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Partitioned full-grid NMAE per record.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Rotate atoms and resample the target grid before scoring.
        #[arg(long)]
        rotated: bool,
    },
    /// Predict one record and export prediction and error as CUBE files.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        record: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-branch rotation test at random parameters.
    EquivarianceCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        rotations: usize,
    },
    /// Finite-difference check of the training loss gradient.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        params: usize,
    },
    /// Spatial/spectral equivalence checks for graphon operators.
    GraphonDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 256)]
        nodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic Gaussian-mixture dataset.
    GenerateSynthetic {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        molecules: usize,
        #[arg(long, default_value_t = 24)]
        grid: usize,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Train { common }
            | Command::Eval { common, .. }
            | Command::Predict { common, .. }
            | Command::EquivarianceCheck { common, .. }
            | Command::Gradcheck { common, .. }
            | Command::GraphonDemo { common, .. }
            | Command::GenerateSynthetic { common, .. } => common,
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.optim.seed = s;
    }
    Ok(cfg)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn load_split(cfg: &RunConfig, ids: &[String]) -> Result<Vec<DensityInstance>> {
    let ids = if ids.is_empty() {
        list_records(&cfg.dataset)?
    } else {
        ids.to_vec()
    };
    ids.iter()
        .map(|id| load_record(&cfg.dataset, id)?.to_instance(cfg.model.cutoff))
        .collect()
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Runs a parsed command and returns its JSON report.
pub fn run(cli: Cli) -> Result<String> {
    let common = cli.command.common().clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &common))
}

pub fn run_from<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Parse {
        field: "arguments".into(),
        message: e.to_string(),
    })?;
    run(cli)
}

fn dispatch(command: Command, common: &Common) -> Result<String> {
    let cfg = load_config(common)?;
    match command {
        Command::Train { .. } => cmd_train(&cfg, common.deterministic),
        Command::Eval {
            checkpoint,
            rotated,
            ..
        } => cmd_eval(&cfg, &checkpoint, rotated),
        Command::Predict {
            checkpoint,
            record,
            out,
            ..
        } => cmd_predict(&cfg, &checkpoint, &record, &out),
        Command::EquivarianceCheck { rotations, .. } => cmd_equivariance(&cfg, rotations),
        Command::Gradcheck { params, .. } => cmd_gradcheck(&cfg, params),
        Command::GraphonDemo { nodes, out, .. } => cmd_graphon(nodes, out.as_deref()),
        Command::GenerateSynthetic {
            out,
            molecules,
            grid,
            ..
        } => {
            let spec = SyntheticSpec {
                molecules,
                grid,
                seed: cfg.seed,
                ..Default::default()
            };
            let records = generate(&spec)?;
            for r in &records {
                crate::io::save_record(&out, r)?;
            }
            to_json(&json!({ "written": records.len(), "dir": out }))
        }
    }
}

fn cmd_train(cfg: &RunConfig, deterministic: bool) -> Result<String> {
    let model = Model::new(cfg.model.clone())?;
    let train_set = load_split(cfg, &cfg.train)?;
    let val_set = if cfg.val.is_empty() {
        Vec::new()
    } else {
        load_split(cfg, &cfg.val)?
    };
    let mut params = model.init_params(cfg.seed);
    fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let log_path = cfg.output.join("train.jsonl");
    let mut log = Vec::new();
    let report = train(
        &model,
        &mut params,
        &train_set,
        &val_set,
        &cfg.optim,
        Some(&mut log),
    )?;
    if deterministic {
        let mut clean = Vec::new();
        for rec in &report.records {
            let mut r = rec.clone();
            r.wall_ms = 0;
            serde_json::to_writer(&mut clean, &r)?;
            clean
                .write_all(b"\n")
                .map_err(|e| Error::io(&log_path, e))?;
        }
        log = clean;
    }
    write_file(&log_path, log)?;
    let last = cfg.output.join("last.ckpt");
    model.save_checkpoint(&last, &params)?;
    let best = cfg.output.join("best.ckpt");
    model.save_checkpoint(&best, report.best_params.as_deref().unwrap_or(&params))?;
    let out = json!({
        "steps": report.records.len(),
        "final_loss": report.final_loss,
        "final_nmae_val": report.final_nmae_val,
        "best_nmae_val": report.best_nmae_val,
        "aborted": report.aborted,
        "checkpoint": best,
        "log": log_path,
        "wall_ms": if deterministic { 0 } else { report.wall_ms },
    });
    if let Some(msg) = &report.aborted {
        return Err(Error::NonFinite {
            op: format!(
                "training ({msg}); last finite parameters saved to {}",
                last.display()
            ),
        });
    }
    to_json(&out)
}

#[derive(Debug, Serialize)]
struct RecordScore {
    id: String,
    nmae: f64,
}

fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, rotated: bool) -> Result<String> {
    let (model, params) = Model::load_checkpoint(checkpoint)?;
    if model.config().cutoff != cfg.model.cutoff {
        return Err(Error::layout(
            "checkpoint cutoff differs from the run configuration",
        ));
    }
    let ids = if !cfg.test.is_empty() {
        &cfg.test
    } else {
        &cfg.val
    };
    let set = load_split(cfg, ids)?;
    let scores: Vec<Result<RecordScore>> = set
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let (graph, grid) = if rotated {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
                let r = RotationMatrix::random(&mut rng);
                rotate_instance(&inst.graph, &inst.grid, &r, cell_center(&inst.grid))?
            } else {
                (inst.graph.clone(), inst.grid.clone())
            };
            let (nmae, _) = evaluate_grid(&model, &params, &graph, &grid, cfg.optim.inf_sample)?;
            Ok(RecordScore {
                id: inst.id.clone(),
                nmae,
            })
        })
        .collect();
    let scores: Vec<RecordScore> = scores.into_iter().collect::<Result<_>>()?;
    let mean = scores.iter().map(|s| s.nmae).sum::<f64>() / scores.len().max(1) as f64;
    to_json(&json!({ "rotated": rotated, "records": scores, "mean_nmae": mean }))
}

fn cmd_predict(cfg: &RunConfig, checkpoint: &Path, record: &str, out: &Path) -> Result<String> {
    let (model, params) = Model::load_checkpoint(checkpoint)?;
    let rec = load_record(&cfg.dataset, record)?;
    let inst = rec.to_instance(model.config().cutoff)?;
    let (nmae, pred) = evaluate_grid(
        &model,
        &params,
        &inst.graph,
        &inst.grid,
        cfg.optim.inf_sample,
    )?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let pred_grid = VoxelGrid {
        values: pred.clone(),
        ..inst.grid.clone()
    };
    let err_grid = VoxelGrid {
        values: pred
            .iter()
            .zip(&inst.grid.values)
            .map(|(p, t)| p - t)
            .collect(),
        ..inst.grid.clone()
    };
    let pp = out.join(format!("{record}.pred.cube"));
    let ep = out.join(format!("{record}.error.cube"));
    export_cube(
        &pred_grid,
        &rec.meta.atom_type,
        &rec.meta.atom_coord,
        &pp,
        "predicted density",
    )?;
    export_cube(
        &err_grid,
        &rec.meta.atom_type,
        &rec.meta.atom_coord,
        &ep,
        "prediction minus target",
    )?;
    to_json(&json!({ "record": record, "nmae": nmae, "prediction": pp, "error": ep }))
}

/// A synthetic molecule shared by the check subcommands.
fn probe_instance(cfg: &RunConfig, grid: usize) -> Result<DensityInstance> {
    let rec = generate(&SyntheticSpec {
        molecules: 1,
        grid,
        seed: cfg.seed,
        ..Default::default()
    })?
    .remove(0);
    rec.to_instance(cfg.model.cutoff)
}

fn cmd_equivariance(cfg: &RunConfig, rotations: usize) -> Result<String> {
    let model = Model::new(cfg.model.clone())?;
    let mut params = model.init_params(cfg.seed);
    model.randomize_heads(&mut params, cfg.seed.wrapping_add(1), 0.1);
    let inst = probe_instance(cfg, 8)?;
    let queries = grid_coordinates(&inst.grid)?;
    let report = equivariance_check(&model, &params, &inst.graph, &queries, rotations, cfg.seed)?;
    to_json(&report)
}

fn cmd_gradcheck(cfg: &RunConfig, n: usize) -> Result<String> {
    let model = Model::new(cfg.model.clone())?;
    let mut params = model.init_params(cfg.seed);
    model.randomize_heads(&mut params, cfg.seed.wrapping_add(1), 0.1);
    let inst = probe_instance(cfg, 12)?;
    let report = gradcheck(&model, &params, &inst, 64, n, cfg.seed)?;
    to_json(&json!({
        "sampled": report.entries.len(),
        "max_rel_error": report.max_rel_error,
        "median_rel_error": report.median_rel_error,
        "tolerance": report.tolerance,
        "passed": report.passed,
    }))
}

fn cmd_graphon(nodes: usize, out: Option<&Path>) -> Result<String> {
    let report = graphon_lab::run_demo(nodes).map_err(|e| Error::Domain(e.to_string()))?;
    let text = to_json(&report)?;
    if let Some(dir) = out {
        write_file(&dir.join("graphon_report.json"), &text)?;
        write_file(&dir.join("eigenvalue_decay.csv"), report.decay_csv())?;
    }
    Ok(text)
}

/// Mean validation NMAE of a checkpoint; used by scripts that only need a number.
pub fn checkpoint_nmae(checkpoint: &Path, set: &[DensityInstance], batch: usize) -> Result<f64> {
    let (model, params) = Model::load_checkpoint(checkpoint)?;
    validate(&model, &params, set, batch)
}
