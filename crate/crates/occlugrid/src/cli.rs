//! Command-line surface: argument grammar and the verb implementations.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use occlugrid_core::grid::Ogm;
use occlugrid_core::metrics::aggregate;
use occlugrid_core::scene::{BuildConfig, SceneSample};
use occlugrid_core::synth::{synth_scene, SynthConfig};

use crate::checkpoint::{self, Checkpoint};
use crate::config::{DataSource, InputSubset, ModelKind, RunConfig};
use crate::data::load_samples;
use crate::dataset::{read_dataset, write_dataset};
use crate::errors::{CliError, CliResult};
use crate::evaluate::{evaluate, overall_summary, report_json, score_sample};
use crate::model::{ModelDriver, RunSample};
use crate::render::write_panels;
use crate::train;

#[derive(Parser, Debug)]
#[command(
    name = "occlugrid",
    version,
    about = "Occupancy grid inference behind occlusions: data generation, training, evaluation, rendering"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
    /// JSON run configuration file
    #[arg(long, global = true, value_name = "path")]
    pub config: Option<PathBuf>,
    /// Run seed override; for infer and render, the sample id to use
    #[arg(long, global = true, value_name = "u64")]
    pub seed: Option<u64>,
    /// Output directory override
    #[arg(long, global = true, value_name = "dir")]
    pub out: Option<PathBuf>,
    /// Model kind override: vector or baseline
    #[arg(long, global = true, value_name = "kind")]
    pub model: Option<String>,
    /// Input subset: traj, traj+occ, traj+env, or all.
    /// The ablate command also takes a comma-separated list
    #[arg(long, global = true, value_name = "set")]
    pub ablate: Option<String>,
    /// Worker thread count; the OCCLUGRID_THREADS env var wins over this
    #[arg(long, global = true, value_name = "n")]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Materialize the configured data source as a dataset file
    Gen,
    /// Train a model from the config; pass a checkpoint path to resume
    Train {
        #[arg(value_name = "checkpoint")]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint over a dataset file and emit the JSON report
    Eval {
        checkpoint: PathBuf,
        dataset: PathBuf,
    },
    /// Run one sample through a checkpoint and write its predicted grid
    Infer {
        checkpoint: PathBuf,
        #[arg(value_name = "dataset")]
        dataset: Option<PathBuf>,
    },
    /// Write one sample's four grid panels as PGM images
    Render {
        checkpoint: PathBuf,
        #[arg(value_name = "dataset")]
        dataset: Option<PathBuf>,
    },
    /// Train and evaluate one model per input subset
    Ablate,
}

/// Resolves the worker count: env override first, then the flag.
pub fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    let env = match std::env::var("OCCLUGRID_THREADS") {
        Ok(s) => Some(s.parse::<usize>().map_err(|_| {
            CliError::Config(format!("OCCLUGRID_THREADS must be a positive integer, got {s:?}"))
        })?),
        Err(_) => None,
    };
    let n = env.or(flag);
    if n == Some(0) {
        return Err(CliError::Usage("thread count must be at least 1".into()));
    }
    Ok(n)
}

/// Applies the thread setting and dispatches the verb.
pub fn execute(cli: Cli) -> CliResult<()> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match &cli.cmd {
        Command::Gen => cmd_gen(&cli),
        Command::Train { resume } => cmd_train(&cli, resume.clone()),
        Command::Eval { checkpoint, dataset } => cmd_eval(&cli, checkpoint, dataset),
        Command::Infer { checkpoint, dataset } => cmd_infer(&cli, checkpoint, dataset.as_deref()),
        Command::Render { checkpoint, dataset } => cmd_render(&cli, checkpoint, dataset.as_deref()),
        Command::Ablate => cmd_ablate(&cli),
    }
}

fn parse_model(s: &str) -> CliResult<ModelKind> {
    ModelKind::parse(s)
        .ok_or_else(|| CliError::Usage(format!("--model must be vector or baseline, got {s:?}")))
}

/// Loads the config file and folds in the command-line overrides.
fn require_config(cli: &Cli) -> CliResult<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("this command needs --config <path>".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.display().to_string();
    }
    if let Some(model) = &cli.model {
        cfg.model = parse_model(model)?;
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn cmd_gen(cli: &Cli) -> CliResult<()> {
    let cfg = require_config(cli)?;
    let out_dir = PathBuf::from(&cfg.out_dir);
    ensure_dir(&out_dir)?;
    let samples = load_samples(&cfg)?;
    if samples.is_empty() {
        return Err(CliError::Data("the configured data source yields no samples".into()));
    }
    let path = out_dir.join("dataset.jsonl");
    write_dataset(&path, &samples)?;
    println!("wrote {} samples to {}", samples.len(), path.display());
    Ok(())
}

fn cmd_train(cli: &Cli, resume: Option<PathBuf>) -> CliResult<()> {
    let cfg = require_config(cli)?;
    let summary = train::run(&cfg, resume.as_deref(), |line| println!("{line}"))?;
    let best = if summary.best_acc.is_nan() {
        "n/a".to_string()
    } else {
        format!("{:.6}", summary.best_acc)
    };
    println!(
        "finished after epoch {}, best eval overall accuracy {best}, final checkpoint {}",
        summary.epochs_run,
        summary.final_path.display()
    );
    Ok(())
}

/// A single subset name, for commands where a list makes no sense.
fn parse_single_subset(s: &str) -> CliResult<InputSubset> {
    InputSubset::parse(s).ok_or_else(|| {
        CliError::Usage(format!("--ablate must be one of traj, traj+occ, traj+env, all; got {s:?}"))
    })
}

/// Rejects an `--ablate` request that contradicts what the checkpoint
/// was trained with; input admission is baked into the weights.
fn check_subset(ckpt: &Checkpoint, requested: InputSubset) -> CliResult<()> {
    let trained = InputSubset::of(&ckpt.config.net);
    if requested != trained {
        return Err(CliError::Ablate(format!(
            "checkpoint was trained with inputs {}, requested {}",
            trained.label(),
            requested.label()
        )));
    }
    Ok(())
}

fn check_model_flag(cli: &Cli, ckpt: &Checkpoint) -> CliResult<()> {
    if let Some(m) = &cli.model {
        if parse_model(m)? != ckpt.model {
            return Err(CliError::Usage(format!(
                "--model {m} contradicts the checkpoint, which holds a {} model",
                ckpt.model.name()
            )));
        }
    }
    Ok(())
}

fn driver_for(ckpt: &Checkpoint) -> CliResult<ModelDriver> {
    ModelDriver::new(ckpt.model, ckpt.config.net.to_net())
}

fn cmd_eval(cli: &Cli, checkpoint: &Path, dataset: &Path) -> CliResult<()> {
    let ckpt = checkpoint::load(checkpoint)?;
    check_model_flag(cli, &ckpt)?;
    if let Some(s) = &cli.ablate {
        check_subset(&ckpt, parse_single_subset(s)?)?;
    }
    let driver = driver_for(&ckpt)?;
    let samples = driver.prepare(read_dataset(dataset)?)?;
    let support = eval_support(&ckpt.config);
    let report = evaluate(&driver, &ckpt.params, &samples, support)?;
    let json = report_json(&report);
    print!("{json}");
    if let Some(out) = &cli.out {
        ensure_dir(out)?;
        let path = out.join("report.json");
        std::fs::write(&path, &json).map_err(CliError::io(&path))?;
    }
    Ok(())
}

fn eval_support(cfg: &RunConfig) -> occlugrid_core::metrics::Support {
    if cfg.eval_all_cells {
        occlugrid_core::metrics::Support::AllCells
    } else {
        occlugrid_core::metrics::Support::MaskedOnly
    }
}

/// Picks the sample for `infer` and `render`: an explicit dataset file
/// wins, then the checkpoint's own data source. Synthetic sources can
/// produce any seed directly.
fn resolve_sample(cfg: &RunConfig, dataset: Option<&Path>, id: u64) -> CliResult<SceneSample> {
    let samples = match dataset {
        Some(path) => read_dataset(path)?,
        None => match &cfg.data {
            DataSource::Synthetic { .. } => {
                let synth = SynthConfig {
                    build: BuildConfig {
                        grid: cfg.net.to_net().grid_spec(),
                        ..BuildConfig::default()
                    },
                    ..SynthConfig::default()
                };
                return Ok(synth_scene(id, &synth)?);
            }
            _ => load_samples(cfg)?,
        },
    };
    samples
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| CliError::Data(format!("no sample with id {id} in the data source")))
}

fn forward_one(
    ckpt: &Checkpoint,
    dataset: Option<&Path>,
    id: u64,
) -> CliResult<(ModelDriver, RunSample, Ogm)> {
    let driver = driver_for(ckpt)?;
    let scene = resolve_sample(&ckpt.config, dataset, id)?;
    let mut prepared = driver.prepare(vec![scene])?;
    let rs = prepared.pop().expect("one prepared sample");
    let pred = driver.forward(&ckpt.params, &rs)?;
    Ok((driver, rs, pred))
}

#[derive(Serialize)]
struct PredictionDto<'a> {
    id: u64,
    height: usize,
    width: usize,
    resolution: f64,
    probabilities: &'a [f64],
}

fn cmd_infer(cli: &Cli, checkpoint: &Path, dataset: Option<&Path>) -> CliResult<()> {
    let ckpt = checkpoint::load(checkpoint)?;
    check_model_flag(cli, &ckpt)?;
    if let Some(s) = &cli.ablate {
        check_subset(&ckpt, parse_single_subset(s)?)?;
    }
    let id = cli.seed.unwrap_or(0);
    let (driver, rs, pred) = forward_one(&ckpt, dataset, id)?;

    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&ckpt.config.out_dir));
    ensure_dir(&out_dir)?;
    let path = out_dir.join(format!("pred-{id:04}.json"));
    let dto = PredictionDto {
        id,
        height: pred.height,
        width: pred.width,
        resolution: pred.resolution,
        probabilities: &pred.cells,
    };
    let mut json = serde_json::to_string(&dto).expect("prediction serialization");
    json.push('\n');
    std::fs::write(&path, json).map_err(CliError::io(&path))?;

    let metrics = score_sample(&driver, &ckpt.params, &rs, eval_support(&ckpt.config))?;
    let report = aggregate(&[metrics]).expect("one sample aggregates");
    println!("sample {id}: {}; prediction written to {}", overall_summary(&report), path.display());
    Ok(())
}

fn cmd_render(cli: &Cli, checkpoint: &Path, dataset: Option<&Path>) -> CliResult<()> {
    let ckpt = checkpoint::load(checkpoint)?;
    check_model_flag(cli, &ckpt)?;
    let id = cli.seed.unwrap_or(0);
    let (_, rs, pred) = forward_one(&ckpt, dataset, id)?;

    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&ckpt.config.out_dir));
    ensure_dir(&out_dir)?;
    let stem = format!("sample-{id:04}");
    let paths = write_panels(&out_dir, &stem, &rs.scene.mask, &pred, &rs.scene.ground_truth)?;
    for p in &paths {
        println!("{}", p.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    inputs: &'static str,
    report: crate::evaluate::ReportDto,
}

fn cmd_ablate(cli: &Cli) -> CliResult<()> {
    let base = require_config(cli)?;
    let rows: Vec<InputSubset> = match &cli.ablate {
        None => InputSubset::ROWS.to_vec(),
        Some(list) => list
            .split(',')
            .map(|s| parse_single_subset(s.trim()))
            .collect::<CliResult<_>>()?,
    };
    let base_out = PathBuf::from(&base.out_dir);
    ensure_dir(&base_out)?;

    let mut results = Vec::new();
    for row in rows {
        let mut cfg = base.clone();
        row.apply(&mut cfg.net);
        cfg.out_dir = base_out.join(row.label()).display().to_string();
        let summary = train::run(&cfg, None, |_| {})?;
        let record = summary
            .records
            .last()
            .ok_or_else(|| CliError::Data("training ran no epochs".into()))?;
        println!("{}: {}", row.label(), overall_summary(&record.report));
        results.push(AblationRow {
            inputs: row.label(),
            report: crate::evaluate::ReportDto::from(&record.report),
        });
    }
    let path = base_out.join("ablation.json");
    let mut json = serde_json::to_string_pretty(&results).expect("ablation serialization");
    json.push('\n');
    std::fs::write(&path, json).map_err(CliError::io(&path))?;
    println!("ablation table written to {}", path.display());
    Ok(())
}
