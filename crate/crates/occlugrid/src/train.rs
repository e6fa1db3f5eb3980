//! The training loop: batched Adam with per-epoch evaluation,
//! checkpointing, and a plain-text loss log.
//!
//! Determinism contract: with a fixed config the whole run is bitwise
//! reproducible at any thread count. Batches run sample-parallel, but
//! gradients are reduced in sample order, and the epoch shuffle is a
//! pure function of (run seed, epoch). Resuming from a checkpoint
//! therefore continues the exact trajectory the uninterrupted run would
//! have taken.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use occlugrid_core::metrics::{MetricReport, Support};
use occlugrid_core::net::LossValues;
use occlugrid_core::optim::{adam_step, AdamConfig, AdamState};
use occlugrid_core::params::GradStore;
use occlugrid_core::rng::{scene_rng, uniform_index};

use crate::checkpoint::{load as load_checkpoint, save as save_checkpoint};
use crate::config::{train_fingerprint, RunConfig};
use crate::data::{load_samples, split_samples};
use crate::errors::{CliError, CliResult};
use crate::evaluate::{evaluate, overall_summary};
use crate::model::ModelDriver;

pub struct EpochRecord {
    pub epoch: u64,
    /// Mean per-sample training loss.
    pub loss: LossValues,
    /// Metrics on the held-out split.
    pub report: MetricReport,
    pub line: String,
}

pub struct TrainSummary {
    pub epochs_run: u64,
    pub best_acc: f64,
    pub records: Vec<EpochRecord>,
    pub final_path: PathBuf,
}

fn epoch_line(epoch: u64, loss: &LossValues, report: &MetricReport) -> String {
    format!(
        "epoch {epoch}, L_total {:.6}, L_global {:.6}, L_mask {:.6}, L_occ {:.6}, eval {}",
        loss.total,
        loss.global,
        loss.mask,
        loss.occ,
        overall_summary(report)
    )
}

/// In-place Fisher-Yates keyed by (run seed, epoch), so a resumed run
/// replays the same order without carrying generator state.
fn shuffle_indices(indices: &mut [usize], seed: u64, epoch: u64) {
    let mut rng = scene_rng(seed ^ epoch.wrapping_mul(0x9E3779B97F4A7C15));
    for i in (1..indices.len()).rev() {
        let j = uniform_index(&mut rng, i + 1);
        indices.swap(i, j);
    }
}

fn numbered_checkpoint(dir: &Path, epoch: u64) -> PathBuf {
    dir.join(format!("ckpt-{epoch:04}.bin"))
}

/// Runs (or resumes) training per `cfg`. Every epoch line goes to the
/// log file in the output directory and to `on_line`.
pub fn run(
    cfg: &RunConfig,
    resume: Option<&Path>,
    mut on_line: impl FnMut(&str),
) -> CliResult<TrainSummary> {
    cfg.validate()?;
    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(CliError::io(&out_dir))?;

    let driver = ModelDriver::new(cfg.model, cfg.net.to_net())?;
    let (train_scenes, eval_scenes) = split_samples(load_samples(cfg)?, cfg.eval_stride())?;
    let train = driver.prepare(train_scenes)?;
    let eval = driver.prepare(eval_scenes)?;
    let support = if cfg.eval_all_cells { Support::AllCells } else { Support::MaskedOnly };

    let fingerprint = train_fingerprint(cfg);
    let (mut params, mut adam, start_epoch, mut best_acc) = match resume {
        None => {
            let params = driver.init_params(cfg.seed);
            let adam = AdamState::zeros_like(&params);
            (params, adam, 0u64, f64::NAN)
        }
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.fingerprint != fingerprint {
                return Err(CliError::Resume(format!(
                    "{} was written under a different training configuration; \
                     model, net, data, batch size, lr, split, and seed must match",
                    path.display()
                )));
            }
            (ckpt.params, ckpt.adam, ckpt.epoch, ckpt.best_acc)
        }
    };

    let log_path = out_dir.join("train.log");
    let mut log = OpenOptions::new()
        .create(true)
        .append(resume.is_some())
        .truncate(resume.is_none())
        .write(true)
        .open(&log_path)
        .map_err(CliError::io(&log_path))?;

    let opt = AdamConfig::with_lr(cfg.lr);
    let mut records = Vec::new();
    let mut epochs_run = start_epoch;

    for epoch in start_epoch + 1..=cfg.epochs {
        // Fresh identity order every epoch: the visiting order is then a pure
        // function of (seed, epoch, n), so a resumed run replays it exactly.
        let mut indices: Vec<usize> = (0..train.len()).collect();
        shuffle_indices(&mut indices, cfg.seed, epoch);
        let mut loss_sum = LossValues { total: 0.0, global: 0.0, mask: 0.0, occ: 0.0 };
        for batch in indices.chunks(cfg.batch_size) {
            let results: Vec<(LossValues, GradStore)> = batch
                .par_iter()
                .map(|&i| driver.loss_grads(&params, &train[i]))
                .collect::<CliResult<_>>()?;
            let mut grads = GradStore::zeros_like(&params);
            for (lv, g) in &results {
                grads.add_assign(g);
                loss_sum.total += lv.total;
                loss_sum.global += lv.global;
                loss_sum.mask += lv.mask;
                loss_sum.occ += lv.occ;
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &grads, &mut adam, &opt);
        }
        let n = train.len() as f64;
        let loss = LossValues {
            total: loss_sum.total / n,
            global: loss_sum.global / n,
            mask: loss_sum.mask / n,
            occ: loss_sum.occ / n,
        };

        let report = evaluate(&driver, &params, &eval, support)?;
        let line = epoch_line(epoch, &loss, &report);
        writeln!(log, "{line}").map_err(CliError::io(&log_path))?;
        on_line(&line);
        epochs_run = epoch;

        // Best-tracking first, so a numbered checkpoint carries the
        // best-so-far including this epoch; resuming from it then
        // replays the uninterrupted run exactly.
        let acc = report.overall.accuracy;
        if let Some(a) = acc {
            if best_acc.is_nan() || a > best_acc {
                best_acc = a;
                save_checkpoint(&out_dir.join("best.bin"), cfg, epoch, best_acc, &params, &adam)?;
            }
        }
        if epoch % cfg.checkpoint_every == 0 {
            save_checkpoint(&numbered_checkpoint(&out_dir, epoch), cfg, epoch, best_acc, &params, &adam)?;
        }
        records.push(EpochRecord { epoch, loss, report, line });

        if let (Some(target), Some(a)) = (cfg.stop_at_acc, acc) {
            if a >= target {
                break;
            }
        }
    }

    let final_path = out_dir.join("final.bin");
    save_checkpoint(&final_path, cfg, epochs_run, best_acc, &params, &adam)?;

    Ok(TrainSummary { epochs_run, best_acc, records, final_path })
}
