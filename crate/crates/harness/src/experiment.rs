//! The training loop.

use std::path::Path;
use std::time::Instant;

use boundloss::losses::{combined_with_components, hausdorff_loss, Components, LossResult};
use boundloss::metrics::{evaluate_case, EvalReport};
use boundloss::model::{save_checkpoint, AdamState, Gradients, PlateauSchedule, TinySegNet};
use boundloss::{threshold, DistanceMode, ProbMap};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{BoundaryTerm, ExperimentConfig};
use crate::data::{self, predict_case, Case, Prepared, Slice};
use crate::log::{EpochRow, MetricsLog};
use crate::{HarnessError, Result};

/// Largest tolerated gap between the total loss and its weighted parts.
pub const LINEARITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: MetricsLog,
    /// Evaluation of the best-validation-DSC checkpoint.
    pub report: EvalReport,
    pub best_epoch: usize,
    pub best: TinySegNet,
    pub last: TinySegNet,
}

pub fn distance_mode(boundary: BoundaryTerm) -> DistanceMode {
    match boundary {
        BoundaryTerm::Volume3d => DistanceMode::Full3d,
        _ => DistanceMode::PerSlice2d,
    }
}

/// Loss of one slice and its regional / boundary parts.
pub fn slice_loss(
    cfg: &ExperimentConfig,
    s: &ProbMap,
    item: &Slice,
    weights: (f64, f64),
) -> Result<(LossResult, Components)> {
    let (w_r, w_b) = weights;
    match cfg.boundary {
        BoundaryTerm::Hausdorff => {
            let regional = (w_r != 0.0)
                .then(|| cfg.regional.evaluate(s, &item.g, &item.phi, &cfg.hyper))
                .transpose()?;
            let hd = (w_b != 0.0)
                .then(|| hausdorff_loss(s, &item.g, cfg.hyper.beta, cfg.hyper.delta))
                .transpose()?;
            let parts = Components {
                regional: regional.as_ref().map_or(0.0, |r| r.value),
                boundary: hd.as_ref().map_or(0.0, |r| r.value),
            };
            let zero = || LossResult {
                value: 0.0,
                grad: boundloss::ScalarGrid::zeros(s.geometry().clone()),
            };
            let total = regional
                .unwrap_or_else(zero)
                .linear_combination(w_r, &hd.unwrap_or_else(zero), w_b)?;
            Ok((total, parts))
        }
        _ => Ok(combined_with_components(s, &item.g, &item.phi, cfg.regional, &cfg.hyper, weights)?),
    }
}

pub fn evaluate(net: &TinySegNet, cases: &[Case], delta: f64) -> Result<EvalReport> {
    let metrics = cases
        .iter()
        .map(|c| Ok(evaluate_case(&threshold(&predict_case(net, c)?, delta)?, &c.g)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_cases(metrics)?)
}

/// Train, validating after every epoch. When the config names an output
/// directory the log, `best.ckpt`, `last.ckpt` and `cases.csv` (per-case
/// metrics of the best checkpoint) are written there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let dataset = data::load(&cfg.data)?;
    let prepared = data::prepare(&dataset, distance_mode(cfg.boundary))?;
    run_prepared(cfg, &prepared)
}

/// [`run_experiment`] on already prepared data.
pub fn run_prepared(cfg: &ExperimentConfig, data: &Prepared) -> Result<RunOutcome> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(HarnessError::Config("training and validation splits must be non-empty".into()));
    }
    let out_dir = cfg.output_dir();
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let in_channels = data.train[0].image.channels();
    let mut net = TinySegNet::new(in_channels, cfg.seed)?;
    let mut adam = AdamState::with_lr(net.params().len(), cfg.train.lr);
    let mut plateau = PlateauSchedule::new(cfg.train.patience);
    let mut log = MetricsLog::default();
    let mut best: Option<(f64, usize, TinySegNet)> = None;
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 0..cfg.train.epochs {
        let weights = cfg.weights(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);

        let (mut total, mut regional, mut boundary) = (0.0, 0.0, 0.0);
        let mut batch_time = 0.0;
        let batches: Vec<&[usize]> = order.chunks(cfg.train.batch_size).collect();
        for (b, batch) in batches.iter().enumerate() {
            let started = Instant::now();
            let mut grads = Gradients::zeros(net.params().len());
            for &i in batch.iter() {
                let item = &data.train[i];
                let (pred, cache) = net.forward(&item.image)?;
                let (loss, parts) = slice_loss(cfg, &pred.foreground, item, weights)?;
                if !loss.value.is_finite() {
                    let row = diagnostic_row(epoch, &loss, parts, weights.1, adam.lr);
                    log.rows.push(row);
                    if let Some(dir) = &out_dir {
                        log.write(&dir.join("metrics.csv"))?;
                    }
                    return Err(HarnessError::NonFiniteLoss { epoch, batch: b });
                }
                let expected = weights.0 * parts.regional + weights.1 * parts.boundary;
                if (loss.value - expected).abs() > LINEARITY_TOLERANCE {
                    return Err(HarnessError::Linearity { total: loss.value, expected });
                }
                let scaled = loss.grad.map(|v| v / batch.len() as f64)?;
                net.backward_into(&cache, &scaled, &mut grads)?;
                total += loss.value;
                regional += parts.regional;
                boundary += parts.boundary;
            }
            net.adam_step(&mut adam, &grads)?;
            batch_time += started.elapsed().as_secs_f64();
        }

        let report = evaluate(&net, &data.val, cfg.hyper.delta)?;
        let n = data.train.len() as f64;
        let lr = adam.lr;
        log.push(EpochRow {
            epoch,
            loss_total: total / n,
            loss_regional: regional / n,
            loss_boundary: boundary / n,
            alpha: weights.1,
            val_dsc: report.mean_dsc,
            val_hd95: report.mean_hd95,
            lr,
            batch_ms: if cfg.wall_clock { 1e3 * batch_time / batches.len() as f64 } else { 0.0 },
        })?;
        if best.as_ref().is_none_or(|(d, _, _)| report.mean_dsc > *d) {
            best = Some((report.mean_dsc, epoch, net.clone()));
        }
        adam.lr = plateau.observe(report.mean_dsc, lr);
    }

    let (_, best_epoch, best_net) = best.expect("at least one epoch");
    let report = evaluate(&best_net, &data.val, cfg.hyper.delta)?;
    if let Some(dir) = &out_dir {
        log.write(&dir.join("metrics.csv"))?;
        save_checkpoint(&dir.join("best.ckpt"), &best_net, &AdamState::new(best_net.params().len()))?;
        save_checkpoint(&dir.join("last.ckpt"), &net, &adam)?;
        write_cases(&dir.join("cases.csv"), &report)?;
    }
    Ok(RunOutcome { log, report, best_epoch, best: best_net, last: net })
}

fn diagnostic_row(epoch: usize, loss: &LossResult, parts: Components, alpha: f64, lr: f64) -> EpochRow {
    EpochRow {
        epoch,
        loss_total: loss.value,
        loss_regional: parts.regional,
        loss_boundary: parts.boundary,
        alpha,
        val_dsc: f64::NAN,
        val_hd95: f64::NAN,
        lr,
        batch_ms: 0.0,
    }
}

/// Per-case metrics as `case,dsc,hd95,hd95_sentinel`.
pub fn write_cases(path: &Path, report: &EvalReport) -> Result<()> {
    let mut text = String::from("case,dsc,hd95,hd95_sentinel\n");
    for (i, c) in report.cases.iter().enumerate() {
        text.push_str(&format!("{i},{},{},{}\n", c.dsc, c.hd95.value, c.hd95.sentinel));
    }
    std::fs::write(path, text)?;
    Ok(())
}
