//! Per-batch training-step timing of GDL alone, with the boundary loss and
//! with the Hausdorff loss.
//!
//! All variants train their own copy of one initial net on one fixed batch.
//! Steps are interleaved (the variant order rotates every round) so that
//! drifts in machine load hit every variant alike. The boundary variant
//! reads precomputed level-set maps; the Hausdorff variant computes both of
//! its distance maps inside every step, as its second map depends on the
//! current prediction.

use std::time::Instant;

use boundloss::losses::{boundary_loss, gdl, hausdorff_loss, LossResult};
use boundloss::model::{AdamState, Gradients, TinySegNet};
use boundloss::DistanceMode;

use crate::data::{self, Slice};
use crate::experiment::LINEARITY_TOLERANCE;
use crate::{ExperimentConfig, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Gdl,
    GdlBoundary,
    GdlHausdorff,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Gdl, Variant::GdlBoundary, Variant::GdlHausdorff];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Gdl => "gdl",
            Variant::GdlBoundary => "gdl+boundary",
            Variant::GdlHausdorff => "gdl+hausdorff",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub variant: Variant,
    pub batch_size: usize,
    /// Milliseconds per timed batch.
    pub samples: Vec<f64>,
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn row(&self, variant: Variant, batch_size: usize) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.variant == variant && r.batch_size == batch_size)
    }

    /// `variant,batch_size,batches,mean_ms,std_ms`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,batch_size,batches,mean_ms,std_ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.variant.name(),
                r.batch_size,
                r.samples.len(),
                r.mean_ms,
                r.std_ms
            ));
        }
        out
    }
}

/// Untimed steps per variant before measuring.
const WARMUP: usize = 5;

/// Time `n_batches` steps per variant for each batch size. The batch is the
/// first `batch_size` training slices of the configured data; the weights
/// of the combined variants are those of the config's schedule at epoch 0.
pub fn benchmark_losses(
    cfg: &ExperimentConfig,
    batch_sizes: &[usize],
    n_batches: usize,
) -> Result<TimingTable> {
    let dataset = data::load(&cfg.data)?;
    let prepared = data::prepare(&dataset, DistanceMode::PerSlice2d)?;
    let (_, w_b) = cfg.schedule.weights(0);
    let weights = (1.0 - w_b, w_b);
    let mut rows = Vec::new();
    for &batch_size in batch_sizes {
        if batch_size == 0 || batch_size > prepared.train.len() {
            return Err(HarnessError::Config(format!(
                "batch size {batch_size} outside 1..={}",
                prepared.train.len()
            )));
        }
        let batch = &prepared.train[..batch_size];
        let init = TinySegNet::new(batch[0].image.channels(), cfg.seed)?;
        let mut nets: Vec<(TinySegNet, AdamState)> = Variant::ALL
            .iter()
            .map(|_| (init.clone(), AdamState::with_lr(init.params().len(), cfg.train.lr)))
            .collect();
        let mut samples = vec![Vec::with_capacity(n_batches); Variant::ALL.len()];
        for round in 0..WARMUP + n_batches {
            for k in 0..Variant::ALL.len() {
                let v = (round + k) % Variant::ALL.len();
                let (net, adam) = &mut nets[v];
                let started = Instant::now();
                step(Variant::ALL[v], net, adam, batch, weights, cfg)?;
                let ms = 1e3 * started.elapsed().as_secs_f64();
                if round >= WARMUP {
                    samples[v].push(ms);
                }
            }
        }
        for (v, s) in Variant::ALL.into_iter().zip(samples) {
            let n = s.len().max(1) as f64;
            let mean = s.iter().sum::<f64>() / n;
            let std = (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            rows.push(TimingRow { variant: v, batch_size, samples: s, mean_ms: mean, std_ms: std });
        }
    }
    Ok(TimingTable { rows })
}

fn step(
    variant: Variant,
    net: &mut TinySegNet,
    adam: &mut AdamState,
    batch: &[Slice],
    (w_r, w_b): (f64, f64),
    cfg: &ExperimentConfig,
) -> Result<()> {
    let mut grads = Gradients::zeros(net.params().len());
    for item in batch {
        let (pred, cache) = net.forward(&item.image)?;
        let s = &pred.foreground;
        let regional = gdl(s, &item.g, cfg.hyper.epsilon)?;
        let loss: LossResult = match variant {
            Variant::Gdl => regional,
            Variant::GdlBoundary => regional.linear_combination(w_r, &boundary_loss(s, &item.phi)?, w_b)?,
            Variant::GdlHausdorff => regional.linear_combination(
                w_r,
                &hausdorff_loss(s, &item.g, cfg.hyper.beta, cfg.hyper.delta)?,
                w_b,
            )?,
        };
        if !loss.value.is_finite() {
            return Err(HarnessError::NonFiniteLoss { epoch: 0, batch: 0 });
        }
        debug_assert!(loss.value.abs() < 1.0 / LINEARITY_TOLERANCE);
        let scaled = loss.grad.map(|g| g / batch.len() as f64)?;
        net.backward_into(&cache, &scaled, &mut grads)?;
    }
    net.adam_step(adam, &grads)?;
    Ok(())
}
