//! Per-epoch metrics log and its CSV form.
//!
//! Columns: `epoch,loss_total,loss_regional,loss_boundary,alpha,val_dsc,
//! val_hd95,lr,batch_ms`. Reals are written in Rust's shortest round-trip
//! notation, so reading a log back reproduces it bit for bit.

use std::path::Path;

use crate::{HarnessError, Result};

pub const HEADER: &str =
    "epoch,loss_total,loss_regional,loss_boundary,alpha,val_dsc,val_hd95,lr,batch_ms";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    /// Mean over training items of `w_R·L_R + w_B·L_B`.
    pub loss_total: f64,
    pub loss_regional: f64,
    pub loss_boundary: f64,
    /// Boundary weight `w_B` used during the epoch.
    pub alpha: f64,
    pub val_dsc: f64,
    pub val_hd95: f64,
    pub lr: f64,
    /// Mean wall-clock time per batch, or 0 when timing is disabled.
    pub batch_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<EpochRow>,
}

impl MetricsLog {
    /// Append a row; epochs must strictly increase.
    pub fn push(&mut self, row: EpochRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.epoch <= last.epoch {
                return Err(HarnessError::Log(format!(
                    "epoch {} does not follow {}",
                    row.epoch, last.epoch
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.epoch,
                r.loss_total,
                r.loss_regional,
                r.loss_boundary,
                r.alpha,
                r.val_dsc,
                r.val_hd95,
                r.lr,
                r.batch_ms
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(HarnessError::Log("missing or unexpected header".into()));
        }
        let mut log = MetricsLog::default();
        for (n, line) in lines.enumerate() {
            let bad = || HarnessError::Log(format!("row {}: {line:?}", n + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad());
            }
            let real = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            log.push(EpochRow {
                epoch: f[0].parse().map_err(|_| bad())?,
                loss_total: real(1)?,
                loss_regional: real(2)?,
                loss_boundary: real(3)?,
                alpha: real(4)?,
                val_dsc: real(5)?,
                val_hd95: real(6)?,
                lr: real(7)?,
                batch_ms: real(8)?,
            })?;
        }
        Ok(log)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    /// Validation DSC per epoch.
    pub fn val_dsc(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.val_dsc).collect()
    }
}
