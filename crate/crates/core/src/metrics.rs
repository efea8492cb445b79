//! Overlap and boundary-distance metrics on binary masks.
//!
//! HD95 is the larger of the two directed 95th percentiles. The directed
//! set from `A` to `B` holds, for every boundary pixel of `A`, the physical
//! distance from its center to the nearest boundary-pixel center of `B`
//! (boundaries as in [`levelset::boundary`]). The percentile of `n` sorted
//! values `d_0 ≤ … ≤ d_{n-1}` is `d_k + f·(d_{k+1} - d_k)` with
//! `k + f = 0.95·(n - 1)`, i.e. linear interpolation between order
//! statistics.

use crate::edt::edt;
use crate::grid::BinaryMask;
use crate::levelset::{self, BoundarySet};
use crate::{Error, Result};

/// `2|P ∩ G| / (|P| + |G|)`; two empty masks score 1.
pub fn dsc(pred: &BinaryMask, g: &BinaryMask) -> Result<f64> {
    pred.geometry().require_same(g.geometry(), "dsc")?;
    let (p, t) = (pred.count(), g.count());
    if p + t == 0 {
        return Ok(1.0);
    }
    let both = pred.values().iter().zip(g.values()).filter(|(&a, &b)| a == 1 && b == 1).count();
    Ok(2.0 * both as f64 / (p + t) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hd95 {
    /// Millimetres, or the domain diagonal when `sentinel` is set.
    pub value: f64,
    /// One of the masks was empty, so no boundary distance exists.
    pub sentinel: bool,
}

pub fn hd95(pred: &BinaryMask, g: &BinaryMask) -> Result<Hd95> {
    pred.geometry().require_same(g.geometry(), "hd95")?;
    let sentinel = Hd95 { value: pred.geometry().diagonal(), sentinel: true };
    if !pred.has_foreground() || !g.has_foreground() {
        return Ok(sentinel);
    }
    let (bp, bg) = (levelset::boundary(pred), levelset::boundary(g));
    match (bp.is_empty(), bg.is_empty()) {
        (true, true) => return Ok(Hd95 { value: 0.0, sentinel: false }),
        (true, false) | (false, true) => return Ok(sentinel),
        _ => {}
    }
    let forward = directed(&bp, &bg, g)?;
    let backward = directed(&bg, &bp, pred)?;
    Ok(Hd95 { value: forward.max(backward), sentinel: false })
}

fn directed(from: &BoundarySet, to: &BoundarySet, to_mask: &BinaryMask) -> Result<f64> {
    let field = edt(&to.to_mask(to_mask.geometry()))?;
    let mut d: Vec<f64> = from.indices.iter().map(|&i| field.values()[i]).collect();
    Ok(percentile(&mut d, 95.0))
}

/// Linear-interpolation percentile; sorts `values` in place. `q` in [0, 100].
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    values.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (values.len() - 1) as f64;
    let k = pos.floor() as usize;
    let f = pos - k as f64;
    if k + 1 < values.len() {
        values[k] + f * (values[k + 1] - values[k])
    } else {
        values[k]
    }
}

/// Metrics of one evaluated case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseMetrics {
    pub dsc: f64,
    pub hd95: Hd95,
}

pub fn evaluate_case(pred: &BinaryMask, g: &BinaryMask) -> Result<CaseMetrics> {
    Ok(CaseMetrics { dsc: dsc(pred, g)?, hd95: hd95(pred, g)? })
}

/// Per-case metrics of one run and their means. Sentinel HD95 values are
/// included in the mean; `sentinel_cases` says how many there were.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cases: Vec<CaseMetrics>,
    pub mean_dsc: f64,
    pub mean_hd95: f64,
    pub sentinel_cases: usize,
}

impl EvalReport {
    pub fn from_cases(cases: Vec<CaseMetrics>) -> Result<Self> {
        if cases.is_empty() {
            return Err(Error::InvalidArgument("no cases to report".into()));
        }
        let n = cases.len() as f64;
        let mean_dsc = cases.iter().map(|c| c.dsc).sum::<f64>() / n;
        let mean_hd95 = cases.iter().map(|c| c.hd95.value).sum::<f64>() / n;
        let sentinel_cases = cases.iter().filter(|c| c.hd95.sentinel).count();
        Ok(Self { cases, mean_dsc, mean_hd95, sentinel_cases })
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("mean of no values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self { mean, std: var.sqrt() })
    }
}

/// Table-style summary over independent runs of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub runs: Vec<EvalReport>,
    pub dsc: MeanStd,
    pub hd95: MeanStd,
}

impl RunSummary {
    pub fn from_runs(runs: Vec<EvalReport>) -> Result<Self> {
        let dsc = MeanStd::of(&runs.iter().map(|r| r.mean_dsc).collect::<Vec<_>>())?;
        let hd95 = MeanStd::of(&runs.iter().map(|r| r.mean_hd95).collect::<Vec<_>>())?;
        Ok(Self { runs, dsc, hd95 })
    }
}
