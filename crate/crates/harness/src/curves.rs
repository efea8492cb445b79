//! Validation-DSC learning curves as CSV and SVG.
//!
//! `curves.csv` has an `epoch` column, one column per run (named by its
//! label) and a final `mean` column. A run with no row for some epoch
//! leaves an empty cell there and is left out of that epoch's mean.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::{HarnessError, MetricsLog, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub epochs: Vec<usize>,
    /// `(label, value per epoch)`; the last series is the mean.
    pub series: Vec<(String, Vec<Option<f64>>)>,
}

impl Curves {
    pub fn from_logs(runs: &[(String, MetricsLog)]) -> Result<Self> {
        if runs.is_empty() || runs.iter().any(|(_, l)| l.is_empty()) {
            return Err(HarnessError::Log("curves need at least one non-empty log".into()));
        }
        let epochs: Vec<usize> = runs
            .iter()
            .flat_map(|(_, l)| l.rows.iter().map(|r| r.epoch))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut series: Vec<(String, Vec<Option<f64>>)> = runs
            .iter()
            .map(|(label, log)| {
                let values = epochs
                    .iter()
                    .map(|e| log.rows.iter().find(|r| r.epoch == *e).map(|r| r.val_dsc))
                    .collect();
                (label.clone(), values)
            })
            .collect();
        let mean = (0..epochs.len())
            .map(|i| {
                let present: Vec<f64> = series.iter().filter_map(|(_, v)| v[i]).collect();
                Some(present.iter().sum::<f64>() / present.len() as f64)
            })
            .collect();
        series.push(("mean".into(), mean));
        Ok(Self { epochs, series })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch");
        for (label, _) in &self.series {
            write!(out, ",{label}").unwrap();
        }
        out.push('\n');
        for (i, e) in self.epochs.iter().enumerate() {
            write!(out, "{e}").unwrap();
            for (_, v) in &self.series {
                match v[i] {
                    Some(x) => write!(out, ",{x}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| HarnessError::Log(format!("curves: {m}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file"))?.split(',').collect();
        if header.first() != Some(&"epoch") || header.len() < 2 {
            return Err(bad("bad header"));
        }
        let mut series: Vec<(String, Vec<Option<f64>>)> =
            header[1..].iter().map(|l| (l.to_string(), Vec::new())).collect();
        let mut epochs = Vec::new();
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(bad("ragged row"));
            }
            epochs.push(cells[0].parse().map_err(|_| bad("bad epoch"))?);
            for (cell, (_, v)) in cells[1..].iter().zip(&mut series) {
                v.push(if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse().map_err(|_| bad("bad value"))?)
                });
            }
        }
        Ok(Self { epochs, series })
    }

    /// Line plot of every series over epochs, DSC axis fixed to [0, 1].
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const PAD: f64 = 48.0;
        const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
        let last = *self.epochs.last().unwrap_or(&0) as f64;
        let first = *self.epochs.first().unwrap_or(&0) as f64;
        let span = (last - first).max(1.0);
        let x = |e: usize| PAD + (e as f64 - first) / span * (W - 2.0 * PAD);
        let y = |v: f64| H - PAD - v.clamp(0.0, 1.0) * (H - 2.0 * PAD);

        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
             viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
        );
        writeln!(
            svg,
            "<path d=\"M{PAD} {PAD} V{} H{}\" stroke=\"black\" fill=\"none\"/>",
            H - PAD,
            W - PAD
        )
        .unwrap();
        writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">epoch</text>", W / 2.0, H - 12.0).unwrap();
        writeln!(svg, "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">validation DSC</text>", H / 2.0, H / 2.0).unwrap();
        for t in [0.0, 0.5, 1.0] {
            writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{t}</text>", PAD - 4.0, y(t) + 4.0).unwrap();
        }
        for (k, (label, values)) in self.series.iter().enumerate() {
            let is_mean = k + 1 == self.series.len();
            let color = if is_mean { "black" } else { COLORS[k % COLORS.len()] };
            let points: Vec<String> = self
                .epochs
                .iter()
                .zip(values)
                .filter_map(|(&e, v)| v.map(|v| format!("{:.2},{:.2}", x(e), y(v))))
                .collect();
            let width = if is_mean { 2.5 } else { 1.2 };
            writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"/>",
                points.join(" ")
            )
            .unwrap();
            for p in &points {
                let (px, py) = p.split_once(',').unwrap();
                writeln!(svg, "<circle cx=\"{px}\" cy=\"{py}\" r=\"2\" fill=\"{color}\"/>").unwrap();
            }
            writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
                W - PAD + 4.0 - 120.0,
                PAD + 14.0 * k as f64,
                xml_escape(label)
            )
            .unwrap();
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write `curves.csv` and `curves.svg` into `dir`.
pub fn emit_curves(runs: &[(String, MetricsLog)], dir: &Path) -> Result<Curves> {
    let curves = Curves::from_logs(runs)?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("curves.csv"), curves.to_csv())?;
    std::fs::write(dir.join("curves.svg"), curves.to_svg())?;
    Ok(curves)
}
