use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use boundloss::grid::{write_grid, GridData};
use boundloss::metrics::{EvalReport, MeanStd, RunSummary};
use boundloss::model::load_checkpoint;
use boundloss::synthdata::{read_dataset, write_dataset};
use boundloss::{signed_distance, DistanceMode};
use boundloss_harness::benchmark::benchmark_losses;
use boundloss_harness::config::{parse_pairs, resolve_output, DataSource};
use boundloss_harness::curves::emit_curves;
use boundloss_harness::experiment::{evaluate, write_cases};
use boundloss_harness::{data, run_experiment, EpochRow, ExperimentConfig, MetricsLog};

/// Boundary-loss segmentation experiments.
///
/// Relative output paths resolve against $BOUNDLOSS_OUTPUT_ROOT when set.
#[derive(Parser)]
#[command(name = "boundloss", version)]
struct Cli {
    /// Experiment config (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Extra `key=value` config entries, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic dataset into a directory.
    GenData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Precompute level-set maps for every mask of a dataset directory.
    MakeDistmaps {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Defaults to `<data>/phi_<mode>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one run per seed, starting at the configured seed.
    Train {
        #[arg(long, default_value_t = 1)]
        runs: u64,
        /// Overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the validation split of the configured data.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Write per-case metrics here.
        #[arg(long)]
        cases: Option<PathBuf>,
    },
    /// Time training steps of GDL alone, with the boundary loss and with the
    /// Hausdorff loss.
    Benchmark {
        #[arg(long, value_delimiter = ',', default_value = "8")]
        batch_sizes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        batches: usize,
        /// Write the timing table as CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize finished runs and emit validation-DSC curves.
    Report {
        /// Run directories, each holding a `metrics.csv`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    #[value(name = "2d")]
    Slices2d,
    #[value(name = "3d")]
    Volume3d,
}

impl Mode {
    fn distance_mode(self) -> DistanceMode {
        match self {
            Mode::Slices2d => DistanceMode::PerSlice2d,
            Mode::Volume3d => DistanceMode::Full3d,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Mode::Slices2d => "2d",
            Mode::Volume3d => "3d",
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut pairs = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            parse_pairs(&text)?
        }
        None => BTreeMap::new(),
    };
    for entry in &cli.set {
        let (k, v) = entry
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {entry:?}"))?;
        pairs.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(seed) = cli.seed {
        pairs.insert("seed".into(), seed.to_string());
    }
    Ok(ExperimentConfig::from_pairs(&pairs)?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::GenData { out } => gen_data(&cfg, &resolve_output(out)),
        Command::MakeDistmaps { data, mode, out } => make_distmaps(data, *mode, out.as_deref()),
        Command::Train { runs, out } => train(cfg, *runs, out.as_deref()),
        Command::Evaluate { checkpoint, cases } => evaluate_checkpoint(&cfg, checkpoint, cases.as_deref()),
        Command::Benchmark { batch_sizes, batches, out } => {
            let table = benchmark_losses(&cfg, batch_sizes, *batches)?;
            match out {
                Some(path) => std::fs::write(resolve_output(path), table.to_csv())?,
                None => print!("{}", table.to_csv()),
            }
            Ok(())
        }
        Command::Report { runs, out } => report(runs, &resolve_output(out)),
    }
}

fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let DataSource::Synthetic { .. } = &cfg.data else {
        bail!("gen-data needs a synthetic data source, not data.dir");
    };
    let dataset = data::load(&cfg.data)?;
    write_dataset(&dataset, out)?;
    println!(
        "wrote {} train and {} val cases to {}",
        dataset.train.len(),
        dataset.val.len(),
        out.display()
    );
    Ok(())
}

fn make_distmaps(dir: &Path, mode: Mode, out: Option<&Path>) -> Result<()> {
    let dataset = read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    let out = out.map_or_else(|| dir.join(format!("phi_{}", mode.name())), resolve_output);
    std::fs::create_dir_all(&out)?;
    let mut n = 0;
    for sample in dataset.samples() {
        let phi = signed_distance(&sample.g, mode.distance_mode());
        let path = out.join(format!("case_{:04}_phi.sgrid", sample.index));
        write_grid(&GridData::from(phi.into_grid()), path)?;
        n += 1;
    }
    println!("wrote {n} level-set maps to {}", out.display());
    Ok(())
}

fn train(mut cfg: ExperimentConfig, runs: u64, out: Option<&Path>) -> Result<()> {
    if runs == 0 {
        bail!("--runs must be positive");
    }
    if let Some(out) = out {
        cfg.output = Some(out.to_path_buf());
    }
    let base = cfg.clone();
    let mut reports = Vec::new();
    for k in 0..runs {
        let mut run = base.clone();
        run.seed = base.seed + k;
        if runs > 1 {
            run.output = base.output.as_ref().map(|o| o.join(format!("seed_{}", run.seed)));
        }
        let outcome = run_experiment(&run).with_context(|| format!("run {} (seed {})", run.name, run.seed))?;
        println!(
            "{} seed {}: best epoch {} val DSC {:.4} HD95 {:.3} ({} empty-mask cases)",
            run.name,
            run.seed,
            outcome.best_epoch,
            outcome.report.mean_dsc,
            outcome.report.mean_hd95,
            outcome.report.sentinel_cases
        );
        reports.push(outcome.report);
    }
    if runs > 1 {
        let summary = RunSummary::from_runs(reports)?;
        println!(
            "{}: DSC {:.4} ± {:.4}, HD95 {:.3} ± {:.3} over {runs} runs",
            base.name, summary.dsc.mean, summary.dsc.std, summary.hd95.mean, summary.hd95.std
        );
    }
    Ok(())
}

fn evaluate_checkpoint(cfg: &ExperimentConfig, checkpoint: &Path, cases: Option<&Path>) -> Result<()> {
    let (net, _) = load_checkpoint(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let dataset = data::load(&cfg.data)?;
    let prepared = data::prepare(&dataset, DistanceMode::PerSlice2d)?;
    let report: EvalReport = evaluate(&net, &prepared.val, cfg.hyper.delta)?;
    println!(
        "{} val cases: DSC {:.4}, HD95 {:.3} ({} empty-mask cases)",
        report.cases.len(),
        report.mean_dsc,
        report.mean_hd95,
        report.sentinel_cases
    );
    if let Some(path) = cases {
        write_cases(&resolve_output(path), &report)?;
    }
    Ok(())
}

fn report(runs: &[PathBuf], out: &Path) -> Result<()> {
    let mut logs = Vec::new();
    for dir in runs {
        let dir = resolve_output(dir);
        let log = MetricsLog::read(&dir.join("metrics.csv"))
            .with_context(|| format!("reading {}", dir.join("metrics.csv").display()))?;
        let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        logs.push((name, log));
    }
    std::fs::create_dir_all(out)?;
    emit_curves(&logs, out)?;

    // Best validation epoch of each run, as checkpoint selection picks it.
    let mut dsc = Vec::new();
    let mut hd = Vec::new();
    let mut table = String::from("run,best_epoch,val_dsc,val_hd95\n");
    for (name, log) in &logs {
        let best = log
            .rows
            .iter()
            .filter(|r| r.val_dsc.is_finite())
            .fold(None, |b: Option<&EpochRow>, r| match b {
                Some(b) if b.val_dsc >= r.val_dsc => Some(b),
                _ => Some(r),
            })
            .with_context(|| format!("{name}: no validated epoch"))?;
        table.push_str(&format!("{name},{},{},{}\n", best.epoch, best.val_dsc, best.val_hd95));
        dsc.push(best.val_dsc);
        hd.push(best.val_hd95);
    }
    let (d, h) = (MeanStd::of(&dsc)?, MeanStd::of(&hd)?);
    table.push_str(&format!("mean,,{},{}\nstd,,{},{}\n", d.mean, h.mean, d.std, h.std));
    std::fs::write(out.join("summary.csv"), &table)?;
    print!("{table}");
    eprintln!("curves and summary written to {}", out.display());
    Ok(())
}
