//! Experiment configuration: flat `key = value` text with dotted keys.
//!
//! ```text
//! # comments and blank lines are ignored
//! name = gdl_boundary_2d
//! seed = 0
//! loss.regional = gdl
//! loss.boundary = 2d
//! alpha.strategy = rebalance
//! train.epochs = 40
//! ```
//!
//! Every key has a default, so an empty file is a valid plain-GDL run on the
//! default synthetic task. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use boundloss::synthdata::SynthConfig;
use boundloss::{AlphaSchedule, HyperParams, RegionalLoss, Strategy};

use crate::{HarnessError, Result};

/// Environment variable that relative output directories resolve against.
pub const OUTPUT_ROOT_VAR: &str = "BOUNDLOSS_OUTPUT_ROOT";

/// The boundary-type term paired with the regional loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTerm {
    Off,
    /// Boundary loss with slice-wise level sets.
    Slices2d,
    /// Boundary loss with volumetric level sets, sliced for training.
    Volume3d,
    Hausdorff,
}

impl BoundaryTerm {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryTerm::Off => "off",
            BoundaryTerm::Slices2d => "2d",
            BoundaryTerm::Volume3d => "3d",
            BoundaryTerm::Hausdorff => "hausdorff",
        }
    }
}

impl FromStr for BoundaryTerm {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(BoundaryTerm::Off),
            "2d" => Ok(BoundaryTerm::Slices2d),
            "3d" => Ok(BoundaryTerm::Volume3d),
            "hausdorff" => Ok(BoundaryTerm::Hausdorff),
            other => Err(HarnessError::Config(format!("unknown boundary term {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic { config: SynthConfig, n_samples: usize },
    /// A directory written by `gen-data`.
    Directory(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 40, batch_size: 8, lr: 1e-3, patience: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub data: DataSource,
    pub regional: RegionalLoss,
    pub boundary: BoundaryTerm,
    pub hyper: HyperParams,
    pub schedule: AlphaSchedule,
    pub train: TrainConfig,
    /// Fill the `batch_ms` column with measured wall-clock time. Off by
    /// default so that logs are byte-reproducible.
    pub wall_clock: bool,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seed: 0,
            data: DataSource::Synthetic { config: SynthConfig::default(), n_samples: 250 },
            regional: RegionalLoss::Gdl,
            boundary: BoundaryTerm::Off,
            hyper: HyperParams::default(),
            schedule: AlphaSchedule::rebalance(0.01, 0.01).expect("valid default schedule"),
            train: TrainConfig::default(),
            wall_clock: false,
            output: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_pair<T: FromStr + Copy>(key: &str, value: &str) -> Result<(T, T)> {
    match parse_list::<T>(key, value)?.as_slice() {
        [a] => Ok((*a, *a)),
        [a, b] => Ok((*a, *b)),
        _ => Err(HarnessError::Config(format!("{key}: expected one or two values"))),
    }
}

/// Parse `key = value` lines into an ordered map.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", n + 1)))?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(HarnessError::Config(format!("line {}: duplicate key {key}", n + 1)));
        }
    }
    Ok(map)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut synth = SynthConfig::default();
        let mut n_samples = 250;
        let mut data_dir = None;
        let (mut strategy, mut alpha0, mut step, mut cap) =
            (Strategy::Rebalance, 0.01, 0.01, None::<f64>);

        for (key, value) in pairs {
            let v = value.as_str();
            match key.as_str() {
                "name" => cfg.name = v.to_string(),
                "seed" => cfg.seed = parse(key, v)?,
                "output" => cfg.output = Some(PathBuf::from(v)),
                "data.dir" => data_dir = Some(PathBuf::from(v)),
                "synth.n_samples" => n_samples = parse(key, v)?,
                "synth.shape" => synth.shape = parse_list(key, v)?,
                "synth.spacing" => synth.spacing = parse_list(key, v)?,
                "synth.n_lesions" => synth.n_lesions = parse_pair(key, v)?,
                "synth.lesion_radius" => synth.lesion_radius = parse_pair(key, v)?,
                "synth.target_fraction" => synth.target_fraction = parse(key, v)?,
                "synth.contrast" => synth.contrast = parse(key, v)?,
                "synth.noise_std" => synth.noise_std = parse(key, v)?,
                "synth.background_amplitude" => synth.background_amplitude = parse(key, v)?,
                "synth.seed" => synth.seed = parse(key, v)?,
                "synth.val_fraction" => synth.val_fraction = parse(key, v)?,
                "loss.regional" => cfg.regional = v.parse()?,
                "loss.boundary" => cfg.boundary = v.parse()?,
                "loss.w0" => cfg.hyper.w0 = parse(key, v)?,
                "loss.sigma" => cfg.hyper.sigma = parse(key, v)?,
                "loss.gamma" => cfg.hyper.gamma = parse(key, v)?,
                "loss.beta" => cfg.hyper.beta = parse(key, v)?,
                "loss.epsilon" => cfg.hyper.epsilon = parse(key, v)?,
                "loss.delta" => cfg.hyper.delta = parse(key, v)?,
                "alpha.strategy" => strategy = v.parse()?,
                "alpha.initial" => alpha0 = parse(key, v)?,
                "alpha.step" => step = parse(key, v)?,
                "alpha.cap" => cap = Some(parse(key, v)?),
                "train.epochs" => cfg.train.epochs = parse(key, v)?,
                "train.batch_size" => cfg.train.batch_size = parse(key, v)?,
                "train.lr" => cfg.train.lr = parse(key, v)?,
                "train.patience" => cfg.train.patience = parse(key, v)?,
                "log.wall_clock" => cfg.wall_clock = parse(key, v)?,
                other => return Err(HarnessError::Config(format!("unknown key {other:?}"))),
            }
        }

        cfg.schedule = match cap {
            Some(cap) => AlphaSchedule::new(strategy, alpha0, step, cap)?,
            None => AlphaSchedule::with_default_cap(strategy, alpha0, step)?,
        };
        cfg.data = match data_dir {
            Some(dir) => DataSource::Directory(dir),
            None => DataSource::Synthetic { config: synth, n_samples },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(HarnessError::Config("epochs and batch size must be positive".into()));
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(HarnessError::Config(format!("learning rate {} must be positive", self.train.lr)));
        }
        if self.boundary == BoundaryTerm::Off && self.schedule.strategy() == Strategy::BoundaryOnly {
            return Err(HarnessError::Config(
                "boundary_only schedule needs a boundary term".into(),
            ));
        }
        if let DataSource::Synthetic { config, n_samples } = &self.data {
            config.validate()?;
            if *n_samples < 2 {
                return Err(HarnessError::Config("need at least two samples".into()));
            }
        }
        Ok(())
    }

    /// `(w_R, w_B)` at `epoch`; `(1, 0)` when no boundary term is used.
    pub fn weights(&self, epoch: usize) -> (f64, f64) {
        match self.boundary {
            BoundaryTerm::Off => (1.0, 0.0),
            _ => self.schedule.weights(epoch),
        }
    }

    /// Output directory with relative paths resolved against
    /// [`OUTPUT_ROOT_VAR`] when it is set.
    pub fn output_dir(&self) -> Option<PathBuf> {
        self.output.as_ref().map(|p| resolve_output(p))
    }
}

pub fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_the_default() {
        assert_eq!(ExperimentConfig::from_text("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn parses_dotted_keys() {
        let cfg = ExperimentConfig::from_text(
            "# rebalanced boundary loss\nname = x\nseed = 3\nloss.regional = focal\n\
             loss.boundary = 3d\nalpha.strategy = increase\nalpha.initial = 0.02\n\
             synth.shape = 8, 32, 32\nsynth.spacing = 3,1,1\nsynth.n_lesions = 2\n\
             train.epochs = 5\nlog.wall_clock = true\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.regional, RegionalLoss::Focal);
        assert_eq!(cfg.boundary, BoundaryTerm::Volume3d);
        assert_eq!(cfg.schedule, AlphaSchedule::increase(0.02, 0.01).unwrap());
        assert_eq!(cfg.train.epochs, 5);
        assert!(cfg.wall_clock);
        let DataSource::Synthetic { config, .. } = &cfg.data else { panic!() };
        assert_eq!(config.shape, vec![8, 32, 32]);
        assert_eq!(config.n_lesions, (2, 2));
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "loss.regional = dice",
            "nonsense = 1",
            "seed",
            "seed = 1\nseed = 2",
            "train.epochs = 0",
            "alpha.strategy = boundary_only",
            "alpha.strategy = rebalance\nalpha.cap = 1.0",
        ] {
            assert!(ExperimentConfig::from_text(text).is_err(), "{text:?}");
        }
    }

    #[test]
    fn weights_follow_the_boundary_switch() {
        let off = ExperimentConfig::default();
        assert_eq!(off.weights(5), (1.0, 0.0));
        let on = ExperimentConfig { boundary: BoundaryTerm::Slices2d, ..off };
        assert_eq!(on.weights(0), (0.99, 0.01));
    }
}
