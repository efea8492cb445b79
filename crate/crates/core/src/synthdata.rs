//! Synthetic tiny-lesion segmentation tasks.
//!
//! Each sample is a smooth random background plus Gaussian noise with a few
//! small soft-edged elliptical lesions added on top, min-max normalized to
//! `[0, 1]`. The label is the set of pixel centers inside the lesion
//! ellipses. Every sample draws from its own ChaCha stream `(seed, index)`,
//! so a sample does not depend on how many others are generated.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::grid::{read_grid, write_grid, BinaryMask, Geometry, GridData, ScalarGrid};
use crate::{Error, Result};

/// Lesion placements tried per sample before the config is declared
/// infeasible.
const MAX_ATTEMPTS: usize = 2000;
const BACKGROUND_WAVES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    /// Inclusive range of lesion counts per sample.
    pub n_lesions: (usize, usize),
    /// Range of mean lesion radius in pixels.
    pub lesion_radius: (f64, f64),
    /// Expected foreground fraction of a non-empty sample. Realized
    /// fractions are kept within `[0.5×, 2×]` of it.
    pub target_fraction: f64,
    /// Intensity added at lesion centers before normalization.
    pub contrast: f64,
    pub noise_std: f64,
    /// Amplitude of the smooth background.
    pub background_amplitude: f64,
    pub seed: u64,
    /// Share of samples held out for validation (the last indices).
    pub val_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            shape: vec![64, 64],
            spacing: vec![1.0, 1.0],
            n_lesions: (1, 2),
            lesion_radius: (1.2, 3.0),
            target_fraction: 0.003,
            contrast: 0.5,
            noise_std: 0.15,
            background_amplitude: 0.3,
            seed: 0,
            val_fraction: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<Geometry> {
        let geometry = Geometry::new(self.shape.clone(), self.spacing.clone())
            .map_err(|e| Error::Config(e.to_string()))?;
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.target_fraction > 0.0 && self.target_fraction <= 0.05) {
            return bad(format!("target fraction {} outside (0, 0.05]", self.target_fraction));
        }
        let (r0, r1) = self.lesion_radius;
        if !(r0 >= 1.0 && r1 >= r0 && r1.is_finite()) {
            return bad(format!("lesion radii [{r0}, {r1}] must satisfy 1 <= min <= max"));
        }
        if self.n_lesions.0 > self.n_lesions.1 {
            return bad(format!("empty lesion count range {:?}", self.n_lesions));
        }
        if !(self.contrast > 0.0 && self.contrast.is_finite()) {
            return bad(format!("contrast {} must be positive", self.contrast));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise std {} must be >= 0", self.noise_std));
        }
        if !(self.background_amplitude >= 0.0 && self.background_amplitude.is_finite()) {
            return bad(format!("background amplitude {} must be >= 0", self.background_amplitude));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("validation fraction {} outside [0, 1)", self.val_fraction));
        }
        Ok(geometry)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub image: ScalarGrid,
    pub g: BinaryMask,
}

impl Sample {
    pub fn is_empty(&self) -> bool {
        !self.g.has_foreground()
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.g.count() as f64 / self.g.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

impl Dataset {
    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.train.iter().chain(&self.val)
    }
}

/// Generate `n_samples` samples; the last `round(n · val_fraction)` form
/// the validation split.
pub fn generate(config: &SynthConfig, n_samples: usize) -> Result<Dataset> {
    config.validate()?;
    let samples = (0..n_samples)
        .map(|i| generate_sample(config, i))
        .collect::<Result<Vec<_>>>()?;
    let n_val = (n_samples as f64 * config.val_fraction).round() as usize;
    let mut train = samples;
    let val = train.split_off(n_samples - n_val);
    Ok(Dataset { train, val })
}

#[derive(Debug, Clone)]
struct Lesion {
    center: Vec<f64>,
    /// Semi-axes in pixels, one per axis, before rotation.
    radii: Vec<f64>,
    /// In-plane rotation of the last two axes.
    angle: f64,
}

impl Lesion {
    /// Normalized ellipse radius of pixel `coords` (< 1 inside).
    fn rho(&self, coords: &[usize]) -> f64 {
        let n = coords.len();
        let d: Vec<f64> = coords.iter().zip(&self.center).map(|(&c, m)| c as f64 - m).collect();
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (dy, dx) = (d[n - 2], d[n - 1]);
        let mut rotated = d.clone();
        rotated[n - 2] = c * dy + s * dx;
        rotated[n - 1] = -s * dy + c * dx;
        rotated.iter().zip(&self.radii).map(|(v, r)| (v / r).powi(2)).sum::<f64>().sqrt()
    }
}

pub fn generate_sample(config: &SynthConfig, index: usize) -> Result<Sample> {
    let geometry = config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);

    let n_lesions = rng.random_range(config.n_lesions.0..=config.n_lesions.1);
    let (lo, hi) = (0.5 * config.target_fraction, 2.0 * config.target_fraction);
    let mut lesions = Vec::new();
    let mut g = BinaryMask::zeros(geometry.clone());
    if n_lesions > 0 {
        let mut accepted = false;
        for _ in 0..MAX_ATTEMPTS {
            lesions = (0..n_lesions).map(|_| draw_lesion(config, &mut rng)).collect();
            g = BinaryMask::from_fn(geometry.clone(), |c| lesions.iter().any(|l| l.rho(c) < 1.0));
            let fraction = g.count() as f64 / g.len() as f64;
            if (lo..=hi).contains(&fraction) {
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::Config(format!(
                "no lesion layout reached a foreground fraction in [{lo}, {hi}] after \
                 {MAX_ATTEMPTS} attempts; adjust radii, lesion count or target"
            )));
        }
    }

    let waves: Vec<(Vec<f64>, f64)> = (0..BACKGROUND_WAVES)
        .map(|_| {
            let freq = config.shape.iter().map(|&n| rng.random_range(-2.0..2.0) / n as f64).collect();
            (freq, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let noise = Normal::new(0.0, config.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut values = Vec::with_capacity(geometry.len());
    for i in 0..geometry.len() {
        let c = geometry.unravel(i);
        let background: f64 = waves
            .iter()
            .map(|(f, phase)| {
                let t: f64 = f.iter().zip(&c).map(|(f, &x)| f * x as f64).sum();
                (std::f64::consts::TAU * t + phase).cos()
            })
            .sum::<f64>()
            * config.background_amplitude
            / BACKGROUND_WAVES as f64;
        let lesion: f64 = lesions
            .iter()
            .map(|l| {
                let r = l.radii.iter().sum::<f64>() / l.radii.len() as f64;
                sigmoid(4.0 * (1.0 - l.rho(&c)) * r)
            })
            .fold(0.0, f64::max);
        let eps = if config.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        values.push(background + config.contrast * lesion + eps);
    }
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    let range = if max > min { max - min } else { 1.0 };
    values.iter_mut().for_each(|v| *v = (*v - min) / range);
    Ok(Sample { index, image: ScalarGrid::new(geometry, values)?, g })
}

fn draw_lesion(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Lesion {
    let (r0, r1) = config.lesion_radius;
    let r = if r1 > r0 { rng.random_range(r0..r1) } else { r0 };
    let radii: Vec<f64> = config.shape.iter().map(|_| r * rng.random_range(0.75..1.33)).collect();
    let center = config
        .shape
        .iter()
        .map(|&n| {
            let margin = (r1 + 1.0).min(n as f64 / 2.0);
            rng.random_range(margin..=(n as f64 - 1.0 - margin).max(margin))
        })
        .collect();
    Lesion { center, radii, angle: rng.random_range(0.0..std::f64::consts::PI) }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Write every sample as `case_NNNN_image.sgrid` / `case_NNNN_mask.sgrid`
/// plus `manifest.csv` with columns
/// `case,split,image,mask,foreground_fraction,empty`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::from("case,split,image,mask,foreground_fraction,empty\n");
    for (split, samples) in [("train", &dataset.train), ("val", &dataset.val)] {
        for s in samples {
            let image = format!("case_{:04}_image.sgrid", s.index);
            let mask = format!("case_{:04}_mask.sgrid", s.index);
            write_grid(&GridData::from(s.image.clone()), dir.join(&image))?;
            write_grid(&GridData::from(s.g.clone()), dir.join(&mask))?;
            writeln!(
                manifest,
                "{},{split},{image},{mask},{},{}",
                s.index,
                s.foreground_fraction(),
                s.is_empty()
            )
            .expect("writing to a String");
        }
    }
    std::fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(())
}

/// Inverse of [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(dir.join("manifest.csv"))?;
    let mut dataset = Dataset { train: Vec::new(), val: Vec::new() };
    for (n, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format(format!("manifest line {}: {line:?}", n + 1)));
        }
        let index = fields[0]
            .parse()
            .map_err(|_| Error::Format(format!("manifest line {}: bad case id", n + 1)))?;
        let sample = Sample {
            index,
            image: read_grid(dir.join(fields[2]))?.into_scalar()?,
            g: read_grid(dir.join(fields[3]))?.into_mask()?,
        };
        match fields[1] {
            "train" => dataset.train.push(sample),
            "val" => dataset.val.push(sample),
            other => return Err(Error::Format(format!("unknown split {other:?}"))),
        }
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig { seed: 11, ..SynthConfig::default() };
        assert_eq!(generate(&cfg, 6).unwrap(), generate(&cfg, 6).unwrap());
        let other = SynthConfig { seed: 12, ..cfg.clone() };
        assert_ne!(generate(&cfg, 2).unwrap(), generate(&other, 2).unwrap());
    }

    #[test]
    fn samples_do_not_depend_on_dataset_size() {
        let cfg = SynthConfig::default();
        let small = generate(&cfg, 3).unwrap();
        assert_eq!(generate_sample(&cfg, 1).unwrap(), small.train[1]);
    }

    #[test]
    fn split_is_disjoint_and_sized() {
        let d = generate(&SynthConfig::default(), 10).unwrap();
        assert_eq!((d.train.len(), d.val.len()), (8, 2));
        assert_eq!(d.samples().map(|s| s.index).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn zero_lesions_give_flagged_empty_masks() {
        let cfg = SynthConfig { n_lesions: (0, 0), ..SynthConfig::default() };
        let d = generate(&cfg, 3).unwrap();
        assert!(d.samples().all(Sample::is_empty));
    }

    #[test]
    fn images_are_normalized() {
        for s in generate(&SynthConfig::default(), 4).unwrap().samples() {
            let v = s.image.values();
            assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
            assert!(v.contains(&0.0) && v.contains(&1.0));
        }
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let huge = SynthConfig { lesion_radius: (20.0, 25.0), target_fraction: 0.001, ..SynthConfig::default() };
        assert!(matches!(generate(&huge, 1), Err(Error::Config(_))));
        let dense = SynthConfig { target_fraction: 0.2, ..SynthConfig::default() };
        assert!(matches!(generate(&dense, 1), Err(Error::Config(_))));
        let tiny = SynthConfig { lesion_radius: (0.5, 2.0), ..SynthConfig::default() };
        assert!(tiny.validate().is_err());
    }

    #[test]
    fn dataset_round_trips_through_files() {
        let d = generate(&SynthConfig { n_lesions: (0, 1), ..SynthConfig::default() }, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&d, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), d);
    }
}
