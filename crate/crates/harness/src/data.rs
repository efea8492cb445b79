//! Turning datasets into 2D training slices and validation cases.
//!
//! Volumes are trained as stacks of independent 2D slices. The level-set
//! map paired with each slice is either computed slice by slice or cut out
//! of the volumetric map, depending on the distance mode.

use boundloss::model::{Image, TinySegNet};
use boundloss::synthdata::{generate, read_dataset, Dataset};
use boundloss::{signed_distance, BinaryMask, DistanceMode, LevelSetMap, ProbMap, ScalarGrid};

use crate::config::DataSource;
use crate::Result;

#[derive(Debug, Clone)]
pub struct Slice {
    pub image: Image,
    pub g: BinaryMask,
    pub phi: LevelSetMap,
}

/// One validation case: its slices and the full ground truth.
#[derive(Debug, Clone)]
pub struct Case {
    pub slices: Vec<Slice>,
    pub g: BinaryMask,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Vec<Slice>,
    pub val: Vec<Case>,
}

pub fn load(source: &DataSource) -> Result<Dataset> {
    Ok(match source {
        DataSource::Synthetic { config, n_samples } => generate(config, *n_samples)?,
        DataSource::Directory(dir) => read_dataset(dir)?,
    })
}

pub fn slices(image: &ScalarGrid, g: &BinaryMask, mode: DistanceMode) -> Result<Vec<Slice>> {
    let phi = signed_distance(g, mode);
    if g.geometry().ndim() == 2 {
        return Ok(vec![Slice { image: Image::single(image)?, g: g.clone(), phi }]);
    }
    (0..g.geometry().shape()[0])
        .map(|z| {
            Ok(Slice {
                image: Image::single(&image.slice(z)?)?,
                g: g.slice(z)?,
                phi: phi.slice(z)?,
            })
        })
        .collect()
}

pub fn prepare(dataset: &Dataset, mode: DistanceMode) -> Result<Prepared> {
    let mut train = Vec::new();
    for s in &dataset.train {
        train.extend(slices(&s.image, &s.g, mode)?);
    }
    let val = dataset
        .val
        .iter()
        .map(|s| Ok(Case { slices: slices(&s.image, &s.g, mode)?, g: s.g.clone() }))
        .collect::<Result<_>>()?;
    Ok(Prepared { train, val })
}

/// Foreground probabilities of a whole case, slices restacked.
pub fn predict_case(net: &TinySegNet, case: &Case) -> Result<ProbMap> {
    let mut values = Vec::with_capacity(case.g.len());
    for s in &case.slices {
        values.extend_from_slice(net.predict(&s.image)?.values());
    }
    Ok(ProbMap::new(case.g.geometry().clone(), values)?)
}
