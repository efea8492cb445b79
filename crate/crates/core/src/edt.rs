//! Exact Euclidean distance transform.
//!
//! Separable lower-envelope transform on squared distances: one pass per
//! axis, each pass computing for every pixel on a line
//! `min_j (x_i - x_j)^2 + f(j)` where `x` is the physical pixel-center
//! coordinate along that axis. After the last pass the square root gives the
//! distance from each pixel center to the nearest feature-pixel center. The
//! result is exact, not a chamfer approximation.

use crate::grid::{BinaryMask, Geometry, ScalarGrid};
use crate::{Error, Result};

/// Distances (mm) from every pixel center to the nearest feature center.
pub type DistanceField = ScalarGrid;

pub fn edt(features: &BinaryMask) -> Result<DistanceField> {
    let squared = squared_edt(features)?;
    Ok(ScalarGrid::from_parts_unchecked(
        features.geometry().clone(),
        squared.into_iter().map(f64::sqrt).collect(),
    ))
}

/// Squared distances; same contract as [`edt`].
pub fn squared_edt(features: &BinaryMask) -> Result<Vec<f64>> {
    if !features.has_foreground() {
        return Err(Error::EmptyFeatureSet);
    }
    let mut d: Vec<f64> = features
        .values()
        .iter()
        .map(|&v| if v == 1 { 0.0 } else { f64::INFINITY })
        .collect();
    transform_in_place(&mut d, features.geometry());
    Ok(d)
}

/// Per-slice transform of a 3D mask.
#[derive(Debug, Clone)]
pub struct SliceDistances {
    /// Distances within each `(y, x)` slice. Slices without any feature
    /// pixel hold zeros and are marked in `empty_slices`.
    pub field: DistanceField,
    pub empty_slices: Vec<bool>,
}

/// Transform every `z`-slice independently with its in-plane spacing.
pub fn edt_per_slice(features: &BinaryMask) -> Result<SliceDistances> {
    let geometry = features.geometry();
    if geometry.ndim() != 3 {
        return Err(Error::Geometry(
            "per-slice transform needs a 3D mask".into(),
        ));
    }
    let plane = geometry.slice_geometry()?;
    let n = plane.len();
    let mut values = Vec::with_capacity(geometry.len());
    let mut empty_slices = Vec::with_capacity(geometry.shape()[0]);
    for z in 0..geometry.shape()[0] {
        match edt(&features.slice(z)?) {
            Ok(slice) => {
                values.extend(slice.into_values());
                empty_slices.push(false);
            }
            Err(Error::EmptyFeatureSet) => {
                values.extend(std::iter::repeat(0.0).take(n));
                empty_slices.push(true);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SliceDistances {
        field: ScalarGrid::from_parts_unchecked(geometry.clone(), values),
        empty_slices,
    })
}

fn transform_in_place(d: &mut [f64], geometry: &Geometry) {
    let shape = geometry.shape();
    let strides = geometry.strides();
    let longest = shape.iter().copied().max().unwrap_or(0);
    let mut scratch = Envelope::with_capacity(longest);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];

    for axis in 0..shape.len() {
        let n = shape[axis];
        let stride = strides[axis];
        let h = geometry.spacing()[axis];
        let outer: usize = shape[..axis].iter().product();
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                for (k, v) in line[..n].iter_mut().enumerate() {
                    *v = d[base + k * stride];
                }
                scratch.run(&line[..n], h, &mut out[..n]);
                for (k, v) in out[..n].iter().enumerate() {
                    d[base + k * stride] = *v;
                }
            }
        }
    }
}

/// Lower envelope of the parabolas `(x - x_j)^2 + f(j)` over the finite
/// entries of a line. Lines with no finite entry stay infinite.
struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    fn run(&mut self, f: &[f64], h: f64, out: &mut [f64]) {
        self.sites.clear();
        self.bounds.clear();

        // Intersection abscissa (physical units) of the parabolas rooted at
        // sites p < q.
        let meet = |p: usize, q: usize| {
            let (xp, xq) = (p as f64 * h, q as f64 * h);
            ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp))
        };

        for q in (0..f.len()).filter(|&q| f[q].is_finite()) {
            if self.sites.is_empty() {
                self.sites.push(q);
                self.bounds.push(f64::NEG_INFINITY);
                continue;
            }
            let mut s = meet(*self.sites.last().unwrap(), q);
            while s <= *self.bounds.last().unwrap() {
                self.sites.pop();
                self.bounds.pop();
                s = meet(*self.sites.last().unwrap(), q);
            }
            self.sites.push(q);
            self.bounds.push(s);
        }

        if self.sites.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }

        let mut k = 0;
        for (i, o) in out.iter_mut().enumerate() {
            let x = i as f64 * h;
            while k + 1 < self.sites.len() && self.bounds[k + 1] < x {
                k += 1;
            }
            let j = self.sites[k];
            let dx = (i as f64 - j as f64) * h;
            *o = dx * dx + f[j];
        }
    }
}
