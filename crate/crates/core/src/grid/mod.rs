//! Grid types shared by every module.
//!
//! A [`Geometry`] fixes the extents and the physical spacing (mm) of a 2D or
//! 3D domain. Values are stored row-major with the last axis fastest: index
//! `(z, y, x)` lives at `(z * ny + y) * nx + x`.

mod io;

pub use io::{decode, encode, read_grid, write_grid, write_grid_as, Dtype, GridData};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    shape: Vec<usize>,
    spacing: Vec<f64>,
}

// Spacings are validated finite, so equality is total.
impl Eq for Geometry {}

impl Geometry {
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>) -> Result<Self> {
        if !(2..=3).contains(&shape.len()) {
            return Err(Error::Geometry(format!(
                "expected 2 or 3 axes, got {}",
                shape.len()
            )));
        }
        if spacing.len() != shape.len() {
            return Err(Error::Geometry(format!(
                "{} extents but {} spacings",
                shape.len(),
                spacing.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::Geometry(format!("zero extent in {shape:?}")));
        }
        if let Some(h) = spacing.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(Error::Geometry(format!(
                "spacing must be finite and positive, got {h}"
            )));
        }
        Ok(Self { shape, spacing })
    }

    /// Unit-spacing geometry.
    pub fn unit(shape: Vec<usize>) -> Result<Self> {
        let spacing = vec![1.0; shape.len()];
        Self::new(shape, spacing)
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Number of pixels, `|Ω|` in pixel units.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Row-major strides in elements.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.ndim()];
        for a in (0..self.ndim() - 1).rev() {
            strides[a] = strides[a + 1] * self.shape[a + 1];
        }
        strides
    }

    pub fn unravel(&self, mut index: usize) -> Vec<usize> {
        let mut coords = vec![0; self.ndim()];
        for a in (0..self.ndim()).rev() {
            coords[a] = index % self.shape[a];
            index /= self.shape[a];
        }
        coords
    }

    pub fn ravel(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&c, &n)| acc * n + c)
    }

    /// Geometry of one `(y, x)` slice of a 3D domain.
    pub fn slice_geometry(&self) -> Result<Self> {
        if self.ndim() != 3 {
            return Err(Error::Geometry("slicing needs a 3D geometry".into()));
        }
        Self::new(self.shape[1..].to_vec(), self.spacing[1..].to_vec())
    }

    /// Physical length of the domain diagonal between extreme pixel centers.
    pub fn diagonal(&self) -> f64 {
        self.shape
            .iter()
            .zip(&self.spacing)
            .map(|(&n, &h)| ((n - 1) as f64 * h).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Values(format!(
                "{} values for shape {:?}",
                len, self.shape
            )));
        }
        Ok(())
    }

    pub(crate) fn require_same(&self, other: &Geometry, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

/// Real-valued grid: images, distance maps, level sets, gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    geometry: Geometry,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(geometry: Geometry, values: Vec<f64>) -> Result<Self> {
        geometry.check_len(values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Values(format!("non-finite value at index {i}")));
        }
        Ok(Self { geometry, values })
    }

    pub fn zeros(geometry: Geometry) -> Self {
        let values = vec![0.0; geometry.len()];
        Self { geometry, values }
    }

    pub(crate) fn from_parts_unchecked(geometry: Geometry, values: Vec<f64>) -> Self {
        debug_assert_eq!(geometry.len(), values.len());
        Self { geometry, values }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.geometry.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// `z`-th `(y, x)` slice of a 3D grid.
    pub fn slice(&self, z: usize) -> Result<Self> {
        let geometry = self.geometry.slice_geometry()?;
        let n = geometry.len();
        let values = self
            .values
            .get(z * n..(z + 1) * n)
            .ok_or_else(|| Error::Geometry(format!("slice {z} out of range")))?
            .to_vec();
        Ok(Self { geometry, values })
    }
}

/// Binary region indicator with values in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    geometry: Geometry,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(geometry: Geometry, values: Vec<u8>) -> Result<Self> {
        geometry.check_len(values.len())?;
        if let Some(i) = values.iter().position(|&v| v > 1) {
            return Err(Error::Values(format!(
                "mask value {} at index {i} is not 0 or 1",
                values[i]
            )));
        }
        Ok(Self { geometry, values })
    }

    pub fn from_fn(geometry: Geometry, f: impl Fn(&[usize]) -> bool) -> Self {
        let values = (0..geometry.len())
            .map(|i| f(&geometry.unravel(i)) as u8)
            .collect();
        Self { geometry, values }
    }

    pub fn zeros(geometry: Geometry) -> Self {
        let values = vec![0; geometry.len()];
        Self { geometry, values }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, index: usize) -> bool {
        self.values[index] == 1
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn has_foreground(&self) -> bool {
        self.values.contains(&1)
    }

    /// True when the region is empty or covers the whole domain.
    pub fn is_degenerate(&self) -> bool {
        let n = self.count();
        n == 0 || n == self.len()
    }

    pub fn complement(&self) -> Self {
        Self {
            geometry: self.geometry.clone(),
            values: self.values.iter().map(|&v| 1 - v).collect(),
        }
    }

    pub fn to_scalar(&self) -> ScalarGrid {
        ScalarGrid::from_parts_unchecked(
            self.geometry.clone(),
            self.values.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn slice(&self, z: usize) -> Result<Self> {
        let geometry = self.geometry.slice_geometry()?;
        let n = geometry.len();
        let values = self
            .values
            .get(z * n..(z + 1) * n)
            .ok_or_else(|| Error::Geometry(format!("slice {z} out of range")))?
            .to_vec();
        Ok(Self { geometry, values })
    }
}

/// Foreground probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    geometry: Geometry,
    values: Vec<f64>,
}

impl ProbMap {
    pub fn new(geometry: Geometry, values: Vec<f64>) -> Result<Self> {
        geometry.check_len(values.len())?;
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Values(format!(
                "probability {} at index {i} outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self { geometry, values })
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self {
            geometry: mask.geometry.clone(),
            values: mask.values.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn constant(geometry: Geometry, p: f64) -> Result<Self> {
        let values = vec![p; geometry.len()];
        Self::new(geometry, values)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Segmentation region `{p ≥ δ}`; the comparison is inclusive.
pub fn threshold(p: &ProbMap, delta: f64) -> Result<BinaryMask> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidThreshold(delta));
    }
    Ok(BinaryMask {
        geometry: p.geometry.clone(),
        values: p.values.iter().map(|&v| (v >= delta) as u8).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize) -> Geometry {
        Geometry::unit(vec![1, n]).unwrap()
    }

    #[test]
    fn threshold_is_inclusive() {
        let p = ProbMap::new(row(3), vec![0.2, 0.6, 0.5]).unwrap();
        assert_eq!(threshold(&p, 0.5).unwrap().values(), &[0, 1, 1]);
    }

    #[test]
    fn threshold_of_zeros_is_empty() {
        let p = ProbMap::constant(row(4), 0.0).unwrap();
        assert!(!threshold(&p, 0.5).unwrap().has_foreground());
    }

    #[test]
    fn threshold_is_identity_on_binary_input() {
        let g = BinaryMask::new(row(5), vec![0, 1, 1, 0, 1]).unwrap();
        assert_eq!(threshold(&ProbMap::from_mask(&g), 0.5).unwrap(), g);
    }

    #[test]
    fn threshold_rejects_delta_outside_open_interval() {
        let p = ProbMap::constant(row(2), 0.3).unwrap();
        for delta in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                threshold(&p, delta),
                Err(Error::InvalidThreshold(_))
            ));
        }
    }

    #[test]
    fn geometry_validation() {
        assert!(Geometry::new(vec![4], vec![1.0]).is_err());
        assert!(Geometry::new(vec![2, 2, 2, 2], vec![1.0; 4]).is_err());
        assert!(Geometry::new(vec![2, 2], vec![1.0]).is_err());
        assert!(Geometry::new(vec![2, 2], vec![1.0, 0.0]).is_err());
        assert!(Geometry::new(vec![2, 2], vec![1.0, f64::INFINITY]).is_err());
        assert!(Geometry::new(vec![0, 2], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn ravel_unravel_agree() {
        let g = Geometry::unit(vec![3, 4, 5]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.ravel(&g.unravel(i)), i);
        }
        assert_eq!(g.strides(), vec![20, 5, 1]);
        assert_eq!(g.unravel(27), vec![1, 1, 2]);
    }

    #[test]
    fn value_invariants_are_enforced() {
        assert!(ScalarGrid::new(row(2), vec![1.0, f64::NAN]).is_err());
        assert!(ScalarGrid::new(row(2), vec![1.0]).is_err());
        assert!(BinaryMask::new(row(2), vec![0, 2]).is_err());
        assert!(ProbMap::new(row(2), vec![0.5, 1.01]).is_err());
    }

    #[test]
    fn slices_of_3d_grids() {
        let geom = Geometry::new(vec![2, 2, 3], vec![4.0, 1.0, 0.5]).unwrap();
        let grid = ScalarGrid::new(geom, (0..12).map(f64::from).collect()).unwrap();
        let s = grid.slice(1).unwrap();
        assert_eq!(s.geometry().spacing(), &[1.0, 0.5]);
        assert_eq!(s.values(), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        assert!(grid.slice(2).is_err());
    }
}
