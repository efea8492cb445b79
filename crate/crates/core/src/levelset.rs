//! Signed level-set maps, discrete boundaries and boundary-change measures.
//!
//! Distances follow the pixel-center convention of [`crate::edt`]: outside
//! the region `|φ|` is the distance to the nearest region pixel, inside it is
//! the distance to the nearest background pixel. Consequently `φ` never
//! vanishes on a proper region and boundary pixels carry `±(smallest
//! spacing)` or more.

use crate::edt::squared_edt;
use crate::grid::{BinaryMask, Geometry, ScalarGrid};
use crate::{Error, Result};

/// Signed distance to a ground-truth boundary: negative inside the region,
/// positive outside, all zero for an empty or full region.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetMap(ScalarGrid);

impl LevelSetMap {
    /// Wrap a precomputed map (e.g. read back from disk).
    pub fn from_grid(grid: ScalarGrid) -> Self {
        Self(grid)
    }

    pub fn as_grid(&self) -> &ScalarGrid {
        &self.0
    }

    pub fn into_grid(self) -> ScalarGrid {
        self.0
    }

    pub fn geometry(&self) -> &Geometry {
        self.0.geometry()
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    /// Unsigned distance to the opposite region, `|φ|`.
    pub fn magnitude(&self) -> ScalarGrid {
        ScalarGrid::from_parts_unchecked(
            self.geometry().clone(),
            self.values().iter().map(|v| v.abs()).collect(),
        )
    }

    /// `z`-th slice of a 3D map.
    pub fn slice(&self, z: usize) -> Result<Self> {
        Ok(Self(self.0.slice(z)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    /// Each `(y, x)` slice gets its own map; empty or full slices map to 0.
    PerSlice2d,
    /// One map over the whole volume.
    Full3d,
}

pub fn signed_distance(g: &BinaryMask, mode: DistanceMode) -> LevelSetMap {
    let geometry = g.geometry();
    if mode == DistanceMode::Full3d || geometry.ndim() == 2 {
        return LevelSetMap(signed_distance_whole(g));
    }
    let mut values = Vec::with_capacity(geometry.len());
    for z in 0..geometry.shape()[0] {
        let slice = g.slice(z).expect("z is within the volume");
        values.extend(signed_distance_whole(&slice).into_values());
    }
    LevelSetMap(ScalarGrid::from_parts_unchecked(geometry.clone(), values))
}

fn signed_distance_whole(g: &BinaryMask) -> ScalarGrid {
    if g.is_degenerate() {
        return ScalarGrid::zeros(g.geometry().clone());
    }
    let outside = squared_edt(g).expect("proper region has foreground");
    let inside = squared_edt(&g.complement()).expect("proper region has background");
    let values = g
        .values()
        .iter()
        .zip(outside.iter().zip(&inside))
        .map(|(&v, (&o, &i))| if v == 1 { -i.sqrt() } else { o.sqrt() })
        .collect();
    ScalarGrid::from_parts_unchecked(g.geometry().clone(), values)
}

/// Flat indices of the region's boundary pixels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoundarySet {
    pub indices: Vec<usize>,
}

impl BoundarySet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn to_mask(&self, geometry: &Geometry) -> BinaryMask {
        let mut values = vec![0u8; geometry.len()];
        for &i in &self.indices {
            values[i] = 1;
        }
        BinaryMask::new(geometry.clone(), values).expect("indices come from this geometry")
    }
}

/// Foreground pixels with at least one face-adjacent background pixel. The
/// outside of the domain does not count as background.
pub fn boundary(g: &BinaryMask) -> BoundarySet {
    let geometry = g.geometry();
    let shape = geometry.shape();
    let strides = geometry.strides();
    let values = g.values();
    let indices = (0..values.len())
        .filter(|&i| values[i] == 1)
        .filter(|&i| {
            let coords = geometry.unravel(i);
            (0..shape.len()).any(|a| {
                (coords[a] > 0 && values[i - strides[a]] == 0)
                    || (coords[a] + 1 < shape[a] && values[i + strides[a]] == 0)
            })
        })
        .collect();
    BoundarySet { indices }
}

/// Regional form of the boundary change between `G` and `S`:
/// `2 · Σ_{q ∈ G Δ S} |φ_G(q)| · voxel volume`.
///
/// Equals `2 |Ω| v (L_B(S) - L_B(G))` for the mean-reduced boundary loss
/// `L_B`, since `φ_G` is negative exactly on `G`.
pub fn boundary_change_integral(g: &BinaryMask, s: &BinaryMask) -> Result<f64> {
    g.geometry().require_same(s.geometry(), "boundary change")?;
    if !g.has_foreground() {
        return Err(Error::EmptyFeatureSet);
    }
    let phi = signed_distance(g, DistanceMode::Full3d);
    let total: f64 = g
        .values()
        .iter()
        .zip(s.values())
        .zip(phi.values())
        .filter(|((a, b), _)| a != b)
        .map(|(_, v)| v.abs())
        .sum();
    Ok(2.0 * total * g.geometry().voxel_volume())
}

/// Half-width (pixels) of the central differences used for normals; a
/// nearest-neighbour stencil is too noisy on staircase boundaries.
const NORMAL_STENCIL: usize = 3;
/// March step in units of the smallest spacing.
const MARCH_STEP: f64 = 0.25;
/// Largest tolerated fraction of failed rays.
const MAX_FAILED_RAYS: f64 = 0.01;

/// Contour form of the boundary change: `∫_{∂G} ‖y_{∂S}(p) - p‖² dp`.
///
/// Each boundary pixel of `G` casts a ray along the outward normal of `φ_G`.
/// The ray origin `p` is moved onto the sub-pixel interface of `G` (the 0.5
/// crossing of the linearly interpolated indicator of `G`), and `y` is the
/// nearest 0.5 crossing of the interpolated indicator of `S` along the same
/// line, searched outward or inward depending on which side of `∂S` the
/// origin lies. Each ray stands for a boundary element of measure
/// `V / max_j(h_j |n_j|)`, the area of the interface per face-connected
/// boundary voxel with unit normal `n`.
///
/// At most `n_rays` rays are cast, evenly strided over the boundary, with
/// weights rescaled to the full boundary measure. The call fails when more
/// than 1% of cast rays leave the domain without finding `∂S`.
pub fn boundary_change_differential(g: &BinaryMask, s: &BinaryMask, n_rays: usize) -> Result<f64> {
    let geometry = g.geometry();
    geometry.require_same(s.geometry(), "boundary change")?;
    if !g.has_foreground() || !s.has_foreground() {
        return Err(Error::EmptyFeatureSet);
    }
    if n_rays == 0 {
        return Err(Error::InvalidArgument("n_rays must be positive".into()));
    }
    if g == s {
        return Ok(0.0);
    }

    let phi = signed_distance(g, DistanceMode::Full3d);
    let g_ind = g.to_scalar();
    let s_ind = s.to_scalar();
    let spacing = geometry.spacing();
    let volume = geometry.voxel_volume();
    let step = MARCH_STEP * spacing.iter().copied().fold(f64::INFINITY, f64::min);
    let reach: f64 = geometry.diagonal() + step;

    let all = boundary(g).indices;
    let stride = all.len().div_ceil(n_rays).max(1);

    let mut full_measure = 0.0;
    let mut cast_measure = 0.0;
    let mut accumulated = 0.0;
    let mut cast = 0usize;
    let mut failed = 0usize;
    for (k, &index) in all.iter().enumerate() {
        let coords = geometry.unravel(index);
        let Some(normal) = outward_normal(&phi, &coords) else {
            if k % stride == 0 {
                cast += 1;
                failed += 1;
            }
            continue;
        };
        let measure = volume
            / normal
                .iter()
                .zip(spacing)
                .map(|(n, h)| (n * h).abs())
                .fold(0.0, f64::max);
        full_measure += measure;
        if k % stride != 0 {
            continue;
        }
        cast += 1;

        let origin: Vec<f64> = coords.iter().map(|&c| c as f64).collect();
        let ray = Ray {
            origin: &origin,
            normal: &normal,
            spacing,
        };
        let Some(t_g) = ray.crossing(&g_ind, 0.0, step, reach) else {
            failed += 1;
            continue;
        };
        let Some(t_s) = ray.crossing(&s_ind, t_g, step, reach) else {
            failed += 1;
            continue;
        };
        cast_measure += measure;
        accumulated += (t_s - t_g).powi(2) * measure;
    }

    if failed as f64 > MAX_FAILED_RAYS * cast as f64 {
        return Err(Error::NoIntersection { failed, total: cast });
    }
    if cast_measure == 0.0 {
        return Ok(0.0);
    }
    Ok(accumulated * full_measure / cast_measure)
}

/// Unit normal (physical coordinates) of `φ` at a pixel from wide central
/// differences, clamped to the domain.
fn outward_normal(phi: &LevelSetMap, coords: &[usize]) -> Option<Vec<f64>> {
    let geometry = phi.geometry();
    let shape = geometry.shape();
    let strides = geometry.strides();
    let index = geometry.ravel(coords);
    let values = phi.values();
    let mut grad: Vec<f64> = (0..shape.len())
        .map(|a| {
            let lo = coords[a].saturating_sub(NORMAL_STENCIL);
            let hi = (coords[a] + NORMAL_STENCIL).min(shape[a] - 1);
            if hi == lo {
                return 0.0;
            }
            let lo_i = index - (coords[a] - lo) * strides[a];
            let hi_i = index + (hi - coords[a]) * strides[a];
            (values[hi_i] - values[lo_i]) / ((hi - lo) as f64 * geometry.spacing()[a])
        })
        .collect();
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    grad.iter_mut().for_each(|v| *v /= norm);
    Some(grad)
}

struct Ray<'a> {
    /// Origin in pixel-index coordinates.
    origin: &'a [f64],
    /// Unit direction in physical coordinates.
    normal: &'a [f64],
    spacing: &'a [f64],
}

impl Ray<'_> {
    /// Index-space position at physical arc length `t`.
    fn at(&self, t: f64) -> Vec<f64> {
        self.origin
            .iter()
            .zip(self.normal)
            .zip(self.spacing)
            .map(|((o, n), h)| o + t * n / h)
            .collect()
    }

    /// Arc length of the 0.5 crossing of the interpolated `indicator`
    /// nearest to `start`, marching in whichever direction the indicator
    /// value at `start` calls for. `None` when the ray leaves the domain.
    fn crossing(&self, indicator: &ScalarGrid, start: f64, step: f64, reach: f64) -> Option<f64> {
        let f0 = interpolate(indicator, &self.at(start))? - 0.5;
        if f0 == 0.0 {
            return Some(start);
        }
        // Inside (f0 > 0) the interface lies further out along the normal.
        let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
        let (mut t, mut prev) = (start, f0);
        while (t - start).abs() <= reach {
            let next_t = t + dir * step;
            let f = interpolate(indicator, &self.at(next_t))? - 0.5;
            if f == 0.0 {
                return Some(next_t);
            }
            if (f > 0.0) != (prev > 0.0) {
                return Some(t + (next_t - t) * prev / (prev - f));
            }
            t = next_t;
            prev = f;
        }
        None
    }
}

/// Multilinear interpolation at an index-space point; `None` outside the
/// hull of pixel centers.
fn interpolate(grid: &ScalarGrid, point: &[f64]) -> Option<f64> {
    let geometry = grid.geometry();
    let shape = geometry.shape();
    let strides = geometry.strides();
    let ndim = shape.len();
    let mut base = 0usize;
    let mut frac = [0.0f64; 3];
    let mut upper = [false; 3];
    for a in 0..ndim {
        let x = point[a];
        let last = (shape[a] - 1) as f64;
        if !(0.0..=last).contains(&x) {
            return None;
        }
        let i = (x.floor() as usize).min(shape[a] - 1);
        frac[a] = x - i as f64;
        upper[a] = i + 1 < shape[a];
        base += i * strides[a];
    }
    let values = grid.values();
    let mut acc = 0.0;
    for corner in 0..(1usize << ndim) {
        let mut weight = 1.0;
        let mut index = base;
        for a in 0..ndim {
            if corner >> a & 1 == 1 {
                if !upper[a] {
                    weight = 0.0;
                    break;
                }
                weight *= frac[a];
                index += strides[a];
            } else {
                weight *= 1.0 - frac[a];
            }
        }
        if weight != 0.0 {
            acc += weight * values[index];
        }
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[u8]) -> BinaryMask {
        BinaryMask::new(Geometry::unit(vec![1, values.len()]).unwrap(), values.to_vec()).unwrap()
    }

    #[test]
    fn signed_distance_of_single_pixel_row() {
        let phi = signed_distance(&row(&[0, 0, 1, 0, 0]), DistanceMode::Full3d);
        assert_eq!(phi.values(), &[2.0, 1.0, -1.0, 1.0, 2.0]);
    }

    #[test]
    fn degenerate_regions_map_to_zero() {
        for g in [row(&[0; 5]), row(&[1; 5])] {
            let phi = signed_distance(&g, DistanceMode::PerSlice2d);
            assert!(phi.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn per_slice_mode_zeroes_degenerate_slices_only() {
        let geom = Geometry::new(vec![3, 1, 4], vec![3.0, 1.0, 1.0]).unwrap();
        let values = vec![0, 1, 0, 0, /* empty */ 0, 0, 0, 0, /* full */ 1, 1, 1, 1];
        let g = BinaryMask::new(geom, values).unwrap();
        let phi = signed_distance(&g, DistanceMode::PerSlice2d);
        assert_eq!(&phi.values()[..4], &[1.0, -1.0, 1.0, 2.0]);
        assert!(phi.values()[4..].iter().all(|&v| v == 0.0));

        // The whole-volume map sees across slices instead.
        let full = signed_distance(&g, DistanceMode::Full3d);
        assert_eq!(full.values()[4], 3.0);
        assert_eq!(full.values()[8], -3.0);
    }

    #[test]
    fn boundary_examples() {
        let solid = BinaryMask::new(Geometry::unit(vec![3, 3]).unwrap(), vec![1; 9]).unwrap();
        assert!(boundary(&solid).is_empty());
        assert_eq!(boundary(&row(&[0, 0, 1, 0, 0])).indices, vec![2]);
        let block = BinaryMask::from_fn(Geometry::unit(vec![4, 4]).unwrap(), |c| {
            (1..3).contains(&c[0]) && (1..3).contains(&c[1])
        });
        assert_eq!(boundary(&block).indices, vec![5, 6, 9, 10]);
        assert!(boundary(&row(&[0; 4])).is_empty());
    }

    #[test]
    fn integral_examples() {
        let g = row(&[0, 0, 1, 0, 0]);
        assert_eq!(boundary_change_integral(&g, &g).unwrap(), 0.0);
        assert_eq!(boundary_change_integral(&g, &row(&[0, 1, 1, 0, 0])).unwrap(), 2.0);
        assert!(boundary_change_integral(&row(&[0; 5]), &g).is_err());
    }

    #[test]
    fn differential_of_identical_regions_is_zero() {
        let g = BinaryMask::from_fn(Geometry::unit(vec![16, 16]).unwrap(), |c| {
            (c[0] as f64 - 7.5).hypot(c[1] as f64 - 7.5) <= 4.0
        });
        assert_eq!(boundary_change_differential(&g, &g, 100).unwrap(), 0.0);
    }

    #[test]
    fn interpolation_hits_pixel_values() {
        let g = ScalarGrid::new(Geometry::unit(vec![2, 2]).unwrap(), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(interpolate(&g, &[1.0, 1.0]), Some(3.0));
        assert_eq!(interpolate(&g, &[0.5, 0.5]), Some(1.5));
        assert_eq!(interpolate(&g, &[0.0, 0.25]), Some(0.25));
        assert_eq!(interpolate(&g, &[1.5, 0.0]), None);
    }

    #[test]
    fn rays_that_leave_the_domain_fail() {
        // S hugs the domain edge on one side only; most outward rays from G
        // never meet it.
        let geom = Geometry::unit(vec![20, 20]).unwrap();
        let g = BinaryMask::from_fn(geom.clone(), |c| (8..12).contains(&c[0]) && (8..12).contains(&c[1]));
        let s = BinaryMask::from_fn(geom, |c| c[1] >= 8);
        assert!(matches!(
            boundary_change_differential(&g, &s, 1000),
            Err(Error::NoIntersection { .. })
        ));
    }
}
