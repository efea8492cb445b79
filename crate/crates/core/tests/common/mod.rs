#![allow(dead_code)]

use boundloss::{BinaryMask, Geometry, ProbMap};
use proptest::prelude::*;

/// Random geometry with the given rank, extents in `1..=max_extent` and
/// spacings in `[0.3, 3]`.
pub fn geometry(ndim: usize, max_extent: usize) -> impl Strategy<Value = Geometry> {
    (
        prop::collection::vec(1..=max_extent, ndim),
        prop::collection::vec(0.3f64..3.0, ndim),
    )
        .prop_map(|(shape, spacing)| Geometry::new(shape, spacing).unwrap())
}

/// Random mask whose pixels are foreground with probability `density`.
pub fn mask_in(geom: Geometry, density: f64) -> impl Strategy<Value = BinaryMask> {
    let n = geom.len();
    prop::collection::vec(prop::bool::weighted(density), n).prop_map(move |bits| {
        BinaryMask::new(geom.clone(), bits.into_iter().map(u8::from).collect()).unwrap()
    })
}

pub fn mask(ndim: usize, max_extent: usize) -> impl Strategy<Value = BinaryMask> {
    (geometry(ndim, max_extent), 0.02f64..0.6).prop_flat_map(|(g, d)| mask_in(g, d))
}

/// Two masks on one geometry.
pub fn mask_pair(ndim: usize, max_extent: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (geometry(ndim, max_extent), 0.05f64..0.6, 0.05f64..0.6)
        .prop_flat_map(|(g, a, b)| (mask_in(g.clone(), a), mask_in(g, b)))
}

/// Physical distance between the centers of flat indices `i` and `j`.
pub fn center_distance(geom: &Geometry, i: usize, j: usize) -> f64 {
    let (a, b) = (geom.unravel(i), geom.unravel(j));
    a.iter()
        .zip(&b)
        .zip(geom.spacing())
        .map(|((&x, &y), h)| ((x as f64 - y as f64) * h).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Probabilities in `[lo, hi]` on `geom`.
pub fn probs(geom: Geometry, lo: f64, hi: f64) -> impl Strategy<Value = ProbMap> {
    let n = geom.len();
    prop::collection::vec(lo..hi, n).prop_map(move |v| ProbMap::new(geom.clone(), v).unwrap())
}
