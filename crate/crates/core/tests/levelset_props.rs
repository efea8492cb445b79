mod common;

use boundloss::levelset::{boundary_change_differential, boundary_change_integral};
use boundloss::losses::boundary_loss;
use boundloss::{signed_distance, BinaryMask, DistanceMode, Geometry, ProbMap};
use common::center_distance;
use proptest::prelude::*;

/// Signed distance by definition: minus the distance to the nearest
/// background center inside, plus the distance to the nearest foreground
/// center outside.
fn brute_signed(g: &BinaryMask) -> Vec<f64> {
    let geom = g.geometry();
    (0..g.len())
        .map(|i| {
            let other: Vec<usize> = (0..g.len()).filter(|&j| g.get(j) != g.get(i)).collect();
            let d = other.iter().map(|&j| center_distance(geom, i, j)).fold(f64::INFINITY, f64::min);
            if g.get(i) { -d } else { d }
        })
        .collect()
}

fn disc(n: usize, r: f64) -> BinaryMask {
    let c = (n as f64 - 1.0) / 2.0;
    BinaryMask::from_fn(Geometry::unit(vec![n, n]).unwrap(), |p| {
        (p[0] as f64 - c).hypot(p[1] as f64 - c) <= r
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signed_distance_matches_definition(g in common::mask(2, 12)) {
        let phi = signed_distance(&g, DistanceMode::Full3d);
        if g.is_degenerate() {
            prop_assert!(phi.values().iter().all(|&v| v == 0.0));
        } else {
            for (a, b) in phi.values().iter().zip(brute_signed(&g)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn per_slice_mode_is_slicewise_2d(g in common::mask(3, 7)) {
        let phi = signed_distance(&g, DistanceMode::PerSlice2d);
        for z in 0..g.geometry().shape()[0] {
            let plane = signed_distance(&g.slice(z).unwrap(), DistanceMode::Full3d);
            let slice = phi.slice(z).unwrap();
            prop_assert_eq!(slice.values(), plane.values());
        }
    }

    #[test]
    fn integral_equals_scaled_boundary_loss_difference((g, s) in common::mask_pair(2, 14)) {
        prop_assume!(g.has_foreground());
        let phi = signed_distance(&g, DistanceMode::Full3d);
        let lb = |m: &BinaryMask| boundary_loss(&ProbMap::from_mask(m), &phi).unwrap().value;
        let geom = g.geometry();
        let rhs = 2.0 * geom.len() as f64 * geom.voxel_volume() * (lb(&s) - lb(&g));
        let lhs = boundary_change_integral(&g, &s).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn ground_truth_is_the_unique_binary_minimum(g in common::mask(2, 3)) {
        prop_assume!(!g.is_degenerate());
        let phi = signed_distance(&g, DistanceMode::Full3d);
        let n = g.len();
        let at_g = boundary_loss(&ProbMap::from_mask(&g), &phi).unwrap().value;
        for bits in 0u32..(1 << n) {
            let s = BinaryMask::new(
                g.geometry().clone(),
                (0..n).map(|i| ((bits >> i) & 1) as u8).collect(),
            ).unwrap();
            if s != g {
                let v = boundary_loss(&ProbMap::from_mask(&s), &phi).unwrap().value;
                prop_assert!(v > at_g);
            }
        }
    }

    #[test]
    fn boundary_loss_gradient_sign(g in common::mask(2, 10)) {
        prop_assume!(!g.is_degenerate());
        let phi = signed_distance(&g, DistanceMode::Full3d);
        let s = ProbMap::constant(g.geometry().clone(), 0.5).unwrap();
        let grad = boundary_loss(&s, &phi).unwrap().grad;
        for (i, d) in grad.values().iter().enumerate() {
            // descent raises s inside G and lowers it outside
            prop_assert_eq!(*d < 0.0, g.get(i));
        }
    }
}

/// Closed form of the contour distance between concentric circles.
fn concentric(r: f64, delta: f64) -> f64 {
    2.0 * std::f64::consts::PI * r * delta * delta
}

#[test]
fn differential_matches_concentric_closed_form() {
    for (r, d) in [(30.0, 3.0), (40.0, 4.0), (30.0, 6.0)] {
        let got = boundary_change_differential(&disc(128, r), &disc(128, r + d), 100_000).unwrap();
        let want = concentric(r, d);
        assert!((got / want - 1.0).abs() < 0.1, "r={r} δ={d}: {got} vs {want}");
    }
}

/// Ray-length oracle for a disc of radius `r` and the same disc shifted by
/// `t` along x: the normal ray from angle θ travels
/// `t cos θ + sqrt(r² - t² sin² θ) - r`.
fn shifted(r: f64, t: f64) -> f64 {
    let n = 100_000;
    let sum: f64 = (0..n)
        .map(|k| {
            let th = std::f64::consts::TAU * (k as f64 + 0.5) / n as f64;
            let d = t * th.cos() + (r * r - (t * th.sin()).powi(2)).sqrt() - r;
            d * d
        })
        .sum();
    sum / n as f64 * std::f64::consts::TAU * r
}

#[test]
fn differential_matches_shifted_disc_oracle() {
    let n = 128;
    let c = (n as f64 - 1.0) / 2.0;
    for (r, t) in [(30.0, 4.0), (20.0, 3.0)] {
        let g = disc(n, r);
        let s = BinaryMask::from_fn(g.geometry().clone(), |p| {
            (p[0] as f64 - c).hypot(p[1] as f64 - c - t) <= r
        });
        let got = boundary_change_differential(&g, &s, 100_000).unwrap();
        let want = shifted(r, t);
        assert!((got / want - 1.0).abs() < 0.1, "r={r} t={t}: {got} vs {want}");
    }
}
