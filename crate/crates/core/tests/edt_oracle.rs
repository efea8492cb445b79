mod common;

use boundloss::edt::{edt, edt_per_slice};
use boundloss::{BinaryMask, Geometry};
use common::center_distance;
use proptest::prelude::*;

fn brute_force(m: &BinaryMask) -> Vec<f64> {
    let geom = m.geometry();
    let features: Vec<usize> = (0..m.len()).filter(|&i| m.get(i)).collect();
    (0..m.len())
        .map(|i| {
            features
                .iter()
                .map(|&j| center_distance(geom, i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) -> Result<(), TestCaseError> {
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        prop_assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_brute_force_2d(m in common::mask(2, 24)) {
        prop_assume!(m.has_foreground());
        assert_close(edt(&m).unwrap().values(), &brute_force(&m), 1e-9)?;
    }

    #[test]
    fn matches_brute_force_3d(m in common::mask(3, 9)) {
        prop_assume!(m.has_foreground());
        assert_close(edt(&m).unwrap().values(), &brute_force(&m), 1e-9)?;
    }

    #[test]
    fn adding_features_never_increases_distance(
        (a, b) in common::mask_pair(2, 16)
    ) {
        prop_assume!(a.has_foreground());
        let union = BinaryMask::new(
            a.geometry().clone(),
            a.values().iter().zip(b.values()).map(|(x, y)| x | y).collect(),
        ).unwrap();
        let (da, du) = (edt(&a).unwrap(), edt(&union).unwrap());
        for (x, y) in da.values().iter().zip(du.values()) {
            prop_assert!(y <= x);
        }
    }

    #[test]
    fn scaling_spacing_scales_distances(m in common::mask(3, 7), k in 0.2f64..5.0) {
        prop_assume!(m.has_foreground());
        let geom = m.geometry();
        let scaled_geom = Geometry::new(
            geom.shape().to_vec(),
            geom.spacing().iter().map(|h| h * k).collect(),
        ).unwrap();
        let scaled = BinaryMask::new(scaled_geom, m.values().to_vec()).unwrap();
        let d = edt(&m).unwrap();
        let ds = edt(&scaled).unwrap();
        for (x, y) in d.values().iter().zip(ds.values()) {
            prop_assert!((x * k - y).abs() <= 1e-9 * (1.0 + y));
        }
    }

    #[test]
    fn in_plane_distances_dominate_volume_distances(m in common::mask(3, 8)) {
        prop_assume!(m.has_foreground());
        let full = edt(&m).unwrap();
        let slices = edt_per_slice(&m).unwrap();
        let plane = m.geometry().shape()[1] * m.geometry().shape()[2];
        for (i, (x, y)) in full.values().iter().zip(slices.field.values()).enumerate() {
            if !slices.empty_slices[i / plane] {
                prop_assert!(y + 1e-12 >= *x);
            }
        }
    }
}
