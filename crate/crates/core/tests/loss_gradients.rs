//! Central finite differences against every analytic loss gradient.

mod common;

use boundloss::losses::{
    boundary_loss, combined, focal, gdl, hausdorff_loss, weighted_ce, LossResult,
};
use boundloss::{signed_distance, BinaryMask, DistanceMode, Geometry, HyperParams, ProbMap, RegionalLoss};
use proptest::prelude::*;

const STEP: f64 = 1e-6;
const TOLERANCE: f64 = 1e-6;
/// Denominator floor of the relative error. The difference quotient carries
/// rounding noise of about `ε·|L| / STEP ≈ 1e-11`, so gradients much smaller
/// than this floor are compared absolutely (to `TOLERANCE·FLOOR`).
const FLOOR: f64 = 1e-4;

fn check(s: &ProbMap, f: impl Fn(&ProbMap) -> LossResult) -> Result<(), TestCaseError> {
    let analytic = f(s).grad;
    for i in 0..s.len() {
        let mut plus = s.values().to_vec();
        let mut minus = plus.clone();
        plus[i] += STEP;
        minus[i] -= STEP;
        let lp = f(&ProbMap::new(s.geometry().clone(), plus).unwrap()).value;
        let lm = f(&ProbMap::new(s.geometry().clone(), minus).unwrap()).value;
        let numeric = (lp - lm) / (2.0 * STEP);
        let a = analytic.values()[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
        prop_assert!(err <= TOLERANCE, "pixel {i}: analytic {a}, numeric {numeric}, rel {err}");
    }
    Ok(())
}

fn instance() -> impl Strategy<Value = (BinaryMask, ProbMap)> {
    let geom = Geometry::unit(vec![8, 8]).unwrap();
    (common::mask_in(geom.clone(), 0.2), common::probs(geom, 0.02, 0.98))
        .prop_filter("probabilities away from the threshold", |(_, s)| {
            s.values().iter().all(|p| (p - 0.5).abs() > 1e-4)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn boundary((g, s) in instance()) {
        let phi = signed_distance(&g, DistanceMode::Full3d);
        check(&s, |s| boundary_loss(s, &phi).unwrap())?;
    }

    #[test]
    fn generalized_dice((g, s) in instance()) {
        check(&s, |s| gdl(s, &g, 1e-10).unwrap())?;
    }

    #[test]
    fn distance_weighted_ce((g, s) in instance()) {
        let d = signed_distance(&g, DistanceMode::Full3d).magnitude();
        check(&s, |s| weighted_ce(s, &g, &d, 10.0, 5.0, 1e-10).unwrap())?;
    }

    #[test]
    fn focal_loss((g, s) in instance(), gamma in 0.0f64..4.0) {
        check(&s, |s| focal(s, &g, gamma, 1e-10).unwrap())?;
    }

    #[test]
    fn hausdorff((g, s) in instance()) {
        check(&s, |s| hausdorff_loss(s, &g, 2.0, 0.5).unwrap())?;
    }

    #[test]
    fn combined_losses((g, s) in instance(), w_r in 0.0f64..1.0, w_b in 0.0f64..1.0) {
        let phi = signed_distance(&g, DistanceMode::Full3d);
        let params = HyperParams::default();
        for r in [RegionalLoss::Gdl, RegionalLoss::WeightedCe, RegionalLoss::Focal] {
            check(&s, |s| combined(s, &g, &phi, r, &params, (w_r, w_b)).unwrap())?;
        }
    }
}
