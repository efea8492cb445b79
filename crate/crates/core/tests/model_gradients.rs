//! End-to-end reverse mode of the segmentation net against central finite
//! differences of `loss(net(x))`.

mod common;

use boundloss::losses::{boundary_loss, combined, focal, gdl, hausdorff_loss, weighted_ce, LossResult};
use boundloss::model::{AdamState, ForwardCache, Image, TinySegNet};
use boundloss::{signed_distance, threshold, BinaryMask, DistanceMode, Geometry, HyperParams, ProbMap, RegionalLoss, ScalarGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Larger than the loss-level step: the losses here reach |L| ≈ 10, and the
/// quotient's rounding noise grows with |L| / STEP.
const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-5;
/// Denominator floor of the relative error, as in the loss-level check.
const FLOOR: f64 = 1e-4;

fn random_image(seed: u64, channels: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geom = Geometry::unit(vec![8, 8]).unwrap();
    let grids: Vec<ScalarGrid> = (0..channels)
        .map(|_| ScalarGrid::new(geom.clone(), (0..64).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap())
        .collect();
    Image::from_channels(&grids).unwrap()
}

fn ground_truth() -> BinaryMask {
    BinaryMask::from_fn(Geometry::unit(vec![8, 8]).unwrap(), |c| {
        (2..5).contains(&c[0]) && (3..6).contains(&c[1])
    })
}

/// The smooth piece a parameter vector lies in: ReLU states, pool winners,
/// and the thresholded prediction the Hausdorff loss reads its second
/// distance map from.
fn pattern(cache: &ForwardCache, fg: &ProbMap) -> Vec<u64> {
    let mut p = cache.activation_pattern();
    p.extend(threshold(fg, 0.5).unwrap().values().iter().map(|&v| u64::from(v)));
    p
}

/// Returns (checked, skipped, worst relative error). Parameters whose
/// perturbation leaves the smooth piece are skipped.
fn gradient_check(net: &TinySegNet, image: &Image, loss: &dyn Fn(&ProbMap) -> LossResult) -> (usize, usize, f64) {
    let (pred, cache) = net.forward(image).unwrap();
    let analytic = net.backward(&cache, &loss(&pred.foreground).grad).unwrap();
    let base = pattern(&cache, &pred.foreground);
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    for i in 0..net.params().len() {
        let mut values = [0.0; 2];
        let mut smooth = true;
        for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut p = net.params().to_vec();
            p[i] += sign * STEP;
            let moved = TinySegNet::from_params(net.in_channels(), p).unwrap();
            let (pred, cache) = moved.forward(image).unwrap();
            smooth &= pattern(&cache, &pred.foreground) == base;
            values[k] = loss(&pred.foreground).value;
        }
        if !smooth {
            skipped += 1;
            continue;
        }
        let numeric = (values[0] - values[1]) / (2.0 * STEP);
        let a = analytic.0[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR));
        checked += 1;
    }
    (checked, skipped, worst)
}

#[test]
fn every_loss_passes_end_to_end() {
    let g = ground_truth();
    let phi = signed_distance(&g, DistanceMode::Full3d);
    let dist = phi.magnitude();
    let params = HyperParams::default();
    let losses: Vec<(&str, Box<dyn Fn(&ProbMap) -> LossResult>)> = vec![
        ("boundary", Box::new(|s| boundary_loss(s, &phi).unwrap())),
        ("gdl", Box::new(|s| gdl(s, &g, 1e-10).unwrap())),
        ("weighted_ce", Box::new(|s| weighted_ce(s, &g, &dist, 10.0, 5.0, 1e-10).unwrap())),
        ("focal", Box::new(|s| focal(s, &g, 2.0, 1e-10).unwrap())),
        ("hausdorff", Box::new(|s| hausdorff_loss(s, &g, 2.0, 0.5).unwrap())),
        ("combined", Box::new(|s| combined(s, &g, &phi, RegionalLoss::Gdl, &params, (0.7, 0.3)).unwrap())),
    ];
    let net = TinySegNet::new(2, 5).unwrap();
    let image = random_image(9, 2);
    for (name, loss) in &losses {
        let (checked, skipped, worst) = gradient_check(&net, &image, loss.as_ref());
        assert!(skipped * 100 <= checked, "{name}: {skipped} kinks skipped of {checked}");
        eprintln!("{name}: {checked} checked, {skipped} skipped, worst {worst:e}");
        assert!(worst <= TOLERANCE, "{name}: worst relative error {worst:e}");
    }
}

#[test]
fn backward_is_linear_in_the_upstream_gradient() {
    let net = TinySegNet::new(1, 2).unwrap();
    let image = random_image(3, 1);
    let (pred, cache) = net.forward(&image).unwrap();
    let g = ground_truth();
    let a = gdl(&pred.foreground, &g, 1e-10).unwrap();
    let b = focal(&pred.foreground, &g, 2.0, 1e-10).unwrap();
    let sum = a.linear_combination(1.0, &b, 1.0).unwrap();
    let (ga, gb) = (net.backward(&cache, &a.grad).unwrap(), net.backward(&cache, &b.grad).unwrap());
    let gs = net.backward(&cache, &sum.grad).unwrap();
    for ((x, y), z) in ga.0.iter().zip(&gb.0).zip(&gs.0) {
        assert!((x + y - z).abs() <= 1e-12 * (1.0 + z.abs()));
    }
}

fn train(seed: u64) -> Vec<f64> {
    let mut net = TinySegNet::new(1, seed).unwrap();
    let mut adam = AdamState::new(net.params().len());
    let g = ground_truth();
    for step in 0..5 {
        let image = random_image(step, 1);
        let (pred, cache) = net.forward(&image).unwrap();
        let loss = gdl(&pred.foreground, &g, 1e-10).unwrap();
        let grads = net.backward(&cache, &loss.grad).unwrap();
        net.adam_step(&mut adam, &grads).unwrap();
    }
    net.params().to_vec()
}

#[test]
fn training_trajectories_are_reproducible() {
    assert_eq!(train(4), train(4));
    assert_ne!(train(4), train(5));
}

#[test]
fn training_reduces_the_loss() {
    let mut net = TinySegNet::new(1, 0).unwrap();
    let mut adam = AdamState::with_lr(net.params().len(), 1e-2);
    let g = ground_truth();
    let image = Image::single(&g.to_scalar()).unwrap();
    let loss = |net: &TinySegNet| gdl(&net.predict(&image).unwrap(), &g, 1e-10).unwrap().value;
    let before = loss(&net);
    for _ in 0..30 {
        let (pred, cache) = net.forward(&image).unwrap();
        let grads = net.backward(&cache, &gdl(&pred.foreground, &g, 1e-10).unwrap().grad).unwrap();
        net.adam_step(&mut adam, &grads).unwrap();
    }
    assert!(loss(&net) < 0.5 * before, "{} -> {}", before, loss(&net));
}
