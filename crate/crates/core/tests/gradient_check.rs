//! Backpropagation against central finite differences.

use aapu_core::losses::{loss_grad, LossKind, Margin};
use aapu_core::{Matrix, Mlp, MlpSpec, Mode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Error shrinks as step^2 down to ~1e-7 at this step; 1e-3 leaves ~1e-4 of
// truncation error on small batch-norm batches.
const STEP: f64 = 1e-5;

/// Sum of surrogate losses `l(y_i * g(x_i))` in train mode. Dropout masks
/// are reproduced by reseeding the mask generator on every call.
fn objective(net: &Mlp, x: &Matrix, y: &[f64], kind: LossKind) -> (f64, Vec<bool>) {
    let mut net = net.clone();
    let (scores, cache) = net.forward(x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
    let value = scores.iter().zip(y).map(|(s, t)| kind.value(s * t)).sum();
    let pattern = cache.pre_activations().flatten().map(|&v| v > 0.0).collect();
    (value, pattern)
}

/// Largest relative error over all trainable parameters, and how many
/// parameters were skipped because a perturbation crossed a ReLU kink.
fn check(spec: &MlpSpec, batch: usize, kind: LossKind, data_seed: u64) -> (f64, usize, usize) {
    let net = Mlp::init(spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    let d = spec.input_dim();
    let x = Matrix::from_vec(batch, d, (0..batch * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
    let y: Vec<f64> = (0..batch).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();

    let mut work = net.clone();
    let (scores, cache) = work.forward(&x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
    let dscore: Vec<f64> =
        scores.iter().zip(&y).map(|(s, t)| t * loss_grad(kind, Margin::new(s * t).unwrap()).unwrap()).collect();
    let grads = work.backward(&cache, &dscore).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let (_, base_pattern) = objective(&net, &x, &y, kind);

    let (mut worst, mut skipped, mut checked) = (0.0f64, 0, 0);
    for (k, tensor) in analytic.iter().enumerate() {
        for (i, &a) in tensor.iter().enumerate() {
            let mut plus = net.clone();
            plus.trainable_tensors_mut()[k][i] += STEP;
            let mut minus = net.clone();
            minus.trainable_tensors_mut()[k][i] -= STEP;
            let (fp, pp) = objective(&plus, &x, &y, kind);
            let (fm, pm) = objective(&minus, &x, &y, kind);
            if pp != base_pattern || pm != base_pattern {
                skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * STEP);
            // Rounding noise of the quotient is ~1e-16 * |f| / STEP; the floor sits
            // well above it so exactly-zero gradients compare cleanly.
            let floor = 1e-6 * fp.abs().max(1.0);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (worst, skipped, checked)
}

#[test]
fn small_network_with_batchnorm() {
    let spec = MlpSpec::new(vec![2, 5, 3, 1], 3).with_batchnorm(true);
    let (worst, skipped, checked) = check(&spec, 8, LossKind::Logistic, 1);
    assert!(worst < 1e-4, "max relative error {worst}");
    assert!(skipped * 10 < checked, "skipped {skipped} of {}", skipped + checked);
}

#[test]
fn small_network_without_batchnorm() {
    let spec = MlpSpec::new(vec![2, 5, 3, 1], 4);
    let (worst, _, checked) = check(&spec, 6, LossKind::Sigmoid, 2);
    assert!(checked > 0);
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn dropout_masks_are_differentiated_through() {
    let spec = MlpSpec::new(vec![3, 6, 4, 1], 5).with_batchnorm(true).with_dropout(0.25);
    let (worst, _, _) = check(&spec, 10, LossKind::Logistic, 3);
    assert!(worst < 1e-4, "max relative error {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_architectures(
        hidden in prop::collection::vec(1usize..8, 0..3),
        input in 1usize..4,
        batchnorm in any::<bool>(),
        logistic in any::<bool>(),
        batch in 3usize..10,
        seed in 0u64..1000,
    ) {
        let mut dims = vec![input];
        dims.extend(&hidden);
        dims.push(1);
        let spec = MlpSpec::new(dims, seed).with_batchnorm(batchnorm);
        let kind = if logistic { LossKind::Logistic } else { LossKind::Sigmoid };
        let (worst, _, _) = check(&spec, batch, kind, seed + 1);
        prop_assert!(worst < 1e-4, "max relative error {}", worst);
    }
}
