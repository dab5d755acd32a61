//! Central finite-difference check of the analytic cross-entropy gradient.
//!
//! The loss is piecewise smooth: ReLU units have a kink at zero, where a
//! finite difference straddling the kink measures a subgradient mixture and
//! disagrees with the one-sided analytic convention. Configurations are
//! therefore redrawn until every hidden pre-activation sits at least 1e-3
//! away from zero — the 1e-6 step then never crosses a kink.

use lastlayer::network::{loss_and_gradient, Architecture, NetworkParams};
use lastlayer::seeding;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

/// Smallest |pre-activation| any hidden unit may have before the
/// configuration is redrawn.
const KINK_MARGIN: f64 = 1e-3;

fn min_hidden_margin(params: &NetworkParams, xs: &Array2<f64>) -> f64 {
    let layers = params.layers();
    let mut margin = f64::INFINITY;
    let mut act = xs.clone();
    for layer in &layers[..layers.len() - 1] {
        let z = act.dot(&layer.weights.t()) + &layer.bias;
        for &v in z.iter() {
            margin = margin.min(v.abs());
        }
        act = z.mapv(|v| v.max(0.0));
    }
    margin
}

/// Worst-coordinate relative error between the analytic gradient and a
/// central finite difference, for one randomized configuration of the given
/// architecture. The error is `|a − fd| / max(|a|, |fd|, 1e-3)`: pure
/// relative where the gradient is appreciable, absolute (scaled) near zero
/// where a ratio would amplify finite-difference rounding noise.
pub fn fd_max_rel_err(sizes: &[usize], batch: usize, seed: u64) -> f64 {
    let arch = Architecture::new(sizes.to_vec()).expect("valid test architecture");
    let classes = arch.output_dim();

    let (params, xs, labels) = (0..)
        .map(|attempt| {
            let params = NetworkParams::init(&arch, seeding::derive_indexed(seed, "fd-params", attempt));
            let mut rng =
                ChaCha8Rng::seed_from_u64(seeding::derive_indexed(seed, "fd-data", attempt));
            let xs = Array2::from_shape_simple_fn((batch, arch.input_dim()), || {
                rng.gen_range(-2.0..2.0)
            });
            let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
            (params, xs, labels)
        })
        .find(|(params, xs, _)| min_hidden_margin(params, xs) > KINK_MARGIN)
        .expect("a configuration clear of ReLU kinks exists");

    let (_, grad) = loss_and_gradient(&params, xs.view(), &labels).expect("finite loss");
    let analytic = grad.to_flat();
    let mut flat = params.to_flat();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for i in 0..flat.len() {
        let saved = flat[i];
        flat[i] = saved + FD_STEP;
        probe.unflatten_from(&flat).expect("same shape");
        let (loss_hi, _) = loss_and_gradient(&probe, xs.view(), &labels).expect("finite loss");
        flat[i] = saved - FD_STEP;
        probe.unflatten_from(&flat).expect("same shape");
        let (loss_lo, _) = loss_and_gradient(&probe, xs.view(), &labels).expect("finite loss");
        flat[i] = saved;
        let fd = (loss_hi - loss_lo) / (2.0 * FD_STEP);
        let denom = analytic[i].abs().max(fd.abs()).max(1e-3);
        worst = worst.max((analytic[i] - fd).abs() / denom);
    }
    worst
}

/// Run the finite-difference check over `n_archs` distinct randomized
/// architectures; returns the worst relative error seen.
pub fn fd_sweep(n_archs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    let mut worst = 0.0f64;
    while seen.len() < n_archs {
        let input = rng.gen_range(1..=6usize);
        let hidden: Vec<usize> =
            (0..rng.gen_range(0..=2usize)).map(|_| rng.gen_range(1..=6)).collect();
        let classes = rng.gen_range(2..=5usize);
        let mut sizes = vec![input];
        sizes.extend(hidden);
        sizes.push(classes);
        if !seen.insert(sizes.clone()) {
            continue;
        }
        let batch = rng.gen_range(1..=4);
        let case_seed = rng.gen();
        worst = worst.max(fd_max_rel_err(&sizes, batch, case_seed));
    }
    worst
}
