//! Gaussian-blob classification data for fast tests.

use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{FedError, Result};
use crate::seed::rng_from_seed;

/// Class centres in convex position inside the unit cube, plus a noise scale
/// small enough that classes stay linearly separable with high probability.
fn class_centres(num_classes: usize, input_dim: usize) -> (Vec<Vec<f64>>, f64) {
    if input_dim >= num_classes {
        // scaled simplex: one axis per class
        let centres = (0..num_classes)
            .map(|c| {
                let mut v = vec![0.2; input_dim];
                v[c] = 0.8;
                v
            })
            .collect();
        (centres, 0.05)
    } else if input_dim >= 2 {
        let centres = (0..num_classes)
            .map(|c| {
                let theta = std::f64::consts::TAU * c as f64 / num_classes as f64;
                let mut v = vec![0.5; input_dim];
                v[0] += 0.4 * theta.cos();
                v[1] += 0.4 * theta.sin();
                v
            })
            .collect();
        let gap = 0.8 * (std::f64::consts::PI / num_classes as f64).sin();
        (centres, (gap / 8.0).min(0.05))
    } else {
        let gap = 0.8 / (num_classes - 1) as f64;
        let centres = (0..num_classes).map(|c| vec![0.1 + gap * c as f64]).collect();
        (centres, (gap / 8.0).min(0.05))
    }
}

/// `samples_per_class` rows per class, classes interleaved (0, 1, .., K-1, 0, ..).
pub fn generate_synthetic(
    num_classes: usize,
    samples_per_class: usize,
    input_dim: usize,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(FedError::config("synthetic.classes", "must be >= 2"));
    }
    if samples_per_class < 1 {
        return Err(FedError::config("synthetic.samples_per_class", "must be >= 1"));
    }
    if input_dim < 1 {
        return Err(FedError::config("synthetic.input_dim", "must be >= 1"));
    }
    let (centres, sigma) = class_centres(num_classes, input_dim);
    let noise = Normal::new(0.0, sigma).expect("positive sigma");
    let mut rng = rng_from_seed(seed);
    let n = num_classes * samples_per_class;
    let mut features = Vec::with_capacity(n * input_dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % num_classes;
        labels.push(c);
        features.extend(
            centres[c]
                .iter()
                .map(|&mu| (mu + noise.sample(&mut rng)).clamp(0.0, 1.0)),
        );
    }
    Dataset::new("synthetic", features, labels, input_dim, num_classes)
}
