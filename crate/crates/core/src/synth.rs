//! Seeded synthetic weights drawn from a [`DistributionModel`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::distributions::{DistributionModel, ModelKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One draw from the standardized model.
pub fn draw_standard<R: Rng + ?Sized>(kind: ModelKind, rng: &mut R) -> f64 {
    match kind {
        ModelKind::Gaussian => rng.sample(StandardNormal),
        ModelKind::Laplace => {
            // Inverse CDF on u in (-1/2, 1/2).
            let u: f64 = rng.random::<f64>() - 0.5;
            let tail = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
            -u.signum() * tail.ln()
        }
    }
}

pub fn sample_with<R: Rng + ?Sized>(model: &DistributionModel, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| model.destandardize(draw_standard(model.kind, rng))).collect()
}

pub fn sample_f64(model: &DistributionModel, n: usize, seed: u64) -> Vec<f64> {
    sample_with(model, n, &mut rng(seed))
}

pub fn sample_f32(model: &DistributionModel, n: usize, seed: u64) -> Vec<f32> {
    sample_f64(model, n, seed).into_iter().map(|x| x as f32).collect()
}
