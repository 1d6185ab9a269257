//! Seeded uniform sampling on the unit sphere.
//!
//! Every stochastic routine draws from `ChaCha8Rng` streams keyed by a run seed
//! and a stream index, so results depend only on `(seed, stream)` and never on
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Normalized standard-normal vector: uniform on the unit sphere of R^dim.
pub fn sample_sphere_with<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// One uniform sphere point, deterministic in `seed`.
pub fn sample_sphere(dim: usize, seed: u64) -> Vec<f64> {
    sample_sphere_with(dim, &mut stream_rng(seed, 0))
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
