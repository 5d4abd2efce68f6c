//! Fixtures shared by the benchmarks in `benches/`.

use omd_core::{DepthProfile, DistanceMatrix, MassField, MatrixMetric};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Normalized field on an `n x n` one-degree grid with a smooth large-scale
/// pattern plus noise.
pub fn grid_field(n: usize, seed: u64) -> MassField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.random_range(0.0..6.28);
    let points: Vec<(f64, f64, f64)> = (0..n * n)
        .map(|k| {
            let (r, c) = ((k / n) as f64, (k % n) as f64);
            let smooth = 1.5 + (0.3 * c + phase).sin() * (0.2 * r).cos();
            (-150.0 + c + 0.5, -20.0 + r + 0.5, smooth + rng.random_range(0.0..0.2))
        })
        .collect();
    MassField::from_lonlat(format!("g{seed}"), &points).unwrap().normalize().unwrap()
}

pub fn random_profile(bins: usize, seed: u64) -> DepthProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depths = (0..bins).map(|k| 5.0 * k as f64).collect();
    let values = (0..bins).map(|_| rng.random_range(0.0..1.0)).collect();
    DepthProfile::new(Default::default(), "bench", depths, values).unwrap()
}

/// Euclidean distances between `n` random planar points.
pub fn planar_matrix(n: usize, seed: u64) -> DistanceMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let entries = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| Some((a.0 - b.0).hypot(a.1 - b.1))))
        .collect();
    let labels = (0..n).map(|k| format!("p{k}")).collect();
    DistanceMatrix::new(labels, entries, MatrixMetric::W2Km).unwrap()
}
