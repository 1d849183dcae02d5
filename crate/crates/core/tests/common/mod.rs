#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use somds::{Atom, EmbeddingPlan, PointCloud};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, rng)
}

pub fn normals(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| normal(rng)).collect()
}

/// Gaussian points with random positive weights.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PointCloud {
    let points = (0..n).map(|_| normals(rng, d)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    PointCloud::new(points, Some(raw.iter().map(|w| w / total).collect())).unwrap()
}

/// Rows with up to `max_atoms` Gaussian atoms splitting each point's weight.
pub fn random_plan(rng: &mut ChaCha8Rng, cloud: &PointCloud, m: usize, max_atoms: usize) -> EmbeddingPlan {
    let rows = (0..cloud.len())
        .map(|i| {
            let k = rng.random_range(1..=max_atoms);
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.iter()
                .map(|r| Atom::new(cloud.weight(i) * r / total, normals(rng, m)))
                .collect()
        })
        .collect();
    EmbeddingPlan::new(cloud, rows).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}
