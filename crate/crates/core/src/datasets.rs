//! Synthetic point clouds used by the experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::measure::{plan_from_map, DeterministicMap, EmbeddingPlan, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    ClusterUp,
    ClusterDown,
    Circle,
}

#[derive(Clone, Debug)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub labels: Vec<Label>,
}

pub const CLUSTER_OFFSET: f64 = 0.2;

/// `cluster_size` points stacked at each of `(0, +-0.2)` followed by
/// `circle_points` uniform draws on the unit circle.
pub fn circle_clusters(cluster_size: usize, circle_points: usize, seed: u64) -> Result<LabeledCloud> {
    if cluster_size + circle_points == 0 {
        return Err(Error::input("circle-clusters needs at least one point"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(2 * cluster_size + circle_points);
    let mut labels = Vec::with_capacity(points.capacity());
    for (y, label) in [(CLUSTER_OFFSET, Label::ClusterUp), (-CLUSTER_OFFSET, Label::ClusterDown)] {
        for _ in 0..cluster_size {
            points.push(vec![0.0, y]);
            labels.push(label);
        }
    }
    for _ in 0..circle_points {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        points.push(vec![theta.cos(), theta.sin()]);
        labels.push(Label::Circle);
    }
    Ok(LabeledCloud {
        cloud: PointCloud::uniform(points)?,
        labels,
    })
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Maps clusters to `+-a` and circle points to `sign(x2)`.
pub fn analytic_init(data: &LabeledCloud, a: f64) -> DeterministicMap {
    let images = data
        .cloud
        .points()
        .zip(&data.labels)
        .map(|(p, l)| match l {
            Label::ClusterUp => a,
            Label::ClusterDown => -a,
            Label::Circle => sign(p[1]),
        })
        .collect();
    DeterministicMap::from_flat(1, images).expect("one image per point")
}

/// Fraction of circle points whose embedding sign, measured from the mean of
/// the circle images, matches `sign(x2)`, up to a global flip.
pub fn circle_sign_agreement(data: &LabeledCloud, images: &[f64]) -> f64 {
    let circle: Vec<(f64, f64)> = data
        .cloud
        .points()
        .zip(&data.labels)
        .zip(images)
        .filter(|((_, l), _)| **l == Label::Circle)
        .map(|((p, _), &y)| (p[1], y))
        .collect();
    if circle.is_empty() {
        return 1.0;
    }
    let center = circle.iter().map(|c| c.1).sum::<f64>() / circle.len() as f64;
    let agree = circle.iter().filter(|&&(x2, y)| sign(x2) == sign(y - center)).count();
    let frac = agree as f64 / circle.len() as f64;
    frac.max(1.0 - frac)
}

/// `per_location` points at each of `(0, 1)` and `(0, -1)`.
pub fn stacked_pair(per_location: usize) -> Result<PointCloud> {
    if per_location == 0 {
        return Err(Error::input("stacked-pair needs at least one point per location"));
    }
    let mut points = vec![vec![0.0, 1.0]; per_location];
    points.extend(vec![vec![0.0, -1.0]; per_location]);
    PointCloud::uniform(points)
}

/// The plan projecting each point onto its second coordinate.
pub fn projection_plan(cloud: &PointCloud, axis: usize) -> Result<EmbeddingPlan> {
    if axis >= cloud.dim() {
        return Err(Error::input(format!("axis {axis} out of range for dimension {}", cloud.dim())));
    }
    let map = DeterministicMap::from_flat(1, cloud.points().map(|p| p[axis]).collect())?;
    plan_from_map(cloud, &map)
}

/// `n` draws of a Gaussian with the given per-axis standard deviations,
/// shifted so the sample mean is exactly zero.
pub fn gaussian(n: usize, std_devs: &[f64], seed: u64) -> Result<PointCloud> {
    if n == 0 || std_devs.is_empty() {
        return Err(Error::input("gaussian sample needs n >= 1 and d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            std_devs
                .iter()
                .map(|s| s * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect()
        })
        .collect();
    Ok(PointCloud::uniform(points)?.centered())
}
