use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::measure::{DeterministicMap, PointCloud};

/// Top-`m` eigenvectors of the weighted covariance, as columns, sorted by
/// decreasing eigenvalue. Each column is signed so its largest entry is positive.
pub fn principal_axes(cloud: &PointCloud, m: usize) -> (Vec<f64>, DMatrix<f64>) {
    let d = cloud.dim();
    let mean = cloud.mean();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (p, &w) in cloud.points().zip(cloud.weights()) {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += w * (p[i] - mean[i]) * (p[j] - mean[j]);
            }
        }
    }
    let eig = SymmetricEigen::new((&cov + cov.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = DMatrix::<f64>::zeros(d, m);
    for (c, &k) in order.iter().take(m).enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let lead = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
        if lead < 0.0 {
            v = -v;
        }
        axes.set_column(c, &v);
    }
    (order.iter().map(|&k| eig.eigenvalues[k]).collect(), axes)
}

/// Orthogonal projection of the centered cloud onto its top `m` principal axes.
pub fn pca_solve(cloud: &PointCloud, m: usize) -> Result<DeterministicMap> {
    let d = cloud.dim();
    if m == 0 || m > d {
        return Err(Error::input(format!("PCA needs 1 <= m <= d, got m = {m}, d = {d}")));
    }
    let (_, axes) = principal_axes(cloud, m);
    let mean = cloud.mean();
    let mut flat = Vec::with_capacity(cloud.len() * m);
    for p in cloud.points() {
        for c in 0..m {
            flat.push((0..d).map(|i| axes[(i, c)] * (p[i] - mean[i])).sum());
        }
    }
    DeterministicMap::from_flat(m, flat)
}

/// Largest principal angle (radians) between the column spans of `a` and `b`.
pub fn largest_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let qa = qa.columns(0, a.ncols().min(a.nrows())).into_owned();
    let qb = qb.columns(0, b.ncols().min(b.nrows())).into_owned();
    let sv = (qa.transpose() * qb).singular_values();
    let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min).clamp(-1.0, 1.0);
    smallest.acos()
}
