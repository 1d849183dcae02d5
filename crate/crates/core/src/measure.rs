//! Discrete measures: the input point cloud, deterministic maps, embedding
//! plans and signed perturbations of plans.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the deviation of raw weights from a unit total before the
/// input is rejected instead of renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-6;

/// Max-norm distance under which two atoms of the same row are merged.
pub const MERGE_TOL: f64 = 1e-12;

/// Tolerance on row masses and zero-marginal checks.
pub const MASS_TOL: f64 = 1e-12;

/// Weighted atoms in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl PointCloud {
    /// Builds a cloud from points and optional weights (uniform when `None`).
    ///
    /// Zero-weight atoms are dropped. Weights whose total is within
    /// [`RENORMALIZE_TOL`] of one are renormalized; anything else is an error.
    pub fn new(points: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::input("point cloud needs at least one point"))?;
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::input(format!(
                    "point {i} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords, weights)
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(points, None)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("point dimension must be positive"));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::input(format!(
                "{} coordinates do not form points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::input(format!(
                "point {} has a non-finite coordinate",
                k / dim
            )));
        }
        let n = coords.len() / dim;
        let weights = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(Error::input(format!(
                        "{} weights for {n} points",
                        w.len()
                    )));
                }
                w
            }
            None => vec![1.0 / n as f64; n],
        };
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::input(format!("weight {i} is {w}, must be >= 0")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_TOL {
            return Err(Error::input(format!(
                "weights sum to {total}, expected 1 (tolerance {RENORMALIZE_TOL})"
            )));
        }

        let mut kept_coords = Vec::with_capacity(coords.len());
        let mut kept_weights = Vec::with_capacity(n);
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                kept_coords.extend_from_slice(&coords[i * dim..(i + 1) * dim]);
                kept_weights.push(w);
            }
        }
        if kept_weights.is_empty() {
            return Err(Error::input("all weights are zero"));
        }
        let total: f64 = kept_weights.iter().sum();
        for w in &mut kept_weights {
            *w /= total;
        }
        Ok(Self {
            dim,
            coords: kept_coords,
            weights: kept_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Weighted mean of the points.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (p, &w) in self.points().zip(&self.weights) {
            for (m, &c) in mean.iter_mut().zip(p) {
                *m += w * c;
            }
        }
        mean
    }

    /// Same weights, every point translated by `-mean()`.
    pub fn centered(&self) -> PointCloud {
        let mean = self.mean();
        let coords = self
            .points()
            .flat_map(|p| p.iter().zip(&mean).map(|(c, m)| c - m))
            .collect();
        PointCloud {
            dim: self.dim,
            coords,
            weights: self.weights.clone(),
        }
    }
}

/// A map `T: R^d -> R^m` given by its value at each source atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterministicMap {
    dim_m: usize,
    images: Vec<f64>,
}

impl DeterministicMap {
    pub fn new(images: Vec<Vec<f64>>) -> Result<Self> {
        let dim_m = images
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::input("map needs at least one image"))?;
        let mut flat = Vec::with_capacity(images.len() * dim_m);
        for (i, y) in images.iter().enumerate() {
            if y.len() != dim_m {
                return Err(Error::input(format!(
                    "image {i} has dimension {}, expected {dim_m}",
                    y.len()
                )));
            }
            flat.extend_from_slice(y);
        }
        Self::from_flat(dim_m, flat)
    }

    pub fn from_flat(dim_m: usize, images: Vec<f64>) -> Result<Self> {
        if dim_m == 0 || images.is_empty() || !images.len().is_multiple_of(dim_m) {
            return Err(Error::input(format!(
                "{} image coordinates do not form vectors of dimension {dim_m}",
                images.len()
            )));
        }
        Ok(Self { dim_m, images })
    }

    pub fn len(&self) -> usize {
        self.images.len() / self.dim_m
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * self.dim_m..(i + 1) * self.dim_m]
    }

    pub fn images(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.images.chunks_exact(self.dim_m)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.images
    }

    /// The map `x -> -T(x)`.
    pub fn negated(&self) -> DeterministicMap {
        DeterministicMap {
            dim_m: self.dim_m,
            images: self.images.iter().map(|v| -v).collect(),
        }
    }

    pub(crate) fn check_cloud(&self, cloud: &PointCloud) -> Result<()> {
        if self.len() != cloud.len() {
            return Err(Error::input(format!(
                "map has {} images for {} points",
                self.len(),
                cloud.len()
            )));
        }
        Ok(())
    }
}

/// One embedded atom of a plan row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mass: f64,
    pub y: Vec<f64>,
}

impl Atom {
    pub fn new(mass: f64, y: Vec<f64>) -> Self {
        Self { mass, y }
    }
}

/// A coupling with feature marginal `mu`: row `i` is the conditional
/// sub-distribution of images of source atom `i`, with total mass `w_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPlan {
    dim_m: usize,
    rows: Vec<Vec<Atom>>,
}

pub(crate) fn max_norm_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

impl EmbeddingPlan {
    /// Builds a plan and checks it against the cloud's weights.
    ///
    /// Atoms with non-positive mass are dropped and atoms closer than
    /// [`MERGE_TOL`] (max-norm) within a row are merged. Row totals must match
    /// the source weights to within `1e-9`; they are then rescaled to match
    /// exactly.
    pub fn new(cloud: &PointCloud, rows: Vec<Vec<Atom>>) -> Result<Self> {
        if rows.len() != cloud.len() {
            return Err(Error::input(format!(
                "plan has {} rows for {} source points",
                rows.len(),
                cloud.len()
            )));
        }
        let dim_m = rows
            .iter()
            .flatten()
            .map(|a| a.y.len())
            .next()
            .ok_or_else(|| Error::input("plan has no atoms"))?;
        Self::canonical(dim_m, rows, cloud.weights(), 1e-9)
    }

    fn canonical(dim_m: usize, rows: Vec<Vec<Atom>>, weights: &[f64], tol: f64) -> Result<Self> {
        if dim_m == 0 {
            return Err(Error::input("embedding dimension must be positive"));
        }
        let mut out = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            let mut merged: Vec<Atom> = Vec::with_capacity(row.len());
            for atom in row {
                if atom.y.len() != dim_m {
                    return Err(Error::input(format!(
                        "row {i} has an atom of dimension {}, expected {dim_m}",
                        atom.y.len()
                    )));
                }
                if !atom.mass.is_finite() || atom.y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::input(format!("row {i} has a non-finite atom")));
                }
                if atom.mass < 0.0 {
                    return Err(Error::input(format!(
                        "row {i} has negative mass {}",
                        atom.mass
                    )));
                }
                if atom.mass == 0.0 {
                    continue;
                }
                match merged
                    .iter_mut()
                    .find(|a| max_norm_dist(&a.y, &atom.y) <= MERGE_TOL)
                {
                    Some(existing) => existing.mass += atom.mass,
                    None => merged.push(atom),
                }
            }
            let total: f64 = merged.iter().map(|a| a.mass).sum();
            let w = weights[i];
            if (total - w).abs() > tol.max(MASS_TOL) {
                return Err(Error::input(format!(
                    "row {i} carries mass {total}, source weight is {w}"
                )));
            }
            if merged.is_empty() {
                return Err(Error::input(format!("row {i} has no atoms")));
            }
            let scale = w / total;
            for a in &mut merged {
                a.mass *= scale;
            }
            out.push(merged);
        }
        Ok(Self { dim_m, rows: out })
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    pub fn rows(&self) -> &[Vec<Atom>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[Atom] {
        &self.rows[i]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row_mass(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|a| a.mass).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.rows.iter().flatten().map(|a| a.mass).sum()
    }

    pub fn is_deterministic(&self) -> bool {
        self.rows.iter().all(|r| r.len() == 1)
    }

    /// Mass-weighted mean of all atoms.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim_m];
        for a in self.rows.iter().flatten() {
            for (m, v) in mean.iter_mut().zip(&a.y) {
                *m += a.mass * v;
            }
        }
        mean
    }

    /// Every atom translated by `shift`.
    pub fn translated(&self, shift: &[f64]) -> EmbeddingPlan {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|a| Atom::new(a.mass, a.y.iter().zip(shift).map(|(v, s)| v + s).collect()))
                    .collect()
            })
            .collect();
        EmbeddingPlan {
            dim_m: self.dim_m,
            rows,
        }
    }

    /// Applies `f` to every atom location.
    pub fn map_atoms(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> EmbeddingPlan {
        let rows = self
            .rows
            .iter()
            .map(|r| r.iter().map(|a| Atom::new(a.mass, f(&a.y))).collect())
            .collect();
        EmbeddingPlan {
            dim_m: self.dim_m,
            rows,
        }
    }

    /// The heaviest atom of each row, as a map.
    pub fn barycentric_map(&self) -> DeterministicMap {
        let images = self
            .rows
            .iter()
            .flat_map(|r| {
                r.iter()
                    .max_by(|a, b| a.mass.total_cmp(&b.mass))
                    .map(|a| a.y.clone())
                    .unwrap_or_default()
            })
            .collect();
        DeterministicMap {
            dim_m: self.dim_m,
            images,
        }
    }

    /// Flattened view used by the pairwise loops.
    pub fn atoms(&self) -> AtomTable {
        let n = self.n_atoms();
        let mut table = AtomTable {
            dim_m: self.dim_m,
            src: Vec::with_capacity(n),
            mass: Vec::with_capacity(n),
            y: Vec::with_capacity(n * self.dim_m),
        };
        for (i, row) in self.rows.iter().enumerate() {
            for a in row {
                table.src.push(i);
                table.mass.push(a.mass);
                table.y.extend_from_slice(&a.y);
            }
        }
        table
    }

    pub(crate) fn check_cloud(&self, cloud: &PointCloud) -> Result<()> {
        if self.rows.len() != cloud.len() {
            return Err(Error::input(format!(
                "plan has {} rows for {} source points",
                self.rows.len(),
                cloud.len()
            )));
        }
        for i in 0..self.rows.len() {
            let m = self.row_mass(i);
            if (m - cloud.weight(i)).abs() > 1e-9 {
                return Err(Error::input(format!(
                    "row {i} carries mass {m}, source weight is {}",
                    cloud.weight(i)
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn from_rows_unchecked(dim_m: usize, rows: Vec<Vec<Atom>>) -> Self {
        Self { dim_m, rows }
    }

    /// Re-canonicalizes rows after an in-crate edit, keeping row masses.
    pub(crate) fn recanonical(dim_m: usize, rows: Vec<Vec<Atom>>, weights: &[f64]) -> Result<Self> {
        Self::canonical(dim_m, rows, weights, 1e-9)
    }
}

/// Struct-of-arrays view of a plan's atoms.
#[derive(Clone, Debug)]
pub struct AtomTable {
    pub dim_m: usize,
    pub src: Vec<usize>,
    pub mass: Vec<f64>,
    pub y: Vec<f64>,
}

impl AtomTable {
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    #[inline]
    pub fn y(&self, k: usize) -> &[f64] {
        &self.y[k * self.dim_m..(k + 1) * self.dim_m]
    }
}

/// Translates a plan so its mass-weighted atom mean is zero.
pub fn center_plan(plan: &EmbeddingPlan) -> EmbeddingPlan {
    let mean = plan.mean();
    let shift: Vec<f64> = mean.iter().map(|m| -m).collect();
    plan.translated(&shift)
}

/// The plan supported on the graph of `map`: one atom per source, mass `w_i`.
pub fn plan_from_map(cloud: &PointCloud, map: &DeterministicMap) -> Result<EmbeddingPlan> {
    map.check_cloud(cloud)?;
    let rows = map
        .images()
        .zip(cloud.weights())
        .map(|(y, &w)| vec![Atom::new(w, y.to_vec())])
        .collect();
    Ok(EmbeddingPlan::from_rows_unchecked(map.dim_m(), rows))
}

/// A signed measure with zero feature marginal, stored per source row.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    dim_m: usize,
    rows: Vec<Vec<Atom>>,
}

impl Perturbation {
    /// `rows[i]` holds signed `(delta_mass, atom)` pairs; each row must sum
    /// to zero within [`MASS_TOL`] relative to its absolute mass.
    pub fn new(dim_m: usize, rows: Vec<Vec<Atom>>) -> Result<Self> {
        let gamma = Self { dim_m, rows };
        gamma.check()?;
        Ok(gamma)
    }

    /// Re-checks the zero-marginal and dimension invariants.
    pub fn check(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            let sum: f64 = row.iter().map(|a| a.mass).sum();
            let abs: f64 = row.iter().map(|a| a.mass.abs()).sum();
            if sum.abs() > MASS_TOL * abs.max(1.0) {
                return Err(Error::input(format!(
                    "perturbation row {i} has nonzero marginal {sum}"
                )));
            }
            if let Some(a) = row.iter().find(|a| a.y.len() != self.dim_m) {
                return Err(Error::input(format!(
                    "perturbation row {i} has an atom of dimension {}, expected {}",
                    a.y.len(),
                    self.dim_m
                )));
            }
        }
        Ok(())
    }

    pub fn zero(n_rows: usize, dim_m: usize) -> Self {
        Self {
            dim_m,
            rows: vec![Vec::new(); n_rows],
        }
    }

    /// Moves mass `q` of source `source` from `from` to `to`.
    pub fn needle(n_rows: usize, source: usize, q: f64, from: &[f64], to: &[f64]) -> Self {
        let mut rows = vec![Vec::new(); n_rows];
        rows[source] = vec![Atom::new(q, to.to_vec()), Atom::new(-q, from.to_vec())];
        Self {
            dim_m: from.len(),
            rows,
        }
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    pub fn rows(&self) -> &[Vec<Atom>] {
        &self.rows
    }

    pub fn atoms(&self) -> AtomTable {
        let mut table = AtomTable {
            dim_m: self.dim_m,
            src: Vec::new(),
            mass: Vec::new(),
            y: Vec::new(),
        };
        for (i, row) in self.rows.iter().enumerate() {
            for a in row {
                table.src.push(i);
                table.mass.push(a.mass);
                table.y.extend_from_slice(&a.y);
            }
        }
        table
    }
}
