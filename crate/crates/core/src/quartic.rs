//! The qMDS marginal problem in closed form.
//!
//! For the cost `(|x-x'|^2 - |y-y'|^2)^2` and a plan centered in `y`, the
//! marginal problem is the quartic
//!
//! ```text
//! J(y|x) = |y|^4 - 2 y' Psi(x) y - 4 phi(x)' y + zeta(x)
//! ```
//!
//! whose coefficients depend on `x` only through a handful of plan moments.
//! The feature mean `x_bar` is kept explicitly, so clouds that are not
//! centered in `x` are handled as well; with `x_bar = 0` the coefficients
//! reduce to `Psi = |x|^2 I - S`, `phi = 2 Phi x + b` and
//! `zeta = |x|^4 + 4 x' Cxx x - 2 |x|^2 s1 + 4 a1' x + s2`.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cost::{dot, sq_norm};
use crate::error::{Error, Result};
use crate::io::fmt17;
use crate::measure::{AtomTable, EmbeddingPlan, PointCloud};
use crate::sum::KahanSum;

/// Relative value tolerance for declaring two minimizers tied.
pub const TOL_VALUE: f64 = 1e-9;

/// Eigenvalues closer than this (relative to the spectrum scale) form one cluster.
pub const EIGEN_GAP: f64 = 1e-9;

/// Minimizers closer than this, relative to `1 + |y|`, are one minimizer.
pub const DUPLICATE_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub dim_d: usize,
    pub dim_m: usize,
    /// Mass-weighted mean of the features.
    pub x_mean: Vec<f64>,
    /// Mass-weighted mean of the atoms, removed before the other moments.
    pub y_mean: Vec<f64>,
    /// `sum mass [2 y'y'^T + (|y'|^2 - |x'|^2) I]`, row major `m x m`.
    pub s: Vec<Vec<f64>>,
    /// `sum mass y' x'^T`, `m x d`.
    pub phi: Vec<Vec<f64>>,
    /// `sum mass y' (|y'|^2 - |x'|^2)`.
    pub b: Vec<f64>,
    /// `sum w x' x'^T`, `d x d`.
    pub cxx: Vec<Vec<f64>>,
    pub s1: f64,
    pub s2: f64,
    /// `sum mass (|y'|^2 - |x'|^2) x'`.
    pub a1: Vec<f64>,
    /// Eigenvalues of `S`, ascending.
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[j]` belongs to `eigenvalues[j]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::input(format!("moment field '{what}' must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Eigenpairs sorted ascending by eigenvalue.
fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Moments of `plan` after centering it in `y`.
pub fn compute_moments(plan: &EmbeddingPlan, cloud: &PointCloud) -> Result<MomentSet> {
    plan.check_cloud(cloud)?;
    Ok(moments_of_table(&plan.atoms(), cloud))
}

pub(crate) fn moments_of_table(table: &AtomTable, cloud: &PointCloud) -> MomentSet {
    let m = table.dim_m;
    let d = cloud.dim();
    let n = table.len();

    let mut y_mean = vec![KahanSum::new(); m];
    let mut x_mean = vec![KahanSum::new(); d];
    for k in 0..n {
        let w = table.mass[k];
        for (acc, v) in y_mean.iter_mut().zip(table.y(k)) {
            acc.add(w * v);
        }
        for (acc, v) in x_mean.iter_mut().zip(cloud.point(table.src[k])) {
            acc.add(w * v);
        }
    }
    let y_mean: Vec<f64> = y_mean.iter().map(KahanSum::value).collect();
    let x_mean: Vec<f64> = x_mean.iter().map(KahanSum::value).collect();

    let mut s = DMatrix::<f64>::zeros(m, m);
    let mut phi = DMatrix::<f64>::zeros(m, d);
    let mut cxx = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(m);
    let mut a1 = DVector::<f64>::zeros(d);
    let (mut s1, mut s2) = (KahanSum::new(), KahanSum::new());
    let mut y = vec![0.0; m];
    for k in 0..n {
        let w = table.mass[k];
        let x = cloud.point(table.src[k]);
        for (c, (v, mu)) in y.iter_mut().zip(table.y(k).iter().zip(&y_mean)) {
            *c = v - mu;
        }
        let u = sq_norm(&y) - sq_norm(x);
        for i in 0..m {
            for j in 0..m {
                s[(i, j)] += w * 2.0 * y[i] * y[j];
            }
            s[(i, i)] += w * u;
            for j in 0..d {
                phi[(i, j)] += w * y[i] * x[j];
            }
            b[i] += w * y[i] * u;
        }
        for i in 0..d {
            for j in 0..d {
                cxx[(i, j)] += w * x[i] * x[j];
            }
            a1[i] += w * u * x[i];
        }
        s1.add(w * u);
        s2.add(w * u * u);
    }
    let s = (&s + s.transpose()) * 0.5;
    let cxx = (&cxx + cxx.transpose()) * 0.5;
    let (eigenvalues, vectors) = sorted_eigen(&s);
    MomentSet {
        dim_d: d,
        dim_m: m,
        x_mean,
        y_mean,
        s: rows_of(&s),
        phi: rows_of(&phi),
        b: b.iter().copied().collect(),
        cxx: rows_of(&cxx),
        s1: s1.value(),
        s2: s2.value(),
        a1: a1.iter().copied().collect(),
        eigenvalues,
        eigenvectors: (0..m).map(|j| vectors.column(j).iter().copied().collect()).collect(),
    }
}

impl MomentSet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("moments serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let moments: MomentSet =
            serde_json::from_str(text).map_err(|e| Error::input(format!("malformed moments JSON: {e}")))?;
        moments.validate()?;
        Ok(moments)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, d) = (self.dim_m, self.dim_d);
        if m == 0 || d == 0 {
            return Err(Error::input("moments need positive dim_d and dim_m"));
        }
        let s = matrix_of(&self.s, m, m, "s")?;
        matrix_of(&self.phi, m, d, "phi")?;
        matrix_of(&self.cxx, d, d, "cxx")?;
        let vectors = matrix_of(&self.eigenvectors, m, m, "eigenvectors")?.transpose();
        for (name, len, want) in [
            ("x_mean", self.x_mean.len(), d),
            ("y_mean", self.y_mean.len(), m),
            ("b", self.b.len(), m),
            ("a1", self.a1.len(), d),
            ("eigenvalues", self.eigenvalues.len(), m),
        ] {
            if len != want {
                return Err(Error::input(format!("moment field '{name}' must have length {want}")));
            }
        }
        let all = self
            .s
            .iter()
            .chain(&self.phi)
            .chain(&self.cxx)
            .chain(&self.eigenvectors)
            .flatten()
            .chain(&self.x_mean)
            .chain(&self.y_mean)
            .chain(&self.b)
            .chain(&self.a1)
            .chain(&self.eigenvalues)
            .chain([&self.s1, &self.s2]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::input("moments contain non-finite values"));
        }
        let scale = 1.0 + s.amax();
        if (&s - s.transpose()).amax() > 1e-12 * scale {
            return Err(Error::input("moment matrix S is not symmetric"));
        }
        let lambda = DMatrix::from_diagonal(&DVector::from_vec(self.eigenvalues.clone()));
        let rebuilt = &vectors * lambda * vectors.transpose();
        if (rebuilt - &s).amax() > 1e-10 * scale {
            return Err(Error::input("stored eigenpairs do not reconstruct S"));
        }
        Ok(())
    }

    fn s_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim_m, self.dim_m, |i, j| self.s[i][j])
    }
}

/// Coefficients of the marginal quartic at one feature point. The quartic
/// is in `z = y - shift`, where `shift` is the plan mean.
#[derive(Clone, Debug, PartialEq)]
pub struct QuarticMarginal {
    pub psi: DMatrix<f64>,
    pub phi: DVector<f64>,
    pub zeta: f64,
    pub shift: DVector<f64>,
}

pub fn quartic_at(moments: &MomentSet, x: &[f64]) -> Result<QuarticMarginal> {
    let (m, d) = (moments.dim_m, moments.dim_d);
    if x.len() != d {
        return Err(Error::input(format!("query x has dimension {}, expected {d}", x.len())));
    }
    let xx = sq_norm(x);
    let xm = dot(x, &moments.x_mean);
    let psi = DMatrix::identity(m, m) * (xx - 2.0 * xm) - moments.s_matrix();
    let phi = DVector::from_fn(m, |i, _| 2.0 * dot(&moments.phi[i], x) + moments.b[i]);
    let cxx: f64 = (0..d).map(|i| x[i] * dot(&moments.cxx[i], x)).sum();
    let zeta = xx * xx - 4.0 * xx * xm - 2.0 * xx * moments.s1 + 4.0 * cxx + 4.0 * dot(&moments.a1, x) + moments.s2;
    Ok(QuarticMarginal {
        psi,
        phi,
        zeta,
        shift: DVector::from_vec(moments.y_mean.clone()),
    })
}

impl QuarticMarginal {
    /// A quartic centered at the origin.
    pub fn new(psi: DMatrix<f64>, phi: DVector<f64>, zeta: f64) -> Self {
        let m = phi.len();
        Self {
            psi,
            phi,
            zeta,
            shift: DVector::zeros(m),
        }
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    fn z(&self, y: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| y[i] - self.shift[i])
    }

    fn form(&self, z: &DVector<f64>) -> f64 {
        let r = z.norm_squared();
        r * r - 2.0 * z.dot(&(&self.psi * z)) - 4.0 * self.phi.dot(z) + self.zeta
    }

    fn form_grad(&self, z: &DVector<f64>) -> DVector<f64> {
        (z * z.norm_squared() - &self.psi * z - &self.phi) * 4.0
    }

    fn form_hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let m = self.dim();
        (DMatrix::identity(m, m) * z.norm_squared() + z * z.transpose() * 2.0 - &self.psi) * 4.0
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.form(&self.z(y))
    }

    pub fn grad(&self, y: &[f64]) -> Vec<f64> {
        self.form_grad(&self.z(y)).iter().copied().collect()
    }

    pub fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        self.form_hessian(&self.z(y))
    }

    /// `y` with `|y|^4 + lower terms` dominating: every minimizer lies in the
    /// ball of this radius around `shift`.
    pub fn coercivity_radius(&self) -> f64 {
        let psi = self.psi.iter().map(|v| v.abs()).fold(0.0, f64::max) * self.dim() as f64;
        let phi = self.phi.norm();
        // |z|^4 - 2 psi |z|^2 - 4 phi |z| > 0 beyond this radius.
        (2.0 * psi).sqrt() + (4.0 * phi).cbrt() + 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplicity {
    Unique,
    FiniteMultiple,
    Continuum,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalSolution {
    /// Global minimizers sorted lexicographically descending, so the first
    /// one is the tie-break choice. A continuum contributes one representative.
    pub minimizers: Vec<Vec<f64>>,
    pub value: f64,
    pub multiplicity: Multiplicity,
    /// False when the minimizer came from a best-effort local search.
    pub certified: bool,
}

impl MarginalSolution {
    pub fn chosen(&self) -> &[f64] {
        &self.minimizers[0]
    }

    pub fn count(&self) -> usize {
        self.minimizers.len()
    }
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Filters `candidates` down to global minimizers within `tol_rel * (1 + |min|)`
/// and orders them by the tie-break rule.
pub(crate) fn select_minimizers(
    mut candidates: Vec<(Vec<f64>, f64, bool)>,
    tol_rel: f64,
    certified: bool,
) -> MarginalSolution {
    let best = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let tol = tol_rel * (1.0 + best.abs());
    candidates.retain(|c| c.1 <= best + tol);
    candidates.sort_by(|a, b| lex_cmp(&b.0, &a.0));
    let mut kept: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for c in candidates {
        let scale = 1.0 + sq_norm(&c.0).sqrt();
        let dup = kept.iter_mut().find(|k| {
            let dist: f64 = k.0.iter().zip(&c.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            dist <= DUPLICATE_TOL * scale
        });
        match dup {
            Some(k) => k.2 |= c.2,
            None => kept.push(c),
        }
    }
    let continuum = kept.iter().any(|k| k.2);
    let multiplicity = match (continuum, kept.len()) {
        (true, _) => Multiplicity::Continuum,
        (false, 1) => Multiplicity::Unique,
        _ => Multiplicity::FiniteMultiple,
    };
    MarginalSolution {
        value: kept.iter().map(|k| k.1).fold(f64::INFINITY, f64::min),
        minimizers: kept.into_iter().map(|k| k.0).collect(),
        multiplicity,
        certified,
    }
}

/// Real roots of `t^3 + p t + q = 0`.
pub fn depressed_cubic_roots(p: f64, q: f64) -> Vec<f64> {
    let mut roots = if p == 0.0 {
        vec![(-q).cbrt()]
    } else {
        let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
        if disc > 0.0 {
            let u = (-q / 2.0 - q.signum() * disc.sqrt()).cbrt();
            let u = if u == 0.0 { (-q / 2.0 + disc.sqrt()).cbrt() } else { u };
            vec![u - p / (3.0 * u)]
        } else {
            let r = 2.0 * (-p / 3.0).sqrt();
            let arg = (3.0 * q / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            (0..3).map(|k| r * (theta - 2.0 * PI * k as f64 / 3.0).cos()).collect()
        }
    };
    for t in &mut roots {
        for _ in 0..4 {
            let f = *t * *t * *t + p * *t + q;
            let df = 3.0 * *t * *t + p;
            if df == 0.0 {
                break;
            }
            let next = *t - f / df;
            let f_next = next * next * next + p * next + q;
            if f_next.abs() >= f.abs() {
                break;
            }
            *t = next;
        }
    }
    roots
}

/// Newton iterations on the stationarity equation; keeps the best iterate.
fn polish(qm: &QuarticMarginal, z: &mut DVector<f64>) {
    let mut g = qm.form_grad(z);
    for _ in 0..8 {
        if g.norm() == 0.0 {
            break;
        }
        let h = qm.form_hessian(z);
        let Ok(step) = h.svd(true, true).solve(&g, 1e-14 * (1.0 + qm.psi.amax())) else {
            break;
        };
        let next = &*z - step;
        let g_next = qm.form_grad(&next);
        if g_next.norm() >= g.norm() {
            break;
        }
        *z = next;
        g = g_next;
    }
}

/// Global minimizers of the quartic. `tol_rel` scales the tie tolerance
/// `tol_rel * (1 + |min|)`.
pub fn minimize_quartic(qm: &QuarticMarginal, tol_rel: f64) -> MarginalSolution {
    let m = qm.dim();
    let mut candidates: Vec<(DVector<f64>, bool)> = Vec::new();
    if m == 1 {
        for t in depressed_cubic_roots(-qm.psi[(0, 0)], -qm.phi[0]) {
            candidates.push((DVector::from_element(1, t), false));
        }
    } else {
        candidates = secular_candidates(qm);
    }
    let scored = candidates
        .into_iter()
        .map(|(mut z, continuum)| {
            polish(qm, &mut z);
            let v = qm.form(&z);
            let y: Vec<f64> = (&z + &qm.shift).iter().copied().collect();
            (y, v, continuum)
        })
        .collect();
    select_minimizers(scored, tol_rel, true)
}

struct Cluster {
    value: f64,
    members: Vec<usize>,
    weight: f64,
}

/// Stationary points from the secular equation and its degenerate branches,
/// in `z` coordinates.
fn secular_candidates(qm: &QuarticMarginal) -> Vec<(DVector<f64>, bool)> {
    let m = qm.dim();
    let (psi, v) = sorted_eigen(&((&qm.psi + qm.psi.transpose()) * 0.5));
    let phat = v.transpose() * &qm.phi;
    let scale = 1.0 + psi.iter().map(|p| p.abs()).fold(0.0, f64::max);
    let phi_tiny = 1e-13 * (1.0 + qm.phi.norm());

    let mut clusters: Vec<Cluster> = Vec::new();
    for j in 0..m {
        match clusters.last_mut() {
            Some(c) if psi[j] - psi[*c.members.last().unwrap()] < EIGEN_GAP * scale => c.members.push(j),
            _ => clusters.push(Cluster { value: 0.0, members: vec![j], weight: 0.0 }),
        }
    }
    for c in &mut clusters {
        c.value = c.members.iter().map(|&j| psi[j]).sum::<f64>() / c.members.len() as f64;
        c.weight = c.members.iter().map(|&j| phat[j] * phat[j]).sum();
    }

    let rebuild = |s: f64, skip: Option<usize>| -> DVector<f64> {
        let mut zhat = DVector::zeros(m);
        for (ci, c) in clusters.iter().enumerate() {
            if Some(ci) == skip {
                continue;
            }
            for &j in &c.members {
                let den = s - c.value;
                if den != 0.0 {
                    zhat[j] = phat[j] / den;
                }
            }
        }
        zhat
    };

    let poles: Vec<&Cluster> = clusters.iter().filter(|c| c.weight.sqrt() > phi_tiny).collect();
    let g = |s: f64| poles.iter().map(|c| c.weight / (s - c.value).powi(2)).sum::<f64>() - s;
    let dg = |s: f64| -2.0 * poles.iter().map(|c| c.weight / (s - c.value).powi(3)).sum::<f64>() - 1.0;

    // Intervals of s >= 0 between consecutive poles; g is convex on each.
    let mut bounds = vec![(0.0, poles.iter().any(|c| c.value == 0.0))];
    bounds.extend(poles.iter().filter(|c| c.value > 0.0).map(|c| (c.value, true)));
    let mut roots: Vec<f64> = Vec::new();
    for k in 0..bounds.len() {
        let (lo, lo_is_pole) = bounds[k];
        let lo_in = if lo_is_pole { nudge_up(lo) } else { lo };
        match bounds.get(k + 1) {
            None => {
                // g decreases to -inf on the last interval.
                if g(lo_in) <= 0.0 {
                    if !lo_is_pole {
                        roots.push(lo);
                    }
                    continue;
                }
                let mut b = lo_in + lo_in.abs().max(1.0);
                while g(b) > 0.0 {
                    b = lo_in + 2.0 * (b - lo_in);
                }
                roots.push(bisect(&g, lo_in, b));
            }
            Some(&(hi, _)) => {
                let hi_in = nudge_down(hi);
                if hi_in <= lo_in {
                    continue;
                }
                let smin = if dg(lo_in) >= 0.0 { lo_in } else { bisect(&dg, lo_in, hi_in) };
                if g(smin) > 0.0 {
                    continue;
                }
                if smin > lo_in {
                    roots.push(bisect(&g, lo_in, smin));
                } else if !lo_is_pole {
                    roots.push(lo);
                }
                roots.push(bisect(&g, smin, hi_in));
            }
        }
    }

    let mut out: Vec<(DVector<f64>, bool)> = roots.into_iter().map(|s| (&v * rebuild(s, None), false)).collect();

    for (ci, c) in clusters.iter().enumerate() {
        if c.weight.sqrt() > phi_tiny || c.value < 0.0 {
            continue;
        }
        let base = rebuild(c.value, Some(ci));
        let r2 = c.value - base.norm_squared();
        if r2 < -1e-12 * scale {
            continue;
        }
        let r = r2.max(0.0).sqrt();
        let base_z = &v * &base;
        if r == 0.0 {
            out.push((base_z, false));
            continue;
        }
        let basis: Vec<DVector<f64>> = c.members.iter().map(|&j| v.column(j).into_owned()).collect();
        if basis.len() == 1 {
            out.push((&base_z + &basis[0] * r, false));
            out.push((&base_z - &basis[0] * r, false));
        } else {
            out.push((&base_z + lex_max_direction(&basis) * r, true));
        }
    }
    out
}

/// The unit vector in the span of `basis` (orthonormal) that is largest in
/// lexicographic order.
fn lex_max_direction(basis: &[DVector<f64>]) -> DVector<f64> {
    let m = basis[0].len();
    for i in 0..m {
        let e = DVector::from_fn(m, |r, _| if r == i { 1.0 } else { 0.0 });
        let p = basis.iter().fold(DVector::zeros(m), |acc, b| acc + b * b.dot(&e));
        if p.norm() > 1e-12 {
            return p.normalize();
        }
    }
    basis[0].clone()
}

fn nudge_up(x: f64) -> f64 {
    let step = 1e-15 * (1.0 + x.abs());
    x + step
}

fn nudge_down(x: f64) -> f64 {
    let step = 1e-15 * (1.0 + x.abs());
    x - step
}

/// Bisection for a sign change of `f` on `[a, b]` with `f(a) >= 0 >= f(b)`
/// or the reverse.
fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa_pos = f(a) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if (f(mid) > 0.0) == fa_pos {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Axis-aligned box `[x1_min, x1_max] x [x2_min, x2_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
}

impl Region {
    pub fn square(half_width: f64) -> Self {
        Self {
            x1_min: -half_width,
            x1_max: half_width,
            x2_min: -half_width,
            x2_max: half_width,
        }
    }

    /// Parses `x1_min,x1_max,x2_min,x2_max`.
    pub fn parse(text: &str) -> Result<Self> {
        let v: Vec<f64> = text
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::input(format!("region '{text}' is not four comma-separated numbers")))?;
        let [x1_min, x1_max, x2_min, x2_max] = v[..] else {
            return Err(Error::input(format!("region '{text}' needs exactly four numbers")));
        };
        Ok(Self { x1_min, x1_max, x2_min, x2_max })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelNode {
    pub x: [f64; 2],
    pub lambda: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSetGrid {
    pub region: Region,
    pub resolution: usize,
    /// Row major, `x2` outer and `x1` inner.
    pub nodes: Vec<LevelNode>,
}

pub fn level_set_grid(moments: &MomentSet, region: Region, resolution: usize) -> Result<LevelSetGrid> {
    if moments.dim_d != 2 || moments.dim_m != 1 {
        return Err(Error::input(format!(
            "level sets need d = 2 and m = 1, got d = {} and m = {}",
            moments.dim_d, moments.dim_m
        )));
    }
    let finite = [region.x1_min, region.x1_max, region.x2_min, region.x2_max].iter().all(|v| v.is_finite());
    if resolution < 2 || !finite || region.x1_max <= region.x1_min || region.x2_max <= region.x2_min {
        return Err(Error::input("level set region is degenerate (need resolution >= 2 and a box of positive area)"));
    }
    let coord = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (resolution - 1) as f64;
    let mut nodes = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        let x2 = coord(region.x2_min, region.x2_max, j);
        for i in 0..resolution {
            let x1 = coord(region.x1_min, region.x1_max, i);
            let sol = minimize_quartic(&quartic_at(moments, &[x1, x2])?, TOL_VALUE);
            nodes.push(LevelNode {
                x: [x1, x2],
                lambda: sol.chosen()[0],
                count: sol.count(),
            });
        }
    }
    Ok(LevelSetGrid { region, resolution, nodes })
}

impl LevelSetGrid {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x1,x2,lambda,count\n");
        for n in &self.nodes {
            s.push_str(&format!("{},{},{},{}\n", fmt17(n.x[0]), fmt17(n.x[1]), fmt17(n.lambda), n.count));
        }
        s
    }

    pub fn node_nearest(&self, x: [f64; 2]) -> &LevelNode {
        self.nodes
            .iter()
            .min_by(|a, b| {
                let da = (a.x[0] - x[0]).powi(2) + (a.x[1] - x[1]).powi(2);
                let db = (b.x[0] - x[0]).powi(2) + (b.x[1] - x[1]).powi(2);
                da.total_cmp(&db)
            })
            .expect("grid has nodes")
    }
}

/// Parses the `x1,x2,lambda,count` CSV written by [`LevelSetGrid::to_csv`].
pub fn parse_level_set(text: &str) -> Result<Vec<LevelNode>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::input(format!("bad CSV header: {e}")))?;
    if header.iter().collect::<Vec<_>>() != ["x1", "x2", "lambda", "count"] {
        return Err(Error::input("level set CSV header must be 'x1,x2,lambda,count'"));
    }
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::input(format!("line {line}: {e}")))?;
        let num = |c: usize| -> Result<f64> {
            rec[c]
                .parse()
                .map_err(|_| Error::input(format!("line {line}, column {}: bad number '{}'", c + 1, &rec[c])))
        };
        let count = rec[3]
            .parse()
            .map_err(|_| Error::input(format!("line {line}, column 4: bad count '{}'", &rec[3])))?;
        out.push(LevelNode { x: [num(0)?, num(1)?], lambda: num(2)?, count });
    }
    Ok(out)
}
