//! Energies of maps and plans, the marginal problem with its derivatives,
//! and the linear/quadratic split of a perturbation.
//!
//! All double sums run over ordered atom pairs including the diagonal, and
//! use the blocked compensated reduction from [`crate::sum`].

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cost::{CostFamily, CostKind};
use crate::error::{Error, Result};
use crate::measure::{
    max_norm_dist, plan_from_map, Atom, AtomTable, DeterministicMap, EmbeddingPlan, Perturbation,
    PointCloud, MERGE_TOL,
};
use crate::sum::{block_sum, KahanSum};

/// `J(T) = sum_ij w_i w_j c(x_i, x_j, T(x_i), T(x_j))`.
pub fn stress_map(cloud: &PointCloud, map: &DeterministicMap, cost: &CostFamily) -> Result<f64> {
    let plan = plan_from_map(cloud, map)?;
    stress_plan(&plan, cloud, cost)
}

/// `J(pi)`: the double sum over all ordered atom pairs weighted by masses.
pub fn stress_plan(plan: &EmbeddingPlan, cloud: &PointCloud, cost: &CostFamily) -> Result<f64> {
    plan.check_cloud(cloud)?;
    Ok(pair_energy(&plan.atoms(), cloud, cost))
}

/// Converts a weighted energy to the raw pair-count convention (times `n^2`).
pub fn raw_count(stress: f64, n_points: usize) -> f64 {
    stress * (n_points as f64).powi(2)
}

pub(crate) fn pair_energy(table: &AtomTable, cloud: &PointCloud, cost: &CostFamily) -> f64 {
    let n = table.len();
    block_sum(n, |a| {
        let xa = cloud.point(table.src[a]);
        let ya = table.y(a);
        let ma = table.mass[a];
        let diag = cost.profile_value(cost.feature_term(xa, xa), cost.embed_term(ya, ya));
        let mut off = KahanSum::new();
        for b in a + 1..n {
            let xb = cloud.point(table.src[b]);
            let s = cost.feature_term(xa, xb);
            let t = cost.embed_term(ya, table.y(b));
            off.add(table.mass[b] * cost.profile_value(s, t));
        }
        ma * (ma * diag + 2.0 * off.value())
    })
}

/// The marginal problem `J_pi(y|x) = sum over atoms of mass * c(x, x', y, y')`
/// for a fixed plan, with analytic derivatives in `y`.
#[derive(Clone, Debug)]
pub struct MarginalProblem<'a> {
    cloud: &'a PointCloud,
    cost: CostFamily,
    table: AtomTable,
}

impl<'a> MarginalProblem<'a> {
    pub fn new(plan: &EmbeddingPlan, cloud: &'a PointCloud, cost: &CostFamily) -> Result<Self> {
        plan.check_cloud(cloud)?;
        Ok(Self {
            cloud,
            cost: *cost,
            table: plan.atoms(),
        })
    }

    pub fn cost(&self) -> &CostFamily {
        &self.cost
    }

    pub fn dim_m(&self) -> usize {
        self.table.dim_m
    }

    pub fn dim_d(&self) -> usize {
        self.cloud.dim()
    }

    pub fn atoms(&self) -> &AtomTable {
        &self.table
    }

    pub fn cloud(&self) -> &PointCloud {
        self.cloud
    }

    fn check(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.cloud.dim() {
            return Err(Error::input(format!(
                "query x has dimension {}, expected {}",
                x.len(),
                self.cloud.dim()
            )));
        }
        if y.len() != self.table.dim_m {
            return Err(Error::input(format!(
                "query y has dimension {}, expected {}",
                y.len(),
                self.table.dim_m
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x, y)?;
        Ok(self.value_unchecked(x, y))
    }

    pub(crate) fn value_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let t = &self.table;
        block_sum(t.len(), |k| {
            let xp = self.cloud.point(t.src[k]);
            let s = self.cost.feature_term(x, xp);
            t.mass[k] * self.cost.profile_value(s, self.cost.embed_term(y, t.y(k)))
        })
    }

    pub fn grad(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check(x, y)?;
        Ok(self.grad_unchecked(x, y))
    }

    pub(crate) fn grad_unchecked(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let m = y.len();
        let t = &self.table;
        let mut acc = vec![KahanSum::new(); m];
        for k in 0..t.len() {
            let yp = t.y(k);
            let s = self.cost.feature_term(x, self.cloud.point(t.src[k]));
            let d = self.cost.profile(s, self.cost.embed_term(y, yp));
            let w = t.mass[k] * d.d1;
            match self.cost.kind() {
                CostKind::InnerProduct => {
                    for (a, &v) in acc.iter_mut().zip(yp) {
                        a.add(w * v);
                    }
                }
                CostKind::SquaredNorm => {
                    for ((a, &u), &v) in acc.iter_mut().zip(y).zip(yp) {
                        a.add(2.0 * w * (u - v));
                    }
                }
            }
        }
        acc.iter().map(KahanSum::value).collect()
    }

    pub fn hessian(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        self.check(x, y)?;
        Ok(self.hessian_unchecked(x, y))
    }

    pub(crate) fn hessian_unchecked(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        let m = y.len();
        let t = &self.table;
        let mut h = DMatrix::zeros(m, m);
        let mut diff = vec![0.0; m];
        for k in 0..t.len() {
            let yp = t.y(k);
            let s = self.cost.feature_term(x, self.cloud.point(t.src[k]));
            let d = self.cost.profile(s, self.cost.embed_term(y, yp));
            let mk = t.mass[k];
            match self.cost.kind() {
                CostKind::InnerProduct => {
                    for i in 0..m {
                        for j in 0..m {
                            h[(i, j)] += mk * d.d2 * yp[i] * yp[j];
                        }
                    }
                }
                CostKind::SquaredNorm => {
                    for (dv, (&u, &v)) in diff.iter_mut().zip(y.iter().zip(yp)) {
                        *dv = u - v;
                    }
                    for i in 0..m {
                        for j in 0..m {
                            h[(i, j)] += mk * 4.0 * d.d2 * diff[i] * diff[j];
                        }
                        h[(i, i)] += mk * 2.0 * d.d1;
                    }
                }
            }
        }
        h
    }
}

pub fn marginal_value(
    plan: &EmbeddingPlan,
    cloud: &PointCloud,
    cost: &CostFamily,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    MarginalProblem::new(plan, cloud, cost)?.value(x, y)
}

pub fn marginal_grad(
    plan: &EmbeddingPlan,
    cloud: &PointCloud,
    cost: &CostFamily,
    x: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    MarginalProblem::new(plan, cloud, cost)?.grad(x, y)
}

pub fn marginal_hessian(
    plan: &EmbeddingPlan,
    cloud: &PointCloud,
    cost: &CostFamily,
    x: &[f64],
    y: &[f64],
) -> Result<DMatrix<f64>> {
    MarginalProblem::new(plan, cloud, cost)?.hessian(x, y)
}

/// Linear and quadratic parts of `J(pi + gamma) - J(pi) = 2 linear + quadratic`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerturbationSplit {
    /// `J(gamma | pi) = iint c dpi dgamma`
    pub linear: f64,
    /// `J(gamma) = iint c dgamma dgamma`
    pub quadratic: f64,
}

impl PerturbationSplit {
    /// Energy change for the scaled perturbation `eps * gamma`.
    pub fn delta(&self, eps: f64) -> f64 {
        2.0 * eps * self.linear + eps * eps * self.quadratic
    }
}

pub fn perturbation_split(
    plan: &EmbeddingPlan,
    cloud: &PointCloud,
    cost: &CostFamily,
    gamma: &Perturbation,
) -> Result<PerturbationSplit> {
    let problem = MarginalProblem::new(plan, cloud, cost)?;
    split_with(&problem, gamma)
}

pub(crate) fn split_with(problem: &MarginalProblem<'_>, gamma: &Perturbation) -> Result<PerturbationSplit> {
    let cloud = problem.cloud;
    let cost = &problem.cost;
    if gamma.rows().len() != cloud.len() {
        return Err(Error::input(format!(
            "perturbation has {} rows for {} source points",
            gamma.rows().len(),
            cloud.len()
        )));
    }
    if gamma.dim_m() != problem.dim_m() {
        return Err(Error::input("perturbation and plan embedding dimensions differ"));
    }
    gamma.check()?;

    let g = gamma.atoms();
    let mut linear = KahanSum::new();
    for k in 0..g.len() {
        let x = cloud.point(g.src[k]);
        linear.add(g.mass[k] * problem.value_unchecked(x, g.y(k)));
    }
    let mut quad = KahanSum::new();
    for a in 0..g.len() {
        let xa = cloud.point(g.src[a]);
        for b in 0..g.len() {
            let xb = cloud.point(g.src[b]);
            let s = cost.feature_term(xa, xb);
            let t = cost.embed_term(g.y(a), g.y(b));
            quad.add(g.mass[a] * g.mass[b] * cost.profile_value(s, t));
        }
    }
    Ok(PerturbationSplit {
        linear: linear.value(),
        quadratic: quad.value(),
    })
}

/// `pi + eps * gamma`, re-canonicalized.
///
/// Masses that end up negative beyond `1e-12` of the row weight are an input
/// error naming the row; smaller negatives are round-off and are dropped.
pub fn apply_perturbation(plan: &EmbeddingPlan, gamma: &Perturbation, eps: f64) -> Result<EmbeddingPlan> {
    if gamma.rows().len() != plan.n_rows() {
        return Err(Error::input(format!(
            "perturbation has {} rows for a plan with {}",
            gamma.rows().len(),
            plan.n_rows()
        )));
    }
    if eps == 0.0 {
        return Ok(plan.clone());
    }
    let weights: Vec<f64> = (0..plan.n_rows()).map(|i| plan.row_mass(i)).collect();
    let mut rows: Vec<Vec<Atom>> = plan.rows().to_vec();
    for (i, (row, delta)) in rows.iter_mut().zip(gamma.rows()).enumerate() {
        if delta.is_empty() {
            continue;
        }
        for d in delta {
            let dm = eps * d.mass;
            match row.iter_mut().find(|a| max_norm_dist(&a.y, &d.y) <= MERGE_TOL) {
                Some(a) => a.mass += dm,
                None => row.push(Atom::new(dm, d.y.clone())),
            }
        }
        let floor = -1e-12 * weights[i].max(f64::MIN_POSITIVE);
        if let Some(a) = row.iter().find(|a| a.mass < floor) {
            return Err(Error::input(format!(
                "perturbation makes row {i} negative (mass {} at {:?})",
                a.mass, a.y
            )));
        }
        row.retain(|a| a.mass > 1e-15 * weights[i]);
    }
    EmbeddingPlan::recanonical(plan.dim_m(), rows, &weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeterminismReport {
    /// Mass beyond the heaviest atom of each row, summed over rows.
    pub split_mass_fraction: f64,
    /// Largest pairwise atom distance within any row.
    pub max_spread: f64,
    pub is_deterministic: bool,
}

pub fn determinism_report(plan: &EmbeddingPlan, tol_mass: f64, tol_spread: f64) -> DeterminismReport {
    let mut split = KahanSum::new();
    let mut spread = 0.0f64;
    for row in plan.rows() {
        let total: f64 = row.iter().map(|a| a.mass).sum();
        let heaviest = row.iter().map(|a| a.mass).fold(0.0, f64::max);
        split.add(total - heaviest);
        for (k, a) in row.iter().enumerate() {
            for b in &row[k + 1..] {
                spread = spread.max(crate::cost::sq_dist(&a.y, &b.y).sqrt());
            }
        }
    }
    let split_mass_fraction = split.value().max(0.0);
    DeterminismReport {
        split_mass_fraction,
        max_spread: spread,
        is_deterministic: split_mass_fraction <= tol_mass && spread <= tol_spread,
    }
}

/// Default amplitude of the checkerboard maps.
pub const OSCILLATION_AMPLITUDE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscillationResult {
    pub resolution: usize,
    pub amplitude: f64,
    /// `(n, J(T_n))` for each requested frequency.
    pub rows: Vec<(u32, f64)>,
    pub stress_zero: f64,
}

impl OscillationResult {
    pub fn min_stress(&self) -> f64 {
        self.rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min)
    }

    /// CSV `n,stress` with a trailing `# stress_zero=` comment line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,stress\n");
        for (n, s) in &self.rows {
            out.push_str(&format!("{n},{}\n", crate::io::fmt17(*s)));
        }
        out.push_str(&format!("# stress_zero={}\n", crate::io::fmt17(self.stress_zero)));
        out
    }
}

/// Cell-centered uniform grid on `[0,1]^2` with `resolution^2` atoms.
pub fn unit_square_grid(resolution: usize) -> Result<PointCloud> {
    if resolution == 0 {
        return Err(Error::input("grid resolution must be positive"));
    }
    let h = 1.0 / resolution as f64;
    let mut coords = Vec::with_capacity(2 * resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            coords.push((i as f64 + 0.5) * h);
            coords.push((j as f64 + 0.5) * h);
        }
    }
    PointCloud::from_flat(2, coords, None)
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The checkerboard map `T_n(x) = v * prod_i sign(sin(n pi x_i))` on a cloud.
pub fn checkerboard_map(cloud: &PointCloud, n: u32, amplitude: f64) -> DeterministicMap {
    let images = cloud
        .points()
        .map(|p| {
            amplitude
                * p.iter()
                    .map(|&c| sign0((n as f64 * std::f64::consts::PI * c).sin()))
                    .product::<f64>()
        })
        .collect();
    DeterministicMap::from_flat(1, images).expect("one image per point")
}

/// Evaluates `J(T_n)` under q-MDS on the unit-square grid for each `n`, plus
/// `J(0)`.
pub fn oscillation_experiment(n_list: &[u32], resolution: usize, amplitude: f64) -> Result<OscillationResult> {
    let cloud = unit_square_grid(resolution)?;
    let cost = CostFamily::qmds();
    let zero = DeterministicMap::from_flat(1, vec![0.0; cloud.len()])?;
    let stress_zero = stress_map(&cloud, &zero, &cost)?;
    let rows = n_list
        .iter()
        .map(|&n| {
            let map = checkerboard_map(&cloud, n, amplitude);
            stress_map(&cloud, &map, &cost).map(|s| (n, s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OscillationResult {
        resolution,
        amplitude,
        rows,
        stress_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points() -> PointCloud {
        PointCloud::uniform(vec![vec![0.0], vec![1.0]]).unwrap()
    }

    #[test]
    fn identity_map_is_isometric() {
        let c = two_points();
        let map = DeterministicMap::new(vec![vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(stress_map(&c, &map, &CostFamily::qmds()).unwrap(), 0.0);
    }

    #[test]
    fn zero_map_two_points() {
        // Off-diagonal ordered pairs each contribute 1/4 * (1 - 0)^2.
        let c = two_points();
        let map = DeterministicMap::new(vec![vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(stress_map(&c, &map, &CostFamily::qmds()).unwrap(), 0.5);
    }

    #[test]
    fn split_single_source_plan() {
        // Cross pairs each contribute 1/4 * (0 - 4)^2.
        let c = PointCloud::uniform(vec![vec![0.0]]).unwrap();
        let plan = EmbeddingPlan::new(
            &c,
            vec![vec![Atom::new(0.5, vec![1.0]), Atom::new(0.5, vec![-1.0])]],
        )
        .unwrap();
        assert_eq!(stress_plan(&plan, &c, &CostFamily::qmds()).unwrap(), 8.0);
        let single = EmbeddingPlan::new(&c, vec![vec![Atom::new(1.0, vec![7.0])]]).unwrap();
        assert_eq!(stress_plan(&single, &c, &CostFamily::qmds()).unwrap(), 0.0);
    }

    fn point_plan() -> (PointCloud, EmbeddingPlan) {
        let c = PointCloud::uniform(vec![vec![0.0]]).unwrap();
        let p = EmbeddingPlan::new(&c, vec![vec![Atom::new(1.0, vec![0.0])]]).unwrap();
        (c, p)
    }

    #[test]
    fn marginal_of_point_mass() {
        let (c, p) = point_plan();
        let q = CostFamily::qmds();
        assert_eq!(marginal_value(&p, &c, &q, &[1.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(marginal_value(&p, &c, &q, &[1.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(marginal_grad(&p, &c, &q, &[1.0], &[1.0]).unwrap(), vec![0.0]);
        assert!(marginal_value(&p, &c, &q, &[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn quadratic_ip_hessian_is_second_moment() {
        let c = PointCloud::uniform(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = EmbeddingPlan::new(
            &c,
            vec![vec![Atom::new(0.5, vec![1.0, 2.0])], vec![Atom::new(0.5, vec![-1.0, 0.5])]],
        )
        .unwrap();
        let cost = CostFamily::quadratic_ip();
        for y in [[0.0, 0.0], [3.0, -2.0]] {
            let h = marginal_hessian(&p, &c, &cost, &[0.3, 0.2], &y).unwrap();
            // 2 * (0.5 * [1 2;2 4] + 0.5 * [1 -0.5; -0.5 0.25])
            let expected = [[2.0, 1.5], [1.5, 4.25]];
            for i in 0..2 {
                for j in 0..2 {
                    assert!((h[(i, j)] - expected[i][j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn zero_perturbation_splits_to_zero() {
        let c = two_points();
        let map = DeterministicMap::new(vec![vec![0.3], vec![0.9]]).unwrap();
        let p = plan_from_map(&c, &map).unwrap();
        let s = perturbation_split(&p, &c, &CostFamily::qmds(), &Perturbation::zero(2, 1)).unwrap();
        assert_eq!((s.linear, s.quadratic), (0.0, 0.0));
    }

    #[test]
    fn needle_linear_term_is_marginal_difference() {
        let c = two_points();
        let map = DeterministicMap::new(vec![vec![0.3], vec![0.9]]).unwrap();
        let p = plan_from_map(&c, &map).unwrap();
        let cost = CostFamily::qmds();
        let q = 0.2;
        let gamma = Perturbation::needle(2, 0, q, &[0.3], &[-0.4]);
        let s = perturbation_split(&p, &c, &cost, &gamma).unwrap();
        let jn = marginal_value(&p, &c, &cost, &[0.0], &[-0.4]).unwrap();
        let jo = marginal_value(&p, &c, &cost, &[0.0], &[0.3]).unwrap();
        assert!((s.linear - q * (jn - jo)).abs() < 1e-15);
    }

    #[test]
    fn apply_needles() {
        let c = two_points();
        let map = DeterministicMap::new(vec![vec![0.3], vec![0.9]]).unwrap();
        let p = plan_from_map(&c, &map).unwrap();
        let full = Perturbation::needle(2, 0, 0.5, &[0.3], &[-1.0]);
        assert_eq!(apply_perturbation(&p, &full, 0.0).unwrap(), p);
        let moved = apply_perturbation(&p, &full, 1.0).unwrap();
        assert_eq!(moved.row(0), &[Atom::new(0.5, vec![-1.0])]);
        let half = apply_perturbation(&p, &full, 0.5).unwrap();
        assert_eq!(half.row(0).len(), 2);
        assert!((half.row(0)[0].mass - 0.25).abs() < 1e-15);
        assert!((half.row(0)[1].mass - 0.25).abs() < 1e-15);
        let err = apply_perturbation(&p, &full, 2.0).unwrap_err();
        assert!(err.to_string().contains("row 0"), "{err}");
    }

    #[test]
    fn determinism_cases() {
        let c = two_points();
        let map = DeterministicMap::new(vec![vec![0.3], vec![0.9]]).unwrap();
        let r = determinism_report(&plan_from_map(&c, &map).unwrap(), 1e-10, 1e-10);
        assert_eq!((r.split_mass_fraction, r.max_spread, r.is_deterministic), (0.0, 0.0, true));

        let single = PointCloud::uniform(vec![vec![0.0]]).unwrap();
        let split = EmbeddingPlan::new(
            &single,
            vec![vec![Atom::new(0.5, vec![1.0]), Atom::new(0.5, vec![-1.0])]],
        )
        .unwrap();
        let r = determinism_report(&split, 1e-10, 1e-10);
        assert_eq!((r.split_mass_fraction, r.max_spread, r.is_deterministic), (0.5, 2.0, false));

        let tiny = EmbeddingPlan::from_rows_unchecked(
            1,
            vec![vec![Atom::new(1.0 - 1e-15, vec![1.0]), Atom::new(1e-15, vec![1.0 + 1e-16])]],
        );
        assert!(determinism_report(&tiny, 1e-10, 1e-10).is_deterministic);
    }

    #[test]
    fn oscillation_zero_amplitude_is_flat() {
        let r = oscillation_experiment(&[1, 2, 3], 8, 0.0).unwrap();
        for (_, s) in &r.rows {
            assert_eq!(*s, r.stress_zero);
        }
    }

    #[test]
    fn checkerboard_reflection_symmetry() {
        let cloud = unit_square_grid(12).unwrap();
        let cost = CostFamily::qmds();
        for n in 1..5 {
            let t = checkerboard_map(&cloud, n, 0.1);
            let a = stress_map(&cloud, &t, &cost).unwrap();
            let b = stress_map(&cloud, &t.negated(), &cost).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn oscillation_csv_has_footer() {
        let r = oscillation_experiment(&[2], 4, 0.1).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("n,stress\n2,"));
        assert!(csv.lines().last().unwrap().starts_with("# stress_zero="));
    }
}
