use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cost::{CostFamily, Profile};
use crate::energy::MarginalProblem;
use crate::error::Result;
use crate::measure::{EmbeddingPlan, PointCloud};
use crate::quartic::{
    minimize_quartic, moments_of_table, quartic_at, select_minimizers, MarginalSolution, MomentSet,
    Multiplicity, TOL_VALUE,
};

use super::DescentConfig;

enum Method {
    Quartic(Box<MomentSet>),
    /// `(sum mass y'y'^T) y = sum mass s(x, x') y'` for profiles `(s - t)^2`.
    Linear { pinv: DMatrix<f64>, rank_deficient: bool },
    Generic,
}

/// Global (or best-effort) minimization of `J_pi(.|x)` for a fixed plan.
pub struct MarginalOracle<'a> {
    problem: MarginalProblem<'a>,
    method: Method,
}

impl<'a> MarginalOracle<'a> {
    pub fn new(plan: &EmbeddingPlan, cloud: &'a PointCloud, cost: &CostFamily) -> Result<Self> {
        let problem = MarginalProblem::new(plan, cloud, cost)?;
        let method = match cost.profile {
            Profile::Qmds => Method::Quartic(Box::new(moments_of_table(problem.atoms(), cloud))),
            Profile::QuadraticIp | Profile::KernelIp { .. } => {
                let t = problem.atoms();
                let m = t.dim_m;
                let mut gram = DMatrix::<f64>::zeros(m, m);
                for k in 0..t.len() {
                    let y = DVector::from_column_slice(t.y(k));
                    gram += &y * y.transpose() * t.mass[k];
                }
                let svd = gram.clone().svd(true, true);
                let top = svd.singular_values.max();
                let eps = 1e-12 * top.max(f64::MIN_POSITIVE);
                let rank_deficient = svd.singular_values.iter().any(|&s| s <= eps);
                let pinv = svd.pseudo_inverse(eps).unwrap_or_else(|_| DMatrix::zeros(m, m));
                Method::Linear { pinv, rank_deficient }
            }
            _ => Method::Generic,
        };
        Ok(Self { problem, method })
    }

    pub fn problem(&self) -> &MarginalProblem<'a> {
        &self.problem
    }

    pub fn moments(&self) -> Option<&MomentSet> {
        match &self.method {
            Method::Quartic(m) => Some(m.as_ref()),
            _ => None,
        }
    }

    /// `hints` seed the multi-start search of the generic path.
    pub fn solve(&self, x: &[f64], hints: &[&[f64]], config: &DescentConfig) -> MarginalSolution {
        match &self.method {
            Method::Quartic(moments) => {
                let qm = quartic_at(moments, x).expect("dimension checked by caller");
                minimize_quartic(&qm, TOL_VALUE)
            }
            Method::Linear { pinv, rank_deficient } => {
                let t = self.problem.atoms();
                let cost = self.problem.cost();
                let cloud = self.problem.cloud();
                let mut rhs = DVector::<f64>::zeros(t.dim_m);
                for k in 0..t.len() {
                    let s = cost.feature_term(x, cloud.point(t.src[k]));
                    rhs += DVector::from_column_slice(t.y(k)) * (t.mass[k] * s);
                }
                let y: Vec<f64> = (pinv * rhs).iter().copied().collect();
                let value = self.problem.value_unchecked(x, &y);
                MarginalSolution {
                    minimizers: vec![y],
                    value,
                    multiplicity: if *rank_deficient { Multiplicity::Continuum } else { Multiplicity::Unique },
                    certified: true,
                }
            }
            Method::Generic => self.multi_start(x, hints, config),
        }
    }

    fn multi_start(&self, x: &[f64], hints: &[&[f64]], config: &DescentConfig) -> MarginalSolution {
        let t = self.problem.atoms();
        let m = t.dim_m;
        let mut starts: Vec<Vec<f64>> = hints.iter().map(|h| h.to_vec()).collect();
        let from_atoms = config.candidate_budget.div_ceil(2).min(t.len());
        for j in 0..from_atoms {
            starts.push(t.y(j * t.len() / from_atoms).to_vec());
        }
        let mut mean = vec![0.0; m];
        let mut spread = 0.0;
        for k in 0..t.len() {
            for (c, v) in mean.iter_mut().zip(t.y(k)) {
                *c += t.mass[k] * v;
            }
            spread += t.mass[k] * t.y(k).iter().map(|v| v * v).sum::<f64>();
        }
        let spread = (spread - mean.iter().map(|v| v * v).sum::<f64>()).max(0.0).sqrt().max(1e-3);
        let key = x.iter().fold(config.seed, |h, v| h.rotate_left(7) ^ v.to_bits());
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        for _ in from_atoms..config.candidate_budget {
            starts.push(
                mean.iter()
                    .map(|c| c + spread * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect(),
            );
        }
        let candidates = starts
            .into_iter()
            .map(|y0| {
                let (y, v) = self.local_min(x, y0);
                (y, v, false)
            })
            .collect();
        select_minimizers(candidates, TOL_VALUE, false)
    }

    /// Damped Newton with an Armijo backtracking line search.
    fn local_min(&self, x: &[f64], mut y: Vec<f64>) -> (Vec<f64>, f64) {
        let p = &self.problem;
        let mut v = p.value_unchecked(x, &y);
        for _ in 0..100 {
            let g = DVector::from_vec(p.grad_unchecked(x, &y));
            if g.norm() <= 1e-12 * (1.0 + v.abs()) {
                break;
            }
            let h = p.hessian_unchecked(x, &y);
            let mut d = match h.cholesky() {
                Some(ch) => -ch.solve(&g),
                None => -g.clone(),
            };
            if g.dot(&d) >= 0.0 {
                d = -g.clone();
            }
            let slope = g.dot(&d);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = y.iter().zip(d.iter()).map(|(a, b)| a + step * b).collect();
                let tv = p.value_unchecked(x, &trial);
                if tv.is_finite() && tv <= v + 1e-4 * step * slope {
                    accepted = Some((trial, tv));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((trial, tv)) => {
                    let done = v - tv <= 1e-16 * (1.0 + v.abs());
                    y = trial;
                    v = tv;
                    if done {
                        break;
                    }
                }
                None => break,
            }
        }
        (y, v)
    }
}

/// `arg min_y J_pi(y|x)`: closed form for qMDS and inner-product profiles,
/// multi-start Newton (flagged uncertified) otherwise.
pub fn minimize_marginal(
    plan: &EmbeddingPlan,
    cloud: &PointCloud,
    cost: &CostFamily,
    x: &[f64],
    config: &DescentConfig,
) -> Result<MarginalSolution> {
    let oracle = MarginalOracle::new(plan, cloud, cost)?;
    oracle.problem().value(x, &vec![0.0; plan.dim_m()])?;
    Ok(oracle.solve(x, &[], config))
}
