use crate::cost::{CostFamily, CostKind};
use crate::energy::{apply_perturbation, determinism_report, split_with, stress_plan};
use crate::error::{Error, Result};
use crate::measure::{max_norm_dist, EmbeddingPlan, Perturbation, PointCloud, MERGE_TOL};
use crate::quartic::DUPLICATE_TOL;

use super::marginal::MarginalOracle;
use super::{DescentConfig, IterationTrace, TraceEntry};

struct Move {
    target: Vec<f64>,
    eps: f64,
    delta: f64,
    full: bool,
}

/// Needle descent: every atom is offered a move onto the selected global
/// minimizer of its marginal problem, or onto another atom of its own row,
/// and the best improving move is applied before the next atom is visited.
/// An atom within [`DUPLICATE_TOL`] of a sibling is merged into it unless
/// that raises the energy beyond the move tolerance.
pub fn marginal_sweep(
    plan: &EmbeddingPlan,
    cloud: &PointCloud,
    cost: &CostFamily,
    config: &DescentConfig,
) -> Result<(EmbeddingPlan, IterationTrace)> {
    config.validate()?;
    cost.validate()?;
    plan.check_cloud(cloud)?;
    let full_rule = cost.kind() == CostKind::SquaredNorm && cost.capabilities().unique_min_at_zero;
    let n = cloud.len();

    let mut plan = plan.clone();
    let mut energy = stress_plan(&plan, cloud, cost)?;
    let mut trace = IterationTrace {
        entries: vec![TraceEntry {
            sweep: 0,
            energy,
            split_mass_fraction: determinism_report(&plan, 0.0, 0.0).split_mass_fraction,
            moved_mass: 0.0,
        }],
        max_full_move_delta: f64::NEG_INFINITY,
        ..Default::default()
    };

    for sweep in 1..=config.max_sweeps {
        let mut moved_mass = 0.0;
        let mut oracle = MarginalOracle::new(&plan, cloud, cost)?;
        for i in 0..n {
            let x = cloud.point(i);
            let snapshot: Vec<Vec<f64>> = plan.row(i).iter().map(|a| a.y.clone()).collect();
            for y_old in snapshot {
                let Some(atom) = plan.row(i).iter().find(|a| max_norm_dist(&a.y, &y_old) <= MERGE_TOL) else {
                    continue;
                };
                let q = atom.mass;
                let siblings: Vec<Vec<f64>> = plan
                    .row(i)
                    .iter()
                    .filter(|a| max_norm_dist(&a.y, &y_old) > MERGE_TOL)
                    .map(|a| a.y.clone())
                    .collect();
                let scale = 1.0 + y_old.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let twin = siblings
                    .iter()
                    .filter(|s| max_norm_dist(s, &y_old) <= DUPLICATE_TOL * scale)
                    .max_by(|a, b| row_mass_at(&plan, i, a).total_cmp(&row_mass_at(&plan, i, b)));
                if let Some(twin) = twin {
                    let gamma = Perturbation::needle(n, i, q, &y_old, twin);
                    let delta = split_with(oracle.problem(), &gamma)?.delta(1.0);
                    if delta <= config.move_tol * (1.0 + energy.abs()) {
                        plan = apply_perturbation(&plan, &gamma, 1.0)?;
                        energy += delta;
                        moved_mass += q;
                        oracle = MarginalOracle::new(&plan, cloud, cost)?;
                        continue;
                    }
                }
                let hints: Vec<&[f64]> = std::iter::once(y_old.as_slice())
                    .chain(siblings.iter().map(Vec::as_slice))
                    .collect();
                let solution = oracle.solve(x, &hints, config);
                let tilde = solution.chosen().to_vec();

                let mut best: Option<Move> = None;
                let targets = std::iter::once((tilde, full_rule)).chain(siblings.into_iter().map(|s| (s, false)));
                for (target, full) in targets {
                    if max_norm_dist(&target, &y_old) <= MERGE_TOL {
                        continue;
                    }
                    let gamma = Perturbation::needle(n, i, q, &y_old, &target);
                    let split = split_with(oracle.problem(), &gamma)?;
                    let (l, qd) = (split.linear, split.quadratic);
                    let eps = if full {
                        1.0
                    } else if qd > 0.0 {
                        (-l / qd).clamp(0.0, 1.0)
                    } else if 2.0 * l + qd < 0.0 {
                        1.0
                    } else {
                        0.0
                    };
                    if eps == 0.0 {
                        continue;
                    }
                    let delta = split.delta(eps);
                    if best.as_ref().is_none_or(|b| delta < b.delta) {
                        best = Some(Move { target, eps, delta, full });
                    }
                }

                let Some(mv) = best else { continue };
                if !mv.delta.is_finite() {
                    return Err(Error::Numerical {
                        iteration: sweep,
                        message: format!("non-finite move gain at source {i}"),
                    });
                }
                if mv.delta >= -config.move_tol * energy.abs() {
                    continue;
                }
                if mv.full {
                    trace.full_moves += 1;
                    trace.max_full_move_delta = trace.max_full_move_delta.max(mv.delta);
                }
                let gamma = Perturbation::needle(n, i, q, &y_old, &mv.target);
                plan = apply_perturbation(&plan, &gamma, mv.eps)?;
                energy += mv.delta;
                moved_mass += mv.eps * q;
                oracle = MarginalOracle::new(&plan, cloud, cost)?;
            }
        }

        let previous = trace.final_energy();
        energy = stress_plan(&plan, cloud, cost)?;
        if !energy.is_finite() {
            return Err(Error::Numerical {
                iteration: sweep,
                message: "energy became non-finite".into(),
            });
        }
        trace.entries.push(TraceEntry {
            sweep,
            energy,
            split_mass_fraction: determinism_report(&plan, 0.0, 0.0).split_mass_fraction,
            moved_mass,
        });
        if moved_mass == 0.0 {
            trace.fixed_point = true;
            break;
        }
        if previous - energy <= config.rel_tol * previous.abs() {
            break;
        }
    }
    Ok((plan, trace))
}

fn row_mass_at(plan: &EmbeddingPlan, i: usize, y: &[f64]) -> f64 {
    plan.row(i)
        .iter()
        .find(|a| max_norm_dist(&a.y, y) <= MERGE_TOL)
        .map_or(0.0, |a| a.mass)
}
