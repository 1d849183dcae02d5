use crate::cost::CostFamily;
use crate::energy::{stress_map, MarginalProblem};
use crate::error::{Error, Result};
use crate::measure::{plan_from_map, DeterministicMap, PointCloud};

use super::{DescentConfig, IterationTrace, TraceEntry};

#[derive(Clone, Debug)]
pub struct ParticleResult {
    pub map: DeterministicMap,
    pub trace: IterationTrace,
    /// `max_i |grad_y J(y_i|x_i)|` at the returned configuration.
    pub grad_norm: f64,
}

/// Per-particle marginal gradients; the energy gradient in `y_i` is
/// `2 w_i` times row `i`.
fn marginal_grads(cloud: &PointCloud, map: &DeterministicMap, cost: &CostFamily) -> Result<Vec<f64>> {
    let plan = plan_from_map(cloud, map)?;
    let problem = MarginalProblem::new(&plan, cloud, cost)?;
    let mut out = Vec::with_capacity(map.as_flat().len());
    for i in 0..cloud.len() {
        out.extend(problem.grad_unchecked(cloud.point(i), map.image(i)));
    }
    Ok(out)
}

/// Gradient descent on particle positions. Each particle moves along its
/// marginal gradient (the energy gradient divided by `2 w_i`), with an
/// Armijo backtracking line search from `config.step_size`.
pub fn particle_descent(cloud: &PointCloud, cost: &CostFamily, config: &DescentConfig) -> Result<ParticleResult> {
    config.validate()?;
    cost.validate()?;
    let m = config.dim_m;
    let mut map = config.initial_map(cloud)?;
    let mut energy = stress_map(cloud, &map, cost)?;
    if !energy.is_finite() {
        return Err(Error::Numerical { iteration: 0, message: "initial energy is non-finite".into() });
    }
    let mut trace = IterationTrace {
        entries: vec![TraceEntry { sweep: 0, energy, split_mass_fraction: 0.0, moved_mass: 0.0 }],
        max_full_move_delta: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut grads = marginal_grads(cloud, &map, cost)?;

    for iteration in 1..=config.max_sweeps {
        let slope: f64 = -(0..cloud.len())
            .map(|i| 2.0 * cloud.weight(i) * grads[i * m..(i + 1) * m].iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>();
        if slope == 0.0 {
            trace.fixed_point = true;
            break;
        }
        let mut step = config.step_size;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let flat: Vec<f64> = map.as_flat().iter().zip(&grads).map(|(y, g)| y - step * g).collect();
            let trial = DeterministicMap::from_flat(m, flat)?;
            let e = stress_map(cloud, &trial, cost)?;
            if e.is_finite() && e <= energy + config.armijo_c * step * slope {
                accepted = Some((trial, e));
                break;
            }
            step *= config.backtrack;
        }
        let Some((next, e)) = accepted else {
            trace.fixed_point = true;
            break;
        };
        if !e.is_finite() {
            return Err(Error::Numerical { iteration, message: "energy became non-finite".into() });
        }
        let previous = energy;
        map = next;
        energy = e;
        grads = marginal_grads(cloud, &map, cost)?;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical { iteration, message: "gradient became non-finite".into() });
        }
        trace.entries.push(TraceEntry { sweep: iteration, energy, split_mass_fraction: 0.0, moved_mass: 1.0 });
        if previous - energy <= config.rel_tol * previous.abs() {
            break;
        }
    }
    let grad_norm = grads
        .chunks(m)
        .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    Ok(ParticleResult { map, trace, grad_norm })
}
