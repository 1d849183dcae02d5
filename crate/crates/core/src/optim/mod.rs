//! Optimizers: particle gradient descent on maps, the marginal sweep on
//! plans, and the closed-form PCA embedding.

mod marginal;
mod particle;
mod pca;
mod sweep;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt17;
use crate::measure::{plan_from_map, DeterministicMap, EmbeddingPlan, PointCloud};

pub use marginal::{minimize_marginal, MarginalOracle};
pub use particle::{particle_descent, ParticleResult};
pub use pca::{largest_principal_angle, pca_solve, principal_axes};
pub use sweep::marginal_sweep;

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    RandomGaussian { scale: f64 },
    Pca,
    Map(DeterministicMap),
    Plan(EmbeddingPlan),
}

impl Init {
    pub fn label(&self) -> &'static str {
        match self {
            Init::RandomGaussian { .. } => "random",
            Init::Pca => "pca",
            Init::Map(_) => "map",
            Init::Plan(_) => "plan",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescentConfig {
    pub dim_m: usize,
    pub max_sweeps: usize,
    /// Stop once a sweep improves the energy by less than this fraction.
    pub rel_tol: f64,
    pub seed: u64,
    pub init: Init,
    /// Multi-start count for marginal problems without a closed form.
    pub candidate_budget: usize,
    pub step_size: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Marginal moves gaining less than `move_tol * |J|` are skipped.
    pub move_tol: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            dim_m: 1,
            max_sweeps: 200,
            rel_tol: 1e-12,
            seed: 0,
            init: Init::RandomGaussian { scale: 1.0 },
            candidate_budget: 8,
            step_size: 1.0,
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            move_tol: 1e-14,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps < 1 {
            return Err(Error::input("max_sweeps must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::input("rel_tol must be positive"));
        }
        if self.dim_m < 1 {
            return Err(Error::input("embedding dimension must be at least 1"));
        }
        if !(self.step_size > 0.0) || !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::input("step_size must be positive and backtrack in (0, 1)"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::input("armijo_c must lie in (0, 1)"));
        }
        if self.candidate_budget < 1 {
            return Err(Error::input("candidate_budget must be at least 1"));
        }
        if let Init::RandomGaussian { scale } = self.init {
            if !(scale >= 0.0) || !scale.is_finite() {
                return Err(Error::input("random init scale must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub(crate) fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// The starting map for `cloud`. Plan inits are rejected.
    pub fn initial_map(&self, cloud: &PointCloud) -> Result<DeterministicMap> {
        match &self.init {
            Init::RandomGaussian { scale } => {
                let mut rng = self.rng();
                let flat = (0..cloud.len() * self.dim_m)
                    .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect::<Vec<f64>>();
                DeterministicMap::from_flat(self.dim_m, flat)
            }
            Init::Pca => pca_solve(cloud, self.dim_m),
            Init::Map(map) => {
                if map.dim_m() != self.dim_m {
                    return Err(Error::input(format!(
                        "initial map has dimension {}, expected {}",
                        map.dim_m(),
                        self.dim_m
                    )));
                }
                Ok(map.clone())
            }
            Init::Plan(_) => Err(Error::input("particle descent needs a map initialization, not a plan")),
        }
    }

    pub fn initial_plan(&self, cloud: &PointCloud) -> Result<EmbeddingPlan> {
        match &self.init {
            Init::Plan(plan) => {
                if plan.dim_m() != self.dim_m {
                    return Err(Error::input(format!(
                        "initial plan has dimension {}, expected {}",
                        plan.dim_m(),
                        self.dim_m
                    )));
                }
                plan.check_cloud(cloud)?;
                Ok(plan.clone())
            }
            _ => plan_from_map(cloud, &self.initial_map(cloud)?),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    pub sweep: usize,
    pub energy: f64,
    pub split_mass_fraction: f64,
    pub moved_mass: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IterationTrace {
    /// Entry 0 is the initial state.
    pub entries: Vec<TraceEntry>,
    /// Number of full moves onto a marginal minimizer under the N^2 rule.
    pub full_moves: usize,
    /// Largest energy change among those full moves.
    pub max_full_move_delta: f64,
    /// True when the last sweep found no improving move.
    pub fixed_point: bool,
}

impl IterationTrace {
    pub fn sweeps(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn final_energy(&self) -> f64 {
        self.entries.last().map_or(f64::NAN, |e| e.energy)
    }

    /// Largest energy increase between consecutive entries, relative to `1 + |J|`.
    pub fn max_relative_increase(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| (w[1].energy - w[0].energy) / (1.0 + w[0].energy.abs()))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sweep,energy,split_mass_fraction,moved_mass\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{}\n",
                e.sweep,
                fmt17(e.energy),
                fmt17(e.split_mass_fraction),
                fmt17(e.moved_mass)
            ));
        }
        s
    }
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceEntry>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::input(format!("bad CSV header: {e}")))?;
    if header.iter().collect::<Vec<_>>() != ["sweep", "energy", "split_mass_fraction", "moved_mass"] {
        return Err(Error::input("trace CSV header must be 'sweep,energy,split_mass_fraction,moved_mass'"));
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
        out.push(TraceEntry {
            sweep: rec[0]
                .parse()
                .map_err(|_| Error::input(format!("line {line}, column 1: bad sweep '{}'", &rec[0])))?,
            energy: num(1)?,
            split_mass_fraction: num(2)?,
            moved_mass: num(3)?,
        });
    }
    Ok(out)
}
