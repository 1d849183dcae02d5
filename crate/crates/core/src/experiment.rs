//! Experiment drivers: circle-clusters, stacked-pair, oscillation and pca-check.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cost::CostFamily;
use crate::datasets::{analytic_init, circle_clusters, circle_sign_agreement, gaussian, projection_plan, stacked_pair};
use crate::energy::{determinism_report, oscillation_experiment, stress_map, stress_plan, OSCILLATION_AMPLITUDE};
use crate::error::{Error, Result};
use crate::io::{embedding_to_csv, write_string};
use crate::measure::{plan_from_map, EmbeddingPlan, PointCloud};
use crate::optim::{largest_principal_angle, marginal_sweep, particle_descent, pca_solve, principal_axes};
use crate::optim::{DescentConfig, Init, IterationTrace};
use crate::quartic::{compute_moments, level_set_grid, minimize_quartic, quartic_at, Region, TOL_VALUE};
use crate::svg;

pub const EXPERIMENTS: [&str; 4] = ["circle-clusters", "stacked-pair", "oscillation", "pca-check"];

/// Split mass at or below this counts as deterministic in reports.
pub const DETERMINISM_TOL: f64 = 1e-10;

/// Name-specific knobs; unset fields take the experiment's default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    pub cluster_size: Option<usize>,
    pub circle_points: Option<usize>,
    pub cluster_image: Option<f64>,
    pub init_scale: Option<f64>,
    pub per_location: Option<usize>,
    pub region: Option<Region>,
    pub res: Option<usize>,
    pub n_max: Option<u32>,
    pub amplitude: Option<f64>,
    pub samples: Option<usize>,
    pub max_sweeps: Option<usize>,
    pub particle_sweeps: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub optimizer: String,
    pub init: String,
    pub final_stress: f64,
    pub sweeps: usize,
    pub deterministic: bool,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub config: Value,
    pub runs: Vec<RunRecord>,
    /// Experiment-specific diagnostics.
    pub checks: Value,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Sink<'a> {
    dir: Option<&'a Path>,
}

impl Sink<'_> {
    fn put(&self, name: &str, contents: &str) -> Result<String> {
        if let Some(dir) = self.dir {
            write_string(dir.join(name), contents)?;
        }
        Ok(name.to_string())
    }
}

/// Runs `name`; with `outdir` set, artifacts and `report.json` are written there.
pub fn run_experiment(name: &str, params: &ExperimentParams, seed: u64, outdir: Option<&Path>) -> Result<ExperimentReport> {
    let sink = Sink { dir: outdir };
    let report = match name {
        "circle-clusters" => circle_experiment(params, seed, &sink)?,
        "stacked-pair" => stacked_experiment(params, seed, &sink)?,
        "oscillation" => oscillation(params, seed, &sink)?,
        "pca-check" => pca_check(params, seed, &sink)?,
        other => {
            return Err(Error::input(format!(
                "unknown experiment '{other}' (expected one of {})",
                EXPERIMENTS.join(", ")
            )))
        }
    };
    sink.put("report.json", &report.to_json())?;
    Ok(report)
}

fn images_1d(plan: &EmbeddingPlan) -> Vec<f64> {
    plan.barycentric_map().as_flat().to_vec()
}

fn record(optimizer: &str, init: &str, plan: &EmbeddingPlan, trace: &IterationTrace, files: Vec<String>) -> RunRecord {
    RunRecord {
        optimizer: optimizer.into(),
        init: init.into(),
        final_stress: trace.final_energy(),
        sweeps: trace.sweeps(),
        deterministic: determinism_report(plan, DETERMINISM_TOL, f64::INFINITY).is_deterministic,
        files,
    }
}

/// Outcome of the two circle-clusters runs, shared with the acceptance suite.
pub struct CircleOutcome {
    pub particle_stress: f64,
    pub marginal_stress: f64,
    pub marginal_split_mass: f64,
    pub marginal_sign_agreement: f64,
    pub particle_sign_agreement: f64,
    pub particle_images: Vec<f64>,
    pub marginal_plan: EmbeddingPlan,
    pub particle_trace: IterationTrace,
    pub marginal_trace: IterationTrace,
    pub cloud: PointCloud,
}

pub fn circle_runs(params: &ExperimentParams, seed: u64) -> Result<CircleOutcome> {
    let data = circle_clusters(params.cluster_size.unwrap_or(1000), params.circle_points.unwrap_or(250), seed)?;
    let cost = CostFamily::qmds();
    let particle_cfg = DescentConfig {
        dim_m: 1,
        seed,
        max_sweeps: params.particle_sweeps.unwrap_or(500),
        rel_tol: 1e-9,
        init: Init::RandomGaussian { scale: params.init_scale.unwrap_or(1.0) },
        ..Default::default()
    };
    let particle = particle_descent(&data.cloud, &cost, &particle_cfg)?;
    let init = plan_from_map(&data.cloud, &analytic_init(&data, params.cluster_image.unwrap_or(1.0)))?;
    let sweep_cfg = DescentConfig {
        dim_m: 1,
        seed,
        max_sweeps: params.max_sweeps.unwrap_or(100),
        rel_tol: 1e-12,
        ..Default::default()
    };
    let (plan, trace) = marginal_sweep(&init, &data.cloud, &cost, &sweep_cfg)?;
    let marginal_images = images_1d(&plan);
    Ok(CircleOutcome {
        particle_stress: particle.trace.final_energy(),
        marginal_stress: trace.final_energy(),
        marginal_split_mass: determinism_report(&plan, 0.0, 0.0).split_mass_fraction,
        marginal_sign_agreement: circle_sign_agreement(&data, &marginal_images),
        particle_sign_agreement: circle_sign_agreement(&data, particle.map.as_flat()),
        particle_images: particle.map.as_flat().to_vec(),
        marginal_plan: plan,
        particle_trace: particle.trace,
        marginal_trace: trace,
        cloud: data.cloud,
    })
}

fn circle_experiment(params: &ExperimentParams, seed: u64, sink: &Sink) -> Result<ExperimentReport> {
    let out = circle_runs(params, seed)?;
    let points: Vec<[f64; 2]> = out.cloud.points().map(|p| [p[0], p[1]]).collect();
    let particle_plan = plan_from_map(
        &out.cloud,
        &crate::measure::DeterministicMap::from_flat(1, out.particle_images.clone())?,
    )?;
    let particle_files = vec![
        sink.put("particle_embedding.csv", &embedding_to_csv(&out.cloud, &particle_plan))?,
        sink.put("particle_trace.csv", &out.particle_trace.to_csv())?,
        sink.put(
            "particle.svg",
            &svg::scatter(&points, &out.particle_images, &format!("particle descent, random init: stress {:.6}", out.particle_stress)),
        )?,
    ];
    let marginal_files = vec![
        sink.put("marginal_embedding.csv", &embedding_to_csv(&out.cloud, &out.marginal_plan))?,
        sink.put("marginal_trace.csv", &out.marginal_trace.to_csv())?,
        sink.put(
            "marginal.svg",
            &svg::scatter(&points, &images_1d(&out.marginal_plan), &format!("marginal sweep, analytic init: stress {:.6}", out.marginal_stress)),
        )?,
    ];
    Ok(ExperimentReport {
        experiment: "circle-clusters".into(),
        seed,
        config: json!({
            "cluster_size": params.cluster_size.unwrap_or(1000),
            "circle_points": params.circle_points.unwrap_or(250),
            "cluster_image": params.cluster_image.unwrap_or(1.0),
            "init_scale": params.init_scale.unwrap_or(1.0),
            "max_sweeps": params.max_sweeps.unwrap_or(100),
            "particle_sweeps": params.particle_sweeps.unwrap_or(500),
            "cost": "qmds",
        }),
        runs: vec![
            RunRecord {
                optimizer: "particle".into(),
                init: "random".into(),
                final_stress: out.particle_stress,
                sweeps: out.particle_trace.sweeps(),
                deterministic: true,
                files: particle_files,
            },
            record("marginal", "analytic", &out.marginal_plan, &out.marginal_trace, marginal_files),
        ],
        checks: json!({
            "marginal_below_particle": out.marginal_stress < out.particle_stress,
            "marginal_split_mass_fraction": out.marginal_split_mass,
            "marginal_circle_sign_agreement": out.marginal_sign_agreement,
            "particle_circle_sign_agreement": out.particle_sign_agreement,
        }),
    })
}

fn stacked_experiment(params: &ExperimentParams, seed: u64, sink: &Sink) -> Result<ExperimentReport> {
    let per = params.per_location.unwrap_or(500);
    let region = params.region.unwrap_or(Region::square(2.0));
    let res = params.res.unwrap_or(201);
    let cloud = stacked_pair(per)?;
    let plan = projection_plan(&cloud, 1)?;
    let moments = compute_moments(&plan, &cloud)?;

    let (mut psi_err, mut phi_err) = (0.0f64, 0.0f64);
    for k in 0..=20 {
        for l in 0..=20 {
            let x = [-2.0 + 0.2 * k as f64, -2.0 + 0.2 * l as f64];
            let qm = quartic_at(&moments, &x)?;
            psi_err = psi_err.max((qm.psi[(0, 0)] - (x[0] * x[0] + x[1] * x[1] - 2.0)).abs());
            phi_err = phi_err.max((qm.phi[0] - 2.0 * x[1]).abs());
        }
    }
    let grid = level_set_grid(&moments, region, res)?;
    let chosen_at = |x: [f64; 2]| -> Result<f64> {
        Ok(minimize_quartic(&quartic_at(&moments, &x)?, TOL_VALUE).chosen()[0])
    };

    let cost = CostFamily::qmds();
    let cfg = DescentConfig {
        dim_m: 1,
        seed,
        max_sweeps: params.max_sweeps.unwrap_or(20),
        ..Default::default()
    };
    let (after, trace) = marginal_sweep(&plan, &cloud, &cost, &cfg)?;
    let files = vec![
        sink.put("moments.json", &moments.to_json())?,
        sink.put("levelset.csv", &grid.to_csv())?,
        sink.put("levelset.svg", &svg::bands(&grid, "selected marginal minimizer; dots: several global minimizers"))?,
        sink.put("embedding.csv", &embedding_to_csv(&cloud, &after))?,
        sink.put("trace.csv", &trace.to_csv())?,
    ];
    Ok(ExperimentReport {
        experiment: "stacked-pair".into(),
        seed,
        config: json!({ "per_location": per, "region": region, "res": res, "cost": "qmds" }),
        runs: vec![record("marginal", "projection", &after, &trace, files)],
        checks: json!({
            "psi_max_error": psi_err,
            "phi_max_error": phi_err,
            "center_count": grid.node_nearest([0.0, 0.0]).count,
            "count_near_1_5": grid.node_nearest([1.5, 0.0]).count,
            "chosen_at_1_5_plus": chosen_at([1.5, 0.01])?,
            "chosen_at_1_5_minus": chosen_at([1.5, -0.01])?,
            "projection_is_fixed_point": trace.fixed_point && trace.sweeps() == 1,
            "multiple_minimizer_nodes": grid.nodes.iter().filter(|n| n.count >= 2).count(),
        }),
    })
}

fn oscillation(params: &ExperimentParams, seed: u64, sink: &Sink) -> Result<ExperimentReport> {
    let res = params.res.unwrap_or(64);
    let n_max = params.n_max.unwrap_or(8);
    let amplitude = params.amplitude.unwrap_or(OSCILLATION_AMPLITUDE);
    if n_max == 0 {
        return Err(Error::input("n_max must be at least 1"));
    }
    let n_list: Vec<u32> = (1..=n_max).collect();
    let result = oscillation_experiment(&n_list, res, amplitude)?;
    let file = sink.put("oscillation.csv", &result.to_csv())?;
    let runs = result
        .rows
        .iter()
        .map(|&(n, s)| RunRecord {
            optimizer: "checkerboard".into(),
            init: format!("n={n}"),
            final_stress: s,
            sweeps: 0,
            deterministic: true,
            files: vec![file.clone()],
        })
        .collect();
    Ok(ExperimentReport {
        experiment: "oscillation".into(),
        seed,
        config: json!({ "res": res, "n_max": n_max, "amplitude": amplitude, "cost": "qmds" }),
        runs,
        checks: json!({
            "stress_zero": result.stress_zero,
            "min_stress": result.min_stress(),
            "oscillation_beats_zero": result.min_stress() < result.stress_zero,
        }),
    })
}

/// Outcome of the pca-check runs, shared with the acceptance suite.
pub struct PcaOutcome {
    pub pca_stress: f64,
    pub sweep_stress: f64,
    pub angle: f64,
    pub sweep_plan: EmbeddingPlan,
    pub sweep_trace: IterationTrace,
    pub cloud: PointCloud,
}

pub fn pca_runs(params: &ExperimentParams, seed: u64) -> Result<PcaOutcome> {
    let n = params.samples.unwrap_or(200);
    let std_devs: Vec<f64> = [5.0f64, 4.0, 3.0, 2.0, 1.0].iter().map(|v| v.sqrt()).collect();
    let cloud = gaussian(n, &std_devs, seed)?;
    let cost = CostFamily::quadratic_ip();
    let m = 2;
    let pca = pca_solve(&cloud, m)?;
    let pca_stress = stress_map(&cloud, &pca, &cost)?;
    let cfg = DescentConfig {
        dim_m: m,
        seed,
        max_sweeps: params.max_sweeps.unwrap_or(2000),
        rel_tol: 1e-15,
        init: Init::RandomGaussian { scale: params.init_scale.unwrap_or(1.0) },
        ..Default::default()
    };
    let start = cfg.initial_plan(&cloud)?;
    let (plan, trace) = marginal_sweep(&start, &cloud, &cost, &cfg)?;
    let sweep_stress = stress_plan(&plan, &cloud, &cost)?;

    // Least-squares linear fit y = B^T x of the learned images.
    let d = cloud.dim();
    let map = plan.barycentric_map();
    let x = DMatrix::from_fn(cloud.len(), d, |i, j| cloud.point(i)[j]);
    let y = DMatrix::from_fn(cloud.len(), m, |i, j| map.image(i)[j]);
    let b = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::Numerical { iteration: 0, message: format!("least squares failed: {e}") })?;
    let (_, axes) = principal_axes(&cloud, m);
    let angle = largest_principal_angle(&b, &axes);
    Ok(PcaOutcome { pca_stress, sweep_stress, angle, sweep_plan: plan, sweep_trace: trace, cloud })
}

fn pca_check(params: &ExperimentParams, seed: u64, sink: &Sink) -> Result<ExperimentReport> {
    let out = pca_runs(params, seed)?;
    let pca_plan = plan_from_map(&out.cloud, &pca_solve(&out.cloud, 2)?)?;
    let pca_files = vec![sink.put("pca_embedding.csv", &embedding_to_csv(&out.cloud, &pca_plan))?];
    let sweep_files = vec![
        sink.put("marginal_embedding.csv", &embedding_to_csv(&out.cloud, &out.sweep_plan))?,
        sink.put("marginal_trace.csv", &out.sweep_trace.to_csv())?,
    ];
    Ok(ExperimentReport {
        experiment: "pca-check".into(),
        seed,
        config: json!({
            "samples": out.cloud.len(),
            "dim": 5,
            "m": 2,
            "variances": [5.0, 4.0, 3.0, 2.0, 1.0],
            "cost": "quadratic-ip",
            "max_sweeps": params.max_sweeps.unwrap_or(2000),
        }),
        runs: vec![
            RunRecord {
                optimizer: "pca".into(),
                init: "-".into(),
                final_stress: out.pca_stress,
                sweeps: 0,
                deterministic: true,
                files: pca_files,
            },
            record("marginal", "random", &out.sweep_plan, &out.sweep_trace, sweep_files),
        ],
        checks: json!({
            "stress_gap": out.sweep_stress - out.pca_stress,
            "largest_principal_angle": out.angle,
        }),
    })
}
