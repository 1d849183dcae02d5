//! `somds`: embeddings, experiments and level sets from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use somds::cost::{CostFamily, CostParams};
use somds::energy::{determinism_report, stress_map};
use somds::experiment::{run_experiment, ExperimentParams, ExperimentReport, RunRecord, DETERMINISM_TOL};
use somds::io::{embedding_to_csv, parse_map, read_cloud, read_plan, read_to_string, write_string};
use somds::measure::plan_from_map;
use somds::optim::{marginal_sweep, particle_descent, DescentConfig, Init};
use somds::quartic::{level_set_grid, MomentSet, Region};
use somds::{svg, Error, Result};

#[derive(Parser)]
#[command(name = "somds", version, about = "Second-order MDS over discrete measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a point cloud CSV.
    Embed(EmbedArgs),
    /// Reproduce one of the built-in experiments.
    Experiment(ExperimentArgs),
    /// Level sets of the marginal minimizer from serialized moments.
    Levelset(LevelsetArgs),
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbedArgs {
    /// Point cloud CSV with header x1..xd[,w].
    input: Option<PathBuf>,
    /// JSON file whose keys mirror the flags (dashes become underscores).
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// qmds, quadratic-ip, kernel-ip-rbf, kernel-ip-poly, qsammon or elastic.
    #[arg(long)]
    cost: Option<String>,
    /// Embedding dimension m.
    #[arg(long)]
    dim: Option<usize>,
    /// particle or marginal.
    #[arg(long)]
    optimizer: Option<String>,
    /// random, pca, map:PATH (y1..ym CSV) or plan:PATH (i,mass,y1..ym CSV).
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    candidate_budget: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    degree: Option<u32>,
    #[arg(long)]
    offset: Option<f64>,
    #[arg(long)]
    eps_d: Option<f64>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentArgs {
    /// circle-clusters, stacked-pair, oscillation or pca-check.
    name: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    outdir: Option<PathBuf>,
    #[arg(long)]
    cluster_size: Option<usize>,
    #[arg(long)]
    circle_points: Option<usize>,
    /// Image of the clusters in the analytic init.
    #[arg(long)]
    cluster_image: Option<f64>,
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long)]
    per_location: Option<usize>,
    /// x1_min,x1_max,x2_min,x2_max
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    n_max: Option<u32>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    particle_sweeps: Option<usize>,
}

#[derive(Args, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelsetArgs {
    /// Moments JSON as written by `experiment stacked-pair`.
    moments: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// x1_min,x1_max,x2_min,x2_max
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    #[arg(long)]
    res: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Overlays explicitly given flags on the JSON config file, if any.
fn merged<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else {
        return serde_json::to_value(flags)
            .and_then(serde_json::from_value)
            .map_err(|e| Error::input(e.to_string()));
    };
    let text = read_to_string(path)?;
    let mut base: Value = serde_json::from_str(&text)
        .map_err(|e| Error::input(format!("{}: malformed JSON config: {e}", path.display())))?;
    let Some(obj) = base.as_object_mut() else {
        return Err(Error::input(format!("{}: config must be a JSON object", path.display())));
    };
    if let Value::Object(explicit) = serde_json::to_value(flags).map_err(|e| Error::input(e.to_string()))? {
        for (k, v) in explicit {
            if !v.is_null() {
                obj.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

fn required<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::input(format!("missing required {what}")))
}

fn parse_init(spec: &str, scale: Option<f64>, cloud: &somds::PointCloud) -> Result<Init> {
    if scale.is_some() && spec != "random" {
        return Err(Error::input("--init-scale only applies to --init random"));
    }
    if spec == "random" {
        return Ok(Init::RandomGaussian { scale: scale.unwrap_or(1.0) });
    }
    if spec == "pca" {
        return Ok(Init::Pca);
    }
    if let Some(path) = spec.strip_prefix("map:") {
        return Ok(Init::Map(parse_map(&read_to_string(path)?)?));
    }
    if let Some(path) = spec.strip_prefix("plan:") {
        return Ok(Init::Plan(read_plan(path, cloud)?));
    }
    Err(Error::input(format!("unknown init '{spec}' (expected random, pca, map:PATH or plan:PATH)")))
}

fn cmd_embed(flags: EmbedArgs) -> Result<()> {
    let a = merged(&flags, flags.config.as_deref())?;
    let input = required(a.input, "input CSV")?;
    let out = required(a.out, "--out directory")?;
    let defaults = CostParams::default();
    let params = CostParams {
        sigma: a.sigma.unwrap_or(defaults.sigma),
        beta: a.beta.unwrap_or(defaults.beta),
        degree: a.degree.unwrap_or(defaults.degree),
        offset: a.offset.unwrap_or(defaults.offset),
        eps_d: a.eps_d.unwrap_or(defaults.eps_d),
    };
    let cost_name = a.cost.unwrap_or_else(|| "qmds".into());
    let cost = CostFamily::from_name(&cost_name, &params)?;
    let optimizer = a.optimizer.unwrap_or_else(|| "marginal".into());
    if optimizer != "particle" && optimizer != "marginal" {
        return Err(Error::input(format!("unknown optimizer '{optimizer}' (expected particle or marginal)")));
    }
    let dim = a.dim.unwrap_or(1);
    let seed = a.seed.unwrap_or(0);
    let init_spec = a.init.unwrap_or_else(|| "random".into());
    if optimizer == "particle" && init_spec.starts_with("plan:") {
        return Err(Error::input("--optimizer particle cannot start from a plan; use map:PATH"));
    }

    let cloud = read_cloud(&input)?;
    let init = parse_init(&init_spec, a.init_scale, &cloud)?;
    if matches!(init, Init::Pca) && dim > cloud.dim() {
        return Err(Error::input(format!("--init pca needs --dim <= {}", cloud.dim())));
    }
    let defaults = DescentConfig::default();
    let config = DescentConfig {
        dim_m: dim,
        seed,
        init,
        max_sweeps: a.max_sweeps.unwrap_or(defaults.max_sweeps),
        rel_tol: a.rel_tol.unwrap_or(defaults.rel_tol),
        candidate_budget: a.candidate_budget.unwrap_or(defaults.candidate_budget),
        ..defaults
    };
    config.validate()?;

    let (plan, trace, grad_norm) = if optimizer == "particle" {
        let res = particle_descent(&cloud, &cost, &config)?;
        (plan_from_map(&cloud, &res.map)?, res.trace, Some(res.grad_norm))
    } else {
        let start = config.initial_plan(&cloud)?;
        let (plan, trace) = marginal_sweep(&start, &cloud, &cost, &config)?;
        (plan, trace, None)
    };
    let det = determinism_report(&plan, DETERMINISM_TOL, f64::INFINITY);
    let files = vec!["embedding.csv".to_string(), "trace.csv".to_string()];
    write_string(out.join("embedding.csv"), &embedding_to_csv(&cloud, &plan))?;
    write_string(out.join("trace.csv"), &trace.to_csv())?;
    let final_stress = if plan.is_deterministic() {
        stress_map(&cloud, &plan.barycentric_map(), &cost)?
    } else {
        trace.final_energy()
    };
    let report = ExperimentReport {
        experiment: "embed".into(),
        seed,
        config: json!({
            "input": input.display().to_string(),
            "cost": cost_name,
            "dim": dim,
            "optimizer": optimizer,
            "init": init_spec,
            "max_sweeps": config.max_sweeps,
            "rel_tol": config.rel_tol,
        }),
        runs: vec![RunRecord {
            optimizer: optimizer.clone(),
            init: config.init.label().into(),
            final_stress,
            sweeps: trace.sweeps(),
            deterministic: det.is_deterministic,
            files,
        }],
        checks: json!({
            "split_mass_fraction": det.split_mass_fraction,
            "max_spread": det.max_spread,
            "grad_norm": grad_norm,
            "fixed_point": trace.fixed_point,
        }),
    };
    write_string(out.join("report.json"), &report.to_json())?;
    println!("{optimizer}: final stress {final_stress:.12e} after {} sweeps", trace.sweeps());
    Ok(())
}

fn cmd_experiment(flags: ExperimentArgs) -> Result<()> {
    let a = merged(&flags, flags.config.as_deref())?;
    let name = required(a.name, "experiment name")?;
    let outdir = a.outdir.unwrap_or_else(|| PathBuf::from(format!("out/{name}")));
    let params = ExperimentParams {
        cluster_size: a.cluster_size,
        circle_points: a.circle_points,
        cluster_image: a.cluster_image,
        init_scale: a.init_scale,
        per_location: a.per_location,
        region: a.region.as_deref().map(Region::parse).transpose()?,
        res: a.res,
        n_max: a.n_max,
        amplitude: a.amplitude,
        samples: a.samples,
        max_sweeps: a.max_sweeps,
        particle_sweeps: a.particle_sweeps,
    };
    let report = run_experiment(&name, &params, a.seed.unwrap_or(0), Some(&outdir))?;
    for run in &report.runs {
        println!("{} ({}): stress {:.12e}", run.optimizer, run.init, run.final_stress);
    }
    println!("wrote {}", outdir.join("report.json").display());
    Ok(())
}

fn cmd_levelset(flags: LevelsetArgs) -> Result<()> {
    let a = merged(&flags, flags.config.as_deref())?;
    let path = required(a.moments, "moments JSON")?;
    let out = required(a.out, "--out directory")?;
    let moments = MomentSet::from_json(&read_to_string(&path)?)
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    let region = match a.region {
        Some(r) => Region::parse(&r)?,
        None => Region::square(2.0),
    };
    let grid = level_set_grid(&moments, region, a.res.unwrap_or(201))?;
    write_string(out.join("levelset.csv"), &grid.to_csv())?;
    write_string(
        out.join("levelset.svg"),
        &svg::bands(&grid, "selected marginal minimizer; dots: several global minimizers"),
    )?;
    let multiple = grid.nodes.iter().filter(|n| n.count >= 2).count();
    println!("{} nodes, {multiple} with several global minimizers", grid.nodes.len());
    Ok(())
}

fn threads_from_env() -> Result<()> {
    if let Ok(v) = std::env::var("MDS_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("MDS_THREADS must be a nonnegative integer, got '{v}'")))?;
        somds::sum::set_threads(n);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|()| match cli.command {
        Command::Embed(a) => cmd_embed(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Levelset(a) => cmd_levelset(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
