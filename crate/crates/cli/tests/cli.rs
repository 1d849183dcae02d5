use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use somds::io::{parse_cloud, parse_embedding, read_to_string};
use somds::optim::parse_trace;
use somds::quartic::parse_level_set;

fn somds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_somds")).args(args).output().unwrap()
}

fn somds_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_somds")).args(args).env(key, value).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn stacked_csv(per_location: usize) -> String {
    let mut text = String::from("x1,x2\n");
    for _ in 0..per_location {
        text.push_str("0,1\n");
    }
    for _ in 0..per_location {
        text.push_str("0,-1\n");
    }
    text
}

#[test]
fn two_points_embed_with_zero_stress() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "pair.csv", "x1\n0\n1\n");
    let out_dir = dir.path().join("out");
    let out = somds(&["embed", &input, "--cost", "qmds", "--dim", "1", "--optimizer", "marginal", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rep = report(&out_dir);
    assert_eq!(rep["experiment"], "embed");
    assert!(rep["runs"][0]["final_stress"].as_f64().unwrap() < 1e-12);
    assert_eq!(rep["runs"][0]["deterministic"], true);

    let rows = parse_embedding(&read_to_string(out_dir.join("embedding.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(((rows[0].y[0] - rows[1].y[0]).abs() - 1.0).abs() < 1e-6);
    let trace = parse_trace(&read_to_string(out_dir.join("trace.csv")).unwrap()).unwrap();
    assert_eq!(trace[0].sweep, 0);
}

#[test]
fn stacked_pair_embeds_as_projection() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "stacked.csv", &stacked_csv(20));
    let out_dir = dir.path().join("out");
    let out = somds(&["embed", &input, "--dim", "1", "--seed", "4", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = parse_embedding(&read_to_string(out_dir.join("embedding.csv")).unwrap()).unwrap();
    let up: Vec<f64> = rows.iter().filter(|r| r.x[1] > 0.0).map(|r| r.y[0]).collect();
    let down: Vec<f64> = rows.iter().filter(|r| r.x[1] < 0.0).map(|r| r.y[0]).collect();
    let spread = |v: &[f64]| v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - v.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    assert!(spread(&up) < 1e-6 && spread(&down) < 1e-6);
    assert!(((up[0] - down[0]).abs() - 2.0).abs() < 1e-6, "{} {}", up[0], down[0]);
}

#[test]
fn particle_optimizer_and_pca_init() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "tri.csv", "x1,x2,w\n0,0,0.5\n1,0,0.25\n0,2,0.25\n");
    let out_dir = dir.path().join("out");
    let out = somds(&["embed", &input, "--optimizer", "particle", "--init", "pca", "--max-sweeps", "50", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rep = report(&out_dir);
    assert_eq!(rep["runs"][0]["optimizer"], "particle");
    assert!(rep["runs"][0]["sweeps"].as_u64().unwrap() <= 50);
}

#[test]
fn map_and_plan_inits() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "pair.csv", "x1\n0\n1\n");
    let map = write(dir.path(), "map.csv", "y1\n0.2\n0.4\n");
    let plan = write(dir.path(), "plan.csv", "i,mass,y1\n0,0.25,1\n0,0.25,-1\n1,0.5,0\n");
    for init in [format!("map:{map}"), format!("plan:{plan}")] {
        let out_dir = dir.path().join(init.split(':').next().unwrap());
        let out = somds(&["embed", &input, "--init", &init, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{init}: {}", stderr(&out));
        assert!(report(&out_dir)["runs"][0]["final_stress"].as_f64().unwrap() < 1e-12);
    }
}

#[test]
fn missing_file_names_the_path() {
    let out = somds(&["embed", "/nonexistent/points.csv", "--out", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/nonexistent/points.csv"), "{}", stderr(&out));
}

#[test]
fn bad_csv_reports_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.csv", "x1,x2\n0,1\n0,oops\n");
    let out = somds(&["embed", &input, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("line 3") && msg.contains("x2"), "{msg}");
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "pair.csv", "x1\n0\n1\n");
    let out_dir = dir.path().join("o");
    let o = out_dir.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["embed", &input, "--cost", "nope", "--out", o],
        vec!["embed", &input, "--optimizer", "sgd", "--out", o],
        vec!["embed", &input, "--init", "pca", "--dim", "3", "--out", o],
        vec!["embed", &input, "--optimizer", "particle", "--init", "plan:x.csv", "--out", o],
        vec!["embed", &input, "--init", "pca", "--init-scale", "2", "--out", o],
        vec!["embed", &input, "--max-sweeps", "0", "--out", o],
        vec!["experiment", "nope", "--outdir", o],
    ];
    for args in cases {
        let out = somds(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
    let out = somds_env(&["embed", &input, "--out", o], "MDS_THREADS", "many");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "huge.csv", "x1\n0\n1e200\n");
    let out = somds(&["embed", &input, "--optimizer", "particle", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "pair.csv", "x1\n0\n1\n");
    let out_dir = dir.path().join("o");
    let config = write(
        dir.path(),
        "cfg.json",
        &format!(r#"{{"input": "{input}", "cost": "qmds", "max_sweeps": 3, "out": "{}"}}"#, out_dir.display()),
    );
    let out = somds(&["embed", "--config", &config, "--max-sweeps", "7"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(report(&out_dir)["config"]["max_sweeps"], 7);

    let bad = write(dir.path(), "bad.json", r#"{"no_such_key": 1}"#);
    let out = somds(&["embed", &input, "--config", &bad, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no_such_key"), "{}", stderr(&out));

    let malformed = write(dir.path(), "m.json", "{ nope");
    let out = somds(&["embed", &input, "--config", &malformed, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("x1,x2,x3\n");
    for k in 0..40 {
        let t = k as f64 * 0.37;
        text.push_str(&format!("{},{},{}\n", t.sin(), (2.0 * t).cos(), t * 0.05));
    }
    let input = write(dir.path(), "pts.csv", &text);
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out_dir = dir.path().join(name);
            let out = somds(&["embed", &input, "--dim", "2", "--seed", "11", "--out", out_dir.to_str().unwrap()]);
            assert!(out.status.success(), "{}", stderr(&out));
            out_dir
        })
        .collect();
    for file in ["embedding.csv", "trace.csv", "report.json"] {
        assert_eq!(fs::read(runs[0].join(file)).unwrap(), fs::read(runs[1].join(file)).unwrap(), "{file}");
    }
    let threaded = dir.path().join("t");
    let out = somds_env(&["embed", &input, "--dim", "2", "--seed", "11", "--out", threaded.to_str().unwrap()], "MDS_THREADS", "2");
    assert!(out.status.success());
    assert_eq!(fs::read(runs[0].join("embedding.csv")).unwrap(), fs::read(threaded.join("embedding.csv")).unwrap());
}

#[test]
fn stacked_pair_experiment_and_levelset() {
    let dir = tempfile::tempdir().unwrap();
    let exp = dir.path().join("exp");
    let out = somds(&["experiment", "stacked-pair", "--per-location", "50", "--res", "41", "--outdir", exp.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rep = report(&exp);
    assert_eq!(rep["checks"]["center_count"], 1);
    for f in ["moments.json", "levelset.csv", "levelset.svg", "embedding.csv", "trace.csv"] {
        assert!(exp.join(f).exists(), "{f}");
    }

    let moments = exp.join("moments.json");
    let lv = dir.path().join("lv");
    let out = somds(&["levelset", moments.to_str().unwrap(), "--region=-2,2,-2,2", "--res", "201", "--out", lv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let nodes = parse_level_set(&read_to_string(lv.join("levelset.csv")).unwrap()).unwrap();
    assert_eq!(nodes.len(), 201 * 201);
    let nearest = |p: [f64; 2]| {
        nodes
            .iter()
            .min_by(|a, b| {
                let da = (a.x[0] - p[0]).powi(2) + (a.x[1] - p[1]).powi(2);
                let db = (b.x[0] - p[0]).powi(2) + (b.x[1] - p[1]).powi(2);
                da.total_cmp(&db)
            })
            .unwrap()
    };
    assert_eq!(nearest([0.0, 0.0]).count, 1);
    assert_eq!(nearest([1.5, 0.0]).count, 2);
    assert!(read_to_string(lv.join("levelset.svg")).unwrap().contains("<svg"));

    let out = somds(&["levelset", moments.to_str().unwrap(), "--res", "1", "--out", lv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let broken = write(dir.path(), "broken.json", "{\"dim_d\": 2");
    let out = somds(&["levelset", &broken, "--out", lv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oscillation_experiment_csv() {
    let dir = tempfile::tempdir().unwrap();
    let exp = dir.path().join("osc");
    let out = somds(&["experiment", "oscillation", "--res", "16", "--n-max", "4", "--outdir", exp.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = read_to_string(exp.join("oscillation.csv")).unwrap();
    assert!(text.starts_with("n,stress\n"));
    assert!(text.contains("# stress_zero="));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 5);
}

#[test]
fn circle_clusters_writes_figures() {
    let dir = tempfile::tempdir().unwrap();
    let exp = dir.path().join("cc");
    let out = somds(&[
        "experiment",
        "circle-clusters",
        "--seed",
        "42",
        "--cluster-size",
        "40",
        "--circle-points",
        "30",
        "--particle-sweeps",
        "40",
        "--outdir",
        exp.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rep = report(&exp);
    assert_eq!(rep["runs"].as_array().unwrap().len(), 2);
    for f in ["particle.svg", "marginal.svg"] {
        let svg = read_to_string(exp.join(f)).unwrap();
        assert_eq!(svg.matches("<circle").count(), 110);
    }
    for f in ["particle_embedding.csv", "marginal_embedding.csv"] {
        assert_eq!(parse_embedding(&read_to_string(exp.join(f)).unwrap()).unwrap().len(), 110);
    }
}

#[test]
fn cloud_csv_from_embedding_reparses() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "pts.csv", "x1,x2\n0.1,0.2\n-0.3,0.5\n0.7,-0.1\n");
    let out_dir = dir.path().join("o");
    assert!(somds(&["embed", &input, "--out", out_dir.to_str().unwrap()]).status.success());
    let rows = parse_embedding(&read_to_string(out_dir.join("embedding.csv")).unwrap()).unwrap();
    let cloud = parse_cloud(&read_to_string(&input).unwrap()).unwrap();
    for (row, p) in rows.iter().zip(cloud.points()) {
        assert_eq!(row.x, p);
    }
}
