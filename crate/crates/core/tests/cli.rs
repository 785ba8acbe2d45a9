use std::path::Path;
use std::process::Command;

fn divnav(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_divnav")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(divnav(&["--help"]).status.code(), Some(0));
    assert_eq!(divnav(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(divnav(&["run", "--out", "x"]).status.code(), Some(1));
    let missing = divnav(&["run", "--episode", "/nonexistent/ep.json", "--out", "/tmp/unused"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/ep.json"));
}

#[test]
fn decompose_prints_json() {
    let out = divnav(&["decompose", "--text", "the rug not in the bathroom"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["primary"], "rug");
    assert_eq!(v["proximity_set"], serde_json::json!(["rug"]));
}

#[test]
fn remote_decompose_needs_an_endpoint() {
    let out = Command::new(env!("CARGO_BIN_EXE_divnav"))
        .args(["decompose", "--text", "a towel", "--remote"])
        .env_remove("DIVNAV_LVLM_ENDPOINT")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_run_and_query_map() {
    let tmp = tempfile::tempdir().unwrap();
    let worlds = tmp.path().join("w");
    assert!(divnav(&["generate", "--count", "2", "--seed", "3", "--out", s(&worlds)]).status.success());
    let run = tmp.path().join("run");
    let ep = worlds.join("episode_0003.json");
    let out = divnav(&["run", "--episode", s(&ep), "--seed", "1", "--out", s(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["result.json", "meta.json", "trajectory.csv", "grid.json", "s_comb.pgm", "observed.pgm"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let traj = std::fs::read_to_string(run.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("target,step,x,y,heading,action,collided,phase\n"));

    let maps = tmp.path().join("maps");
    let world = worlds.join("world_0003.json");
    let out = divnav(&[
        "query-map", "--grid", s(&run.join("grid.json")), "--world", s(&world),
        "--queries", "table,kitchen", "--alpha", "0.8", "--out", s(&maps),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (w, h, _) = divnav::pgm::read(&maps.join("s_comb.pgm")).unwrap();
    assert_eq!((w, h), (32, 32));
    assert!(maps.join("s_0.pgm").exists() && maps.join("s_1.pgm").exists() && maps.join("s_int.pgm").exists());

    let bad_alpha = divnav(&[
        "query-map", "--grid", s(&run.join("grid.json")), "--queries", "table", "--alpha", "1.5", "--out", s(&maps),
    ]);
    assert_eq!(bad_alpha.status.code(), Some(2));
}

#[test]
fn batch_writes_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let worlds = tmp.path().join("w");
    assert!(divnav(&["generate", "--count", "3", "--out", s(&worlds)]).status.success());
    let out_dir = tmp.path().join("b");
    let pattern = format!("{}/episode_*.json", worlds.display());
    let out = divnav(&["batch", "--episodes", &pattern, "--jobs", "2", "--pipeline", "baseline", "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("pipeline: baseline") && stdout.contains("SRAT"));
    let report: divnav::metrics::MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.episodes, 3);
    let none = divnav(&["batch", "--episodes", "/nonexistent/*.json", "--out", s(&out_dir)]);
    assert_eq!(none.status.code(), Some(2));
}

#[test]
fn readme_config_loads() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/example_config.json");
    let cfg = divnav::config::Config::load(&p).unwrap();
    assert_eq!(cfg.noise.eps_fn, 0.2);
    assert!(cfg.endpoints.validator.is_some() && cfg.endpoints.embedder.is_none());
    let text = std::fs::read_to_string(&p).unwrap().replace("\"step_budget\"", "\"step_budgt\"");
    assert!(divnav::config::Config::from_json(&text).is_err());
}
