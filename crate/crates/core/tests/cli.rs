use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cnsim::commands::{cell_dir, cmd_epidemic, cmd_generate, cmd_sweep, SweepAxes, MANIFEST};
use cnsim::pipeline::TargetSpec;
use cnsim::scenario::{load_scenario, AgeShape, Rule, Scenario};

fn cnsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnsim"))
        .args(args)
        .env_remove("CNSIM_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap()
}

fn artifacts(dir: &Path) -> Vec<String> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST)
        .collect();
    names.sort();
    names
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = cnsim(&["generate", "--preset", "B_H-", "--seed", "11", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let names = artifacts(&a);
    assert!(names.contains(&"network.csv".to_string()));
    assert_eq!(names, artifacts(&b));
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
    }
    let manifest = json(&a.join(MANIFEST));
    assert_eq!(manifest["master_seed"], 11);
    assert_eq!(manifest["command"], "generate");
}

#[test]
fn different_seeds_give_different_networks() {
    let dir = tempfile::tempdir().unwrap();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        assert!(cnsim(&["generate", "--preset", "U_PH", "--seed", seed, "--out", out.to_str().unwrap()])
            .status
            .success());
    }
    assert_ne!(read(&dir.path().join("1/network.csv")), read(&dir.path().join("2/network.csv")));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = cnsim(&["generate", "--seed", "1", "--set", "edge_budget=5000", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("edge_budget"));

    let missing = dir.path().join("missing.toml");
    let o = cnsim(&["generate", "--scenario", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "node_count = [").unwrap();
    let o = cnsim(&["generate", "--scenario", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn out_dir_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cnsim"))
        .args(["generate", "--preset", "U_H+", "--seed", "3"])
        .env("CNSIM_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("network.csv").exists());
}

#[test]
fn zero_budget_gives_empty_network() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = cnsim(&["generate", "--preset", "U_PH", "--seed", "4", "--set", "edge_budget=0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&out.join("network.csv")).trim(), "i,j,gamma");
    assert_eq!(json(&out.join("summary.json"))["edge_count"], 0);
}

#[test]
fn zero_transmissibility_leaves_only_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    let o = cnsim(&["epidemic", "--preset", "U_PH", "--seed", "5", "--set", "transmissibility=0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let risk = json(&out.join("risk.json"));
    assert_eq!(risk["final_infected"], 1);
    let first = &risk["par"][0];
    assert_eq!((first["t"].as_u64(), first["d"].as_u64()), (Some(0), Some(0)));
    assert!((first["par"].as_f64().unwrap() - 1.0 / 90.0).abs() < 1e-12);
}

#[test]
fn epidemic_on_saved_network_matches_regeneration() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario::preset("L_H-", 8).unwrap();
    cmd_generate(&s, &dir.path().join("g")).unwrap();
    cmd_epidemic(&s, None, &dir.path().join("a")).unwrap();
    cmd_epidemic(&s, Some(&dir.path().join("g/network.csv")), &dir.path().join("b")).unwrap();
    assert_eq!(read(&dir.path().join("a/trace.csv")), read(&dir.path().join("b/trace.csv")));
}

#[test]
fn single_cell_sweep_matches_separate_commands() {
    let dir = tempfile::tempdir().unwrap();
    let base = Scenario::with_seed(21);
    let axes = SweepAxes {
        shapes: vec![AgeShape::Bell],
        rules: vec![Rule::Hplus],
        transmissibilities: vec![0.6],
    };
    cmd_sweep(&base, &axes, &TargetSpec::ba_for(&base), 2, &dir.path().join("s")).unwrap();
    let cell = dir.path().join("s/cells").join(cell_dir(AgeShape::Bell, Rule::Hplus, 0.6));

    let mut s = base.clone();
    s.age_shape = AgeShape::Bell;
    s.rule = Rule::Hplus;
    s.transmissibility = 0.6;
    cmd_generate(&s, &dir.path().join("g")).unwrap();
    cmd_epidemic(&s, None, &dir.path().join("e")).unwrap();
    for name in artifacts(&dir.path().join("g")) {
        assert_eq!(read(&cell.join(&name)), read(&dir.path().join("g").join(&name)), "{name}");
    }
    for name in artifacts(&dir.path().join("e")) {
        assert_eq!(read(&cell.join(&name)), read(&dir.path().join("e").join(&name)), "{name}");
    }
}

#[test]
fn optimize_writes_a_loadable_fitted_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = cnsim(&[
        "optimize", "--preset", "U_PH", "--seed", "2", "--budget", "1", "--signs", "1", "--weights", "0.05",
        "--target", "ba:90,20", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = read(&out.join("optimizer_log.csv"));
    assert_eq!(log.lines().count(), 1 + 5);
    let best = json(&out.join("best_candidate.json"));
    assert_eq!(best["evaluations"], 1);
    assert_eq!(best["sdna"]["wp"], 0.05);

    let fitted = load_scenario(&out.join("fitted_scenario.toml")).unwrap();
    assert_eq!(fitted.rule, Rule::PH);
    assert_eq!(fitted.sdna.unwrap().wh, 0.05);
    let g = dir.path().join("g");
    let o = cnsim(&["generate", "--scenario", out.join("fitted_scenario.toml").to_str().unwrap(), "--out", g.to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn optimize_rejects_zero_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = cnsim(&["optimize", "--preset", "U_PH", "--seed", "2", "--budget", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_compares_an_edge_list_with_its_target() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    assert!(cnsim(&["generate", "--preset", "U_PH", "--seed", "6", "--out", g.to_str().unwrap()])
        .status
        .success());
    let r = dir.path().join("r");
    let edge_list = format!("edgelist:{}#90", g.join("network.csv").display());
    let o = cnsim(&[
        "report", "--preset", "U_PH", "--seed", "6", "--network", g.join("network.csv").to_str().unwrap(),
        "--target", &edge_list, "--out", r.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&r.join("report.json"));
    assert_eq!(report["js_degree"], 0.0);
    assert_eq!(report["summary"]["edge_count"], 1400);
    assert_eq!(read(&r.join("degree.csv")), read(&g.join("degree.csv")));
}
