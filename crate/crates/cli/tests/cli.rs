use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_zo-adamu"))
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const BEALE: &str = "
objective = beale
optimizers = zo-adamu
eta = 4.2e-4
eps = 3e-3
t1 = 100
t2 = 1800
t3 = 2000
repeats = 5
";

fn csvs(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

#[test]
fn run_writes_one_csv_per_repeat_and_metrics() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "beale.cfg", BEALE);
    let out = tmp.path().join("out");
    let res = exec(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(
        csvs(&out),
        (0..5).map(|k| format!("zo-adamu_r{k}.csv")).collect::<Vec<_>>()
    );
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let runs = metrics["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 5);
    for (k, run) in runs.iter().enumerate() {
        assert_eq!(run["seed"], k as u64);
        assert_eq!(run["state_bytes"]["array_reals"], 2);
        for key in ["final_loss", "best_loss", "steps_to_threshold"] {
            assert!(run.get(key).is_some(), "missing {key}");
        }
    }
    let csv = fs::read_to_string(out.join("zo-adamu_r0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "step,loss,g_scalar,alpha,beta1,beta2,theta_0,theta_1");
    let steps: Vec<u64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(steps, (1..=2000).collect::<Vec<_>>());
}

#[test]
fn runs_are_byte_identical_across_invocations_and_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "beale.cfg", BEALE);
    let mut dirs = Vec::new();
    for (i, threads) in ["1", "3", "1"].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let res = exec(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        dirs.push(out);
    }
    for name in csvs(&dirs[0]).into_iter().chain(["metrics.json".to_string()]) {
        let first = fs::read(dirs[0].join(&name)).unwrap();
        for d in &dirs[1..] {
            assert_eq!(first, fs::read(d.join(&name)).unwrap(), "{name} differs");
        }
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "beale.cfg", &BEALE.replace("repeats = 5", "repeats = 1"));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    exec(&["run", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    exec(&["run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "9"]);
    assert_ne!(fs::read(a.join("zo-adamu_r0.csv")).unwrap(), fs::read(b.join("zo-adamu_r0.csv")).unwrap());
    assert!(fs::read_to_string(b.join("config.txt")).unwrap().contains("seed = 9"));
}

#[test]
fn config_errors_exit_2_and_name_the_field_before_running() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("never");
    let cases = [
        (BEALE.replace("t2 = 1800", "t2 = 100"), "t2"),
        (BEALE.replace("eta = 4.2e-4\n", ""), "eta"),
        (BEALE.replace("repeats = 5", "repeats = 0"), "repeats"),
        (format!("{BEALE}\nlearning_rate = 1"), "learning_rate"),
    ];
    for (i, (text, field)) in cases.iter().enumerate() {
        let cfg = write_cfg(tmp.path(), &format!("bad{i}.cfg"), text);
        for sub in ["run", "validate"] {
            let res = exec(&[sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            assert_eq!(code(&res), 2, "{sub} {field}: {}", stderr(&res));
            assert!(stderr(&res).contains(&format!("`{field}`")), "{}", stderr(&res));
        }
    }
    assert!(!out.exists());
}

#[test]
fn degenerate_schedule_exits_2() {
    let tmp = TempDir::new().unwrap();
    let text = BEALE.replace("t2 = 1800", "t2 = 300").replace("t3 = 2000", "t3 = 1000");
    let cfg = write_cfg(tmp.path(), "degenerate.cfg", &text);
    let res = exec(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("degenerate"), "{}", stderr(&res));
}

#[test]
fn numeric_failure_exits_3_after_writing_artifacts() {
    let tmp = TempDir::new().unwrap();
    let text = BEALE.replace("repeats = 5", "repeats = 1") + "init = 1e80, 1e80\n";
    let cfg = write_cfg(tmp.path(), "huge.cfg", &text);
    let out = tmp.path().join("out");
    let res = exec(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 3, "{}", stderr(&res));
    assert!(out.join("metrics.json").exists());
}

#[test]
fn missing_config_file_exits_1() {
    let res = exec(&["run", "--config", "/nonexistent/zo.cfg"]);
    assert_eq!(code(&res), 1);
}

const ROSENBROCK: &str = "
objective = rosenbrock
eta = 5e-4
eps = 1e-2
t1 = 900
t2 = 990
t3 = 1000
repeats = 3
";

#[test]
fn compare_reports_identical_rows_for_a_repeated_optimizer() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "r.cfg", &format!("{ROSENBROCK}optimizers = mezo, mezo\n"));
    let out = tmp.path().join("cmp");
    let res = exec(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn compare_across_configs_and_sentinel_for_unreached_threshold() {
    let tmp = TempDir::new().unwrap();
    let a = write_cfg(tmp.path(), "a.cfg", &format!("{ROSENBROCK}optimizers = zo-adamu\nthreshold = -1\n"));
    let b = write_cfg(tmp.path(), "b.cfg", &format!("{ROSENBROCK}optimizers = mezo\nthreshold = -1\n"));
    let out = tmp.path().join("cmp");
    let res = exec(&[
        "compare",
        "--config",
        a.to_str().unwrap(),
        "--config",
        b.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows[0]["optimizer"], "zo-adamu");
    assert_eq!(rows[1]["optimizer"], "mezo");
    for row in rows {
        assert_eq!(row["median_steps_to_threshold"], -1.0);
        assert_eq!(row["success_rate"], 0.0);
    }
}

#[test]
fn compare_rejects_different_objectives() {
    let tmp = TempDir::new().unwrap();
    let a = write_cfg(tmp.path(), "a.cfg", &format!("{ROSENBROCK}optimizers = mezo\n"));
    let b = write_cfg(tmp.path(), "b.cfg", &format!("{}optimizers = mezo\n", ROSENBROCK.replace("rosenbrock", "beale")));
    let res = exec(&["compare", "--config", a.to_str().unwrap(), "--config", b.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("do not share"), "{}", stderr(&res));
}

const GRID_A: &str = "
objective = a
optimizers = zo-adamu
eta = 1e-3
t3 = 1000
repeats = 2
";

#[test]
fn grid_search_covers_every_point() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "g.cfg",
        &format!("{GRID_A}grid_t1 = 50, 100, 200\ngrid_t2 = 500, 700, 900\ngrid_t3 = 1000, 1200, 1500\n"),
    );
    let out = tmp.path().join("grid");
    let res = exec(&["grid-search", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let csv = fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 27);
    let excluded = csv.lines().filter(|l| l.contains("excluded")).count();
    assert_eq!(stderr(&res).lines().filter(|l| l.starts_with("excluded")).count(), excluded);
}

#[test]
fn grid_of_one_point_returns_it() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "g.cfg", &format!("{GRID_A}grid_t1 = 100\ngrid_t2 = 500\ngrid_t3 = 1000\n"));
    let out = tmp.path().join("grid");
    let res = exec(&["grid-search", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("grid.json")).unwrap()).unwrap();
    assert_eq!(report["best"], 0);
    assert_eq!(report["rows"][0]["t1"], 100);
}

#[test]
fn grid_with_only_degenerate_points_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "g.cfg", &format!("{GRID_A}grid_t1 = 100\ngrid_t2 = 300\ngrid_t3 = 1000\n"));
    let res = exec(&["grid-search", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("no valid points"), "{}", stderr(&res));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let res = exec(&["validate", "--config", path.to_str().unwrap()]);
        assert_eq!(code(&res), 0, "{}: {}", path.display(), stderr(&res));
        n += 1;
    }
    assert!(n >= 4);
}
