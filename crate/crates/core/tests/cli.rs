use std::fs;
use std::process::Command;

fn eigenopt(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_eigenopt")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into(),
        String::from_utf8_lossy(&out.stderr).into(),
    )
}

#[test]
fn list_envs() {
    let (code, out, _) = eigenopt(&["list-envs"]);
    assert_eq!(code, 0);
    assert!(out.lines().any(|l| l == "maze"));
    assert!(out.lines().any(|l| l == "rubiks2x2"));
}

#[test]
fn version_and_help_exit_zero() {
    assert_eq!(eigenopt(&["--version"]).0, 0);
    assert_eq!(eigenopt(&["--help"]).0, 0);
}

#[test]
fn bad_arguments_and_configs_exit_one() {
    assert_eq!(eigenopt(&["frobnicate"]).0, 1);
    assert_eq!(eigenopt(&["run", "/nonexistent/x.conf"]).0, 1);
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("a.conf");
    fs::write(&conf, "env = maze\nalgorithm = q_learning\nsteps = 100\n").unwrap();
    let c = conf.to_str().unwrap();
    assert_eq!(eigenopt(&["run", c, "--set", "gamma=2"]).0, 1);
    assert_eq!(eigenopt(&["run", c, "--set", "no_equals_sign"]).0, 1);
    assert_eq!(eigenopt(&["run", c, "--set", "unknown.key=1"]).0, 1);
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("a.conf");
    let out = dir.path().join("out");
    fs::write(
        &conf,
        format!("env = maze\nalgorithm = random\nsteps = 500\nseeds = 0,1\noutput_dir = {}\n", out.display()),
    )
    .unwrap();
    let (code, stdout, _) = eigenopt(&["run", conf.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("2 seed(s) ok, 0 failed"));
    assert!(out.join("random_coverage.csv").exists());
}

#[test]
fn heatmap_exports() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("a.conf");
    fs::write(&conf, "env = maze\nalgorithm = random\nsteps = 500\n").unwrap();
    let c = conf.to_str().unwrap();
    let csv = dir.path().join("h.csv");
    let o = csv.to_str().unwrap();
    assert_eq!(eigenopt(&["export-heatmap", c, "--source", "oracle", "--index", "2", "--out", o]).0, 0);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert_eq!(eigenopt(&["export-heatmap", c, "--source", "visitation", "--out", o]).0, 0);
    // a random walk has no representation
    assert_eq!(eigenopt(&["export-heatmap", c, "--source", "learned", "--out", o]).0, 2);

    fs::write(&conf, "env = rubiks2x2\nalgorithm = random\nsteps = 100\n").unwrap();
    assert_eq!(eigenopt(&["export-heatmap", c, "--source", "oracle", "--out", o]).0, 2);
}
