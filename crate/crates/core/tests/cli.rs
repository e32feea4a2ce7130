use std::path::Path;
use std::process::Command;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_momentum-mpc"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let out = tempfile::tempdir().unwrap();
    let status = cli()
        .args(["run", "no_push_regulation", "--out-dir"])
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for file in ["run.csv", "summary.json", "com_xy.svg", "com_z.svg", "forces_z.svg", "trigger_timeline.svg"] {
        assert!(out.path().join(file).exists(), "{file} missing");
    }
    let csv = std::fs::read_to_string(out.path().join("run.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 41);
    assert_eq!(&header[..4], &["t", "com_x", "com_y", "com_z"]);
    assert_eq!(csv.lines().count(), 501);
}

#[test]
fn config_error_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "[controller]\ndt = -1.0\n");
    let output = cli().args(["run", &bad]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("controller.dt"));

    let missing = cli().args(["run", "/nonexistent/scenario.toml"]).status().unwrap();
    assert_eq!(missing.code(), Some(2));
}

#[test]
fn fall_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[simulation]\nduration = 3.0\n\n[[simulation.pushes]]\nstart_time = 0.1\nduration = 0.2\nmagnitude = 600.0\nangle_deg = 0.0\n";
    let config = write_config(dir.path(), "shove.toml", body);
    let status = cli().args(["run", &config, "--out-dir"]).arg(dir.path().join("out")).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn solver_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[controller]\nmax_consecutive_failures = 1\n\n[controller.solver]\nmax_iterations = 1\npolish = false\n\n[simulation]\nduration = 0.5\n";
    let config = write_config(dir.path(), "starved.toml", body);
    let status = cli().args(["run", &config, "--out-dir"]).arg(dir.path().join("out")).status().unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn overrides_are_applied() {
    let out = tempfile::tempdir().unwrap();
    let status = cli()
        .args(["run", "no_push_regulation", "--dt", "0.02", "--horizon", "10", "--seed", "4", "--out-dir"])
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(out.path().join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 251);

    let bad = cli().args(["run", "no_push_regulation", "--horizon", "0"]).status().unwrap();
    assert_eq!(bad.code(), Some(2));
}

#[test]
fn sweep_writes_one_directory_per_magnitude() {
    let out = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "short.toml",
        "[simulation]\nduration = 0.8\n\n[[simulation.pushes]]\nmagnitude = 10.0\n",
    );
    let output = cli()
        .args(["sweep", &config, "--push-magnitudes", "0,10", "--out-dir"])
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let dirs: Vec<_> = std::fs::read_dir(out.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 2);
    assert!(dirs.iter().all(|d| d.join("run.csv").exists()));
}

#[test]
fn check_and_list() {
    let check = cli().args(["check", "side_push_20deg"]).output().unwrap();
    assert_eq!(check.status.code(), Some(0), "{}", String::from_utf8_lossy(&check.stdout));

    let list = cli().arg("list").output().unwrap();
    let names = String::from_utf8_lossy(&list.stdout);
    for name in ["side_push_20deg", "back_push_neg20deg", "front_push_45deg", "sub_threshold_push", "no_push_regulation"] {
        assert!(names.lines().any(|l| l == name), "{name} not listed");
    }
}

#[test]
fn plots_can_be_disabled() {
    let out = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "quiet.toml",
        "[simulation]\nduration = 0.2\n\n[output.plots]\ncom_xy = false\ncom_z = false\nforces_z = false\ntrigger_timeline = false\n",
    );
    let status = cli().args(["run", &config, "--out-dir"]).arg(out.path()).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let svgs = std::fs::read_dir(out.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert_eq!(svgs, 0);
}
