use std::path::Path;
use std::process::{Command, Output};

fn tsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsd")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn mesh_info_counts() {
    for (n, nodes, elements) in [(8, 145, 256), (32, 2113, 4096), (128, 33025, 65536)] {
        let out = tsd(&["mesh-info", "--mesh-level", &n.to_string()]);
        assert_eq!(out.status.code(), Some(0));
        let text = stdout(&out);
        assert!(text.contains(&format!("nodes {nodes}\n")), "{text}");
        assert!(text.contains(&format!("elements {elements}\n")), "{text}");
    }
}

#[test]
fn mesh_level_zero_is_rejected() {
    assert_eq!(tsd(&["mesh-info", "--mesh-level", "0"]).status.code(), Some(2));
}

#[test]
fn verify_default_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = tsd(&["verify", "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for m in ["fd", "cs", "hd"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("errors_{m}.csv"))).unwrap();
        assert!(csv.lines().count() > 2);
    }
    let nodes = std::fs::read_to_string(dir.path().join("nodes.csv")).unwrap();
    assert_eq!(nodes.lines().count(), 146);
    assert!(stdout(&out).contains("nodes 145"));
}

#[test]
fn invalid_parameters_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"problem": {"lambda2": 0.0}}"#);
    let out = tsd(&["verify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    let cfg = write_config(dir.path(), r#"{"unknown_field": 1}"#);
    assert_eq!(tsd(&["optimize", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn hyper_dual_columns_do_not_depend_on_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"verification": {"methods": ["hd"], "hd_steps": [1.0, 0.01]}}"#);
    let out = tsd(&["verify", "--config", &cfg, "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("errors_hd.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    // both steps reproduce the analytic values to roundoff
    for row in &rows {
        for e in &row[2..] {
            assert!(e.parse::<f64>().unwrap() < 1e-13, "{row:?}");
        }
    }
}

#[test]
fn zero_iterations_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"mesh_level": 8, "optimizer": {"max_iter": 0}}"#);
    let out = tsd(&["optimize", "--config", &cfg, "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let history = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    assert!(dir.path().join("final.vtk").exists());
}

#[test]
fn optimization_is_deterministic() {
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            r#"{"mesh_level": 8, "target_reduction": 1.0, "optimizer": {"max_iter": 40, "snapshot_cadence": 20}}"#,
        );
        let out = tsd(&["optimize", "--config", &cfg, "--output", dir.path().to_str().unwrap(), "--threads", threads]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join("snapshot_00020.vtk").exists());
        assert!(dir.path().join("interface.vtk").exists());
        std::fs::read(dir.path().join("history.csv")).unwrap()
    };
    let a = run("1");
    assert_eq!(a, run("1"));
    assert_eq!(a, run("3"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("iter,J,normG,kappa,theta,nTminus,nTplus,nS\n"));
}

#[test]
fn config_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = tsd(&["config", "--mesh-level", "12"]);
    assert_eq!(out.status.code(), Some(0));
    let printed = stdout(&out);
    let cfg = write_config(dir.path(), &printed);
    let again = tsd(&["config", "--config", &cfg]);
    assert_eq!(stdout(&again), printed);
    assert!(printed.contains("\"mesh_level\": 12"));
}
