//! Drive the installed binary: subcommands, exit codes and artifacts.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emrecon"))
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(
        &path,
        r#"
outer = [[0.0, 1.2], [0.0, 1.0], [0.0, 0.8]]
inner = [[0.2, 1.0], [0.2, 0.8], [0.2, 0.6]]
inclusions = [{ extents = [[0.4, 0.8], [0.4, 0.6], [0.3, 0.5]], eps = 6.0, mu = 1.8 }]
tau = 0.01
t_final = 1.0
omega = 9.0
delta = 0.1
max_iter = 2
"#,
    )
    .unwrap();
    path
}

#[test]
fn generate_then_reconstruct_from_file() {
    let dir = std::env::temp_dir().join(format!("emrecon_cli_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = tiny_config(&dir);

    let out = bin()
        .args(["generate-data", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("data"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("data/trace_noisy.csv").exists());
    assert!(dir.join("data/trace_clean.csv").exists());
    assert!(dir.join("data/manifest.toml").exists());

    let out = bin()
        .args(["reconstruct", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(dir.join("data/trace_noisy.csv"))
        .arg("--out")
        .arg(dir.join("rec"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max_eps="), "{stdout}");
    for f in [
        "iterations.csv",
        "eps_raw.vtk",
        "mu_masked.vtk",
        "report.txt",
        "manifest.toml",
    ] {
        assert!(dir.join("rec").join(f).exists(), "{f} missing");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn adjointcheck_reports_sensitivity() {
    let out = bin().args(["adjointcheck", "--seed", "3"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("sensitive=true"), "{stdout}");
}

#[test]
fn gradcheck_runs_on_reduced_config() {
    let dir = std::env::temp_dir().join(format!("emrecon_cli_gc_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("gc.toml");
    std::fs::write(
        &cfg_path,
        r#"
outer = [[0.0, 1.2], [0.0, 1.0], [0.0, 1.6]]
inner = [[0.2, 1.0], [0.2, 0.8], [0.2, 1.4]]
inclusions = [{ extents = [[0.4, 0.8], [0.4, 0.6], [0.3, 0.5]], eps = 6.0, mu = 1.8 }]
tau = 0.01
t_final = 1.0
omega = 9.0
delta = 0.1
gradcheck_nodes = 2
"#,
    )
    .unwrap();
    let out = bin()
        .args(["gradcheck", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("worst_rel_err="), "{stdout}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn run_case_writes_artifacts() {
    let dir = std::env::temp_dir().join(format!("emrecon_cli_case_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = tiny_config(&dir);
    let out = bin()
        .args(["run-case", "i", "--workdir"])
        .arg(dir.join("runs"))
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("runs/case_i/report.txt").exists());
    assert!(dir.join("runs/case_i/eps_masked.vtk").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_errors_exit_nonzero_with_category() {
    let dir = std::env::temp_dir().join(format!("emrecon_cli_err_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "gamma1 = -1.0\n").unwrap();
    let out = bin()
        .args(["reconstruct", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error[config]"), "{stderr}");

    // CFL violation carries the solver category.
    let bad2 = dir.join("bad2.toml");
    std::fs::write(&bad2, "tau = 0.06\nt_final = 1.2\n").unwrap();
    let out = bin()
        .args(["generate-data", "--config"])
        .arg(&bad2)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(5));
    std::fs::remove_dir_all(&dir).ok();
}
