use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[domain]
width = 0.06
height = 0.06
cells_x = 6
cells_y = 6

[region.core]
id = 1
material = "bundled"
rects = [[0.01, 0.01, 0.02, 0.05], [0.02, 0.01, 0.05, 0.02], [0.02, 0.04, 0.05, 0.05], [0.04, 0.02, 0.05, 0.04]]

[region.coil]
id = 2
rects = [[0.02, 0.02, 0.04, 0.04]]
current_density = 6.25e5

[study]
h_levels = [0, 1]
orders = [1, 2]

[method.fixedpoint]
nu_bar = 6.31e3
"#;

fn nlmag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlmag")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_small(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn init_prints_a_loadable_config() {
    let out = nlmag(&["init"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("[domain]"));
    assert!(nlmag::config::parse_config_str(&text).is_ok());
}

#[test]
fn study_writes_outputs_and_certify_accepts_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    let out_dir = dir.path().join("out");
    let out = nlmag(&["study", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--threads", "2", "--fields"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout(&out);
    assert!(summary.starts_with("row,p1_h0,p1_h1,p2_h0,p2_h1,q,certified\ndofs,25,121,121,529,,"), "{summary}");
    assert_eq!(summary.lines().count(), 5);
    for f in ["summary.csv", "cells.csv", "timings.csv", "config.toml", "trace_newton_p2_h1.csv", "cert_kacanov_p1_h0.txt", "field_fixedpoint_p1_h1.vtk"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }

    let trace = out_dir.join("trace_kacanov_p2_h1.csv");
    let out = nlmag(&["certify", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("tau_star"));
    // recomputing from the config must agree
    let out = nlmag(&["certify", trace.to_str().unwrap(), "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn solve_and_export_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    let out = nlmag(&["solve", "--config", &cfg, "--method", "kacanov", "--h-level", "0", "--order", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("converged"));
    assert!(dir.path().join("trace_kacanov_p2_h0.csv").exists());

    let vtk = dir.path().join("a.vtk");
    let out = nlmag(&["export", "--config", &cfg, "--h-level", "0", "--file", vtk.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(std::fs::read_to_string(vtk).unwrap().starts_with("# vtk DataFile"));
}

#[test]
fn iteration_cap_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("capped.toml");
    std::fs::write(&path, format!("{SMALL}\n[solver]\nmax_iterations = 2\n")).unwrap();
    let out = nlmag(&["solve", "--config", path.to_str().unwrap(), "--method", "fixedpoint", "--h-level", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[domain]\nwidth = -1\nbogus = 3\n").unwrap();
    let out = nlmag(&["solve", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus"), "{err}");

    let out = nlmag(&["certify", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
