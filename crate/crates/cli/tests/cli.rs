use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use airtwin::meshfem::{rect_mesh, write_gmsh, Rect};
use airtwin::pipeline::RunManifest;

const CFG: &str = "\
[mesh]
path = tiny.msh

[flow]
nu = 0.05
mu = 1
mu_range = 0.5, 2
inflow_tag = 1
noslip_tags = 10
outflow_tags = 2 3 4

[rom]
snapshots = 4
energy_tol = 1e-8

[transport]
k = 0.005
dt = 0.05
t_final = 0.5
dirichlet_tags = 1

[truth]
center = 0.5 0.3
radius = 0.15
level = 0.5

[sensors]
path = sensors.txt
t_start = 0.1
rate = 10
sigma_rel = 0.01

[prior]
correlation_length = 0.3
std = 1

[inverse]
lowrank = 4

[evac]
v_max = 0.5
rho_max = 5
alpha = 50
exit_tags = 3
dt = 0.02
t_final = 0.5
rho0 = 1
region = 0.1 0.4 0.1 0.3

[run]
seed = 11
output_dir = out
";

fn tiny(dir: &Path) -> PathBuf {
    let mesh = rect_mesh(8, 8, [0.0, 1.0], [0.0, 1.0], &[Rect::new(0.375, 0.625, 0.625, 0.75)]).unwrap();
    write_gmsh(&mesh, dir.join("tiny.msh")).unwrap();
    std::fs::write(dir.join("sensors.txt"), "0.2 0.5\n0.5 0.5\n0.8 0.5\n0.5 0.4\n").unwrap();
    let cfg = dir.join("scenario.cfg");
    std::fs::write(&cfg, CFG).unwrap();
    cfg
}

fn airtwin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airtwin")).args(args).env_remove("AIRTWIN_OUTPUT_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn mesh_info_reports_counts_and_tags() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    let o = airtwin(&["mesh-info", dir.path().join("tiny.msh").to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("triangles  124"), "{text}");
    assert!(text.contains("tag 10"));
}

#[test]
fn usage_errors_exit_with_two() {
    let o = airtwin(&["mesh-info", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(airtwin(&["frobnicate"]).status.code(), Some(2));
    let o = airtwin(&["mesh-info", "/nonexistent/x.msh"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[usage]"));
}

#[test]
fn missing_referenced_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    std::fs::remove_file(dir.path().join("sensors.txt")).unwrap();
    let o = airtwin(&["mips", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    std::fs::write(&cfg, CFG.replace("nu = 0.05", "nu = 0.05\nviscosity = 2")).unwrap();
    let o = airtwin(&["transport", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("viscosity"));
}

#[test]
fn cavity_verify_emits_profile_csv() {
    let o = airtwin(&["cavity-verify", "--re", "100", "--n", "32"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("re,y,u_x"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 32);
    assert!(rows.iter().all(|r| r[0] == 100.0));
    let min = rows.iter().map(|r| r[2]).fold(f64::INFINITY, f64::min);
    assert!(min < -0.1 && rows[0][2] == 0.0 && rows.last().unwrap()[1] == 0.5);
}

#[test]
fn mips_writes_a_complete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let o = airtwin(&["mips", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = RunManifest::read(&dir.path().join("out/manifest.json")).unwrap();
    assert!(m.is_complete());
    assert!(stdout(&o).contains("steer    completed"));
}

#[test]
fn output_directory_can_be_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let elsewhere = dir.path().join("elsewhere");
    let o = Command::new(env!("CARGO_BIN_EXE_airtwin"))
        .args(["transport", "--config", cfg.to_str().unwrap()])
        .env("AIRTWIN_OUTPUT_DIR", &elsewhere)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(elsewhere.read_dir().unwrap().next().is_some());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn rom_build_then_eval_with_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let c = cfg.to_str().unwrap();
    assert!(airtwin(&["rom-build", "--config", c]).status.success());
    let o = airtwin(&["rom-eval", "--config", c, "--mu", "1.3", "--check"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let err: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("error_vs_fom "))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(err < 0.05, "{text}");
    assert!(text.contains("coordinates "));
}
