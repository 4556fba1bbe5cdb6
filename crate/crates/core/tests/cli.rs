use std::path::Path;
use std::process::{Command, Output};

use ymflow::field::snapshot::Snapshot;
use ymflow::field::Lattice;
use ymflow::harness::InitialData;
use ymflow::lie::Group;

fn ymflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ymflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const BASE: &str = r#"
group = "su2"
output = "out"
snapshot_every = 2

[lattice]
extents = [8, 8]
spacing = 0.125

[flow]
t_end = 0.01
"#;

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap()
}

#[test]
fn zero_flow_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{BASE}\n[initial]\nkind = \"zero\"\n"));
    let out = ymflow(dir.path(), &["flow-run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/diagnostics.csv")).unwrap();
    assert!(csv.starts_with("step,t,ym_energy"));
    assert!(csv.lines().count() > 2);
    assert!(dir.path().join("out/final.ymf").exists());
    assert!(dir.path().join("out/snapshots").read_dir().unwrap().count() >= 1);
    let a = Snapshot::load(&dir.path().join("out/final.ymf")).unwrap().into_connection().unwrap();
    assert_eq!(ymflow::flow::energy(&a), 0.0);
    assert_eq!(summary(dir.path())["pass"], true);
}

#[test]
fn gauge_fix_of_coulomb_data_needs_at_most_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let lat = Lattice::cubic(2, 8, 0.125).unwrap();
    let a = InitialData::AbelianMode {
        k: vec![0, 1],
        polarization: 0,
        amplitude: 0.01,
    }
    .generate(lat, Group::Su2)
    .unwrap();
    assert!(ymflow::gauge::dstar_residual(&a) <= 1e-14);
    Snapshot::Connection(a).save(&dir.path().join("a.ymf")).unwrap();
    let cfg = write_config(dir.path(), &format!("{BASE}\n[initial]\nkind = \"zero\"\n"));
    let out = ymflow(dir.path(), &["gauge-fix", "--config", &cfg, "--input", "a.ymf"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let iters: usize = stdout
        .split_whitespace()
        .find_map(|w| w.strip_prefix("iterations="))
        .and_then(|v| v.parse().ok())
        .unwrap();
    assert!(iters <= 1, "{stdout}");
    assert!(dir.path().join("out/gauge_fixed.ymf").exists());
    assert!(dir.path().join("out/gauge_fix.csv").exists());
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{BASE}\n[initial]\nkind = \"zero\"\nampltude = 1.0\n"));
    let out = ymflow(dir.path(), &["flow-run", "--config", &cfg, "--output", "out"]);
    assert_eq!(out.status.code(), Some(2));
    let s = summary(dir.path());
    assert_eq!(s["pass"], false);
    let err = s["error"].as_str().unwrap();
    assert!(err.contains("amplitude"), "{err}");
}

#[test]
fn unstable_step_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = BASE.replace("t_end = 0.01", "t_end = 0.01\ndt = 0.1") + "\n[initial]\nkind = \"zero\"\n";
    let cfg = write_config(dir.path(), &body);
    let out = ymflow(dir.path(), &["flow-run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(line["error"].as_str().unwrap().contains("h²/(2n)"));
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ymflow(dir.path(), &["flow-run", "--config", "nope.toml", "--output", "out"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_equivalence_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{BASE}\n[initial]\nkind = \"random_smooth\"\nseed = 1\nband = 1\namplitude = 0.3\n\n[experiment]\nlevels = 2\n"
    );
    let cfg = write_config(dir.path(), &body);
    let out = ymflow(dir.path(), &["verify-equivalence", "--config", &cfg, "--serial"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/equivalence_report.json")).unwrap()).unwrap();
    assert_eq!(rep["levels"].as_array().unwrap().len(), 2);
}
