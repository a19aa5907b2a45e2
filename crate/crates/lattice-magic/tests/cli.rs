use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lattice-magic"));
    c.env_remove("LATTICE_MAGIC_CONFIG_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn param(fit: &Value, name: &str) -> f64 {
    fit["parameters"].as_array().unwrap().iter().find(|p| p["name"] == name).unwrap()["value"].as_f64().unwrap()
}

#[test]
fn magic_field_json() {
    let v = json(&run(&["--json", "magic-field", "--circ-degree", "1"]));
    let rows = v["results"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let clock = rows.iter().find(|r| r["result"]["coherence"] == "clock" && r["result"]["method"] == "numeric").unwrap();
    assert!((clock["result"]["b0"].as_f64().unwrap() - 3.414908).abs() < 1e-5);
    assert!(v["diagnostics"]["vector_ratio"].as_f64().is_some());
}

#[test]
fn polarizability_and_spectrum_json() {
    let p = json(&run(&["--json", "polarizability"]));
    assert!(p.is_object());
    let s = json(&run(&["--json", "spectrum", "--B", "0:2:3", "--depth", "0"]));
    assert_eq!(s["rows"].as_array().unwrap().len(), 3);
    assert_eq!(s["columns"].as_array().unwrap().len(), 8);
}

#[test]
fn simulated_decay_fits_back() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("decay.csv");
    let out = run(&[
        "--seed",
        "7",
        "simulate",
        "--mode",
        "decay",
        "--gradient",
        "0.02",
        "--times",
        "0:0.5:26",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = json(&run(&["fit", "--model", "exp", "--in", csv.to_str().unwrap()]));
    let tau = param(&fit["fit"], "tau");
    assert!(tau > 0.0 && tau < 0.5, "{tau}");
    assert!(fit["fit"]["r_squared"].as_f64().unwrap() > 0.8);

    // wrong model for the curve
    let bad = run(&["fit", "--model", "gaussian", "--in", csv.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn simulated_scan_fits_back() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("scan.csv");
    let out = run(&["simulate", "--mode", "scan", "--storage-time", "0.3", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let fit = json(&run(&["fit", "--model", "gaussian", "--in", csv.to_str().unwrap()]));
    let b0 = param(&fit["fit"], "B0");
    assert!((b0 - 3.446).abs() < 0.1, "{b0}");
}

#[test]
fn simulate_is_seed_deterministic() {
    let a = run(&["--seed", "3", "simulate", "--times", "0:0.4:5"]);
    let b = run(&["--seed", "3", "simulate", "--times", "0:0.4:5"]);
    let c = run(&["--seed", "4", "simulate", "--times", "0:0.4:5"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

fn write_configs(dir: &Path, circ: f64) {
    use lattice_magic::atomic_data::reference;
    std::fs::write(dir.join("species.cfg"), reference::SPECIES_CFG).unwrap();
    std::fs::write(dir.join("sample.cfg"), reference::SAMPLE_CFG).unwrap();
    let lattice = reference::LATTICE_CFG.replace("circ_degree_A = 0.991", &format!("circ_degree_A = {circ}"));
    std::fs::write(dir.join("lattice.cfg"), lattice).unwrap();
}

#[test]
fn config_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    write_configs(dir.path(), 0.5);
    let v = json(
        &bin()
            .env("LATTICE_MAGIC_CONFIG_DIR", dir.path())
            .args(["--json", "magic-field", "--method", "numeric"])
            .output()
            .unwrap(),
    );
    assert_eq!(v["circ_degree"].as_f64(), Some(0.5));
    // an explicit file wins over the directory
    let other = tempfile::tempdir().unwrap();
    write_configs(other.path(), 0.8);
    let lat = other.path().join("lattice.cfg");
    let v = json(
        &bin()
            .env("LATTICE_MAGIC_CONFIG_DIR", dir.path())
            .args(["--json", "--lattice", lat.to_str().unwrap(), "magic-field", "--method", "numeric"])
            .output()
            .unwrap(),
    );
    assert_eq!(v["circ_degree"].as_f64(), Some(0.8));
}

#[test]
fn bad_config_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    write_configs(dir.path(), 0.991);
    std::fs::write(dir.path().join("sample.cfg"), "temperature_uk = 10.0\nmystery = 1\n").unwrap();
    let out = run(&["--config-dir", dir.path().to_str().unwrap(), "polarizability"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = run(&["--lattice", "/nonexistent/lattice.cfg", "polarizability"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_writes_files_and_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run_in = |d: &Path| run(&["report", "--out-dir", d.to_str().unwrap()]);
    let out = run_in(a.path());
    // Several reference bands are not reproduced by the model; see the README.
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed bands"));
    for f in ["fig1.csv", "fig2.csv", "fig3.csv", "fig4.csv", "fig5.csv", "report.json"] {
        assert!(a.path().join(f).is_file(), "{f}");
    }
    run_in(b.path());
    let read = |d: &Path| std::fs::read(d.join("report.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let v: Value = serde_json::from_slice(&read(a.path())).unwrap();
    assert_eq!(v["provenance"]["seed"].as_u64(), Some(42));
}
