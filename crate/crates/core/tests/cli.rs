//! Integration tests for config loading, artifacts, the solution cache,
//! and the binary's exit-code contract.

use std::fs;
use std::path::Path;
use std::process::Command;

use maglev::cli_app::{
    apply_param, cache_key, load_config, load_field_solution, run_feasibility, run_solve,
    save_field_solution, sha256_hex, CliError,
};
use maglev::geometry::{GridSpec, Refinement};
use maglev::magnetostatics::{solve, SolverControls};
use maglev::scenario::Scenario;

fn small_scenario(a: f64) -> Scenario {
    let mut scn = Scenario::design_point(a);
    scn.grid = GridSpec {
        half_extent: scn.grid.half_extent,
        cells: [48; 3],
        refinement: Some(Refinement {
            region_half_extent: [2.0 * a; 3],
            factor: 8.0,
        }),
    };
    scn
}

fn write_config(dir: &Path, scn: &Scenario) -> std::path::PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, toml::to_string(scn).unwrap()).unwrap();
    path
}

#[test]
fn config_round_trip_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let scn = small_scenario(0.25e-3);
    let path = write_config(dir.path(), &scn);
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg.scenario, scn);
    assert_eq!(cfg.config_hash, sha256_hex(cfg.raw.as_bytes()));
    assert_eq!(cfg.config_hash.len(), 64);
}

#[test]
fn unknown_field_rejected_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.toml");
    let scn = small_scenario(0.25e-3);
    let raw = format!("unknown_knob = 1.0\n{}", toml::to_string(&scn).unwrap());
    fs::write(&path, raw).unwrap();
    let err = load_config(&path).unwrap_err();
    assert!(matches!(err, CliError::ConfigParse { .. }));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn cross_field_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut scn = small_scenario(0.25e-3);
    scn.geometry.a = 2.0 * scn.geometry.r; // sphere cannot fit the hole
    let path = write_config(dir.path(), &scn);
    let err = load_config(&path).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("does not fit"));
}

#[test]
fn feasibility_design_point_is_meissner_and_ok() {
    let dir = tempfile::tempdir().unwrap();
    let scn = small_scenario(0.25e-3);
    let path = write_config(dir.path(), &scn);
    let cfg = load_config(&path).unwrap();
    let out = dir.path().join("out");
    fs::create_dir_all(&out).unwrap();
    let report = run_feasibility(&cfg, &out, false).unwrap();
    assert!(report.all_ok, "checks: {:?}", report.checks);
    assert_eq!(report.regime, "Meissner");
    assert!(out.join("feasibility.json").exists());
    assert!(out.join("manifest.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], cfg.config_hash.as_str());
}

#[test]
fn apply_param_substitutes_and_validates() {
    let scn = small_scenario(0.25e-3);
    let raw = toml::to_string(&scn).unwrap();
    let swept = apply_param(&raw, "b_max_target", 0.05).unwrap();
    assert_eq!(swept.b_max_target, 0.05);
    assert_eq!(swept.geometry, scn.geometry);
    let swept = apply_param(&raw, "geometry.h", 1.2e-3).unwrap();
    assert_eq!(swept.geometry.h, 1.2e-3);
    let err = apply_param(&raw, "geometry.nonexistent", 1.0).unwrap_err();
    assert!(matches!(err, CliError::BadParamPath(_)));
    assert_eq!(err.exit_code(), 2);
}

/// The binary cache layout round-trips every field of a solution exactly.
#[test]
fn field_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a = 0.25e-3;
    let scn = small_scenario(a);
    let grid = GridSpec {
        half_extent: [8.0 * a; 3],
        cells: [32; 3],
        refinement: None,
    };
    let controls = SolverControls {
        include_superconductor: false,
        ..SolverControls::default()
    };
    let mut geom = scn.geometry.clone();
    geom.r = 4.0 * a;
    let sol = solve(&geom, &scn.ferromagnet, Some([0.0; 3]), 0.02, &controls, &grid).unwrap();
    let path = dir.path().join("sol.fld");
    save_field_solution(&path, &sol).unwrap();
    let back = load_field_solution(&path).unwrap();
    assert_eq!(back.grid.edges, sol.grid.edges);
    assert_eq!(back.potential, sol.potential);
    assert_eq!(back.b_cell, sol.b_cell);
    assert_eq!(back.face_b, sol.face_b);
    assert_eq!(back.mask, sol.mask);
    assert_eq!(back.mu, sol.mu);
    assert_eq!(back.residual, sol.residual);
    assert_eq!(back.iterations, sol.iterations);
    assert_eq!(back.b_ext, sol.b_ext);
    assert_eq!(back.saturated, sol.saturated);
}

#[test]
fn cache_key_distinguishes_inputs() {
    let scn = small_scenario(0.25e-3);
    let k0 = cache_key(&scn, None, 0.02);
    assert_eq!(k0, cache_key(&scn, None, 0.02));
    assert_ne!(k0, cache_key(&scn, None, 0.021));
    assert_ne!(k0, cache_key(&scn, Some([0.0; 3]), 0.02));
    let mut other = scn.clone();
    other.geometry.h *= 1.01;
    assert_ne!(k0, cache_key(&other, None, 0.02));
}

/// Identical config must give byte-identical CSV artifacts.
#[test]
fn solve_artifacts_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let scn = small_scenario(0.25e-3);
    let path = write_config(dir.path(), &scn);
    let cfg = load_config(&path).unwrap();
    let (out1, out2) = (dir.path().join("run1"), dir.path().join("run2"));
    fs::create_dir_all(&out1).unwrap();
    fs::create_dir_all(&out2).unwrap();
    run_solve(&cfg, &out1).unwrap();
    run_solve(&cfg, &out2).unwrap();
    for name in ["field_axis.csv", "solve.json", "manifest.json"] {
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let csv = fs::read_to_string(out1.join("field_axis.csv")).unwrap();
    assert!(csv.starts_with("# schema: field_axis v1\n"));
    assert!(csv.lines().nth(1).unwrap().contains(&cfg.config_hash));
}

/// Exit-code contract of the installed binary: 2 for invalid config, 3 for
/// solver non-convergence, with machine-readable JSON on stderr.
#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_maglev");
    let dir = tempfile::tempdir().unwrap();

    // missing config
    let out = Command::new(exe)
        .args(["solve", "--config"])
        .arg(dir.path().join("missing.toml"))
        .arg("--out")
        .arg(dir.path().join("o1"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config_read");

    // syntactically broken config
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "ferromagnet = \"not a table\"\n").unwrap();
    let out = Command::new(exe)
        .args(["feasibility", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("o2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // iteration-starved solver must exit 3
    let mut scn = small_scenario(0.25e-3);
    scn.solver.max_iterations = 2;
    let starved = write_config(dir.path(), &scn);
    let out = Command::new(exe)
        .args(["solve", "--config"])
        .arg(&starved)
        .arg("--out")
        .arg(dir.path().join("o3"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["exit_code"], 3);
}
