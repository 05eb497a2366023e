//! Command pipelines behind the `maglev` binary: scenario loading, artifact
//! emission (versioned CSV + JSON with a run manifest), the field-solution
//! cache, sweep orchestration, and the grid-convergence study.
//!
//! Artifact conventions:
//! - every CSV starts with two comment lines: `# schema: <name> v1` and
//!   `# config: <sha256 of the config file>`; column order is fixed;
//! - floats are printed as `{:.12e}` so identical inputs give byte-identical
//!   files;
//! - every JSON artifact carries a `config_hash` field;
//! - each command also writes `manifest.json` (command, config hash, code
//!   version, grid, solver controls, thread count, solve residuals).
//!
//! Field-solution cache: binary files under the directory named by the
//! `MAGLEV_CACHE_DIR` environment variable, keyed by a SHA-256 over the
//! solve inputs (geometry, ferromagnet, sphere center, applied field, grid
//! spec, solver controls). Layout, all little-endian:
//!
//! ```text
//! magic   4 bytes  b"MGFS"
//! version u16      1
//! dims    3 × u32  cells per axis (nx, ny, nz)
//! edges   3 arrays of (n+1) f64     cell edge coordinates per axis
//! phi     nx·ny·nz f64              scalar potential
//! b_cell  nx·ny·nz × 3 f64          cell-center flux density
//! face_b  3 arrays of f64           face-normal flux density, axis ax has
//!                                   (n_ax+1)·(prod of other dims) entries
//! mask    nx·ny·nz u8               region tags (0 air, 1 SC, 2 FM)
//! mu      nx·ny·nz f64              cell permeabilities
//! tail    f64 residual, u64 iterations, f64 b_ext, u8 saturated
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dissipation::{
    self, q_eddy_conductor, q_eddy_mixed_state, q_gas_squeezed, q_gas_vacuum,
};
use crate::geometry::{self, Severity};
use crate::magnetostatics::{
    axial_gradient_stats, sample_b, solve, FieldSolution, Grid, Region, SolveError,
};
use crate::materials::{classify_regime, vortex_lattice, RegimeKind};
use crate::noise::{assemble_noise_budget, NoiseError};
use crate::scenario::Scenario;
use crate::trap_analysis::{
    calibrate_b_ext, characterize, scan_potential, Axis, TrapError,
};

/// Environment variable naming the field-solution cache directory.
pub const CACHE_DIR_ENV: &str = "MAGLEV_CACHE_DIR";
/// CSV schema version stamped on every artifact.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("parameter path `{0}` does not resolve to a config field")]
    BadParamPath(String),
    #[error("{0}")]
    BadArguments(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Trap(#[from] TrapError),
    #[error(transparent)]
    Dissipation(#[from] dissipation::DissipationError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Material(#[from] crate::materials::MaterialError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt cache file {path}: {reason}")]
    BadCache { path: PathBuf, reason: String },
}

impl CliError {
    /// Process exit status: 2 for config problems, 3 for solver
    /// non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        fn solve_code(e: &SolveError) -> i32 {
            match e {
                SolveError::NonConvergence { .. } => 3,
                SolveError::InvalidGeometry(_)
                | SolveError::Grid(_)
                | SolveError::BadControls(_) => 2,
                _ => 1,
            }
        }
        match self {
            CliError::ConfigRead { .. }
            | CliError::ConfigParse { .. }
            | CliError::InvalidScenario(_)
            | CliError::BadParamPath(_)
            | CliError::BadArguments(_) => 2,
            CliError::Solve(e) => solve_code(e),
            CliError::Trap(TrapError::SolveAtOffset { source, .. }) => solve_code(source),
            _ => 1,
        }
    }

    /// Machine-readable error record (printed to stderr on failure).
    pub fn to_json(&self) -> String {
        let kind = match self {
            CliError::ConfigRead { .. } => "config_read",
            CliError::ConfigParse { .. } => "config_parse",
            CliError::InvalidScenario(_) => "invalid_scenario",
            CliError::BadParamPath(_) => "bad_param_path",
            CliError::BadArguments(_) => "bad_arguments",
            CliError::Solve(_) => "solve",
            CliError::Trap(_) => "trap_analysis",
            CliError::Dissipation(_) => "dissipation",
            CliError::Noise(_) => "noise",
            CliError::Material(_) => "material",
            CliError::Io { .. } => "io",
            CliError::BadCache { .. } => "cache",
        };
        serde_json::json!({
            "error": {
                "kind": kind,
                "message": self.to_string(),
                "exit_code": self.exit_code(),
            }
        })
        .to_string()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A loaded scenario plus the hash that names it in artifacts.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub scenario: Scenario,
    /// SHA-256 (hex) of the raw config file bytes
    pub config_hash: String,
    /// Raw TOML, kept for sweep parameter substitution
    pub raw: String,
}

/// Read and validate a TOML scenario file.
pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let raw = fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
        path: path.to_path_buf(),
        source,
    })?;
    let scenario: Scenario = toml::from_str(&raw).map_err(|e| CliError::ConfigParse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    validate_scenario(&scenario)?;
    Ok(LoadedConfig {
        scenario,
        config_hash: sha256_hex(raw.as_bytes()),
        raw,
    })
}

/// Cross-field checks the type system cannot express.
pub fn validate_scenario(scn: &Scenario) -> Result<(), CliError> {
    let g = &scn.geometry;
    if !(g.a > 0.0 && g.r > 0.0 && g.h > 0.0) {
        return Err(CliError::InvalidScenario(
            "geometry.a, geometry.r, geometry.h must be positive".into(),
        ));
    }
    if g.a >= g.r {
        return Err(CliError::InvalidScenario(format!(
            "sphere does not fit the hole: a = {} >= r = {}",
            g.a, g.r
        )));
    }
    if scn.b_max_target <= 0.0 {
        return Err(CliError::InvalidScenario(
            "b_max_target must be positive".into(),
        ));
    }
    if scn.temperature <= 0.0 || scn.pressure <= 0.0 {
        return Err(CliError::InvalidScenario(
            "temperature and pressure must be positive".into(),
        ));
    }
    if scn.noise_levels.iter().any(|&l| l <= 0.0) {
        return Err(CliError::InvalidScenario(
            "noise_levels must be positive".into(),
        ));
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

/// Run manifest written next to every command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub csv_schema_version: u32,
    pub grid_cells: [usize; 3],
    pub grid_half_extent: [f64; 3],
    pub refinement_factor: Option<f64>,
    pub solver_tolerance: f64,
    pub threads: usize,
    /// Relative residuals of the labeled field solves performed by the run
    pub residuals: BTreeMap<String, f64>,
}

impl RunManifest {
    fn new(command: &str, cfg: &LoadedConfig, threads: usize) -> Self {
        let scn = &cfg.scenario;
        Self {
            command: command.to_string(),
            config_hash: cfg.config_hash.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            csv_schema_version: CSV_SCHEMA_VERSION,
            grid_cells: scn.grid.cells,
            grid_half_extent: scn.grid.half_extent,
            refinement_factor: scn.grid.refinement.as_ref().map(|r| r.factor),
            solver_tolerance: scn.solver.tolerance,
            threads,
            residuals: BTreeMap::new(),
        }
    }

    fn write(&self, out: &Path) -> Result<(), CliError> {
        write_json(&out.join("manifest.json"), self)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable artifact");
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

/// Write a versioned CSV: schema + config-hash comment lines, a header row,
/// then rows of pre-formatted cells.
fn write_csv(
    path: &Path,
    schema: &str,
    config_hash: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    (|| -> std::io::Result<()> {
        writeln!(w, "# schema: {schema} v{CSV_SCHEMA_VERSION}")?;
        writeln!(w, "# config: {config_hash}")?;
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    })()
    .map_err(io_err(path))
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

// ---------------------------------------------------------------------------
// Field-solution cache
// ---------------------------------------------------------------------------

/// Cache directory from the environment, if configured.
pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from)
}

/// Cache key for one solve: SHA-256 over the canonical JSON of the inputs.
pub fn cache_key(
    scn: &Scenario,
    sphere_center: Option<[f64; 3]>,
    b_ext: f64,
) -> String {
    let key = serde_json::json!({
        "geometry": scn.geometry,
        "ferromagnet": scn.ferromagnet,
        "center": sphere_center,
        "b_ext_bits": b_ext.to_bits(),
        "grid": scn.grid,
        "solver": scn.solver,
    });
    sha256_hex(key.to_string().as_bytes())
}

const CACHE_MAGIC: &[u8; 4] = b"MGFS";
const CACHE_VERSION: u16 = 1;

/// Serialize a solution into the documented binary layout.
pub fn save_field_solution(path: &Path, sol: &FieldSolution) -> Result<(), CliError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    (|| -> std::io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_u16::<LittleEndian>(CACHE_VERSION)?;
        let dims = sol.grid.dims();
        for d in dims {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for ax in 0..3 {
            for &e in &sol.grid.edges[ax] {
                w.write_f64::<LittleEndian>(e)?;
            }
        }
        for &p in &sol.potential {
            w.write_f64::<LittleEndian>(p)?;
        }
        for b in &sol.b_cell {
            for &c in b {
                w.write_f64::<LittleEndian>(c)?;
            }
        }
        for ax in 0..3 {
            for &v in &sol.face_b[ax] {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        for &m in &sol.mask {
            w.write_u8(m as u8)?;
        }
        for &m in &sol.mu {
            w.write_f64::<LittleEndian>(m)?;
        }
        w.write_f64::<LittleEndian>(sol.residual)?;
        w.write_u64::<LittleEndian>(sol.iterations as u64)?;
        w.write_f64::<LittleEndian>(sol.b_ext)?;
        w.write_u8(sol.saturated as u8)?;
        w.flush()
    })()
    .map_err(io_err(path))
}

/// Load a solution previously written by [`save_field_solution`].
pub fn load_field_solution(path: &Path) -> Result<FieldSolution, CliError> {
    let bad = |reason: &str| CliError::BadCache {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let f = File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err(path))?;
    if &magic != CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    (|| -> std::io::Result<FieldSolution> {
        let version = r.read_u16::<LittleEndian>()?;
        if version != CACHE_VERSION {
            return Err(std::io::Error::other(format!(
                "unsupported cache version {version}"
            )));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = r.read_u32::<LittleEndian>()? as usize;
        }
        let n = dims[0] * dims[1] * dims[2];
        let mut edges: [Vec<f64>; 3] = Default::default();
        for ax in 0..3 {
            edges[ax] = (0..dims[ax] + 1)
                .map(|_| r.read_f64::<LittleEndian>())
                .collect::<std::io::Result<_>>()?;
        }
        let centers = [0, 1, 2].map(|ax: usize| {
            edges[ax]
                .windows(2)
                .map(|w| 0.5 * (w[0] + w[1]))
                .collect::<Vec<f64>>()
        });
        let potential: Vec<f64> = (0..n)
            .map(|_| r.read_f64::<LittleEndian>())
            .collect::<std::io::Result<_>>()?;
        let mut b_cell = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0.0; 3];
            for c in &mut b {
                *c = r.read_f64::<LittleEndian>()?;
            }
            b_cell.push(b);
        }
        let mut face_b: [Vec<f64>; 3] = Default::default();
        for ax in 0..3 {
            let len = (dims[ax] + 1) * dims[(ax + 1) % 3] * dims[(ax + 2) % 3];
            face_b[ax] = (0..len)
                .map(|_| r.read_f64::<LittleEndian>())
                .collect::<std::io::Result<_>>()?;
        }
        let mut mask = Vec::with_capacity(n);
        for _ in 0..n {
            mask.push(match r.read_u8()? {
                0 => Region::Air,
                1 => Region::Superconductor,
                2 => Region::Ferromagnet,
                other => {
                    return Err(std::io::Error::other(format!("bad region tag {other}")))
                }
            });
        }
        let mu: Vec<f64> = (0..n)
            .map(|_| r.read_f64::<LittleEndian>())
            .collect::<std::io::Result<_>>()?;
        let residual = r.read_f64::<LittleEndian>()?;
        let iterations = r.read_u64::<LittleEndian>()? as usize;
        let b_ext = r.read_f64::<LittleEndian>()?;
        let saturated = r.read_u8()? != 0;
        Ok(FieldSolution {
            grid: Grid { edges, centers },
            potential,
            b_cell,
            face_b,
            mask,
            mu,
            residual,
            iterations,
            b_ext,
            saturated,
        })
    })()
    .map_err(|e| bad(&e.to_string()))
}

/// Solve, going through the cache when `MAGLEV_CACHE_DIR` is set.
pub fn cached_solve(
    scn: &Scenario,
    sphere_center: Option<[f64; 3]>,
    b_ext: f64,
) -> Result<FieldSolution, CliError> {
    let dir = match cache_dir() {
        Some(d) => d,
        None => {
            return Ok(solve(
                &scn.geometry,
                &scn.ferromagnet,
                sphere_center,
                b_ext,
                &scn.solver,
                &scn.grid,
            )?)
        }
    };
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let path = dir.join(format!("{}.fld", cache_key(scn, sphere_center, b_ext)));
    if path.exists() {
        if let Ok(sol) = load_field_solution(&path) {
            return Ok(sol);
        }
        // unreadable entry: fall through and rewrite it
    }
    let sol = solve(
        &scn.geometry,
        &scn.ferromagnet,
        sphere_center,
        b_ext,
        &scn.solver,
        &scn.grid,
    )?;
    save_field_solution(&path, &sol)?;
    Ok(sol)
}

// ---------------------------------------------------------------------------
// Command pipelines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityCheck {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub config_hash: String,
    pub checks: Vec<FeasibilityCheck>,
    pub regime: String,
    pub regime_usable: bool,
    pub effective_hole_radius: f64,
    pub all_ok: bool,
}

/// `feasibility`: static checks, no field solve.
pub fn run_feasibility(
    cfg: &LoadedConfig,
    out: &Path,
    force: bool,
) -> Result<FeasibilityReport, CliError> {
    let scn = &cfg.scenario;
    let mut checks = Vec::new();
    for entry in geometry::validate(&scn.geometry) {
        // warnings (outside the design band) inform but do not refuse the run
        checks.push(FeasibilityCheck {
            name: "geometry".into(),
            ok: entry.severity != Severity::Violation,
            detail: match entry.severity {
                Severity::Warning => format!("warning: {}", entry.message),
                Severity::Violation => entry.message,
            },
        });
    }
    checks.push(FeasibilityCheck {
        name: "sphere_fits_hole".into(),
        ok: scn.geometry.a < scn.geometry.r,
        detail: format!("a/r = {:.3}", scn.geometry.a / scn.geometry.r),
    });
    let regime = classify_regime(&scn.superconductor, scn.b_max_target, scn.temperature);
    checks.push(FeasibilityCheck {
        name: "operating_regime".into(),
        ok: regime.usable,
        detail: format!("{:?} at {} T, {} K", regime.kind, scn.b_max_target, scn.temperature),
    });
    let eff = geometry::effective_radius(&scn.geometry, &scn.superconductor);
    checks.push(FeasibilityCheck {
        name: "effective_hole_radius".into(),
        ok: !eff.trap_likely_lost,
        detail: format!("r_eff/a = {:.3}", eff.r_eff / scn.geometry.a),
    });
    let all_ok = checks.iter().all(|c| c.ok);
    let report = FeasibilityReport {
        config_hash: cfg.config_hash.clone(),
        checks,
        regime: format!("{:?}", regime.kind),
        regime_usable: regime.usable,
        effective_hole_radius: eff.r_eff,
        all_ok,
    };
    write_json(&out.join("feasibility.json"), &report)?;
    RunManifest::new("feasibility", cfg, 1).write(out)?;
    if !all_ok && !force {
        return Err(CliError::InvalidScenario(
            "feasibility checks failed (rerun with --force to proceed)".into(),
        ));
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub config_hash: String,
    pub b_ext: f64,
    pub b_max: f64,
    pub mean_abs_gradient: f64,
    pub uniformity_ratio: f64,
    pub sc_max_normal_b: f64,
    pub residual: f64,
    pub iterations: usize,
    pub cached: bool,
}

/// `solve`: calibrated bare-disk solve; axial profile CSV + summary JSON.
pub fn run_solve(cfg: &LoadedConfig, out: &Path) -> Result<SolveReport, CliError> {
    let scn = &cfg.scenario;
    let (b_ext, _) = calibrate_b_ext(scn)?;
    let used_cache = cache_dir().is_some();
    let sol = cached_solve(scn, None, b_ext)?;
    let stats = axial_gradient_stats(&sol, scn.geometry.a)?;

    let half = scn.geometry.h;
    let npts = 81usize;
    let points: Vec<[f64; 3]> = (0..npts)
        .map(|i| {
            let z = -half + 2.0 * half * i as f64 / (npts - 1) as f64;
            [0.0, 0.0, z]
        })
        .collect();
    let fields = sample_b(&sol, &points)?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .zip(&fields)
        .map(|(p, b)| {
            let mag = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            vec![fmt(p[2]), fmt(b[2]), fmt(mag)]
        })
        .collect();
    write_csv(
        &out.join("field_axis.csv"),
        "field_axis",
        &cfg.config_hash,
        &["z_m", "bz_T", "bmag_T"],
        &rows,
    )?;

    let report = SolveReport {
        config_hash: cfg.config_hash.clone(),
        b_ext,
        b_max: stats.b_max,
        mean_abs_gradient: stats.mean_abs_gradient,
        uniformity_ratio: stats.uniformity_ratio,
        sc_max_normal_b: sol.max_normal_b_on_superconductor(),
        residual: sol.residual,
        iterations: sol.iterations,
        cached: used_cache,
    };
    write_json(&out.join("solve.json"), &report)?;
    let mut manifest = RunManifest::new("solve", cfg, 1);
    manifest.residuals.insert("bare".into(), sol.residual);
    manifest.write(out)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanReport {
    pub config_hash: String,
    pub axis: Axis,
    pub convex: bool,
    /// Quadratic energy curvature coefficient c2 [J/m²]
    pub curvature: f64,
    pub equilibrium_z: f64,
}

/// `scan --axis <x|y|z>`: potential scan through the equilibrium.
pub fn run_scan(cfg: &LoadedConfig, out: &Path, axis: Axis) -> Result<ScanReport, CliError> {
    let scn = &cfg.scenario;
    let (b_ext, _) = calibrate_b_ext(scn)?;
    let z_eq = crate::trap_analysis::find_equilibrium_z(scn, b_ext)?;
    let window = if axis == Axis::Z { 0.2 } else { 0.15 };
    let offsets: Vec<f64> = (-3..=3).map(|i| window * i as f64 / 3.0).collect();
    let scan = scan_potential(scn, axis, &offsets, [0.0, 0.0, z_eq], b_ext)?;
    let xs: Vec<f64> = scan.offsets.iter().map(|o| o * scn.geometry.a).collect();
    let (_, c2, _) = crate::trap_analysis::fit_quadratic(&xs, &scan.energy);

    let rows: Vec<Vec<String>> = scan
        .offsets
        .iter()
        .zip(scan.energy.iter().zip(&scan.forces))
        .map(|(o, (u, f))| vec![fmt(*o), fmt(*u), fmt(*f)])
        .collect();
    write_csv(
        &out.join(format!("scan_{}.csv", axis.label())),
        "potential_scan",
        &cfg.config_hash,
        &["offset_a", "energy_J", "force_N"],
        &rows,
    )?;
    let report = ScanReport {
        config_hash: cfg.config_hash.clone(),
        axis,
        convex: c2 > 0.0,
        curvature: c2,
        equilibrium_z: z_eq,
    };
    write_json(&out.join("scan.json"), &report)?;
    RunManifest::new("scan", cfg, 1).write(out)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharacterizeReport {
    pub config_hash: String,
    #[serde(flatten)]
    pub trap: crate::trap_analysis::TrapCharacterization,
}

/// `characterize`: full harmonic characterization.
pub fn run_characterize(cfg: &LoadedConfig, out: &Path) -> Result<CharacterizeReport, CliError> {
    let trap = characterize(&cfg.scenario)?;
    let report = CharacterizeReport {
        config_hash: cfg.config_hash.clone(),
        trap,
    };
    write_json(&out.join("characterize.json"), &report)?;
    RunManifest::new("characterize", cfg, 1).write(out)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QBudgetReport {
    pub config_hash: String,
    pub f_z: f64,
    pub f_y: f64,
    pub entries: Vec<(String, f64)>,
    pub q_total: f64,
}

fn qbudget_pipeline(scn: &Scenario) -> Result<QBudgetReport, CliError> {
    let trap = characterize(scn)?;
    let (f_x, f_y, f_z) = (trap.f[0], trap.f[1], trap.f[2]);
    let _ = f_x;
    let mut entries = vec![
        (
            "gas_vacuum".to_string(),
            q_gas_vacuum(scn, scn.pressure, scn.temperature, f_z)?,
        ),
        (
            "gas_squeezed".to_string(),
            q_gas_squeezed(scn, scn.pressure, scn.temperature, f_y)?,
        ),
    ];
    let regime = classify_regime(&scn.superconductor, trap.b_max, scn.temperature);
    for body in &scn.conductors {
        let report = q_eddy_conductor(scn, body, f_z, 0.1 * scn.geometry.a, 128)?;
        entries.push((format!("eddy_{}", body.label), report.q));
    }
    if regime.kind == RegimeKind::VortexSolid {
        // pinned-vortex mixed state: the normal-core fraction scales the
        // superconductor's own eddy loss
        let lattice = vortex_lattice(&scn.superconductor, trap.b_max)?;
        let disk = crate::dissipation::ConductorBody {
            label: "superconductor_cores".into(),
            standoff: 0.5 * (scn.geometry.r - scn.geometry.a),
            thickness: scn.geometry.h,
            radius: scn.geometry.disk_outer_radius,
            bore_diameter: Some(2.0 * scn.geometry.r),
            sigma: scn.superconductor.sigma_n,
        };
        let normal = q_eddy_conductor(scn, &disk, f_z, 0.1 * scn.geometry.a, 128)?;
        entries.push((
            "vortex_cores".to_string(),
            q_eddy_mixed_state(normal.q, lattice.normal_fraction)?,
        ));
    }
    if let Some(floor) = scn.ferromagnet.magnon_q_floor {
        entries.push(("magnon_floor".to_string(), floor));
    }
    let budget = dissipation::combine(&entries)?;
    Ok(QBudgetReport {
        config_hash: String::new(),
        f_z,
        f_y,
        entries: budget.entries,
        q_total: budget.q_total,
    })
}

/// `qbudget`: dissipation budget at the scenario design point.
pub fn run_qbudget(cfg: &LoadedConfig, out: &Path) -> Result<QBudgetReport, CliError> {
    let mut report = qbudget_pipeline(&cfg.scenario)?;
    report.config_hash = cfg.config_hash.clone();
    let rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|(label, q)| vec![label.clone(), fmt(*q)])
        .collect();
    write_csv(
        &out.join("qbudget.csv"),
        "qbudget",
        &cfg.config_hash,
        &["mechanism", "q"],
        &rows,
    )?;
    write_json(&out.join("qbudget.json"), &report)?;
    RunManifest::new("qbudget", cfg, 1).write(out)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseReport {
    pub config_hash: String,
    pub q_total: f64,
    pub f_z: f64,
    pub feasible: bool,
    pub bandwidth_hz: f64,
    pub entries: Vec<crate::noise::NoiseEntry>,
}

/// Sphere-radius multipliers for the size axis of the noise budget CSV.
pub const NOISE_SIZE_MULTIPLIERS: [f64; 8] = [0.1, 0.2, 0.3, 0.38, 0.5, 1.0, 2.0, 4.0];

/// `noise`: thermal vs technical force-noise budget.
///
/// The CSV carries one row per (sphere size, source). The magnetostatic
/// problem at fixed B_max is scale-invariant, so the trap frequency at other
/// sizes follows from the characterized one as f_z·(a_scn/a); the gas-limited
/// Q values are likewise size-independent at fixed B_max and pressure, so
/// q_total from the scenario's own budget is reused across sizes.
pub fn run_noise(cfg: &LoadedConfig, out: &Path) -> Result<NoiseReport, CliError> {
    let scn = &cfg.scenario;
    let q = qbudget_pipeline(scn)?;
    let budget = assemble_noise_budget(scn, q.q_total, q.f_z)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for mult in NOISE_SIZE_MULTIPLIERS {
        let mut sized = scn.clone();
        sized.geometry.a = mult * scn.geometry.a;
        let f_sized = q.f_z / mult;
        let sized_budget = assemble_noise_budget(&sized, q.q_total, f_sized)?;
        let thermal = sized_budget
            .entries
            .iter()
            .find(|e| !e.technical)
            .map(|e| e.density)
            .unwrap_or(0.0);
        for e in &sized_budget.entries {
            rows.push(vec![
                fmt(2.0 * sized.geometry.a),
                e.source.clone(),
                fmt(e.density),
                ((!e.technical || e.density <= thermal) as u8).to_string(),
            ]);
        }
    }
    write_csv(
        &out.join("noise.csv"),
        "noise_budget",
        &cfg.config_hash,
        &["size_m", "source", "force_density_N_per_sqrtHz", "feasible"],
        &rows,
    )?;
    let report = NoiseReport {
        config_hash: cfg.config_hash.clone(),
        q_total: q.q_total,
        f_z: q.f_z,
        feasible: budget.feasible,
        bandwidth_hz: budget.bandwidth_hz,
        entries: budget.entries,
    };
    write_json(&out.join("noise.json"), &report)?;
    RunManifest::new("noise", cfg, 1).write(out)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

/// One parameter sweep over the qbudget pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub param: String,
    pub values: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub f_z: f64,
    pub q_gas_vacuum: f64,
    pub q_gas_squeezed: f64,
    pub q_total: f64,
}

/// Substitute a dotted parameter path (e.g. `geometry.a`) into the raw TOML
/// and re-deserialize. Dependent geometry fields are not rescaled; sweeping
/// `geometry.a` on a config built by `Scenario::design_point` therefore
/// changes only the sphere.
pub fn apply_param(raw: &str, param: &str, value: f64) -> Result<Scenario, CliError> {
    let mut doc: toml::Value = toml::from_str(raw).map_err(|e| CliError::ConfigParse {
        path: PathBuf::from("<sweep>"),
        message: e.to_string(),
    })?;
    let parts: Vec<&str> = param.split('.').collect();
    let (&leaf, branches) = parts.split_last().expect("split on non-empty string");
    let mut node = &mut doc;
    for part in branches {
        node = node
            .as_table_mut()
            .and_then(|t| t.get_mut(*part))
            .ok_or_else(|| CliError::BadParamPath(param.to_string()))?;
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| CliError::BadParamPath(param.to_string()))?;
    match table.get_mut(leaf) {
        Some(slot) => *slot = toml::Value::Float(value),
        None => return Err(CliError::BadParamPath(param.to_string())),
    }
    let scn: Scenario = doc.try_into().map_err(|e: toml::de::Error| CliError::ConfigParse {
        path: PathBuf::from("<sweep>"),
        message: e.to_string(),
    })?;
    validate_scenario(&scn)?;
    Ok(scn)
}

/// Scale a full scenario to sphere radius `value` when sweeping `geometry.a`
/// would otherwise break the sphere-fits-hole invariant: not done here —
/// sweeps substitute exactly the named field.
///
/// `sweep --param <path> --values v1,v2,...`: run the qbudget pipeline per
/// point, up to `threads` points concurrently. Output row order follows the
/// input value order regardless of completion order.
pub fn run_sweep(
    cfg: &LoadedConfig,
    out: &Path,
    param: &str,
    values: &[f64],
    threads: usize,
) -> Result<SweepReport, CliError> {
    if values.is_empty() {
        return Err(CliError::BadArguments("sweep needs at least one value".into()));
    }
    let threads = threads.max(1);
    let scenarios: Vec<Scenario> = values
        .iter()
        .map(|&v| apply_param(&cfg.raw, param, v))
        .collect::<Result<_, _>>()?;

    let mut results: Vec<Option<Result<QBudgetReport, CliError>>> =
        (0..values.len()).map(|_| None).collect();
    // fixed-size chunks keep the schedule deterministic at a given degree
    for chunk in scenarios.chunks(threads).zip_longest_indices() {
        let (start, scns) = chunk;
        std::thread::scope(|scope| {
            let handles: Vec<_> = scns
                .iter()
                .map(|scn| scope.spawn(move || qbudget_pipeline(scn)))
                .collect();
            for (i, h) in handles.into_iter().enumerate() {
                results[start + i] = Some(h.join().expect("sweep worker panicked"));
            }
        });
    }

    let mut rows = Vec::with_capacity(values.len());
    for (value, res) in values.iter().zip(results) {
        let q = res.expect("all points scheduled")?;
        let find = |label: &str| {
            q.entries
                .iter()
                .find(|(l, _)| l == label)
                .map(|(_, v)| *v)
                .unwrap_or(f64::INFINITY)
        };
        rows.push(SweepRow {
            value: *value,
            f_z: q.f_z,
            q_gas_vacuum: find("gas_vacuum"),
            q_gas_squeezed: find("gas_squeezed"),
            q_total: q.q_total,
        });
    }

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt(r.value),
                fmt(r.f_z),
                fmt(r.q_gas_vacuum),
                fmt(r.q_gas_squeezed),
                fmt(r.q_total),
            ]
        })
        .collect();
    write_csv(
        &out.join("sweep.csv"),
        "sweep_qbudget",
        &cfg.config_hash,
        &[param, "f_z_Hz", "q_gas_vacuum", "q_gas_squeezed", "q_total"],
        &csv_rows,
    )?;
    let report = SweepReport {
        config_hash: cfg.config_hash.clone(),
        param: param.to_string(),
        values: values.to_vec(),
        rows,
    };
    write_json(&out.join("sweep.json"), &report)?;
    RunManifest::new("sweep", cfg, threads).write(out)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Convergence study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRung {
    pub cells: usize,
    pub f_z: f64,
    pub b_max: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config_hash: String,
    pub rungs: Vec<ConvergenceRung>,
    /// Observed order from the last three rungs (f_z differences), if the
    /// ladder has three or more rungs and the differences are usable
    pub observed_order: Option<f64>,
    /// |f_z(finest) − f_z(next)| / f_z(finest)
    pub finest_pair_rel_diff: f64,
    /// Set when the finest pair disagrees by more than 1%
    pub under_resolved: bool,
}

/// Grid-convergence study: re-run a reduced characterization (equilibrium
/// force stencil) on each rung of a cell-count ladder.
///
/// f_z per rung comes from the same seven-point potential-scan quadratic
/// fit used by [`characterize`](crate::trap_analysis::characterize); a bare
/// two-point force stencil turned out far too sensitive to how the
/// quadrature shells land on each grid, producing rung-to-rung scatter that
/// has nothing to do with field convergence. The equilibrium is located on
/// the coarsest rung and reused so every rung fits the same window.
pub fn convergence_study(
    scn: &Scenario,
    ladder: &[usize],
) -> Result<ConvergenceReport, CliError> {
    if ladder.len() < 3 || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::BadArguments(
            "grid ladder needs at least 3 ascending rungs".into(),
        ));
    }
    let mass = scn.sphere_mass();
    let mut z_eq: Option<f64> = None;
    let mut rungs = Vec::with_capacity(ladder.len());
    for &cells in ladder {
        let mut rung_scn = scn.clone();
        rung_scn.grid = scn.grid.with_cells([cells; 3]);
        let (b_ext, bare) = calibrate_b_ext(&rung_scn)?;
        let stats = axial_gradient_stats(&bare, rung_scn.geometry.a)?;
        if z_eq.is_none() {
            z_eq = Some(crate::trap_analysis::find_equilibrium_z(&rung_scn, b_ext)?);
        }
        let z0 = z_eq.unwrap();
        let a = rung_scn.geometry.a;
        let offsets: Vec<f64> = (-3..=3).map(|i| 0.2 * i as f64 / 3.0).collect();
        let scan = crate::trap_analysis::scan_potential(
            &rung_scn,
            crate::trap_analysis::Axis::Z,
            &offsets,
            [0.0, 0.0, z0],
            b_ext,
        )?;
        let xs: Vec<f64> = scan.offsets.iter().map(|o| o * a).collect();
        let (_, c2, _) = crate::trap_analysis::fit_quadratic(&xs, &scan.energy);
        let k = 2.0 * c2;
        let f_z = if k > 0.0 {
            (k / mass).sqrt() / (2.0 * std::f64::consts::PI)
        } else {
            0.0
        };
        rungs.push(ConvergenceRung {
            cells,
            f_z,
            b_max: stats.b_max,
            residual: bare.residual,
        });
    }

    let n = rungs.len();
    let (fa, fb, fc) = (rungs[n - 3].f_z, rungs[n - 2].f_z, rungs[n - 1].f_z);
    let (d1, d2) = ((fb - fa).abs(), (fc - fb).abs());
    let ratio =
        rungs[n - 1].cells as f64 / rungs[n - 2].cells as f64;
    let observed_order = if d1 > 0.0 && d2 > 0.0 && ratio > 1.0 {
        Some((d1 / d2).ln() / ratio.ln())
    } else {
        None
    };
    let finest_pair_rel_diff = if fc != 0.0 { (fc - fb).abs() / fc.abs() } else { f64::INFINITY };
    Ok(ConvergenceReport {
        config_hash: String::new(),
        rungs,
        observed_order,
        finest_pair_rel_diff,
        under_resolved: finest_pair_rel_diff > 0.01,
    })
}

/// `convergence --grid-ladder n1,n2,n3,...`
pub fn run_convergence(
    cfg: &LoadedConfig,
    out: &Path,
    ladder: &[usize],
) -> Result<ConvergenceReport, CliError> {
    let mut report = convergence_study(&cfg.scenario, ladder)?;
    report.config_hash = cfg.config_hash.clone();
    let rows: Vec<Vec<String>> = report
        .rungs
        .iter()
        .map(|r| {
            vec![
                r.cells.to_string(),
                fmt(r.f_z),
                fmt(r.b_max),
                fmt(r.residual),
            ]
        })
        .collect();
    write_csv(
        &out.join("convergence.csv"),
        "convergence",
        &cfg.config_hash,
        &["cells_per_axis", "f_z_Hz", "b_max_T", "residual"],
        &rows,
    )?;
    write_json(&out.join("convergence.json"), &report)?;
    RunManifest::new("convergence", cfg, 1).write(out)?;
    Ok(report)
}

// small helper: chunk with start indices (keeps sweep scheduling readable)
trait ChunkIndices<'a, T> {
    fn zip_longest_indices(self) -> Vec<(usize, &'a [T])>;
}

impl<'a, T> ChunkIndices<'a, T> for std::slice::Chunks<'a, T> {
    fn zip_longest_indices(self) -> Vec<(usize, &'a [T])> {
        let mut out = Vec::new();
        let mut start = 0;
        for chunk in self {
            out.push((start, chunk));
            start += chunk.len();
        }
        out
    }
}
