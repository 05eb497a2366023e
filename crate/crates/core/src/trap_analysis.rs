//! Trap characterization: potential scans along the principal axes,
//! harmonic fits, the levitation and uniformity conditions, trap
//! frequencies, and the frequency-vs-field curve with its saturation
//! crossover.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forces::{force_stress_tensor_with_shells, ForceError};
use crate::magnetostatics::{
    axial_gradient_stats, solve, solve_with_guess, FieldSolution, SolveError,
};
use crate::materials::{magnetization, MaterialError, PhysicalConstants};
use crate::scenario::Scenario;

/// Fraction of `a` bounding the harmonic fit window.
pub const FIT_WINDOW: f64 = 0.2;
/// Fit residual above this fraction of the well depth flags anharmonicity.
pub const ANHARMONIC_THRESHOLD: f64 = 0.02;
/// "Much smaller" margin used by the uniformity condition.
pub const UNIFORMITY_FACTOR: f64 = 0.1;
/// Stress-tensor quadrature order used by scans.
pub const QUADRATURE_ORDER: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

#[derive(Debug, Error)]
pub enum TrapError {
    #[error("offsets must be strictly increasing and non-empty")]
    BadOffsets,
    #[error("solver failed at offset {offset} a along {axis}: {source}")]
    SolveAtOffset {
        axis: &'static str,
        offset: f64,
        source: SolveError,
    },
    #[error(transparent)]
    Force(#[from] ForceError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error("anharmonic potential along {axis}: fit residual {residual:.3} of well depth")]
    Anharmonic { axis: &'static str, residual: f64 },
    #[error("no restoring curvature (unstable axis): d2Bz/dz2 = {0}")]
    UnstableAxis(f64),
    #[error("no equilibrium inside the scanned range")]
    NoEquilibrium,
    #[error("field values must be positive and ascending")]
    BadFieldValues,
    #[error("no room for a quadrature shell at offset {offset} a along {axis}")]
    NoShellRoom { axis: &'static str, offset: f64 },
}

/// One axis scan of the trap potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialScan {
    pub axis: Axis,
    /// Sphere-center offsets from the scan origin, in units of `a`
    pub offsets: Vec<f64>,
    /// Total potential energy (magnetic + gravitational) relative to the
    /// sample nearest the origin [J]
    pub energy: Vec<f64>,
    /// Along-axis total force (stress tensor, minus m·g on z) [N]
    pub forces: Vec<f64>,
    /// Scan origin in domain coordinates [m]
    pub origin: [f64; 3],
}

/// Harmonic trap summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapCharacterization {
    /// Spring constants per axis [N/m]
    pub k: [f64; 3],
    /// Trap frequencies per axis [Hz]
    pub f: [f64; 3],
    pub convex: [bool; 3],
    /// Levitation condition: mean axial gradient exceeds rho·g/M
    pub levitation_ok: bool,
    /// Uniformity condition: mean axial gradient ≤ uniformity_factor × B_max/a
    pub uniformity_ok: bool,
    /// Central field of the bare (no sphere) solution [T]
    pub b_max: f64,
    /// Calibrated applied field [T]
    pub b_ext: f64,
    /// Equilibrium height below the hole center [m]
    pub equilibrium_z: f64,
    /// Mean |dBz/dz| over the sphere, bare solution [T/m]
    pub mean_gradient: f64,
    /// rho·g/M levitation threshold [T/m]
    pub levitation_threshold: f64,
    /// Whether the sphere solves used the saturated branch
    pub saturated: bool,
}

/// Applied uniform field that produces `b_max_target` at the hole center,
/// from one bare-disk solve (the bare problem is linear in B_ext).
pub fn calibrate_b_ext(scn: &Scenario) -> Result<(f64, FieldSolution), TrapError> {
    let probe = 0.01;
    let bare = solve(
        &scn.geometry,
        &scn.ferromagnet,
        None,
        probe,
        &scn.solver,
        &scn.grid,
    )
    .map_err(|source| TrapError::SolveAtOffset {
        axis: "bare",
        offset: 0.0,
        source,
    })?;
    let stats = axial_gradient_stats(&bare, scn.geometry.a).map_err(|source| {
        TrapError::SolveAtOffset {
            axis: "bare",
            offset: 0.0,
            source,
        }
    })?;
    let ratio = stats.b_max / probe;
    Ok((scn.b_max_target / ratio, bare))
}

fn total_axis_force(
    scn: &Scenario,
    b_ext: f64,
    center: [f64; 3],
    axis: Axis,
    guess: Option<&[f64]>,
) -> Result<(f64, bool, Vec<f64>), TrapError> {
    let sol = solve_with_guess(
        &scn.geometry,
        &scn.ferromagnet,
        Some(center),
        b_ext,
        &scn.solver,
        &scn.grid,
        guess,
    )
    .map_err(|source| TrapError::SolveAtOffset {
        axis: axis.label(),
        offset: center[axis.index()] / scn.geometry.a,
        source,
    })?;
    let a = scn.geometry.a;
    // fit the quadrature shells into the gap left between the displaced
    // sphere and the hole wall (one staircase cell of margin)
    let dx = sol.grid.local_spacing(center);
    let rho_off = (center[0] * center[0] + center[1] * center[1]).sqrt();
    let clearance = scn.geometry.r - rho_off - 1.5 * dx;
    let hi = (a + 4.0 * dx).min(clearance);
    let lo = a + 1.2 * dx;
    if hi <= lo {
        return Err(TrapError::NoShellRoom {
            axis: axis.label(),
            offset: center[axis.index()] / a,
        });
    }
    let shells = [lo, 0.5 * (lo + hi), hi];
    let fs = force_stress_tensor_with_shells(&sol, center, &shells, QUADRATURE_ORDER)?;
    let mut f = fs.f[axis.index()];
    if axis == Axis::Z {
        f -= scn.sphere_mass() * PhysicalConstants::default().g;
    }
    Ok((f, sol.saturated, sol.potential))
}

/// Scan the trap potential along one axis about `origin`.
///
/// Offsets are in units of the sphere radius and must increase strictly.
/// Energy comes from trapezoid integration of −F along the scan; gravity is
/// part of the z force, so the stored energy already contains the m·g·z
/// term.
pub fn scan_potential(
    scn: &Scenario,
    axis: Axis,
    offsets: &[f64],
    origin: [f64; 3],
    b_ext: f64,
) -> Result<PotentialScan, TrapError> {
    if offsets.is_empty() || offsets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TrapError::BadOffsets);
    }
    let a = scn.geometry.a;
    let mut forces = Vec::with_capacity(offsets.len());
    let mut guess: Option<Vec<f64>> = None;
    for &off in offsets {
        let mut center = origin;
        center[axis.index()] += off * a;
        let (f, _, phi) = total_axis_force(scn, b_ext, center, axis, guess.as_deref())?;
        guess = Some(phi);
        forces.push(f);
    }
    // U(x) = -∫ F dx, trapezoid, then re-referenced to the sample nearest 0
    let mut energy = vec![0.0f64; offsets.len()];
    for i in 1..offsets.len() {
        let dx = (offsets[i] - offsets[i - 1]) * a;
        energy[i] = energy[i - 1] - 0.5 * (forces[i] + forces[i - 1]) * dx;
    }
    let center_idx = offsets
        .iter()
        .enumerate()
        .min_by(|(_, x), (_, y)| x.abs().partial_cmp(&y.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let u0 = energy[center_idx];
    for e in &mut energy {
        *e -= u0;
    }
    Ok(PotentialScan {
        axis,
        offsets: offsets.to_vec(),
        energy,
        forces,
        origin,
    })
}

/// Least-squares quadratic fit u ≈ c0 + c1 x + c2 x², returning (c1, c2,
/// rms residual).
fn quadratic_fit(x: &[f64], u: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mut s = [0.0f64; 5];
    let (mut su, mut sxu, mut sx2u) = (0.0f64, 0.0f64, 0.0f64);
    for (&xi, &ui) in x.iter().zip(u) {
        let mut p = 1.0;
        for sk in &mut s {
            *sk += p;
            p *= xi;
        }
        su += ui;
        sxu += xi * ui;
        sx2u += xi * xi * ui;
    }
    // normal equations, 3x3 solve by Cramer
    let m = [
        [n, s[1], s[2]],
        [s[1], s[2], s[3]],
        [s[2], s[3], s[4]],
    ];
    let b = [su, sxu, sx2u];
    let det3 = |m: &[[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&m);
    let mut coeffs = [0.0f64; 3];
    for c in 0..3 {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        coeffs[c] = det3(&mc) / d;
    }
    let mut res2 = 0.0;
    for (&xi, &ui) in x.iter().zip(u) {
        let fit = coeffs[0] + coeffs[1] * xi + coeffs[2] * xi * xi;
        res2 += (ui - fit).powi(2);
    }
    (coeffs[1], coeffs[2], (res2 / n).sqrt())
}

/// Total vertical force (stress tensor minus gravity) with the sphere at
/// `center`; convenience entry for stand-alone stencils.
pub fn axial_force_at(
    scn: &Scenario,
    b_ext: f64,
    center: [f64; 3],
) -> Result<f64, TrapError> {
    total_axis_force(scn, b_ext, center, Axis::Z, None).map(|(f, _, _)| f)
}

/// Least-squares quadratic fit u ≈ c0 + c1·x + c2·x², returning (c1, c2,
/// rms residual).
pub fn fit_quadratic(x: &[f64], u: &[f64]) -> (f64, f64, f64) {
    quadratic_fit(x, u)
}

/// Locate the levitation equilibrium below the hole center from a z scan:
/// the sign change of the total vertical force.
pub fn find_equilibrium_z(scn: &Scenario, b_ext: f64) -> Result<f64, TrapError> {
    find_equilibrium(scn, b_ext)
}

fn find_equilibrium(scn: &Scenario, b_ext: f64) -> Result<f64, TrapError> {
    let a = scn.geometry.a;
    let offsets: Vec<f64> = (-4..=2).map(|i| 0.1 * i as f64).collect();
    let mut prev: Option<(f64, f64)> = None;
    let mut guess: Option<Vec<f64>> = None;
    for &off in &offsets {
        let (f, _, phi) =
            total_axis_force(scn, b_ext, [0.0, 0.0, off * a], Axis::Z, guess.as_deref())?;
        guess = Some(phi);
        if let Some((off0, f0)) = prev {
            if f0 >= 0.0 && f < 0.0 {
                // linear interpolation to the zero crossing
                let t = f0 / (f0 - f);
                return Ok((off0 + t * (off - off0)) * a);
            }
        }
        prev = Some((off, f));
    }
    Err(TrapError::NoEquilibrium)
}

/// Full harmonic characterization at the scenario's design field.
pub fn characterize(scn: &Scenario) -> Result<TrapCharacterization, TrapError> {
    let consts = PhysicalConstants::default();
    let a = scn.geometry.a;
    let (b_ext, bare) = calibrate_b_ext(scn)?;
    let mut stats = axial_gradient_stats(&bare, a).map_err(|source| TrapError::SolveAtOffset {
        axis: "bare",
        offset: 0.0,
        source,
    })?;
    // the bare probe solve is linear in B_ext: rescale its stats to the
    // calibrated field
    let scale = b_ext / bare.b_ext;
    stats.b_max *= scale;
    stats.mean_abs_gradient *= scale;

    let z_eq = find_equilibrium(scn, b_ext)?;
    let origin = [0.0, 0.0, z_eq];

    let mass = scn.sphere_mass();
    let mut k = [0.0f64; 3];
    let mut f = [0.0f64; 3];
    let mut convex = [false; 3];
    let mut saturated = false;
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        // lateral scans keep extra clearance to the hole wall
        let window = if axis == Axis::Z { FIT_WINDOW } else { 0.75 * FIT_WINDOW };
        let offsets: Vec<f64> = (-3..=3).map(|i| window * i as f64 / 3.0).collect();
        let scan = scan_potential(scn, axis, &offsets, origin, b_ext)?;
        let xs: Vec<f64> = scan.offsets.iter().map(|o| o * a).collect();
        let (_, c2, rms) = quadratic_fit(&xs, &scan.energy);
        let depth = scan
            .energy
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max)
            - scan.energy.iter().cloned().fold(f64::MAX, f64::min);
        if depth > 0.0 && rms / depth > ANHARMONIC_THRESHOLD {
            return Err(TrapError::Anharmonic {
                axis: axis.label(),
                residual: rms / depth,
            });
        }
        let ki = 2.0 * c2;
        let i = axis.index();
        k[i] = ki;
        convex[i] = ki > 0.0 && well_about_center(&scan.energy);
        f[i] = if ki > 0.0 {
            (ki / mass).sqrt() / (2.0 * std::f64::consts::PI)
        } else {
            0.0
        };
        if axis == Axis::Z {
            let (_, sat, _) = total_axis_force(scn, b_ext, origin, Axis::Z, None)?;
            saturated = sat;
        }
    }

    let m_lin = magnetization(&scn.ferromagnet, stats.b_max)?;
    let levitation_threshold = scn.ferromagnet.rho * consts.g / m_lin;
    Ok(TrapCharacterization {
        k,
        f,
        convex,
        levitation_ok: stats.mean_abs_gradient > levitation_threshold,
        uniformity_ok: stats.mean_abs_gradient
            <= UNIFORMITY_FACTOR * stats.b_max / a,
        b_max: stats.b_max,
        b_ext,
        equilibrium_z: z_eq,
        mean_gradient: stats.mean_abs_gradient,
        levitation_threshold,
        saturated,
    })
}

/// True when the central sample of a symmetric scan is its strict minimum,
/// i.e. the potential is a well about the scan origin. A tilted profile with
/// positive curvature (a displaced minimum) does not count as trapped.
pub fn well_about_center(energy: &[f64]) -> bool {
    let mid = energy.len() / 2;
    let depth = energy.iter().cloned().fold(f64::MIN, f64::max)
        - energy.iter().cloned().fold(f64::MAX, f64::min);
    let tol = 1e-3 * depth.max(f64::MIN_POSITIVE);
    energy
        .iter()
        .enumerate()
        .all(|(i, &u)| i == mid || u > energy[mid] - tol)
}

/// Curvature route to the axial frequency: f_z = (1/2π)·sqrt((M/rho)·d²Bz/dz²).
pub fn trap_frequency_from_curvature(
    m: f64,
    rho: f64,
    d2bz_dz2: f64,
) -> Result<f64, TrapError> {
    if d2bz_dz2 < 0.0 {
        return Err(TrapError::UnstableAxis(d2bz_dz2));
    }
    Ok((m / rho * d2bz_dz2).sqrt() / (2.0 * std::f64::consts::PI))
}

/// One point of the frequency-field curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPoint {
    pub b_max: f64,
    pub f_z: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCurve {
    pub points: Vec<FrequencyPoint>,
    /// Low-field slope df/dB [Hz/T]
    pub linear_slope: f64,
    /// Field where the linear and saturated branches intersect [T], if the
    /// requested range brackets it
    pub crossover: Option<f64>,
}

/// f_z across a range of target central fields.
///
/// Below saturation the discrete problem is exactly linear in B_ext, so one
/// reference characterization fixes the whole branch (f ∝ B). Saturated
/// points are characterized individually (fixed-moment solves).
pub fn frequency_vs_field(scn: &Scenario, b_values: &[f64]) -> Result<FrequencyCurve, TrapError> {
    if b_values.is_empty()
        || b_values.iter().any(|&b| b <= 0.0)
        || b_values.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(TrapError::BadFieldValues);
    }
    // reference point safely below saturation
    let b_ref = 0.05;
    let mut ref_scn = scn.clone();
    ref_scn.b_max_target = b_ref;
    let ch_ref = characterize(&ref_scn)?;
    let slope = ch_ref.f[2] / b_ref;

    let mut points = Vec::with_capacity(b_values.len());
    let mut crossover = None;
    for &b in b_values {
        let f_lin = slope * b;
        let mut scn_b = scn.clone();
        scn_b.b_max_target = b;
        // cheap saturation probe: scale the reference linear prediction and
        // only run the expensive characterization when the sphere saturates
        let (b_ext, _) = calibrate_b_ext(&scn_b)?;
        let z_probe = [0.0, 0.0, ch_ref.equilibrium_z];
        let sol = solve(
            &scn_b.geometry,
            &scn_b.ferromagnet,
            Some(z_probe),
            b_ext,
            &scn_b.solver,
            &scn_b.grid,
        )
        .map_err(|source| TrapError::SolveAtOffset {
            axis: "probe",
            offset: 0.0,
            source,
        })?;
        if sol.saturated {
            let ch = characterize(&scn_b)?;
            if crossover.is_none() {
                // intersection of f_lin = slope·B with the sqrt-like branch
                // anchored at this point
                let c_sat = ch.f[2] / b.sqrt();
                crossover = Some((c_sat / slope).powi(2));
            }
            points.push(FrequencyPoint {
                b_max: b,
                f_z: ch.f[2],
                saturated: true,
            });
        } else {
            points.push(FrequencyPoint {
                b_max: b,
                f_z: f_lin,
                saturated: false,
            });
        }
    }
    Ok(FrequencyCurve {
        points,
        linear_slope: slope,
        crossover,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn curvature_frequency_examples() {
        assert_eq!(trap_frequency_from_curvature(7.71e4, 5172.0, 0.0).unwrap(), 0.0);
        let f = trap_frequency_from_curvature(7.71e4, 5172.0, 6.9e5).unwrap();
        assert_relative_eq!(f, 510.0, max_relative = 0.02);
        assert!(matches!(
            trap_frequency_from_curvature(7.71e4, 5172.0, -1.0),
            Err(TrapError::UnstableAxis(_))
        ));
    }

    #[test]
    fn levitation_threshold_at_saturation() {
        // rho·g/M_sat for YIG
        let thr = 5172.0 * 9.80665 / 1.96e5;
        assert_relative_eq!(thr, 0.259, max_relative = 1e-3);
    }

    #[test]
    fn quadratic_fit_recovers_parabola() {
        let xs: Vec<f64> = (-5..=5).map(|i| i as f64 * 0.1).collect();
        let us: Vec<f64> = xs.iter().map(|x| 3.0 + 0.5 * x + 7.0 * x * x).collect();
        let (c1, c2, rms) = quadratic_fit(&xs, &us);
        assert_relative_eq!(c1, 0.5, max_relative = 1e-9);
        assert_relative_eq!(c2, 7.0, max_relative = 1e-9);
        assert!(rms < 1e-12);
    }

    #[test]
    fn bad_offsets_rejected() {
        let scn = Scenario::design_point(0.25e-3);
        let err = scan_potential(&scn, Axis::X, &[0.2, 0.1], [0.0; 3], 0.02).unwrap_err();
        assert!(matches!(err, TrapError::BadOffsets));
    }
}
