//! Integration tests for trap characterization on reduced grids.
//!
//! Full-resolution numbers live in the acceptance suite; these tests check
//! structure (symmetry, convexity, branch logic) on grids cheap enough for
//! routine runs.

use approx::assert_relative_eq;
use maglev::geometry::{GridSpec, Refinement};
use maglev::materials::PhysicalConstants;
use maglev::scenario::Scenario;
use maglev::trap_analysis::{
    calibrate_b_ext, characterize, fit_quadratic, frequency_vs_field, scan_potential,
    well_about_center, Axis, TrapError,
};

fn coarse_scenario(a: f64) -> Scenario {
    let mut scn = Scenario::design_point(a);
    // lateral scans need the fine spacing to leave shell room in the
    // sphere-wall gap, so trade domain size for resolution
    scn.grid = GridSpec {
        half_extent: [0.75 * scn.geometry.disk_outer_radius; 3],
        cells: [72; 3],
        refinement: Some(Refinement {
            region_half_extent: [2.0 * a; 3],
            factor: 12.0,
        }),
    };
    scn
}

/// The magnetic part of the z potential is even about the hole center
/// (gravity is the only symmetry breaker), and the stored energy must be
/// consistent with the forces it was integrated from.
#[test]
fn z_scan_energy_even_and_consistent() {
    let a = 0.25e-3;
    let scn = coarse_scenario(a);
    let (b_ext, _) = calibrate_b_ext(&scn).unwrap();
    let offsets: Vec<f64> = (-3..=3).map(|i| 0.2 * i as f64 / 3.0).collect();
    let scan = scan_potential(&scn, Axis::Z, &offsets, [0.0; 3], b_ext).unwrap();

    let mass = scn.sphere_mass();
    let g = PhysicalConstants::default().g;
    // remove gravity (it was folded into the z force): U_mag = U - m g z
    let u_mag: Vec<f64> = scan
        .offsets
        .iter()
        .zip(&scan.energy)
        .map(|(o, u)| u - mass * g * o * a)
        .collect();
    let depth = u_mag.iter().cloned().fold(f64::MIN, f64::max)
        - u_mag.iter().cloned().fold(f64::MAX, f64::min);
    assert!(depth > 0.0);
    for i in 0..offsets.len() {
        let j = offsets.len() - 1 - i;
        let asym = (u_mag[i] - u_mag[j]).abs();
        assert!(
            asym < 0.05 * depth,
            "odd component {asym:.3e} vs depth {depth:.3e} at offset {}",
            offsets[i]
        );
    }

    // central difference of U reproduces the midpoint force
    for i in 1..offsets.len() - 1 {
        let dx = (offsets[i + 1] - offsets[i - 1]) * a;
        let f_num = -(scan.energy[i + 1] - scan.energy[i - 1]) / dx;
        // differentiating the trapezoid integral back gives the weighted
        // three-point average of the forces
        let f_ref = 0.25 * scan.forces[i - 1] + 0.5 * scan.forces[i] + 0.25 * scan.forces[i + 1];
        assert_relative_eq!(f_num, f_ref, max_relative = 1e-9, epsilon = 1e-12);
    }
}

/// A wide slit removes the x-axis trap: at theta = 135 degrees the scan
/// along the slit direction has no well about the hole center. Flux leaking
/// through the slit tilts |B| along x, so the potential is dominated by a
/// linear term and the center is not a stable point. The transverse y axis
/// stays trapped.
#[test]
fn wide_slit_kills_x_axis_trap() {
    let a = 0.25e-3;
    let mut scn = coarse_scenario(a);
    scn.geometry.theta = 135.0_f64.to_radians();
    let (b_ext, _) = calibrate_b_ext(&scn).unwrap();
    let offsets: Vec<f64> = (-3..=3).map(|i| 0.15 * i as f64 / 3.0).collect();
    let scan = scan_potential(&scn, Axis::X, &offsets, [0.0; 3], b_ext).unwrap();
    assert!(
        !well_about_center(&scan.energy),
        "expected no x well at theta = 135 deg: {:?}",
        scan.energy
    );
    let scan_y = scan_potential(&scn, Axis::Y, &offsets, [0.0; 3], b_ext).unwrap();
    assert!(well_about_center(&scan_y.energy));
    let ys: Vec<f64> = scan_y.offsets.iter().map(|o| o * a).collect();
    let (_, c2y, _) = fit_quadratic(&ys, &scan_y.energy);
    assert!(c2y > 0.0);
}

/// Coarse-grid characterization: all axes convex at the optimal geometry,
/// conditions satisfied, and the axial frequency consistent with the
/// bare-field curvature route.
#[test]
fn coarse_characterization_structure() {
    let a = 0.25e-3;
    let scn = coarse_scenario(a);
    let ch = characterize(&scn).unwrap();
    assert!(ch.convex.iter().all(|&c| c), "convex = {:?}", ch.convex);
    assert!(ch.levitation_ok);
    assert!(ch.uniformity_ok);
    assert!(ch.f[2] > 0.0 && ch.f[0] > ch.f[2] && ch.f[1] > ch.f[2]);
    assert_relative_eq!(ch.b_max, scn.b_max_target, max_relative = 1e-6);
    assert!(ch.equilibrium_z < 0.0, "gravity sag is downward");

    // curvature route: f_z from the bare |B|(z) profile
    let (b_ext, bare) = calibrate_b_ext(&scn).unwrap();
    let scale = b_ext / bare.b_ext;
    let zs: Vec<f64> = (-6..=6).map(|i| 0.05 * a * i as f64).collect();
    let pts: Vec<[f64; 3]> = zs.iter().map(|&z| [0.0, 0.0, z]).collect();
    let prof = maglev::magnetostatics::sample_b(&bare, &pts).unwrap();
    let bmag: Vec<f64> = prof
        .iter()
        .map(|b| scale * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt())
        .collect();
    let (_, c2, _) = fit_quadratic(&zs, &bmag);
    let m_sat = scn.ferromagnet.m_sat;
    let f_curv = maglev::trap_analysis::trap_frequency_from_curvature(
        m_sat,
        scn.ferromagnet.rho,
        (2.0 * c2).abs(),
    )
    .unwrap();
    assert_relative_eq!(ch.f[2], f_curv, max_relative = 0.2);
}

/// Below saturation the frequency-field curve is a straight line through
/// the origin; a saturated point bends below it and produces a crossover
/// estimate.
#[test]
fn frequency_field_branches() {
    let a = 0.25e-3;
    let scn = coarse_scenario(a);
    // the saturated point stays moderate: deep saturation flattens the
    // potential enough to fail the harmonic-fit gate
    let curve = frequency_vs_field(&scn, &[0.02, 0.04, 0.15]).unwrap();
    assert_eq!(curve.points.len(), 3);
    assert!(!curve.points[0].saturated);
    assert!(!curve.points[1].saturated);
    assert!(curve.points[2].saturated);
    // linear branch: f = slope · B exactly
    assert_relative_eq!(
        curve.points[0].f_z,
        curve.linear_slope * 0.02,
        max_relative = 1e-12
    );
    assert_relative_eq!(
        curve.points[1].f_z / curve.points[0].f_z,
        2.0,
        max_relative = 1e-12
    );
    // the saturated point lies below the linear extrapolation
    assert!(curve.points[2].f_z < curve.linear_slope * 0.15);
    let crossover = curve.crossover.expect("saturated point brackets crossover");
    assert!(crossover > 0.04 && crossover < 0.15, "crossover = {crossover}");
}

/// Bad input surfaces as errors, not panics.
#[test]
fn field_value_validation() {
    let scn = coarse_scenario(0.25e-3);
    assert!(matches!(
        frequency_vs_field(&scn, &[]),
        Err(TrapError::BadFieldValues)
    ));
    assert!(matches!(
        frequency_vs_field(&scn, &[0.1, 0.05]),
        Err(TrapError::BadFieldValues)
    ));
    assert!(matches!(
        frequency_vs_field(&scn, &[-0.1, 0.05]),
        Err(TrapError::BadFieldValues)
    ));
}
