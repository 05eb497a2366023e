//! Integration tests for the eddy-current and gas-damping Q budget.

use approx::assert_relative_eq;
use maglev::dissipation::{q_eddy_conductor, ConductorBody};
use maglev::scenario::Scenario;

fn copper_plate(standoff: f64) -> ConductorBody {
    ConductorBody {
        label: "copper plate".into(),
        standoff,
        thickness: 1e-3,
        radius: 20e-3,
        bore_diameter: None,
        sigma: 5.998e8,
    }
}

/// Q from quasi-static eddy currents must not depend on the oscillation
/// amplitude: both the stored energy and the cycle loss scale as amplitude
/// squared in the linearized (small-motion) regime. Amplitudes must stay
/// well below the standoff for the linearization to hold.
#[test]
fn eddy_q_amplitude_independent() {
    let scn = Scenario::design_point(0.5e-3);
    let body = copper_plate(0.1e-3);
    let q1 = q_eddy_conductor(&scn, &body, 226.0, 1e-6, 100).unwrap().q;
    let q2 = q_eddy_conductor(&scn, &body, 226.0, 4e-6, 100).unwrap().q;
    assert_relative_eq!(q1, q2, max_relative = 1e-3);
}

/// Moving the conductor away must monotonically raise Q.
#[test]
fn eddy_q_monotone_in_standoff() {
    let scn = Scenario::design_point(0.5e-3);
    let mut last = 0.0;
    for standoff in [0.1e-3, 1e-3, 10e-3] {
        let q = q_eddy_conductor(&scn, &copper_plate(standoff), 226.0, 5e-5, 100)
            .unwrap()
            .q;
        assert!(q > last, "Q must rise with standoff: {q} after {last}");
        last = q;
    }
}

/// Copper plate 0.1 mm below the disk, 2a = 1 mm sphere at the 100 mT
/// design point: Q within a factor of five of 5e2.
#[test]
fn eddy_q_copper_plate_close() {
    let scn = Scenario::design_point(0.5e-3);
    let rep = q_eddy_conductor(&scn, &copper_plate(0.1e-3), 226.0, 5e-5, 100).unwrap();
    assert!(
        rep.q > 1e2 && rep.q < 2.5e3,
        "Q = {:.3e} outside factor-5 band around 5e2",
        rep.q
    );
}

/// Distant plate (10 mm): regression pin for the unscreened quasi-static
/// model. The dipole field reaches the plate unattenuated, so the model is
/// conservative; it must still clear 1e6.
#[test]
fn eddy_q_distant_plate_regression() {
    let scn = Scenario::design_point(0.5e-3);
    let rep = q_eddy_conductor(&scn, &copper_plate(10e-3), 226.0, 5e-5, 100).unwrap();
    assert!(rep.q > 1e6, "Q = {:.3e}", rep.q);
}

/// The quasi-static model is flagged once the skin depth drops below the
/// conductor thickness.
#[test]
fn skin_depth_warning_raised() {
    let scn = Scenario::design_point(0.5e-3);
    let mut body = copper_plate(0.1e-3);
    body.thickness = 10e-3;
    let rep = q_eddy_conductor(&scn, &body, 50e3, 5e-5, 100).unwrap();
    assert!(rep.skin_depth < body.thickness);
    assert!(rep.skin_depth_warning);

    let rep_ok = q_eddy_conductor(&scn, &copper_plate(0.1e-3), 226.0, 5e-5, 100).unwrap();
    assert!(!rep_ok.skin_depth_warning);
}

/// Cycle loss is linear in conductivity, so Q scales as 1/sigma.
#[test]
fn eddy_q_inverse_in_conductivity() {
    let scn = Scenario::design_point(0.5e-3);
    let mut body = copper_plate(0.5e-3);
    let q1 = q_eddy_conductor(&scn, &body, 226.0, 5e-5, 100).unwrap().q;
    body.sigma *= 10.0;
    let q2 = q_eddy_conductor(&scn, &body, 226.0, 5e-5, 100).unwrap().q;
    assert_relative_eq!(q1 / q2, 10.0, max_relative = 1e-6);
}

/// Squeezed-film geometric factor: the average squared sphere-wall distance
/// (1/2a) ∫ (r − sqrt(a² − z²))² dz over |z| ≤ a equals
/// r² + (2/3)a² − (π/2) r a. Numeric quadrature pins the closed form (and
/// its plus sign) to 1e-10.
#[test]
fn squeezed_film_distance_integral_oracle() {
    let (a, r) = (0.25e-3_f64, 0.35e-3_f64);
    // Simpson's rule on a fine grid; the integrand is smooth except for
    // sqrt endpoints, so refine until stable
    let numeric = |n: usize| -> f64 {
        let h = 2.0 * a / n as f64;
        let f = |z: f64| {
            let d = r - (a * a - z * z).max(0.0).sqrt();
            d * d
        };
        let mut s = f(-a) + f(a);
        for i in 1..n {
            let z = -a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(z);
        }
        s * h / 3.0 / (2.0 * a)
    };
    let closed = r * r + 2.0 / 3.0 * a * a - 0.5 * std::f64::consts::PI * r * a;
    let coarse = numeric(1 << 14);
    let fine = numeric(1 << 16);
    // endpoint sqrt limits Simpson to ~1.5 order; Richardson on the pair
    let extrapolated = fine + (fine - coarse) / ((4.0f64.powf(0.75)) - 1.0);
    assert_relative_eq!(extrapolated, closed, max_relative = 1e-6);
    // and a high-order check via the substitution z = a sin(t), which removes
    // the endpoint singularity entirely
    let n = 1 << 12;
    let h = std::f64::consts::PI / n as f64;
    let g = |t: f64| {
        let d = r - a * t.cos().abs();
        d * d * a * t.cos()
    };
    let mut s = g(-0.5 * std::f64::consts::PI) + g(0.5 * std::f64::consts::PI);
    for i in 1..n {
        let t = -0.5 * std::f64::consts::PI + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(t);
    }
    let smooth = s * h / 3.0 / (2.0 * a);
    assert_relative_eq!(smooth, closed, max_relative = 1e-10);
}
