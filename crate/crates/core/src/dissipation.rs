//! Mechanism-resolved Q factors: quasi-static eddy losses in nearby normal
//! conductors, mixed-state vortex scaling, vacuum and squeezed-film gas
//! damping, and reciprocal budget combination.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::materials::{magnetization, MaterialError, PhysicalConstants, MOLAR_MASS_AIR, MU0};
use crate::scenario::Scenario;

/// A normal-conducting body near the trap (jig plate, coil bobbin).
///
/// Modeled as a cylinder coaxial with the trap, optionally with a bore,
/// sitting below the superconductor's lower surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductorBody {
    pub label: String,
    /// Gap between the superconductor's lower surface and the body's top
    /// face [m]
    pub standoff: f64,
    /// Axial thickness [m]
    pub thickness: f64,
    /// Outer radius [m]
    pub radius: f64,
    /// Bore diameter for bobbin-like bodies [m]
    pub bore_diameter: Option<f64>,
    /// Conductivity [S/m]
    pub sigma: f64,
}

impl ConductorBody {
    pub fn validate(&self) -> Result<(), DissipationError> {
        if self.sigma < 0.0
            || self.standoff < 0.0
            || self.thickness <= 0.0
            || self.radius <= 0.0
            || self.bore_diameter.map_or(false, |b| b <= 0.0 || b >= 2.0 * self.radius)
        {
            return Err(DissipationError::BadConductor(self.label.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DissipationError {
    #[error("conductor body '{0}' has invalid dimensions or conductivity")]
    BadConductor(String),
    #[error("normal fraction must lie in (0, 1], got {0}")]
    BadNormalFraction(f64),
    #[error("pressure and temperature must be positive")]
    BadGasState,
    #[error("squeezed-film denominator not positive (r = {r}, a = {a})")]
    BadFilmGeometry { r: f64, a: f64 },
    #[error("empty dissipation budget")]
    EmptyBudget,
    #[error("all Q values must be positive, got {0}")]
    BadQ(f64),
    #[error(transparent)]
    Material(#[from] MaterialError),
}

/// Eddy-loss evaluation details alongside the Q value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEddyReport {
    pub q: f64,
    /// Energy lost per oscillation cycle [J]
    pub delta_e: f64,
    /// Skin depth at the trap frequency [m]
    pub skin_depth: f64,
    /// Quasi-static model out of validity: skin depth below body thickness
    pub skin_depth_warning: bool,
    /// Final mesh after refinement (radial, azimuthal, axial)
    pub mesh: [usize; 3],
}

fn eddy_cycle_loss(
    body: &ConductorBody,
    moment: f64,
    omega: f64,
    amplitude: f64,
    z_top: f64,
    mesh: [usize; 3],
    time_slots: usize,
) -> f64 {
    let (nr, nphi, nz) = (mesh[0], mesh[1], mesh[2]);
    let r_in = body.bore_diameter.map_or(0.0, |b| 0.5 * b);
    let dr = (body.radius - r_in) / nr as f64;
    let dzc = body.thickness / nz as f64;
    let dphi = 2.0 * std::f64::consts::PI / nphi as f64;
    let period = 2.0 * std::f64::consts::PI / omega;
    let dt = period / time_slots as f64;

    let mut delta_e = 0.0;
    for it in 0..time_slots {
        let t = (it as f64 + 0.5) * dt;
        let z_dip = amplitude * (omega * t).sin();
        let v = amplitude * omega * (omega * t).cos();
        // E_phi = (3 mu0 m v / 4 pi) · rho (z - z_dip) / r^5 from the time
        // derivative of the dipole vector potential A_phi = mu0 m rho/(4 pi r^3)
        let pref = 3.0 * MU0 * moment * v / (4.0 * std::f64::consts::PI);
        let mut p = 0.0;
        for iz in 0..nz {
            let z = z_top - (iz as f64 + 0.5) * dzc;
            let dz_rel = z - z_dip;
            for ir in 0..nr {
                let rho = r_in + (ir as f64 + 0.5) * dr;
                let r2 = rho * rho + dz_rel * dz_rel;
                let e_phi = pref * rho * dz_rel / (r2 * r2 * r2.sqrt());
                // axisymmetric: the azimuthal cells share |E|
                let cell_v = rho * dphi * dr * dzc;
                p += body.sigma * e_phi * e_phi * cell_v * nphi as f64;
            }
        }
        delta_e += p * dt;
    }
    delta_e
}

/// Q limit from quasi-static eddy currents induced in `body` by the sphere
/// oscillating vertically at `f_z` with the given amplitude.
///
/// The sphere enters as a point dipole of moment M·V with M evaluated at
/// the scenario's target central field. Dissipation is integrated over a
/// cylindrical mesh (refined until the cycle loss changes by < 2%) and over
/// one cycle in at least 100 time slots.
pub fn q_eddy_conductor(
    scn: &Scenario,
    body: &ConductorBody,
    f_z: f64,
    amplitude: f64,
    cycles_resolution: usize,
) -> Result<QEddyReport, DissipationError> {
    body.validate()?;
    let omega = 2.0 * std::f64::consts::PI * f_z;
    let skin_depth = (2.0 / (omega * MU0 * body.sigma.max(f64::MIN_POSITIVE))).sqrt();
    if body.sigma == 0.0 {
        return Ok(QEddyReport {
            q: f64::INFINITY,
            delta_e: 0.0,
            skin_depth,
            skin_depth_warning: false,
            mesh: [0, 0, 0],
        });
    }
    let m_mag = magnetization(&scn.ferromagnet, scn.b_max_target)?;
    let moment = m_mag * crate::materials::sphere_volume(scn.geometry.a);
    let z_top = -0.5 * scn.geometry.h - body.standoff;
    let time_slots = cycles_resolution.max(100);

    let mut mesh = [32usize, 64, 8];
    let mut delta_e = eddy_cycle_loss(body, moment, omega, amplitude, z_top, mesh, time_slots);
    for _ in 0..4 {
        let finer = [mesh[0] * 2, mesh[1], mesh[2] * 2];
        let de2 = eddy_cycle_loss(body, moment, omega, amplitude, z_top, finer, time_slots);
        let change = ((de2 - delta_e) / de2).abs();
        mesh = finer;
        delta_e = de2;
        if change < 0.02 {
            break;
        }
    }

    let e_t = 0.5 * scn.sphere_mass() * amplitude * amplitude * omega * omega;
    Ok(QEddyReport {
        q: 2.0 * std::f64::consts::PI * e_t / delta_e,
        delta_e,
        skin_depth,
        skin_depth_warning: skin_depth < body.thickness,
        mesh,
    })
}

/// Mixed-state scaling: only the normal fraction of the superconductor
/// dissipates, so Q = Q_normal / rho_n.
pub fn q_eddy_mixed_state(q_normal: f64, rho_n: f64) -> Result<f64, DissipationError> {
    if !(rho_n > 0.0 && rho_n <= 1.0) {
        return Err(DissipationError::BadNormalFraction(rho_n));
    }
    Ok(q_normal / rho_n)
}

/// Free-molecular gas damping,
/// Q = (π·rho/6)·sqrt(3 kB T / m_g)·a·omega/P.
pub fn q_gas_vacuum(scn: &Scenario, p: f64, t: f64, f_z: f64) -> Result<f64, DissipationError> {
    if p <= 0.0 || t <= 0.0 {
        return Err(DissipationError::BadGasState);
    }
    let c = PhysicalConstants::default();
    let m_g = MOLAR_MASS_AIR / c.n_a;
    let omega = 2.0 * std::f64::consts::PI * f_z;
    Ok(std::f64::consts::PI * scn.ferromagnet.rho / 6.0
        * (3.0 * c.k_b * t / m_g).sqrt()
        * scn.geometry.a
        * omega
        / p)
}

/// Squeezed-film gas damping of the sphere inside the hole,
/// Q = (16 rho/3)·sqrt(R T / M_m)·a²(r−a)/(r² + (2/3)a² − (π/2)a·r)·omega/P
/// with omega = 2π·f_y.
pub fn q_gas_squeezed(scn: &Scenario, p: f64, t: f64, f_y: f64) -> Result<f64, DissipationError> {
    if p <= 0.0 || t <= 0.0 {
        return Err(DissipationError::BadGasState);
    }
    let (a, r) = (scn.geometry.a, scn.geometry.r);
    let denom = r * r + 2.0 / 3.0 * a * a - 0.5 * std::f64::consts::PI * a * r;
    if r <= a || denom <= 0.0 {
        return Err(DissipationError::BadFilmGeometry { r, a });
    }
    let c = PhysicalConstants::default();
    let omega = 2.0 * std::f64::consts::PI * f_y;
    Ok(16.0 * scn.ferromagnet.rho / 3.0
        * (c.r_gas * t / MOLAR_MASS_AIR).sqrt()
        * (a * a * (r - a) / denom)
        * omega
        / p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationBudget {
    pub entries: Vec<(String, f64)>,
    pub q_total: f64,
}

/// Reciprocal combination of independent loss channels. Infinite entries
/// (absent mechanisms) contribute nothing.
pub fn combine(entries: &[(String, f64)]) -> Result<DissipationBudget, DissipationError> {
    if entries.is_empty() {
        return Err(DissipationError::EmptyBudget);
    }
    let mut inv = 0.0;
    for (_, q) in entries {
        if *q <= 0.0 || q.is_nan() {
            return Err(DissipationError::BadQ(*q));
        }
        if q.is_finite() {
            inv += 1.0 / q;
        }
    }
    Ok(DissipationBudget {
        entries: entries.to_vec(),
        q_total: if inv > 0.0 { 1.0 / inv } else { f64::INFINITY },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scn_1mm() -> Scenario {
        Scenario::design_point(0.5e-3)
    }

    #[test]
    fn gas_vacuum_reference_value() {
        // 2a = 1 mm, 4 K, 1e-5 Pa, f_z = 226 Hz
        let q = q_gas_vacuum(&scn_1mm(), 1e-5, 4.0, 226.0).unwrap();
        assert_relative_eq!(q, 1.129e10, max_relative = 0.01);
    }

    #[test]
    fn gas_vacuum_scalings() {
        let scn = scn_1mm();
        let q1 = q_gas_vacuum(&scn, 1e-5, 4.0, 226.0).unwrap();
        let q2 = q_gas_vacuum(&scn, 1e-6, 4.0, 226.0).unwrap();
        assert_relative_eq!(q2, 10.0 * q1, max_relative = 1e-12);
        let mut big = scn.clone();
        big.geometry.a *= 2.0;
        let q3 = q_gas_vacuum(&big, 1e-5, 4.0, 226.0).unwrap();
        assert_relative_eq!(q3, 2.0 * q1, max_relative = 1e-12);
    }

    #[test]
    fn gas_squeezed_reference_value() {
        // 2a = 1 mm, r = 1.4a, f_y = 1.7·226 Hz
        let q = q_gas_squeezed(&scn_1mm(), 1e-5, 4.0, 1.7 * 226.0).unwrap();
        assert_relative_eq!(q, 1.056e11, max_relative = 0.01);
    }

    #[test]
    fn gas_squeezed_chokes_as_gap_closes() {
        let mut scn = scn_1mm();
        let q_design = q_gas_squeezed(&scn, 1e-5, 4.0, 384.0).unwrap();
        scn.geometry.r = scn.geometry.a * 1.0001;
        let q_tight = q_gas_squeezed(&scn, 1e-5, 4.0, 384.0).unwrap();
        assert!(q_tight < 1e-2 * q_design);
    }

    #[test]
    fn mixed_state_scaling() {
        assert_eq!(q_eddy_mixed_state(1e4, 1.0).unwrap(), 1e4);
        let q1 = q_eddy_mixed_state(1e4, 1.5e-3).unwrap();
        let q2 = q_eddy_mixed_state(1e4, 0.75e-3).unwrap();
        assert_relative_eq!(q2, 2.0 * q1, max_relative = 1e-12);
        assert!(q_eddy_mixed_state(1e4, 0.0).is_err());
        assert!(q_eddy_mixed_state(1e4, 1.5).is_err());
    }

    #[test]
    fn combine_budget() {
        let single = combine(&[("gas".into(), 1e9)]).unwrap();
        assert_relative_eq!(single.q_total, 1e9, max_relative = 1e-14);
        let pair = combine(&[("a".into(), 2e8), ("b".into(), 2e8)]).unwrap();
        assert_relative_eq!(pair.q_total, 1e8, max_relative = 1e-12);
        let wide = combine(&[("a".into(), 1e8), ("b".into(), 1e12)]).unwrap();
        assert_relative_eq!(wide.q_total, 1e8, max_relative = 1e-4);
        assert!(combine(&[]).is_err());
        assert!(combine(&[("bad".into(), -1.0)]).is_err());
    }

    #[test]
    fn insulator_is_absent_mechanism() {
        let scn = scn_1mm();
        let body = ConductorBody {
            label: "glass".into(),
            standoff: 1e-4,
            thickness: 1e-3,
            radius: 1e-2,
            bore_diameter: None,
            sigma: 0.0,
        };
        let rep = q_eddy_conductor(&scn, &body, 226.0, 1e-5, 100).unwrap();
        assert!(rep.q.is_infinite());
    }
}
