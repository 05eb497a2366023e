//! Trap geometry description, validation, and the London effective-radius
//! correction.
//!
//! The trap is a superconducting disk of height `h` with a central hole of
//! radius `r` and a radial slit of angular width `theta` opening along +x.
//! The levitated sphere of radius `a` sits at the hole center. All lengths
//! are meters, angles radians.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapGeometry {
    /// Sphere radius [m]
    pub a: f64,
    /// Hole radius [m]
    pub r: f64,
    /// Disk height [m]
    pub h: f64,
    /// Slit angle [rad]
    pub theta: f64,
    /// Disk outer radius [m]
    pub disk_outer_radius: f64,
    /// Jig plate distance below the superconductor surface [m]
    #[serde(default)]
    pub d_pl: Option<f64>,
    /// Jig plate thickness [m]
    #[serde(default)]
    pub plate_thickness: Option<f64>,
    /// Coil bore diameter [m]
    pub d_coil: f64,
    /// Coil length [m]
    pub coil_length: f64,
}

impl TrapGeometry {
    /// The stable-levitation optimum: r = 1.4a, h = 4a, theta = 10°.
    ///
    /// The disk outer radius defaults to 10·r and the coil bore to 2.5×
    /// the disk diameter; both are overridable.
    pub fn optimal(a: f64) -> Self {
        let r = 1.4 * a;
        let disk_outer_radius = 10.0 * r;
        Self {
            a,
            r,
            h: 4.0 * a,
            theta: 10.0_f64.to_radians(),
            disk_outer_radius,
            d_pl: None,
            plate_thickness: None,
            d_coil: 5.0 * disk_outer_radius,
            coil_length: 10.0 * disk_outer_radius,
        }
    }
}

/// Structured-grid specification for the field solver.
///
/// The domain is the box [-half_extent, +half_extent] per axis, centered on
/// the hole center. An optional refinement block concentrates cells in a
/// central sub-box (where the sphere and hole live) with geometrically
/// stretched cells outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Domain half-extent per axis [m]
    pub half_extent: [f64; 3],
    /// Cells per axis (even, >= 32)
    pub cells: [usize; 3],
    #[serde(default)]
    pub refinement: Option<Refinement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    /// Half-extent of the finely resolved central region per axis [m]
    pub region_half_extent: [f64; 3],
    /// Cell-size reduction factor inside the region, relative to a uniform grid
    pub factor: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GridError {
    #[error("cells per axis must be even and >= 32, got {0}")]
    BadCellCount(usize),
    #[error("domain half-extent must be positive, got {0}")]
    BadExtent(f64),
    #[error("refinement region must fit inside the domain")]
    RefinementTooLarge,
    #[error("refinement factor must be >= 1, got {0}")]
    BadRefinementFactor(f64),
}

impl GridSpec {
    /// Uniform grid without refinement.
    pub fn uniform(half_extent: f64, cells: usize) -> Self {
        Self {
            half_extent: [half_extent; 3],
            cells: [cells; 3],
            refinement: None,
        }
    }

    /// Grid spec scaled to a new per-axis cell count (used by convergence
    /// ladders). Counts are rounded up to even.
    pub fn with_cells(&self, cells: [usize; 3]) -> Self {
        let mut s = self.clone();
        s.cells = cells.map(|c| c + c % 2);
        s
    }

    /// Realize the per-axis cell edge coordinates.
    ///
    /// Edges are symmetric about 0. With refinement, the central region is
    /// meshed uniformly at the fine spacing and the remainder with a
    /// geometric stretch solved so the edges land exactly on the boundary.
    pub fn axes(&self) -> Result<[Vec<f64>; 3], GridError> {
        let mut out: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for ax in 0..3 {
            let n = self.cells[ax];
            let h = self.half_extent[ax];
            if n < 32 || n % 2 != 0 {
                return Err(GridError::BadCellCount(n));
            }
            if !(h > 0.0) {
                return Err(GridError::BadExtent(h));
            }
            out[ax] = match &self.refinement {
                None => uniform_edges(h, n),
                Some(r) => {
                    if !(r.factor >= 1.0) {
                        return Err(GridError::BadRefinementFactor(r.factor));
                    }
                    let fh = r.region_half_extent[ax];
                    if !(fh > 0.0 && fh < h) {
                        return Err(GridError::RefinementTooLarge);
                    }
                    graded_edges(h, n, fh, r.factor)?
                }
            };
        }
        Ok(out)
    }
}

fn uniform_edges(h: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| -h + 2.0 * h * i as f64 / n as f64).collect()
}

/// Symmetric graded axis: uniform fine spacing in [-fh, fh], geometric
/// stretch with ratio g > 1 outside, with g solved so the outermost edge is
/// exactly +-h.
fn graded_edges(h: f64, n: usize, fh: f64, factor: f64) -> Result<Vec<f64>, GridError> {
    let du = 2.0 * h / n as f64;
    let dx_fine_target = du / factor;
    let mut n_fine = ((2.0 * fh / dx_fine_target).round() as usize).max(2);
    n_fine += n_fine % 2;
    // keep at least 4 stretched cells per side
    if n_fine > n - 8 {
        n_fine = n - 8;
    }
    let dx_fine = 2.0 * fh / n_fine as f64;
    let n_side = (n - n_fine) / 2;
    let outer = h - fh;
    let s_needed = outer / dx_fine;

    let mut half = Vec::with_capacity(n / 2 + 1);
    half.push(0.0);
    for i in 1..=(n_fine / 2) {
        half.push(dx_fine * i as f64);
    }
    if s_needed <= n_side as f64 {
        // fine spacing already covers the outside: uniform remainder
        let dx_out = outer / n_side as f64;
        for i in 1..=n_side {
            half.push(fh + dx_out * i as f64);
        }
    } else {
        // solve g: dx_fine * (g + g^2 + ... + g^n_side) = outer
        let target = s_needed;
        let sum = |g: f64| -> f64 {
            if (g - 1.0).abs() < 1e-14 {
                n_side as f64
            } else {
                g * (g.powi(n_side as i32) - 1.0) / (g - 1.0)
            }
        };
        let (mut lo, mut hi) = (1.0_f64, 10.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sum(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let g = 0.5 * (lo + hi);
        let mut x = fh;
        let mut dx = dx_fine;
        for i in 1..=n_side {
            dx *= g;
            x += dx;
            // pin the last edge exactly
            half.push(if i == n_side { h } else { x });
        }
    }
    let mut edges: Vec<f64> = half.iter().rev().map(|v| -v).collect();
    edges.extend_from_slice(&half[1..]);
    debug_assert_eq!(edges.len(), n + 1);
    Ok(edges)
}

/// One finding from [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometryReportEntry {
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    /// Hard invariant broken; downstream solves are refused.
    Violation,
    /// Outside the band where a usable trap is expected.
    Warning,
}

/// Check geometry invariants and design-band heuristics.
///
/// Violations are hard invariant failures; warnings flag geometries outside
/// the r/a, h/a, theta bands where a three-axis trap is expected. The report
/// order is deterministic.
pub fn validate(geom: &TrapGeometry) -> Vec<GeometryReportEntry> {
    let mut out = Vec::new();
    let viol = |msg: &str| GeometryReportEntry {
        severity: Severity::Violation,
        message: msg.to_string(),
    };
    let warn = |msg: &str| GeometryReportEntry {
        severity: Severity::Warning,
        message: msg.to_string(),
    };

    if !(geom.a > 0.0) {
        out.push(viol("sphere radius must be positive"));
    }
    if !(geom.r > geom.a) {
        out.push(viol("hole must exceed sphere: require r > a"));
    }
    if !(geom.h > 0.0) {
        out.push(viol("disk height must be positive"));
    }
    if !(geom.theta > 0.0 && geom.theta < std::f64::consts::PI) {
        out.push(viol("slit angle must lie in (0, pi)"));
    }
    if !(geom.disk_outer_radius > geom.r) {
        out.push(viol("disk outer radius must exceed hole radius"));
    }
    if !(geom.d_coil > 2.0 * geom.disk_outer_radius) {
        out.push(viol("coil bore must exceed the disk diameter"));
    }

    if geom.a > 0.0 {
        let ra = geom.r / geom.a;
        let ha = geom.h / geom.a;
        if !(1.1..=3.0).contains(&ra) {
            out.push(warn(&format!(
                "r/a = {ra:.3} outside the trapping band [1.1, 3.0]"
            )));
        }
        if !(2.0..=10.0).contains(&ha) {
            out.push(warn(&format!(
                "h/a = {ha:.3} outside the trapping band [2, 10]"
            )));
        }
    }
    if geom.theta >= std::f64::consts::FRAC_PI_2 {
        out.push(warn("no slit-direction trapping expected for theta >= pi/2"));
    }
    out
}

/// Result of the London penetration correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRadius {
    /// Corrected hole radius r + λ_L [m]
    pub r_eff: f64,
    /// True when the corrected r/a leaves the convex-potential band and the
    /// horizontal trap is likely lost.
    pub trap_likely_lost: bool,
}

/// Ratio r_eff/a beyond which the horizontal potential flattens out.
pub const EFFECTIVE_RADIUS_FLAG_RATIO: f64 = 2.2;

/// London-penetration correction: the field soaks ~λ_L into the hole wall,
/// acting like a hole of radius r + λ_L.
pub fn effective_radius(
    geom: &TrapGeometry,
    sc: &crate::materials::SuperconductorMaterial,
) -> EffectiveRadius {
    assert!(sc.lambda_l0 >= 0.0, "penetration depth must be non-negative");
    let r_eff = geom.r + sc.lambda_l0;
    EffectiveRadius {
        r_eff,
        trap_likely_lost: r_eff / geom.a > EFFECTIVE_RADIUS_FLAG_RATIO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::SuperconductorMaterial;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn optimum_passes_clean() {
        let g = TrapGeometry::optimal(0.25e-3);
        assert!(validate(&g).is_empty());
    }

    #[test]
    fn degenerate_gap_is_violation() {
        let mut g = TrapGeometry::optimal(1e-3);
        g.r = g.a;
        let report = validate(&g);
        assert!(report
            .iter()
            .any(|e| e.severity == Severity::Violation && e.message.contains("hole must exceed")));
    }

    #[test]
    fn wide_slit_is_warning() {
        let mut g = TrapGeometry::optimal(1e-3);
        g.theta = 100.0_f64.to_radians();
        let report = validate(&g);
        assert!(report.iter().all(|e| e.severity == Severity::Warning));
        assert!(report
            .iter()
            .any(|e| e.message.contains("no slit-direction trapping")));
    }

    #[test]
    fn validate_is_order_stable() {
        let mut g = TrapGeometry::optimal(1e-3);
        g.r = 0.5 * g.a;
        g.theta = 2.0;
        let a = validate(&g);
        let b = validate(&g);
        assert_eq!(a, b);
    }

    #[test]
    fn effective_radius_identity_without_penetration() {
        let g = TrapGeometry::optimal(1e-3);
        let mut sc = SuperconductorMaterial::ybco();
        sc.lambda_l0 = 0.0;
        let e = effective_radius(&g, &sc);
        assert_eq!(e.r_eff, g.r);
        assert!(!e.trap_likely_lost);
    }

    #[test]
    fn micron_sphere_unflagged() {
        // 2a = 1 µm, r = 1.4a, YBCO: r_eff = 1.6a
        let g = TrapGeometry::optimal(0.5e-6);
        let e = effective_radius(&g, &SuperconductorMaterial::ybco());
        assert_relative_eq!(e.r_eff / g.a, 1.6, max_relative = 1e-12);
        assert!(!e.trap_likely_lost);
    }

    #[test]
    fn hundred_nm_sphere_flagged() {
        // 2a = 100 nm, r = 1.4a, YBCO: lambda_L dwarfs the hole, trap lost
        let g = TrapGeometry::optimal(50e-9);
        let e = effective_radius(&g, &SuperconductorMaterial::ybco());
        assert_relative_eq!(e.r_eff / g.a, 3.4, max_relative = 1e-12);
        assert!(e.trap_likely_lost);
    }

    proptest! {
        #[test]
        fn effective_radius_monotone_in_lambda(l1 in 0.0f64..1e-6, dl in 1e-12f64..1e-6) {
            let g = TrapGeometry::optimal(1e-6);
            let mut sc = SuperconductorMaterial::ybco();
            sc.lambda_l0 = l1;
            let e1 = effective_radius(&g, &sc);
            sc.lambda_l0 = l1 + dl;
            let e2 = effective_radius(&g, &sc);
            prop_assert!(e2.r_eff > e1.r_eff);
        }
    }
}
