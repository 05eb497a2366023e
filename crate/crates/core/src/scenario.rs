//! Scenario: the full description of one levitation setup, shared by the
//! analysis modules and the CLI.

use serde::{Deserialize, Serialize};

use crate::dissipation::ConductorBody;
use crate::geometry::{GridSpec, TrapGeometry};
use crate::magnetostatics::SolverControls;
use crate::materials::{FerromagnetMaterial, SuperconductorMaterial};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub ferromagnet: FerromagnetMaterial,
    pub superconductor: SuperconductorMaterial,
    pub geometry: TrapGeometry,
    /// Target central field B_max in the hole [T]; the applied uniform field
    /// is calibrated from the bare-disk focusing ratio
    pub b_max_target: f64,
    /// Bath temperature [K]
    pub temperature: f64,
    /// Chamber pressure [Pa]
    pub pressure: f64,
    pub grid: GridSpec,
    pub solver: SolverControls,
    /// Relative field-fluctuation levels δB/B to budget against
    pub noise_levels: Vec<f64>,
    /// Nearby normal conductors (jig plate, coil bobbin, ...)
    pub conductors: Vec<ConductorBody>,
}

impl Scenario {
    /// The headline design point for a sphere of radius `a`.
    pub fn design_point(a: f64) -> Self {
        let geometry = TrapGeometry::optimal(a);
        let grid = GridSpec {
            half_extent: [1.5 * geometry.disk_outer_radius; 3],
            cells: [96; 3],
            refinement: Some(crate::geometry::Refinement {
                region_half_extent: [2.0 * a; 3],
                factor: 12.0,
            }),
        };
        Self {
            ferromagnet: FerromagnetMaterial::yig(),
            superconductor: SuperconductorMaterial::nb(),
            geometry,
            b_max_target: 0.1,
            temperature: 4.0,
            pressure: 1e-5,
            grid,
            solver: SolverControls::default(),
            noise_levels: vec![1e-6, 1e-10, 1e-13],
            conductors: Vec::new(),
        }
    }

    /// Sphere mass [kg].
    pub fn sphere_mass(&self) -> f64 {
        self.ferromagnet.sphere_mass(self.geometry.a)
    }
}
