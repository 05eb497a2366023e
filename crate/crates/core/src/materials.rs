//! Material property records and constitutive relations.
//!
//! Covers the soft-ferromagnet magnetization model (linear permeability
//! branch with a saturation cutoff), superconductor critical-field curves
//! with operating-regime classification, and the triangular vortex-lattice
//! geometry of the mixed state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fundamental constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Vacuum permeability [T·m/A]
    pub mu0: f64,
    /// Boltzmann constant [J/K]
    pub k_b: f64,
    /// Gas constant [J/(K·mol)]
    pub r_gas: f64,
    /// Avogadro number [1/mol]
    pub n_a: f64,
    /// Magnetic flux quantum [Wb]
    pub phi0: f64,
    /// Gravitational acceleration [m/s²]
    pub g: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            mu0: 1.256_637_062_12e-6,
            k_b: 1.380_649e-23,
            r_gas: 8.314_462_618,
            n_a: 6.022_140_76e23,
            phi0: 2.067_833_848e-15,
            g: 9.806_65,
        }
    }
}

/// Vacuum permeability [T·m/A], for call sites that do not thread a
/// `PhysicalConstants` through.
pub const MU0: f64 = 1.256_637_062_12e-6;

/// Molar mass of air [kg/mol], used by the gas-damping formulas.
pub const MOLAR_MASS_AIR: f64 = 28.966e-3;

#[derive(Debug, Error, PartialEq)]
pub enum MaterialError {
    #[error("flux density must be non-negative, got {0}")]
    NegativeFluxDensity(f64),
    #[error("temperature {t} K exceeds transition temperature {tc} K")]
    AboveTransition { t: f64, tc: f64 },
    #[error("temperature must be non-negative, got {0}")]
    NegativeTemperature(f64),
    #[error("flux density must be positive, got {0}")]
    NonPositiveFluxDensity(f64),
    #[error("normal fraction {0} >= 1: vortex cores overlap, lattice model invalid")]
    VortexModelBreakdown(f64),
    #[error("normal fraction must lie in (0, 1], got {0}")]
    NormalFractionOutOfRange(f64),
}

/// Soft-ferromagnet properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerromagnetMaterial {
    pub name: String,
    /// Density [kg/m³]
    pub rho: f64,
    /// Low-frequency relative permeability
    pub mu_r: f64,
    /// Saturation magnetization [A/m]
    pub m_sat: f64,
    /// Internal-loss Q constant, when known
    #[serde(default)]
    pub magnon_q_floor: Option<f64>,
}

impl FerromagnetMaterial {
    /// Yttrium iron garnet.
    pub fn yig() -> Self {
        Self {
            name: "YIG".into(),
            rho: 5172.0,
            mu_r: 32.0,
            m_sat: 1.96e5,
            magnon_q_floor: Some(1.0e4),
        }
    }

    /// Flux density at which the linear branch meets saturation [T].
    pub fn b_cross(&self) -> f64 {
        MU0 * self.mu_r * self.m_sat / (self.mu_r - 1.0)
    }

    /// Sphere mass for radius `a` [kg].
    pub fn sphere_mass(&self, a: f64) -> f64 {
        self.rho * sphere_volume(a)
    }
}

/// Volume of a sphere of radius `a` [m³].
pub fn sphere_volume(a: f64) -> f64 {
    4.0 / 3.0 * std::f64::consts::PI * a.powi(3)
}

/// Superconductor properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperconductorMaterial {
    pub name: String,
    /// Transition temperature [K]
    pub tc: f64,
    /// Lower critical field at 0 K [T]
    pub hc1_0: f64,
    /// Vortex-solid upper boundary at 0 K [T]
    pub hvs_0: f64,
    /// London penetration depth at 0 K [m]
    pub lambda_l0: f64,
    /// Coherence length [m]
    pub xi: f64,
    /// Normal-state conductivity [S/m]
    pub sigma_n: f64,
    /// Whether vortex pinning is strong enough to use the vortex-solid phase
    pub hard_pinning: bool,
}

impl SuperconductorMaterial {
    /// High-purity niobium. Weak pinning: the mixed state is not usable.
    pub fn nb() -> Self {
        Self {
            name: "Nb".into(),
            tc: 9.25,
            hc1_0: 0.18,
            hvs_0: 0.45,
            lambda_l0: 39e-9,
            xi: 38e-9,
            sigma_n: 2.0e9,
            hard_pinning: false,
        }
    }

    /// YBCO with the c axis along z. Strong pinning.
    pub fn ybco() -> Self {
        Self {
            name: "YBCO".into(),
            tc: 92.0,
            hc1_0: 0.11,
            hvs_0: 150.0,
            lambda_l0: 100e-9,
            xi: 1e-9,
            sigma_n: 2.0e4,
            hard_pinning: true,
        }
    }
}

/// Magnetization of a soft ferromagnet at local flux density `b_local` [T].
///
/// Linear branch M = B(μr−1)/(μ0 μr) below the crossover field, clamped to
/// M_sat above it. The crossover is chosen so the branches are continuous.
pub fn magnetization(material: &FerromagnetMaterial, b_local: f64) -> Result<f64, MaterialError> {
    if b_local < 0.0 {
        return Err(MaterialError::NegativeFluxDensity(b_local));
    }
    let linear = b_local * (material.mu_r - 1.0) / (MU0 * material.mu_r);
    Ok(linear.min(material.m_sat))
}

/// Which critical-field curve to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalField {
    Hc1,
    Hvs,
}

/// Critical field at temperature `t` using the parabolic law
/// H(T) = H(0)·(1 − (T/Tc)^p) with the default exponent p = 2.
pub fn critical_field(
    material: &SuperconductorMaterial,
    which: CriticalField,
    t: f64,
) -> Result<f64, MaterialError> {
    critical_field_with_exponent(material, which, t, 2.0)
}

/// Same as [`critical_field`] with a configurable exponent.
pub fn critical_field_with_exponent(
    material: &SuperconductorMaterial,
    which: CriticalField,
    t: f64,
    p: f64,
) -> Result<f64, MaterialError> {
    if t < 0.0 {
        return Err(MaterialError::NegativeTemperature(t));
    }
    if t > material.tc {
        return Err(MaterialError::AboveTransition { t, tc: material.tc });
    }
    let h0 = match which {
        CriticalField::Hc1 => material.hc1_0,
        CriticalField::Hvs => material.hvs_0,
    };
    Ok(h0 * (1.0 - (t / material.tc).powf(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeKind {
    Meissner,
    VortexSolid,
    VortexLiquid,
    Normal,
}

/// Superconductor operating point classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatingRegime {
    pub kind: RegimeKind,
    /// Usable for low-loss levitation: Meissner always, vortex solid only
    /// with hard pinning.
    pub usable: bool,
}

/// Classify the operating regime at field `b` [T] and temperature `t` [K].
pub fn classify_regime(material: &SuperconductorMaterial, b: f64, t: f64) -> OperatingRegime {
    assert!(b >= 0.0, "field must be non-negative");
    assert!(t >= 0.0, "temperature must be non-negative");
    if t >= material.tc {
        return OperatingRegime {
            kind: RegimeKind::Normal,
            usable: false,
        };
    }
    // t < tc here, so the parabolic law cannot fail.
    let hc1 = critical_field(material, CriticalField::Hc1, t).unwrap();
    let hvs = critical_field(material, CriticalField::Hvs, t).unwrap();
    if b < hc1 {
        OperatingRegime {
            kind: RegimeKind::Meissner,
            usable: true,
        }
    } else if b < hvs {
        OperatingRegime {
            kind: RegimeKind::VortexSolid,
            usable: material.hard_pinning,
        }
    } else {
        OperatingRegime {
            kind: RegimeKind::VortexLiquid,
            usable: false,
        }
    }
}

/// Triangular vortex-lattice geometry of the mixed state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VortexLattice {
    /// Lattice constant [m]
    pub lattice_constant: f64,
    /// Volumetric fraction of normal (vortex-core) material
    pub normal_fraction: f64,
}

/// Vortex lattice constant l_v = 1.075·sqrt(Φ0/B) and normal fraction
/// ρ_n = 2π ξ² / (√3 l_v²).
pub fn vortex_lattice(
    material: &SuperconductorMaterial,
    b: f64,
) -> Result<VortexLattice, MaterialError> {
    if b <= 0.0 {
        return Err(MaterialError::NonPositiveFluxDensity(b));
    }
    let phi0 = PhysicalConstants::default().phi0;
    let lattice_constant = 1.075 * (phi0 / b).sqrt();
    let normal_fraction =
        2.0 * std::f64::consts::PI * material.xi.powi(2) / (3.0_f64.sqrt() * lattice_constant.powi(2));
    if normal_fraction >= 1.0 {
        return Err(MaterialError::VortexModelBreakdown(normal_fraction));
    }
    Ok(VortexLattice {
        lattice_constant,
        normal_fraction,
    })
}
