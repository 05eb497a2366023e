//! Passive magnetic levitation of soft ferromagnetic spheres in slit
//! superconducting disks: materials, field solver, force and trap analysis,
//! dissipation and force-noise budgets.

pub mod cli_app;
pub mod dissipation;
pub mod forces;
pub mod geometry;
pub mod magnetostatics;
pub mod materials;
pub mod noise;
pub mod scenario;
pub mod trap_analysis;
