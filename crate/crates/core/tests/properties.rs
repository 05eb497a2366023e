//! Property suites for the closed-form layers (no field solves).

use proptest::prelude::*;

use maglev::cli_app::apply_param;
use maglev::dissipation::{combine, q_eddy_mixed_state, q_gas_squeezed, q_gas_vacuum};
use maglev::forces::{image_dipole_force, single_wall_image_force, DipoleModel};
use maglev::materials::{magnetization, FerromagnetMaterial};
use maglev::noise::{magnetic_force_fluctuation, thermal_force_density};
use maglev::scenario::Scenario;
use maglev::trap_analysis::fit_quadratic;

proptest! {
    /// Image-dipole restoring force between parallel walls is odd in the
    /// displacement.
    #[test]
    fn image_force_odd(m in 1e-8f64..1e-2, h in 1e-4f64..1e-2, frac in 1e-4f64..0.9) {
        let model = DipoleModel::new(m, [0.0, 0.0, 1.0]).unwrap();
        let dr = frac * h;
        let f_pos = image_dipole_force(&model, h, dr).unwrap();
        let f_neg = image_dipole_force(&model, h, -dr).unwrap();
        prop_assert!((f_pos + f_neg).abs() <= 1e-12 * f_pos.abs().max(1e-300));
    }

    /// Single-wall image attraction falls off as the fourth power of the
    /// distance.
    #[test]
    fn single_wall_quartic_falloff(m in 1e-8f64..1e-2, h in 1e-4f64..1e-2) {
        let model = DipoleModel::new(m, [0.0, 0.0, 1.0]).unwrap();
        let f1 = single_wall_image_force(&model, h);
        let f2 = single_wall_image_force(&model, 2.0 * h);
        prop_assert!((f1 / f2 - 16.0).abs() < 1e-9);
    }

    /// Reciprocally combined Q never exceeds its smallest entry.
    #[test]
    fn combined_q_below_min(qs in proptest::collection::vec(1e2f64..1e12, 1..6)) {
        let entries: Vec<(String, f64)> =
            qs.iter().enumerate().map(|(i, &q)| (format!("m{i}"), q)).collect();
        let budget = combine(&entries).unwrap();
        let min = qs.iter().cloned().fold(f64::MAX, f64::min);
        prop_assert!(budget.q_total <= min * (1.0 + 1e-12));
    }

    /// Mixed-state Q is exactly linear in 1/rho_n.
    #[test]
    fn mixed_state_linear(q in 1e2f64..1e10, rho in 1e-6f64..1.0) {
        let q1 = q_eddy_mixed_state(q, rho).unwrap();
        let q2 = q_eddy_mixed_state(q, rho / 2.0).unwrap();
        prop_assert!((q2 / q1 - 2.0).abs() < 1e-12);
    }

    /// Gas-limited Q values scale as 1/P at fixed everything else.
    #[test]
    fn gas_q_inverse_pressure(p in 1e-8f64..1e-2, f in 10.0f64..1e4) {
        let scn = Scenario::design_point(0.25e-3);
        let r1 = q_gas_vacuum(&scn, p, 4.0, f).unwrap();
        let r2 = q_gas_vacuum(&scn, 2.0 * p, 4.0, f).unwrap();
        prop_assert!((r1 / r2 - 2.0).abs() < 1e-12);
        let s1 = q_gas_squeezed(&scn, p, 4.0, f).unwrap();
        let s2 = q_gas_squeezed(&scn, 2.0 * p, 4.0, f).unwrap();
        prop_assert!((s1 / s2 - 2.0).abs() < 1e-12);
    }

    /// Thermal force noise scales as sqrt(T) and 1/sqrt(Q).
    #[test]
    fn thermal_density_scalings(t in 0.1f64..300.0, q in 1e2f64..1e12) {
        let m = 1e-7;
        let omega = 2.0 * std::f64::consts::PI * 200.0;
        let base = thermal_force_density(m, omega, t, q).unwrap();
        let hot = thermal_force_density(m, omega, 4.0 * t, q).unwrap();
        prop_assert!((hot / base - 2.0).abs() < 1e-12);
        let damped = thermal_force_density(m, omega, t, q / 4.0).unwrap();
        prop_assert!((damped / base - 2.0).abs() < 1e-12);
    }

    /// Magnetic force fluctuation is linear in the field-noise level, so
    /// lowering dB/B can never turn a feasible budget infeasible.
    #[test]
    fn field_noise_monotone(level in 1e-14f64..1e-4, f_eq in 1e-9f64..1e-2) {
        let (df_hi, _) = magnetic_force_fluctuation(f_eq, level).unwrap();
        let (df_lo, _) = magnetic_force_fluctuation(f_eq, level / 10.0).unwrap();
        prop_assert!(df_lo < df_hi);
        prop_assert!((df_hi / df_lo - 10.0).abs() < 1e-12);
    }

    /// The quadratic fit recovers exact polynomial coefficients.
    #[test]
    fn quadratic_fit_exact(c0 in -1.0f64..1.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
        let xs: Vec<f64> = (-5..=5).map(|i| i as f64 * 0.2).collect();
        let us: Vec<f64> = xs.iter().map(|x| c0 + c1 * x + c2 * x * x).collect();
        let (b1, b2, rms) = fit_quadratic(&xs, &us);
        prop_assert!((b1 - c1).abs() < 1e-9);
        prop_assert!((b2 - c2).abs() < 1e-9);
        prop_assert!(rms < 1e-9);
    }

    /// Sweep substitution touches exactly the named field.
    #[test]
    fn apply_param_is_local(v in 1e-3f64..1.0) {
        let scn = Scenario::design_point(0.25e-3);
        let raw = toml::to_string(&scn).unwrap();
        let swept = apply_param(&raw, "b_max_target", v).unwrap();
        prop_assert_eq!(swept.b_max_target, v);
        prop_assert_eq!(swept.geometry, scn.geometry);
        prop_assert_eq!(swept.grid, scn.grid);
        prop_assert_eq!(swept.solver, scn.solver);
    }
}

/// Magnetization is continuous at the saturation crossover field.
#[test]
fn magnetization_continuous_at_crossover() {
    let yig = FerromagnetMaterial::yig();
    let b_cross = yig.b_cross();
    let below = magnetization(&yig, b_cross * (1.0 - 1e-12)).unwrap();
    let above = magnetization(&yig, b_cross * (1.0 + 1e-12)).unwrap();
    assert!((below - above).abs() <= 1e-10 * yig.m_sat);
    assert!((magnetization(&yig, b_cross).unwrap() - yig.m_sat).abs() <= 1e-9 * yig.m_sat);
}
