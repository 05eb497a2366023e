use maglev::geometry::{GridSpec, Refinement, TrapGeometry};
use maglev::magnetostatics::{sample_b, solve, SolverControls};
use maglev::materials::FerromagnetMaterial;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "hole".into());
    let a = 0.25e-3;
    let fm = FerromagnetMaterial::yig();
    match which.as_str() {
        "sphere" => {
            let mut geom = TrapGeometry::optimal(a);
            geom.r = 4.0 * a;
            let controls = SolverControls {
                include_superconductor: false,
                ..SolverControls::default()
            };
            for (n, f) in [(48usize, 4.0f64), (64, 4.0), (48, 8.0), (64, 8.0)] {
                let grid = GridSpec {
                    half_extent: [12.0 * a; 3],
                    cells: [n; 3],
                    refinement: Some(Refinement {
                        region_half_extent: [2.0 * a; 3],
                        factor: f,
                    }),
                };
                let t0 = std::time::Instant::now();
                let sol = solve(&geom, &fm, Some([0.0; 3]), 0.05, &controls, &grid).unwrap();
                let b = sample_b(&sol, &[[0.0, 0.0, 0.0]]).unwrap()[0];
                println!(
                    "n={n} f={f}: Bz={:.6} (want 0.141176) iters={} res={:.2e} t={:?}",
                    b[2],
                    sol.iterations,
                    sol.residual,
                    t0.elapsed()
                );
            }
        }
        "hole" => {
            let geom = TrapGeometry::optimal(a);
            let controls = SolverControls::default();
            for (n, f) in [(64usize, 4.0f64), (64, 8.0), (96, 8.0)] {
                let grid = GridSpec {
                    half_extent: [4.0 * geom.disk_outer_radius; 3],
                    cells: [n; 3],
                    refinement: Some(Refinement {
                        region_half_extent: [2.0 * geom.r, 2.0 * geom.r, 1.5 * geom.h],
                        factor: f,
                    }),
                };
                let t0 = std::time::Instant::now();
                let sol = match solve(&geom, &fm, None, 0.025, &controls, &grid) {
                    Ok(s) => s,
                    Err(e) => {
                        println!("n={n} f={f}: {e}");
                        continue;
                    }
                };
                let bc = sample_b(&sol, &[[0.0, 0.0, 0.0]]).unwrap()[0][2];
                let bh = sample_b(&sol, &[[0.0, 0.0, 0.5 * geom.h]]).unwrap()[0][2];
                let bn = sol.max_normal_b_on_superconductor();
                println!(
                    "n={n} f={f}: Bc={:.5} ratio={:.2} Bz(h/2)={:.5} Bn_max={:.3e} bound={:.3e} iters={} t={:?}",
                    bc,
                    bc / 0.025,
                    bh,
                    bn,
                    1e-3 * bc,
                    sol.iterations,
                    t0.elapsed()
                );
            }
        }
        "force" => {
            use maglev::forces::{force_dipole_gradient, force_stress_tensor};
            use maglev::materials::{magnetization, sphere_volume};
            let geom = TrapGeometry::optimal(a);
            let b_ext = 0.025;
            let controls = SolverControls::default();
            for (n, f) in [(96usize, 12.0f64)] {
                let grid = GridSpec {
                    half_extent: [2.5 * geom.disk_outer_radius; 3],
                    cells: [n; 3],
                    refinement: Some(Refinement {
                        region_half_extent: [2.0 * a; 3],
                        factor: f,
                    }),
                };
                let t0 = std::time::Instant::now();
                let bare = match solve(&geom, &fm, None, b_ext, &controls, &grid) {
                    Ok(s) => s,
                    Err(e) => {
                        println!("n={n} f={f}: bare {e}");
                        continue;
                    }
                };
                let z = 0.10 * geom.h;
                let sol = match solve(&geom, &fm, Some([0.0, 0.0, z]), b_ext, &controls, &grid)
                {
                    Ok(s) => s,
                    Err(e) => {
                        println!("n={n} f={f}: sphere {e}");
                        continue;
                    }
                };
                let fz: Vec<f64> = [8usize, 16, 24, 32]
                    .iter()
                    .map(|&o| force_stress_tensor(&sol, [0.0, 0.0, z], a, o).unwrap().f[2])
                    .collect();
                // sphere-averaged gradient of the bare field over |dz| <= a
                let npt = 21;
                let pts: Vec<[f64; 3]> = (0..npt)
                    .map(|i| [0.0, 0.0, z - a + 2.0 * a * i as f64 / (npt - 1) as f64])
                    .collect();
                let prof = sample_b(&bare, &pts).unwrap();
                let grad = (prof[11][2] - prof[9][2]) / (0.2 * a);
                let b_point = sample_b(&sol, &[[0.0, 0.0, z]]).unwrap()[0][2];
                let b_avg = sol.sphere_average_b([0.0, 0.0, z], a)[2];
                let m = magnetization(&fm, b_point).unwrap();
                let fd = force_dipole_gradient(m, sphere_volume(a), grad);
                println!("b_point={b_point:.4} b_avg={b_avg:.4} grad={grad:.2}");
                println!(
                    "n={n} f={f}: F8={:.4e} F16={:.4e} F24={:.4e} F32={:.4e} Fdip={:.4e} iters={} t={:?}",
                    fz[0], fz[1], fz[2], fz[3], fd, sol.iterations, t0.elapsed()
                );
            }
        }
        "shell" => {
            use maglev::forces::force_stress_tensor_at_radius;
            let geom = TrapGeometry::optimal(a);
            let b_ext = 0.025;
            let controls = SolverControls::default();
            let grid = GridSpec {
                half_extent: [2.5 * geom.disk_outer_radius; 3],
                cells: [96; 3],
                refinement: Some(Refinement {
                    region_half_extent: [2.0 * a; 3],
                    factor: 12.0,
                }),
            };
            let z = 0.10 * geom.h;
            let sol = solve(&geom, &fm, Some([0.0, 0.0, z]), b_ext, &controls, &grid).unwrap();
            for rq in [1.08, 1.12, 1.16, 1.20, 1.25, 1.30, 1.35] {
                for o in [16usize, 24] {
                    let f = force_stress_tensor_at_radius(&sol, [0.0, 0.0, z], rq * a, o)
                        .unwrap()
                        .f[2];
                    print!("rq={rq} o={o}: Fz={f:.4e}  ");
                }
                println!();
            }
        }
        "eddy" => {
            use maglev::dissipation::{q_eddy_conductor, ConductorBody};
            use maglev::scenario::Scenario;
            let scn = Scenario::design_point(0.5e-3);
            for standoff in [0.1e-3, 10e-3] {
                let body = ConductorBody {
                    label: "copper plate".into(),
                    standoff,
                    thickness: 1e-3,
                    radius: 20e-3,
                    bore_diameter: None,
                    sigma: 5.998e8,
                };
                let t0 = std::time::Instant::now();
                let rep = q_eddy_conductor(&scn, &body, 226.0, 5e-5, 100).unwrap();
                println!(
                    "standoff={standoff}: Q={:.3e} dE={:.3e} skin={:.2e} warn={} mesh={:?} t={:?}",
                    rep.q,
                    rep.delta_e,
                    rep.skin_depth,
                    rep.skin_depth_warning,
                    rep.mesh,
                    t0.elapsed()
                );
            }
        }
        "bcurv" => {
            use maglev::trap_analysis::fit_quadratic;
            let geom = TrapGeometry::optimal(a);
            let controls = SolverControls::default();
            let cases: Vec<(&str, f64, usize, [f64; 3], f64)> = vec![
                ("design", 1.5, 96, [2.0 * a, 2.0 * a, 2.0 * a], 12.0),
                ("tall-fine", 1.5, 96, [2.2 * a, 2.2 * a, 3.2 * a], 12.0),
                ("wide-dom", 2.5, 96, [2.0 * a, 2.0 * a, 2.0 * a], 12.0),
                ("coarse", 1.5, 64, [2.0 * a, 2.0 * a, 2.0 * a], 8.0),
            ];
            for (label, he, n, region, f) in cases {
                let grid = GridSpec {
                    half_extent: [he * geom.disk_outer_radius; 3],
                    cells: [n; 3],
                    refinement: Some(Refinement {
                        region_half_extent: region,
                        factor: f,
                    }),
                };
                let t0 = std::time::Instant::now();
                let bare = match solve(&geom, &fm, None, 0.01, &controls, &grid) {
                    Ok(s) => s,
                    Err(e) => {
                        println!("{label}: {e}");
                        continue;
                    }
                };
                let npt = 13;
                let zs: Vec<f64> = (0..npt)
                    .map(|i| -0.3 * a + 0.6 * a * i as f64 / (npt - 1) as f64)
                    .collect();
                let pts: Vec<[f64; 3]> = zs.iter().map(|&z| [0.0, 0.0, z]).collect();
                let prof = sample_b(&bare, &pts).unwrap();
                let bmag: Vec<f64> = prof
                    .iter()
                    .map(|b| (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt())
                    .collect();
                let b0 = bmag[npt / 2];
                let scale = 0.1 / b0;
                let scaled: Vec<f64> = bmag.iter().map(|&b| b * scale).collect();
                let (_, c2, rms) = fit_quadratic(&zs, &scaled);
                let f5 = (fm.m_sat / fm.rho * (2.0 * c2).abs()).sqrt()
                    / (2.0 * std::f64::consts::PI);
                println!(
                    "{label}: focus={:.3} B''={:.4e} rms={rms:.2e} Eq5_f_z={f5:.1} iters={} t={:?}",
                    b0 / 0.01,
                    2.0 * c2,
                    bare.iterations,
                    t0.elapsed()
                );
            }
        }
        "focus" => {
            use maglev::trap_analysis::fit_quadratic;
            let controls = SolverControls::default();
            let mut lnr = Vec::new();
            let mut lnb = Vec::new();
            let scale_h: bool = std::env::args().nth(2).map(|s| s == "h").unwrap_or(false);
            let n_cells: usize = std::env::args()
                .nth(3)
                .and_then(|s| s.parse().ok())
                .unwrap_or(64);
            let factor: f64 = std::env::args()
                .nth(4)
                .and_then(|s| s.parse().ok())
                .unwrap_or(8.0);
            for mult in [1.4f64, 1.8, 2.3, 3.0, 4.0] {
                let mut geom = TrapGeometry::optimal(a);
                geom.r = mult * a;
                if scale_h {
                    geom.h = 10.0 / 3.0 * geom.r;
                }
                let grid = GridSpec {
                    half_extent: [2.0 * geom.disk_outer_radius; 3],
                    cells: [n_cells; 3],
                    refinement: Some(Refinement {
                        region_half_extent: [2.0 * geom.r, 2.0 * geom.r, 1.5 * geom.h],
                        factor,
                    }),
                };
                let t0 = std::time::Instant::now();
                let sol = match solve(&geom, &fm, None, 0.02, &controls, &grid) {
                    Ok(s) => s,
                    Err(e) => {
                        println!("r={mult}a: {e}");
                        continue;
                    }
                };
                let b = sample_b(&sol, &[[0.0; 3]]).unwrap()[0][2];
                println!("r={mult}a: Bc={b:.5} focus={:.3} t={:?}", b / 0.02, t0.elapsed());
                lnr.push((mult * a).ln());
                lnb.push(b.ln());
            }
            // linear fit in log-log via the quadratic helper (ignore c2)
            let (c1, c2, _) = fit_quadratic(&lnr, &lnb);
            println!("exponent(lin)={:.3} quad term={:.3}", c1, c2);
            let n = lnr.len() as f64;
            let mx = lnr.iter().sum::<f64>() / n;
            let my = lnb.iter().sum::<f64>() / n;
            let sxy: f64 = lnr.iter().zip(&lnb).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = lnr.iter().map(|x| (x - mx) * (x - mx)).sum();
            println!("exponent(pure linear)={:.3}", sxy / sxx);
        }
        "dipole" => {
            use maglev::forces::{
                force_stress_tensor_with_shells, gradient_force_term, image_dipole_force,
                DipoleModel,
            };
            use maglev::materials::{magnetization, sphere_volume};
            let r = 1.07e-3;
            let ad = 0.05 * r;
            let mut geom = TrapGeometry::optimal(ad);
            geom.r = r;
            geom.h = 1.0e-3;
            geom.disk_outer_radius = 10.0 * r;
            geom.d_coil = 5.0 * geom.disk_outer_radius;
            geom.coil_length = 10.0 * geom.disk_outer_radius;
            let controls = SolverControls::default();
            let grid = GridSpec {
                half_extent: [1.5 * geom.disk_outer_radius; 3],
                cells: [96; 3],
                refinement: Some(Refinement {
                    region_half_extent: [0.6 * geom.r, 0.6 * geom.r, 0.6 * geom.r],
                    factor: 24.0,
                }),
            };
            let b_ext = 0.02;
            let t0 = std::time::Instant::now();
            let bare = solve(&geom, &fm, None, b_ext, &controls, &grid).unwrap();
            let b0 = sample_b(&bare, &[[0.0; 3]]).unwrap()[0][2];
            println!("Bc={b0:.5} focus={:.3} t={:?}", b0 / b_ext, t0.elapsed());
            let gap = geom.r - ad;
            let mut guess: Option<Vec<f64>> = None;
            for frac in [-0.4f64, -0.2, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8] {
                let x = frac * gap;
                let center = [0.0, x, 0.0];
                let t1 = std::time::Instant::now();
                let sol = match maglev::magnetostatics::solve_with_guess(
                    &geom,
                    &fm,
                    Some(center),
                    b_ext,
                    &controls,
                    &grid,
                    guess.as_deref(),
                ) {
                    Ok(s) => s,
                    Err(e) => {
                        println!("frac={frac}: {e}");
                        continue;
                    }
                };
                let dx = sol.grid.local_spacing(center);
                let clearance = geom.r - x.abs() - 1.5 * dx;
                let hi = (ad + 4.0 * dx).min(clearance);
                let lo = ad + 1.2 * dx;
                if hi <= lo {
                    println!("frac={frac}: no shell room");
                    continue;
                }
                let shells = [lo, 0.5 * (lo + hi), hi];
                let fs = force_stress_tensor_with_shells(&sol, center, &shells, 16).unwrap();
                let b_in = sample_b(&sol, &[center]).unwrap()[0];
                let bmag = (b_in[0] * b_in[0] + b_in[1] * b_in[1] + b_in[2] * b_in[2]).sqrt();
                let m_dp =
                    magnetization(&fm, bmag).unwrap() * sphere_volume(ad);
                let model = DipoleModel::new(m_dp, [0.0, 0.0, 1.0]).unwrap();
                let f_img = image_dipole_force(&model, geom.r, x).unwrap();
                // lateral gradient of |B| in the bare field
                let d = 0.05 * ad;
                let pb = sample_b(&bare, &[[0.0, x - d, 0.0], [0.0, x + d, 0.0]]).unwrap();
                let g = (pb[1].iter().map(|c| c * c).sum::<f64>().sqrt()
                    - pb[0].iter().map(|c| c * c).sum::<f64>().sqrt())
                    / (2.0 * d);
                let f_grad = gradient_force_term(&model, g);
                println!(
                    "frac={frac:+.2}: Fy={:+.4e} img={:+.4e} grad={:+.4e} img+grad={:+.4e} t={:?}",
                    fs.f[1],
                    f_img,
                    f_grad,
                    f_img + f_grad,
                    t1.elapsed()
                );
                guess = Some(sol.potential.clone());
            }
        }
        "dumpcfg" => {
            use maglev::scenario::Scenario;
            let scn = Scenario::design_point(a);
            print!("{}", toml::to_string(&scn).unwrap());
        }
        "slit" => {
            use maglev::scenario::Scenario;
            use maglev::trap_analysis::{calibrate_b_ext, scan_potential, Axis};
            let theta_deg: f64 = std::env::args()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .unwrap_or(135.0);
            let mut scn = Scenario::design_point(a);
            scn.geometry.theta = theta_deg.to_radians();
            let (b_ext, _) = calibrate_b_ext(&scn).unwrap();
            println!("theta={theta_deg} b_ext={b_ext:.5}");
            let offsets: Vec<f64> = (-6..=6).map(|i| 0.18 * i as f64 / 6.0).collect();
            for axis in [Axis::X, Axis::Y] {
                match scan_potential(&scn, axis, &offsets, [0.0; 3], b_ext) {
                    Ok(scan) => {
                        for (o, u) in scan.offsets.iter().zip(&scan.energy) {
                            println!("{:?} {o:+.3} {u:+.6e}", axis);
                        }
                    }
                    Err(e) => println!("{:?}: {e}", axis),
                }
            }
            // bare-field |B| profile along x and y through the hole center
            let bare = solve(
                &scn.geometry,
                &scn.ferromagnet,
                None,
                b_ext,
                &scn.solver,
                &scn.grid,
            )
            .unwrap();
            for (label, dir) in [("x", [1.0, 0.0]), ("y", [0.0, 1.0])] {
                let pts: Vec<[f64; 3]> = (-8..=8)
                    .map(|i| {
                        let s = 0.8 * a * i as f64 / 8.0;
                        [s * dir[0], s * dir[1], 0.0]
                    })
                    .collect();
                let prof = sample_b(&bare, &pts).unwrap();
                for (i, b) in prof.iter().enumerate() {
                    let s = 0.8 * a * (i as f64 - 8.0) / 8.0;
                    let m = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
                    println!("|B|{label} {:+.3} {m:.6}", s / a);
                }
            }
        }
        "curvature" => {
            use maglev::scenario::Scenario;
            use maglev::trap_analysis::{axial_force_at, calibrate_b_ext, fit_quadratic};
            let scn = Scenario::design_point(a);
            let (b_ext, bare) = calibrate_b_ext(&scn).unwrap();
            let scale = b_ext / bare.b_ext;
            // |B|(z) profile near the center, rescaled to the design field
            let npt = 13;
            let zs: Vec<f64> = (0..npt)
                .map(|i| -0.3 * a + 0.6 * a * i as f64 / (npt - 1) as f64)
                .collect();
            let pts: Vec<[f64; 3]> = zs.iter().map(|&z| [0.0, 0.0, z]).collect();
            let prof = sample_b(&bare, &pts).unwrap();
            let bmag: Vec<f64> = prof
                .iter()
                .map(|b| scale * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt())
                .collect();
            for (z, b) in zs.iter().zip(&bmag) {
                println!("z/a={:+.3} |B|={:.6}", z / a, b);
            }
            let (c1, c2, rms) = fit_quadratic(&zs, &bmag);
            let m_sat = fm.m_sat;
            let f5 = (m_sat / fm.rho * (2.0 * c2).abs()).sqrt() / (2.0 * std::f64::consts::PI);
            println!("B'={c1:.3} B''={:.4e} rms={rms:.2e} Eq5_f_z={f5:.1}", 2.0 * c2);
            // direct stiffness from the stress-tensor force stencil
            let z0 = -4.234e-6;
            let dz = 0.05 * a;
            let fm_ = axial_force_at(&scn, b_ext, [0.0, 0.0, z0 - dz]).unwrap();
            let fp = axial_force_at(&scn, b_ext, [0.0, 0.0, z0 + dz]).unwrap();
            let k = -(fp - fm_) / (2.0 * dz);
            let mass = scn.sphere_mass();
            let fz = (k / mass).sqrt() / (2.0 * std::f64::consts::PI);
            println!("stencil k={k:.4} f_z={fz:.1} (F-={fm_:.4e} F+={fp:.4e})");
        }
        "characterize" => {
            use maglev::scenario::Scenario;
            use maglev::trap_analysis::characterize;
            let scn = Scenario::design_point(a);
            let t0 = std::time::Instant::now();
            match characterize(&scn) {
                Ok(ch) => println!(
                    "f=({:.1},{:.1},{:.1})Hz ratios=({:.2},{:.2}) convex={:?} grad={:.2} thr={:.3} \
                     Bmax={:.4} Bext={:.4} zeq={:.3e} lev={} uni={} sat={} t={:?}",
                    ch.f[0],
                    ch.f[1],
                    ch.f[2],
                    ch.f[0] / ch.f[2],
                    ch.f[1] / ch.f[2],
                    ch.convex,
                    ch.mean_gradient,
                    ch.levitation_threshold,
                    ch.b_max,
                    ch.b_ext,
                    ch.equilibrium_z,
                    ch.levitation_ok,
                    ch.uniformity_ok,
                    ch.saturated,
                    t0.elapsed()
                ),
                Err(e) => println!("characterize failed: {e}"),
            }
        }
        _ => eprintln!("unknown probe"),
    }
}
