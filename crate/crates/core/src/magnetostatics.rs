//! Magnetostatic boundary-value solver.
//!
//! Solves div(mu grad phi) = div(source) for the scaled scalar potential phi
//! (B = -mu_r grad phi + mu0 M, so phi carries units of T·m) on a structured
//! rectilinear grid. The uniform external field enters through a linear
//! Dirichlet boundary potential; the superconductor is a near-zero
//! permeability region (flux exclusion); the sphere is a permeable region or,
//! above saturation, a fixed-magnetization source.
//!
//! Finite-volume discretization with harmonic-mean face permeabilities gives
//! a symmetric positive-definite system solved by conjugate gradients with a
//! diagonal incomplete-Cholesky preconditioner. Everything is sequential and
//! deterministic; distinct solves are independent and safe to run from
//! separate threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GridError, GridSpec, Severity, TrapGeometry};
use crate::materials::{FerromagnetMaterial, MU0};

/// Per-cell region tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Region {
    Air = 0,
    Superconductor = 1,
    Ferromagnet = 2,
}

/// Iterative-solver controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverControls {
    /// Relative residual target
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative permeability assigned to superconductor cells
    pub sc_permeability_epsilon: f64,
    /// Subsamples per cell edge when computing material volume fractions
    pub mask_subsamples: usize,
    /// Solve the domain without the superconducting disk (vacuum checks)
    pub include_superconductor: bool,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 30_000,
            sc_permeability_epsilon: 1e-6,
            mask_subsamples: 4,
            include_superconductor: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid geometry: {0:?}")]
    InvalidGeometry(Vec<String>),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("sphere (center {center:?}, radius {radius}) extends outside the domain")]
    SphereOutsideDomain { center: [f64; 3], radius: f64 },
    #[error("sphere overlaps the superconductor")]
    SphereOverlapsSuperconductor,
    #[error("solver controls invalid: {0}")]
    BadControls(String),
    #[error(
        "no convergence after {iterations} iterations (relative residual {residual:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("sample point {0:?} outside the solution domain")]
    OutOfDomain([f64; 3]),
}

/// Realized rectilinear grid: cell edge and center coordinates per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub edges: [Vec<f64>; 3],
    pub centers: [Vec<f64>; 3],
}

impl Grid {
    pub fn from_spec(spec: &GridSpec) -> Result<Self, GridError> {
        let edges = spec.axes()?;
        let centers = [0, 1, 2].map(|ax| {
            edges[ax]
                .windows(2)
                .map(|w| 0.5 * (w[0] + w[1]))
                .collect::<Vec<f64>>()
        });
        Ok(Self { edges, centers })
    }

    pub fn dims(&self) -> [usize; 3] {
        [0, 1, 2].map(|ax| self.centers[ax].len())
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.dims();
        i + nx * (j + ny * k)
    }

    /// Local cell size at a position (smallest spacing of the containing cell).
    pub fn local_spacing(&self, p: [f64; 3]) -> f64 {
        let mut d = f64::MAX;
        for ax in 0..3 {
            let e = &self.edges[ax];
            let i = match e.binary_search_by(|v| v.partial_cmp(&p[ax]).unwrap()) {
                Ok(i) => i.min(e.len() - 2),
                Err(i) => i.saturating_sub(1).min(e.len() - 2),
            };
            d = d.min(e[i + 1] - e[i]);
        }
        d
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|ax| {
            p[ax] >= *self.edges[ax].first().unwrap() && p[ax] <= *self.edges[ax].last().unwrap()
        })
    }
}

/// Converged magnetostatic solution.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub grid: Grid,
    /// Scaled scalar potential phi [T·m] at cell centers
    pub potential: Vec<f64>,
    /// Flux density at cell centers [T]
    pub b_cell: Vec<[f64; 3]>,
    /// Normal flux density on cell faces [T]: `face_b[ax]` has one extra
    /// layer along `ax`
    pub face_b: [Vec<f64>; 3],
    /// Per-cell region tag (majority by volume)
    pub mask: Vec<Region>,
    /// Per-cell effective relative permeability
    pub mu: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub b_ext: f64,
    /// Whether the fixed-magnetization (saturated) branch was used
    pub saturated: bool,
}

struct Problem {
    grid: Grid,
    mu: Vec<f64>,
    mask: Vec<Region>,
    /// volume fraction of ferromagnet per cell (for the saturation source)
    f_fm: Vec<f64>,
}

fn point_in_superconductor(geom: &TrapGeometry, p: [f64; 3]) -> bool {
    if p[2].abs() > 0.5 * geom.h {
        return false;
    }
    let rho2 = p[0] * p[0] + p[1] * p[1];
    if rho2 < geom.r * geom.r || rho2 > geom.disk_outer_radius * geom.disk_outer_radius {
        return false;
    }
    // slit opens along +x
    let phi = p[1].atan2(p[0]);
    phi.abs() >= 0.5 * geom.theta
}

fn build_problem(
    geom: &TrapGeometry,
    fm: &FerromagnetMaterial,
    sphere_center: Option<[f64; 3]>,
    controls: &SolverControls,
    spec: &GridSpec,
    fm_mu_override: Option<f64>,
) -> Result<Problem, SolveError> {
    let violations: Vec<String> = crate::geometry::validate(geom)
        .into_iter()
        .filter(|e| e.severity == Severity::Violation)
        .map(|e| e.message)
        .collect();
    if !violations.is_empty() {
        return Err(SolveError::InvalidGeometry(violations));
    }
    if controls.tolerance <= 0.0 || controls.sc_permeability_epsilon <= 0.0 {
        return Err(SolveError::BadControls(
            "tolerance and sc_permeability_epsilon must be positive".into(),
        ));
    }
    if controls.mask_subsamples == 0 {
        return Err(SolveError::BadControls("mask_subsamples must be >= 1".into()));
    }

    let grid = Grid::from_spec(spec)?;

    if let Some(c) = sphere_center {
        let inside = (0..3).all(|ax| {
            c[ax] - geom.a >= *grid.edges[ax].first().unwrap()
                && c[ax] + geom.a <= *grid.edges[ax].last().unwrap()
        });
        if !inside {
            return Err(SolveError::SphereOutsideDomain {
                center: c,
                radius: geom.a,
            });
        }
        if controls.include_superconductor {
            // sphere must sit wholly inside the hole column or clear of the
            // disk in z
            let overlaps_z = c[2].abs() - geom.a < 0.5 * geom.h;
            let rho_max = (c[0] * c[0] + c[1] * c[1]).sqrt() + geom.a;
            if overlaps_z && rho_max > geom.r {
                return Err(SolveError::SphereOverlapsSuperconductor);
            }
        }
    }

    let [nx, ny, nz] = grid.dims();
    let n = nx * ny * nz;
    let mut mu = vec![1.0f64; n];
    let mut mask = vec![Region::Air; n];
    let mut f_fm_v = vec![0.0f64; n];

    let eps = controls.sc_permeability_epsilon;
    let mu_fm = fm_mu_override.unwrap_or(fm.mu_r);
    let s = controls.mask_subsamples;
    let inv_s = 1.0 / s as f64;
    let n_sub = (s * s * s) as f64;

    // bounding boxes for the quick reject
    let sc_bb = if controls.include_superconductor {
        Some((
            [-geom.disk_outer_radius, -geom.disk_outer_radius, -0.5 * geom.h],
            [geom.disk_outer_radius, geom.disk_outer_radius, 0.5 * geom.h],
        ))
    } else {
        None
    };
    let sp_bb = sphere_center.map(|c| {
        (
            [c[0] - geom.a, c[1] - geom.a, c[2] - geom.a],
            [c[0] + geom.a, c[1] + geom.a, c[2] + geom.a],
        )
    });

    let overlaps = |lo: [f64; 3], hi: [f64; 3], bb: &([f64; 3], [f64; 3])| -> bool {
        (0..3).all(|ax| hi[ax] > bb.0[ax] && lo[ax] < bb.1[ax])
    };

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let lo = [grid.edges[0][i], grid.edges[1][j], grid.edges[2][k]];
                let hi = [
                    grid.edges[0][i + 1],
                    grid.edges[1][j + 1],
                    grid.edges[2][k + 1],
                ];
                let near_sc = sc_bb.as_ref().map_or(false, |bb| overlaps(lo, hi, bb));
                let near_sp = sp_bb.as_ref().map_or(false, |bb| overlaps(lo, hi, bb));
                if !near_sc && !near_sp {
                    continue;
                }
                let mut cnt_sc = 0usize;
                let mut cnt_fm = 0usize;
                for sk in 0..s {
                    let z = lo[2] + (hi[2] - lo[2]) * (sk as f64 + 0.5) * inv_s;
                    for sj in 0..s {
                        let y = lo[1] + (hi[1] - lo[1]) * (sj as f64 + 0.5) * inv_s;
                        for si in 0..s {
                            let x = lo[0] + (hi[0] - lo[0]) * (si as f64 + 0.5) * inv_s;
                            if near_sp {
                                let c = sphere_center.unwrap();
                                let d2 = (x - c[0]).powi(2)
                                    + (y - c[1]).powi(2)
                                    + (z - c[2]).powi(2);
                                if d2 <= geom.a * geom.a {
                                    cnt_fm += 1;
                                    continue;
                                }
                            }
                            if near_sc && point_in_superconductor(geom, [x, y, z]) {
                                cnt_sc += 1;
                            }
                        }
                    }
                }
                if cnt_sc == 0 && cnt_fm == 0 {
                    continue;
                }
                let f_sc = cnt_sc as f64 / n_sub;
                let f_fm = cnt_fm as f64 / n_sub;
                let f_air = 1.0 - f_sc - f_fm;
                let c = grid.idx(i, j, k);
                // series (harmonic) mixing: a partially superconducting cell
                // still blocks normal flux
                mu[c] = 1.0 / (f_sc / eps + f_fm / mu_fm + f_air);
                f_fm_v[c] = f_fm;
                mask[c] = if f_fm > 0.5 {
                    Region::Ferromagnet
                } else if f_sc > 0.5 {
                    Region::Superconductor
                } else {
                    Region::Air
                };
            }
        }
    }

    Ok(Problem {
        grid,
        mu,
        mask,
        f_fm: f_fm_v,
    })
}

/// Assembled symmetric 7-point system.
struct System {
    dims: [usize; 3],
    /// transmissibilities on interior faces: tx has (nx+1)*ny*nz entries etc.
    t: [Vec<f64>; 3],
    diag: Vec<f64>,
    rhs: Vec<f64>,
}

fn assemble(prob: &Problem, b_ext: f64, m_source: Option<&[[f64; 3]]>) -> System {
    let g = &prob.grid;
    let [nx, ny, nz] = g.dims();
    let n = nx * ny * nz;

    let spacing =
        |ax: usize, i: usize| -> f64 { g.edges[ax][i + 1] - g.edges[ax][i] };

    // face transmissibility per axis; boundary faces use the half-cell
    // distance to the Dirichlet boundary
    let mut t: [Vec<f64>; 3] = [
        vec![0.0; (nx + 1) * ny * nz],
        vec![0.0; nx * (ny + 1) * nz],
        vec![0.0; nx * ny * (nz + 1)],
    ];
    let mut diag = vec![0.0f64; n];
    let mut rhs = vec![0.0f64; n];

    let phi_bc = |z: f64| -> f64 { -b_ext * z };

    let fidx = |ax: usize, i: usize, j: usize, k: usize| -> usize {
        match ax {
            0 => i + (nx + 1) * (j + ny * k),
            1 => i + nx * (j + (ny + 1) * k),
            _ => i + nx * (j + ny * k),
        }
    };

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = g.idx(i, j, k);
                let idx3 = [i, j, k];
                let dxyz = [spacing(0, i), spacing(1, j), spacing(2, k)];
                for ax in 0..3 {
                    let area = match ax {
                        0 => dxyz[1] * dxyz[2],
                        1 => dxyz[0] * dxyz[2],
                        _ => dxyz[0] * dxyz[1],
                    };
                    // minus face
                    if idx3[ax] == 0 {
                        let d = 0.5 * dxyz[ax];
                        let tv = prob.mu[c] * area / d;
                        t[ax][fidx(ax, i, j, k)] = tv;
                        diag[c] += tv;
                        let bc_pos = if ax == 2 {
                            g.edges[2][0]
                        } else {
                            g.centers[2][k]
                        };
                        rhs[c] += tv * phi_bc(bc_pos);
                    }
                    // plus face (also covers the minus face of the neighbor)
                    let ip = idx3[ax] + 1;
                    let f = match ax {
                        0 => fidx(0, ip, j, k),
                        1 => fidx(1, i, ip, k),
                        _ => fidx(2, i, j, ip),
                    };
                    if ip == g.centers[ax].len() {
                        let d = 0.5 * dxyz[ax];
                        let tv = prob.mu[c] * area / d;
                        t[ax][f] = tv;
                        diag[c] += tv;
                        let bc_pos = if ax == 2 {
                            *g.edges[2].last().unwrap()
                        } else {
                            g.centers[2][k]
                        };
                        rhs[c] += tv * phi_bc(bc_pos);
                    } else {
                        let nb = match ax {
                            0 => g.idx(i + 1, j, k),
                            1 => g.idx(i, j + 1, k),
                            _ => g.idx(i, j, k + 1),
                        };
                        let d1 = 0.5 * dxyz[ax];
                        let d2 = 0.5 * spacing(ax, ip);
                        let mu_f =
                            (d1 + d2) / (d1 / prob.mu[c] + d2 / prob.mu[nb]);
                        let tv = mu_f * (match ax {
                            0 => spacing(1, j) * spacing(2, k),
                            1 => spacing(0, i) * spacing(2, k),
                            _ => spacing(0, i) * spacing(1, j),
                        }) / (d1 + d2);
                        t[ax][f] = tv;
                        diag[c] += tv;
                        diag[nb] += tv;
                    }
                }
            }
        }
    }

    // fixed-magnetization source: flux of mu0*M through faces
    if let Some(m) = m_source {
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let c = g.idx(i, j, k);
                    if m[c] == [0.0; 3] {
                        continue;
                    }
                    let dxyz = [spacing(0, i), spacing(1, j), spacing(2, k)];
                    for ax in 0..3 {
                        let area = match ax {
                            0 => dxyz[1] * dxyz[2],
                            1 => dxyz[0] * dxyz[2],
                            _ => dxyz[0] * dxyz[1],
                        };
                        // outflux through +face minus influx through -face;
                        // face M is the average of the two adjacent cells,
                        // zero outside the magnet
                        let idx3 = [i, j, k];
                        for (dir, sgn) in [(1i64, 1.0f64), (-1i64, -1.0f64)] {
                            let nbv = idx3[ax] as i64 + dir;
                            let m_nb = if nbv < 0 || nbv as usize >= g.centers[ax].len() {
                                0.0
                            } else {
                                let nb = match ax {
                                    0 => g.idx(nbv as usize, j, k),
                                    1 => g.idx(i, nbv as usize, k),
                                    _ => g.idx(i, j, nbv as usize),
                                };
                                m[nb][ax]
                            };
                            let m_face = 0.5 * (m[c][ax] + m_nb);
                            // div(B_src) contribution to the cell balance
                            rhs[c] -= sgn * MU0 * m_face * area;
                        }
                    }
                }
            }
        }
    }

    System {
        dims: [nx, ny, nz],
        t,
        diag,
        rhs,
    }
}

impl System {
    #[inline]
    fn tx(&self, i: usize, j: usize, k: usize) -> f64 {
        let [nx, ny, _] = self.dims;
        self.t[0][i + (nx + 1) * (j + ny * k)]
    }
    #[inline]
    fn ty(&self, i: usize, j: usize, k: usize) -> f64 {
        let [nx, ny, _] = self.dims;
        self.t[1][i + nx * (j + (ny + 1) * k)]
    }
    #[inline]
    fn tz(&self, i: usize, j: usize, k: usize) -> f64 {
        let [nx, ny, _] = self.dims;
        self.t[2][i + nx * (j + ny * k)]
    }

    /// y = A x with A = diag - offdiag couplings (interior faces only).
    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let [nx, ny, nz] = self.dims;
        let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let c = idx(i, j, k);
                    let mut acc = self.diag[c] * x[c];
                    if i > 0 {
                        acc -= self.tx(i, j, k) * x[c - 1];
                    }
                    if i + 1 < nx {
                        acc -= self.tx(i + 1, j, k) * x[c + 1];
                    }
                    if j > 0 {
                        acc -= self.ty(i, j, k) * x[c - nx];
                    }
                    if j + 1 < ny {
                        acc -= self.ty(i, j + 1, k) * x[c + nx];
                    }
                    if k > 0 {
                        acc -= self.tz(i, j, k) * x[c - nx * ny];
                    }
                    if k + 1 < nz {
                        acc -= self.tz(i, j, k + 1) * x[c + nx * ny];
                    }
                    y[c] = acc;
                }
            }
        }
    }

    /// Simplified diagonal incomplete-Cholesky factor (reciprocal diagonal).
    fn dic_diagonal(&self) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
        let mut rd = vec![0.0f64; nx * ny * nz];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let c = idx(i, j, k);
                    let mut d = self.diag[c];
                    if i > 0 {
                        let a = self.tx(i, j, k);
                        d -= a * a * rd[c - 1];
                    }
                    if j > 0 {
                        let a = self.ty(i, j, k);
                        d -= a * a * rd[c - nx];
                    }
                    if k > 0 {
                        let a = self.tz(i, j, k);
                        d -= a * a * rd[c - nx * ny];
                    }
                    rd[c] = 1.0 / d;
                }
            }
        }
        rd
    }

    /// z = M^-1 r with M = (D+L) D^-1 (D+U).
    fn dic_apply(&self, rd: &[f64], r: &[f64], z: &mut [f64]) {
        let [nx, ny, nz] = self.dims;
        let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let c = idx(i, j, k);
                    let mut acc = r[c];
                    if i > 0 {
                        acc += self.tx(i, j, k) * z[c - 1];
                    }
                    if j > 0 {
                        acc += self.ty(i, j, k) * z[c - nx];
                    }
                    if k > 0 {
                        acc += self.tz(i, j, k) * z[c - nx * ny];
                    }
                    z[c] = acc * rd[c];
                }
            }
        }
        for k in (0..nz).rev() {
            for j in (0..ny).rev() {
                for i in (0..nx).rev() {
                    let c = idx(i, j, k);
                    let mut acc = 0.0;
                    if i + 1 < nx {
                        acc += self.tx(i + 1, j, k) * z[c + 1];
                    }
                    if j + 1 < ny {
                        acc += self.ty(i, j + 1, k) * z[c + nx];
                    }
                    if k + 1 < nz {
                        acc += self.tz(i, j, k + 1) * z[c + nx * ny];
                    }
                    z[c] += acc * rd[c];
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(
    sys: &System,
    x: &mut [f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<(f64, usize), SolveError> {
    let n = x.len();
    let mut r = vec![0.0f64; n];
    sys.matvec(x, &mut r);
    for c in 0..n {
        r[c] = sys.rhs[c] - r[c];
    }
    let bnorm = dot(&sys.rhs, &sys.rhs).sqrt().max(f64::MIN_POSITIVE);
    let rd = sys.dic_diagonal();
    let mut z = vec![0.0f64; n];
    sys.dic_apply(&rd, &r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0f64; n];
    let mut history = Vec::new();

    let mut res = dot(&r, &r).sqrt() / bnorm;
    if res <= tolerance {
        return Ok((res, 0));
    }
    for it in 1..=max_iterations {
        sys.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for c in 0..n {
            x[c] += alpha * p[c];
            r[c] -= alpha * ap[c];
        }
        res = dot(&r, &r).sqrt() / bnorm;
        if it % 50 == 0 {
            history.push(res);
        }
        if res <= tolerance {
            return Ok((res, it));
        }
        sys.dic_apply(&rd, &r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for c in 0..n {
            p[c] = z[c] + beta * p[c];
        }
    }
    Err(SolveError::NonConvergence {
        iterations: max_iterations,
        residual: res,
        history,
    })
}

fn reconstruct_fields(
    prob: &Problem,
    sys: &System,
    phi: &[f64],
    b_ext: f64,
    m_source: Option<&[[f64; 3]]>,
) -> ([Vec<f64>; 3], Vec<[f64; 3]>) {
    let g = &prob.grid;
    let [nx, ny, nz] = g.dims();
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let spacing = |ax: usize, i: usize| g.edges[ax][i + 1] - g.edges[ax][i];

    let mut face_b: [Vec<f64>; 3] = [
        vec![0.0; (nx + 1) * ny * nz],
        vec![0.0; nx * (ny + 1) * nz],
        vec![0.0; nx * ny * (nz + 1)],
    ];

    // B_n on a face = T*(phi_upwind - phi_downwind)/A + mu0*M_face·n
    for ax in 0..3 {
        let nf = [nx, ny, nz];
        let mut count = nf;
        count[ax] += 1;
        for k in 0..count[2] {
            for j in 0..count[1] {
                for i in 0..count[0] {
                    let f = match ax {
                        0 => i + (nx + 1) * (j + ny * k),
                        1 => i + nx * (j + (ny + 1) * k),
                        _ => i + nx * (j + ny * k),
                    };
                    let tv = sys.t[ax][f];
                    let fi = [i, j, k];
                    let (phi_lo, phi_hi, area, m_face) = {
                        let trans = |ii: i64| -> Option<usize> {
                            if ii < 0 || ii as usize >= nf[ax] {
                                None
                            } else {
                                let mut c3 = fi;
                                c3[ax] = ii as usize;
                                Some(idx(c3[0], c3[1], c3[2]))
                            }
                        };
                        let lo = trans(fi[ax] as i64 - 1);
                        let hi = trans(fi[ax] as i64);
                        // transverse spacings: need a valid cell index per
                        // transverse axis; faces share them
                        let area = {
                            let mut a = 1.0;
                            for t_ax in 0..3 {
                                if t_ax != ax {
                                    a *= spacing(t_ax, fi[t_ax]);
                                }
                            }
                            a
                        };
                        // boundary faces use the Dirichlet potential at the
                        // face (z axis) or at the cell's z (x/y sides)
                        let bc_phi = || -> f64 {
                            let z = if ax == 2 {
                                if fi[2] == 0 {
                                    g.edges[2][0]
                                } else {
                                    *g.edges[2].last().unwrap()
                                }
                            } else {
                                g.centers[2][fi[2]]
                            };
                            -b_ext * z
                        };
                        let p_lo = lo.map(|c| phi[c]).unwrap_or_else(bc_phi);
                        let p_hi = hi.map(|c| phi[c]).unwrap_or_else(bc_phi);
                        let m_face = match m_source {
                            None => 0.0,
                            Some(m) => {
                                let ml = lo.map(|c| m[c][ax]).unwrap_or(0.0);
                                let mh = hi.map(|c| m[c][ax]).unwrap_or(0.0);
                                0.5 * (ml + mh)
                            }
                        };
                        (p_lo, p_hi, area, m_face)
                    };
                    face_b[ax][f] = tv * (phi_lo - phi_hi) / area + MU0 * m_face;
                }
            }
        }
    }

    let mut b_cell = vec![[0.0f64; 3]; nx * ny * nz];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = idx(i, j, k);
                let bx = 0.5
                    * (face_b[0][i + (nx + 1) * (j + ny * k)]
                        + face_b[0][i + 1 + (nx + 1) * (j + ny * k)]);
                let by = 0.5
                    * (face_b[1][i + nx * (j + (ny + 1) * k)]
                        + face_b[1][i + nx * (j + 1 + (ny + 1) * k)]);
                let bz = 0.5
                    * (face_b[2][i + nx * (j + ny * k)] + face_b[2][i + nx * (j + ny * (k + 1))]);
                b_cell[c] = [bx, by, bz];
            }
        }
    }
    (face_b, b_cell)
}

/// Solve the magnetostatic problem.
///
/// `sphere_center = None` solves the bare disk (or empty domain when the
/// superconductor is disabled in `controls`). The ferromagnet uses its
/// linear permeability; if the converged central field exceeds the
/// saturation crossover, one re-linearization pass replaces the sphere by a
/// fixed magnetization along the locally solved field direction.
pub fn solve(
    geom: &TrapGeometry,
    fm: &FerromagnetMaterial,
    sphere_center: Option<[f64; 3]>,
    b_ext: f64,
    controls: &SolverControls,
    grid: &GridSpec,
) -> Result<FieldSolution, SolveError> {
    solve_with_guess(geom, fm, sphere_center, b_ext, controls, grid, None)
}

/// [`solve`] with a warm-start potential from a nearby configuration on the
/// same grid (scans reuse the previous offset's field to cut iterations).
pub fn solve_with_guess(
    geom: &TrapGeometry,
    fm: &FerromagnetMaterial,
    sphere_center: Option<[f64; 3]>,
    b_ext: f64,
    controls: &SolverControls,
    grid: &GridSpec,
    guess: Option<&[f64]>,
) -> Result<FieldSolution, SolveError> {
    let prob = build_problem(geom, fm, sphere_center, controls, grid, None)?;
    let sys = assemble(&prob, b_ext, None);
    let [nx, ny, nz] = prob.grid.dims();
    let mut phi: Vec<f64>;
    match guess {
        Some(g) if g.len() == nx * ny * nz => phi = g.to_vec(),
        _ => {
            phi = Vec::with_capacity(nx * ny * nz);
            for k in 0..nz {
                let z = prob.grid.centers[2][k];
                for _ in 0..(nx * ny) {
                    phi.push(-b_ext * z);
                }
            }
        }
    }
    let (residual, iterations) = pcg(&sys, &mut phi, controls.tolerance, controls.max_iterations)?;

    // saturation check at the sphere center
    let mut saturated = false;
    let (mut face_b, mut b_cell) = reconstruct_fields(&prob, &sys, &phi, b_ext, None);
    let mut prob = prob;
    let mut total_iterations = iterations;
    let mut final_residual = residual;
    if let Some(c) = sphere_center {
        let sol_tmp = FieldSolution {
            grid: prob.grid.clone(),
            potential: phi.clone(),
            b_cell: b_cell.clone(),
            face_b: [face_b[0].clone(), face_b[1].clone(), face_b[2].clone()],
            mask: prob.mask.clone(),
            mu: prob.mu.clone(),
            residual,
            iterations,
            b_ext,
            saturated: false,
        };
        let b_center = sample_b(&sol_tmp, &[c])?[0];
        let b_mag = (b_center[0].powi(2) + b_center[1].powi(2) + b_center[2].powi(2)).sqrt();
        if b_mag > fm.b_cross() {
            saturated = true;
            // re-linearize: mu_r -> 1 inside the sphere, fixed M = M_sat along
            // the locally solved field direction, scaled by fill fraction
            let prob2 = build_problem(geom, fm, sphere_center, controls, grid, Some(1.0))?;
            let n = prob2.mu.len();
            let mut m_source = vec![[0.0f64; 3]; n];
            for cidx in 0..n {
                let f = prob2.f_fm[cidx];
                if f > 0.0 {
                    let b = b_cell[cidx];
                    let mag = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
                    let dir = if mag > 0.0 {
                        [b[0] / mag, b[1] / mag, b[2] / mag]
                    } else {
                        [0.0, 0.0, 1.0]
                    };
                    m_source[cidx] = [
                        f * fm.m_sat * dir[0],
                        f * fm.m_sat * dir[1],
                        f * fm.m_sat * dir[2],
                    ];
                }
            }
            let sys2 = assemble(&prob2, b_ext, Some(&m_source));
            let (res2, it2) = pcg(&sys2, &mut phi, controls.tolerance, controls.max_iterations)?;
            let (fb, bc) = reconstruct_fields(&prob2, &sys2, &phi, b_ext, Some(&m_source));
            face_b = fb;
            b_cell = bc;
            prob = prob2;
            total_iterations += it2;
            final_residual = res2;
        }
    }

    Ok(FieldSolution {
        grid: prob.grid,
        potential: phi,
        b_cell,
        face_b,
        mask: prob.mask,
        mu: prob.mu,
        residual: final_residual,
        iterations: total_iterations,
        b_ext,
        saturated,
    })
}

/// Trilinear interpolation of the cell-centered flux density.
///
/// Exact at cell centers; rejects points outside the domain box.
pub fn sample_b(sol: &FieldSolution, points: &[[f64; 3]]) -> Result<Vec<[f64; 3]>, SolveError> {
    let g = &sol.grid;
    let [nx, ny, nz] = g.dims();
    let mut out = Vec::with_capacity(points.len());
    for &p in points {
        if !g.contains(p) {
            return Err(SolveError::OutOfDomain(p));
        }
        let mut i0 = [0usize; 3];
        let mut tt = [0.0f64; 3];
        for ax in 0..3 {
            let c = &g.centers[ax];
            let n = c.len();
            // bracketing centers, clamped: constant extrapolation in the
            // boundary half-cells
            let pos = match c.binary_search_by(|v| v.partial_cmp(&p[ax]).unwrap()) {
                Ok(i) => i as i64,
                Err(i) => i as i64 - 1,
            };
            let lo = pos.clamp(0, n as i64 - 2) as usize;
            i0[ax] = lo;
            let t = (p[ax] - c[lo]) / (c[lo + 1] - c[lo]);
            tt[ax] = t.clamp(0.0, 1.0);
        }
        let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
        let _ = nz;
        let mut b = [0.0f64; 3];
        for comp in 0..3 {
            let mut acc = 0.0;
            for dk in 0..2 {
                for dj in 0..2 {
                    for di in 0..2 {
                        let w = (if di == 0 { 1.0 - tt[0] } else { tt[0] })
                            * (if dj == 0 { 1.0 - tt[1] } else { tt[1] })
                            * (if dk == 0 { 1.0 - tt[2] } else { tt[2] });
                        acc += w * sol.b_cell[idx(i0[0] + di, i0[1] + dj, i0[2] + dk)][comp];
                    }
                }
            }
            b[comp] = acc;
        }
        out.push(b);
    }
    Ok(out)
}

/// Mean |dBz/dz| on the axis over |z| <= a, the central field, and the
/// uniformity ratio |mean|·a/B_max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxialGradientStats {
    pub mean_abs_gradient: f64,
    pub b_max: f64,
    pub uniformity_ratio: f64,
}

pub fn axial_gradient_stats(sol: &FieldSolution, a: f64) -> Result<AxialGradientStats, SolveError> {
    let m = 65usize;
    let zs: Vec<f64> = (0..m)
        .map(|i| -a + 2.0 * a * i as f64 / (m - 1) as f64)
        .collect();
    let pts: Vec<[f64; 3]> = zs.iter().map(|&z| [0.0, 0.0, z]).collect();
    let b = sample_b(sol, &pts)?;
    let mut grad_sum = 0.0;
    for i in 1..m - 1 {
        let g = (b[i + 1][2] - b[i - 1][2]) / (zs[i + 1] - zs[i - 1]);
        grad_sum += g.abs();
    }
    let mean_abs_gradient = grad_sum / (m - 2) as f64;
    let b_max = sample_b(sol, &[[0.0, 0.0, 0.0]])?[0][2].abs();
    let uniformity_ratio = if b_max > 0.0 {
        mean_abs_gradient * a / b_max
    } else {
        0.0
    };
    Ok(AxialGradientStats {
        mean_abs_gradient,
        b_max,
        uniformity_ratio,
    })
}

impl FieldSolution {
    /// Volume-averaged flux density over cell centers inside the sphere
    /// (center, radius a) [T].
    pub fn sphere_average_b(&self, center: [f64; 3], a: f64) -> [f64; 3] {
        let g = &self.grid;
        let [nx, ny, nz] = g.dims();
        let mut acc = [0.0f64; 3];
        let mut vol = 0.0f64;
        for k in 0..nz {
            let dz = g.centers[2][k] - center[2];
            if dz.abs() > a {
                continue;
            }
            for j in 0..ny {
                let dy = g.centers[1][j] - center[1];
                if dy.abs() > a {
                    continue;
                }
                for i in 0..nx {
                    let dx = g.centers[0][i] - center[0];
                    if dx * dx + dy * dy + dz * dz > a * a {
                        continue;
                    }
                    let v = (g.edges[0][i + 1] - g.edges[0][i])
                        * (g.edges[1][j + 1] - g.edges[1][j])
                        * (g.edges[2][k + 1] - g.edges[2][k]);
                    let b = self.b_cell[g.idx(i, j, k)];
                    for c in 0..3 {
                        acc[c] += v * b[c];
                    }
                    vol += v;
                }
            }
        }
        if vol > 0.0 {
            for c in acc.iter_mut() {
                *c /= vol;
            }
        }
        acc
    }

    /// Region tag of the cell containing `p`, or None outside the domain.
    pub fn region_at(&self, p: [f64; 3]) -> Option<Region> {
        let g = &self.grid;
        if !g.contains(p) {
            return None;
        }
        let mut idx3 = [0usize; 3];
        for ax in 0..3 {
            let e = &g.edges[ax];
            let i = match e.binary_search_by(|v| v.partial_cmp(&p[ax]).unwrap()) {
                Ok(i) => i.min(e.len() - 2),
                Err(i) => i.saturating_sub(1).min(e.len() - 2),
            };
            idx3[ax] = i;
        }
        Some(self.mask[self.grid.idx(idx3[0], idx3[1], idx3[2])])
    }

    /// Net flux of B out of the closed box of cells
    /// `[lo[ax], hi[ax])` per axis (cell-index ranges) [T·m²].
    pub fn box_net_flux(&self, lo: [usize; 3], hi: [usize; 3]) -> f64 {
        let g = &self.grid;
        let [nx, ny, _nz] = g.dims();
        let spacing = |ax: usize, i: usize| g.edges[ax][i + 1] - g.edges[ax][i];
        let mut net = 0.0;
        // x faces
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                let area = spacing(1, j) * spacing(2, k);
                net -= self.face_b[0][lo[0] + (nx + 1) * (j + ny * k)] * area;
                net += self.face_b[0][hi[0] + (nx + 1) * (j + ny * k)] * area;
            }
        }
        // y faces
        for k in lo[2]..hi[2] {
            for i in lo[0]..hi[0] {
                let area = spacing(0, i) * spacing(2, k);
                net -= self.face_b[1][i + nx * (lo[1] + (ny + 1) * k)] * area;
                net += self.face_b[1][i + nx * (hi[1] + (ny + 1) * k)] * area;
            }
        }
        // z faces
        for j in lo[1]..hi[1] {
            for i in lo[0]..hi[0] {
                let area = spacing(0, i) * spacing(1, j);
                net -= self.face_b[2][i + nx * (j + ny * lo[2])] * area;
                net += self.face_b[2][i + nx * (j + ny * hi[2])] * area;
            }
        }
        net
    }

    /// Maximum |B·n| over faces separating superconductor cells from
    /// non-superconductor cells [T].
    pub fn max_normal_b_on_superconductor(&self) -> f64 {
        let g = &self.grid;
        let [nx, ny, nz] = g.dims();
        let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
        let mut max_bn: f64 = 0.0;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let c = idx(i, j, k);
                    if self.mask[c] != Region::Superconductor {
                        continue;
                    }
                    let neighbors: [(i64, i64, i64, usize, usize); 6] = [
                        (-1, 0, 0, 0, i),
                        (1, 0, 0, 0, i + 1),
                        (0, -1, 0, 1, j),
                        (0, 1, 0, 1, j + 1),
                        (0, 0, -1, 2, k),
                        (0, 0, 1, 2, k + 1),
                    ];
                    for (di, dj, dk, ax, fpos) in neighbors {
                        let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                        let is_air = if ni < 0
                            || nj < 0
                            || nk < 0
                            || ni as usize >= nx
                            || nj as usize >= ny
                            || nk as usize >= nz
                        {
                            true
                        } else {
                            self.mask[idx(ni as usize, nj as usize, nk as usize)]
                                != Region::Superconductor
                        };
                        if is_air {
                            let f = match ax {
                                0 => fpos + (nx + 1) * (j + ny * k),
                                1 => i + nx * (fpos + (ny + 1) * k),
                                _ => i + nx * (j + ny * fpos),
                            };
                            max_bn = max_bn.max(self.face_b[ax][f].abs());
                        }
                    }
                }
            }
        }
        max_bn
    }
}
