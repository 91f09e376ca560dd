//! POD-Galerkin reduced model of the parametric steady flow.
//!
//! Velocities are written `u = μ u_L + Σ α_i φ_i` with `u_L` the unit-μ
//! Stokes solution. Since `u_L` and all modes are discretely
//! divergence-free and the modes vanish on Dirichlet dofs, the pressure drops
//! out of the Galerkin system, which reads
//!
//! `R_i(α) = μ a_i + (A α)_i + μ² c_i + μ (D α)_i + Σ_jk C_ijk α_j α_k`.

mod persist;
mod pod;

use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::flow::{solve_with, Discretization, FlowField, FlowProblem, SolveOptions};
use crate::linalg::{dot, norm2, solve_dense, CsrMatrix};
use crate::meshfem::{Field, FunctionSpace};

pub use persist::{load_rom, read_rom, rom_to_string, save_rom};
pub use pod::{apply_blocked, inner_m, pod_vectors, project, projection_error, PodResult};

#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub mus: Vec<f64>,
    /// Velocity unknowns `[u_x, u_y]` per parameter.
    pub raw: Vec<Vec<f64>>,
    /// `raw_j - μ_j u_L`; zero on Dirichlet dofs.
    pub lifted: Vec<Vec<f64>>,
    pub lifting: Vec<f64>,
    /// FOM wall-clock time per snapshot.
    pub seconds: Vec<f64>,
}

/// Unit-μ Stokes solution restricted to the velocity unknowns.
pub fn stokes_lifting(disc: &Discretization) -> Result<Vec<f64>> {
    let a = disc.system(None, None)?;
    let x = crate::linalg::SparseLu::new(&a)?.solve(&disc.rhs(1.0))?;
    Ok(x[..2 * disc.n_velocity()].to_vec())
}

/// One converged FOM solve per parameter value.
pub fn collect_snapshots(
    problem: &FlowProblem,
    disc: &Discretization,
    mus: &[f64],
    opts: SolveOptions,
) -> Result<SnapshotSet> {
    if mus.len() < 2 {
        return Err(Error::contract("need at least two snapshot parameters"));
    }
    if mus.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::contract("snapshot parameters must be sorted"));
    }
    let lifting = stokes_lifting(disc)?;
    let mut set = SnapshotSet { mus: mus.to_vec(), raw: vec![], lifted: vec![], lifting, seconds: vec![] };
    for &mu in mus {
        let t = Instant::now();
        let f = solve_with(problem, disc, mu, opts)?;
        set.seconds.push(t.elapsed().as_secs_f64());
        let u = f.velocity.into_values();
        let s = u.iter().zip(&set.lifting).map(|(a, l)| a - mu * l).collect();
        set.raw.push(u);
        set.lifted.push(s);
    }
    Ok(set)
}

#[derive(Debug, Clone)]
pub struct RomBasis {
    pub modes: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub lifting: Vec<f64>,
    pub energy: f64,
}

impl RomBasis {
    pub fn rank(&self) -> usize {
        self.modes.len()
    }

    /// Leading `r` modes.
    pub fn truncated(&self, r: usize) -> RomBasis {
        let r = r.min(self.rank());
        let total: f64 = self.eigenvalues.iter().map(|l| l.max(0.0)).sum();
        let energy = if total > 0.0 { self.eigenvalues[..r].iter().sum::<f64>() / total } else { 1.0 };
        RomBasis { modes: self.modes[..r].to_vec(), eigenvalues: self.eigenvalues.clone(), lifting: self.lifting.clone(), energy }
    }
}

/// POD of the lifted snapshots in the velocity mass inner product.
///
/// When the lifting alone reproduces every snapshot (to round-off) the basis
/// is empty.
pub fn pod(snapshots: &SnapshotSet, mass: &CsrMatrix, energy_tol: f64, r_max: Option<usize>) -> Result<RomBasis> {
    let raw: f64 = snapshots.raw.iter().map(|u| inner_m(mass, u, u)).sum();
    let lifted: f64 = snapshots.lifted.iter().map(|u| inner_m(mass, u, u)).sum();
    if lifted <= 1e-24 * raw {
        return Ok(RomBasis { modes: vec![], eigenvalues: vec![], lifting: snapshots.lifting.clone(), energy: 1.0 });
    }
    let p = pod_vectors(&snapshots.lifted, mass, energy_tol, r_max)?;
    Ok(RomBasis { modes: p.modes, eigenvalues: p.eigenvalues, lifting: snapshots.lifting.clone(), energy: p.energy })
}

#[derive(Debug, Clone)]
pub struct RomOperators {
    pub basis: RomBasis,
    pub mu_range: [f64; 2],
    /// `φ_iᵀ ν K u_L`
    pub a_l: Vec<f64>,
    /// `φ_iᵀ ν K φ_j`
    pub a_r: Vec<Vec<f64>>,
    /// `φ_iᵀ N(u_L) u_L`
    pub c_ll: Vec<f64>,
    /// `φ_iᵀ (N(u_L) φ_j + N(φ_j) u_L)`
    pub d_r: Vec<Vec<f64>>,
    /// `c_r[i][j][k] = φ_iᵀ N(φ_j) φ_k`
    pub c_r: Vec<Vec<Vec<f64>>>,
}

/// Galerkin projection of the Navier-Stokes momentum residual.
pub fn project_galerkin(basis: &RomBasis, problem: &FlowProblem, disc: &Discretization) -> Result<RomOperators> {
    let r = basis.rank();
    let v = &disc.velocity_space;
    let lift = &basis.lifting;
    let field = |x: &[f64]| Field::new(v.clone(), 2, x.to_vec());
    let vis_phi: Vec<Vec<f64>> = basis.modes.iter().map(|q| apply_blocked(&disc.viscous, q)).collect();
    let vis_l = apply_blocked(&disc.viscous, lift);
    let a_l = basis.modes.iter().map(|q| dot(q, &vis_l)).collect();
    let a_r = (0..r).map(|i| (0..r).map(|j| dot(&basis.modes[i], &vis_phi[j])).collect()).collect();
    let (mut c_ll, mut d_r, mut c_r) = (vec![0.0; r], vec![vec![0.0; r]; r], vec![vec![vec![0.0; r]; r]; r]);
    if problem.has_convection() {
        let n_l = disc.convection_matrix(&field(lift)?)?;
        let nl_l = apply_blocked(&n_l, lift);
        for i in 0..r {
            c_ll[i] = dot(&basis.modes[i], &nl_l);
        }
        for j in 0..r {
            let n_j = disc.convection_matrix(&field(&basis.modes[j])?)?;
            let nl_phi = apply_blocked(&n_l, &basis.modes[j]);
            let nj_l = apply_blocked(&n_j, lift);
            let nj_phi: Vec<Vec<f64>> = basis.modes.iter().map(|q| apply_blocked(&n_j, q)).collect();
            for i in 0..r {
                d_r[i][j] = dot(&basis.modes[i], &nl_phi) + dot(&basis.modes[i], &nj_l);
                for k in 0..r {
                    c_r[i][j][k] = dot(&basis.modes[i], &nj_phi[k]);
                }
            }
        }
    }
    Ok(RomOperators { basis: basis.clone(), mu_range: problem.mu_range(), a_l, a_r, c_ll, d_r, c_r })
}

#[derive(Debug, Clone)]
pub struct RomSolution {
    pub mu: f64,
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub seconds: f64,
}

impl RomOperators {
    pub fn rank(&self) -> usize {
        self.a_l.len()
    }

    pub fn residual(&self, mu: f64, alpha: &[f64]) -> Vec<f64> {
        let r = self.rank();
        (0..r)
            .map(|i| {
                let mut v = mu * self.a_l[i] + mu * mu * self.c_ll[i];
                for j in 0..r {
                    v += (self.a_r[i][j] + mu * self.d_r[i][j]) * alpha[j];
                    for k in 0..r {
                        v += self.c_r[i][j][k] * alpha[j] * alpha[k];
                    }
                }
                v
            })
            .collect()
    }

    pub fn jacobian(&self, mu: f64, alpha: &[f64]) -> Vec<Vec<f64>> {
        let r = self.rank();
        (0..r)
            .map(|i| {
                (0..r)
                    .map(|j| {
                        let mut v = self.a_r[i][j] + mu * self.d_r[i][j];
                        for k in 0..r {
                            v += (self.c_r[i][j][k] + self.c_r[i][k][j]) * alpha[k];
                        }
                        v
                    })
                    .collect()
            })
            .collect()
    }

    /// Reduced Newton iteration from `α = 0`.
    pub fn solve(&self, mu: f64, tol: f64) -> Result<RomSolution> {
        let [lo, hi] = self.mu_range;
        if !(mu >= lo - 1e-12 && mu <= hi + 1e-12) {
            return Err(Error::contract(format!("μ = {mu} outside [{lo}, {hi}]")));
        }
        let start = Instant::now();
        let r = self.rank();
        let mut alpha = vec![0.0; r];
        let mut res = self.residual(mu, &alpha);
        let scale = norm2(&res).max(self.a_r.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())) * 1e-300);
        if norm2(&res) == 0.0 {
            return Ok(RomSolution { mu, alpha, iterations: 0, residual: 0.0, seconds: start.elapsed().as_secs_f64() });
        }
        for it in 1..=50 {
            let dx = solve_dense(self.jacobian(mu, &alpha), res.clone())?;
            alpha.iter_mut().zip(&dx).for_each(|(a, d)| *a -= d);
            res = self.residual(mu, &alpha);
            let rel = norm2(&res) / scale;
            if rel <= tol || norm2(&dx) <= 1e-14 * norm2(&alpha) {
                return Ok(RomSolution { mu, alpha, iterations: it, residual: rel, seconds: start.elapsed().as_secs_f64() });
            }
            if !rel.is_finite() {
                break;
            }
        }
        Err(Error::RomNonConvergence { mu, iterations: 50, residual: norm2(&res) / scale })
    }

    /// `μ u_L + Σ α_i φ_i`.
    pub fn reconstruct(&self, mu: f64, alpha: &[f64]) -> Vec<f64> {
        let mut u: Vec<f64> = self.basis.lifting.iter().map(|l| mu * l).collect();
        for (a, q) in alpha.iter().zip(&self.basis.modes) {
            u.iter_mut().zip(q).for_each(|(x, v)| *x += a * v);
        }
        u
    }
}

/// Online solve plus reconstruction on the velocity space.
pub fn rom_solve(ops: &RomOperators, space: &Arc<FunctionSpace>, mu: f64, tol: f64) -> Result<(FlowField, RomSolution)> {
    let start = Instant::now();
    let sol = ops.solve(mu, tol)?;
    let u = ops.reconstruct(mu, &sol.alpha);
    let velocity = Field::new(space.clone(), 2, u)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok((
        FlowField {
            velocity,
            pressure: None,
            mu,
            residual_norm: sol.residual,
            iterations: sol.iterations,
            residual_history: vec![],
            seconds,
        },
        sol,
    ))
}

/// Relative M-norm distance `‖a − b‖_M / ‖b‖_M`.
pub fn relative_error_m(mass: &CsrMatrix, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    (inner_m(mass, &d, &d) / inner_m(mass, b, b)).sqrt()
}

/// FOM momentum residual of a velocity, minimized over pressures in the
/// least-squares sense, relative to the Dirichlet data norm.
pub fn fom_residual(disc: &Discretization, mu: f64, velocity: &[f64]) -> Result<f64> {
    let nv = disc.n_velocity();
    let w = disc.velocity_field(velocity)?;
    let n = disc.convection_matrix(&w)?;
    let k = disc.viscous.linear_combination(1.0, &n, 1.0)?;
    let mut r = apply_blocked(&k, velocity);
    for i in 0..2 * nv {
        if disc.is_dirichlet[i] {
            r[i] = 0.0;
        }
    }
    // Least-squares pressure: (Gᵀ G) p = -Gᵀ r on free rows.
    let free = |x: &mut [f64]| {
        for i in 0..2 * nv {
            if disc.is_dirichlet[i] {
                x[i] = 0.0;
            }
        }
    };
    let g_apply = |p: &[f64]| {
        let mut y = disc.gradient[0].spmv(p).expect("sizes");
        y.extend(disc.gradient[1].spmv(p).expect("sizes"));
        free(&mut y);
        y
    };
    let gt_apply = |y: &[f64]| disc.divergence_of(y);
    let rhs: Vec<f64> = gt_apply(&r).iter().map(|v| -v).collect();
    let np = disc.n_pressure();
    let op = crate::linalg::FnOperator::new(np, |p: &[f64], out: &mut [f64]| {
        let y = gt_apply(&g_apply(p));
        // Small shift removes the constant-pressure kernel of closed cavities.
        for i in 0..np {
            out[i] = y[i] + 1e-12 * p[i];
        }
    });
    let p = crate::linalg::pcg(&op, None, &rhs, None, 1e-10, 20 * np, None)?.x;
    let gp = g_apply(&p);
    r.iter_mut().zip(&gp).for_each(|(a, b)| *a += b);
    let data = norm2(&disc.rhs(mu));
    Ok(norm2(&r) / data)
}
