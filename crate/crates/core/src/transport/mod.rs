//! SUPG-stabilized advection-diffusion with implicit Euler time stepping.
//!
//! One step solves `L c_{n+1} = R c_n` with
//! `L = M + Δt C + Δt k K + S_m + Δt S_c` and `R = M + S_m`, where `S_m`
//! and `S_c` are the streamline-weighted mass and convection terms. On P1
//! elements the second-derivative part of the stabilization residual
//! vanishes element-wise and is omitted.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{bicgstab, CsrMatrix, Ilu0, SparseLu};
use crate::meshfem::{assemble_matrix, lumped_mass, Field, Form, FunctionSpace, Point};

/// Stabilization parameter `min(h²/2k, h/|u|)`; the advective bound is
/// dropped when `|u| < 1e-12`.
pub fn tau(h: f64, k: f64, u_norm: f64) -> f64 {
    let diffusive = h * h / (2.0 * k);
    if u_norm < 1e-12 {
        diffusive
    } else {
        diffusive.min(h / u_norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    /// Sparse LU factorized once.
    Direct,
    /// ILU(0)-preconditioned BiCGSTAB; preconditioner built once.
    Iterative { tol: f64 },
}

#[derive(Debug, Clone)]
pub struct TransportConfig {
    /// Advection velocity (two components, any order, same mesh as the run).
    pub velocity: Field,
    pub k: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Boundary tags where `c = 0` is imposed.
    pub dirichlet_tags: Vec<i32>,
    pub solver: LinearSolver,
}

enum Backend {
    Direct(SparseLu),
    Iterative { ilu: Ilu0, lhs_t: CsrMatrix, tol: f64 },
}

pub struct Stepper {
    space: Arc<FunctionSpace>,
    lhs: CsrMatrix,
    rhs: CsrMatrix,
    rhs_t: CsrMatrix,
    mass: CsrMatrix,
    lumped: Vec<f64>,
    tau: Vec<f64>,
    dirichlet: Vec<usize>,
    dt: f64,
    n_steps: usize,
    backend: Backend,
    factorizations: usize,
    solves: AtomicUsize,
}

impl std::fmt::Debug for Stepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stepper")
            .field("n_dof", &self.space.n_dof())
            .field("dt", &self.dt)
            .field("n_steps", &self.n_steps)
            .finish_non_exhaustive()
    }
}

/// Assembles the step matrices once and factorizes the left-hand side.
pub fn build_stepper(config: &TransportConfig) -> Result<Stepper> {
    Stepper::new(config)
}

impl Stepper {
    pub fn new(config: &TransportConfig) -> Result<Self> {
        let TransportConfig { velocity, k, dt, t_final, .. } = config;
        let (k, dt, t_final) = (*k, *dt, *t_final);
        if !(k > 0.0) || !(dt > 0.0) || !(t_final >= dt) {
            return Err(Error::contract("transport needs k > 0, dt > 0 and T >= dt"));
        }
        if velocity.components() != 2 {
            return Err(Error::contract("transport velocity must be a vector field"));
        }
        let n_steps = (t_final / dt).round() as usize;
        let mesh = velocity.space().mesh().clone();
        let space = FunctionSpace::new(mesh.clone(), 1)?;
        let tau_k: Vec<f64> = (0..mesh.n_triangles())
            .map(|t| {
                let u = [
                    velocity.local_value(t, [1.0 / 3.0; 3], 0),
                    velocity.local_value(t, [1.0 / 3.0; 3], 1),
                ];
                tau(mesh.element_diameter(t), k, u[0].hypot(u[1]))
            })
            .collect();
        let s = &*space;
        let mass = assemble_matrix(s, s, &Form::Mass)?;
        let conv = assemble_matrix(s, s, &Form::Convection { velocity })?;
        let stiff = assemble_matrix(s, s, &Form::Stiffness { k })?;
        let supg_m = assemble_matrix(s, s, &Form::SupgMass { velocity, tau: &tau_k })?;
        let supg_c = assemble_matrix(s, s, &Form::SupgConvection { velocity, tau: &tau_k })?;
        let rhs0 = mass.linear_combination(1.0, &supg_m, 1.0)?;
        let mut lhs = rhs0
            .linear_combination(1.0, &conv, dt)?
            .linear_combination(1.0, &stiff, dt)?
            .linear_combination(1.0, &supg_c, dt)?;
        let mut rhs = rhs0;
        let dirichlet = space.boundary_dofs(&config.dirichlet_tags);
        lhs.set_identity_rows(&dirichlet);
        rhs.zero_rows(&dirichlet);
        let backend = match config.solver {
            LinearSolver::Direct => Backend::Direct(SparseLu::new(&lhs)?),
            LinearSolver::Iterative { tol } => Backend::Iterative {
                ilu: Ilu0::new(&lhs)?,
                lhs_t: lhs.transpose(),
                tol,
            },
        };
        let lumped = lumped_mass(s)?;
        Ok(Self {
            rhs_t: rhs.transpose(),
            space,
            lhs,
            rhs,
            mass,
            lumped,
            tau: tau_k,
            dirichlet,
            dt,
            n_steps,
            backend,
            factorizations: 1,
            solves: AtomicUsize::new(0),
        })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn n_dof(&self) -> usize {
        self.space.n_dof()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn t_final(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|n| n as f64 * self.dt).collect()
    }

    pub fn lhs(&self) -> &CsrMatrix {
        &self.lhs
    }

    pub fn rhs_operator(&self) -> &CsrMatrix {
        &self.rhs
    }

    /// Consistent P1 mass matrix.
    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn dirichlet_dofs(&self) -> &[usize] {
        &self.dirichlet
    }

    /// Number of matrix factorizations (or preconditioner constructions).
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    /// Number of linear solves performed so far.
    pub fn linear_solves(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    fn solve(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        self.solves.fetch_add(1, Ordering::Relaxed);
        match &self.backend {
            Backend::Direct(lu) => {
                if transpose {
                    lu.solve_transpose(b)
                } else {
                    lu.solve(b)
                }
            }
            Backend::Iterative { ilu, lhs_t, tol } => {
                let n = b.len();
                if transpose {
                    bicgstab(lhs_t, |r, z| ilu.apply_transpose(r, z), b, None, *tol, 10 * n).map(|o| o.x)
                } else {
                    bicgstab(&self.lhs, |r, z| ilu.apply(r, z), b, None, *tol, 10 * n).map(|o| o.x)
                }
            }
        }
    }

    /// One implicit Euler step `c ↦ L⁻¹ R c`.
    pub fn step(&self, c: &[f64]) -> Result<Vec<f64>> {
        let b = self.rhs.spmv(c)?;
        self.solve(&b, false)
    }

    /// Transposed step `λ ↦ Rᵀ L⁻ᵀ λ`.
    pub fn step_transpose(&self, lam: &[f64]) -> Result<Vec<f64>> {
        if lam.len() != self.n_dof() {
            return Err(Error::DimensionMismatch { expected: self.n_dof(), found: lam.len() });
        }
        let z = self.solve(lam, true)?;
        self.rhs_t.spmv(&z)
    }

    pub fn solve_forward(&self, m: &Field) -> Result<Trajectory> {
        if !Arc::ptr_eq(m.space(), &self.space) && !same_p1(m.space(), &self.space) {
            return Err(Error::contract("initial condition is not on the concentration space"));
        }
        if m.components() != 1 {
            return Err(Error::contract("initial condition must be scalar"));
        }
        self.forward_values(m.values())
    }

    /// Forward run from raw dof values.
    pub fn forward_values(&self, m: &[f64]) -> Result<Trajectory> {
        if m.len() != self.n_dof() {
            return Err(Error::DimensionMismatch { expected: self.n_dof(), found: m.len() });
        }
        let mut states = Vec::with_capacity(self.n_steps + 1);
        states.push(m.to_vec());
        for n in 0..self.n_steps {
            let next = self.step(&states[n]).map_err(|e| e.at_step(n + 1))?;
            states.push(next);
        }
        Ok(Trajectory { space: self.space.clone(), dt: self.dt, states })
    }

    /// Backward sweep of the exact discrete adjoint.
    ///
    /// `loads[n]` is the nodal load at time index `n` (length `n_steps + 1`).
    /// Returns states `p_n` with `p_N = 0` and `p_n = Sᵀ(p_{n+1} + loads[n+1])`;
    /// the transposed initial map is `p_0 + loads[0]`.
    pub fn solve_adjoint(&self, loads: &[Vec<f64>]) -> Result<AdjointSolution> {
        let n = self.n_steps;
        if loads.len() != n + 1 {
            return Err(Error::DimensionMismatch { expected: n + 1, found: loads.len() });
        }
        let nd = self.n_dof();
        let mut states = vec![vec![0.0; nd]; n + 1];
        for step in (0..n).rev() {
            let mut lam = states[step + 1].clone();
            let load = &loads[step + 1];
            if !load.is_empty() {
                if load.len() != nd {
                    return Err(Error::DimensionMismatch { expected: nd, found: load.len() });
                }
                lam.iter_mut().zip(load).for_each(|(a, b)| *a += b);
            }
            if lam.iter().all(|&v| v == 0.0) {
                continue;
            }
            states[step] = self.step_transpose(&lam).map_err(|e| e.at_step(step))?;
        }
        let mut initial = states[0].clone();
        if !loads[0].is_empty() {
            initial.iter_mut().zip(&loads[0]).for_each(|(a, b)| *a += b);
        }
        Ok(AdjointSolution { states, initial })
    }
}

fn same_p1(a: &FunctionSpace, b: &FunctionSpace) -> bool {
    a.order() == b.order() && a.same_mesh(b)
}

/// Concentration time series on a uniform grid `t_n = n Δt`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    space: Arc<FunctionSpace>,
    dt: f64,
    states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(space: Arc<FunctionSpace>, dt: f64, states: Vec<Vec<f64>>) -> Result<Self> {
        if states.is_empty() || !(dt > 0.0) {
            return Err(Error::contract("trajectory needs at least one state and dt > 0"));
        }
        if let Some(s) = states.iter().find(|s| s.len() != space.n_dof()) {
            return Err(Error::DimensionMismatch { expected: space.n_dof(), found: s.len() });
        }
        Ok(Self { space, dt, states })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.time(self.n_steps())
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n]
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn field(&self, n: usize) -> Field {
        Field::new(self.space.clone(), 1, self.states[n].clone()).expect("trajectory states are finite")
    }

    /// `∫ c_n dΩ`.
    pub fn total_mass(&self, n: usize) -> f64 {
        let mesh = self.space.mesh();
        let c = &self.states[n];
        (0..mesh.n_triangles())
            .map(|t| {
                let d = self.space.cell_dofs(t);
                mesh.area(t) * (c[d[0]] + c[d[1]] + c[d[2]]) / 3.0
            })
            .sum()
    }

    pub fn min_value(&self) -> f64 {
        self.states.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.states.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct AdjointSolution {
    /// `p_0 … p_N` with `p_N = 0`.
    pub states: Vec<Vec<f64>>,
    /// Transposed parameter-to-state map applied to the loads.
    pub initial: Vec<f64>,
}

/// Thresholded Gaussian bump: `exp(-κ|x-x₀|²)` where that is at least
/// `level`, zero elsewhere, with `κ = -ln(level)/radius²`.
pub fn bump_ic(space: Arc<FunctionSpace>, x0: Point, radius: f64, level: f64) -> Result<Field> {
    if !(radius > 0.0) || !(level > 0.0 && level < 1.0) {
        return Err(Error::contract("bump needs radius > 0 and 0 < level < 1"));
    }
    let kappa = bump_kappa(radius, level);
    Ok(Field::interpolate(space, |p| bump_value(p, x0, kappa, level)))
}

pub fn bump_kappa(radius: f64, level: f64) -> f64 {
    -level.ln() / (radius * radius)
}

pub fn bump_value(p: Point, x0: Point, kappa: f64, level: f64) -> f64 {
    let r2 = (p[0] - x0[0]).powi(2) + (p[1] - x0[1]).powi(2);
    let v = (-kappa * r2).exp();
    if v >= level * (1.0 - 1e-12) {
        v
    } else {
        0.0
    }
}
