//! Bayesian inference of the initial concentration from sensor data.
//!
//! Parameters are P1 coefficient vectors and all inner products, gradients
//! and Hessians are Euclidean in that space. The prior precision is
//! `Γ_pr⁻¹ = K_A M_L⁻¹ K_A` with `K_A = γK + δM + βM_∂Ω` (the weak form of
//! `-γΔ + δ` with the Robin condition `γ∂_n m + βm = 0`) and `M_L` the lumped
//! mass, so `Γ_pr = S Sᵀ` with `S = K_A⁻¹ M_L^{1/2}`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{dot, lanczos_lowrank, norm2, pcg, CgIterate, CsrMatrix, FnOperator, SparseLu};
use crate::meshfem::{assemble_matrix, lumped_mass, Field, Form, FunctionSpace};
use crate::sensing::{observe_at, observe_transpose, MeasurementSet};
use crate::transport::{Stepper, Trajectory};

pub struct Prior {
    space: Arc<FunctionSpace>,
    pub gamma: f64,
    pub delta: f64,
    pub beta: f64,
    mean: Vec<f64>,
    k_a: CsrMatrix,
    lumped: Vec<f64>,
    lu: SparseLu,
}

impl std::fmt::Debug for Prior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prior")
            .field("gamma", &self.gamma)
            .field("delta", &self.delta)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

impl Prior {
    /// `beta = None` selects `√(γδ)`; `mean = None` is the zero mean.
    pub fn new(space: Arc<FunctionSpace>, gamma: f64, delta: f64, beta: Option<f64>, mean: Option<&Field>) -> Result<Self> {
        if space.order() != 1 {
            return Err(Error::contract("prior is defined on P1 parameters"));
        }
        let beta = beta.unwrap_or((gamma * delta).sqrt());
        if !(gamma > 0.0 && delta > 0.0 && beta >= 0.0) {
            return Err(Error::contract("prior needs gamma > 0, delta > 0, beta >= 0"));
        }
        let mean = match mean {
            Some(f) if f.values().len() == space.n_dof() => f.values().to_vec(),
            Some(f) => return Err(Error::DimensionMismatch { expected: space.n_dof(), found: f.values().len() }),
            None => vec![0.0; space.n_dof()],
        };
        let tags = space.mesh().boundary_tags();
        let k = assemble_matrix(&space, &space, &Form::Stiffness { k: gamma })?;
        let m = assemble_matrix(&space, &space, &Form::Mass)?;
        let mb = assemble_matrix(&space, &space, &Form::BoundaryMass { tags: &tags })?;
        let k_a = k.linear_combination(1.0, &m, delta)?.linear_combination(1.0, &mb, beta)?;
        let lumped = lumped_mass(&space)?;
        let lu = SparseLu::new(&k_a)?;
        Ok(Self { space, gamma, delta, beta, mean, k_a, lumped, lu })
    }

    /// Coefficients chosen from a target correlation length `ρ` and pointwise
    /// standard deviation `s` using the 2D Matérn (ν = 1) relations
    /// `ρ = √(8γ/δ)` and `s² = 1/(4π γ δ)`.
    pub fn from_correlation(space: Arc<FunctionSpace>, rho: f64, s: f64) -> Result<Self> {
        if !(rho > 0.0 && s > 0.0) {
            return Err(Error::contract("correlation length and deviation must be positive"));
        }
        // γδ = 1/(4π s²), γ/δ = ρ²/8
        let gd = 1.0 / (4.0 * std::f64::consts::PI * s * s);
        let ratio = rho * rho / 8.0;
        let gamma = (gd * ratio).sqrt();
        let delta = (gd / ratio).sqrt();
        Self::new(space, gamma, delta, None, None)
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn n_dof(&self) -> usize {
        self.mean.len()
    }

    pub fn operator(&self) -> &CsrMatrix {
        &self.k_a
    }

    /// `Γ_pr⁻¹ x`.
    pub fn precision(&self, x: &[f64]) -> Vec<f64> {
        let y = self.k_a.spmv(x).expect("sizes");
        let z: Vec<f64> = y.iter().zip(&self.lumped).map(|(a, m)| a / m).collect();
        self.k_a.spmv(&z).expect("sizes")
    }

    /// `Γ_pr x`.
    pub fn covariance(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.lu.solve(x)?;
        let z: Vec<f64> = y.iter().zip(&self.lumped).map(|(a, m)| a * m).collect();
        self.lu.solve(&z)
    }

    /// `S x = K_A⁻¹ M_L^{1/2} x`.
    pub fn sqrt_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z: Vec<f64> = x.iter().zip(&self.lumped).map(|(a, m)| a * m.sqrt()).collect();
        self.lu.solve(&z)
    }

    /// `Sᵀ x = M_L^{1/2} K_A⁻¹ x`.
    pub fn sqrt_transpose_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.lu.solve(x)?;
        Ok(y.iter().zip(&self.lumped).map(|(a, m)| a * m.sqrt()).collect())
    }

    /// Prior variance `(Γ_pr)_ii` at the listed dofs.
    pub fn variance(&self, dofs: &[usize]) -> Result<Vec<f64>> {
        let n = self.n_dof();
        dofs.iter()
            .map(|&i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                let col = self.lu.solve(&e)?;
                Ok(col.iter().zip(&self.lumped).map(|(c, m)| m * c * c).sum())
            })
            .collect()
    }

    /// `½ (m − m_pr)ᵀ Γ_pr⁻¹ (m − m_pr)`.
    pub fn cost(&self, m: &[f64]) -> f64 {
        let d: Vec<f64> = m.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        0.5 * dot(&d, &self.precision(&d))
    }
}

/// Data misfit of a predicted trajectory as per-time-index adjoint loads:
/// `Bᵀ (B c − d) / σ²`, zero where nothing is measured.
pub fn misfit_source(trajectory: &Trajectory, measurements: &MeasurementSet, sigma: f64) -> Result<Vec<Vec<f64>>> {
    if !(sigma > 0.0) {
        return Err(Error::contract("likelihood noise level must be > 0"));
    }
    if measurements.schedule.indices.iter().any(|&i| i > trajectory.n_steps()) {
        return Err(Error::contract("measurement schedule exceeds the trajectory"));
    }
    let pred = observe_at(trajectory.states(), &measurements.sensors, &measurements.schedule)?;
    let w: Vec<f64> = pred.iter().zip(&measurements.d).map(|(p, d)| (p - d) / (sigma * sigma)).collect();
    observe_transpose(&measurements.sensors, &measurements.schedule, trajectory.n_steps(), &w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CgPreconditioner {
    /// `Γ_pr`: two elliptic solves per application.
    Prior,
    None,
}

#[derive(Debug, Clone, Copy)]
pub struct MapOptions {
    /// Relative gradient reduction required.
    pub tol: f64,
    pub max_cg: usize,
    pub max_newton: usize,
    pub preconditioner: CgPreconditioner,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_cg: 500, max_newton: 3, preconditioner: CgPreconditioner::Prior }
    }
}

/// One CG iterate of the Newton system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgRecord {
    pub iteration: usize,
    pub residual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct InverseResult {
    pub m_map: Field,
    pub objective: f64,
    pub gradient_norm: f64,
    pub initial_gradient_norm: f64,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    /// Forward plus adjoint PDE solves.
    pub pde_solves: usize,
    pub history: Vec<CgRecord>,
}

/// The Gaussian-linear inverse problem for the initial condition.
pub struct InverseProblem<'a> {
    stepper: &'a Stepper,
    measurements: &'a MeasurementSet,
    prior: &'a Prior,
    sigma: f64,
    forward_solves: AtomicUsize,
    adjoint_solves: AtomicUsize,
}

impl<'a> InverseProblem<'a> {
    /// Uses the measurement noise level as likelihood σ.
    pub fn new(stepper: &'a Stepper, measurements: &'a MeasurementSet, prior: &'a Prior) -> Result<Self> {
        Self::with_sigma(stepper, measurements, prior, measurements.sigma)
    }

    /// Likelihood σ set independently of the data (needed for noise-free data).
    pub fn with_sigma(stepper: &'a Stepper, measurements: &'a MeasurementSet, prior: &'a Prior, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::contract("likelihood noise level must be > 0"));
        }
        let n = stepper.n_dof();
        if prior.n_dof() != n || measurements.sensors.space().n_dof() != n {
            return Err(Error::contract("prior, sensors and stepper must share the concentration space"));
        }
        if measurements.schedule.indices.iter().any(|&i| i > stepper.n_steps()) {
            return Err(Error::contract("measurement schedule exceeds the transport horizon"));
        }
        Ok(Self { stepper, measurements, prior, sigma, forward_solves: AtomicUsize::new(0), adjoint_solves: AtomicUsize::new(0) })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n_dof(&self) -> usize {
        self.stepper.n_dof()
    }

    pub fn n_data(&self) -> usize {
        self.measurements.len()
    }

    /// Forward plus adjoint solves so far.
    pub fn pde_solves(&self) -> usize {
        self.forward_solves.load(Ordering::Relaxed) + self.adjoint_solves.load(Ordering::Relaxed)
    }

    /// Parameter-to-observable map `F m`.
    pub fn forward(&self, m: &[f64]) -> Result<Vec<f64>> {
        self.forward_solves.fetch_add(1, Ordering::Relaxed);
        let last = self.measurements.schedule.indices.iter().copied().max().unwrap_or(0);
        let mut states = Vec::with_capacity(last + 1);
        states.push(m.to_vec());
        for n in 0..last {
            states.push(self.stepper.step(&states[n]).map_err(|e| e.at_step(n + 1))?);
        }
        observe_at(&states, &self.measurements.sensors, &self.measurements.schedule)
    }

    /// `F* w` for a data-space vector `w`.
    pub fn adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.adjoint_solves.fetch_add(1, Ordering::Relaxed);
        let loads = observe_transpose(&self.measurements.sensors, &self.measurements.schedule, self.stepper.n_steps(), w)?;
        Ok(self.stepper.solve_adjoint(&loads)?.initial)
    }

    fn residual(&self, m: &[f64]) -> Result<Vec<f64>> {
        let f = self.forward(m)?;
        Ok(f.iter().zip(&self.measurements.d).map(|(a, b)| a - b).collect())
    }

    /// `J(m) = ‖F m − d‖² / 2σ² + ½‖m − m_pr‖²_{Γ_pr⁻¹}`.
    pub fn objective(&self, m: &[f64]) -> Result<f64> {
        let r = self.residual(m)?;
        Ok(0.5 * dot(&r, &r) / (self.sigma * self.sigma) + self.prior.cost(m))
    }

    /// `∇J(m) = F*(F m − d)/σ² + Γ_pr⁻¹(m − m_pr)`: one forward, one adjoint solve.
    pub fn gradient(&self, m: &[f64]) -> Result<Vec<f64>> {
        let s2 = self.sigma * self.sigma;
        let r: Vec<f64> = self.residual(m)?.iter().map(|v| v / s2).collect();
        let mut g = self.adjoint(&r)?;
        let dm: Vec<f64> = m.iter().zip(self.prior.mean()).map(|(a, b)| a - b).collect();
        g.iter_mut().zip(self.prior.precision(&dm)).for_each(|(a, b)| *a += b);
        Ok(g)
    }

    /// Data-misfit Hessian `F* F x / σ²`.
    pub fn misfit_hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s2 = self.sigma * self.sigma;
        let f: Vec<f64> = self.forward(x)?.iter().map(|v| v / s2).collect();
        self.adjoint(&f)
    }

    /// Full Hessian `F* F x / σ² + Γ_pr⁻¹ x`.
    pub fn hessian_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = self.misfit_hessian(x)?;
        h.iter_mut().zip(self.prior.precision(x)).for_each(|(a, b)| *a += b);
        Ok(h)
    }

    /// MAP point by Newton-CG (one Newton step is exact; the loop re-checks
    /// the gradient).
    pub fn solve_map(&self, opts: MapOptions) -> Result<InverseResult> {
        let n = self.n_dof();
        let mut m = self.prior.mean().to_vec();
        let mut g = self.gradient(&m)?;
        let g0 = norm2(&g);
        let mut history = Vec::new();
        let (mut cg_total, mut newton) = (0, 0);
        let mut objective = self.objective(&m)?;
        let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
        while norm2(&g) > opts.tol * g0 && newton < opts.max_newton {
            newton += 1;
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let op = FnOperator::new(n, |x: &[f64], y: &mut [f64]| match self.hessian_apply(x) {
                Ok(h) => y.copy_from_slice(&h),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    y.iter_mut().for_each(|v| *v = f64::NAN);
                }
            });
            let prec = |r: &[f64], z: &mut [f64]| match self.prior.covariance(r) {
                Ok(c) => z.copy_from_slice(&c),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    z.iter_mut().for_each(|v| *v = f64::NAN);
                }
            };
            // J along the CG path, from the quadratic model (exact here):
            // J(m + x) = J(m) + ½ gᵀx − ½ xᵀr.
            let j0 = objective;
            let g_ref = &g;
            let offset = cg_total;
            let mut monitor = |it: &CgIterate<'_>| {
                let j = j0 + 0.5 * dot(g_ref, it.x) - 0.5 * dot(it.x, it.residual);
                history.push(CgRecord { iteration: offset + it.iteration, residual: it.relative_residual, objective: j });
            };
            let tol = opts.tol * g0 / norm2(&g);
            let pc: Option<&dyn Fn(&[f64], &mut [f64])> = match opts.preconditioner {
                CgPreconditioner::Prior => Some(&prec),
                CgPreconditioner::None => None,
            };
            let out = pcg(&op, pc, &rhs, None, tol.min(0.5), opts.max_cg, Some(&mut monitor));
            if let Some(e) = failure.borrow_mut().take() {
                return Err(e);
            }
            let out = out?;
            cg_total += out.iterations;
            m.iter_mut().zip(&out.x).for_each(|(a, d)| *a += d);
            g = self.gradient(&m)?;
            objective = self.objective(&m)?;
        }
        let gradient_norm = norm2(&g);
        Ok(InverseResult {
            m_map: Field::new(self.prior.space().clone(), 1, m)?,
            objective,
            gradient_norm,
            initial_gradient_norm: g0,
            newton_iterations: newton,
            cg_iterations: cg_total,
            pde_solves: self.pde_solves(),
            history,
        })
    }

    /// Leading `k` eigenpairs of the prior-preconditioned data Hessian
    /// `Sᵀ (F*F/σ²) S`.
    pub fn posterior_lowrank(&self, k: usize) -> Result<LowRankPosterior> {
        let n = self.n_dof();
        let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
        let mut apply = |x: &[f64], y: &mut [f64]| {
            let r = self
                .prior
                .sqrt_apply(x)
                .and_then(|sx| self.misfit_hessian(&sx))
                .and_then(|h| self.prior.sqrt_transpose_apply(&h));
            match r {
                Ok(v) => y.copy_from_slice(&v),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    y.iter_mut().for_each(|v| *v = 0.0);
                }
            }
        };
        let res = lanczos_lowrank(&mut apply, n, k);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let res = res?;
        let values: Vec<f64> = res.values.iter().map(|v| v.max(0.0)).collect();
        let directions = res.vectors.iter().map(|v| self.prior.sqrt_apply(v)).collect::<Result<Vec<_>>>()?;
        Ok(LowRankPosterior { values, directions, applications: res.applications })
    }
}

/// `Γ_post ≈ Γ_pr − Σ λ_i/(1+λ_i) (S v_i)(S v_i)ᵀ`.
#[derive(Debug, Clone)]
pub struct LowRankPosterior {
    /// Eigenvalues `λ_i ≥ 0`, descending.
    pub values: Vec<f64>,
    /// `S v_i`.
    pub directions: Vec<Vec<f64>>,
    /// Prior-preconditioned Hessian applications used.
    pub applications: usize,
}

impl LowRankPosterior {
    pub fn variance(&self, prior: &Prior, dofs: &[usize]) -> Result<Vec<f64>> {
        let pv = prior.variance(dofs)?;
        Ok(dofs
            .iter()
            .zip(pv)
            .map(|(&i, v)| {
                v - self.values.iter().zip(&self.directions).map(|(l, d)| l / (1.0 + l) * d[i] * d[i]).sum::<f64>()
            })
            .collect())
    }
}
