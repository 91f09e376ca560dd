//! Steady incompressible Navier-Stokes on Taylor-Hood (P2/P1) elements.
//!
//! Unknowns are ordered `[u_x, u_y, p]`. The momentum weak form is
//! `ν(∇u, ∇v) + (w·∇u, v) - (p, ∇·v) = 0` and continuity `-(q, ∇·u) = 0`,
//! so traction-free outflow is the natural boundary condition.

mod cavity;

use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{gmres, norm2, CsrMatrix, LuAnalysis, SparseLu};
use crate::meshfem::{assemble_matrix, Field, Form, FunctionSpace, Mesh, Point};

pub use cavity::{cavity_options, cavity_problem, lid_driven_cavity, CavityResult, CAVITY_SAMPLES};

pub type Profile = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

/// Velocity `μ · profile(x)` imposed on edges with `tag`.
#[derive(Clone)]
pub struct DirichletSpec {
    pub tag: i32,
    pub profile: Profile,
}

impl DirichletSpec {
    pub fn new(tag: i32, profile: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self { tag, profile: Arc::new(profile) }
    }

    pub fn no_slip(tag: i32) -> Self {
        Self::new(tag, |_| [0.0, 0.0])
    }
}

impl std::fmt::Debug for DirichletSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirichletSpec").field("tag", &self.tag).finish_non_exhaustive()
    }
}

/// Inflow `(0, min(1, (x-x0)/h, (x1-x)/h))` across a horizontal boundary:
/// unit normal speed, ramped to zero over one element at both ends.
pub fn blended_inflow(x0: f64, x1: f64, h: f64) -> Profile {
    Arc::new(move |p: Point| {
        let s = ((p[0] - x0) / h).min((x1 - p[0]) / h).clamp(0.0, 1.0);
        [0.0, s]
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonlinearMethod {
    /// Oseen fixed point throughout.
    Picard,
    /// Picard until the relative residual drops below `switch_tol`, then Newton.
    PicardNewton { switch_tol: f64 },
}

/// How each linearized system is solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearMethod {
    /// `Direct` up to [`DIRECT_LIMIT`] unknowns, `BlockGmres { tol: 1e-10 }` above.
    Auto,
    /// Sparse LU of the coupled system.
    Direct,
    /// GMRES on the coupled system with a block upper-triangular
    /// preconditioner: LU of the scalar momentum block and `-M_p/ν` for the
    /// Schur complement. Memory stays close to one scalar P2 factorization.
    BlockGmres { tol: f64 },
}

/// Largest coupled system factorized directly under [`LinearMethod::Auto`].
pub const DIRECT_LIMIT: usize = 150_000;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: NonlinearMethod,
    pub linear: LinearMethod,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, method: NonlinearMethod::Picard, linear: LinearMethod::Auto }
    }
}

#[derive(Clone)]
pub struct FlowProblem {
    mesh: Arc<Mesh>,
    nu: f64,
    dirichlet: Vec<DirichletSpec>,
    neumann_tags: Vec<i32>,
    mu_range: [f64; 2],
    length_scale: f64,
    convection: bool,
}

impl std::fmt::Debug for FlowProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowProblem")
            .field("nu", &self.nu)
            .field("dirichlet", &self.dirichlet)
            .field("neumann_tags", &self.neumann_tags)
            .field("mu_range", &self.mu_range)
            .finish_non_exhaustive()
    }
}

impl FlowProblem {
    /// Dirichlet specs apply in order; where edges of different tags meet,
    /// the later spec wins at the shared dofs.
    pub fn new(mesh: Arc<Mesh>, nu: f64, dirichlet: Vec<DirichletSpec>, neumann_tags: Vec<i32>) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::contract("viscosity must be positive"));
        }
        let mut seen: Vec<i32> = Vec::new();
        for t in dirichlet.iter().map(|d| d.tag).chain(neumann_tags.iter().copied()) {
            if seen.contains(&t) {
                return Err(Error::contract(format!("boundary tag {t} has more than one condition")));
            }
            seen.push(t);
        }
        for t in mesh.boundary_tags() {
            if !seen.contains(&t) {
                return Err(Error::contract(format!("boundary tag {t} has no condition")));
            }
        }
        let (lo, hi) = mesh.bounding_box();
        let length_scale = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        Ok(Self {
            mesh,
            nu,
            dirichlet,
            neumann_tags,
            mu_range: [0.5, 20.0],
            length_scale,
            convection: true,
        })
    }

    pub fn with_mu_range(mut self, range: [f64; 2]) -> Self {
        self.mu_range = range;
        self
    }

    /// Characteristic length used for the reported Reynolds number.
    pub fn with_length_scale(mut self, l: f64) -> Self {
        self.length_scale = l;
        self
    }

    /// Drops the convection term (Stokes flow).
    pub fn without_convection(mut self) -> Self {
        self.convection = false;
        self
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn mu_range(&self) -> [f64; 2] {
        self.mu_range
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn has_convection(&self) -> bool {
        self.convection
    }

    pub fn neumann_tags(&self) -> &[i32] {
        &self.neumann_tags
    }

    pub fn dirichlet_specs(&self) -> &[DirichletSpec] {
        &self.dirichlet
    }

    pub fn reynolds(&self, mu: f64) -> f64 {
        mu * self.length_scale / self.nu
    }

    /// Pressure is pinned only when no outflow boundary exists.
    pub fn pins_pressure(&self) -> bool {
        self.neumann_tags.iter().all(|t| !self.mesh.boundary_tags().contains(t))
    }

    pub fn discretize(&self) -> Result<Discretization> {
        Discretization::new(self)
    }
}

/// `Re = u_c L_c / ν`.
pub fn reynolds(u_c: f64, l_c: f64, nu: f64) -> Result<f64> {
    if !(u_c > 0.0 && l_c > 0.0 && nu > 0.0) {
        return Err(Error::contract("Reynolds number needs positive inputs"));
    }
    Ok(u_c * l_c / nu)
}

/// Parameter-independent pieces of the discrete Navier-Stokes system.
pub struct Discretization {
    pub velocity_space: Arc<FunctionSpace>,
    pub pressure_space: Arc<FunctionSpace>,
    /// `ν K` on one velocity component.
    pub viscous: CsrMatrix,
    /// Velocity mass matrix on one component.
    pub mass: CsrMatrix,
    /// `G_c` (velocity rows, pressure columns).
    pub gradient: [CsrMatrix; 2],
    /// `D_c = G_cᵀ` (pressure rows, velocity columns).
    pub divergence: [CsrMatrix; 2],
    /// Constrained rows of the full system (velocity and pinned pressure).
    pub constrained: Vec<usize>,
    /// Dirichlet values at unit `μ`, aligned with the full unknown vector.
    pub lifting_values: Vec<f64>,
    /// Mask of Dirichlet velocity unknowns (full layout).
    pub is_dirichlet: Vec<bool>,
    pub pressure_pin: Option<usize>,
    nu: f64,
    zero_vv: CsrMatrix,
    zero_pp: CsrMatrix,
    analysis: std::sync::OnceLock<LuAnalysis>,
    block_analysis: std::sync::OnceLock<LuAnalysis>,
    schur: std::sync::OnceLock<SparseLu>,
}

impl std::fmt::Debug for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discretization").field("n_unknowns", &self.n_unknowns()).finish_non_exhaustive()
    }
}

impl Discretization {
    fn new(problem: &FlowProblem) -> Result<Self> {
        let v2 = FunctionSpace::new(problem.mesh.clone(), 2)?;
        let q1 = FunctionSpace::new(problem.mesh.clone(), 1)?;
        let (nv, np) = (v2.n_dof(), q1.n_dof());
        let viscous = assemble_matrix(&v2, &v2, &Form::Stiffness { k: problem.nu })?;
        let mass = assemble_matrix(&v2, &v2, &Form::Mass)?;
        let gradient = [
            assemble_matrix(&v2, &q1, &Form::Gradient { component: 0 })?,
            assemble_matrix(&v2, &q1, &Form::Gradient { component: 1 })?,
        ];
        let divergence = [gradient[0].transpose(), gradient[1].transpose()];
        let n = 2 * nv + np;
        let mut lifting_values = vec![0.0; n];
        let mut is_dirichlet = vec![false; n];
        for spec in &problem.dirichlet {
            for d in v2.boundary_dofs(&[spec.tag]) {
                let g = (spec.profile)(v2.dof_coords()[d]);
                lifting_values[d] = g[0];
                lifting_values[nv + d] = g[1];
                is_dirichlet[d] = true;
                is_dirichlet[nv + d] = true;
            }
        }
        let mut constrained: Vec<usize> = (0..n).filter(|&i| is_dirichlet[i]).collect();
        let pressure_pin = problem.pins_pressure().then_some(2 * nv);
        if let Some(p) = pressure_pin {
            constrained.push(p);
        }
        Ok(Self {
            nu: problem.nu,
            zero_vv: v2.pattern().zeroed_like(),
            zero_pp: CsrMatrix::from_diagonal(&vec![0.0; np]),
            velocity_space: v2,
            pressure_space: q1,
            viscous,
            mass,
            gradient,
            divergence,
            constrained,
            lifting_values,
            is_dirichlet,
            pressure_pin,
            analysis: std::sync::OnceLock::new(),
            block_analysis: std::sync::OnceLock::new(),
            schur: std::sync::OnceLock::new(),
        })
    }

    pub fn n_velocity(&self) -> usize {
        self.velocity_space.n_dof()
    }

    pub fn n_pressure(&self) -> usize {
        self.pressure_space.n_dof()
    }

    pub fn n_unknowns(&self) -> usize {
        2 * self.n_velocity() + self.n_pressure()
    }

    /// Full system matrix. `convection` is `N(w)` on one component;
    /// `reaction[c][d]` are the `∂_d w_c` Newton blocks.
    pub fn system(&self, convection: Option<&CsrMatrix>, reaction: Option<&[[CsrMatrix; 2]; 2]>) -> Result<CsrMatrix> {
        let diag = match convection {
            Some(n) => self.viscous.linear_combination(1.0, n, 1.0)?,
            None => self.viscous.clone(),
        };
        let (b00, b01, b10, b11);
        let (m00, m01, m10, m11): (&CsrMatrix, &CsrMatrix, &CsrMatrix, &CsrMatrix) = match reaction {
            Some(r) => {
                b00 = diag.linear_combination(1.0, &r[0][0], 1.0)?;
                b01 = self.zero_vv.linear_combination(1.0, &r[0][1], 1.0)?;
                b10 = self.zero_vv.linear_combination(1.0, &r[1][0], 1.0)?;
                b11 = diag.linear_combination(1.0, &r[1][1], 1.0)?;
                (&b00, &b01, &b10, &b11)
            }
            None => (&diag, &self.zero_vv, &self.zero_vv, &diag),
        };
        let (nv, np) = (self.n_velocity(), self.n_pressure());
        let mut a = CsrMatrix::from_blocks(
            &[
                vec![Some(m00), Some(m01), Some(&self.gradient[0])],
                vec![Some(m10), Some(m11), Some(&self.gradient[1])],
                vec![Some(&self.divergence[0]), Some(&self.divergence[1]), Some(&self.zero_pp)],
            ],
            &[nv, nv, np],
            &[nv, nv, np],
        )?;
        a.set_identity_rows(&self.constrained);
        Ok(a)
    }

    /// Right-hand side at parameter `μ`.
    pub fn rhs(&self, mu: f64) -> Vec<f64> {
        self.lifting_values.iter().map(|g| mu * g).collect()
    }

    pub fn velocity_field(&self, x: &[f64]) -> Result<Field> {
        Field::new(self.velocity_space.clone(), 2, x[..2 * self.n_velocity()].to_vec())
    }

    pub fn pressure_field(&self, x: &[f64]) -> Result<Field> {
        Field::new(self.pressure_space.clone(), 1, x[2 * self.n_velocity()..].to_vec())
    }

    pub fn convection_matrix(&self, w: &Field) -> Result<CsrMatrix> {
        let v = &*self.velocity_space;
        assemble_matrix(v, v, &Form::Convection { velocity: w })
    }

    pub fn reaction_blocks(&self, w: &Field) -> Result<[[CsrMatrix; 2]; 2]> {
        let v = &*self.velocity_space;
        let blk = |c, d| assemble_matrix(v, v, &Form::ConvectionGradient { velocity: w, component: c, direction: d });
        Ok([[blk(0, 0)?, blk(0, 1)?], [blk(1, 0)?, blk(1, 1)?]])
    }

    fn factor(&self, a: &CsrMatrix) -> Result<SparseLu> {
        if let Some(an) = self.analysis.get() {
            if let Ok(lu) = SparseLu::with_analysis(an, a) {
                return Ok(lu);
            }
        }
        let an = LuAnalysis::new(a)?;
        let lu = SparseLu::with_analysis(&an, a)?;
        let _ = self.analysis.set(an);
        Ok(lu)
    }

    /// Scalar momentum block `νK + N(w)` with identity rows on Dirichlet dofs.
    pub fn momentum_block(&self, convection: Option<&CsrMatrix>) -> Result<CsrMatrix> {
        let mut f = match convection {
            Some(n) => self.viscous.linear_combination(1.0, n, 1.0)?,
            None => self.viscous.clone(),
        };
        let rows: Vec<usize> = (0..self.n_velocity()).filter(|&i| self.is_dirichlet[i]).collect();
        f.set_identity_rows(&rows);
        Ok(f)
    }

    fn factor_block(&self, f: &CsrMatrix) -> Result<SparseLu> {
        if let Some(an) = self.block_analysis.get() {
            if let Ok(lu) = SparseLu::with_analysis(an, f) {
                return Ok(lu);
            }
        }
        let an = LuAnalysis::new(f)?;
        let lu = SparseLu::with_analysis(&an, f)?;
        let _ = self.block_analysis.set(an);
        Ok(lu)
    }

    fn schur_factor(&self) -> Result<&SparseLu> {
        if let Some(lu) = self.schur.get() {
            return Ok(lu);
        }
        let q = &*self.pressure_space;
        let mut s = assemble_matrix(q, q, &Form::Mass)?;
        s.scale(-1.0 / self.nu);
        if let Some(pin) = self.pressure_pin {
            s.set_identity_rows(&[pin - 2 * self.n_velocity()]);
        }
        let lu = SparseLu::new(&s)?;
        Ok(self.schur.get_or_init(|| lu))
    }

    /// Solves `a x = b` by GMRES preconditioned with the momentum block `f`.
    fn solve_block(&self, a: &CsrMatrix, f: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, tol: f64) -> Result<Vec<f64>> {
        let nv = self.n_velocity();
        let (fl, sl) = (self.factor_block(f)?, self.schur_factor()?);
        let n = self.n_unknowns();
        let precond = |r: &[f64], z: &mut [f64]| {
            let (zu, zp) = z.split_at_mut(2 * nv);
            zp.copy_from_slice(&r[2 * nv..]);
            let ok = sl.solve_in_place(zp).is_ok();
            // velocity part of a·[0; p] is the constrained gradient term
            let mut full = vec![0.0; n];
            full[2 * nv..].copy_from_slice(zp);
            let mut gp = vec![0.0; n];
            a.mul_unchecked(&full, &mut gp);
            for i in 0..2 * nv {
                zu[i] = r[i] - gp[i];
            }
            let ok = ok && fl.solve_in_place(&mut zu[..nv]).is_ok() && fl.solve_in_place(&mut zu[nv..]).is_ok();
            if !ok {
                z.iter_mut().for_each(|v| *v = f64::NAN);
            }
        };
        let out = gmres(a, precond, b, x0, tol, 200, 4000)?;
        log::debug!("block GMRES: {} iterations", out.iterations);
        Ok(out.x)
    }

    /// Stacked divergence `[D_0 D_1]` applied to velocity unknowns.
    pub fn divergence_of(&self, velocity: &[f64]) -> Vec<f64> {
        let nv = self.n_velocity();
        let mut out = self.divergence[0].spmv(&velocity[..nv]).expect("sizes");
        let dy = self.divergence[1].spmv(&velocity[nv..2 * nv]).expect("sizes");
        out.iter_mut().zip(dy).for_each(|(a, b)| *a += b);
        out
    }
}

#[derive(Debug, Clone)]
pub struct FlowField {
    pub velocity: Field,
    pub pressure: Option<Field>,
    pub mu: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub seconds: f64,
}

impl FlowField {
    /// Velocity followed by pressure (when present) in the solver layout.
    pub fn unknowns(&self) -> Vec<f64> {
        let mut x = self.velocity.values().to_vec();
        if let Some(p) = &self.pressure {
            x.extend_from_slice(p.values());
        }
        x
    }
}

/// Solves the steady Navier-Stokes problem at inflow parameter `μ`.
pub fn solve_navier_stokes(problem: &FlowProblem, mu: f64, opts: SolveOptions) -> Result<FlowField> {
    let disc = problem.discretize()?;
    solve_with(problem, &disc, mu, opts)
}

/// As [`solve_navier_stokes`], reusing a prebuilt discretization.
pub fn solve_with(problem: &FlowProblem, disc: &Discretization, mu: f64, opts: SolveOptions) -> Result<FlowField> {
    let [lo, hi] = problem.mu_range;
    if !(mu >= lo - 1e-12 && mu <= hi + 1e-12) {
        return Err(Error::contract(format!("μ = {mu} outside [{lo}, {hi}]")));
    }
    let start = Instant::now();
    let re = problem.reynolds(mu);
    let fail = |reason: String| Error::Flow { mu, reynolds: re, reason };
    let b = disc.rhs(mu);
    let bnorm = norm2(&b);
    let finish = |x: Vec<f64>, res: f64, it: usize, hist: Vec<f64>| -> Result<FlowField> {
        Ok(FlowField {
            velocity: disc.velocity_field(&x)?,
            pressure: Some(disc.pressure_field(&x)?),
            mu,
            residual_norm: res,
            iterations: it,
            residual_history: hist,
            seconds: start.elapsed().as_secs_f64(),
        })
    };
    if bnorm == 0.0 {
        return finish(vec![0.0; disc.n_unknowns()], 0.0, 0, vec![]);
    }
    let solve = |a: &CsrMatrix, conv: Option<&CsrMatrix>, rhs: &[f64], x0: Option<&[f64]>| -> Result<Vec<f64>> {
        let linear = match opts.linear {
            LinearMethod::Auto if disc.n_unknowns() > DIRECT_LIMIT => LinearMethod::BlockGmres { tol: 1e-10 },
            LinearMethod::Auto => LinearMethod::Direct,
            m => m,
        };
        match linear {
            LinearMethod::Auto | LinearMethod::Direct => disc.factor(a)?.solve(rhs),
            LinearMethod::BlockGmres { tol } => {
                let f = disc.momentum_block(conv)?;
                disc.solve_block(a, &f, rhs, x0, tol)
            }
        }
    };
    let stokes = disc.system(None, None)?;
    let mut x = solve(&stokes, None, &b, None).map_err(|e| fail(e.to_string()))?;
    if !problem.convection {
        let r = residual(&stokes, &x, &b) / bnorm;
        return finish(x, r, 0, vec![r]);
    }
    let mut history = Vec::new();
    let mut newton = false;
    for it in 0..=opts.max_iter {
        let w = disc.velocity_field(&x).map_err(|e| fail(e.to_string()))?;
        let n = disc.convection_matrix(&w)?;
        let a = disc.system(Some(&n), None)?;
        let res = residual(&a, &x, &b) / bnorm;
        history.push(res);
        log::debug!("flow μ={mu} iteration {it}: relative residual {res:.3e}");
        if res <= opts.tol {
            return finish(x, res, it, history);
        }
        if it == opts.max_iter {
            break;
        }
        if history.len() > 5 && res > (1.0 - 1e-3) * history[history.len() - 6] {
            return Err(fail(format!(
                "stagnated at relative residual {res:.3e} after {it} iterations"
            )));
        }
        if !res.is_finite() {
            return Err(fail("residual is not finite".into()));
        }
        if let NonlinearMethod::PicardNewton { switch_tol } = opts.method {
            newton |= res < switch_tol;
        }
        if newton {
            let r = disc.reaction_blocks(&w)?;
            let j = disc.system(Some(&n), Some(&r))?;
            let mut rvec = a.spmv(&x)?;
            rvec.iter_mut().zip(&b).for_each(|(r, bi)| *r -= bi);
            let dx = solve(&j, Some(&n), &rvec, None).map_err(|e| fail(e.to_string()))?;
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi -= d);
        } else {
            x = solve(&a, Some(&n), &b, Some(&x)).map_err(|e| fail(e.to_string()))?;
        }
    }
    Err(fail(format!(
        "no convergence in {} iterations (relative residual {:.3e})",
        opts.max_iter,
        history.last().copied().unwrap_or(f64::NAN)
    )))
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let mut r = a.spmv(x).expect("square system");
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= bi);
    norm2(&r)
}
