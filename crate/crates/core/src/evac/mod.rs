//! Continuum crowd evacuation of Hughes type with a contamination penalty.
//!
//! The walking speed is `f(ρ, c) = v_max (1 − ρ/ρ_max)₊ p(c)`, floored at
//! `1e-3 v_max` for the Eikonal solve, with `p(c) = 1/(1 + α c₊)` (or
//! `exp(−α c₊)`). The potential solves `|∇φ| = 1/f` with `φ = 0` on exits,
//! and the density moves down `−∇φ` by `ρ_t + div(ρ v(ρ) p(c) e) = 0`,
//! `e = −∇φ/|∇φ|`.
//!
//! Density lives on the vertices of the mesh with median-dual control
//! volumes. Fluxes through dual faces use the demand/supply (Godunov) flux
//! of the concave `q(ρ) = ρ v_max (1 − ρ/ρ_max)`, which keeps `0 ≤ ρ ≤ ρ_max`
//! under the Courant limit and makes the mass budget exact.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::meshfem::{assemble_matrix, Field, Form, FunctionSpace, Point};
use crate::transport::Trajectory;

const SPEED_FLOOR: f64 = 1e-3;
const MAX_SWEEPS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    /// `1/(1 + α c)`.
    Rational,
    /// `exp(−α c)`.
    Exponential,
}

#[derive(Debug, Clone)]
pub struct CrowdConfig {
    pub v_max: f64,
    pub rho_max: f64,
    pub alpha: f64,
    pub penalty: Penalty,
    pub exit_tags: Vec<i32>,
}

impl CrowdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > 0.0 && self.rho_max > 0.0 && self.alpha >= 0.0) {
            return Err(Error::contract("crowd needs v_max > 0, rho_max > 0, alpha >= 0"));
        }
        if self.exit_tags.is_empty() {
            return Err(Error::contract("crowd needs at least one exit tag"));
        }
        Ok(())
    }

    pub fn penalty_factor(&self, c: f64) -> f64 {
        let c = c.max(0.0);
        match self.penalty {
            Penalty::Rational => 1.0 / (1.0 + self.alpha * c),
            Penalty::Exponential => (-self.alpha * c).exp(),
        }
    }

    /// Eikonal speed at one point.
    pub fn speed(&self, rho: f64, c: f64) -> f64 {
        let free = (1.0 - rho / self.rho_max).max(0.0);
        (self.v_max * free * self.penalty_factor(c)).clamp(SPEED_FLOOR * self.v_max, self.v_max)
    }
}

/// Nodal walking speed.
pub fn walking_speed(rho: &[f64], c: &[f64], config: &CrowdConfig) -> Result<Vec<f64>> {
    if rho.len() != c.len() {
        return Err(Error::DimensionMismatch { expected: rho.len(), found: c.len() });
    }
    Ok(rho.iter().zip(c).map(|(&r, &ci)| config.speed(r, ci)).collect())
}

/// Mesh data shared by the Eikonal solver and the density update.
#[derive(Debug)]
pub struct CrowdModel {
    space: Arc<FunctionSpace>,
    config: CrowdConfig,
    /// Median-dual cell areas.
    volumes: Vec<f64>,
    /// Per triangle and local edge `(l, l+1)`: dual-face normal times length,
    /// oriented from `l` to `l+1`.
    faces: Vec<[[f64; 2]; 3]>,
    /// `(vertex, triangle, outward normal × half length)` on exit edges.
    exit_faces: Vec<(usize, usize, [f64; 2])>,
    exits: Vec<usize>,
    vertex_triangles: Vec<Vec<usize>>,
    orderings: Vec<Vec<usize>>,
    /// Effective dual-cell width `min |V_i| / |∂V_i|`.
    h_min: f64,
    mass: CsrMatrix,
}

#[derive(Debug, Clone)]
pub struct CrowdState {
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct CrowdRun {
    pub times: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    /// Potential used for the step leaving each time (the last is the final state's).
    pub phi: Vec<Vec<f64>>,
    /// `Σ ρ_i |V_i|` at every time.
    pub mass: Vec<f64>,
    /// Mass leaving through exits during each step.
    pub outflow: Vec<f64>,
}

impl CrowdRun {
    /// Largest `|m_n − m_{n+1} − out_n| / m_n` over the run.
    pub fn worst_mass_balance(&self) -> f64 {
        self.mass
            .windows(2)
            .zip(&self.outflow)
            .map(|(w, o)| if w[0] > 0.0 { (w[0] - w[1] - o).abs() / w[0] } else { 0.0 })
            .fold(0.0, f64::max)
    }
}

impl CrowdModel {
    pub fn new(space: Arc<FunctionSpace>, config: CrowdConfig) -> Result<Self> {
        config.validate()?;
        if space.order() != 1 {
            return Err(Error::contract("crowd model runs on P1 vertices"));
        }
        let mesh = space.mesh().clone();
        let nv = mesh.n_vertices();
        let mut volumes = vec![0.0; nv];
        let mut perimeter = vec![0.0; nv];
        let mut faces = Vec::with_capacity(mesh.n_triangles());
        let mut vertex_triangles = vec![Vec::new(); nv];
        for t in 0..mesh.n_triangles() {
            let tri = mesh.triangles()[t];
            let p: Vec<Point> = tri.iter().map(|&v| mesh.vertices()[v]).collect();
            let g = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
            let a = mesh.area(t);
            let mut f = [[0.0; 2]; 3];
            for l in 0..3 {
                let (i, j) = (l, (l + 1) % 3);
                let m = [(p[i][0] + p[j][0]) / 2.0, (p[i][1] + p[j][1]) / 2.0];
                let s = [g[0] - m[0], g[1] - m[1]];
                let mut n = [s[1], -s[0]];
                if n[0] * (p[j][0] - p[i][0]) + n[1] * (p[j][1] - p[i][1]) < 0.0 {
                    n = [-n[0], -n[1]];
                }
                f[l] = n;
                let len = n[0].hypot(n[1]);
                perimeter[tri[i]] += len;
                perimeter[tri[j]] += len;
            }
            faces.push(f);
            for &v in &tri {
                volumes[v] += a / 3.0;
                vertex_triangles[v].push(t);
            }
        }
        let mut exit_faces = Vec::new();
        let mut is_exit = vec![false; nv];
        for (i, be) in mesh.boundary_edges().iter().enumerate() {
            if !config.exit_tags.contains(&be.tag) {
                continue;
            }
            let (n, len) = mesh.boundary_normal(be);
            let t = mesh.boundary_edge_triangle(i);
            for &v in &be.vertices {
                exit_faces.push((v, t, [n[0] * len / 2.0, n[1] * len / 2.0]));
                perimeter[v] += len / 2.0;
                is_exit[v] = true;
            }
        }
        let exits: Vec<usize> = (0..nv).filter(|&v| is_exit[v]).collect();
        if exits.is_empty() {
            return Err(Error::contract(format!("no boundary edge carries an exit tag {:?}", config.exit_tags)));
        }
        let h_min = (0..nv).map(|v| volumes[v] / perimeter[v]).fold(f64::INFINITY, f64::min);
        let orderings = [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]]
            .iter()
            .map(|d| {
                let mut o: Vec<usize> = (0..nv).collect();
                let key = |v: usize| d[0] * mesh.vertices()[v][0] + d[1] * mesh.vertices()[v][1];
                o.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
                o
            })
            .collect();
        let mass = assemble_matrix(&space, &space, &Form::Mass)?;
        Ok(Self { space, config, volumes, faces, exit_faces, exits, vertex_triangles, orderings, h_min, mass })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn config(&self) -> &CrowdConfig {
        &self.config
    }

    pub fn exits(&self) -> &[usize] {
        &self.exits
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Consistent P1 mass matrix (used by [`exposure`]).
    pub fn mass_matrix(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn total_mass(&self, rho: &[f64]) -> f64 {
        rho.iter().zip(&self.volumes).map(|(r, v)| r * v).sum()
    }

    /// Travel-time potential for a nodal speed, by fast sweeping with the
    /// exact minimization of the linear-interpolation Hopf-Lax update on
    /// each triangle.
    pub fn eikonal(&self, speed: &[f64]) -> Result<Vec<f64>> {
        let mesh = self.space.mesh();
        let nv = mesh.n_vertices();
        if speed.len() != nv {
            return Err(Error::DimensionMismatch { expected: nv, found: speed.len() });
        }
        if speed.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::contract("Eikonal speed must be positive"));
        }
        let mut phi = vec![f64::INFINITY; nv];
        for &e in &self.exits {
            phi[e] = 0.0;
        }
        let xs = mesh.vertices();
        for sweep in 0..MAX_SWEEPS {
            let mut changed = false;
            for v in &self.orderings[sweep % 4] {
                let v = *v;
                if phi[v] == 0.0 && self.exits.binary_search(&v).is_ok() {
                    continue;
                }
                let s = 1.0 / speed[v];
                let mut best = phi[v];
                for &t in &self.vertex_triangles[v] {
                    let tri = mesh.triangles()[t];
                    let l = tri.iter().position(|&x| x == v).expect("adjacency");
                    let (a, b) = (tri[(l + 1) % 3], tri[(l + 2) % 3]);
                    let cand = hopf_lax(xs[v], xs[a], phi[a], xs[b], phi[b], s);
                    if cand < best {
                        best = cand;
                    }
                }
                if best < phi[v] {
                    let scale = if phi[v].is_finite() { phi[v] } else { f64::INFINITY };
                    if scale - best > 1e-13 * best.max(1e-300) {
                        changed = true;
                    }
                    phi[v] = best;
                }
            }
            if !changed && sweep >= 3 {
                if phi.iter().any(|p| !p.is_finite()) {
                    return Err(Error::Degenerate("part of the domain cannot reach an exit".into()));
                }
                return Ok(phi);
            }
        }
        Err(Error::NonConvergence { solver: "fast sweeping", iterations: MAX_SWEEPS, residual: f64::NAN, history: vec![] })
    }

    /// Dual-cell Courant number `Δt v_max / h_min`.
    pub fn courant(&self, dt: f64) -> f64 {
        dt * self.config.v_max / self.h_min
    }

    /// Largest admissible step.
    pub fn max_dt(&self) -> f64 {
        self.h_min / self.config.v_max
    }

    /// Potential for the current density and concentration.
    pub fn potential(&self, rho: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        self.eikonal(&walking_speed(rho, c, &self.config)?)
    }

    /// One explicit step; returns the new state and the mass that left
    /// through exits.
    pub fn step(&self, state: &CrowdState, c: &[f64], dt: f64) -> Result<(CrowdState, f64)> {
        let cfl = self.courant(dt);
        if cfl > 1.0 {
            return Err(Error::Cfl { cfl });
        }
        let nv = self.volumes.len();
        if state.rho.len() != nv || c.len() != nv {
            return Err(Error::DimensionMismatch { expected: nv, found: state.rho.len().min(c.len()) });
        }
        let phi = self.potential(&state.rho, c)?;
        let cfg = &self.config;
        let rc = 0.5 * cfg.rho_max;
        let pen: Vec<f64> = c.iter().map(|&ci| cfg.penalty_factor(ci)).collect();
        let q = |r: f64| r * cfg.v_max * (1.0 - r / cfg.rho_max);
        let demand = |i: usize| q(state.rho[i].clamp(0.0, rc)) * pen[i];
        let supply = |i: usize| q(state.rho[i].clamp(rc, cfg.rho_max)) * pen[i];
        let mesh = self.space.mesh();
        let mut div = vec![0.0; nv];
        let mut dirs = Vec::with_capacity(mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let tri = mesh.triangles()[t];
            let g = mesh.barycentric_gradients(t);
            let mut grad = [0.0; 2];
            for l in 0..3 {
                grad[0] += phi[tri[l]] * g[l][0];
                grad[1] += phi[tri[l]] * g[l][1];
            }
            let n = grad[0].hypot(grad[1]);
            let e = if n > 0.0 { [-grad[0] / n, -grad[1] / n] } else { [0.0, 0.0] };
            dirs.push(e);
            for l in 0..3 {
                let (i, j) = (tri[l], tri[(l + 1) % 3]);
                let nf = self.faces[t][l];
                let vn = e[0] * nf[0] + e[1] * nf[1];
                let flux = if vn > 0.0 { demand(i).min(supply(j)) * vn } else { -demand(j).min(supply(i)) * -vn };
                div[i] += flux;
                div[j] -= flux;
            }
        }
        let mut out = 0.0;
        for &(v, t, nf) in &self.exit_faces {
            let e = dirs[t];
            let vn = e[0] * nf[0] + e[1] * nf[1];
            if vn > 0.0 {
                let f = demand(v) * vn;
                div[v] += f;
                out += f;
            }
        }
        let rho = state.rho.iter().zip(&div).zip(&self.volumes).map(|((r, d), v)| r - dt * d / v).collect();
        Ok((CrowdState { rho, phi, t: state.t + dt }, dt * out))
    }

    /// `n_steps` steps of size `dt`; `concentration(t)` supplies the nodal
    /// concentration at the start of each step.
    pub fn run(
        &self,
        rho0: &[f64],
        concentration: &dyn Fn(f64) -> Result<Vec<f64>>,
        dt: f64,
        n_steps: usize,
    ) -> Result<CrowdRun> {
        if rho0.iter().any(|&r| !(r >= 0.0 && r <= self.config.rho_max)) {
            return Err(Error::contract("initial density must lie in [0, rho_max]"));
        }
        let mut state = CrowdState { rho: rho0.to_vec(), phi: vec![], t: 0.0 };
        let mut run = CrowdRun {
            times: vec![0.0],
            rho: vec![rho0.to_vec()],
            phi: vec![],
            mass: vec![self.total_mass(rho0)],
            outflow: vec![],
        };
        for n in 0..n_steps {
            let c = concentration(state.t)?;
            let (next, out) = self.step(&state, &c, dt).map_err(|e| e.at_step(n + 1))?;
            run.phi.push(next.phi.clone());
            state = next;
            run.times.push(state.t);
            run.mass.push(self.total_mass(&state.rho));
            run.rho.push(state.rho.clone());
            run.outflow.push(out);
        }
        let c = concentration(state.t)?;
        run.phi.push(self.potential(&state.rho, &c)?);
        Ok(run)
    }
}

/// Minimum over `P ∈ [A, B]` of `φ(P) + s |C − P|` with `φ` linear on the edge.
fn hopf_lax(c: Point, a: Point, pa: f64, b: Point, pb: f64, s: f64) -> f64 {
    let dist = |p: Point, q: Point| (p[0] - q[0]).hypot(p[1] - q[1]);
    let mut best = (pa + s * dist(c, a)).min(pb + s * dist(c, b));
    if !(pa.is_finite() && pb.is_finite()) {
        return best;
    }
    let e = [b[0] - a[0], b[1] - a[1]];
    let le = e[0].hypot(e[1]);
    let w = [c[0] - a[0], c[1] - a[1]];
    let tf = (w[0] * e[0] + w[1] * e[1]) / (le * le);
    let h = (w[0] * e[1] - w[1] * e[0]).abs() / le;
    let qv = -(pb - pa) / (s * le);
    if qv.abs() < 1.0 && h > 0.0 {
        let u = qv * h / (1.0 - qv * qv).sqrt();
        let t = (tf + u / le).clamp(0.0, 1.0);
        let p = [a[0] + t * e[0], a[1] + t * e[1]];
        best = best.min(pa + t * (pb - pa) + s * dist(c, p));
    }
    best
}

/// Concentration of a transport trajectory at time `t`, linear between
/// stored states and held at the final state beyond the horizon.
pub fn sample_trajectory(trajectory: &Trajectory, t: f64) -> Vec<f64> {
    let x = (t / trajectory.dt()).max(0.0);
    let n = trajectory.n_steps();
    let i = (x.floor() as usize).min(n);
    if i >= n {
        return trajectory.state(n).to_vec();
    }
    let w = x - i as f64;
    trajectory.state(i).iter().zip(trajectory.state(i + 1)).map(|(a, b)| (1.0 - w) * a + w * b).collect()
}

/// `∫∫ ρ c dΩ dt` with the P1 mass matrix in space and the trapezoidal rule in time.
pub fn exposure(mass: &CsrMatrix, rho: &[Vec<f64>], c: &[Vec<f64>], dt: f64) -> Result<f64> {
    if rho.len() != c.len() {
        return Err(Error::contract(format!("time grids differ: {} density vs {} concentration states", rho.len(), c.len())));
    }
    if rho.is_empty() {
        return Ok(0.0);
    }
    let mut vals = Vec::with_capacity(rho.len());
    for (r, ci) in rho.iter().zip(c) {
        let mc = mass.spmv(ci)?;
        if r.len() != mc.len() {
            return Err(Error::DimensionMismatch { expected: mc.len(), found: r.len() });
        }
        vals.push(r.iter().zip(&mc).map(|(a, b)| a * b).sum::<f64>());
    }
    let n = vals.len();
    if n == 1 {
        return Ok(0.0);
    }
    Ok(dt * (vals[1..n - 1].iter().sum::<f64>() + 0.5 * (vals[0] + vals[n - 1])))
}

/// Density field wrapper on the model's space.
pub fn density_field(model: &CrowdModel, rho: &[f64]) -> Result<Field> {
    Field::new(model.space().clone(), 1, rho.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshfem::{rect_mesh, Rect, TAG_EAST, TAG_WEST};

    fn config(alpha: f64) -> CrowdConfig {
        CrowdConfig { v_max: 1.4, rho_max: 5.0, alpha, penalty: Penalty::Rational, exit_tags: vec![TAG_EAST] }
    }

    #[test]
    fn speed_cases() {
        let c = config(2.0);
        assert_eq!(c.speed(0.0, 0.0), 1.4);
        assert!((c.speed(5.0, 0.0) - 1.4e-3).abs() < 1e-15);
        assert!((config(0.0).speed(1.0, 7.0) - 1.4 * 0.8).abs() < 1e-15);
        assert!((c.speed(0.0, 1.0) - 1.4 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hopf_lax_plane_wave() {
        // φ = x on both edge ends, C one unit further along x.
        let v = hopf_lax([1.0, 0.5], [0.0, 0.0], 0.0, [0.0, 1.0], 0.0, 1.0);
        assert!((v - 1.0).abs() < 1e-14);
        // oblique wave φ = (x + y)/√2
        let r = std::f64::consts::SQRT_2;
        let v = hopf_lax([1.5, 1.0], [0.0, 0.0], 0.0, [2.0, 0.0], 2.0 / r, 1.0);
        assert!((v - 2.5 / r).abs() < 1e-14);
    }

    #[test]
    fn plane_wave_is_exact_and_obstacle_lengthens_paths() {
        let mesh = Arc::new(rect_mesh(20, 10, [0.0, 20.0], [0.0, 10.0], &[]).unwrap());
        let sp = FunctionSpace::new(mesh.clone(), 1).unwrap();
        let m = CrowdModel::new(sp.clone(), config(0.0)).unwrap();
        let phi = m.eikonal(&vec![2.0; mesh.n_vertices()]).unwrap();
        for (v, p) in mesh.vertices().iter().enumerate() {
            assert!((phi[v] - (20.0 - p[0]) / 2.0).abs() < 1e-12);
        }
        let holed = Arc::new(rect_mesh(20, 10, [0.0, 20.0], [0.0, 10.0], &[Rect::new(8.0, 12.0, 2.0, 8.0)]).unwrap());
        let sph = FunctionSpace::new(holed.clone(), 1).unwrap();
        let mh = CrowdModel::new(sph, config(0.0)).unwrap();
        let ph = mh.eikonal(&vec![1.0; holed.n_vertices()]).unwrap();
        let v = holed.vertices().iter().position(|p| p[0] == 6.0 && p[1] == 5.0).unwrap();
        assert!(ph[v] > 14.0 + 0.5);
    }

    #[test]
    fn empty_crowd_stays_empty_and_mass_balances() {
        let mesh = Arc::new(rect_mesh(20, 8, [0.0, 20.0], [0.0, 8.0], &[]).unwrap());
        let sp = FunctionSpace::new(mesh.clone(), 1).unwrap();
        let m = CrowdModel::new(sp.clone(), config(0.0)).unwrap();
        let zero = vec![0.0; mesh.n_vertices()];
        let dt = 0.9 * m.max_dt();
        let r = m.run(&zero, &|_| Ok(vec![0.0; zero.len()]), dt, 5).unwrap();
        assert!(r.rho.iter().flatten().all(|v| *v == 0.0));
        let rho0: Vec<f64> = mesh.vertices().iter().map(|p| if p[0] < 6.0 { 3.0 } else { 0.0 }).collect();
        let r = m.run(&rho0, &|_| Ok(vec![0.0; zero.len()]), dt, 200).unwrap();
        assert!(r.worst_mass_balance() < 1e-12);
        assert!(r.mass.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(r.outflow.iter().sum::<f64>() > 0.0);
        assert!(r.rho.iter().flatten().all(|&v| v >= -1e-12 && v <= 5.0 * (1.0 + 1e-12)));
        assert!(m.step(&CrowdState { rho: rho0, phi: vec![], t: 0.0 }, &zero, 2.0 * m.max_dt()).is_err());
        let _ = TAG_WEST;
    }

    #[test]
    fn exposure_unit_case() {
        let mesh = Arc::new(rect_mesh(3, 3, [0.0, 1.0], [0.0, 1.0], &[]).unwrap());
        let sp = FunctionSpace::new(mesh.clone(), 1).unwrap();
        let m = CrowdModel::new(sp, config(0.0)).unwrap();
        let ones = vec![vec![1.0; mesh.n_vertices()]; 11];
        assert!((exposure(m.mass_matrix(), &ones, &ones, 0.1).unwrap() - 1.0).abs() < 1e-12);
        assert!(exposure(m.mass_matrix(), &ones, &ones[..3], 0.1).is_err());
    }
}
