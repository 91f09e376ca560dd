#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use airtwin::flow::{blended_inflow, DirichletSpec, FlowProblem};
use airtwin::inverse::Prior;
use airtwin::meshfem::{
    rect_mesh, write_gmsh, BoundaryEdge, Field, FunctionSpace, Mesh, Rect, TAG_EAST, TAG_HOLE_BASE, TAG_NORTH,
    TAG_SOUTH, TAG_WEST,
};
use airtwin::linalg::CsrMatrix;
use airtwin::pipeline::Scenario;
use airtwin::sensing::{add_noise, observe, MeasurementSet, SensorArray};
use airtwin::transport::{bump_ic, LinearSolver, Stepper, TransportConfig};
use nalgebra::{DMatrix, DVector};

pub fn campus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/campus")
}

pub fn campus() -> Scenario {
    Scenario::from_file(campus_dir().join("scenario.cfg")).expect("campus scenario loads")
}

/// Channel on the unit square with one block: inflow south, outflow on the
/// other three sides.
pub fn channel(n: usize, nu: f64) -> FlowProblem {
    let block = Rect::new(0.375, 0.625, 0.5, 0.625);
    let mesh = Arc::new(rect_mesh(n, n, [0.0, 1.0], [0.0, 1.0], &[block]).unwrap());
    let h = 1.0 / n as f64;
    FlowProblem::new(
        mesh,
        nu,
        vec![
            DirichletSpec { tag: TAG_SOUTH, profile: blended_inflow(0.0, 1.0, h) },
            DirichletSpec::no_slip(TAG_HOLE_BASE),
        ],
        vec![TAG_EAST, TAG_NORTH, TAG_WEST],
    )
    .unwrap()
    .with_mu_range([0.5, 2.0])
}

pub const TINY_CFG: &str = "\
[mesh]
path = tiny.msh

[flow]
nu = 0.05
mu = 1
mu_range = 0.5, 2
inflow_tag = 1
noslip_tags = 10
outflow_tags = 2 3 4

[rom]
snapshots = 6
energy_tol = 1e-8

[transport]
k = 0.005
dt = 0.05
t_final = 1
dirichlet_tags = 1

[truth]
center = 0.5 0.3
radius = 0.15
level = 0.5

[sensors]
path = sensors.txt
t_start = 0.2
rate = 10
sigma_rel = 0.01

[prior]
correlation_length = 0.3
std = 1

[inverse]
lowrank = 8

[evac]
v_max = 0.5
rho_max = 5
alpha = 50
exit_tags = 3
dt = 0.01
t_final = 2
rho0 = 1
region = 0.1 0.4 0.1 0.3

[run]
seed = 7
output_dir = out
";

pub fn tiny_mesh() -> Mesh {
    rect_mesh(16, 16, [0.0, 1.0], [0.0, 1.0], &[Rect::new(0.375, 0.625, 0.625, 0.75)]).unwrap()
}

/// Writes the small test scenario into `dir`; `edit` may rewrite the config text.
pub fn write_tiny(dir: &Path, edit: impl Fn(&str) -> String) -> PathBuf {
    write_gmsh(&tiny_mesh(), dir.join("tiny.msh")).unwrap();
    let mut s = String::new();
    for y in [0.45, 0.55] {
        for x in [0.2, 0.35, 0.5, 0.65, 0.8] {
            s.push_str(&format!("{x} {y}\n"));
        }
    }
    std::fs::write(dir.join("sensors.txt"), s).unwrap();
    let cfg = dir.join("scenario.cfg");
    std::fs::write(&cfg, edit(TINY_CFG)).unwrap();
    cfg
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Inverse problem small enough for dense linear algebra (169 parameters).
pub struct TinyInverse {
    pub stepper: Stepper,
    pub measurements: MeasurementSet,
    pub prior: Prior,
    pub truth: Field,
}

/// `positions = None` uses five sensors near the middle of the square.
pub fn tiny_inverse(sigma_rel: f64, positions: Option<Vec<[f64; 2]>>, t_start: f64, rate: f64) -> TinyInverse {
    let mesh = Arc::new(rect_mesh(12, 12, [0.0, 1.0], [0.0, 1.0], &[]).unwrap());
    let sp = FunctionSpace::new(mesh, 1).unwrap();
    let velocity = Field::interpolate_vector(sp.clone(), |_| [0.5, 0.25]);
    let stepper = Stepper::new(&TransportConfig {
        velocity,
        k: 0.02,
        dt: 0.1,
        t_final: 1.0,
        dirichlet_tags: vec![TAG_SOUTH],
        solver: LinearSolver::Direct,
    })
    .unwrap();
    let truth = bump_ic(stepper.space().clone(), [0.35, 0.35], 0.2, 0.5).unwrap();
    let positions =
        positions.unwrap_or_else(|| vec![[0.5, 0.5], [0.7, 0.5], [0.5, 0.7], [0.7, 0.7], [0.6, 0.6]]);
    let sensors = SensorArray::new(stepper.space().clone(), positions, t_start, rate).unwrap();
    let traj = stepper.solve_forward(&truth).unwrap();
    let clean = observe(&traj, &sensors).unwrap();
    let peak = clean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sigma = sigma_rel * peak;
    let schedule = sensors.schedule(stepper.dt(), stepper.n_steps()).unwrap();
    let d = add_noise(&clean, sigma, 3).unwrap();
    let measurements = MeasurementSet::new(d, sigma, schedule, sensors).unwrap();
    let prior = Prior::from_correlation(stepper.space().clone(), 0.3, 1.0).unwrap();
    TinyInverse { stepper, measurements, prior, truth }
}

pub fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.n_rows(), a.n_cols(), |i, j| a.get(i, j))
}

/// Normal equations assembled densely from the stepping matrices.
pub struct DenseOracle {
    pub forward: DMatrix<f64>,
    pub hessian: DMatrix<f64>,
    pub precision: DMatrix<f64>,
    pub m_map: DVector<f64>,
    pub post_cov: DMatrix<f64>,
}

pub fn dense_oracle(p: &TinyInverse, sigma: f64) -> DenseOracle {
    let n = p.stepper.n_dof();
    let step = dense(p.stepper.lhs()).lu().solve(&dense(p.stepper.rhs_operator())).unwrap();
    let meas = &p.measurements;
    let ns = meas.sensors.n_sensors();
    let mut obs = DMatrix::<f64>::zeros(ns, n);
    for s in 0..ns {
        for &(d, w) in meas.sensors.row(s) {
            obs[(s, d)] += w;
        }
    }
    let mut forward = DMatrix::<f64>::zeros(ns * meas.schedule.len(), n);
    for (k, &idx) in meas.schedule.indices.iter().enumerate() {
        let mut prop = DMatrix::<f64>::identity(n, n);
        for _ in 0..idx {
            prop = &step * prop;
        }
        forward.rows_mut(k * ns, ns).copy_from(&(&obs * prop));
    }
    let lumped = DVector::from_iterator(n, (0..n).map(|i| (0..n).map(|j| p.stepper.mass().get(i, j)).sum::<f64>()));
    let ka = dense(p.prior.operator());
    let precision = &ka * DMatrix::from_diagonal(&lumped.map(|v| 1.0 / v)) * &ka;
    let s2 = sigma * sigma;
    let hessian = forward.transpose() * &forward / s2;
    let d = DVector::from_column_slice(&meas.d);
    let rhs = forward.transpose() * d / s2;
    let full = &hessian + &precision;
    let post_cov = full.clone().cholesky().expect("posterior Hessian is SPD").inverse();
    let m_map = &post_cov * rhs;
    DenseOracle { forward, hessian, precision, m_map, post_cov }
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Corridors north and south of a central block, crowd in the west, exit
/// on the east side, contamination parked in the southern corridor.
pub struct TwoRoute {
    pub exposure: f64,
    /// `∫ (crowd mass inside the contaminated strip) dt`.
    pub strip_occupancy: f64,
    pub run: airtwin::evac::CrowdRun,
    pub model: airtwin::evac::CrowdModel,
    pub concentration: Vec<f64>,
}

pub fn two_route_domain() -> Arc<Mesh> {
    Arc::new(rect_mesh(60, 20, [0.0, 3.0], [0.0, 1.0], &[Rect::new(1.0, 2.0, 0.3, 0.7)]).unwrap())
}

pub fn in_south_strip(p: [f64; 2]) -> bool {
    (0.9..=2.1).contains(&p[0]) && p[1] <= 0.3
}

pub fn two_route(alpha: f64) -> TwoRoute {
    use airtwin::evac::{exposure, CrowdConfig, CrowdModel, Penalty};
    let mesh = two_route_domain();
    let sp = FunctionSpace::new(mesh.clone(), 1).unwrap();
    let config = CrowdConfig { v_max: 1.0, rho_max: 5.0, alpha, penalty: Penalty::Rational, exit_tags: vec![TAG_EAST] };
    let model = CrowdModel::new(sp, config).unwrap();
    let c: Vec<f64> = mesh.vertices().iter().map(|&p| if in_south_strip(p) { 1.0 } else { 0.0 }).collect();
    let rho0: Vec<f64> =
        mesh.vertices().iter().map(|p| if p[0] <= 0.6 && (0.2..=0.8).contains(&p[1]) { 2.0 } else { 0.0 }).collect();
    let dt = 0.5 * model.max_dt();
    let n = (6.0 / dt).ceil() as usize;
    let cc = c.clone();
    let run = model.run(&rho0, &move |_| Ok(cc.clone()), dt, n).unwrap();
    let cs = vec![c.clone(); run.rho.len()];
    let exposure = exposure(model.mass_matrix(), &run.rho, &cs, dt).unwrap();
    let strip: Vec<f64> = mesh.vertices().iter().map(|&p| if in_south_strip(p) { 1.0 } else { 0.0 }).collect();
    let occ: Vec<f64> =
        run.rho.iter().map(|r| r.iter().zip(&strip).zip(model.volumes()).map(|((a, s), v)| a * s * v).sum()).collect();
    let strip_occupancy = dt * (occ.iter().sum::<f64>() - 0.5 * (occ[0] + occ[occ.len() - 1]));
    TwoRoute { exposure, strip_occupancy, run, model, concentration: c }
}

/// Unit square whose only exit is the two south edges touching `(0.5, 0)`.
pub fn point_exit_square(n: usize) -> Mesh {
    let base = rect_mesh(n, n, [0.0, 1.0], [0.0, 1.0], &[]).unwrap();
    let xs = base.vertices().to_vec();
    let edges = base
        .boundary_edges()
        .iter()
        .map(|e| {
            let touches = e.vertices.iter().any(|&v| xs[v] == [0.5, 0.0]);
            BoundaryEdge { vertices: e.vertices, tag: if touches { 9 } else { e.tag } }
        })
        .collect();
    Mesh::new(xs, base.triangles().to_vec(), edges, None).unwrap()
}

pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let e = [b[0] - a[0], b[1] - a[1]];
    let t = (((p[0] - a[0]) * e[0] + (p[1] - a[1]) * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
    (p[0] - a[0] - t * e[0]).hypot(p[1] - a[1] - t * e[1])
}

/// Worst relative deviation of `φ·v` from the distance to the exit, over
/// vertices at least 0.25 away. Also checks `φ·v ≥ d` everywhere.
pub fn eikonal_point_exit_error(n: usize) -> f64 {
    use airtwin::evac::{CrowdConfig, CrowdModel, Penalty};
    let mesh = Arc::new(point_exit_square(n));
    let sp = FunctionSpace::new(mesh.clone(), 1).unwrap();
    let config = CrowdConfig { v_max: 1.4, rho_max: 5.0, alpha: 0.0, penalty: Penalty::Rational, exit_tags: vec![9] };
    let model = CrowdModel::new(sp, config).unwrap();
    assert_eq!(model.exits().len(), 3);
    let v = 1.3;
    let phi = model.eikonal(&vec![v; mesh.n_vertices()]).unwrap();
    let h = 1.0 / n as f64;
    let (a, b) = ([0.5 - h, 0.0], [0.5 + h, 0.0]);
    let mut worst: f64 = 0.0;
    for (i, &p) in mesh.vertices().iter().enumerate() {
        let d = segment_distance(p, a, b);
        if d == 0.0 {
            assert_eq!(phi[i], 0.0);
        } else if d >= 0.25 {
            worst = worst.max((phi[i] * v - d).abs() / d);
        }
        assert!(phi[i] * v >= d - 1e-12);
    }
    worst
}

/// P1 transport on a structured rectangle with a constant velocity.
pub fn transport_stepper(n: usize, extent: ([f64; 2], [f64; 2]), u: [f64; 2], k: f64, dt: f64, t: f64, tags: Vec<i32>) -> Stepper {
    let (xr, yr) = extent;
    let ny = ((yr[1] - yr[0]) / (xr[1] - xr[0]) * n as f64).round() as usize;
    let mesh = Arc::new(rect_mesh(n, ny, xr, yr, &[]).unwrap());
    let sp = FunctionSpace::new(mesh, 1).unwrap();
    let velocity = Field::interpolate_vector(sp, |_| u);
    Stepper::new(&TransportConfig { velocity, k, dt, t_final: t, dirichlet_tags: tags, solver: LinearSolver::Direct }).unwrap()
}

pub fn m_norm_diff(s: &Stepper, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    airtwin::rom::inner_m(s.mass(), &d, &d).sqrt()
}
