//! Measurement, inversion, prediction and steering on one scenario.
//!
//! [`run_mips`] runs the five stages in order and writes every artifact
//! plus `manifest.json` into the output directory. The individual stages
//! are exposed on [`Scenario`] so the CLI can run them one at a time.

mod config;
mod manifest;

pub use config::{
    EvacSection, FlowSection, Ini, InverseSection, MeshSection, PriorSection, RomSection, RunSection, ScenarioConfig,
    SensorSection, TransportSection, TruthSection, WindSource, OUTPUT_DIR_ENV,
};
pub use manifest::{RunManifest, StageRecord, StageStatus, STAGES};

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::evac::{exposure, sample_trajectory, CrowdConfig, CrowdModel, CrowdRun};
use crate::flow::{blended_inflow, solve_with, DirichletSpec, Discretization, FlowField, FlowProblem, SolveOptions};
use crate::inverse::{CgPreconditioner, InverseProblem, InverseResult, MapOptions, Prior};
use crate::meshfem::{load_gmsh, vtk_string, Field, FunctionSpace, Mesh, Point};
use crate::rom::{
    collect_snapshots, load_rom, pod, project_galerkin, relative_error_m, rom_solve, save_rom, RomOperators,
};
use crate::sensing::{add_noise, observe_at, read_positions, MeasurementSet, SensorArray};
use crate::transport::{bump_ic, LinearSolver, Stepper, Trajectory, TransportConfig};

/// Relative noise floor used as likelihood σ when the data are noise-free.
const NOISE_FREE_SIGMA: f64 = 1e-4;

/// Loaded inputs shared by all stages.
#[derive(Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub mesh: Arc<Mesh>,
    /// Mesh used to synthesize data; the same `Arc` as `mesh` unless
    /// `truth_path` is set.
    pub truth_mesh: Arc<Mesh>,
    pub sensor_positions: Vec<Point>,
}

/// Stage 1 output.
#[derive(Debug, Clone)]
pub struct TruthData {
    pub flow: FlowField,
    pub initial: Field,
    pub trajectory: Trajectory,
    /// Noise-free observations, time-major.
    pub clean: Vec<f64>,
    pub peak: f64,
    pub measurements: MeasurementSet,
    pub transport_solves: usize,
}

/// Stage 2 output.
#[derive(Debug, Clone)]
pub struct WindEstimate {
    pub velocity: Field,
    /// `rom`, `fom`, or `fom-fallback`.
    pub source: &'static str,
    pub rank: usize,
    pub online_seconds: f64,
    pub offline_seconds: f64,
    pub fom_seconds: f64,
    /// Relative M-norm error against the FOM at the same μ.
    pub error_vs_fom: f64,
    pub fom_solves: usize,
    pub operators: Option<RomOperators>,
    pub warnings: Vec<String>,
}

impl WindEstimate {
    pub fn speedup(&self) -> f64 {
        self.fom_seconds / self.online_seconds.max(1e-9)
    }
}

/// Stage 3 output.
#[derive(Debug)]
pub struct Inversion {
    pub stepper: Stepper,
    pub measurements: MeasurementSet,
    pub likelihood_sigma: f64,
    pub result: InverseResult,
    /// Posterior pointwise variance from the low-rank update, if requested.
    pub variance: Option<Vec<f64>>,
    pub lowrank_values: Vec<f64>,
    pub pde_solves: usize,
    pub argmax: Point,
    pub warnings: Vec<String>,
}

/// Stage 4 output.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub trajectory: Trajectory,
    pub observations: Vec<f64>,
    /// `‖B c_pred − B c_true‖ / ‖B c_true‖` over the noise-free data.
    pub observation_error: f64,
}

/// Stage 5 output.
#[derive(Debug, Clone)]
pub struct Steering {
    pub model_space: Arc<FunctionSpace>,
    pub steered: CrowdRun,
    pub baseline: CrowdRun,
    pub exposure_steered: f64,
    pub exposure_baseline: f64,
    pub eikonal_solves: usize,
}

impl Steering {
    pub fn exposure_reduction(&self) -> f64 {
        if self.exposure_baseline > 0.0 {
            1.0 - self.exposure_steered / self.exposure_baseline
        } else {
            0.0
        }
    }
}

fn mesh_from(path: &Path) -> Result<Arc<Mesh>> {
    Ok(Arc::new(load_gmsh(path)?))
}

impl Scenario {
    pub fn load(config: ScenarioConfig) -> Result<Self> {
        config.check_files()?;
        let mesh = mesh_from(&config.resolve(&config.mesh.path))?;
        let truth_mesh = match &config.mesh.truth_path {
            Some(p) => mesh_from(&config.resolve(p))?,
            None => mesh.clone(),
        };
        let sensor_positions = read_positions(config.resolve(&config.sensors.path))?;
        if sensor_positions.is_empty() {
            return Err(Error::Config("sensor file lists no positions".into()));
        }
        Ok(Self { config, mesh, truth_mesh, sensor_positions })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::load(ScenarioConfig::load(path)?)
    }

    pub fn separate_truth_mesh(&self) -> bool {
        !Arc::ptr_eq(&self.mesh, &self.truth_mesh)
    }

    pub fn flow_problem(&self, mesh: &Arc<Mesh>) -> Result<FlowProblem> {
        let f = &self.config.flow;
        let inflow = mesh.boundary_vertices(&[f.inflow_tag]);
        if inflow.is_empty() {
            return Err(Error::Config(format!("flow.inflow_tag {} has no boundary edges", f.inflow_tag)));
        }
        let xs = inflow.iter().map(|&v| mesh.vertices()[v][0]);
        let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let ramp = match f.ramp {
            Some(r) => r,
            None => mesh
                .boundary_edges()
                .iter()
                .filter(|e| e.tag == f.inflow_tag)
                .map(|e| mesh.boundary_normal(e).1)
                .fold(0.0, f64::max),
        };
        let mut dirichlet = vec![DirichletSpec { tag: f.inflow_tag, profile: blended_inflow(x0, x1, ramp) }];
        dirichlet.extend(f.noslip_tags.iter().map(|&t| DirichletSpec::no_slip(t)));
        let problem = FlowProblem::new(mesh.clone(), f.nu, dirichlet, f.outflow_tags.clone())?;
        Ok(problem.with_mu_range(f.mu_range).with_length_scale(f.length_scale))
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { tol: self.config.flow.tol, ..SolveOptions::default() }
    }

    /// Full-order wind at the configured μ on `mesh`.
    pub fn fom_wind(&self, mesh: &Arc<Mesh>) -> Result<FlowField> {
        let problem = self.flow_problem(mesh)?;
        let disc = problem.discretize()?;
        solve_with(&problem, &disc, self.config.flow.mu, self.solve_options())
    }

    pub fn snapshot_mus(&self) -> Vec<f64> {
        let [lo, hi] = self.config.flow.mu_range;
        let n = self.config.rom.snapshots;
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    /// Offline phase: snapshots, POD and Galerkin projection.
    pub fn build_rom(&self, problem: &FlowProblem, disc: &Discretization) -> Result<RomOperators> {
        let set = collect_snapshots(problem, disc, &self.snapshot_mus(), self.solve_options())?;
        let basis = pod(&set, &disc.mass, self.config.rom.energy_tol, self.config.rom.max_rank)?;
        project_galerkin(&basis, problem, disc)
    }

    pub fn transport_config(&self, velocity: Field) -> TransportConfig {
        let t = &self.config.transport;
        TransportConfig {
            velocity,
            k: t.k,
            dt: t.dt,
            t_final: t.t_final,
            dirichlet_tags: t.dirichlet_tags.clone(),
            solver: if t.iterative_tol > 0.0 {
                LinearSolver::Iterative { tol: t.iterative_tol }
            } else {
                LinearSolver::Direct
            },
        }
    }

    pub fn sensors(&self, space: &Arc<FunctionSpace>) -> Result<SensorArray> {
        let s = &self.config.sensors;
        SensorArray::new(space.clone(), self.sensor_positions.clone(), s.t_start, s.rate)
    }

    pub fn prior(&self, space: &Arc<FunctionSpace>) -> Result<Prior> {
        match self.config.prior {
            PriorSection::Correlation { length, std } => Prior::from_correlation(space.clone(), length, std),
            PriorSection::Operator { gamma, delta, beta } => Prior::new(space.clone(), gamma, delta, beta, None),
        }
    }

    pub fn map_options(&self) -> MapOptions {
        let i = &self.config.inverse;
        MapOptions {
            tol: i.cg_tol,
            max_cg: i.max_cg,
            max_newton: i.max_newton,
            preconditioner: if i.preconditioned { CgPreconditioner::Prior } else { CgPreconditioner::None },
        }
    }

    pub fn crowd_config(&self, alpha: f64) -> CrowdConfig {
        let e = &self.config.evac;
        CrowdConfig { v_max: e.v_max, rho_max: e.rho_max, alpha, penalty: e.penalty, exit_tags: e.exit_tags.clone() }
    }

    pub fn initial_crowd(&self, space: &FunctionSpace) -> Vec<f64> {
        let e = &self.config.evac;
        let [x0, x1, y0, y1] = e.region;
        space
            .dof_coords()
            .iter()
            .map(|p| if p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1 { e.rho0 } else { 0.0 })
            .collect()
    }

    /// Stage 1: truth wind, truth trajectory and noisy sensor data.
    pub fn measure(&self) -> Result<TruthData> {
        let t = &self.config.truth;
        let flow = self.fom_wind(&self.truth_mesh)?;
        let stepper = Stepper::new(&self.transport_config(flow.velocity.clone()))?;
        let space = stepper.space().clone();
        let initial = bump_ic(space.clone(), t.center, t.radius, t.level)?;
        let trajectory = stepper.solve_forward(&initial)?;
        let sensors = self.sensors(&space)?;
        let schedule = sensors.schedule(trajectory.dt(), trajectory.n_steps())?;
        if schedule.is_empty() {
            return Err(Error::Config("no measurement falls inside the transport horizon".into()));
        }
        let clean = observe_at(trajectory.states(), &sensors, &schedule)?;
        let peak = clean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sigma = self.config.sensors.sigma_rel * peak;
        let d = add_noise(&clean, sigma, self.config.run.seed)?;
        let measurements = MeasurementSet::new(d, sigma, schedule, sensors)?;
        Ok(TruthData {
            flow,
            initial,
            trajectory,
            clean,
            peak,
            measurements,
            transport_solves: stepper.linear_solves(),
        })
    }

    /// Stage 2: wind estimate on the inversion mesh. `reference` is a FOM
    /// solution at the configured μ on that mesh, if one is at hand.
    pub fn wind(&self, reference: Option<&FlowField>) -> Result<WindEstimate> {
        let problem = self.flow_problem(&self.mesh)?;
        let disc = problem.discretize()?;
        let mu = self.config.flow.mu;
        let mut fom_solves = 0;
        let fom = match reference {
            Some(f) => f.clone(),
            None => {
                fom_solves += 1;
                solve_with(&problem, &disc, mu, self.solve_options())?
            }
        };
        let fom_from = |source, warnings| WindEstimate {
            velocity: fom.velocity.clone(),
            source,
            rank: 0,
            online_seconds: fom.seconds,
            offline_seconds: 0.0,
            fom_seconds: fom.seconds,
            error_vs_fom: 0.0,
            fom_solves,
            operators: None,
            warnings,
        };
        if self.config.rom.source == WindSource::Fom {
            return Ok(fom_from("fom", vec![]));
        }
        let offline = Instant::now();
        let ops = match &self.config.rom.path {
            Some(p) => {
                let full = self.config.resolve(p);
                if !full.is_file() {
                    let w = format!("ROM file {} not found; wind taken from the full-order model", full.display());
                    log::warn!("{w}");
                    return Ok(fom_from("fom-fallback", vec![w]));
                }
                let ops = load_rom(&full)?;
                let n = 2 * disc.velocity_space.n_dof();
                if ops.basis.lifting.len() != n {
                    return Err(Error::Config(format!(
                        "ROM file {} has {} velocity unknowns, mesh needs {n}",
                        full.display(),
                        ops.basis.lifting.len()
                    )));
                }
                ops
            }
            None => {
                fom_solves += self.config.rom.snapshots + 1;
                self.build_rom(&problem, &disc)?
            }
        };
        let offline_seconds = offline.elapsed().as_secs_f64();
        let (field, _) = rom_solve(&ops, &disc.velocity_space, mu, self.config.rom.tol)?;
        let error_vs_fom = relative_error_m(&disc.mass, field.velocity.values(), fom.velocity.values());
        Ok(WindEstimate {
            velocity: field.velocity,
            source: "rom",
            rank: ops.basis.rank(),
            online_seconds: field.seconds,
            offline_seconds,
            fom_seconds: fom.seconds,
            error_vs_fom,
            fom_solves,
            operators: Some(ops),
            warnings: vec![],
        })
    }

    /// Stage 3: MAP estimate of the initial concentration.
    pub fn invert(&self, wind: &WindEstimate, truth: &TruthData) -> Result<Inversion> {
        let stepper = Stepper::new(&self.transport_config(wind.velocity.clone()))?;
        let space = stepper.space().clone();
        let sensors = self.sensors(&space)?;
        let schedule = sensors.schedule(stepper.dt(), stepper.n_steps())?;
        if schedule.times.len() != truth.measurements.schedule.times.len() {
            return Err(Error::Config("truth and inversion time grids disagree".into()));
        }
        let measurements = MeasurementSet::new(truth.measurements.d.clone(), truth.measurements.sigma, schedule, sensors)?;
        let mut warnings = vec![];
        let likelihood_sigma = if measurements.sigma > 0.0 {
            measurements.sigma
        } else {
            let s = NOISE_FREE_SIGMA * truth.peak.max(f64::MIN_POSITIVE);
            warnings.push(format!("noise-free data; likelihood uses sigma = {s:e}"));
            s
        };
        let prior = self.prior(&space)?;
        let (result, variance, lowrank_values, pde_solves) = {
            let problem = InverseProblem::with_sigma(&stepper, &measurements, &prior, likelihood_sigma)?;
            let result = problem.solve_map(self.map_options())?;
            let k = self.config.inverse.lowrank.min(space.n_dof());
            let (variance, values) = if k > 0 {
                let post = problem.posterior_lowrank(k)?;
                let dofs: Vec<usize> = (0..space.n_dof()).collect();
                (Some(post.variance(&prior, &dofs)?), post.values)
            } else {
                (None, vec![])
            };
            let solves = problem.pde_solves();
            (result, variance, values, solves)
        };
        let v = result.m_map.values();
        let imax = (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
        let argmax = space.dof_coords()[imax];
        Ok(Inversion {
            stepper,
            measurements,
            likelihood_sigma,
            result,
            variance,
            lowrank_values,
            pde_solves,
            argmax,
            warnings,
        })
    }

    /// Stage 4: forecast from the MAP point.
    pub fn predict(&self, inversion: &Inversion, truth: &TruthData) -> Result<Prediction> {
        let trajectory = inversion.stepper.solve_forward(&inversion.result.m_map)?;
        let m = &inversion.measurements;
        let observations = observe_at(trajectory.states(), &m.sensors, &m.schedule)?;
        let num: f64 = observations.iter().zip(&truth.clean).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = truth.clean.iter().map(|b| b * b).sum();
        let observation_error = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
        Ok(Prediction { trajectory, observations, observation_error })
    }

    /// Stage 5: penalized and unpenalized crowd runs under the forecast.
    pub fn steer(&self, prediction: &Prediction) -> Result<Steering> {
        let e = &self.config.evac;
        let space = prediction.trajectory.space().clone();
        let n_steps = (e.t_final / e.dt).round() as usize;
        let rho0 = self.initial_crowd(&space);
        if rho0.iter().all(|&r| r == 0.0) {
            return Err(Error::Config("evac.region contains no mesh vertices".into()));
        }
        let traj = &prediction.trajectory;
        // The forecast can undershoot; only its positive part is a concentration.
        let positive = |t: f64| -> Vec<f64> { sample_trajectory(traj, t).into_iter().map(|c| c.max(0.0)).collect() };
        let conc = |t: f64| -> Result<Vec<f64>> { Ok(positive(t)) };
        let run = |alpha: f64| -> Result<(CrowdRun, f64, CrowdModel)> {
            let model = CrowdModel::new(space.clone(), self.crowd_config(alpha))?;
            let r = model.run(&rho0, &conc, e.dt, n_steps)?;
            let c: Vec<Vec<f64>> = r.times.iter().map(|&t| positive(t)).collect();
            let x = exposure(model.mass_matrix(), &r.rho, &c, e.dt)?;
            Ok((r, x, model))
        };
        let (steered, exposure_steered, _) = run(e.alpha)?;
        let (baseline, exposure_baseline, _) = run(0.0)?;
        Ok(Steering {
            model_space: space,
            steered,
            baseline,
            exposure_steered,
            exposure_baseline,
            eikonal_solves: 2 * (n_steps + 1),
        })
    }
}

/// Collects files written into the output directory.
struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn write(&mut self, name: &str, content: &str) -> Result<String> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(name.to_string())
    }
}

fn series_csv(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

fn trajectory_vtk(traj: &Trajectory, title: &str, every: usize) -> Result<String> {
    let picks: Vec<usize> = (0..=traj.n_steps()).filter(|n| n % every == 0 || *n == traj.n_steps()).collect();
    let fields: Vec<(String, Field)> = picks.iter().map(|&n| (format!("c_{n:05}"), traj.field(n))).collect();
    let refs: Vec<(&str, &Field)> = fields.iter().map(|(n, f)| (n.as_str(), f)).collect();
    vtk_string(traj.space().mesh(), title, &refs)
}

/// Runs all five stages and writes artifacts plus `manifest.json`.
///
/// A failing stage aborts the run with its name; the manifest and the
/// artifacts written so far are kept.
pub fn run_mips(config: &ScenarioConfig) -> Result<RunManifest> {
    let dir = config.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut manifest = RunManifest::new(config.hash(), config.run.seed);
    let mut art = Artifacts { dir: dir.clone(), files: vec![] };
    let res = run_stages(config, &mut manifest, &mut art);
    manifest.artifacts = art.files.clone();
    if let Err(e) = &res {
        manifest.fail_remaining(e);
    }
    manifest.artifacts.push("manifest.json".into());
    manifest.write(&dir.join("manifest.json"))?;
    res.map(|_| manifest)
}

fn stage<T>(manifest: &mut RunManifest, name: &'static str, f: impl FnOnce(&mut StageRecord) -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let mut rec = StageRecord::pending(name);
    let out = f(&mut rec);
    rec.seconds = start.elapsed().as_secs_f64();
    match &out {
        Ok(_) => rec.status = StageStatus::Completed,
        Err(e) => {
            rec.status = StageStatus::Failed;
            rec.reason = Some(e.to_string());
        }
    }
    manifest.timings.insert(format!("{name}.seconds"), rec.seconds);
    manifest.stages.push(rec);
    out.map_err(|e| Error::Stage { stage: name, source: Box::new(e) })
}

fn run_stages(config: &ScenarioConfig, m: &mut RunManifest, art: &mut Artifacts) -> Result<()> {
    let scenario = Scenario::load(config.clone())?;
    let mesh = scenario.mesh.clone();
    m.metric("mesh.vertices", mesh.n_vertices() as f64);
    m.metric("mesh.triangles", mesh.n_triangles() as f64);
    m.metric("mesh.h_max", mesh.max_diameter());
    if !scenario.separate_truth_mesh() {
        m.warnings.push("truth data generated on the inversion mesh".into());
    }

    let truth = stage(m, "measure", |rec| {
        let t = scenario.measure()?;
        rec.pde_solves = 1 + 1;
        let space = t.trajectory.space();
        rec.outputs.push(art.write(
            "truth_wind.vtk",
            &vtk_string(space.mesh(), "truth wind", &[("velocity", &t.flow.velocity)])?,
        )?);
        rec.outputs.push(art.write("truth.vtk", &trajectory_vtk(&t.trajectory, "truth concentration", 10)?)?);
        rec.outputs.push(art.write("measurements.csv", &t.measurements.to_csv())?);
        Ok(t)
    })?;
    m.metric("measure.peak", truth.peak);
    m.metric("measure.sigma", truth.measurements.sigma);
    m.metric("measure.n_data", truth.measurements.len() as f64);
    m.metric("measure.truth_min", truth.trajectory.min_value());
    m.metric("measure.flow_iterations", truth.flow.iterations as f64);
    m.timings.insert("measure.fom_wind_seconds".into(), truth.flow.seconds);

    let wind = stage(m, "wind", |rec| {
        let reference = (!scenario.separate_truth_mesh()).then_some(&truth.flow);
        let w = scenario.wind(reference)?;
        rec.pde_solves = w.fom_solves;
        rec.reason = match w.source {
            "rom" => None,
            s => Some(format!("wind from {s}")),
        };
        if let Some(ops) = &w.operators {
            if config.rom.path.is_none() {
                let path = art.dir.join("rom.txt");
                save_rom(ops, &path)?;
                art.files.push("rom.txt".into());
                rec.outputs.push("rom.txt".into());
            }
        }
        rec.outputs.push(art.write("wind.vtk", &vtk_string(&mesh, "estimated wind", &[("velocity", &w.velocity)])?)?);
        Ok(w)
    })?;
    m.warnings.extend(wind.warnings.iter().cloned());
    m.metric("wind.rank", wind.rank as f64);
    m.metric("wind.error_vs_fom", wind.error_vs_fom);
    m.timings.insert("wind.online_seconds".into(), wind.online_seconds);
    m.timings.insert("wind.offline_seconds".into(), wind.offline_seconds);
    m.timings.insert("wind.fom_seconds".into(), wind.fom_seconds);
    m.timings.insert("wind.speedup".into(), wind.speedup());
    m.notes.insert("wind.source".into(), wind.source.into());

    let inv = stage(m, "invert", |rec| {
        let inv = scenario.invert(&wind, &truth)?;
        rec.pde_solves = inv.pde_solves;
        let space = inv.stepper.space().clone();
        let mut fields = vec![("m_map", inv.result.m_map.clone())];
        if !scenario.separate_truth_mesh() {
            fields.push(("m_true", truth.initial.clone()));
        }
        if let Some(v) = &inv.variance {
            fields.push(("posterior_variance", Field::new(space.clone(), 1, v.clone())?));
        }
        let refs: Vec<(&str, &Field)> = fields.iter().map(|(n, f)| (*n, f)).collect();
        rec.outputs.push(art.write("inversion.vtk", &vtk_string(&mesh, "initial condition", &refs)?)?);
        let hist = inv
            .result
            .history
            .iter()
            .map(|h| vec![h.iteration as f64, h.residual, h.objective]);
        rec.outputs.push(art.write("cg_history.csv", &series_csv("iteration,residual,objective", hist))?);
        Ok(inv)
    })?;
    m.warnings.extend(inv.warnings.iter().cloned());
    let t = &config.truth;
    let dist = (inv.argmax[0] - t.center[0]).hypot(inv.argmax[1] - t.center[1]);
    m.metric("invert.cg_iterations", inv.result.cg_iterations as f64);
    m.metric("invert.newton_iterations", inv.result.newton_iterations as f64);
    m.metric("invert.pde_solves", inv.pde_solves as f64);
    m.metric("invert.objective", inv.result.objective);
    m.metric("invert.gradient_reduction", inv.result.gradient_norm / inv.result.initial_gradient_norm.max(f64::MIN_POSITIVE));
    m.metric("invert.likelihood_sigma", inv.likelihood_sigma);
    m.metric("invert.argmax_x", inv.argmax[0]);
    m.metric("invert.argmax_y", inv.argmax[1]);
    m.metric("invert.argmax_distance", dist);
    m.metric("invert.argmax_distance_in_diameters", dist / mesh.max_diameter());
    if !inv.lowrank_values.is_empty() {
        m.metric("invert.lowrank_rank", inv.lowrank_values.len() as f64);
        m.metric("invert.lowrank_smallest", *inv.lowrank_values.last().expect("non-empty"));
    }

    let pred = stage(m, "predict", |rec| {
        let p = scenario.predict(&inv, &truth)?;
        rec.pde_solves = 1;
        rec.outputs.push(art.write("prediction.vtk", &trajectory_vtk(&p.trajectory, "predicted concentration", 10)?)?);
        let ns = inv.measurements.sensors.n_sensors();
        let rows = inv.measurements.schedule.times.iter().enumerate().flat_map(|(i, &t)| {
            let (p, c, d) = (&p.observations, &truth.clean, &inv.measurements.d);
            (0..ns).map(move |s| vec![t, s as f64, p[i * ns + s], c[i * ns + s], d[i * ns + s]])
        });
        rec.outputs.push(art.write("observations.csv", &series_csv("time,sensor_id,predicted,truth,measured", rows))?);
        Ok(p)
    })?;
    m.metric("predict.observation_error", pred.observation_error);
    m.metric("predict.min", pred.trajectory.min_value());
    m.metric("predict.max", pred.trajectory.max_value());

    let steer = stage(m, "steer", |rec| {
        let s = scenario.steer(&pred)?;
        rec.pde_solves = s.eikonal_solves;
        let field = |v: &[f64]| Field::new(s.model_space.clone(), 1, v.to_vec());
        let last = s.steered.rho.len() / 2;
        let fields = [
            ("phi_steered", field(&s.steered.phi[0])?),
            ("phi_baseline", field(&s.baseline.phi[0])?),
            ("rho_steered_mid", field(&s.steered.rho[last])?),
            ("rho_baseline_mid", field(&s.baseline.rho[last])?),
        ];
        let refs: Vec<(&str, &Field)> = fields.iter().map(|(n, f)| (*n, f)).collect();
        rec.outputs.push(art.write("evacuation.vtk", &vtk_string(&mesh, "evacuation", &refs)?)?);
        let rows = s
            .steered
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| vec![t, s.steered.mass[i], s.baseline.mass[i]]);
        rec.outputs.push(art.write("crowd_mass.csv", &series_csv("time,mass_steered,mass_baseline", rows))?);
        Ok(s)
    })?;
    m.metric("steer.exposure_steered", steer.exposure_steered);
    m.metric("steer.exposure_baseline", steer.exposure_baseline);
    m.metric("steer.exposure_reduction", steer.exposure_reduction());
    m.metric("steer.mass_balance_steered", steer.steered.worst_mass_balance());
    m.metric("steer.mass_balance_baseline", steer.baseline.worst_mass_balance());
    let m0 = steer.steered.mass[0];
    m.metric("steer.evacuated_steered", 1.0 - steer.steered.mass.last().expect("times") / m0);
    m.metric("steer.evacuated_baseline", 1.0 - steer.baseline.mass.last().expect("times") / m0);

    let total: usize = m.stages.iter().map(|s| s.pde_solves).sum();
    m.metric("total.pde_solves", total as f64);
    Ok(())
}
