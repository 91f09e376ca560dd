//! `airtwin` command-line front end.
//!
//! Exit codes: 0 success, 2 usage (bad flags, missing input files),
//! 3 configuration or parse error, 4 I/O error, 5 numerical failure,
//! 6 contract or location error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use airtwin::evac::{exposure, sample_trajectory, CrowdModel};
use airtwin::flow::{lid_driven_cavity, solve_with};
use airtwin::meshfem::{load_gmsh, write_vtk, Field, FunctionSpace};
use airtwin::pipeline::{run_mips, Scenario, ScenarioConfig, StageStatus};
use airtwin::rom::{load_rom, relative_error_m, rom_solve, save_rom};
use airtwin::Error;

#[derive(Parser)]
#[command(name = "airtwin", version, about = "Airborne contaminant digital twin on 2D meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize a Gmsh mesh.
    MeshInfo { mesh: PathBuf },
    /// Full-order steady wind field.
    Flow {
        #[arg(long)]
        config: PathBuf,
        /// Inflow speed (defaults to the scenario value).
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lid-driven cavity centerline profiles.
    CavityVerify {
        /// Reynolds numbers, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "100")]
        re: Vec<f64>,
        /// Cells per side.
        #[arg(long, default_value_t = 96)]
        n: usize,
        /// Directory for one `cavity_re<Re>.csv` per value; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and save the reduced wind model.
    RomBuild {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the reduced model at one inflow speed.
    RomEval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        rom: Option<PathBuf>,
        /// Compare against a full-order solve.
        #[arg(long)]
        check: bool,
    },
    /// Truth transport run and synthetic measurements.
    Transport {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measurement, wind estimate and MAP inversion.
    Invert {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Crowd evacuation under the truth concentration.
    Evac {
        #[arg(long)]
        config: PathBuf,
        /// Penalty coefficient (defaults to the scenario value).
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full measurement-inversion-prediction-steering cycle.
    Mips {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

type CliResult = Result<(), Failure>;

fn exit_code(category: &str) -> u8 {
    match category {
        "usage" => 2,
        "config" | "parse" => 3,
        "io" => 4,
        "numerical" => 5,
        _ => 6,
    }
}

fn require_file(p: &Path) -> Result<(), Failure> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("input file {} not found", p.display())))
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    require_file(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let cfg = ScenarioConfig::parse(&text, &path.display().to_string(), &base)?;
    for (_, f) in cfg.required_files() {
        require_file(&f)?;
    }
    Ok(cfg)
}

fn scenario(config: &Path) -> Result<Scenario, Failure> {
    Ok(Scenario::load(load_config(config)?)?)
}

fn out_dir(s: &Scenario, out: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = out.unwrap_or_else(|| s.config.output_dir());
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    Ok(dir)
}

fn mesh_info(path: &Path) -> CliResult {
    require_file(path)?;
    let mesh = load_gmsh(path)?;
    println!("vertices   {}", mesh.n_vertices());
    println!("triangles  {}", mesh.n_triangles());
    println!("area       {:.6e}", mesh.total_area());
    println!("h_min      {:.6e}", mesh.min_diameter());
    println!("h_max      {:.6e}", mesh.max_diameter());
    let (lo, hi) = mesh.bounding_box();
    println!("bbox       [{}, {}] x [{}, {}]", lo[0], hi[0], lo[1], hi[1]);
    let mut tags = mesh.boundary_tags();
    tags.sort_unstable();
    tags.dedup();
    for t in tags {
        let n = mesh.boundary_edges().iter().filter(|e| e.tag == t).count();
        println!("tag {t:<6} {n} edges");
    }
    Ok(())
}

fn flow(config: &Path, mu: Option<f64>, out: Option<PathBuf>) -> CliResult {
    let s = scenario(config)?;
    let mu = mu.unwrap_or(s.config.flow.mu);
    let problem = s.flow_problem(&s.mesh)?;
    let disc = problem.discretize()?;
    let f = solve_with(&problem, &disc, mu, s.solve_options())?;
    let dir = out_dir(&s, out)?;
    let path = dir.join("flow.vtk");
    let mut fields = vec![("velocity", &f.velocity)];
    if let Some(p) = &f.pressure {
        fields.push(("pressure", p));
    }
    write_vtk(&path, &s.mesh, "wind", &fields)?;
    println!("mu {mu} Re {:.4} unknowns {}", problem.reynolds(mu), disc.n_unknowns());
    println!("iterations {} residual {:.3e} seconds {:.3}", f.iterations, f.residual_norm, f.seconds);
    println!("wrote {}", path.display());
    Ok(())
}

fn cavity(re: &[f64], n: usize, out: Option<PathBuf>) -> CliResult {
    if re.is_empty() {
        return Err(Failure::Usage("--re needs at least one value".into()));
    }
    if let Some(d) = &out {
        std::fs::create_dir_all(d).map_err(|e| Error::Io { path: d.clone(), source: e })?;
    } else {
        println!("re,y,u_x");
    }
    for &r in re {
        let res = lid_driven_cavity(r, n)?;
        match &out {
            Some(d) => {
                let mut text = String::from("y,u_x\n");
                for (y, u) in &res.profile {
                    text.push_str(&format!("{y},{u}\n"));
                }
                let path = d.join(format!("cavity_re{r}.csv"));
                std::fs::write(&path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                let (y, u) = res.profile_minimum();
                eprintln!("Re {r}: {} iterations, min u_x {u:.5} at y = {y:.4} -> {}", res.field.iterations, path.display());
            }
            None => {
                for (y, u) in &res.profile {
                    println!("{r},{y},{u}");
                }
            }
        }
    }
    Ok(())
}

fn rom_build(config: &Path, out: Option<PathBuf>) -> CliResult {
    let s = scenario(config)?;
    let problem = s.flow_problem(&s.mesh)?;
    let disc = problem.discretize()?;
    let t = Instant::now();
    let ops = s.build_rom(&problem, &disc)?;
    let path = match (out, &s.config.rom.path) {
        (Some(p), _) => p,
        (None, Some(p)) => s.config.resolve(p),
        (None, None) => out_dir(&s, None)?.join("rom.txt"),
    };
    save_rom(&ops, &path)?;
    println!(
        "rank {} energy {:.8} snapshots {} seconds {:.2}",
        ops.basis.rank(),
        ops.basis.energy,
        s.config.rom.snapshots,
        t.elapsed().as_secs_f64()
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn rom_eval(config: &Path, mu: f64, rom: Option<PathBuf>, check: bool) -> CliResult {
    let s = scenario(config)?;
    let path = match (rom, &s.config.rom.path) {
        (Some(p), _) => p,
        (None, Some(p)) => s.config.resolve(p),
        (None, None) => s.config.output_dir().join("rom.txt"),
    };
    require_file(&path)?;
    let ops = load_rom(&path)?;
    let problem = s.flow_problem(&s.mesh)?;
    let disc = problem.discretize()?;
    let (field, sol) = rom_solve(&ops, &disc.velocity_space, mu, s.config.rom.tol)?;
    let coords: Vec<String> = sol.alpha.iter().map(|a| format!("{a:.10e}")).collect();
    println!("mu {mu} rank {} iterations {} residual {:.3e}", ops.rank(), sol.iterations, sol.residual);
    println!("coordinates {}", coords.join(" "));
    if check {
        let fom = solve_with(&problem, &disc, mu, s.solve_options())?;
        let err = relative_error_m(&disc.mass, field.velocity.values(), fom.velocity.values());
        println!("error_vs_fom {err:.6e}");
        println!("fom_seconds {:.4} rom_seconds {:.6} speedup {:.1}", fom.seconds, field.seconds, fom.seconds / field.seconds.max(1e-9));
    }
    Ok(())
}

fn transport(config: &Path, out: Option<PathBuf>) -> CliResult {
    let s = scenario(config)?;
    let truth = s.measure()?;
    let dir = out_dir(&s, out)?;
    let tr = &truth.trajectory;
    let path = dir.join("truth_final.vtk");
    let (f0, f1) = (tr.field(0), tr.field(tr.n_steps()));
    write_vtk(&path, tr.space().mesh(), "truth", &[("c_initial", &f0), ("c_final", &f1)])?;
    let mpath = dir.join("measurements.csv");
    truth.measurements.write_csv(&mpath)?;
    println!("steps {} dt {} mass {:.6e} -> {:.6e}", tr.n_steps(), tr.dt(), tr.total_mass(0), tr.total_mass(tr.n_steps()));
    println!("min {:.4e} max {:.4e}", tr.min_value(), tr.max_value());
    println!("measurements {} peak {:.4e} sigma {:.4e}", truth.measurements.len(), truth.peak, truth.measurements.sigma);
    println!("wrote {} {}", path.display(), mpath.display());
    Ok(())
}

fn invert(config: &Path, out: Option<PathBuf>) -> CliResult {
    let s = scenario(config)?;
    let truth = s.measure()?;
    let reference = (!s.separate_truth_mesh()).then_some(&truth.flow);
    let wind = s.wind(reference)?;
    let inv = s.invert(&wind, &truth)?;
    let dir = out_dir(&s, out)?;
    let path = dir.join("inversion.vtk");
    write_vtk(&path, &s.mesh, "initial condition", &[("m_map", &inv.result.m_map)])?;
    let c = s.config.truth.center;
    println!("wind {} rank {} error_vs_fom {:.3e}", wind.source, wind.rank, wind.error_vs_fom);
    println!(
        "cg {} newton {} pde_solves {} gradient {:.3e} -> {:.3e}",
        inv.result.cg_iterations,
        inv.result.newton_iterations,
        inv.pde_solves,
        inv.result.initial_gradient_norm,
        inv.result.gradient_norm
    );
    println!(
        "argmax ({}, {}) distance {:.3}",
        inv.argmax[0],
        inv.argmax[1],
        (inv.argmax[0] - c[0]).hypot(inv.argmax[1] - c[1])
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn evac(config: &Path, alpha: Option<f64>, out: Option<PathBuf>) -> CliResult {
    let s = scenario(config)?;
    if s.separate_truth_mesh() {
        return Err(Error::Config("evac subcommand needs a single shared mesh".into()).into());
    }
    let truth = s.measure()?;
    let e = &s.config.evac;
    let alpha = alpha.unwrap_or(e.alpha);
    let space: std::sync::Arc<FunctionSpace> = truth.trajectory.space().clone();
    let model = CrowdModel::new(space.clone(), s.crowd_config(alpha))?;
    let rho0 = s.initial_crowd(&space);
    let n_steps = (e.t_final / e.dt).round() as usize;
    let tr = &truth.trajectory;
    let positive = |t: f64| -> Vec<f64> { sample_trajectory(tr, t).into_iter().map(|c| c.max(0.0)).collect() };
    let run = model.run(&rho0, &|t| Ok(positive(t)), e.dt, n_steps)?;
    let c: Vec<Vec<f64>> = run.times.iter().map(|&t| positive(t)).collect();
    let x = exposure(model.mass_matrix(), &run.rho, &c, e.dt)?;
    let dir = out_dir(&s, out)?;
    let path = dir.join("evac.vtk");
    let phi = Field::new(space.clone(), 1, run.phi[0].clone())?;
    let rho = Field::new(space.clone(), 1, run.rho[run.rho.len() / 2].clone())?;
    write_vtk(&path, &s.mesh, "evacuation", &[("phi", &phi), ("rho_mid", &rho)])?;
    let m0 = run.mass[0];
    println!("alpha {alpha} courant {:.3} exposure {x:.6e}", model.courant(e.dt));
    println!(
        "evacuated {:.4} worst mass balance {:.3e}",
        1.0 - run.mass.last().copied().unwrap_or(m0) / m0,
        run.worst_mass_balance()
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn mips(config: &Path) -> CliResult {
    let cfg = load_config(config)?;
    let m = run_mips(&cfg)?;
    for st in &m.stages {
        let status = match st.status {
            StageStatus::Completed => "completed",
            StageStatus::Failed => "failed",
            StageStatus::Skipped => "skipped",
            StageStatus::Pending => "pending",
        };
        println!("{:<8} {status:<9} {:>8.2}s  solves {}", st.name, st.seconds, st.pde_solves);
    }
    for k in [
        "invert.argmax_distance",
        "predict.observation_error",
        "steer.exposure_reduction",
        "total.pde_solves",
    ] {
        if let Some(v) = m.metrics.get(k) {
            println!("{k} {v:.6e}");
        }
    }
    if let Some(v) = m.timings.get("wind.speedup") {
        println!("wind.speedup {v:.1}");
    }
    for w in &m.warnings {
        println!("warning: {w}");
    }
    println!("manifest {}", cfg.output_dir().join("manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.command {
        Command::MeshInfo { mesh } => mesh_info(&mesh),
        Command::Flow { config, mu, out } => flow(&config, mu, out),
        Command::CavityVerify { re, n, out } => cavity(&re, n, out),
        Command::RomBuild { config, out } => rom_build(&config, out),
        Command::RomEval { config, mu, rom, check } => rom_eval(&config, mu, rom, check),
        Command::Transport { config, out } => transport(&config, out),
        Command::Invert { config, out } => invert(&config, out),
        Command::Evac { config, alpha, out } => evac(&config, alpha, out),
        Command::Mips { config } => mips(&config),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error[usage]: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Engine(e)) => {
            let cat = e.category();
            eprintln!("error[{cat}]: {e}");
            ExitCode::from(exit_code(cat))
        }
    }
}
