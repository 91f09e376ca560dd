//! Scenario files.
//!
//! Grammar (one statement per line):
//!
//! ```text
//! # comment            ; comment
//! [section]
//! key = value
//! ```
//!
//! Lists are comma or whitespace separated. Every key must be known to the
//! section it appears in; repeated keys and sections are rejected. Relative
//! paths resolve against the directory holding the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evac::Penalty;

/// Environment variable that overrides `[run] output_dir`.
pub const OUTPUT_DIR_ENV: &str = "AIRTWIN_OUTPUT_DIR";

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Raw `[section] key = value` contents with line numbers.
#[derive(Debug, Clone, Default)]
pub struct Ini {
    label: String,
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
}

impl Ini {
    pub fn parse(text: &str, label: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse { path: label.to_string(), line, message };
        let mut ini = Ini { label: label.to_string(), sections: BTreeMap::new() };
        let mut current: Option<String> = None;
        for (no, raw) in text.lines().enumerate() {
            let line_no = no + 1;
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line_no, "unterminated section header".into()))?
                    .trim()
                    .to_ascii_lowercase();
                if name.is_empty() {
                    return Err(err(line_no, "empty section name".into()));
                }
                if ini.sections.contains_key(&name) {
                    return Err(err(line_no, format!("section [{name}] repeated")));
                }
                ini.sections.insert(name.clone(), (line_no, BTreeMap::new()));
                current = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected 'key = value', found '{line}'")))?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(err(line_no, format!("bad key '{key}'")));
            }
            let section = current.as_ref().ok_or_else(|| err(line_no, format!("key '{key}' outside any section")))?;
            let map = &mut ini.sections.get_mut(section).expect("section exists").1;
            if map.contains_key(&key) {
                return Err(err(line_no, format!("key '{key}' repeated in [{section}]")));
            }
            map.insert(key, Entry { value: value.trim().to_string(), line: line_no });
        }
        Ok(ini)
    }

    fn section(&self, name: &'static str, known: &[&str]) -> Result<Section<'_>> {
        let entries = self.sections.get(name).map(|s| &s.1);
        if let Some(map) = entries {
            for (k, e) in map {
                if !known.contains(&k.as_str()) {
                    return Err(Error::Parse {
                        path: self.label.clone(),
                        line: e.line,
                        message: format!("unknown key '{k}' in [{name}] (expected one of: {})", known.join(", ")),
                    });
                }
            }
        }
        Ok(Section { ini: self, name, entries })
    }

    fn check_sections(&self, known: &[&str]) -> Result<()> {
        for (name, (line, _)) in &self.sections {
            if !known.contains(&name.as_str()) {
                return Err(Error::Parse {
                    path: self.label.clone(),
                    line: *line,
                    message: format!("unknown section [{name}]"),
                });
            }
        }
        Ok(())
    }
}

struct Section<'a> {
    ini: &'a Ini,
    name: &'static str,
    entries: Option<&'a BTreeMap<String, Entry>>,
}

impl Section<'_> {
    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.and_then(|m| m.get(key))
    }

    fn bad(&self, e: &Entry, key: &str, what: &str) -> Error {
        Error::Parse {
            path: self.ini.label.clone(),
            line: e.line,
            message: format!("[{}] {key}: expected {what}, found '{}'", self.name, e.value),
        }
    }

    fn missing(&self, key: &str) -> Error {
        Error::Config(format!("{}: missing required key '{key}' in [{}]", self.ini.label, self.name))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| self.bad(e, key, what)),
        }
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.parsed(key, "a number")?;
        match (v, self.raw(key)) {
            (Some(x), Some(e)) if !x.is_finite() => Err(self.bad(e, key, "a finite number")),
            _ => Ok(v),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn f64_req(&self, key: &str) -> Result<f64> {
        self.f64_opt(key)?.ok_or_else(|| self.missing(key))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parsed(key, "a non-negative integer")?.unwrap_or(default))
    }

    fn list<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| self.bad(e, key, what)))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn floats<const N: usize>(&self, key: &str) -> Result<Option<[f64; N]>> {
        match self.list::<f64>(key, "numbers")? {
            None => Ok(None),
            Some(v) => {
                let e = self.raw(key).expect("present");
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(self.bad(e, key, "finite numbers"));
                }
                v.try_into().map(Some).map_err(|_| self.bad(e, key, &format!("{N} numbers")))
            }
        }
    }

    fn tags(&self, key: &str, default: &[i32]) -> Result<Vec<i32>> {
        Ok(self.list(key, "integer tags")?.unwrap_or_else(|| default.to_vec()))
    }

    fn path_opt(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|e| PathBuf::from(&e.value))
    }

    fn string_or(&self, key: &str, default: &str) -> String {
        self.raw(key).map_or_else(|| default.to_string(), |e| e.value.clone())
    }

    fn check(&self, ok: bool, key: &str, what: &str) -> Result<()> {
        if ok {
            return Ok(());
        }
        match self.raw(key) {
            Some(e) => Err(self.bad(e, key, what)),
            None => Err(Error::Config(format!("[{}] {key}: default does not satisfy {what}", self.name))),
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MeshSection {
    pub path: PathBuf,
    /// Separate mesh for generating synthetic data (avoids the inverse crime).
    pub truth_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FlowSection {
    pub nu: f64,
    pub mu: f64,
    pub mu_range: [f64; 2],
    pub length_scale: f64,
    pub inflow_tag: i32,
    /// Width over which the inflow ramps to zero at the edge ends.
    pub ramp: Option<f64>,
    pub noslip_tags: Vec<i32>,
    pub outflow_tags: Vec<i32>,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum WindSource {
    Rom,
    Fom,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RomSection {
    pub source: WindSource,
    /// Number of snapshots, linearly spaced over `mu_range`.
    pub snapshots: usize,
    pub energy_tol: f64,
    pub max_rank: Option<usize>,
    pub tol: f64,
    /// Prebuilt operators; built in-process when absent.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TransportSection {
    pub k: f64,
    pub dt: f64,
    pub t_final: f64,
    pub dirichlet_tags: Vec<i32>,
    /// `0` selects the sparse LU, otherwise the BiCGSTAB tolerance.
    pub iterative_tol: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TruthSection {
    pub center: [f64; 2],
    pub radius: f64,
    pub level: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SensorSection {
    pub path: PathBuf,
    pub t_start: f64,
    pub rate: f64,
    /// Noise standard deviation relative to the peak noise-free signal.
    pub sigma_rel: f64,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PriorSection {
    Correlation { length: f64, std: f64 },
    Operator { gamma: f64, delta: f64, beta: Option<f64> },
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct InverseSection {
    pub cg_tol: f64,
    pub max_cg: usize,
    pub max_newton: usize,
    pub preconditioned: bool,
    /// Rank of the posterior approximation; `0` skips it.
    pub lowrank: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvacSection {
    pub v_max: f64,
    pub rho_max: f64,
    pub alpha: f64,
    #[serde(serialize_with = "penalty_name")]
    pub penalty: Penalty,
    pub exit_tags: Vec<i32>,
    pub dt: f64,
    pub t_final: f64,
    pub rho0: f64,
    /// `x0 x1 y0 y1` of the initially occupied box.
    pub region: [f64; 4],
}

fn penalty_name<S: serde::Serializer>(p: &Penalty, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(match p {
        Penalty::Rational => "rational",
        Penalty::Exponential => "exponential",
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunSection {
    pub seed: u64,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ScenarioConfig {
    pub mesh: MeshSection,
    pub flow: FlowSection,
    pub rom: RomSection,
    pub transport: TransportSection,
    pub truth: TruthSection,
    pub sensors: SensorSection,
    pub prior: PriorSection,
    pub inverse: InverseSection,
    pub evac: EvacSection,
    pub run: RunSection,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

const SECTIONS: &[&str] = &["mesh", "flow", "rom", "transport", "truth", "sensors", "prior", "inverse", "evac", "run"];

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let cfg = Self::parse(&text, &path.display().to_string(), &base)?;
        cfg.check_files()?;
        Ok(cfg)
    }

    /// Parses and validates values; does not touch the file system.
    pub fn parse(text: &str, label: &str, base_dir: &Path) -> Result<Self> {
        let ini = Ini::parse(text, label)?;
        ini.check_sections(SECTIONS)?;

        let s = ini.section("mesh", &["path", "truth_path"])?;
        let mesh = MeshSection {
            path: s.path_opt("path").ok_or_else(|| s.missing("path"))?,
            truth_path: s.path_opt("truth_path"),
        };

        let s = ini.section(
            "flow",
            &["nu", "mu", "mu_range", "length_scale", "inflow_tag", "ramp", "noslip_tags", "outflow_tags", "tol"],
        )?;
        let flow = FlowSection {
            nu: s.f64_req("nu")?,
            mu: s.f64_req("mu")?,
            mu_range: s.floats("mu_range")?.ok_or_else(|| s.missing("mu_range"))?,
            length_scale: s.f64_or("length_scale", 1.0)?,
            inflow_tag: s.parsed("inflow_tag", "an integer tag")?.unwrap_or(crate::meshfem::TAG_SOUTH),
            ramp: s.f64_opt("ramp")?,
            noslip_tags: s.tags("noslip_tags", &[])?,
            outflow_tags: s.tags("outflow_tags", &[])?,
            tol: s.f64_or("tol", 1e-8)?,
        };
        s.check(flow.nu > 0.0, "nu", "a positive viscosity")?;
        s.check(flow.mu_range[0] < flow.mu_range[1], "mu_range", "an increasing pair")?;
        s.check(flow.mu >= flow.mu_range[0] && flow.mu <= flow.mu_range[1], "mu", "a value inside mu_range")?;
        s.check(flow.length_scale > 0.0, "length_scale", "a positive length")?;
        s.check(flow.ramp.is_none_or(|r| r > 0.0), "ramp", "a positive width")?;
        s.check(flow.tol > 0.0, "tol", "a positive tolerance")?;

        let s = ini.section("rom", &["source", "snapshots", "energy_tol", "max_rank", "tol", "path"])?;
        let source = match s.string_or("source", "rom").to_ascii_lowercase().as_str() {
            "rom" => WindSource::Rom,
            "fom" => WindSource::Fom,
            _ => return Err(s.bad(s.raw("source").expect("present"), "source", "'rom' or 'fom'")),
        };
        let rom = RomSection {
            source,
            snapshots: s.usize_or("snapshots", 20)?,
            energy_tol: s.f64_or("energy_tol", 1e-6)?,
            max_rank: s.parsed("max_rank", "a non-negative integer")?,
            tol: s.f64_or("tol", 1e-10)?,
            path: s.path_opt("path"),
        };
        s.check(rom.snapshots >= 2, "snapshots", "at least 2")?;
        s.check(rom.energy_tol > 0.0 && rom.energy_tol < 1.0, "energy_tol", "a value in (0, 1)")?;
        s.check(rom.tol > 0.0, "tol", "a positive tolerance")?;

        let s = ini.section("transport", &["k", "dt", "t_final", "dirichlet_tags", "iterative_tol"])?;
        let transport = TransportSection {
            k: s.f64_req("k")?,
            dt: s.f64_req("dt")?,
            t_final: s.f64_req("t_final")?,
            dirichlet_tags: s.tags("dirichlet_tags", &[])?,
            iterative_tol: s.f64_or("iterative_tol", 0.0)?,
        };
        s.check(transport.k > 0.0, "k", "a positive diffusivity")?;
        s.check(transport.dt > 0.0, "dt", "a positive time step")?;
        s.check(transport.t_final >= transport.dt, "t_final", "a horizon of at least one step")?;
        s.check(transport.iterative_tol >= 0.0, "iterative_tol", "a non-negative tolerance")?;

        let s = ini.section("truth", &["center", "radius", "level"])?;
        let truth = TruthSection {
            center: s.floats("center")?.ok_or_else(|| s.missing("center"))?,
            radius: s.f64_req("radius")?,
            level: s.f64_or("level", 0.5)?,
        };
        s.check(truth.radius > 0.0, "radius", "a positive radius")?;
        s.check(truth.level > 0.0 && truth.level < 1.0, "level", "a value in (0, 1)")?;

        let s = ini.section("sensors", &["path", "t_start", "rate", "sigma_rel"])?;
        let sensors = SensorSection {
            path: s.path_opt("path").ok_or_else(|| s.missing("path"))?,
            t_start: s.f64_req("t_start")?,
            rate: s.f64_req("rate")?,
            sigma_rel: s.f64_req("sigma_rel")?,
        };
        s.check(sensors.t_start >= 0.0, "t_start", "a non-negative time")?;
        s.check(sensors.rate > 0.0, "rate", "a positive rate")?;
        s.check(sensors.sigma_rel >= 0.0, "sigma_rel", "a non-negative level")?;

        let s = ini.section("prior", &["correlation_length", "std", "gamma", "delta", "beta"])?;
        let corr = (s.f64_opt("correlation_length")?, s.f64_opt("std")?);
        let op = (s.f64_opt("gamma")?, s.f64_opt("delta")?, s.f64_opt("beta")?);
        let prior = match (corr, op) {
            ((Some(length), Some(std)), (None, None, None)) => {
                s.check(length > 0.0, "correlation_length", "a positive length")?;
                s.check(std > 0.0, "std", "a positive deviation")?;
                PriorSection::Correlation { length, std }
            }
            ((None, None), (Some(gamma), Some(delta), beta)) => {
                s.check(gamma > 0.0, "gamma", "a positive coefficient")?;
                s.check(delta > 0.0, "delta", "a positive coefficient")?;
                s.check(beta.is_none_or(|b| b >= 0.0), "beta", "a non-negative coefficient")?;
                PriorSection::Operator { gamma, delta, beta }
            }
            _ => {
                return Err(Error::Config(format!(
                    "{label}: [prior] needs either correlation_length and std, or gamma and delta (optional beta)"
                )))
            }
        };

        let s = ini.section("inverse", &["cg_tol", "max_cg", "max_newton", "preconditioned", "lowrank"])?;
        let inverse = InverseSection {
            cg_tol: s.f64_or("cg_tol", 1e-8)?,
            max_cg: s.usize_or("max_cg", 500)?,
            max_newton: s.usize_or("max_newton", 3)?,
            preconditioned: s.parsed("preconditioned", "true or false")?.unwrap_or(true),
            lowrank: s.usize_or("lowrank", 0)?,
        };
        s.check(inverse.cg_tol > 0.0 && inverse.cg_tol < 1.0, "cg_tol", "a value in (0, 1)")?;
        s.check(inverse.max_cg > 0, "max_cg", "a positive count")?;
        s.check(inverse.max_newton > 0, "max_newton", "a positive count")?;

        let s = ini.section(
            "evac",
            &["v_max", "rho_max", "alpha", "penalty", "exit_tags", "dt", "t_final", "rho0", "region"],
        )?;
        let penalty = match s.string_or("penalty", "rational").to_ascii_lowercase().as_str() {
            "rational" => Penalty::Rational,
            "exponential" => Penalty::Exponential,
            _ => return Err(s.bad(s.raw("penalty").expect("present"), "penalty", "'rational' or 'exponential'")),
        };
        let evac = EvacSection {
            v_max: s.f64_or("v_max", 1.4)?,
            rho_max: s.f64_or("rho_max", 5.0)?,
            alpha: s.f64_req("alpha")?,
            penalty,
            exit_tags: s.tags("exit_tags", &[])?,
            dt: s.f64_req("dt")?,
            t_final: s.f64_req("t_final")?,
            rho0: s.f64_req("rho0")?,
            region: s.floats("region")?.ok_or_else(|| s.missing("region"))?,
        };
        s.check(evac.v_max > 0.0, "v_max", "a positive speed")?;
        s.check(evac.rho_max > 0.0, "rho_max", "a positive density")?;
        s.check(evac.alpha >= 0.0, "alpha", "a non-negative coefficient")?;
        s.check(!evac.exit_tags.is_empty(), "exit_tags", "at least one tag")?;
        s.check(evac.dt > 0.0, "dt", "a positive time step")?;
        s.check(evac.t_final >= evac.dt, "t_final", "a horizon of at least one step")?;
        s.check(evac.rho0 >= 0.0 && evac.rho0 <= evac.rho_max, "rho0", "a density in [0, rho_max]")?;
        let r = evac.region;
        s.check(r[0] < r[1] && r[2] < r[3], "region", "x0 < x1 and y0 < y1")?;

        let s = ini.section("run", &["seed", "output_dir"])?;
        let run = RunSection {
            seed: s.parsed("seed", "a non-negative integer")?.unwrap_or(0),
            output_dir: s.path_opt("output_dir").unwrap_or_else(|| PathBuf::from("output")),
        };

        Ok(Self {
            mesh,
            flow,
            rom,
            transport,
            truth,
            sensors,
            prior,
            inverse,
            evac,
            run,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Output directory after the environment override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.resolve(&self.run.output_dir),
        }
    }

    /// Resolved input files that must exist. The ROM file is optional at run time.
    pub fn required_files(&self) -> Vec<(&'static str, PathBuf)> {
        let mut files = vec![("mesh.path", &self.mesh.path), ("sensors.path", &self.sensors.path)];
        if let Some(t) = &self.mesh.truth_path {
            files.push(("mesh.truth_path", t));
        }
        files.into_iter().map(|(k, p)| (k, self.resolve(p))).collect()
    }

    pub fn check_files(&self) -> Result<()> {
        for (key, full) in self.required_files() {
            if !full.is_file() {
                return Err(Error::Config(format!("{key}: file {} does not exist", full.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 of the semantic content (parsed values, not layout; the
    /// output directory is excluded).
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
