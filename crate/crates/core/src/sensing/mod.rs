//! Point sensors, the observation operator and synthetic measurements.
//!
//! Observation vectors are time-major: entry `i·n_sensors + s` is sensor `s`
//! at the `i`-th measurement time. Measurement times are snapped to the
//! nearest trajectory time.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::meshfem::{interpolation_row, FunctionSpace, Point};
use crate::transport::Trajectory;

#[derive(Debug, Clone)]
pub struct SensorArray {
    space: Arc<FunctionSpace>,
    positions: Vec<Point>,
    rows: Vec<Vec<(usize, f64)>>,
    t_start: f64,
    rate: f64,
}

impl SensorArray {
    /// Fails with a location error for any position outside the mesh.
    pub fn new(space: Arc<FunctionSpace>, positions: Vec<Point>, t_start: f64, rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !(t_start >= 0.0) {
            return Err(Error::contract("sensor rate must be > 0 and t_start >= 0"));
        }
        let rows = positions.iter().map(|&p| interpolation_row(&space, p)).collect::<Result<Vec<_>>>()?;
        Ok(Self { space, positions, rows, t_start, rate })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn n_sensors(&self) -> usize {
        self.positions.len()
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Interpolation weights `(dof, w)` of sensor `s`.
    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    /// `t_start + i/rate` for every such time not beyond `t_final`.
    pub fn measurement_times(&self, t_final: f64) -> Vec<f64> {
        if t_final + 1e-9 < self.t_start {
            return vec![];
        }
        let count = ((t_final - self.t_start) * self.rate + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.t_start + i as f64 / self.rate).collect()
    }

    /// Measurement times and their trajectory indices for a grid `n·dt`, `n ≤ n_steps`.
    pub fn schedule(&self, dt: f64, n_steps: usize) -> Result<Schedule> {
        Schedule::snap(&self.measurement_times(n_steps as f64 * dt), dt, n_steps)
    }

    /// Point values of one state vector.
    pub fn sample(&self, state: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(d, w)| w * state[d]).sum()).collect()
    }

    /// `Bᵀ` of one time slice: nodal load from per-sensor weights.
    pub fn sample_transpose(&self, weights: &[f64], out: &mut [f64]) {
        for (r, &w) in self.rows.iter().zip(weights) {
            for &(d, phi) in r {
                out[d] += phi * w;
            }
        }
    }
}

/// Measurement times snapped to a trajectory grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub times: Vec<f64>,
    pub indices: Vec<usize>,
}

impl Schedule {
    /// Errors when a time lies beyond the final grid time by more than `dt/2`.
    pub fn snap(times: &[f64], dt: f64, n_steps: usize) -> Result<Self> {
        let mut indices = Vec::with_capacity(times.len());
        for &t in times {
            let i = (t / dt).round();
            if t < -0.5 * dt || i > n_steps as f64 || (i * dt - t).abs() > 0.5 * dt {
                return Err(Error::contract(format!(
                    "measurement time {t} is outside the trajectory [0, {}]",
                    n_steps as f64 * dt
                )));
            }
            indices.push(i as usize);
        }
        Ok(Self { times: times.to_vec(), indices })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `B(c)`, time-major.
pub fn observe(trajectory: &Trajectory, sensors: &SensorArray) -> Result<Vec<f64>> {
    let schedule = sensors.schedule(trajectory.dt(), trajectory.n_steps())?;
    observe_at(trajectory.states(), sensors, &schedule)
}

pub fn observe_at(states: &[Vec<f64>], sensors: &SensorArray, schedule: &Schedule) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(schedule.len() * sensors.n_sensors());
    for &i in &schedule.indices {
        let s = states
            .get(i)
            .ok_or_else(|| Error::contract(format!("trajectory has no state {i}")))?;
        if s.len() != sensors.space().n_dof() {
            return Err(Error::DimensionMismatch { expected: sensors.space().n_dof(), found: s.len() });
        }
        out.extend(sensors.sample(s));
    }
    Ok(out)
}

/// `Bᵀ w` as per-time-index nodal loads (empty vectors where nothing is measured).
pub fn observe_transpose(sensors: &SensorArray, schedule: &Schedule, n_steps: usize, w: &[f64]) -> Result<Vec<Vec<f64>>> {
    let ns = sensors.n_sensors();
    if w.len() != ns * schedule.len() {
        return Err(Error::DimensionMismatch { expected: ns * schedule.len(), found: w.len() });
    }
    let nd = sensors.space().n_dof();
    let mut loads = vec![Vec::new(); n_steps + 1];
    for (k, &i) in schedule.indices.iter().enumerate() {
        if loads[i].is_empty() {
            loads[i] = vec![0.0; nd];
        }
        sensors.sample_transpose(&w[k * ns..(k + 1) * ns], &mut loads[i]);
    }
    Ok(loads)
}

#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub d: Vec<f64>,
    pub sigma: f64,
    pub schedule: Schedule,
    pub sensors: SensorArray,
}

impl MeasurementSet {
    pub fn new(d: Vec<f64>, sigma: f64, schedule: Schedule, sensors: SensorArray) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::contract("noise level must be >= 0"));
        }
        let n = schedule.len() * sensors.n_sensors();
        if d.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: d.len() });
        }
        Ok(Self { d, sigma, schedule, sensors })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Value of sensor `s` at measurement `i`.
    pub fn value(&self, i: usize, s: usize) -> f64 {
        self.d[i * self.sensors.n_sensors() + s]
    }

    /// CSV with columns `time,sensor_id,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,sensor_id,value\n");
        for (i, t) in self.schedule.times.iter().enumerate() {
            for s in 0..self.sensors.n_sensors() {
                let _ = writeln!(out, "{t},{s},{}", self.value(i, s));
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Reads values written by [`MeasurementSet::to_csv`] for a known
    /// sensor array on a trajectory grid.
    pub fn read_csv(
        path: impl AsRef<Path>,
        sensors: SensorArray,
        sigma: f64,
        dt: f64,
        n_steps: usize,
    ) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string(), sensors, sigma, dt, n_steps)
    }

    pub fn parse_csv(text: &str, label: &str, sensors: SensorArray, sigma: f64, dt: f64, n_steps: usize) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse { path: label.to_string(), line, message };
        let ns = sensors.n_sensors();
        let mut times: Vec<f64> = Vec::new();
        let mut values: Vec<Option<f64>> = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || (no == 0 && line.starts_with("time")) {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(err(no + 1, format!("expected 3 columns, found {}", f.len())));
            }
            let t: f64 = f[0].parse().map_err(|_| err(no + 1, format!("bad time '{}'", f[0])))?;
            let s: usize = f[1].parse().map_err(|_| err(no + 1, format!("bad sensor id '{}'", f[1])))?;
            let v: f64 = f[2].parse().map_err(|_| err(no + 1, format!("bad value '{}'", f[2])))?;
            if s >= ns {
                return Err(err(no + 1, format!("sensor id {s} out of range (have {ns})")));
            }
            let k = match times.iter().position(|&x| (x - t).abs() <= 1e-9 * t.abs().max(1.0)) {
                Some(k) => k,
                None => {
                    if times.last().is_some_and(|&last| t < last) {
                        return Err(err(no + 1, "times must be non-decreasing".into()));
                    }
                    times.push(t);
                    values.extend(std::iter::repeat_n(None, ns));
                    times.len() - 1
                }
            };
            if values[k * ns + s].replace(v).is_some() {
                return Err(err(no + 1, format!("duplicate value for sensor {s} at t = {t}")));
            }
        }
        if let Some(k) = values.iter().position(Option::is_none) {
            return Err(err(0, format!("missing value for sensor {} at t = {}", k % ns, times[k / ns])));
        }
        let schedule = Schedule::snap(&times, dt, n_steps)?;
        Self::new(values.into_iter().flatten().collect(), sigma, schedule, sensors)
    }
}

/// `d + ε` with `ε ~ N(0, σ²)` i.i.d., reproducible from `seed`.
pub fn add_noise(d: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) {
        return Err(Error::contract("noise level must be >= 0"));
    }
    if sigma == 0.0 {
        return Ok(d.to_vec());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::contract(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(d.iter().map(|v| v + normal.sample(&mut rng)).collect())
}

/// Observes `trajectory` and perturbs the result.
pub fn synthesize(trajectory: &Trajectory, sensors: &SensorArray, sigma: f64, seed: u64) -> Result<MeasurementSet> {
    let schedule = sensors.schedule(trajectory.dt(), trajectory.n_steps())?;
    let clean = observe_at(trajectory.states(), sensors, &schedule)?;
    MeasurementSet::new(add_noise(&clean, sigma, seed)?, sigma, schedule, sensors.clone())
}

/// Sensor fixture: one `x y` pair per line; `#` starts a comment.
pub fn parse_positions(text: &str, label: &str) -> Result<Vec<Point>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let parsed: Option<Vec<f64>> = f.iter().map(|s| s.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 2 && v.iter().all(|x| x.is_finite()) => out.push([v[0], v[1]]),
            _ => {
                return Err(Error::Parse {
                    path: label.to_string(),
                    line: no + 1,
                    message: format!("expected 'x y', found '{line}'"),
                })
            }
        }
    }
    Ok(out)
}

pub fn read_positions(path: impl AsRef<Path>) -> Result<Vec<Point>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_positions(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshfem::rect_mesh;

    fn space() -> Arc<FunctionSpace> {
        FunctionSpace::new(Arc::new(rect_mesh(4, 4, [0.0, 1.0], [0.0, 1.0], &[]).unwrap()), 1).unwrap()
    }

    #[test]
    fn thirteen_sensors_eleven_times() {
        let pos = (0..13).map(|i| [0.05 + 0.07 * i as f64, 0.5]).collect();
        let s = SensorArray::new(space(), pos, 2.0, 5.0).unwrap();
        let sched = s.schedule(0.04, 100).unwrap();
        assert_eq!(sched.len(), 11);
        assert_eq!(sched.indices[0], 50);
        assert_eq!(*sched.indices.last().unwrap(), 100);
        assert_eq!(sched.len() * s.n_sensors(), 143);
    }

    #[test]
    fn constant_trajectory_observes_ones() {
        let sp = space();
        let s = SensorArray::new(sp.clone(), vec![[0.3, 0.3], [0.71, 0.2]], 0.0, 10.0).unwrap();
        let tr = Trajectory::new(sp.clone(), 0.1, vec![vec![1.0; sp.n_dof()]; 11]).unwrap();
        let d = observe(&tr, &s).unwrap();
        assert_eq!(d.len(), 22);
        assert!(d.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn outside_sensor_and_late_time_fail() {
        assert!(matches!(SensorArray::new(space(), vec![[2.0, 0.0]], 0.0, 1.0), Err(Error::Location { .. })));
        assert!(Schedule::snap(&[1.3], 0.1, 10).is_err());
        assert!(Schedule::snap(&[1.04], 0.1, 10).is_ok());
    }

    #[test]
    fn noise_is_seeded() {
        let d = vec![0.0; 10_000];
        assert_eq!(add_noise(&d, 0.0, 1).unwrap(), d);
        let a = add_noise(&d, 0.5, 7).unwrap();
        assert_eq!(a, add_noise(&d, 0.5, 7).unwrap());
        let var = a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64;
        assert!((var / 0.25 - 1.0).abs() < 0.05);
    }

    #[test]
    fn csv_round_trip() {
        let sp = space();
        let s = SensorArray::new(sp.clone(), vec![[0.3, 0.3], [0.7, 0.6]], 0.5, 2.0).unwrap();
        let states: Vec<Vec<f64>> = (0..11).map(|n| vec![n as f64; sp.n_dof()]).collect();
        let tr = Trajectory::new(sp, 0.1, states).unwrap();
        let m = synthesize(&tr, &s, 0.0, 0).unwrap();
        let back = MeasurementSet::parse_csv(&m.to_csv(), "m.csv", s, 0.0, 0.1, 10).unwrap();
        assert_eq!(back.d, m.d);
        assert_eq!(back.schedule, m.schedule);
    }

    #[test]
    fn fixture_parsing() {
        let p = parse_positions("# sensors\n1 2\n\n3.5 -4 # east\n", "s.txt").unwrap();
        assert_eq!(p, vec![[1.0, 2.0], [3.5, -4.0]]);
        let e = parse_positions("1 2\n1 x\n", "s.txt").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }
}
