use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stage names in execution order.
pub const STAGES: [&str; 5] = ["measure", "wind", "invert", "predict", "steer"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Pending,
    Completed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    /// Failure message, skip reason, or a note on how the stage ran.
    pub reason: Option<String>,
    pub seconds: f64,
    pub pde_solves: usize,
    pub outputs: Vec<String>,
}

impl StageRecord {
    pub fn pending(name: &str) -> Self {
        Self { name: name.into(), status: StageStatus::Pending, reason: None, seconds: 0.0, pde_solves: 0, outputs: vec![] }
    }
}

/// Summary of one run. `metrics` holds only seed-determined quantities;
/// wall-clock figures live in `timings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub metrics: BTreeMap<String, f64>,
    pub timings: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            config_hash,
            seed,
            stages: vec![],
            metrics: BTreeMap::new(),
            timings: BTreeMap::new(),
            notes: BTreeMap::new(),
            warnings: vec![],
            artifacts: vec![],
            error: None,
        }
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// True when every stage finished and listed its outputs.
    pub fn is_complete(&self) -> bool {
        STAGES.iter().all(|n| {
            self.stage(n)
                .is_some_and(|s| s.status == StageStatus::Completed && !s.outputs.is_empty())
        }) && self.error.is_none()
    }

    /// Records the error and marks stages that never ran as skipped.
    pub(crate) fn fail_remaining(&mut self, err: &Error) {
        self.error = Some(err.to_string());
        let failed = self.stages.iter().find(|s| s.status == StageStatus::Failed).map(|s| s.name.clone());
        let reason = match failed {
            Some(n) => format!("stage '{n}' failed"),
            None => format!("run aborted: {err}"),
        };
        for n in STAGES {
            if self.stage(n).is_none() {
                let mut r = StageRecord::pending(n);
                r.status = StageStatus::Skipped;
                r.reason = Some(reason.clone());
                self.stages.push(r);
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}
