use std::path::PathBuf;
use std::time::Instant;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub sampler: Option<String>,
    pub status: String,
    pub started_at: String,
    pub finished_at: String,
    pub total_seconds: f64,
    pub stages: Vec<StageTime>,
    pub outputs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations_run: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds_per_iteration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_seconds_per_iteration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance_rates: Option<Vec<f64>>,
}

/// Consecutive stage timer: each lap starts where the previous one ended, so
/// the stages partition the run.
pub struct Stopwatch {
    started_at: DateTime<Utc>,
    start: Instant,
    last: Instant,
    stages: Vec<StageTime>,
}

impl Stopwatch {
    pub fn start() -> Self {
        let now = Instant::now();
        Self {
            started_at: Utc::now(),
            start: now,
            last: now,
            stages: Vec::new(),
        }
    }

    pub fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.push(StageTime {
            stage: stage.into(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }

    pub fn manifest(mut self, command: &str, config_hash: String, seed: u64, outputs: Vec<PathBuf>) -> RunManifest {
        self.lap("finish");
        RunManifest {
            command: command.into(),
            config_hash,
            seed,
            sampler: None,
            status: "ok".into(),
            started_at: self.started_at.to_rfc3339_opts(SecondsFormat::Micros, true),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true),
            total_seconds: (self.last - self.start).as_secs_f64(),
            stages: self.stages,
            outputs,
            iterations_run: None,
            seconds_per_iteration: None,
            latent_seconds_per_iteration: None,
            acceptance_rates: None,
        }
    }
}
