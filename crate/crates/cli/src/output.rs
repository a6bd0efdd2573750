//! Metrics files.
//!
//! JSONL records are flat objects; floats use the shortest decimal that
//! round-trips (`serde_json`'s formatting), never locale-dependent. The CSV
//! projection uses the same float formatting via `csv`.

use std::fs;
use std::path::Path;

use adapmen_core::training::{Algorithm, IterationMetrics};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub algorithm: Algorithm,
    #[serde(flatten)]
    pub metrics: IterationMetrics,
}

/// Column order of the CSV projection.
#[derive(Debug, Serialize)]
struct CsvRow {
    seed: u64,
    iteration: usize,
    env_steps: usize,
    episodes: usize,
    delta_estimate: f64,
    epsb_estimate: f64,
    p: f64,
    j_learner: f64,
    j_teacher: f64,
    j_expert: f64,
    suboptimality_gap: f64,
    teacher_gap: f64,
    expert_action_usage: usize,
    buffer_len: usize,
}

pub fn metrics_jsonl(seed: u64, algorithm: Algorithm, metrics: &[IterationMetrics]) -> String {
    let mut out = String::new();
    for m in metrics {
        let record = MetricsRecord {
            seed,
            algorithm,
            metrics: m.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn metrics_csv(seed: u64, metrics: &[IterationMetrics]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for m in metrics {
        w.serialize(CsvRow {
            seed,
            iteration: m.iteration,
            env_steps: m.env_steps,
            episodes: m.episodes,
            delta_estimate: m.delta_estimate,
            epsb_estimate: m.epsb_estimate,
            p: m.p,
            j_learner: m.j_learner,
            j_teacher: m.j_teacher,
            j_expert: m.j_expert,
            suboptimality_gap: m.suboptimality_gap,
            teacher_gap: m.teacher_gap,
            expert_action_usage: m.expert_action_usage,
            buffer_len: m.buffer_len,
        })
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write(path, text)
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_metrics: Option<IterationMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Stat { mean: 0.0, std: 0.0 };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

/// Aggregate over seeds, in seed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub final_suboptimality_gap: Stat,
    pub final_teacher_gap: Stat,
    pub final_delta: Stat,
    pub final_p: Stat,
    pub expert_action_usage: Stat,
    pub per_seed: Vec<SeedSummary>,
}

impl RunSummary {
    pub fn new(algorithm: Algorithm, runs: &[(u64, Vec<IterationMetrics>)]) -> Self {
        let finals: Vec<&IterationMetrics> = runs.iter().filter_map(|(_, m)| m.last()).collect();
        let stat = |f: fn(&IterationMetrics) -> f64| Stat::of(&finals.iter().map(|m| f(m)).collect::<Vec<_>>());
        RunSummary {
            algorithm,
            seeds: runs.iter().map(|r| r.0).collect(),
            final_suboptimality_gap: stat(|m| m.suboptimality_gap),
            final_teacher_gap: stat(|m| m.teacher_gap),
            final_delta: stat(|m| m.delta_estimate),
            final_p: stat(|m| m.p),
            expert_action_usage: stat(|m| m.expert_action_usage as f64),
            per_seed: runs
                .iter()
                .map(|(seed, m)| SeedSummary {
                    seed: *seed,
                    final_metrics: m.last().cloned(),
                })
                .collect(),
        }
    }
}
