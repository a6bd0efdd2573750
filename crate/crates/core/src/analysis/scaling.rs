//! How the final sub-optimality gap grows with the horizon.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::{verify_dagger_envelope, BoundReport};
use crate::gating::Gate;
use crate::mdp::value_iteration_finite;
use crate::training::{train, Algorithm, TrainConfig, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub horizon: usize,
    pub mean_gap: f64,
    pub std_gap: f64,
    pub mean_teacher_gap: f64,
    /// Final learner gap per seed, in seed order.
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub algorithm: Algorithm,
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of `ln(mean gap)` against `ln H`.
    pub slope: f64,
    pub intercept: f64,
    /// Same fit for the deployed teacher's gap (`None` if degenerate).
    pub teacher_slope: Option<f64>,
    /// Some mean gap is zero, so the log-log fit is meaningless.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub horizon: usize,
    pub seed: u64,
    pub report: BoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingOutcome {
    pub reports: Vec<ScalingReport>,
    /// DAgger's final learner against `μ H ε_b`, one per run.
    pub dagger_envelope: Vec<EnvelopeCheck>,
}

/// Least-squares line through `(x, y)`: `(slope, intercept)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn log_fit(horizons: &[usize], values: &[f64]) -> Option<(f64, f64)> {
    if values.iter().any(|&v| !(v > 1e-12)) {
        return None;
    }
    let xs: Vec<f64> = horizons.iter().map(|&h| (h as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    Some(fit_line(&xs, &ys))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Trains every algorithm at every horizon and seed (in parallel) with
/// label noise fixed at `label_noise`, and fits the log-log growth of the
/// final gap. `base.env` supplies the environment family; its horizon is
/// replaced.
pub fn scaling_experiment(
    base: &TrainConfig,
    horizons: &[usize],
    algorithms: &[Algorithm],
    seeds: &[u64],
    label_noise: f64,
) -> Result<ScalingOutcome, TrainError> {
    let mut distinct = horizons.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(TrainError::Config {
            field: "horizons".into(),
            message: "need at least 3 distinct horizons".into(),
        });
    }
    if seeds.is_empty() {
        return Err(TrainError::Config {
            field: "seeds".into(),
            message: "need at least one seed".into(),
        });
    }
    let jobs: Vec<(Algorithm, usize, u64)> = algorithms
        .iter()
        .flat_map(|&a| horizons.iter().flat_map(move |&h| seeds.iter().map(move |&s| (a, h, s))))
        .collect();
    let results: Vec<(f64, f64, Option<BoundReport>)> = jobs
        .par_iter()
        .map(|&(algorithm, horizon, seed)| {
            let mut config = base.clone();
            config.algorithm = algorithm;
            config.env = base.env.with_horizon(horizon);
            config.learner.label_noise = label_noise;
            let run = train(&config, seed, false)?;
            let last = run.metrics.last();
            let gap = last.map_or(0.0, |m| m.suboptimality_gap);
            let teacher_gap = last.map_or(0.0, |m| m.teacher_gap);
            let envelope = if algorithm == Algorithm::Dagger {
                let mdp = config.env.build()?;
                let (q, pi) = value_iteration_finite(&mdp);
                let gate = Gate::new(config.criterion.kind, q, pi);
                Some(verify_dagger_envelope(&mdp, &gate, &run.learner))
            } else {
                None
            };
            Ok((gap, teacher_gap, envelope))
        })
        .collect::<Result<_, TrainError>>()?;

    let mut reports = Vec::new();
    let mut dagger_envelope = Vec::new();
    let mut idx = 0;
    for &algorithm in algorithms {
        let mut points = Vec::new();
        for &horizon in horizons {
            let chunk = &results[idx..idx + seeds.len()];
            idx += seeds.len();
            let gaps: Vec<f64> = chunk.iter().map(|r| r.0).collect();
            let teacher: Vec<f64> = chunk.iter().map(|r| r.1).collect();
            let (mean_gap, std_gap) = mean_std(&gaps);
            for (r, &seed) in chunk.iter().zip(seeds) {
                if let Some(report) = &r.2 {
                    dagger_envelope.push(EnvelopeCheck {
                        horizon,
                        seed,
                        report: report.clone(),
                    });
                }
            }
            points.push(ScalingPoint {
                horizon,
                mean_gap,
                std_gap,
                mean_teacher_gap: mean_std(&teacher).0,
                gaps,
            });
        }
        let means: Vec<f64> = points.iter().map(|p| p.mean_gap).collect();
        let teacher_means: Vec<f64> = points.iter().map(|p| p.mean_teacher_gap).collect();
        let fit = log_fit(horizons, &means);
        reports.push(ScalingReport {
            algorithm,
            slope: fit.map_or(f64::NAN, |f| f.0),
            intercept: fit.map_or(f64::NAN, |f| f.1),
            teacher_slope: log_fit(horizons, &teacher_means).map(|f| f.0),
            degenerate: fit.is_none(),
            points,
        });
    }
    Ok(ScalingOutcome {
        reports,
        dagger_envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_a_power_law() {
        let hs = [8usize, 16, 32, 64];
        let ys: Vec<f64> = hs.iter().map(|&h| 0.3 * (h as f64).powi(2)).collect();
        let (slope, intercept) = log_fit(&hs, &ys).unwrap();
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((intercept - 0.3f64.ln()).abs() < 1e-12);
        assert!(log_fit(&hs, &[1.0, 0.0, 1.0, 1.0]).is_none());
    }
}
