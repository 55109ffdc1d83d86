//! Seeded multi-trial evaluation of a policy in closed loop.

use serde::{Deserialize, Serialize};

use crate::controller::deploy::{
    deploy, make_policy, trial_rng, DeployConfig, EpisodeLog, EpisodeOutcome, PolicyKind,
};
use crate::controller::ControllerError;
use crate::sim::{random_start, SimConfig};
use crate::train::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("start sampling failed: {0}")]
    Start(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub success: bool,
    pub completion_time: Option<f64>,
    pub final_distance: f64,
    pub outcome: EpisodeOutcome,
    /// Goal distance at every model tick.
    pub distance_trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub results: Vec<TrialResult>,
    /// Trial indices whose completion time lies outside the 1.5 IQR fences.
    pub outliers: Vec<usize>,
}

impl EvalReport {
    pub fn completion_times(&self) -> Vec<f64> {
        self.results
            .iter()
            .filter_map(|r| r.completion_time)
            .collect()
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Indices of values beyond `Q1 - 1.5 IQR` or `Q3 + 1.5 IQR`.
pub fn tukey_outliers(values: &[(usize, f64)]) -> Vec<usize> {
    if values.len() < 4 {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = values.iter().map(|v| v.1).collect();
    sorted.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    values
        .iter()
        .filter(|v| v.1 < lo || v.1 > hi)
        .map(|v| v.0)
        .collect()
}

/// Runs one episode for a trial index: the start and the policy's sampling share the
/// trial's own random stream.
pub fn run_trial(
    kind: &PolicyKind,
    sim_cfg: &SimConfig,
    cfg: &DeployConfig,
    seed: u64,
    index: usize,
) -> Result<EpisodeLog, EvalError> {
    let mut rng = trial_rng(seed, index);
    let start = random_start(sim_cfg, &mut rng).map_err(|e| EvalError::Start(e.to_string()))?;
    let mut policy = make_policy(kind, cfg, sim_cfg.wrench_limits)?;
    Ok(deploy(policy.as_mut(), sim_cfg, start, cfg, &mut rng)?)
}

fn trial_result(
    kind: &PolicyKind,
    sim_cfg: &SimConfig,
    cfg: &DeployConfig,
    seed: u64,
    index: usize,
) -> Result<TrialResult, EvalError> {
    let log = run_trial(kind, sim_cfg, cfg, seed, index)?;
    let distance_trace = log
        .rows
        .iter()
        .step_by(cfg.controller.ratio())
        .map(|r| r.goal_distance)
        .collect();
    log::debug!("trial {index}: {:?}", log.outcome);
    Ok(TrialResult {
        index,
        success: log.success(),
        completion_time: log.completion_time(),
        final_distance: log.final_distance(),
        outcome: log.outcome,
        distance_trace,
    })
}

/// Evaluates a policy over `trials` seeded random starts. Trials run on up to
/// `workers` threads (0 picks the available parallelism); the report is the same
/// for every worker count.
pub fn evaluate(
    name: &str,
    kind: &PolicyKind,
    sim_cfg: &SimConfig,
    cfg: &DeployConfig,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<EvalReport, EvalError> {
    let workers = match workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        w => w,
    }
    .clamp(1, trials.max(1));
    let mut slots: Vec<Option<Result<TrialResult, EvalError>>> =
        (0..trials).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = trials.div_ceil(workers).max(1);
        for (c, part) in slots.chunks_mut(chunk).enumerate() {
            scope.spawn(move || {
                for (j, slot) in part.iter_mut().enumerate() {
                    *slot = Some(trial_result(kind, sim_cfg, cfg, seed, c * chunk + j));
                }
            });
        }
    });
    let results = slots
        .into_iter()
        .map(|s| s.expect("every trial slot is filled"))
        .collect::<Result<Vec<_>, _>>()?;
    let successes = results.iter().filter(|r| r.success).count();
    let times: Vec<(usize, f64)> = results
        .iter()
        .filter_map(|r| r.completion_time.map(|t| (r.index, t)))
        .collect();
    Ok(EvalReport {
        model: name.to_string(),
        trials,
        successes,
        success_rate: if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        },
        outliers: tukey_outliers(&times),
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tukey_fences() {
        let v: Vec<(usize, f64)> = [1.0, 1.1, 1.2, 1.3, 1.25, 9.0]
            .iter()
            .copied()
            .enumerate()
            .collect();
        assert_eq!(tukey_outliers(&v), vec![5]);
        assert!(tukey_outliers(&v[..3]).is_empty());
    }
}
