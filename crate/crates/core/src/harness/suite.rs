//! Multi-trial execution and aggregation into per-model rows.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::error::Result;

use super::config::RunConfig;
use super::trial::{run_trial, Outcome, TrialLog};

/// Run the given trial indices on up to `workers` threads. Results come back
/// in index order whatever the scheduling.
pub fn run_indices(cfg: &RunConfig, indices: &[usize], workers: usize) -> Vec<Result<TrialLog>> {
    let workers = workers.clamp(1, indices.len().max(1));
    if workers == 1 {
        return indices.iter().map(|&i| run_trial(cfg, i)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<TrialLog>>>> = Mutex::new((0..indices.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                if j >= indices.len() {
                    break;
                }
                let r = run_trial(cfg, indices[j]);
                slots.lock().expect("result slots")[j] = Some(r);
            });
        }
    });
    slots.into_inner().expect("result slots").into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Aggregate of one (scenario, model) suite. Means skip trials where the
/// quantity is undefined; efficiency averages successful trials only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub scenario: String,
    pub model: String,
    pub trials: usize,
    pub errors: usize,
    pub success: f64,
    pub collisions: f64,
    pub inclusion_final: Option<f64>,
    pub steps_ge95_final: Option<f64>,
    pub inclusion_all: Option<f64>,
    pub steps_ge95_all: Option<f64>,
    pub compactness_final: Option<f64>,
    pub union_area_final: Option<f64>,
    pub efficiency: Option<f64>,
    pub steps_mean: f64,
}

fn mean_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn aggregate(cfg: &RunConfig, logs: &[Result<TrialLog>]) -> SuiteRow {
    let ok: Vec<&TrialLog> = logs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let n = ok.len().max(1) as f64;
    let frac = |o: Outcome| ok.iter().filter(|l| l.summary.outcome == o).count() as f64 / n;
    let m = |f: fn(&TrialLog) -> Option<f64>| mean_of(ok.iter().filter_map(|l| f(l)));
    SuiteRow {
        scenario: cfg.run.scenario.name().to_string(),
        model: cfg.run.model.name().to_string(),
        trials: logs.len(),
        errors: logs.len() - ok.len(),
        success: frac(Outcome::Goal),
        collisions: frac(Outcome::Collision),
        inclusion_final: m(|l| l.summary.metrics.mean_inclusion_final),
        steps_ge95_final: m(|l| l.summary.metrics.validity_final),
        inclusion_all: m(|l| l.summary.metrics.mean_inclusion_all),
        steps_ge95_all: m(|l| l.summary.metrics.validity_all),
        compactness_final: m(|l| l.summary.metrics.mean_compactness_final),
        union_area_final: m(|l| l.summary.metrics.final_union_area),
        efficiency: m(|l| l.summary.metrics.success.then_some(l.summary.metrics.efficiency)),
        steps_mean: mean_of(ok.iter().map(|l| l.summary.metrics.steps as f64)).unwrap_or(0.0),
    }
}

#[derive(Debug)]
pub struct SuiteResult {
    pub config: RunConfig,
    pub logs: Vec<Result<TrialLog>>,
    pub row: SuiteRow,
}

/// Trials `0..n_trials` of one configuration. Failed trials are kept as
/// errors and the suite continues.
pub fn run_suite(cfg: &RunConfig) -> SuiteResult {
    let indices: Vec<usize> = (0..cfg.run.n_trials).collect();
    let logs = run_indices(cfg, &indices, cfg.worker_count());
    let row = aggregate(cfg, &logs);
    SuiteResult { config: cfg.clone(), logs, row }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::ScenarioKind;

    #[test]
    fn single_trial_row_matches_trial() {
        let mut cfg = RunConfig::default().with_scenario(ScenarioKind::Chair);
        cfg.run.n_trials = 1;
        cfg.run.step_cap = 60;
        let r = run_suite(&cfg);
        let t = &r.logs[0].as_ref().unwrap().summary;
        assert_eq!(r.row.inclusion_final, t.metrics.mean_inclusion_final);
        assert_eq!(r.row.compactness_final, t.metrics.mean_compactness_final);
        assert_eq!(r.row.steps_mean, t.metrics.steps as f64);
        assert_eq!(r.row.trials, 1);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = RunConfig::default().with_scenario(ScenarioKind::Chair);
        cfg.run.step_cap = 30;
        let a = run_indices(&cfg, &[0, 1, 2], 1);
        let b = run_indices(&cfg, &[0, 1, 2], 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.as_ref().unwrap().to_jsonl().unwrap(), y.as_ref().unwrap().to_jsonl().unwrap());
        }
    }
}
