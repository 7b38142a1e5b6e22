//! Experiment grids and their tables. Every table here is a pure function
//! of the trial logs, so identical seeds give identical bytes; wall-clock
//! numbers go to a separate timing table.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::metrics::{self, solved_confidence};
use crate::seeding::{derive_seed, stream};
use crate::simworld::ScenarioKind;

use super::config::{Model, RunConfig};
use super::suite::{run_suite, SuiteResult, SuiteRow};
use super::trial::TrialLog;

/// One suite per (scenario, model), scenarios outermost.
pub fn run_grid(base: &RunConfig, scenarios: &[ScenarioKind], models: &[Model]) -> Vec<SuiteResult> {
    scenarios
        .iter()
        .flat_map(|&s| models.iter().map(move |&m| base.with_scenario(s).with_model(m)))
        .map(|cfg| run_suite(&cfg))
        .collect()
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::GmIpcError::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| crate::GmIpcError::Serde(e.to_string()))
}

fn ok_logs(s: &SuiteResult) -> impl Iterator<Item = &TrialLog> {
    s.logs.iter().filter_map(|r| r.as_ref().ok())
}

pub fn summary_csv(suites: &[SuiteResult]) -> Result<String> {
    to_csv(&suites.iter().map(|s| s.row.clone()).collect::<Vec<SuiteRow>>())
}

#[derive(Serialize)]
struct ValidityRow<'a> {
    scenario: &'a str,
    model: &'a str,
    trials: usize,
    inclusion_final: Option<f64>,
    steps_ge95_final: Option<f64>,
    inclusion_all: Option<f64>,
    steps_ge95_all: Option<f64>,
    compactness_final: Option<f64>,
}

pub fn validity_csv(suites: &[SuiteResult]) -> Result<String> {
    let rows: Vec<ValidityRow> = suites
        .iter()
        .map(|s| ValidityRow {
            scenario: &s.row.scenario,
            model: &s.row.model,
            trials: s.row.trials,
            inclusion_final: s.row.inclusion_final,
            steps_ge95_final: s.row.steps_ge95_final,
            inclusion_all: s.row.inclusion_all,
            steps_ge95_all: s.row.steps_ge95_all,
            compactness_final: s.row.compactness_final,
        })
        .collect();
    to_csv(&rows)
}

#[derive(Serialize)]
struct NavigationRow<'a> {
    scenario: &'a str,
    model: &'a str,
    trials: usize,
    success: f64,
    collisions: f64,
    efficiency: Option<f64>,
    steps_mean: f64,
}

pub fn navigation_csv(suites: &[SuiteResult]) -> Result<String> {
    let rows: Vec<NavigationRow> = suites
        .iter()
        .map(|s| NavigationRow {
            scenario: &s.row.scenario,
            model: &s.row.model,
            trials: s.row.trials,
            success: s.row.success,
            collisions: s.row.collisions,
            efficiency: s.row.efficiency,
            steps_mean: s.row.steps_mean,
        })
        .collect();
    to_csv(&rows)
}

#[derive(Serialize)]
struct AblationRow<'a> {
    scenario: &'a str,
    model: &'a str,
    trials: usize,
    inclusion_final: Option<f64>,
    compactness_final: Option<f64>,
    union_area_final: Option<f64>,
}

pub fn ablation_csv(suites: &[SuiteResult]) -> Result<String> {
    let rows: Vec<AblationRow> = suites
        .iter()
        .map(|s| AblationRow {
            scenario: &s.row.scenario,
            model: &s.row.model,
            trials: s.row.trials,
            inclusion_final: s.row.inclusion_final,
            compactness_final: s.row.compactness_final,
            union_area_final: s.row.union_area_final,
        })
        .collect();
    to_csv(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceRow {
    pub scenario: String,
    pub model: String,
    pub trial: usize,
    pub target_area: f64,
    pub solved_rho: Option<f64>,
    pub saturated: bool,
}

/// Confidence at which each trial's final contract has the footprint area
/// of the obstacles seen at that step.
pub fn confidence_rows(suites: &[SuiteResult]) -> Result<Vec<ConfidenceRow>> {
    let mut rows = Vec::new();
    for s in suites {
        for log in ok_logs(s) {
            let sum = &log.summary;
            let solved = match &sum.final_contract {
                Some(m) if sum.final_footprint_area > 0.0 => {
                    let seed = derive_seed(&[stream::METRICS, log.header.scenario_seed, 1]);
                    Some(solved_confidence(m, sum.final_footprint_area, metrics::STEP_MC_SAMPLES, seed)?)
                }
                _ => None,
            };
            rows.push(ConfidenceRow {
                scenario: s.row.scenario.clone(),
                model: s.row.model.clone(),
                trial: log.header.trial,
                target_area: sum.final_footprint_area,
                solved_rho: solved.map(|c| c.rho),
                saturated: solved.is_some_and(|c| c.saturated),
            });
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct ConfidenceSummaryRow {
    scenario: String,
    model: String,
    trials: usize,
    mean_solved_rho: Option<f64>,
    saturated: usize,
}

pub fn confidence_summary_csv(rows: &[ConfidenceRow]) -> Result<String> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.scenario.clone(), r.model.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let out: Vec<ConfidenceSummaryRow> = keys
        .into_iter()
        .map(|(scenario, model)| {
            let sel: Vec<&ConfidenceRow> = rows.iter().filter(|r| r.scenario == scenario && r.model == model).collect();
            let solved: Vec<f64> = sel.iter().filter_map(|r| r.solved_rho).collect();
            ConfidenceSummaryRow {
                trials: sel.len(),
                mean_solved_rho: (!solved.is_empty()).then(|| solved.iter().sum::<f64>() / solved.len() as f64),
                saturated: sel.iter().filter(|r| r.saturated).count(),
                scenario,
                model,
            }
        })
        .collect();
    to_csv(&out)
}

#[derive(Serialize)]
struct TrialRow<'a> {
    scenario: &'a str,
    model: &'a str,
    trial: usize,
    scenario_seed: Option<u64>,
    outcome: String,
    steps: Option<usize>,
    inclusion_final: Option<f64>,
    steps_ge95_final: Option<f64>,
    inclusion_all: Option<f64>,
    steps_ge95_all: Option<f64>,
    compactness_final: Option<f64>,
    union_area_final: Option<f64>,
    path_len: Option<f64>,
    efficiency: Option<f64>,
    error: Option<String>,
}

pub fn trials_csv(suites: &[SuiteResult]) -> Result<String> {
    let mut rows = Vec::new();
    for s in suites {
        for (i, r) in s.logs.iter().enumerate() {
            let base = TrialRow {
                scenario: &s.row.scenario,
                model: &s.row.model,
                trial: i,
                scenario_seed: None,
                outcome: "error".into(),
                steps: None,
                inclusion_final: None,
                steps_ge95_final: None,
                inclusion_all: None,
                steps_ge95_all: None,
                compactness_final: None,
                union_area_final: None,
                path_len: None,
                efficiency: None,
                error: None,
            };
            rows.push(match r {
                Ok(log) => {
                    let m = &log.summary.metrics;
                    TrialRow {
                        trial: log.header.trial,
                        scenario_seed: Some(log.header.scenario_seed),
                        outcome: serde_json::to_value(log.summary.outcome)?.as_str().unwrap_or("").to_string(),
                        steps: Some(m.steps),
                        inclusion_final: m.mean_inclusion_final,
                        steps_ge95_final: m.validity_final,
                        inclusion_all: m.mean_inclusion_all,
                        steps_ge95_all: m.validity_all,
                        compactness_final: m.mean_compactness_final,
                        union_area_final: m.final_union_area,
                        path_len: Some(m.path_len),
                        efficiency: Some(m.efficiency),
                        ..base
                    }
                }
                Err(e) => TrialRow { error: Some(e.to_string()), ..base },
            });
        }
    }
    to_csv(&rows)
}

#[derive(Serialize)]
struct TimingRow<'a> {
    scenario: &'a str,
    model: &'a str,
    trial: usize,
    steps: usize,
    ctrl_time_mean: f64,
    fit_time_mean: f64,
}

/// Wall-clock per trial; not reproducible byte for byte.
pub fn timing_csv(suites: &[SuiteResult]) -> Result<String> {
    let mut rows = Vec::new();
    for s in suites {
        for log in ok_logs(s) {
            let n = log.timing.fit_secs.len().max(1) as f64;
            rows.push(TimingRow {
                scenario: &s.row.scenario,
                model: &s.row.model,
                trial: log.header.trial,
                steps: log.steps.len(),
                ctrl_time_mean: log.summary.metrics.ctrl_time_mean,
                fit_time_mean: log.timing.fit_secs.iter().sum::<f64>() / n,
            });
        }
    }
    to_csv(&rows)
}

/// Write `trials.csv`, `timing.csv` and one record file per trial under
/// `logs/`.
pub fn write_common(out: &Path, suites: &[SuiteResult]) -> Result<()> {
    let logs = out.join("logs");
    std::fs::create_dir_all(&logs)?;
    std::fs::write(out.join("trials.csv"), trials_csv(suites)?)?;
    std::fs::write(out.join("timing.csv"), timing_csv(suites)?)?;
    for s in suites {
        for log in ok_logs(s) {
            let name = format!("{}_{}_{:03}.jsonl", s.row.scenario, s.row.model, log.header.trial);
            std::fs::write(logs.join(name), log.to_jsonl()?)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_models_share_scenarios() {
        let mut cfg = RunConfig::default();
        cfg.run.n_trials = 2;
        cfg.run.step_cap = 5;
        let suites = run_grid(&cfg, &[ScenarioKind::Sofa], &[Model::Gmm, Model::Ellip1]);
        for i in 0..2 {
            let a = suites[0].logs[i].as_ref().unwrap();
            let b = suites[1].logs[i].as_ref().unwrap();
            assert_eq!(a.header.scenario, b.header.scenario);
            assert_ne!(a.header.model, b.header.model);
        }
        let v = validity_csv(&suites).unwrap();
        assert!(v.starts_with(
            "scenario,model,trials,inclusion_final,steps_ge95_final,inclusion_all,steps_ge95_all,compactness_final\n"
        ));
        assert_eq!(v.lines().count(), 3);
        assert_eq!(trials_csv(&suites).unwrap().lines().count(), 5);
        let conf = confidence_rows(&suites).unwrap();
        assert_eq!(conf.len(), 4);
        assert!(confidence_summary_csv(&conf).unwrap().lines().count() == 3);
    }
}
