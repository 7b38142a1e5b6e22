//! One closed-loop trial: sense, fit, build barriers, plan, step, measure.

use serde::{Deserialize, Serialize};

use crate::contract::{MixtureContract, Point2};
use crate::error::{GmIpcError, Result};
use crate::fitter::{active_components, fit_frame, FitResult};
use crate::losses::inclusion_loss;
use crate::metrics::{
    self, compactness, inclusion_rate, mc_union_area, summarize_trial, StepMetrics, TrialMetrics, TrialOutcome,
};
use crate::planner::{barriers_from_contract, cbf_step_ok, solve_mpc, BarrierSpec};
use crate::seeding::{derive_seed, stream};
use crate::simworld::{in_collision, make_scenario, sense, step_dynamics, RobotState, Scenario};
use crate::timing::Stopwatch;

use super::config::{Model, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Goal,
    Collision,
    StepCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialHeader {
    pub trial: usize,
    pub scenario_seed: u64,
    pub model: Model,
    pub scenario: Scenario,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub pos: Point2,
    pub next_pos: Point2,
    pub u: Point2,
    pub gamma_used: f64,
    pub feasible: bool,
    pub n_perceived: usize,
    pub n_gt: usize,
    pub warm_start: bool,
    pub fit_iters: usize,
    /// Active contract at the planning confidence; absent until something
    /// has been perceived.
    pub contract: Option<MixtureContract>,
    pub incl_loss: Option<f64>,
    pub inclusion_rate: Option<f64>,
    pub union_area: f64,
    pub compactness: Option<f64>,
    /// Safe-form barrier values at `pos` and `next_pos`, one per component.
    pub h_now: Vec<f64>,
    pub h_next: Vec<f64>,
}

impl StepRecord {
    /// Barriers whose executed transition breaks `h̄⁺ ≥ (1 − γ) h̄`.
    pub fn cbf_violations(&self) -> usize {
        self.h_now
            .iter()
            .zip(&self.h_next)
            .filter(|&(&h0, &h1)| h1 < (1.0 - self.gamma_used) * h0)
            .count()
    }

    pub fn metrics(&self) -> StepMetrics {
        StepMetrics {
            inclusion_rate: self.inclusion_rate,
            union_area: self.union_area,
            compactness: self.compactness,
            n_gt: self.n_gt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub outcome: Outcome,
    pub metrics: TrialMetrics,
    pub final_contract: Option<MixtureContract>,
    pub final_perceived: Vec<Point2>,
    pub final_gt: Vec<Point2>,
    /// Footprint area of the obstacles seen at the last step.
    pub final_footprint_area: f64,
}

/// Wall-clock per step, kept out of the deterministic log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialTiming {
    pub fit_secs: Vec<f64>,
    pub solve_secs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub header: TrialHeader,
    pub steps: Vec<StepRecord>,
    pub summary: TrialSummary,
    pub timing: TrialTiming,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Header(TrialHeader),
    Step(StepRecord),
    Summary(TrialSummary),
}

impl TrialLog {
    /// Header line, one line per step, then the summary line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let mut push = |line: LogLine| -> Result<()> {
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
            Ok(())
        };
        push(LogLine::Header(self.header.clone()))?;
        for s in &self.steps {
            push(LogLine::Step(s.clone()))?;
        }
        push(LogLine::Summary(self.summary.clone()))?;
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let (mut header, mut steps, mut summary) = (None, Vec::new(), None);
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<LogLine>(line)? {
                LogLine::Header(h) => header = Some(h),
                LogLine::Step(s) => steps.push(s),
                LogLine::Summary(s) => summary = Some(s),
            }
        }
        match (header, summary) {
            (Some(header), Some(summary)) => Ok(TrialLog { header, steps, summary, timing: TrialTiming::default() }),
            _ => Err(GmIpcError::Serde("log needs a header and a summary line".into())),
        }
    }
}

pub fn scenario_seed(cfg: &RunConfig, trial_index: usize) -> u64 {
    derive_seed(&[cfg.run.seed, trial_index as u64])
}

fn footprint_area(s: &Scenario, visible: &[usize]) -> f64 {
    visible.iter().map(|&k| s.obstacles[k].area()).sum()
}

/// Run one closed-loop trial. The scenario depends only on the master seed
/// and the trial index, so models compared on the same index are paired.
pub fn run_trial(cfg: &RunConfig, trial_index: usize) -> Result<TrialLog> {
    cfg.validate()?;
    let wrap = |e: GmIpcError| GmIpcError::Trial { index: trial_index, source: Box::new(e) };
    let seed = scenario_seed(cfg, trial_index);
    let scenario = make_scenario(cfg.run.scenario, seed).map_err(wrap)?;
    run_trial_in(cfg, trial_index, scenario).map_err(wrap)
}

/// Run the closed loop in a given world.
pub fn run_trial_in(cfg: &RunConfig, trial_index: usize, scenario: Scenario) -> Result<TrialLog> {
    let seed = scenario.seed;
    let base_fit = cfg.effective_fit();
    let mut mpc = cfg.mpc.clone();
    mpc.workspace_half = scenario.workspace_half;

    let mut x = RobotState { pos: scenario.start, t: 0 };
    let mut prev: Option<FitResult> = None;
    let mut steps = Vec::new();
    let mut timing = TrialTiming::default();
    let mut path_len = 0.0;
    let mut outcome = Outcome::StepCap;
    let mut last_view = (Vec::new(), Vec::new(), 0.0);

    for t in 0..cfg.run.step_cap {
        let obs = sense(&scenario, &x, &cfg.sensor);

        let clock = Stopwatch::start();
        let mut warm_start = false;
        let mut fit_iters = 0;
        if !obs.perceived.is_empty() {
            let mut fit_cfg = base_fit.clone();
            fit_cfg.seed = derive_seed(&[stream::FIT, cfg.fit.seed, seed, t as u64]);
            let warm = prev.as_ref().filter(|p| {
                let covered = obs.perceived.iter().filter(|&&y| p.contract.contains(y)).count();
                covered as f64 >= cfg.run.warm_start_min_cover * obs.perceived.len() as f64
            });
            warm_start = warm.is_some();
            let r = fit_frame(warm.map(|p| &p.params), &obs, &fit_cfg)?;
            fit_iters = r.iters_used;
            prev = Some(r);
        }
        timing.fit_secs.push(clock.secs());

        let contract = prev.as_ref().map(|p| active_components(&p.contract, base_fit.prune_weight));
        let barriers: Vec<BarrierSpec> =
            contract.as_ref().map(|m| barriers_from_contract(m, mpc.robot_radius)).unwrap_or_default();

        let plan = solve_mpc(&x, scenario.goal, &barriers, &mpc);
        timing.solve_secs.push(plan.solve_time);
        let next = step_dynamics(x, plan.u0, mpc.dt, mpc.workspace_half);
        debug_assert!(!plan.feasible || barriers.iter().all(|b| cbf_step_ok(b, x.pos, next.pos, plan.gamma_used)));

        let metric_seed = derive_seed(&[stream::METRICS, seed, t as u64]);
        let (incl_loss, inclusion, union_area, compact) = match &contract {
            Some(m) => {
                let area = mc_union_area(m, metrics::STEP_MC_SAMPLES, metric_seed)?.area;
                if obs.gt_points.is_empty() {
                    (None, None, area, None)
                } else {
                    (
                        Some(inclusion_loss(m, &obs.gt_points, base_fit.smoothing_s)?),
                        Some(inclusion_rate(m, &obs.gt_points)?),
                        area,
                        compactness(m, &obs.gt_points, metrics::STEP_MC_SAMPLES, metric_seed).ok(),
                    )
                }
            }
            None => (None, None, 0.0, None),
        };

        steps.push(StepRecord {
            step: t,
            pos: x.pos,
            next_pos: next.pos,
            u: plan.u0,
            gamma_used: plan.gamma_used,
            feasible: plan.feasible,
            n_perceived: obs.perceived.len(),
            n_gt: obs.gt_points.len(),
            warm_start,
            fit_iters,
            h_now: barriers.iter().map(|b| b.safe_value(x.pos)).collect(),
            h_next: barriers.iter().map(|b| b.safe_value(next.pos)).collect(),
            contract,
            incl_loss,
            inclusion_rate: inclusion,
            union_area,
            compactness: compact,
        });
        if !obs.gt_points.is_empty() {
            last_view = (obs.perceived, obs.gt_points, footprint_area(&scenario, &obs.visible_obstacles));
        }

        path_len += x.pos.dist(next.pos);
        x = next;
        if in_collision(&scenario, x.pos, mpc.robot_radius) {
            outcome = Outcome::Collision;
            break;
        }
        if x.pos.dist(scenario.goal) < cfg.run.goal_radius {
            outcome = Outcome::Goal;
            break;
        }
    }

    // Final-step metrics at reporting precision, on the last step with a
    // contract and ground truth.
    let final_step = steps.iter().rev().find(|s| s.contract.is_some() && s.n_gt > 0);
    let final_contract = steps.iter().rev().find_map(|s| s.contract.clone());
    let (final_compactness, final_union_area) = match final_step.and_then(|s| s.contract.as_ref()) {
        Some(m) => {
            let fseed = derive_seed(&[stream::METRICS, seed, u64::MAX]);
            let area = mc_union_area(m, metrics::REPORT_MC_SAMPLES, fseed)?.area;
            (compactness(m, &last_view.1, metrics::REPORT_MC_SAMPLES, fseed).ok(), Some(area))
        }
        None => (None, None),
    };
    let remaining = x.pos.dist(scenario.goal);
    let n = timing.solve_secs.len().max(1) as f64;
    let out = TrialOutcome {
        // The unfinished stretch to the goal counts as path, so a straight
        // run scores exactly one.
        path_len: path_len + remaining,
        straight_dist: scenario.start.dist(scenario.goal),
        success: outcome == Outcome::Goal,
        ctrl_time_mean: timing.solve_secs.iter().sum::<f64>() / n,
        final_compactness,
        final_union_area,
    };
    let step_metrics: Vec<StepMetrics> = steps.iter().map(StepRecord::metrics).collect();
    let metrics = summarize_trial(&step_metrics, &out);

    let mut header_cfg = cfg.clone();
    header_cfg.run.workers = 0;
    Ok(TrialLog {
        header: TrialHeader { trial: trial_index, scenario_seed: seed, model: cfg.run.model, scenario, config: header_cfg },
        steps,
        summary: TrialSummary {
            outcome,
            metrics,
            final_contract,
            final_perceived: last_view.0,
            final_gt: last_view.1,
            final_footprint_area: last_view.2,
        },
        timing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::ScenarioKind;

    fn quick(kind: ScenarioKind) -> RunConfig {
        let mut c = RunConfig::default().with_scenario(kind);
        c.run.step_cap = 200;
        c
    }

    #[test]
    fn empty_world_goes_straight() {
        let log = run_trial(&quick(ScenarioKind::Empty), 0).unwrap();
        assert_eq!(log.summary.outcome, Outcome::Goal);
        assert!(log.summary.metrics.efficiency >= 0.98, "{}", log.summary.metrics.efficiency);
        assert!(log.summary.metrics.efficiency <= 1.0 + 1e-9);
        assert!(log.steps.iter().all(|s| s.contract.is_none() && s.h_now.is_empty()));
        assert_eq!(log.steps.len(), log.summary.metrics.steps);
    }

    #[test]
    fn replay_is_byte_identical() {
        let cfg = quick(ScenarioKind::Chair);
        let a = run_trial(&cfg, 3).unwrap().to_jsonl().unwrap();
        let b = run_trial(&cfg, 3).unwrap().to_jsonl().unwrap();
        assert_eq!(a, b);
        let parsed = TrialLog::from_jsonl(&a).unwrap();
        assert_eq!(parsed.to_jsonl().unwrap(), a);
    }
}
