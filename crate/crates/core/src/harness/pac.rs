//! Trial-level risk under a frozen fitting policy. Each trial drives a
//! straight open-loop segment toward the goal, every frame gets a short cold
//! fit with a fixed budget and seed, and the trial risk averages clipped
//! inclusion losses.

use crate::error::Result;
use crate::fitter::{fit_frame, FitConfig};
use crate::losses::inclusion_loss;
use crate::metrics::{risk_estimate, trial_risk, RiskEstimate};
use crate::planner::MpcConfig;
use crate::seeding::derive_seed;
use crate::simworld::{make_scenario, sense, step_dynamics, RobotState, ScenarioKind, SensorConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenPolicy {
    pub scenario: ScenarioKind,
    pub steps: usize,
    pub fit: FitConfig,
    pub sensor: SensorConfig,
    pub mpc: MpcConfig,
}

impl Default for FrozenPolicy {
    fn default() -> Self {
        FrozenPolicy {
            scenario: ScenarioKind::Sofa,
            steps: 2,
            fit: FitConfig { max_iters_cold: 20, ..FitConfig::default() },
            sensor: SensorConfig::default(),
            mpc: MpcConfig::default(),
        }
    }
}

/// Risk of one trial. Steps that see no obstacle are skipped; a trial that
/// never sees one has zero risk.
pub fn frozen_trial_risk(policy: &FrozenPolicy, scenario_seed: u64) -> Result<f64> {
    let sc = make_scenario(policy.scenario, scenario_seed)?;
    let mut x = RobotState { pos: sc.start, t: 0 };
    let mut losses = Vec::with_capacity(policy.steps);
    for _ in 0..policy.steps {
        let obs = sense(&sc, &x, &policy.sensor);
        if !obs.gt_points.is_empty() {
            let m = fit_frame(None, &obs, &policy.fit)?.contract;
            losses.push(inclusion_loss(&m, &obs.gt_points, policy.fit.smoothing_s)?);
        }
        let dir = sc.goal - x.pos;
        let u = dir * (policy.mpc.u_max / dir.norm().max(f64::MIN_POSITIVE));
        x = step_dynamics(x, u, policy.mpc.dt, sc.workspace_half);
    }
    if losses.is_empty() {
        return Ok(0.0);
    }
    trial_risk(&losses)
}

/// Risk estimate over `m_trials` trials whose scenario seeds derive from
/// `batch_seed`.
pub fn frozen_risk_estimate(policy: &FrozenPolicy, batch_seed: u64, m_trials: usize, delta: f64) -> Result<RiskEstimate> {
    let risks = (0..m_trials)
        .map(|i| frozen_trial_risk(policy, derive_seed(&[batch_seed, i as u64])))
        .collect::<Result<Vec<f64>>>()?;
    risk_estimate(&risks, delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn risks_are_clipped_and_reproducible() {
        let p = FrozenPolicy::default();
        for seed in 0..5 {
            let r = frozen_trial_risk(&p, seed).unwrap();
            assert!((0.0..=1.0).contains(&r));
            assert_eq!(r, frozen_trial_risk(&p, seed).unwrap());
        }
        let e = frozen_risk_estimate(&p, 7, 10, 0.05).unwrap();
        assert_eq!(e.m_trials, 10);
        assert!((e.hoeffding_gap - (20f64.ln() / 20.0).sqrt()).abs() < 1e-15);
    }
}
