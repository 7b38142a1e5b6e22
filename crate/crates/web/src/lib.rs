//! WebAssembly bindings for the demo page in `www/`. Each export takes plain
//! numbers and strings and returns a JSON document; the `*_json` functions
//! behind them are ordinary Rust so they can be tested natively.

use gmipc::contract::{ConfidenceEllipse, MixtureContract};
use gmipc::fitter::{active_components, fit_frame};
use gmipc::harness::{run_trial_in, Model, RunConfig};
use gmipc::metrics::{inclusion_rate, mc_union_area, solved_confidence};
use gmipc::simworld::{make_scenario, sense, RobotState, Scenario, ScenarioKind};
use serde::Serialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const AREA_SAMPLES: usize = 20_000;

#[derive(Serialize)]
struct EllipseView {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
}

impl From<ConfidenceEllipse> for EllipseView {
    fn from(e: ConfidenceEllipse) -> Self {
        EllipseView { cx: e.center.x, cy: e.center.y, a: e.a, b: e.b, theta: e.theta }
    }
}

fn ellipses(m: &MixtureContract) -> Vec<EllipseView> {
    m.ellipses().into_iter().map(EllipseView::from).collect()
}

fn scene(s: &Scenario) -> Value {
    json!({
        "half": s.workspace_half,
        "start": s.start,
        "goal": s.goal,
        "obstacles": s.obstacles.iter().map(|o| &o.polygon).collect::<Vec<_>>(),
    })
}

fn config(scenario: &str, model: &str, seed: u64) -> Result<(RunConfig, ScenarioKind), String> {
    let kind: ScenarioKind = scenario.parse().map_err(|e| format!("{e}"))?;
    let model: Model = model.parse().map_err(|e| format!("{e}"))?;
    let mut cfg = RunConfig::default().with_scenario(kind).with_model(model);
    cfg.run.seed = seed;
    Ok((cfg, kind))
}

/// Sense one frame from the start pose and fit a contract to it.
pub fn fit_scene_json(scenario: &str, model: &str, seed: u64) -> Result<String, String> {
    let (cfg, kind) = config(scenario, model, seed)?;
    let s = make_scenario(kind, seed).map_err(|e| e.to_string())?;
    let obs = sense(&s, &RobotState { pos: s.start, t: 0 }, &cfg.sensor);
    let fit = cfg.effective_fit();
    let r = fit_frame(None, &obs, &fit).map_err(|e| e.to_string())?;
    let m = active_components(&r.contract, fit.prune_weight);
    let incl = inclusion_rate(&m, &obs.gt_points).ok();
    let area = mc_union_area(&m, AREA_SAMPLES, seed).map_err(|e| e.to_string())?.area;
    let footprint: f64 = obs.visible_obstacles.iter().map(|&k| s.obstacles[k].area()).sum();
    Ok(json!({
        "scene": scene(&s),
        "perceived": obs.perceived,
        "gt": obs.gt_points,
        "contract": m,
        "ellipses": ellipses(&m),
        "inclusion": incl,
        "area": area,
        "footprint": footprint,
        "loss": { "incl": r.final_loss.incl, "nll": r.final_loss.nll, "empty": r.final_loss.empty },
    })
    .to_string())
}

/// Re-threshold a fitted contract at confidence `rho`, and solve for the
/// confidence whose union area equals `target_area`.
pub fn contract_at_json(contract: &str, rho: f64, target_area: f64) -> Result<String, String> {
    let m: MixtureContract = serde_json::from_str(contract).map_err(|e| e.to_string())?;
    let at = m.with_rho(rho).map_err(|e| e.to_string())?;
    let area = mc_union_area(&at, AREA_SAMPLES, 1).map_err(|e| e.to_string())?;
    let solved = if target_area > 0.0 {
        Some(solved_confidence(&m, target_area, AREA_SAMPLES, 1).map_err(|e| e.to_string())?)
    } else {
        None
    };
    Ok(json!({
        "rho": rho,
        "tau": at.tau(),
        "ellipses": ellipses(&at),
        "area": area.area,
        "area_se": area.std_err,
        "solved": solved,
    })
    .to_string())
}

/// Run one closed-loop trial and return the per-step state for playback.
pub fn simulate_json(scenario: &str, model: &str, seed: u64, step_cap: usize) -> Result<String, String> {
    let (mut cfg, kind) = config(scenario, model, seed)?;
    cfg.run.step_cap = step_cap;
    let s = make_scenario(kind, seed).map_err(|e| e.to_string())?;
    let log = run_trial_in(&cfg, 0, s.clone()).map_err(|e| e.to_string())?;
    let steps: Vec<Value> = log
        .steps
        .iter()
        .map(|r| {
            json!({
                "pos": r.pos,
                "next": r.next_pos,
                "gamma": r.gamma_used,
                "feasible": r.feasible,
                "ellipses": r.contract.as_ref().map(ellipses).unwrap_or_default(),
                "inclusion": r.inclusion_rate,
            })
        })
        .collect();
    Ok(json!({
        "scene": scene(&s),
        "outcome": log.summary.outcome,
        "metrics": log.summary.metrics,
        "steps": steps,
    })
    .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fit_scene(scenario: &str, model: &str, seed: u32) -> Result<String, JsError> {
    js(fit_scene_json(scenario, model, seed.into()))
}

#[wasm_bindgen]
pub fn contract_at(contract: &str, rho: f64, target_area: f64) -> Result<String, JsError> {
    js(contract_at_json(contract, rho, target_area))
}

#[wasm_bindgen]
pub fn simulate(scenario: &str, model: &str, seed: u32, step_cap: u32) -> Result<String, JsError> {
    js(simulate_json(scenario, model, seed.into(), step_cap as usize))
}
