//! Evaluation quantities: hard inclusion, Monte-Carlo union area,
//! compactness, solved confidence and the trial-level risk bound.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contract::{chi2_quantile_2d, mahalanobis_sq, MixtureContract, Point2};
use crate::error::{GmIpcError, Result};
use crate::seeding::{self, stream};

pub const VALIDITY_THRESHOLD: f64 = 0.95;
pub const MIN_MC_SAMPLES: usize = 1000;
pub const REPORT_MC_SAMPLES: usize = 200_000;
pub const STEP_MC_SAMPLES: usize = 20_000;

const SOLVE_RHO_LO: f64 = 1e-4;
const SOLVE_RHO_HI: f64 = 1.0 - 1e-6;
const SOLVE_REL_TOL: f64 = 0.01;
const SOLVE_MAX_ITERS: usize = 60;

/// Per-step quantities. Inclusion and compactness are `None` when the step
/// has no ground-truth points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub inclusion_rate: Option<f64>,
    pub union_area: f64,
    pub compactness: Option<f64>,
    pub n_gt: usize,
}

/// Trial summary. Inclusion and compactness fields are `None` when no step
/// had ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub mean_inclusion_all: Option<f64>,
    pub mean_inclusion_final: Option<f64>,
    pub validity_all: Option<f64>,
    pub validity_final: Option<f64>,
    pub mean_compactness_final: Option<f64>,
    pub final_union_area: Option<f64>,
    pub steps: usize,
    pub path_len: f64,
    pub efficiency: f64,
    /// Wall-clock, so left out of serialized logs.
    #[serde(skip_serializing, default)]
    pub ctrl_time_mean: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub m_trials: usize,
    pub mean_trial_loss: f64,
    pub hoeffding_gap: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaEstimate {
    pub area: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvedConfidence {
    pub rho: f64,
    pub area: f64,
    /// The target could not be matched within tolerance in the search
    /// interval; `rho` is the nearest level reached.
    pub saturated: bool,
}

pub fn inclusion_count(m: &MixtureContract, gt_points: &[Point2]) -> usize {
    gt_points.iter().filter(|&&y| m.contains(y)).count()
}

pub fn inclusion_rate(m: &MixtureContract, gt_points: &[Point2]) -> Result<f64> {
    if gt_points.is_empty() {
        return Err(GmIpcError::UndefinedMetric("inclusion rate of an empty point set".into()));
    }
    Ok(inclusion_count(m, gt_points) as f64 / gt_points.len() as f64)
}

/// Tight axis-aligned box around every component ellipse at `tau`.
pub fn union_bbox(m: &MixtureContract, tau: f64) -> (Point2, Point2) {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in m.components() {
        let hx = (c.sigma.a11() * tau).sqrt();
        let hy = (c.sigma.a22() * tau).sqrt();
        lo = Point2::new(lo.x.min(c.mu.x - hx), lo.y.min(c.mu.y - hy));
        hi = Point2::new(hi.x.max(c.mu.x + hx), hi.y.max(c.mu.y + hy));
    }
    (lo, hi)
}

/// Uniform samples over a fixed box, shared by every `tau` queried.
struct UnionSampler {
    lo: Point2,
    hi: Point2,
    samples: Vec<Point2>,
}

impl UnionSampler {
    fn new(lo: Point2, hi: Point2, n: usize, seed: u64) -> Self {
        let mut rng = seeding::rng_for(&[stream::METRICS, seed]);
        let samples = (0..n)
            .map(|_| {
                Point2::new(lo.x + (hi.x - lo.x) * rng.random::<f64>(), lo.y + (hi.y - lo.y) * rng.random::<f64>())
            })
            .collect();
        UnionSampler { lo, hi, samples }
    }

    fn estimate(&self, m: &MixtureContract, tau: f64) -> AreaEstimate {
        let hits = self
            .samples
            .iter()
            .filter(|&&y| m.components().iter().any(|c| mahalanobis_sq(y, c.mu, &c.sigma) <= tau))
            .count();
        let n = self.samples.len() as f64;
        let box_area = (self.hi.x - self.lo.x) * (self.hi.y - self.lo.y);
        let p = hits as f64 / n;
        AreaEstimate { area: box_area * p, std_err: box_area * (p * (1.0 - p) / n).sqrt() }
    }
}

pub fn mc_union_area(m: &MixtureContract, n_samples: usize, seed: u64) -> Result<AreaEstimate> {
    if n_samples < MIN_MC_SAMPLES {
        return Err(GmIpcError::Argument(format!("need at least {MIN_MC_SAMPLES} samples, got {n_samples}")));
    }
    let (lo, hi) = union_bbox(m, m.tau());
    Ok(UnionSampler::new(lo, hi, n_samples, seed).estimate(m, m.tau()))
}

/// Covered ground-truth points per unit union area.
pub fn compactness(m: &MixtureContract, gt_points: &[Point2], n_samples: usize, seed: u64) -> Result<f64> {
    let area = mc_union_area(m, n_samples, seed)?.area;
    if area <= 0.0 {
        return Err(GmIpcError::UndefinedMetric("compactness of a zero-area union".into()));
    }
    Ok(inclusion_count(m, gt_points) as f64 / area)
}

/// Confidence level whose union area matches `target_area`. All bisection
/// steps reuse one sample set drawn over the box of the widest level, so the
/// estimated area is monotone in the confidence.
pub fn solved_confidence(
    m: &MixtureContract,
    target_area: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SolvedConfidence> {
    if !(target_area > 0.0) {
        return Err(GmIpcError::Argument(format!("target area must be positive, got {target_area}")));
    }
    if n_samples < MIN_MC_SAMPLES {
        return Err(GmIpcError::Argument(format!("need at least {MIN_MC_SAMPLES} samples, got {n_samples}")));
    }
    let tau_hi = chi2_quantile_2d(SOLVE_RHO_HI)?;
    let (lo, hi) = union_bbox(m, tau_hi);
    let sampler = UnionSampler::new(lo, hi, n_samples, seed);
    let area_at = |rho: f64| -> Result<f64> { Ok(sampler.estimate(m, chi2_quantile_2d(rho)?).area) };

    let a_lo = area_at(SOLVE_RHO_LO)?;
    if a_lo >= target_area {
        return Ok(SolvedConfidence { rho: SOLVE_RHO_LO, area: a_lo, saturated: a_lo > target_area * (1.0 + SOLVE_REL_TOL) });
    }
    let a_hi = area_at(SOLVE_RHO_HI)?;
    if a_hi <= target_area {
        return Ok(SolvedConfidence { rho: SOLVE_RHO_HI, area: a_hi, saturated: a_hi < target_area * (1.0 - SOLVE_REL_TOL) });
    }
    let (mut r_lo, mut r_hi) = (SOLVE_RHO_LO, SOLVE_RHO_HI);
    let mut best = (0.5 * (r_lo + r_hi), f64::NAN);
    let mut met = false;
    for _ in 0..SOLVE_MAX_ITERS {
        let mid = 0.5 * (r_lo + r_hi);
        let a = area_at(mid)?;
        best = (mid, a);
        if (a - target_area).abs() <= SOLVE_REL_TOL * target_area {
            met = true;
            break;
        }
        if a < target_area {
            r_lo = mid;
        } else {
            r_hi = mid;
        }
    }
    // Unmet tolerance means the sample set cannot resolve the target.
    Ok(SolvedConfidence { rho: best.0, area: best.1, saturated: !met })
}

/// Hoeffding deviation `√(ln(1/δ) / 2M)`.
pub fn pac_gap(m_trials: usize, delta: f64) -> Result<f64> {
    if m_trials < 1 {
        return Err(GmIpcError::Domain("pac_gap needs at least one trial".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(GmIpcError::Domain(format!("delta {delta} outside (0, 1)")));
    }
    Ok(((1.0 / delta).ln() / (2.0 * m_trials as f64)).sqrt())
}

/// Mean of per-step inclusion losses, each clipped to `[0, 1]`.
pub fn trial_risk(step_losses: &[f64]) -> Result<f64> {
    if step_losses.is_empty() {
        return Err(GmIpcError::Argument("trial risk of an empty trial".into()));
    }
    Ok(step_losses.iter().map(|l| l.clamp(0.0, 1.0)).sum::<f64>() / step_losses.len() as f64)
}

pub fn risk_estimate(trial_risks: &[f64], delta: f64) -> Result<RiskEstimate> {
    let gap = pac_gap(trial_risks.len(), delta)?;
    Ok(RiskEstimate {
        m_trials: trial_risks.len(),
        mean_trial_loss: trial_risks.iter().sum::<f64>() / trial_risks.len() as f64,
        hoeffding_gap: gap,
        delta,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Inputs to [`summarize_trial`] that are not per-step metrics.
#[derive(Debug, Clone, Copy)]
pub struct TrialOutcome {
    pub path_len: f64,
    pub straight_dist: f64,
    pub success: bool,
    pub ctrl_time_mean: f64,
    /// Compactness and union area of the last step at reporting precision.
    pub final_compactness: Option<f64>,
    pub final_union_area: Option<f64>,
}

/// "All" columns average every step with ground truth; "final" columns use
/// the last such step. Efficiency is zero for failed trials.
pub fn summarize_trial(steps: &[StepMetrics], out: &TrialOutcome) -> TrialMetrics {
    let incl: Vec<f64> = steps.iter().filter_map(|s| s.inclusion_rate).collect();
    let last = incl.last().copied();
    let valid = |r: f64| f64::from(u8::from(r >= VALIDITY_THRESHOLD));
    let efficiency = if out.success && out.path_len > 0.0 { out.straight_dist / out.path_len } else { 0.0 };
    TrialMetrics {
        mean_inclusion_all: mean(incl.iter().copied()),
        mean_inclusion_final: last,
        validity_all: mean(incl.iter().map(|&r| valid(r))),
        validity_final: last.map(valid),
        mean_compactness_final: out.final_compactness,
        final_union_area: out.final_union_area,
        steps: steps.len(),
        path_len: out.path_len,
        efficiency,
        ctrl_time_mean: out.ctrl_time_mean,
        success: out.success,
    }
}
