//! Per-frame fitting of mixture contracts.
//!
//! Parameters are unconstrained: means pass through unchanged, each covariance
//! is `L Lᵀ + eps_reg·I` with a lower-triangular `L` whose diagonal goes
//! through softplus, and weights are the softmax of the logits. A frame is
//! fitted by Adam with cosine step decay, either from a cold farthest-point
//! initialization or warm-started from the previous frame's parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contract::{
    chi2_quantile_2d, GaussianComponent, MixtureContract, Point2, SpdMat2, MAX_COMPONENTS,
};
use crate::error::{GmIpcError, Result};
use crate::losses::{composite_loss_and_grad, FreeCellSet, LossReport, LossTargets, LossWeights};
use crate::simworld::Observation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub raw_means: Vec<[f64; 2]>,
    /// `(l11, l21, l22)` before softplus on the diagonal entries.
    pub raw_chol: Vec<[f64; 3]>,
    pub raw_logits: Vec<f64>,
}

impl FitParams {
    pub fn k(&self) -> usize {
        self.raw_logits.len()
    }

    /// Flat layout: all means, then all factors, then all logits.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(6 * self.k());
        v.extend(self.raw_means.iter().flatten());
        v.extend(self.raw_chol.iter().flatten());
        v.extend(&self.raw_logits);
        v
    }

    pub fn from_flat(k: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != 6 * k {
            return Err(GmIpcError::Argument(format!(
                "expected {} parameters for K={k}, got {}",
                6 * k,
                flat.len()
            )));
        }
        let (m, rest) = flat.split_at(2 * k);
        let (c, l) = rest.split_at(3 * k);
        Ok(FitParams {
            raw_means: m.chunks_exact(2).map(|x| [x[0], x[1]]).collect(),
            raw_chol: c.chunks_exact(3).map(|x| [x[0], x[1], x[2]]).collect(),
            raw_logits: l.to_vec(),
        })
    }

    fn is_consistent(&self) -> bool {
        let k = self.k();
        k >= 1 && k <= MAX_COMPONENTS && self.raw_means.len() == k && self.raw_chol.len() == k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub k_max: usize,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub smoothing_s: f64,
    pub focal_gamma: f64,
    pub eps_reg: f64,
    pub step_size: f64,
    pub max_iters_cold: usize,
    pub max_iters_warm: usize,
    pub seed: u64,
    pub prune_weight: f64,
    /// Free cells farther than this from every ground-truth point are left
    /// out of the empty-space term; `inf` keeps every known-free cell.
    pub negative_radius: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        FitConfig {
            k_max: 5,
            rho: 0.95,
            alpha: w.alpha,
            beta: w.beta,
            smoothing_s: w.smoothing_s,
            focal_gamma: w.focal_gamma,
            eps_reg: 1e-6,
            step_size: 5e-2,
            max_iters_cold: 300,
            max_iters_warm: 40,
            seed: 0,
            prune_weight: 0.02,
            negative_radius: 1.5,
        }
    }
}

impl FitConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            smoothing_s: self.smoothing_s,
            focal_gamma: self.focal_gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_weights().validate()?;
        chi2_quantile_2d(self.rho)?;
        let bad = |msg: &str| Err(GmIpcError::Config(msg.to_string()));
        if self.k_max < 1 || self.k_max > MAX_COMPONENTS {
            return bad("k_max must be in 1..=16");
        }
        if !(self.eps_reg > 0.0) {
            return bad("eps_reg must be positive");
        }
        if self.max_iters_cold < 1 || self.max_iters_warm < 1 {
            return bad("iteration budgets must be at least 1");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if !(self.prune_weight >= 0.0 && self.prune_weight < 1.0 / self.k_max as f64) {
            return bad("prune_weight must be in [0, 1/k_max)");
        }
        if !(self.negative_radius > 0.0) {
            return bad("negative_radius must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub contract: MixtureContract,
    pub params: FitParams,
    pub final_loss: LossReport,
    pub iters_used: usize,
    pub converged: bool,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn inv_softplus(y: f64) -> f64 {
    // ln(e^y − 1)
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A decoded contract together with the factor values the gradient needs.
pub(crate) struct Decoded {
    pub contract: MixtureContract,
    /// `(l11, l21, l22)` after softplus.
    pub factors: Vec<[f64; 3]>,
    /// Softplus slopes at the raw diagonal entries.
    pub diag_slopes: Vec<[f64; 2]>,
}

pub(crate) fn decode_factors(params: &FitParams, cfg: &FitConfig) -> Result<Decoded> {
    if !params.is_consistent() {
        return Err(GmIpcError::Invariant("inconsistent parameter shapes".into()));
    }
    if !params.to_flat().iter().all(|v| v.is_finite()) {
        return Err(GmIpcError::Invariant("non-finite fit parameters".into()));
    }
    let max_logit = params.raw_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = params.raw_logits.iter().map(|l| (l - max_logit).exp()).collect();
    let total: f64 = exps.iter().sum();

    let k = params.k();
    let mut comps = Vec::with_capacity(k);
    let mut factors = Vec::with_capacity(k);
    let mut diag_slopes = Vec::with_capacity(k);
    for i in 0..k {
        let [r11, l21, r22] = params.raw_chol[i];
        let l11 = softplus(r11);
        let l22 = softplus(r22);
        let sigma = SpdMat2::new(
            l11 * l11 + cfg.eps_reg,
            l11 * l21,
            l21 * l21 + l22 * l22 + cfg.eps_reg,
        )?;
        debug_assert!(sigma.det() > 0.0);
        let w = (exps[i] / total).max(f64::MIN_POSITIVE);
        let [mx, my] = params.raw_means[i];
        comps.push(GaussianComponent::new(Point2::new(mx, my), sigma, w)?);
        factors.push([l11, l21, l22]);
        diag_slopes.push([sigmoid(r11), sigmoid(r22)]);
    }
    Ok(Decoded { contract: MixtureContract::new(comps, cfg.rho)?, factors, diag_slopes })
}

pub fn decode(params: &FitParams, cfg: &FitConfig) -> Result<MixtureContract> {
    Ok(decode_factors(params, cfg)?.contract)
}

/// Inverse of [`decode`]: Cholesky of `Σ − eps_reg·I`, inverse softplus on the
/// diagonal, log-weights as logits.
pub fn encode(m: &MixtureContract, cfg: &FitConfig) -> Result<FitParams> {
    let mut p = FitParams { raw_means: vec![], raw_chol: vec![], raw_logits: vec![] };
    for c in m.components() {
        let s11 = c.sigma.a11() - cfg.eps_reg;
        let s22 = c.sigma.a22() - cfg.eps_reg;
        if s11 <= 0.0 || s11 * s22 - c.sigma.a12().powi(2) <= 0.0 {
            return Err(GmIpcError::Invariant(
                "covariance is not representable above eps_reg".into(),
            ));
        }
        let l11 = s11.sqrt();
        let l21 = c.sigma.a12() / l11;
        let l22 = (s22 - l21 * l21).sqrt();
        p.raw_means.push([c.mu.x, c.mu.y]);
        p.raw_chol.push([inv_softplus(l11), l21, inv_softplus(l22)]);
        p.raw_logits.push(c.weight.ln());
    }
    Ok(p)
}

/// Smallest initial semi-axis, so single-point clouds still get an ellipse.
const MIN_INIT_SEMI_AXIS: f64 = 0.1;

fn isotropic_params(centers: &[Point2], semi_axis: f64, cfg: &FitConfig) -> FitParams {
    let tau = chi2_quantile_2d(cfg.rho).expect("validated rho");
    let lambda = semi_axis * semi_axis / tau;
    let l = (lambda - cfg.eps_reg).max(cfg.eps_reg).sqrt();
    let raw = inv_softplus(l);
    FitParams {
        raw_means: centers.iter().map(|c| [c.x, c.y]).collect(),
        raw_chol: vec![[raw, 0.0, raw]; centers.len()],
        raw_logits: vec![0.0; centers.len()],
    }
}

/// Farthest-point seeding: a random first seed, then repeatedly the point
/// farthest from all chosen seeds (lowest index on ties).
pub fn farthest_point_seeds(points: &[Point2], k: usize, rng: &mut impl Rng) -> Vec<Point2> {
    assert!(!points.is_empty());
    let mut seeds = vec![points[rng.random_range(0..points.len())]];
    let mut nearest: Vec<f64> = points.iter().map(|p| p.dist(seeds[0])).collect();
    while seeds.len() < k {
        let (idx, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        let s = points[idx];
        seeds.push(s);
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(p.dist(s));
        }
    }
    seeds
}

/// Cold initialization from the perceived points. With nothing perceived,
/// a single workspace-sized component at the workspace center.
pub fn init_cold(obs: &Observation, cfg: &FitConfig) -> FitParams {
    if obs.perceived.is_empty() {
        return isotropic_params(&[obs.grid.center()], obs.grid.half(), cfg);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds = farthest_point_seeds(&obs.perceived, cfg.k_max, &mut rng);
    let (mut lo, mut hi) = (obs.perceived[0], obs.perceived[0]);
    for p in &obs.perceived {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let semi = (0.25 * (hi - lo).norm()).max(MIN_INIT_SEMI_AXIS);
    isotropic_params(&seeds, semi, cfg)
}

/// Adam with bias correction.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            x[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}

fn cosine_lr(base: f64, it: usize, total: usize) -> f64 {
    0.5 * base * (1.0 + (std::f64::consts::PI * it as f64 / total as f64).cos())
}

const CONVERGENCE_WINDOW: usize = 10;
const CONVERGENCE_REL_TOL: f64 = 1e-4;

fn zero_report(k: usize) -> LossReport {
    LossReport { incl: 0.0, nll: 0.0, empty: 0.0, total: 0.0, grad: vec![0.0; 6 * k] }
}

/// Free cells within `radius` of some ground-truth point.
pub fn hard_negatives(free: &FreeCellSet, gt_points: &[Point2], radius: f64) -> FreeCellSet {
    if radius == f64::INFINITY {
        return free.clone();
    }
    let r2 = radius * radius;
    let centers = free
        .centers
        .iter()
        .copied()
        .filter(|c| gt_points.iter().any(|&p| (p - *c).norm_sq() <= r2))
        .collect();
    FreeCellSet { centers, cell_area: free.cell_area }
}

/// Minimize the composite loss for one frame. Returns the best iterate seen.
pub fn fit_frame(prev: Option<&FitParams>, obs: &Observation, cfg: &FitConfig) -> Result<FitResult> {
    fit_frame_traced(prev, obs, cfg).map(|(r, _)| r)
}

/// [`fit_frame`] plus the best-so-far total after every iteration.
pub fn fit_frame_traced(
    prev: Option<&FitParams>,
    obs: &Observation,
    cfg: &FitConfig,
) -> Result<(FitResult, Vec<f64>)> {
    let free = hard_negatives(&obs.free_cells, &obs.gt_points, cfg.negative_radius);
    let targets = LossTargets { gt_points: &obs.gt_points, free: &free };
    let weights = cfg.loss_weights();

    if obs.perceived.is_empty() || obs.gt_points.is_empty() {
        let params = match prev {
            Some(p) => p.clone(),
            None => init_cold(obs, cfg),
        };
        let contract = decode(&params, cfg)?;
        let final_loss = if obs.gt_points.is_empty() {
            zero_report(params.k())
        } else {
            composite_loss_and_grad(&params, targets, &weights, cfg)?
        };
        let history = vec![final_loss.total];
        return Ok((FitResult { contract, params, final_loss, iters_used: 0, converged: false }, history));
    }

    let (start, budget) = match prev {
        Some(p) if p.k() == cfg.k_max => (p.clone(), cfg.max_iters_warm),
        _ => (init_cold(obs, cfg), cfg.max_iters_cold),
    };
    let k = start.k();
    let mut x = start.to_flat();
    let mut adam = Adam::new(x.len());
    let mut best_x = x.clone();
    let mut best = composite_loss_and_grad(&start, targets, &weights, cfg)?;
    let mut report = best.clone();
    let mut best_history = Vec::with_capacity(budget + 1);
    best_history.push(best.total);

    for it in 0..budget {
        adam.step(&mut x, &report.grad, cosine_lr(cfg.step_size, it, budget));
        let params = FitParams::from_flat(k, &x)?;
        report = composite_loss_and_grad(&params, targets, &weights, cfg)?;
        if report.total < best.total {
            best = report.clone();
            best_x.clone_from(&x);
        }
        best_history.push(best.total);
    }

    let n = best_history.len();
    let converged = n > CONVERGENCE_WINDOW && {
        let before = best_history[n - 1 - CONVERGENCE_WINDOW];
        (before - best.total) <= CONVERGENCE_REL_TOL * before.abs()
    };
    let params = FitParams::from_flat(k, &best_x)?;
    let result =
        FitResult { contract: decode(&params, cfg)?, params, final_loss: best, iters_used: budget, converged };
    Ok((result, best_history))
}

/// Drop components below `prune_weight` and renormalize; the heaviest
/// component always survives.
pub fn active_components(m: &MixtureContract, prune_weight: f64) -> MixtureContract {
    let heaviest = m
        .components()
        .iter()
        .enumerate()
        .fold(0, |best, (i, c)| if c.weight > m.components()[best].weight { i } else { best });
    let kept: Vec<GaussianComponent> = m
        .components()
        .iter()
        .enumerate()
        .filter(|(i, c)| *i == heaviest || c.weight >= prune_weight)
        .map(|(_, c)| *c)
        .collect();
    if kept.len() == m.len() {
        return m.clone();
    }
    MixtureContract::normalized(kept, m.rho()).expect("renormalized subset of a valid contract")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn obs_from(perceived: Vec<Point2>, gt: Vec<Point2>, free: Vec<Point2>) -> Observation {
        Observation::synthetic(perceived, gt, free, 5.0, 64)
    }

    #[test]
    fn hard_negatives_keep_nearby_cells() {
        let free = FreeCellSet {
            centers: vec![Point2::new(0.5, 0.0), Point2::new(1.7, 0.0), Point2::new(0.0, -1.5)],
            cell_area: 0.01,
        };
        let gt = [Point2::ORIGIN, Point2::new(0.1, 0.0)];
        let near = hard_negatives(&free, &gt, 1.5);
        assert_eq!(near.centers, vec![Point2::new(0.5, 0.0), Point2::new(0.0, -1.5)]);
        assert_eq!(near.cell_area, 0.01);
        assert_eq!(hard_negatives(&free, &gt, f64::INFINITY), free);
        let cfg = FitConfig { negative_radius: 0.0, ..FitConfig::default() };
        assert!(cfg.validate().is_err());
        let toml_cfg: FitConfig = toml::from_str("negative_radius = inf").unwrap();
        assert_eq!(toml_cfg.negative_radius, f64::INFINITY);
    }

    #[test]
    fn decode_zero_factors() {
        let cfg = FitConfig { k_max: 2, ..FitConfig::default() };
        let p = FitParams {
            raw_means: vec![[0.0, 0.0], [1.0, 1.0]],
            raw_chol: vec![[0.0; 3]; 2],
            raw_logits: vec![0.3, 0.3],
        };
        let m = decode(&p, &cfg).unwrap();
        let ln2 = 2f64.ln();
        for c in m.components() {
            assert!((c.sigma.a11() - (ln2 * ln2 + 1e-6)).abs() < 1e-15);
            assert_eq!(c.sigma.a12(), 0.0);
            assert!((c.sigma.a22() - (ln2 * ln2 + 1e-6)).abs() < 1e-15);
            assert!(c.sigma.det() > 0.0);
            assert!((c.weight - 0.5).abs() < 1e-15);
        }
        assert!((m.tau() - chi2_quantile_2d(0.95).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn decode_rejects_non_finite() {
        let cfg = FitConfig::default();
        let p = FitParams { raw_means: vec![[f64::NAN, 0.0]], raw_chol: vec![[0.0; 3]], raw_logits: vec![0.0] };
        assert!(matches!(decode(&p, &cfg), Err(GmIpcError::Invariant(_))));
    }

    #[test]
    fn extreme_logits_still_decode() {
        let cfg = FitConfig::default();
        let p = FitParams {
            raw_means: vec![[0.0, 0.0]; 2],
            raw_chol: vec![[-40.0, 5.0, -40.0], [40.0, -3.0, 2.0]],
            raw_logits: vec![0.0, 2000.0],
        };
        let m = decode(&p, &cfg).unwrap();
        assert!(m.components().iter().all(|c| c.sigma.det() > 0.0));
    }

    #[test]
    fn encode_inverts_decode() {
        let cfg = FitConfig::default();
        let p = FitParams {
            raw_means: vec![[0.5, -1.0], [2.0, 0.1]],
            raw_chol: vec![[0.2, 0.0, -0.4], [-0.3, 0.25, 0.1]],
            raw_logits: vec![0.0, 1.0],
        };
        let m = decode(&p, &cfg).unwrap();
        let m2 = decode(&encode(&m, &cfg).unwrap(), &cfg).unwrap();
        for (a, b) in m.components().iter().zip(m2.components()) {
            assert!((a.mu.x - b.mu.x).abs() < 1e-9 && (a.mu.y - b.mu.y).abs() < 1e-9);
            assert!((a.sigma.a11() - b.sigma.a11()).abs() < 1e-9);
            assert!((a.sigma.a12() - b.sigma.a12()).abs() < 1e-9);
            assert!((a.sigma.a22() - b.sigma.a22()).abs() < 1e-9);
            assert!((a.weight - b.weight).abs() < 1e-9);
        }
    }

    #[test]
    fn cold_init_single_point_stacks() {
        let cfg = FitConfig { k_max: 3, ..FitConfig::default() };
        let p = Point2::new(1.0, 2.0);
        let params = init_cold(&obs_from(vec![p], vec![p], vec![]), &cfg);
        assert_eq!(params.k(), 3);
        assert!(params.raw_means.iter().all(|m| *m == [1.0, 2.0]));
        assert!(params.raw_logits.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn cold_init_seeds_each_cluster() {
        let mut pts: Vec<Point2> = (0..5).map(|i| Point2::new(-3.0 + 0.1 * i as f64, 0.0)).collect();
        pts.extend((0..5).map(|i| Point2::new(3.0, 0.1 * i as f64)));
        let cfg = FitConfig { k_max: 2, ..FitConfig::default() };
        for seed in 0..10 {
            let cfg = FitConfig { seed, ..cfg.clone() };
            let params = init_cold(&obs_from(pts.clone(), pts.clone(), vec![]), &cfg);
            let left = params.raw_means.iter().filter(|m| m[0] < 0.0).count();
            assert_eq!(left, 1, "seed {seed}");
            let a = init_cold(&obs_from(pts.clone(), pts.clone(), vec![]), &cfg);
            assert_eq!(a, params);
        }
        // Semi-axes at tau are a quarter of the bounding-box diagonal.
        let m = decode(&init_cold(&obs_from(pts.clone(), pts, vec![]), &cfg), &cfg).unwrap();
        let diag = Point2::new(6.0, 0.4).norm();
        for e in m.ellipses() {
            assert!((e.a - 0.25 * diag).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_observation_falls_back() {
        let cfg = FitConfig::default();
        let obs = obs_from(vec![], vec![], vec![Point2::new(1.0, 1.0)]);
        let r = fit_frame(None, &obs, &cfg).unwrap();
        assert_eq!(r.contract.len(), 1);
        assert!(!r.converged);
        assert!(r.contract.ellipses()[0].a > 4.0);
        let prev = FitParams { raw_means: vec![[1.0, 1.0]], raw_chol: vec![[0.0; 3]], raw_logits: vec![0.0] };
        let r = fit_frame(Some(&prev), &obs, &cfg).unwrap();
        assert_eq!(r.params, prev);
    }

    fn planted(seed: u64, n: usize) -> (Vec<Point2>, [Point2; 2]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [
            Point2::new(rng.random_range(-2.0..-1.0), rng.random_range(-1.0..1.0)),
            Point2::new(rng.random_range(1.0..2.0), rng.random_range(-1.0..1.0)),
        ];
        let sigmas = [
            SpdMat2::from_eigen(0.09, 0.02, rng.random_range(0.0..3.0)).unwrap(),
            SpdMat2::from_eigen(0.06, 0.03, rng.random_range(0.0..3.0)).unwrap(),
        ];
        let pts = (0..n)
            .map(|i| {
                let (c, s) = (centers[i % 2], sigmas[i % 2]);
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let l11 = s.a11().sqrt();
                let l21 = s.a12() / l11;
                let l22 = (s.a22() - l21 * l21).sqrt();
                c + Point2::new(l11 * z1, l21 * z1 + l22 * z2)
            })
            .collect();
        (pts, centers)
    }

    #[test]
    fn recovers_planted_mixture() {
        let cfg = FitConfig { k_max: 2, ..FitConfig::default() };
        let mut good = 0;
        for seed in 0..20 {
            let (pts, centers) = planted(seed, 400);
            let (train, held_out) = pts.split_at(200);
            let obs = obs_from(train.to_vec(), train.to_vec(), vec![]);
            let r = fit_frame(None, &obs, &cfg).unwrap();
            if seed < 3 {
                for c in centers {
                    let nearest = r.contract.components().iter().map(|k| k.mu.dist(c)).fold(f64::INFINITY, f64::min);
                    assert!(nearest < 0.2, "seed {seed}: {nearest}");
                }
            }
            let inc = held_out.iter().filter(|&&y| r.contract.contains(y)).count() as f64 / held_out.len() as f64;
            good += usize::from(inc >= 0.95);
        }
        assert!(good >= 18, "{good}/20");
    }

    #[test]
    fn fit_is_deterministic_and_descends() {
        let (pts, _) = planted(42, 200);
        let free = vec![Point2::new(0.0, 0.0), Point2::new(0.0, 1.5), Point2::new(0.0, -1.5)];
        let obs = obs_from(pts.clone(), pts, free);
        let cfg = FitConfig { k_max: 3, max_iters_cold: 80, ..FitConfig::default() };
        let a = fit_frame(None, &obs, &cfg).unwrap();
        let b = fit_frame(None, &obs, &cfg).unwrap();
        assert_eq!(a, b);
        let init = composite_loss_and_grad(&init_cold(&obs, &cfg), (&obs).into(), &cfg.loss_weights(), &cfg).unwrap();
        assert!(a.final_loss.total <= init.total);
        let (r, history) = fit_frame_traced(None, &obs, &cfg).unwrap();
        assert_eq!(history.len(), cfg.max_iters_cold + 1);
        assert!(history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*history.last().unwrap(), r.final_loss.total);
    }

    #[test]
    fn warm_start_on_identical_frame_is_stable() {
        let (pts, _) = planted(5, 200);
        let obs = obs_from(pts.clone(), pts, vec![Point2::new(0.0, 3.0)]);
        let cfg = FitConfig { k_max: 2, max_iters_cold: 2000, max_iters_warm: 1, ..FitConfig::default() };
        let cold = fit_frame(None, &obs, &cfg).unwrap();
        let warm = fit_frame(Some(&cold.params), &obs, &cfg).unwrap();
        assert!((warm.final_loss.total - cold.final_loss.total).abs() < 1e-6);
    }

    #[test]
    fn pruning_examples() {
        let c = |w: f64, x: f64| GaussianComponent::new(Point2::new(x, 0.0), SpdMat2::identity(), w).unwrap();
        let m = MixtureContract::new(vec![c(0.5, 0.0), c(0.49, 1.0), c(0.01, 2.0)], 0.95).unwrap();
        let p = active_components(&m, 0.02);
        assert_eq!(p.len(), 2);
        assert!((p.components()[0].weight - 0.5051).abs() < 1e-4);
        assert!((p.components()[1].weight - 0.4949).abs() < 1e-4);

        let eq = MixtureContract::new(vec![c(0.25, 0.0), c(0.25, 1.0), c(0.25, 2.0), c(0.25, 3.0)], 0.95).unwrap();
        assert_eq!(active_components(&eq, 0.2), eq);
        let one = MixtureContract::new(vec![c(1.0, 0.0)], 0.95).unwrap();
        assert_eq!(active_components(&one, 0.9), one);
        let skewed = MixtureContract::new(vec![c(0.3, 0.0), c(0.3, 1.0), c(0.4, 2.0)], 0.95).unwrap();
        let p = active_components(&skewed, 0.5);
        assert_eq!(p.len(), 1);
        assert_eq!(p.components()[0].mu.x, 2.0);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        assert!(FitConfig { prune_weight: 0.25, ..FitConfig::default() }.validate().is_err());
        assert!(FitConfig { k_max: 0, ..FitConfig::default() }.validate().is_err());
        assert!(FitConfig { eps_reg: 0.0, ..FitConfig::default() }.validate().is_err());
    }
}
