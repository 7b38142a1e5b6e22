//! Randomized oracle checks shared by the command-line `selftest` and the
//! test suites.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::contract::{
    chi2_quantile_2d, ellipse_from_component, mahalanobis_sq, GaussianComponent, MixtureContract, Point2, SpdMat2,
};
use crate::fitter::{FitConfig, FitParams};
use crate::losses::{composite_loss_and_grad, coverage_prob, inclusion_contribution, FreeCellSet, LossTargets};
use crate::metrics::{mc_union_area, pac_gap};
use crate::seeding::rng_for;
use crate::Result;

pub const FD_STEP: f64 = 1e-5;
/// Gradient errors are relative to `max(|analytic|, |numeric|, GRAD_FLOOR)`.
/// Central differences at `FD_STEP` resolve about 1e-9 in absolute terms at
/// these loss magnitudes, so smaller entries are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_params(rng: &mut impl Rng, k: usize) -> FitParams {
    FitParams {
        raw_means: (0..k).map(|_| [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)]).collect(),
        raw_chol: (0..k)
            .map(|_| [rng.random_range(-1.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-1.5..0.5)])
            .collect(),
        raw_logits: (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

fn random_points(rng: &mut impl Rng, n: usize, spread: f64) -> Vec<Point2> {
    (0..n).map(|_| Point2::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread))).collect()
}

/// Largest relative discrepancy between the analytic composite gradient and
/// central differences over `instances` random problems.
pub fn gradient_check(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = rng_for(&[0x6772_6164, seed]);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = rng.random_range(1..=5);
        let params = random_params(&mut rng, k);
        let (n_gt, n_free) = (rng.random_range(5..40), rng.random_range(0..60));
        let gt = random_points(&mut rng, n_gt, 2.0);
        let free = FreeCellSet { centers: random_points(&mut rng, n_free, 3.0), cell_area: 0.025 };
        let cfg = FitConfig {
            rho: rng.random_range(0.6..0.99),
            alpha: rng.random_range(0.0..1.0),
            beta: rng.random_range(0.0..2.0),
            smoothing_s: rng.random_range(0.2..1.0),
            ..FitConfig::default()
        };
        let weights = cfg.loss_weights();
        let targets = LossTargets { gt_points: &gt, free: &free };
        let analytic = composite_loss_and_grad(&params, targets, &weights, &cfg)?.grad;
        let x = params.to_flat();
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += FD_STEP;
            xm[i] -= FD_STEP;
            let fp = composite_loss_and_grad(&FitParams::from_flat(k, &xp)?, targets, &weights, &cfg)?.total;
            let fm = composite_loss_and_grad(&FitParams::from_flat(k, &xm)?, targets, &weights, &cfg)?.total;
            let numeric = (fp - fm) / (2.0 * FD_STEP);
            let scale = analytic[i].abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
    }
    Ok(worst)
}

pub fn random_contract(rng: &mut impl Rng) -> MixtureContract {
    let k = rng.random_range(1..=5);
    let comps = (0..k)
        .map(|_| {
            let s = SpdMat2::from_eigen(rng.random_range(0.01..2.0), rng.random_range(0.01..2.0), rng.random_range(0.0..PI))
                .expect("positive eigenvalues");
            let mu = Point2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            GaussianComponent::new(mu, s, rng.random_range(0.05..1.0)).expect("weight in range")
        })
        .collect();
    MixtureContract::normalized(comps, rng.random_range(0.5..0.999)).expect("valid mixture")
}

/// Pairs where `1 − p_cover > −ln p_cover`.
pub fn miscoverage_violations(pairs: usize, seed: u64) -> usize {
    let mut rng = rng_for(&[0x6d69_7363, seed]);
    let mut bad = 0;
    for _ in 0..pairs {
        let m = random_contract(&mut rng);
        let y = Point2::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
        let s = rng.random_range(0.05..2.0);
        let p = coverage_prob(&m, y, s);
        bad += usize::from(1.0 - p > inclusion_contribution(&m, y, s));
    }
    bad
}

/// Worst `|d²(boundary point) − τ| / τ` over random components.
pub fn boundary_residual(components: usize, points_each: usize, seed: u64) -> f64 {
    let mut rng = rng_for(&[0x656c_6c69, seed]);
    let mut worst: f64 = 0.0;
    for _ in 0..components {
        let l1: f64 = rng.random_range(1e-3..5.0);
        let l2: f64 = rng.random_range(1e-3..5.0);
        let s = SpdMat2::from_eigen(l1, l2, rng.random_range(-PI..PI)).expect("positive eigenvalues");
        let c = GaussianComponent::new(Point2::new(rng.sample(StandardNormal), rng.sample(StandardNormal)), s, 1.0)
            .expect("unit weight");
        let tau = chi2_quantile_2d(rng.random_range(0.01..0.999)).expect("valid confidence");
        let e = ellipse_from_component(&c, tau);
        for j in 0..points_each {
            let p = e.boundary_point(2.0 * PI * j as f64 / points_each as f64);
            worst = worst.max((mahalanobis_sq(p, c.mu, &c.sigma) - tau).abs() / tau);
        }
    }
    worst
}

/// Relative error of the Monte-Carlo area of the unit circle at τ.
pub fn mc_circle_error(samples: usize, seed: u64) -> Result<f64> {
    let tau = chi2_quantile_2d(0.95)?;
    let c = GaussianComponent::new(Point2::ORIGIN, SpdMat2::diag(1.0 / tau, 1.0 / tau)?, 1.0)?;
    let m = MixtureContract::new(vec![c], 0.95)?;
    Ok((mc_union_area(&m, samples, seed)?.area / PI - 1.0).abs())
}

pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    let grad = gradient_check(50, seed)?;
    let mis = miscoverage_violations(10_000, seed);
    let geom = boundary_residual(200, 64, seed);
    let circle = mc_circle_error(100_000, seed)?;
    let gap = pac_gap(100, 0.05)?;
    Ok(vec![
        CheckResult { name: "gradient", passed: grad <= 1e-4, detail: format!("max relative error {grad:.3e}") },
        CheckResult { name: "miscoverage bound", passed: mis == 0, detail: format!("{mis} violations in 10000 pairs") },
        CheckResult { name: "ellipse boundary", passed: geom <= 1e-9, detail: format!("max residual {geom:.3e}") },
        CheckResult { name: "mc circle area", passed: circle <= 0.02, detail: format!("relative error {circle:.4}") },
        CheckResult { name: "pac gap", passed: (gap - 0.1224).abs() <= 1e-4, detail: format!("gap(100, 0.05) = {gap:.5}") },
    ])
}
