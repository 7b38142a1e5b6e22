//! Composite training objective: smooth coverage, mixture likelihood and the
//! free-space penalty, with analytic gradients through the covariance factor.

use serde::{Deserialize, Serialize};

use crate::contract::{mahalanobis_sq, GaussianComponent, MixtureContract, Point2, MAX_COMPONENTS};
use crate::error::{GmIpcError, Result};
use crate::fitter::{decode_factors, FitConfig, FitParams};

/// Upper clamp on the soft membership before taking `log(1 − q)`.
pub const Q_CLAMP: f64 = 1.0 - 1e-15;
/// Below this total hazard the inclusion term is evaluated in log space.
const SMALL_COVER_SWITCH: f64 = 1e-3;
/// `softplus(z) = −log(1 − σ(z))` at the clamp.
const SOFTPLUS_CAP: f64 = 34.538_776_394_910_684; // −ln(1e-15)
/// Cells whose logit is below this for every component are skipped.
const EMPTY_CULL_Z: f64 = -40.0;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub smoothing_s: f64,
    pub focal_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 0.1, beta: 2.0, smoothing_s: 0.15, focal_gamma: 2.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.smoothing_s, self.focal_gamma]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.alpha < 0.0 || self.beta < 0.0 || self.smoothing_s <= 0.0 {
            return Err(GmIpcError::Argument(format!("invalid loss weights {self:?}")));
        }
        if self.focal_gamma < 1.0 {
            return Err(GmIpcError::Argument("focal_gamma must be >= 1".into()));
        }
        Ok(())
    }
}

/// Centers of grid cells known to be obstacle-free.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FreeCellSet {
    pub centers: Vec<Point2>,
    pub cell_area: f64,
}

impl FreeCellSet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub incl: f64,
    pub nll: f64,
    pub empty: f64,
    pub total: f64,
    /// Gradient over the flattened `FitParams` (means, factors, logits).
    pub grad: Vec<f64>,
}

/// The data a frame's loss is evaluated on.
#[derive(Debug, Clone, Copy)]
pub struct LossTargets<'a> {
    pub gt_points: &'a [Point2],
    pub free: &'a FreeCellSet,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `ln σ(z)`.
fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

/// `ln softplus(z)`, accurate deep in the left tail.
fn log_softplus(z: f64) -> f64 {
    if z < -30.0 {
        z
    } else {
        softplus(z).ln()
    }
}

/// `−ln(1 − exp(−exp(l)))`, i.e. `−ln p` where `ln(1 − p) = −exp(l)`.
fn neg_log_one_minus_exp_neg_exp(l: f64) -> f64 {
    if l < -30.0 {
        -l + 0.5 * l.exp()
    } else {
        -(-(-l.exp()).exp_m1()).ln()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Per-component data reused across every evaluation point.
#[derive(Debug, Clone, Copy)]
struct Prepared {
    mu: Point2,
    p11: f64,
    p12: f64,
    p22: f64,
    log_det: f64,
    w: f64,
    ln_w: f64,
}

impl Prepared {
    fn from_component(c: &GaussianComponent) -> Self {
        let (p11, p12, p22) = c.sigma.inverse();
        Prepared {
            mu: c.mu,
            p11,
            p12,
            p22,
            log_det: c.sigma.det().ln(),
            w: c.weight,
            ln_w: c.weight.ln(),
        }
    }

    #[inline]
    fn d2(&self, y: Point2) -> (f64, f64, f64) {
        let dx = y.x - self.mu.x;
        let dy = y.y - self.mu.y;
        let d2 = self.p11 * dx * dx + 2.0 * self.p12 * dx * dy + self.p22 * dy * dy;
        (d2.max(0.0), dx, dy)
    }
}

fn prepare(m: &MixtureContract) -> Vec<Prepared> {
    m.components().iter().map(Prepared::from_component).collect()
}

/// Gradient accumulator for one component. `g` is the symmetric matrix with
/// `df = tr(g · dΣ)`.
#[derive(Debug, Clone, Copy, Default)]
struct ComponentGrad {
    mu: Point2,
    g11: f64,
    g12: f64,
    g22: f64,
    w: f64,
}

impl ComponentGrad {
    /// Add `coef · ∂(d²)/∂(μ, Σ)`.
    #[inline]
    fn add_d2(&mut self, p: &Prepared, dx: f64, dy: f64, coef: f64) {
        // P·d
        let px = p.p11 * dx + p.p12 * dy;
        let py = p.p12 * dx + p.p22 * dy;
        self.mu.x -= 2.0 * coef * px;
        self.mu.y -= 2.0 * coef * py;
        self.g11 -= coef * px * px;
        self.g12 -= coef * px * py;
        self.g22 -= coef * py * py;
    }

    #[inline]
    fn add_log_det(&mut self, p: &Prepared, coef: f64) {
        self.g11 += coef * p.p11;
        self.g12 += coef * p.p12;
        self.g22 += coef * p.p22;
    }
}

/// `σ((τ − d²)/s)`.
pub fn soft_membership(y: Point2, c: &GaussianComponent, tau: f64, s: f64) -> f64 {
    sigmoid((tau - mahalanobis_sq(y, c.mu, &c.sigma)) / s)
}

/// Inclusion term for one point; returns `(−ln p_cover, ln(1 − p_cover))`.
fn incl_point(
    prep: &[Prepared],
    tau: f64,
    s: f64,
    y: Point2,
    mut grad: Option<(&mut [ComponentGrad], f64)>,
) -> (f64, f64) {
    let k = prep.len();
    let mut z = [0.0; MAX_COMPONENTS];
    let mut sp = [0.0; MAX_COMPONENTS];
    let mut terms = [0.0; MAX_COMPONENTS];
    let mut geom = [(0.0, 0.0); MAX_COMPONENTS];
    let mut log_miss = 0.0;
    for (i, p) in prep.iter().enumerate() {
        let (d2, dx, dy) = p.d2(y);
        geom[i] = (dx, dy);
        z[i] = (tau - d2) / s;
        sp[i] = softplus(z[i]).min(SOFTPLUS_CAP);
        log_miss -= p.w * sp[i];
        terms[i] = p.ln_w + if sp[i] >= SOFTPLUS_CAP { SOFTPLUS_CAP.ln() } else { log_softplus(z[i]) };
    }
    // Small coverage goes through ln(−log_miss) in log space, so far-away
    // points keep finite, exact gradients.
    let (loss, log_miss) = if log_miss > -SMALL_COVER_SWITCH {
        let l = log_sum_exp(&terms[..k]);
        (neg_log_one_minus_exp_neg_exp(l), -l.exp())
    } else {
        (-(-log_miss.exp_m1()).ln(), log_miss)
    };
    if let Some((g, scale)) = grad.as_mut() {
        // dloss/dS = e^S / p, kept in log space.
        let base = log_miss + loss;
        for (i, p) in prep.iter().enumerate() {
            let dw = -(base + terms[i] - p.ln_w).exp();
            g[i].w += *scale * dw;
            if sp[i] < SOFTPLUS_CAP {
                let dz = -(base + p.ln_w + log_sigmoid(z[i])).exp();
                // z = (τ − d²)/s
                g[i].add_d2(p, geom[i].0, geom[i].1, -*scale * dz / s);
            }
        }
    }
    (loss, log_miss)
}

/// `1 − ∏(1 − q_i)^{w_i}`, evaluated in log space.
pub fn coverage_prob(m: &MixtureContract, y: Point2, s: f64) -> f64 {
    let prep = prepare(m);
    let (_, log_miss) = incl_point(&prep, m.tau(), s, y, None);
    -log_miss.exp_m1()
}

/// Per-point inclusion contribution `−ln p_cover(y)`.
pub fn inclusion_contribution(m: &MixtureContract, y: Point2, s: f64) -> f64 {
    let prep = prepare(m);
    incl_point(&prep, m.tau(), s, y, None).0
}

pub fn inclusion_loss(m: &MixtureContract, gt_points: &[Point2], s: f64) -> Result<f64> {
    if gt_points.is_empty() {
        return Err(GmIpcError::Argument("inclusion loss needs ground-truth points".into()));
    }
    let prep = prepare(m);
    let sum: f64 = gt_points.iter().map(|&y| incl_point(&prep, m.tau(), s, y, None).0).sum();
    Ok(sum / gt_points.len() as f64)
}

/// Hard union membership; the `s → 0` limit of the smooth coverage.
pub fn hard_coverage(m: &MixtureContract, y: Point2) -> bool {
    m.contains(y)
}

fn nll_point(prep: &[Prepared], y: Point2, grad: Option<(&mut [ComponentGrad], f64)>) -> f64 {
    let k = prep.len();
    let mut logs = [0.0; MAX_COMPONENTS];
    let mut geom = [(0.0, 0.0); MAX_COMPONENTS];
    for (i, p) in prep.iter().enumerate() {
        let (d2, dx, dy) = p.d2(y);
        geom[i] = (dx, dy);
        logs[i] = p.ln_w - LN_2PI - 0.5 * p.log_det - 0.5 * d2;
    }
    let lse = log_sum_exp(&logs[..k]);
    if let Some((g, scale)) = grad {
        for (i, p) in prep.iter().enumerate() {
            let r = (logs[i] - lse).exp();
            g[i].add_d2(p, geom[i].0, geom[i].1, 0.5 * r * scale);
            g[i].add_log_det(p, 0.5 * r * scale);
            g[i].w -= scale * r / p.w;
        }
    }
    -lse
}

/// `−mean ln Σ w_i N(y | μ_i, Σ_i)`.
pub fn nll_loss(m: &MixtureContract, gt_points: &[Point2]) -> Result<f64> {
    if gt_points.is_empty() {
        return Err(GmIpcError::Argument("likelihood loss needs ground-truth points".into()));
    }
    let prep = prepare(m);
    let sum: f64 = gt_points.iter().map(|&y| nll_point(&prep, y, None)).sum();
    Ok(sum / gt_points.len() as f64)
}

fn empty_cell(
    prep: &[Prepared],
    tau: f64,
    s: f64,
    focal_gamma: f64,
    c: Point2,
    grad: Option<(&mut [ComponentGrad], f64)>,
) -> f64 {
    let k = prep.len();
    let mut z = [0.0; MAX_COMPONENTS];
    let mut geom = [(0.0, 0.0); MAX_COMPONENTS];
    let mut any = false;
    for (i, p) in prep.iter().enumerate() {
        let (d2, dx, dy) = p.d2(c);
        geom[i] = (dx, dy);
        z[i] = (tau - d2) / s;
        any |= z[i] > EMPTY_CULL_Z;
    }
    if !any {
        return 0.0;
    }
    let log_miss: f64 = -z[..k].iter().map(|&zi| softplus(zi)).sum::<f64>();
    let u = -log_miss.exp_m1();
    let phi = u.powf(focal_gamma);
    if let Some((g, scale)) = grad {
        let dphi_du = focal_gamma * u.powf(focal_gamma - 1.0);
        let miss = log_miss.exp();
        for (i, p) in prep.iter().enumerate() {
            let dz = dphi_du * miss * sigmoid(z[i]);
            g[i].add_d2(p, geom[i].0, geom[i].1, -scale * dz / s);
        }
    }
    phi
}

/// Mean focal-weighted union coverage of known-free cells. Per-component
/// memberships are unweighted.
pub fn empty_loss(m: &MixtureContract, free: &FreeCellSet, s: f64, focal_gamma: f64) -> Result<f64> {
    if free.is_empty() {
        return Err(GmIpcError::Argument("empty-space penalty needs free cells".into()));
    }
    let prep = prepare(m);
    let sum: f64 = free
        .centers
        .iter()
        .map(|&c| empty_cell(&prep, m.tau(), s, focal_gamma, c, None))
        .sum();
    Ok(sum / free.len() as f64)
}

/// Total loss and its gradient over the raw parameters. `cfg` supplies the
/// decoding (confidence level and diagonal regularization); a frame without
/// free cells contributes no empty-space term.
pub fn composite_loss_and_grad(
    params: &FitParams,
    targets: LossTargets<'_>,
    weights: &LossWeights,
    cfg: &FitConfig,
) -> Result<LossReport> {
    if targets.gt_points.is_empty() {
        return Err(GmIpcError::Argument("composite loss needs ground-truth points".into()));
    }
    let decoded = decode_factors(params, cfg)?;
    let m = &decoded.contract;
    let prep = prepare(m);
    let k = prep.len();
    let tau = m.tau();
    let s = weights.smoothing_s;
    let mut g = vec![ComponentGrad::default(); k];

    let n = targets.gt_points.len() as f64;
    let mut incl = 0.0;
    let mut nll = 0.0;
    for &y in targets.gt_points {
        incl += incl_point(&prep, tau, s, y, Some((&mut g, 1.0 / n))).0;
        if weights.alpha != 0.0 {
            nll += nll_point(&prep, y, Some((&mut g, weights.alpha / n)));
        } else {
            nll += nll_point(&prep, y, None);
        }
    }
    incl /= n;
    nll /= n;

    let mut empty = 0.0;
    if !targets.free.is_empty() {
        let nf = targets.free.len() as f64;
        let scale = weights.beta / nf;
        for &c in &targets.free.centers {
            let grad = (weights.beta != 0.0).then_some((g.as_mut_slice(), scale));
            empty += empty_cell(&prep, tau, s, weights.focal_gamma, c, grad);
        }
        empty /= nf;
    }

    let total = incl + weights.alpha * nll + weights.beta * empty;

    // Chain rule into (means, Cholesky factors, logits).
    let mut grad = vec![0.0; 6 * k];
    let (gm, rest) = grad.split_at_mut(2 * k);
    let (gc, gl) = rest.split_at_mut(3 * k);
    let wsum: f64 = (0..k).map(|i| prep[i].w * g[i].w).sum();
    for i in 0..k {
        gm[2 * i] = g[i].mu.x;
        gm[2 * i + 1] = g[i].mu.y;
        let [l11, l21, l22] = decoded.factors[i];
        let [s11, s22] = decoded.diag_slopes[i];
        let (g11, g12, g22) = (g[i].g11, g[i].g12, g[i].g22);
        gc[3 * i] = 2.0 * (g11 * l11 + g12 * l21) * s11;
        gc[3 * i + 1] = 2.0 * (g12 * l11 + g22 * l21);
        gc[3 * i + 2] = 2.0 * g22 * l22 * s22;
        gl[i] = prep[i].w * (g[i].w - wsum);
    }

    Ok(LossReport { incl, nll, empty, total, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::SpdMat2;
    use std::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(sigma: SpdMat2, rho: f64) -> MixtureContract {
        MixtureContract::new(
            vec![GaussianComponent::new(Point2::ORIGIN, sigma, 1.0).unwrap()],
            rho,
        )
        .unwrap()
    }

    fn random_contract(rng: &mut ChaCha8Rng, k: usize) -> MixtureContract {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let comps = raw
            .iter()
            .map(|w| {
                let s = SpdMat2::from_eigen(
                    rng.random_range(0.02..1.0),
                    rng.random_range(0.02..1.0),
                    rng.random_range(0.0..PI),
                )
                .unwrap();
                let mu = Point2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                GaussianComponent::new(mu, s, w / total).unwrap()
            })
            .collect();
        MixtureContract::normalized(comps, rng.random_range(0.5..0.99)).unwrap()
    }

    #[test]
    fn soft_membership_examples() {
        let c = GaussianComponent::new(Point2::ORIGIN, SpdMat2::identity(), 1.0).unwrap();
        let tau: f64 = 5.991;
        let on_boundary = Point2::new(tau.sqrt(), 0.0);
        assert!((soft_membership(on_boundary, &c, tau, 0.5) - 0.5).abs() < 1e-12);
        let q = soft_membership(Point2::ORIGIN, &c, tau, 0.5);
        assert!((q - 0.999_993_7).abs() < 1e-6, "{q}");
        assert!(soft_membership(Point2::new(1.0, 0.0), &c, tau, 1e-4) > 1.0 - 1e-12);
        let mut last = 1.0;
        for r in [0.0, 0.5, 1.0, 2.0, 2.5, 3.0] {
            let q = soft_membership(Point2::new(r, 0.0), &c, tau, 0.5);
            assert!(q > 0.0 && q < 1.0 && q <= last);
            last = q;
        }
    }

    #[test]
    fn coverage_examples() {
        // Single component, boundary point: q = 0.5.
        let m = single(SpdMat2::identity(), 0.95);
        let y = Point2::new(m.tau().sqrt(), 0.0);
        assert!((coverage_prob(&m, y, 0.5) - 0.5).abs() < 1e-12);
        assert!((inclusion_loss(&m, &[y], 0.5).unwrap() - 2f64.ln()).abs() < 1e-12);

        // Two equal-weight components both at q = 0.5: 1 − √0.5·√0.5.
        let c1 = GaussianComponent::new(Point2::ORIGIN, SpdMat2::identity(), 0.5).unwrap();
        let mut c2 = c1;
        c2.mu = Point2::new(2.0 * y.x, 0.0);
        let m2 = MixtureContract::new(vec![c1, c2], 0.95).unwrap();
        assert!((coverage_prob(&m2, y, 0.5) - 0.5).abs() < 1e-12);

        // Sharp memberships saturate at the clamp: 1 − (1e-15)^0.5.
        let sharp = coverage_prob(&m2, Point2::ORIGIN, 1e-3);
        assert!((sharp - (1.0 - 1e-15f64.sqrt())).abs() < 1e-12, "{sharp}");
    }

    #[test]
    fn inclusion_near_zero_at_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_contract(&mut rng, 3).with_tau(5.991).unwrap();
        // All weight on the covering component keeps the product tiny.
        let pts: Vec<Point2> = m.components().iter().map(|c| c.mu).collect();
        let single = MixtureContract::new(
            vec![GaussianComponent { weight: 1.0, ..m.components()[0] }],
            0.95,
        )
        .unwrap();
        assert!(inclusion_loss(&single, &pts[..1], 0.5).unwrap() < 1e-4);
        assert!(inclusion_loss(&m, &pts, 0.5).unwrap() > 0.0);
        assert!(inclusion_loss(&m, &[], 0.5).is_err());
    }

    #[test]
    fn far_points_stay_finite() {
        let m = single(SpdMat2::diag(0.01, 0.01).unwrap(), 0.95);
        let far = Point2::new(1e3, 0.0);
        let l = inclusion_contribution(&m, far, 0.5);
        assert!(l.is_finite() && l > 1e6);
        let p = coverage_prob(&m, far, 0.5);
        assert!((0.0..1.0).contains(&p));
        // Deep inside with a sharp scale hits the clamp but stays finite.
        let l = inclusion_contribution(&m, Point2::ORIGIN, 1e-3);
        assert!(l.is_finite() && l >= 0.0);
    }

    #[test]
    fn miscoverage_bound_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let k = rng.random_range(1..6);
            let m = random_contract(&mut rng, k);
            let y = Point2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let s = rng.random_range(0.05..2.0);
            let p = coverage_prob(&m, y, s);
            assert!(1.0 - p <= inclusion_contribution(&m, y, s));
        }
    }

    #[test]
    fn sharp_coverage_agrees_with_hard_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_contract(&mut rng, 3);
        let prep = prepare(&m);
        let mut agree = 0usize;
        let mut total = 0usize;
        for _ in 0..20_000 {
            let y = Point2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let near_boundary = prep.iter().any(|p| (p.d2(y).0 - m.tau()).abs() < 0.05);
            if near_boundary {
                continue;
            }
            total += 1;
            agree += usize::from((coverage_prob(&m, y, 1e-3) > 0.5) == hard_coverage(&m, y));
        }
        assert!(agree as f64 >= 0.99 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn nll_examples() {
        let m = single(SpdMat2::identity(), 0.95);
        let l = nll_loss(&m, &[Point2::ORIGIN]).unwrap();
        assert!((l - 1.8379).abs() < 1e-4);
        assert!((l - (2.0 * PI).ln()).abs() < 1e-12);
        let bigger = single(SpdMat2::identity().scaled(1.5).unwrap(), 0.95);
        assert!(nll_loss(&bigger, &[Point2::ORIGIN]).unwrap() > l);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_contract(&mut rng, 2);
        let pts: Vec<Point2> = (0..50)
            .map(|_| Point2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        let base = nll_loss(&m, &pts).unwrap();
        let mut split = Vec::new();
        for c in m.components() {
            let half = GaussianComponent { weight: c.weight / 2.0, ..*c };
            split.push(half);
            split.push(half);
        }
        let dup = MixtureContract::new(split, m.rho()).unwrap();
        assert!((nll_loss(&dup, &pts).unwrap() - base).abs() < 1e-12);
        assert!(nll_loss(&m, &[]).is_err());
    }

    #[test]
    fn empty_examples() {
        let m = single(SpdMat2::identity(), 0.95);
        let far = FreeCellSet { centers: vec![Point2::new(50.0, 0.0), Point2::new(0.0, -30.0)], cell_area: 0.02 };
        assert!(empty_loss(&m, &far, 0.5, 2.0).unwrap() < 1e-6);
        let edge = FreeCellSet { centers: vec![Point2::new(m.tau().sqrt(), 0.0)], cell_area: 0.02 };
        assert!((empty_loss(&m, &edge, 0.5, 2.0).unwrap() - 0.25).abs() < 1e-12);
        assert!(empty_loss(&m, &FreeCellSet::default(), 0.5, 2.0).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let m = random_contract(&mut rng, 3);
            let free = FreeCellSet {
                centers: (0..200)
                    .map(|_| Point2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
                    .collect(),
                cell_area: 0.02,
            };
            let shrunk = MixtureContract::new(
                m.components()
                    .iter()
                    .map(|c| GaussianComponent { sigma: c.sigma.scaled(0.1).unwrap(), ..*c })
                    .collect(),
                m.rho(),
            )
            .unwrap();
            let full = empty_loss(&m, &free, 0.5, 2.0).unwrap();
            let small = empty_loss(&shrunk, &free, 0.5, 2.0).unwrap();
            assert!((0.0..=1.0).contains(&full));
            assert!(small <= full + 1e-15);
        }
    }

    #[test]
    fn losses_are_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_contract(&mut rng, 4);
        let mut rev = m.components().to_vec();
        rev.reverse();
        let r = MixtureContract::new(rev, m.rho()).unwrap();
        let pts: Vec<Point2> = (0..40)
            .map(|_| Point2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect();
        let free = FreeCellSet { centers: pts.clone(), cell_area: 0.02 };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs());
        assert!(close(inclusion_loss(&m, &pts, 0.5).unwrap(), inclusion_loss(&r, &pts, 0.5).unwrap()));
        assert!(close(nll_loss(&m, &pts).unwrap(), nll_loss(&r, &pts).unwrap()));
        assert!(close(empty_loss(&m, &free, 0.5, 2.0).unwrap(), empty_loss(&r, &free, 0.5, 2.0).unwrap()));
    }

    #[test]
    fn smooth_to_hard_disagreement_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = random_contract(&mut rng, 3);
        let pts: Vec<Point2> = (0..20_000)
            .map(|_| Point2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)))
            .collect();
        let mut last = usize::MAX;
        for s in [0.5, 0.05, 0.005] {
            let diff = pts
                .iter()
                .filter(|&&y| (coverage_prob(&m, y, s) > 0.5) != hard_coverage(&m, y))
                .count();
            assert!(diff <= last, "s={s}: {diff} > {last}");
            last = diff;
        }
    }
}
