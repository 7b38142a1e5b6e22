//! Ellipse barriers, confidence-adaptive relaxation and the receding-horizon
//! MPC with discrete-time barrier constraints.
//!
//! The barrier constraint `h̄(x⁺) ≥ (1 − γ) h̄(x)` uses the safe form
//! `h̄ = (x̃/a)² + (ỹ/b)² − 1`, which is nonnegative outside the inflated
//! ellipse. Each sequential round linearizes only `h̄(x⁺)`; since `h̄` is
//! convex the linearization underestimates it, so the subproblem is convex
//! and its feasible set lies inside the true one.

use serde::{Deserialize, Serialize};

use crate::contract::{ConfidenceEllipse, MixtureContract, Point2};
use crate::error::{GmIpcError, Result};
use crate::simworld::{step_dynamics, RobotState};
use crate::timing::Stopwatch;

const INNER_ITERS: usize = 400;
const AL_ROUNDS: usize = 8;
const AL_MU0: f64 = 10.0;
/// Extra slack demanded of the convex subproblem, in units of `h̄`.
const SUBPROBLEM_MARGIN: f64 = 1e-4;
const BACKTRACK_STEPS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    /// Semi-axes already inflated by the robot radius.
    pub ellipse: ConfidenceEllipse,
    pub weight: f64,
}

impl BarrierSpec {
    pub fn new(e: ConfidenceEllipse, weight: f64, robot_radius: f64) -> Self {
        BarrierSpec {
            ellipse: ConfidenceEllipse { a: e.a + robot_radius, b: e.b + robot_radius, ..e },
            weight,
        }
    }

    /// Scaled local coordinates `(x̃/a, ỹ/b)`.
    fn scaled_local(&self, p: Point2) -> (f64, f64) {
        let e = &self.ellipse;
        let l = (p - e.center).rotated(-e.theta);
        (l.x / e.a, l.y / e.b)
    }

    /// `(x̃/a)² + (ỹ/b)² − 1`: positive outside, zero on the boundary.
    pub fn safe_value(&self, p: Point2) -> f64 {
        let (sx, sy) = self.scaled_local(p);
        (sx * sx + sy * sy) - 1.0
    }

    fn safe_grad(&self, p: Point2) -> Point2 {
        let (sx, sy) = self.scaled_local(p);
        let e = &self.ellipse;
        Point2::new(2.0 * sx / e.a, 2.0 * sy / e.b).rotated(e.theta)
    }
}

/// `1 − (x̃/a)² − (ỹ/b)²`: one at the center, zero on the boundary and
/// negative outside. The planner constrains its negation.
pub fn barrier_value(b: &BarrierSpec, p: Point2) -> f64 {
    let (sx, sy) = b.scaled_local(p);
    1.0 - (sx * sx + sy * sy)
}

pub fn barriers_from_contract(m: &MixtureContract, robot_radius: f64) -> Vec<BarrierSpec> {
    m.ellipses()
        .into_iter()
        .zip(m.components())
        .map(|(e, c)| BarrierSpec::new(e, c.weight, robot_radius))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon_n: usize,
    pub dt: f64,
    pub q_pos: f64,
    pub r_u: f64,
    pub p_term: f64,
    pub u_max: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub eps_dist: f64,
    pub sqp_iters: usize,
    pub robot_radius: f64,
    /// Predicted states are clamped to this square, as the simulator does.
    pub workspace_half: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon_n: 10,
            dt: 0.1,
            q_pos: 1.0,
            r_u: 0.1,
            p_term: 10.0,
            u_max: 1.0,
            gamma_min: 0.1,
            gamma_max: 0.8,
            rho_min: 0.05,
            rho_max: 1.0,
            eps_dist: 1e-3,
            sqp_iters: 5,
            robot_radius: 0.3,
            workspace_half: crate::simworld::WORKSPACE_HALF,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GmIpcError::Config(m.to_string()));
        if self.horizon_n < 1 {
            return bad("horizon_n must be at least 1");
        }
        if !(0.0 < self.gamma_min && self.gamma_min <= self.gamma_max && self.gamma_max <= 1.0) {
            return bad("need 0 < gamma_min <= gamma_max <= 1");
        }
        if !(self.rho_min < self.rho_max) {
            return bad("need rho_min < rho_max");
        }
        if !(self.dt > 0.0 && self.u_max > 0.0 && self.eps_dist > 0.0 && self.workspace_half > 0.0) {
            return bad("dt, u_max, eps_dist and workspace_half must be positive");
        }
        if self.q_pos < 0.0 || self.r_u < 0.0 || self.p_term < 0.0 || self.robot_radius < 0.0 {
            return bad("weights and robot_radius must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub u0: Point2,
    pub predicted_states: Vec<Point2>,
    pub gamma_used: f64,
    pub feasible: bool,
    pub solve_time: f64,
}

/// Per-barrier confidence: weight over the largest weight, clamped to the
/// configured range.
pub fn barrier_confidences(barriers: &[BarrierSpec], cfg: &MpcConfig) -> Vec<f64> {
    let w_max = barriers.iter().map(|b| b.weight).fold(0.0, f64::max);
    barriers
        .iter()
        .map(|b| if w_max > 0.0 { b.weight / w_max } else { 1.0 }.clamp(cfg.rho_min, cfg.rho_max))
        .collect()
}

/// Inverse-distance-weighted mean confidence mapped linearly onto
/// `[gamma_min, gamma_max]`.
pub fn confidence_gamma(centers: &[(Point2, f64)], p: Point2, cfg: &MpcConfig) -> f64 {
    if centers.is_empty() {
        return cfg.gamma_max;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(c, rho) in centers {
        let w = 1.0 / (p.dist(c) + cfg.eps_dist);
        num += w * rho;
        den += w;
    }
    let rho_bar = (num / den).clamp(cfg.rho_min, cfg.rho_max);
    let frac = (rho_bar - cfg.rho_min) / (cfg.rho_max - cfg.rho_min);
    (cfg.gamma_min + frac * (cfg.gamma_max - cfg.gamma_min)).clamp(cfg.gamma_min, cfg.gamma_max)
}

pub fn adaptive_gamma(barriers: &[BarrierSpec], p: Point2, cfg: &MpcConfig) -> f64 {
    let rho = barrier_confidences(barriers, cfg);
    let centers: Vec<(Point2, f64)> = barriers.iter().zip(rho).map(|(b, r)| (b.ellipse.center, r)).collect();
    confidence_gamma(&centers, p, cfg)
}

/// `h̄(x⁺) ≥ (1 − γ) h̄(x)`, evaluated exactly as the planner and the trial
/// logs do.
pub fn cbf_step_ok(b: &BarrierSpec, from: Point2, to: Point2, gamma: f64) -> bool {
    b.safe_value(to) >= (1.0 - gamma) * b.safe_value(from)
}

struct Problem<'a> {
    p0: Point2,
    goal: Point2,
    barriers: &'a [BarrierSpec],
    gamma: f64,
    cfg: &'a MpcConfig,
}

/// Linearization of `h̄_j(x_{k+1})` about a reference trajectory.
struct Linearization {
    /// Indexed `[k * n_barriers + j]`: reference point, value and gradient.
    terms: Vec<(Point2, f64, Point2)>,
}

impl<'a> Problem<'a> {
    fn n(&self) -> usize {
        self.cfg.horizon_n
    }

    fn rollout(&self, u: &[Point2]) -> Vec<Point2> {
        let mut s = Vec::with_capacity(u.len() + 1);
        let mut x = RobotState { pos: self.p0, t: 0 };
        s.push(x.pos);
        for &uk in u {
            x = step_dynamics(x, uk, self.cfg.dt, self.cfg.workspace_half);
            s.push(x.pos);
        }
        s
    }

    fn stage_weight(&self, m: usize) -> f64 {
        if m == self.n() {
            self.cfg.p_term
        } else {
            self.cfg.q_pos
        }
    }

    fn cost(&self, s: &[Point2], u: &[Point2]) -> f64 {
        let mut j = 0.0;
        for m in 1..=self.n() {
            j += self.stage_weight(m) * (s[m] - self.goal).norm_sq();
        }
        j + self.cfg.r_u * u.iter().map(|v| v.norm_sq()).sum::<f64>()
    }

    fn feasible(&self, s: &[Point2]) -> bool {
        (0..self.n()).all(|k| self.barriers.iter().all(|b| cbf_step_ok(b, s[k], s[k + 1], self.gamma)))
    }

    fn violation(&self, s: &[Point2]) -> f64 {
        let mut v = 0.0;
        for k in 0..self.n() {
            for b in self.barriers {
                v += ((1.0 - self.gamma) * b.safe_value(s[k]) - b.safe_value(s[k + 1])).max(0.0);
            }
        }
        v
    }

    fn linearize(&self, s: &[Point2]) -> Linearization {
        let mut terms = Vec::with_capacity(self.n() * self.barriers.len());
        for k in 0..self.n() {
            for b in self.barriers {
                let p = s[k + 1];
                terms.push((p, b.safe_value(p), b.safe_grad(p)));
            }
        }
        Linearization { terms }
    }

    /// Subproblem constraint `g ≤ 0` for step `k` and barrier `j`.
    fn lin_constraint(&self, lin: &Linearization, s: &[Point2], k: usize, j: usize) -> f64 {
        let (pr, h, g) = lin.terms[k * self.barriers.len() + j];
        (1.0 - self.gamma) * self.barriers[j].safe_value(s[k]) - (h + g.dot(s[k + 1] - pr)) + SUBPROBLEM_MARGIN
    }

    fn project(&self, u: &mut [Point2]) {
        let m = self.cfg.u_max;
        for v in u.iter_mut() {
            let n = v.norm();
            if n > m {
                *v = *v * (m / n);
            }
            v.x = v.x.clamp(-m, m);
            v.y = v.y.clamp(-m, m);
        }
    }

    /// Augmented Lagrangian value and, optionally, its input gradient.
    fn merit(
        &self,
        lin: &Linearization,
        lambda: &[f64],
        mu: f64,
        u: &[Point2],
        want_grad: bool,
    ) -> (f64, Vec<Point2>) {
        let n = self.n();
        let s = self.rollout(u);
        let mut val = self.cost(&s, u);
        let mut gs = vec![Point2::ORIGIN; n + 1];
        if want_grad {
            for (m, g) in gs.iter_mut().enumerate().skip(1) {
                *g = (s[m] - self.goal) * (2.0 * self.stage_weight(m));
            }
        }
        let nb = self.barriers.len();
        for k in 0..n {
            for j in 0..nb {
                let idx = k * nb + j;
                let shifted = self.lin_constraint(lin, &s, k, j) + lambda[idx] / mu;
                if shifted > 0.0 {
                    val += 0.5 * mu * shifted * shifted;
                    if want_grad {
                        let c = mu * shifted;
                        if k > 0 {
                            gs[k] = gs[k] + self.barriers[j].safe_grad(s[k]) * (c * (1.0 - self.gamma));
                        }
                        gs[k + 1] = gs[k + 1] - lin.terms[idx].2 * c;
                    }
                }
            }
        }
        if !want_grad {
            return (val, Vec::new());
        }
        // x_m depends on u_i for every i < m with slope dt.
        let mut grad = vec![Point2::ORIGIN; n];
        let mut suffix = Point2::ORIGIN;
        for i in (0..n).rev() {
            suffix = suffix + gs[i + 1];
            grad[i] = suffix * self.cfg.dt + u[i] * (2.0 * self.cfg.r_u);
        }
        (val, grad)
    }

    fn solve_subproblem(&self, reference: &[Point2]) -> Vec<Point2> {
        let s_ref = self.rollout(reference);
        let lin = self.linearize(&s_ref);
        let n_con = self.n() * self.barriers.len();
        let mut lambda = vec![0.0; n_con];
        let mut mu = AL_MU0;
        let mut u = reference.to_vec();
        let mut t = 1.0;
        for _ in 0..AL_ROUNDS {
            for _ in 0..INNER_ITERS {
                let (phi, grad) = self.merit(&lin, &lambda, mu, &u, true);
                let mut next;
                let moved;
                loop {
                    next = u.iter().zip(&grad).map(|(&v, &g)| v - g * t).collect::<Vec<_>>();
                    self.project(&mut next);
                    let (lin_dec, sq) = next.iter().zip(&u).zip(&grad).fold((0.0, 0.0), |(a, b), ((&x, &y), &g)| {
                        let d = x - y;
                        (a + g.dot(d), b + d.norm_sq())
                    });
                    let (phi_next, _) = self.merit(&lin, &lambda, mu, &next, false);
                    if phi_next <= phi + lin_dec + sq / (2.0 * t) || t < 1e-14 {
                        moved = sq.sqrt();
                        break;
                    }
                    t *= 0.5;
                }
                u = next;
                t *= 1.5;
                if moved < 1e-10 {
                    break;
                }
            }
            let s = self.rollout(&u);
            let mut worst = f64::NEG_INFINITY;
            for k in 0..self.n() {
                for j in 0..self.barriers.len() {
                    let g = self.lin_constraint(&lin, &s, k, j);
                    worst = worst.max(g);
                    let idx = k * self.barriers.len() + j;
                    lambda[idx] = (lambda[idx] + mu * g).max(0.0);
                }
            }
            if worst <= 0.5 * SUBPROBLEM_MARGIN {
                break;
            }
            mu *= 10.0;
        }
        u
    }
}

/// One receding-horizon solve from the hold trajectory.
pub fn solve_mpc(x: &RobotState, goal: Point2, barriers: &[BarrierSpec], cfg: &MpcConfig) -> PlanResult {
    let clock = Stopwatch::start();
    let gamma = adaptive_gamma(barriers, x.pos, cfg);
    let prob = Problem { p0: x.pos, goal, barriers, gamma, cfg };
    let n = cfg.horizon_n;

    let mut u = vec![Point2::ORIGIN; n];
    let mut s = prob.rollout(&u);
    let mut feasible = prob.feasible(&s);
    let mut best = (prob.violation(&s), u.clone());

    for _ in 0..cfg.sqp_iters.max(1) {
        let cand = prob.solve_subproblem(&u);
        if feasible {
            // Stay inside the feasible set: back off toward the incumbent.
            let j_now = prob.cost(&s, &u);
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..BACKTRACK_STEPS {
                let trial: Vec<Point2> = u.iter().zip(&cand).map(|(&a, &b)| a + (b - a) * step).collect();
                let st = prob.rollout(&trial);
                if prob.feasible(&st) && prob.cost(&st, &trial) <= j_now {
                    u = trial;
                    s = st;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        } else {
            u = cand;
            s = prob.rollout(&u);
            feasible = prob.feasible(&s);
            let v = prob.violation(&s);
            if v < best.0 {
                best = (v, u.clone());
            }
        }
    }

    if !feasible {
        // Braking fallback: shrink the first input until the one-step
        // condition holds. From inside a barrier no scale may satisfy it;
        // then keep the scale with the smallest one-step violation.
        u = best.1;
        let u0 = u[0];
        let one_step_violation = |v: Point2| {
            let next = step_dynamics(RobotState { pos: x.pos, t: 0 }, v, cfg.dt, cfg.workspace_half).pos;
            barriers
                .iter()
                .map(|b| (1.0 - gamma) * b.safe_value(x.pos) - b.safe_value(next))
                .fold(0.0, f64::max)
        };
        let mut scale = 1.0;
        let mut pick = (one_step_violation(Point2::ORIGIN), 0.0);
        for _ in 0..=BACKTRACK_STEPS {
            let v = one_step_violation(u0 * scale);
            if v <= 0.0 {
                pick = (v, scale);
                break;
            }
            if v < pick.0 {
                pick = (v, scale);
            }
            scale *= 0.5;
        }
        u[0] = u0 * pick.1;
        prob.project(&mut u);
        s = prob.rollout(&u);
    }

    PlanResult { u0: u[0], predicted_states: s, gamma_used: gamma, feasible, solve_time: clock.secs() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{GaussianComponent, SpdMat2};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn circle(c: Point2, r: f64, w: f64) -> BarrierSpec {
        BarrierSpec { ellipse: ConfidenceEllipse { center: c, a: r, b: r, theta: 0.0 }, weight: w }
    }

    #[test]
    fn barrier_value_examples() {
        let b = BarrierSpec {
            ellipse: ConfidenceEllipse { center: Point2::new(1.0, -2.0), a: 2.0, b: 0.5, theta: 0.6 },
            weight: 1.0,
        };
        let c = b.ellipse.center;
        assert_eq!(barrier_value(&b, c), 1.0);
        let axis = Point2::new(0.6f64.cos(), 0.6f64.sin());
        assert!(barrier_value(&b, c + axis * 2.0).abs() < 1e-12);
        assert!((barrier_value(&b, c + axis * 4.0) + 3.0).abs() < 1e-12);
        for t in 0..32 {
            let p = b.ellipse.boundary_point(t as f64 * PI / 16.0);
            assert!(b.safe_value(p).abs() < 1e-12);
            let q = c + (p - c) * 1.3;
            assert_eq!(b.safe_value(q), -barrier_value(&b, q));
            assert!(b.safe_value(q) > 0.0);
        }
    }

    #[test]
    fn safe_grad_matches_differences() {
        let b = BarrierSpec {
            ellipse: ConfidenceEllipse { center: Point2::new(0.3, 0.1), a: 1.7, b: 0.4, theta: -1.1 },
            weight: 1.0,
        };
        let p = Point2::new(2.0, -0.7);
        let g = b.safe_grad(p);
        let h = 1e-6;
        let fx = (b.safe_value(p + Point2::new(h, 0.0)) - b.safe_value(p - Point2::new(h, 0.0))) / (2.0 * h);
        let fy = (b.safe_value(p + Point2::new(0.0, h)) - b.safe_value(p - Point2::new(0.0, h))) / (2.0 * h);
        assert!((g.x - fx).abs() < 1e-6 && (g.y - fy).abs() < 1e-6);
    }

    #[test]
    fn barriers_are_inflated() {
        let comps = vec![
            GaussianComponent::new(Point2::ORIGIN, SpdMat2::diag(0.5, 0.1).unwrap(), 0.7).unwrap(),
            GaussianComponent::new(Point2::new(2.0, 0.0), SpdMat2::identity(), 0.3).unwrap(),
        ];
        let m = MixtureContract::new(comps, 0.95).unwrap();
        let bs = barriers_from_contract(&m, 0.3);
        assert_eq!(bs.len(), 2);
        for (b, e) in bs.iter().zip(m.ellipses()) {
            assert!((b.ellipse.a - e.a - 0.3).abs() < 1e-15);
            assert!(b.ellipse.a >= b.ellipse.b && b.ellipse.b > 0.0);
        }
        assert_eq!(bs[0].weight, 0.7);
    }

    #[test]
    fn gamma_examples() {
        let cfg = MpcConfig { rho_min: 0.0, rho_max: 1.0, ..MpcConfig::default() };
        let p = Point2::ORIGIN;
        let centers = [(Point2::new(1.0, 0.0), 0.2), (Point2::new(0.0, 1.0), 0.8)];
        assert!((confidence_gamma(&centers, p, &cfg) - 0.45).abs() < 1e-12);
        let lo = [(Point2::new(1.0, 0.0), 0.0), (Point2::new(3.0, 0.0), 0.0)];
        assert!((confidence_gamma(&lo, p, &cfg) - cfg.gamma_min).abs() < 1e-15);
        let hi = [(Point2::new(1.0, 0.0), 1.0)];
        assert!((confidence_gamma(&hi, p, &cfg) - cfg.gamma_max).abs() < 1e-15);
        assert_eq!(adaptive_gamma(&[], p, &cfg), cfg.gamma_max);
        // Weight-derived confidences: the heaviest barrier has rho = 1.
        let d = MpcConfig::default();
        let bs = [circle(Point2::new(1.0, 0.0), 0.5, 0.01), circle(Point2::new(-1.0, 0.0), 0.5, 0.5)];
        assert_eq!(barrier_confidences(&bs, &d), vec![0.05, 1.0]);
        let g = adaptive_gamma(&bs, Point2::new(0.9, 0.0), &d);
        assert!(g > d.gamma_min && g < 0.2);
    }

    #[test]
    fn unconstrained_moves_at_full_speed_toward_goal() {
        let cfg = MpcConfig::default();
        for (i, heading) in [0.0, 0.4, 1.9, -2.7, PI].into_iter().enumerate() {
            let pos = Point2::new(-1.0 + 0.1 * i as f64, 0.5);
            let goal = pos + Point2::new(heading.cos(), heading.sin()) * 3.0;
            let r = solve_mpc(&RobotState { pos, t: 0 }, goal, &[], &cfg);
            let expect = Point2::new(heading.cos(), heading.sin()) * cfg.u_max;
            assert!((r.u0 - expect).norm() < 1e-6, "{:?} vs {expect:?}", r.u0);
            assert!(r.feasible);
            assert_eq!(r.predicted_states.len(), cfg.horizon_n + 1);
        }
    }

    #[test]
    fn one_step_matches_control_grid() {
        let cfg = MpcConfig { horizon_n: 1, ..MpcConfig::default() };
        let pos = Point2::new(0.2, -0.3);
        for goal in [Point2::new(0.25, -0.28), Point2::new(3.0, 2.0), Point2::new(0.1, -0.2)] {
            let r = solve_mpc(&RobotState { pos, t: 0 }, goal, &[], &cfg);
            let cost = |u: Point2| {
                cfg.p_term * (pos + u * cfg.dt - goal).norm_sq() + cfg.r_u * u.norm_sq()
            };
            let mut best = (f64::INFINITY, Point2::ORIGIN);
            let m = 400;
            for i in 0..=m {
                for j in 0..=m {
                    let u = Point2::new(-1.0 + 2.0 * i as f64 / m as f64, -1.0 + 2.0 * j as f64 / m as f64);
                    if u.norm() <= cfg.u_max && cost(u) < best.0 {
                        best = (cost(u), u);
                    }
                }
            }
            assert!(cost(r.u0) <= best.0 + 1e-12);
            assert!((r.u0 - best.1).norm() < 0.02, "{:?} vs {:?}", r.u0, best.1);
        }
    }

    #[test]
    fn does_not_enter_from_boundary() {
        let cfg = MpcConfig::default();
        let b = circle(Point2::ORIGIN, 1.0, 1.0);
        let pos = Point2::new(-1.0, 0.0);
        assert!(b.safe_value(pos).abs() < 1e-15);
        let r = solve_mpc(&RobotState { pos, t: 0 }, Point2::new(3.0, 0.05), &[b], &cfg);
        let next = pos + r.u0 * cfg.dt;
        assert!(b.safe_value(next) >= 0.0);
        assert!(r.feasible);
    }

    #[test]
    fn closed_loop_passes_circular_obstacle() {
        let cfg = MpcConfig::default();
        let b = circle(Point2::new(0.0, 0.1), 0.8, 1.0);
        let goal = Point2::new(4.0, 0.0);
        let mut x = RobotState { pos: Point2::new(-4.0, 0.0), t: 0 };
        let mut min_h = f64::INFINITY;
        for _ in 0..300 {
            let r = solve_mpc(&x, goal, &[b], &cfg);
            assert!(r.feasible);
            let next = step_dynamics(x, r.u0, cfg.dt, cfg.workspace_half);
            assert_eq!(next.pos, r.predicted_states[1]);
            assert!(cbf_step_ok(&b, x.pos, next.pos, r.gamma_used));
            x = next;
            min_h = min_h.min(b.safe_value(x.pos));
            if x.pos.dist(goal) < 0.3 {
                break;
            }
        }
        assert!(x.pos.dist(goal) < 0.3, "stuck at {:?}", x.pos);
        assert!(min_h >= 0.0);
    }

    #[test]
    fn leaves_a_barrier_it_starts_inside() {
        let cfg = MpcConfig::default();
        let b = circle(Point2::ORIGIN, 1.0, 1.0);
        let goal = Point2::new(-3.0, 0.2);
        let mut x = RobotState { pos: Point2::new(0.5, 0.0), t: 0 };
        let hold = (1.0 - cfg.gamma_max) * b.safe_value(x.pos) - b.safe_value(x.pos);
        let r = solve_mpc(&x, goal, &[b], &cfg);
        assert!(r.u0.x.abs() <= cfg.u_max && r.u0.y.abs() <= cfg.u_max);
        let next = step_dynamics(x, r.u0, cfg.dt, cfg.workspace_half).pos;
        assert!((1.0 - r.gamma_used) * b.safe_value(x.pos) - b.safe_value(next) <= hold);
        for _ in 0..40 {
            let r = solve_mpc(&x, goal, &[b], &cfg);
            x = step_dynamics(x, r.u0, cfg.dt, cfg.workspace_half);
        }
        assert!(b.safe_value(x.pos) >= 0.0, "still inside at {:?}", x.pos);
    }

    #[test]
    fn pinned_inside_does_not_go_deeper() {
        // Pinned against the workspace edge inside a barrier centred beyond it.
        let cfg = MpcConfig { workspace_half: 1.0, ..MpcConfig::default() };
        let b = circle(Point2::new(1.5, 0.0), 1.0, 1.0);
        let pos = Point2::new(1.0, 0.0);
        let r = solve_mpc(&RobotState { pos, t: 0 }, Point2::new(1.0, 0.9), &[b], &cfg);
        assert!(!r.feasible);
        let next = step_dynamics(RobotState { pos, t: 0 }, r.u0, cfg.dt, cfg.workspace_half).pos;
        assert!(b.safe_value(next) >= b.safe_value(pos) - 1e-12);
    }

    fn arb_barrier() -> impl Strategy<Value = BarrierSpec> {
        (-3.0..3.0f64, -3.0..3.0f64, 0.3..1.5f64, 0.2..1.0f64, -1.5..1.5f64, 0.05..1.0f64).prop_map(
            |(x, y, a, ratio, th, w)| BarrierSpec {
                ellipse: ConfidenceEllipse { center: Point2::new(x, y), a, b: a * ratio, theta: th },
                weight: w,
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn plan_properties(
            bs in proptest::collection::vec(arb_barrier(), 0..4),
            px in -4.5..4.5f64, py in -4.5..4.5f64,
            gx in -4.5..4.5f64, gy in -4.5..4.5f64,
        ) {
            let cfg = MpcConfig::default();
            let x = RobotState { pos: Point2::new(px, py), t: 0 };
            let goal = Point2::new(gx, gy);
            let r = solve_mpc(&x, goal, &bs, &cfg);
            prop_assert!(r.u0.x.abs() <= cfg.u_max && r.u0.y.abs() <= cfg.u_max);
            prop_assert!(r.gamma_used >= cfg.gamma_min && r.gamma_used <= cfg.gamma_max);
            let again = solve_mpc(&x, goal, &bs, &cfg);
            prop_assert_eq!(&r.predicted_states, &again.predicted_states);
            if r.feasible {
                for k in 0..cfg.horizon_n {
                    for b in &bs {
                        prop_assert!(cbf_step_ok(b, r.predicted_states[k], r.predicted_states[k + 1], r.gamma_used));
                    }
                }
            }
            // From a safe start, a plan feasible at the smallest relaxation
            // also satisfies the largest.
            let strict = MpcConfig { gamma_max: cfg.gamma_min, ..cfg.clone() };
            let rs = solve_mpc(&x, goal, &bs, &strict);
            if rs.feasible && bs.iter().all(|b| b.safe_value(x.pos) >= 0.0) {
                for k in 0..cfg.horizon_n {
                    for b in &bs {
                        prop_assert!(cbf_step_ok(b, rs.predicted_states[k], rs.predicted_states[k + 1], cfg.gamma_max));
                    }
                }
            }
        }
    }
}
