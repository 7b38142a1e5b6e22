//! Gaussian components, their confidence ellipses, and the union-of-ellipses
//! contract predicate.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{GmIpcError, Result};

/// Planar point or displacement, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotate counterclockwise by `angle` radians.
    pub fn rotated(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

/// Symmetric positive-definite 2×2 matrix, upper triangle stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpd")]
pub struct SpdMat2 {
    a11: f64,
    a12: f64,
    a22: f64,
}

#[derive(Deserialize)]
struct RawSpd {
    a11: f64,
    a12: f64,
    a22: f64,
}

impl TryFrom<RawSpd> for SpdMat2 {
    type Error = GmIpcError;
    fn try_from(r: RawSpd) -> Result<Self> {
        SpdMat2::new(r.a11, r.a12, r.a22)
    }
}

/// Eigen-decomposition of a symmetric 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen2 {
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// Angle of the principal eigenvector, in (−π/2, π/2]. Zero on ties.
    pub angle: f64,
}

impl SpdMat2 {
    pub fn new(a11: f64, a12: f64, a22: f64) -> Result<Self> {
        let finite = a11.is_finite() && a12.is_finite() && a22.is_finite();
        if !finite || a11 <= 0.0 || a11 * a22 - a12 * a12 <= 0.0 {
            return Err(GmIpcError::Invariant(format!(
                "matrix [[{a11}, {a12}], [{a12}, {a22}]] is not positive definite"
            )));
        }
        Ok(SpdMat2 { a11, a12, a22 })
    }

    pub fn identity() -> Self {
        SpdMat2 { a11: 1.0, a12: 0.0, a22: 1.0 }
    }

    pub fn diag(d1: f64, d2: f64) -> Result<Self> {
        SpdMat2::new(d1, 0.0, d2)
    }

    /// `R(angle) · diag(l1, l2) · R(angle)ᵀ`.
    pub fn from_eigen(l1: f64, l2: f64, angle: f64) -> Result<Self> {
        let (s, c) = angle.sin_cos();
        SpdMat2::new(
            l1 * c * c + l2 * s * s,
            (l1 - l2) * c * s,
            l1 * s * s + l2 * c * c,
        )
    }

    pub fn a11(&self) -> f64 {
        self.a11
    }
    pub fn a12(&self) -> f64 {
        self.a12
    }
    pub fn a22(&self) -> f64 {
        self.a22
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    /// Inverse as `(p11, p12, p22)`.
    pub fn inverse(&self) -> (f64, f64, f64) {
        let det = self.det();
        (self.a22 / det, -self.a12 / det, self.a11 / det)
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        SpdMat2::new(self.a11 * k, self.a12 * k, self.a22 * k)
    }

    /// Closed-form eigenvalues from trace and determinant.
    pub fn eigen(&self) -> Eigen2 {
        let half_tr = 0.5 * (self.a11 + self.a22);
        let half_diff = 0.5 * (self.a11 - self.a22);
        let disc = half_diff.hypot(self.a12);
        let lambda_max = half_tr + disc;
        // det / λ_max avoids cancellation in the small eigenvalue.
        let lambda_min = self.det() / lambda_max;
        let angle = if disc == 0.0 {
            0.0
        } else {
            canonical_axis_angle(0.5 * (2.0 * self.a12).atan2(self.a11 - self.a22))
        };
        Eigen2 { lambda_max, lambda_min, angle }
    }
}

/// Map an axis orientation into (−π/2, π/2].
pub fn canonical_axis_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(PI);
    if t > PI / 2.0 {
        t -= PI;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mu: Point2,
    pub sigma: SpdMat2,
    pub weight: f64,
}

impl GaussianComponent {
    pub fn new(mu: Point2, sigma: SpdMat2, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight <= 1.0) || !mu.is_finite() {
            return Err(GmIpcError::Invariant(format!(
                "component weight {weight} outside (0, 1] or non-finite mean"
            )));
        }
        Ok(GaussianComponent { mu, sigma, weight })
    }
}

/// The uncertainty set: a union of confidence ellipses at a shared level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureContract {
    components: Vec<GaussianComponent>,
    rho: f64,
    tau: f64,
}

/// Hard cap on mixture size.
pub const MAX_COMPONENTS: usize = 16;

/// Tolerance on the weight simplex.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

impl MixtureContract {
    pub fn new(components: Vec<GaussianComponent>, rho: f64) -> Result<Self> {
        let tau = chi2_quantile_2d(rho)?;
        if components.is_empty() {
            return Err(GmIpcError::Invariant("contract needs at least one component".into()));
        }
        if components.len() > MAX_COMPONENTS {
            return Err(GmIpcError::Invariant(format!(
                "{} components exceed the cap of {MAX_COMPONENTS}",
                components.len()
            )));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(GmIpcError::Invariant(format!("weights sum to {total}, expected 1")));
        }
        Ok(MixtureContract { components, rho, tau })
    }

    /// Normalizes the given weights onto the simplex before validating.
    pub fn normalized(mut components: Vec<GaussianComponent>, rho: f64) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        for c in &mut components {
            c.weight /= total;
        }
        MixtureContract::new(components, rho)
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Same components at another confidence level.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Ok(MixtureContract { components: self.components.clone(), rho, tau: chi2_quantile_2d(rho)? })
    }

    /// Same components with an explicit quantile; `rho` is back-computed.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(GmIpcError::Domain(format!("tau {tau} must be positive")));
        }
        Ok(MixtureContract { components: self.components.clone(), rho: -(-tau / 2.0).exp_m1(), tau })
    }

    pub fn ellipses(&self) -> Vec<ConfidenceEllipse> {
        self.components.iter().map(|c| ellipse_from_component(c, self.tau)).collect()
    }

    pub fn contains(&self, y: Point2) -> bool {
        contract_contains(self, y)
    }
}

/// Geometric confidence ellipse; `theta` is the major-axis angle in (−π/2, π/2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEllipse {
    pub center: Point2,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl ConfidenceEllipse {
    /// Point on the boundary at parametric angle `t`.
    pub fn boundary_point(&self, t: f64) -> Point2 {
        let local = Point2::new(self.a * t.cos(), self.b * t.sin());
        self.center + local.rotated(self.theta)
    }

    pub fn area(&self) -> f64 {
        PI * self.a * self.b
    }

    /// Half-extents of the axis-aligned bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (
            ((self.a * c).powi(2) + (self.b * s).powi(2)).sqrt(),
            ((self.a * s).powi(2) + (self.b * c).powi(2)).sqrt(),
        )
    }
}

/// Chi-square quantile with two degrees of freedom: `−2 ln(1 − rho)`.
pub fn chi2_quantile_2d(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(GmIpcError::Domain(format!("confidence {rho} outside (0, 1)")));
    }
    Ok(-2.0 * (-rho).ln_1p())
}

/// `(y − mu)ᵀ Σ⁻¹ (y − mu)`.
pub fn mahalanobis_sq(y: Point2, mu: Point2, sigma: &SpdMat2) -> f64 {
    let (p11, p12, p22) = sigma.inverse();
    let d = y - mu;
    (p11 * d.x * d.x + 2.0 * p12 * d.x * d.y + p22 * d.y * d.y).max(0.0)
}

pub fn ellipse_from_component(c: &GaussianComponent, tau: f64) -> ConfidenceEllipse {
    let eig = c.sigma.eigen();
    ConfidenceEllipse {
        center: c.mu,
        a: (eig.lambda_max * tau).sqrt(),
        b: (eig.lambda_min * tau).sqrt(),
        theta: eig.angle,
    }
}

pub fn contract_contains(m: &MixtureContract, y: Point2) -> bool {
    m.components.iter().any(|c| mahalanobis_sq(y, c.mu, &c.sigma) <= m.tau)
}
