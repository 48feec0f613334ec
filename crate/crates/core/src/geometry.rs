//! Covariance ellipses in the Cartesian ground frame.
//!
//! An uncertainty region is the set `{p : (p − c)ᵀ Σ⁻¹ (p − c) ≤ k²}`. Its
//! boundary is parameterised as `p(t) = c + k·L·(cos t, sin t)` with `L` the
//! lower Cholesky factor of `Σ`, which keeps the parameterisation
//! counter-clockwise (`det L > 0`).
//!
//! Overlap areas are computed by integrating `½ ∮ (x dy − y dx)` along the
//! boundary of the intersection. That boundary is made of arcs of each
//! ellipse lying inside the other; an elliptic arc integrates in closed
//! form, so the only numerical step is locating the boundary crossings.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted ratio between the two principal variances.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("covariance is not symmetric (off-diagonals {0} and {1})")]
    NotSymmetric(f64, f64),
    #[error("covariance is not positive definite (det {det}, trace {trace})")]
    NotPositiveDefinite { det: f64, trace: f64 },
    #[error("covariance condition number {0:e} exceeds {MAX_CONDITION:e}")]
    IllConditioned(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(r: f64, theta: f64) -> Self {
        Self::new(r * theta.cos(), r * theta.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// Polar angle measured counter-clockwise from +x.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Symmetric positive-definite 2×2 covariance, in m².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct Cov2 {
    xx: f64,
    xy: f64,
    yy: f64,
}

impl Cov2 {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Result<Self, GeometryError> {
        if !(xx.is_finite() && xy.is_finite() && yy.is_finite()) {
            return Err(GeometryError::NonFinite("covariance"));
        }
        let c = Self { xx, xy, yy };
        let (det, trace) = (c.det(), c.trace());
        if !(det > 0.0 && trace > 0.0) {
            return Err(GeometryError::NotPositiveDefinite { det, trace });
        }
        let (hi, lo) = c.eigenvalues();
        if lo <= 0.0 {
            return Err(GeometryError::NotPositiveDefinite { det, trace });
        }
        let cond = hi / lo;
        if cond > MAX_CONDITION {
            return Err(GeometryError::IllConditioned(cond));
        }
        Ok(c)
    }

    pub fn diag(xx: f64, yy: f64) -> Result<Self, GeometryError> {
        Self::new(xx, 0.0, yy)
    }

    pub fn identity() -> Self {
        Self { xx: 1.0, xy: 0.0, yy: 1.0 }
    }

    /// Builds from a full matrix, requiring `|m01 − m10| ≤ 1e-9·max|m|`.
    pub fn from_matrix(m: [[f64; 2]; 2]) -> Result<Self, GeometryError> {
        let scale = m.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()));
        if (m[0][1] - m[1][0]).abs() > 1e-9 * scale {
            return Err(GeometryError::NotSymmetric(m[0][1], m[1][0]));
        }
        Self::new(m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1])
    }

    pub fn to_matrix(self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }

    pub fn xx(&self) -> f64 {
        self.xx
    }

    pub fn xy(&self) -> f64 {
        self.xy
    }

    pub fn yy(&self) -> f64 {
        self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Principal variances, largest first.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let rad = half_diff.hypot(self.xy);
        (mean + rad, mean - rad)
    }

    /// Inverse as `(a, b, c)` for `[[a, b], [b, c]]`.
    fn inverse_entries(&self) -> (f64, f64, f64) {
        let d = self.det();
        (self.yy / d, -self.xy / d, self.xx / d)
    }

    /// Lower Cholesky factor `(l11, l21, l22)`.
    fn cholesky(&self) -> (f64, f64, f64) {
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let l22 = (self.yy - l21 * l21).max(0.0).sqrt();
        (l11, l21, l22)
    }

    /// `(p)ᵀ Σ⁻¹ (p)`.
    pub fn mahalanobis_sq(&self, d: Vec2) -> f64 {
        let (a, b, c) = self.inverse_entries();
        a * d.x * d.x + 2.0 * b * d.x * d.y + c * d.y * d.y
    }

    fn total_cmp(&self, o: &Self) -> Ordering {
        self.xx
            .total_cmp(&o.xx)
            .then(self.xy.total_cmp(&o.xy))
            .then(self.yy.total_cmp(&o.yy))
    }
}

impl TryFrom<[[f64; 2]; 2]> for Cov2 {
    type Error = GeometryError;
    fn try_from(m: [[f64; 2]; 2]) -> Result<Self, Self::Error> {
        Cov2::from_matrix(m)
    }
}

impl From<Cov2> for [[f64; 2]; 2] {
    fn from(c: Cov2) -> Self {
        c.to_matrix()
    }
}

/// Confidence region of a 2-D Gaussian position estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovEllipse {
    pub center: Vec2,
    pub cov: Cov2,
    k: f64,
}

impl CovEllipse {
    /// 1-σ ellipse.
    pub fn new(center: Vec2, cov: Cov2) -> Self {
        Self { center, cov, k: 1.0 }
    }

    pub fn with_scale(center: Vec2, cov: Cov2, k: f64) -> Result<Self, GeometryError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(GeometryError::NonPositive { name: "k", value: k });
        }
        if !center.is_finite() {
            return Err(GeometryError::NonFinite("center"));
        }
        Ok(Self { center, cov, k })
    }

    pub fn scale(&self) -> f64 {
        self.k
    }

    pub fn area(&self) -> f64 {
        ellipse_area(self)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.level(p) <= 0.0
    }

    /// Negative inside, zero on the boundary, positive outside.
    fn level(&self, p: Vec2) -> f64 {
        self.cov.mahalanobis_sq(p - self.center) / (self.k * self.k) - 1.0
    }

    /// Radius of the smallest centred disc containing the ellipse.
    pub fn bounding_radius(&self) -> f64 {
        self.k * self.cov.eigenvalues().0.sqrt()
    }

    fn total_cmp(&self, o: &Self) -> Ordering {
        self.center
            .x
            .total_cmp(&o.center.x)
            .then(self.center.y.total_cmp(&o.center.y))
            .then(self.cov.total_cmp(&o.cov))
            .then(self.k.total_cmp(&o.k))
    }
}

/// Covariance of a polar measurement expressed in the Cartesian frame.
///
/// Range error lies along the line of sight and azimuth error across it with
/// standard deviation `r·σ_θ`; the aligned diagonal covariance is rotated by
/// the azimuth: `R(θ)·diag(σ_r², (r·σ_θ)²)·R(θ)ᵀ`.
pub fn polar_cov_to_cartesian(
    r: f64,
    theta: f64,
    sigma_r: f64,
    sigma_theta: f64,
) -> Result<Cov2, GeometryError> {
    for (name, value) in [("r", r), ("sigma_r", sigma_r), ("sigma_theta", sigma_theta)] {
        if !(value > 0.0) {
            return Err(GeometryError::NonPositive { name, value });
        }
    }
    if !theta.is_finite() {
        return Err(GeometryError::NonFinite("theta"));
    }
    let along = sigma_r * sigma_r;
    let cross = (r * sigma_theta).powi(2);
    let (s, c) = theta.sin_cos();
    Cov2::new(
        along * c * c + cross * s * s,
        (along - cross) * c * s,
        along * s * s + cross * c * c,
    )
}

/// `π·k²·√det Σ`.
pub fn ellipse_area(e: &CovEllipse) -> f64 {
    PI * e.k * e.k * e.cov.det().sqrt()
}

/// Area of the overlap of two k-scaled ellipses.
///
/// Symmetric in its arguments bit-for-bit: the pair is put in a canonical
/// order before any arithmetic.
pub fn ellipse_intersection_area(a: &CovEllipse, b: &CovEllipse) -> f64 {
    let (a, b) = match a.total_cmp(b) {
        Ordering::Equal => return a.area(),
        Ordering::Less => (a, b),
        Ordering::Greater => (b, a),
    };
    let (area_a, area_b) = (a.area(), b.area());
    let smaller = area_a.min(area_b);
    if (a.center - b.center).norm() > a.bounding_radius() + b.bounding_radius() {
        return 0.0;
    }
    // area is translation invariant; working relative to one centre avoids
    // cancellation when both ellipses sit far from the origin
    let origin = a.center;
    let pa = BoundaryParam::new(a, origin);
    let pb = BoundaryParam::new(b, origin);
    let total = pa.area_inside(b, origin) + pb.area_inside(a, origin);
    total.clamp(0.0, smaller)
}

/// Boundary of an ellipse as `c + A·(cos t, sin t)` with `A` lower triangular.
struct BoundaryParam {
    center: Vec2,
    a11: f64,
    a21: f64,
    a22: f64,
}

impl BoundaryParam {
    fn new(e: &CovEllipse, origin: Vec2) -> Self {
        let (l11, l21, l22) = e.cov.cholesky();
        Self {
            center: e.center - origin,
            a11: e.k * l11,
            a21: e.k * l21,
            a22: e.k * l22,
        }
    }

    fn apply(&self, u: Vec2) -> Vec2 {
        Vec2::new(self.a11 * u.x, self.a21 * u.x + self.a22 * u.y)
    }

    fn det(&self) -> f64 {
        self.a11 * self.a22
    }

    /// `½ ∫ (x dy − y dx)` over the arc `t0 → t1`.
    fn arc_integral(&self, t0: f64, t1: f64) -> f64 {
        let du = Vec2::new(t1.cos() - t0.cos(), t1.sin() - t0.sin());
        0.5 * (self.det() * (t1 - t0) + self.center.cross(self.apply(du)))
    }

    /// Contribution of this boundary's arcs lying inside `other`.
    fn area_inside(&self, other: &CovEllipse, origin: Vec2) -> f64 {
        let level = LevelAlong::new(self, other, origin);
        let roots = level.roots();
        if roots.is_empty() {
            return if level.eval(0.0) < 0.0 {
                self.arc_integral(0.0, TAU)
            } else {
                0.0
            };
        }
        let n = roots.len();
        let mut sum = 0.0;
        for i in 0..n {
            let t0 = roots[i];
            let t1 = if i + 1 < n { roots[i + 1] } else { roots[0] + TAU };
            if level.eval(0.5 * (t0 + t1)) < 0.0 {
                sum += self.arc_integral(t0, t1);
            }
        }
        sum
    }
}

/// Level function of one ellipse evaluated along another's boundary.
///
/// It is a trigonometric polynomial of degree two:
/// `f(t) = c0 + c1 cos t + s1 sin t + c2 cos 2t + s2 sin 2t`.
struct LevelAlong {
    c0: f64,
    c1: f64,
    s1: f64,
    c2: f64,
    s2: f64,
    /// Bound on `|f'|`.
    lipschitz: f64,
}

impl LevelAlong {
    const SEED_INTERVALS: usize = 64;
    const MIN_WIDTH: f64 = 1e-9;

    fn new(param: &BoundaryParam, other: &CovEllipse, origin: Vec2) -> Self {
        let (ia, ib, ic) = other.cov.inverse_entries();
        let k2 = other.k * other.k;
        let (m11, m12, m22) = (ia / k2, ib / k2, ic / k2);
        let d0 = param.center - (other.center - origin);
        // M·A columns
        let (a11, a21, a22) = (param.a11, param.a21, param.a22);
        let ma_c1 = Vec2::new(m11 * a11 + m12 * a21, m12 * a11 + m22 * a21);
        let ma_c2 = Vec2::new(m12 * a22, m22 * a22);
        // N = Aᵀ M A
        let n11 = a11 * ma_c1.x + a21 * ma_c1.y;
        let n12 = a11 * ma_c2.x + a21 * ma_c2.y;
        let n22 = a22 * ma_c2.y;
        let md0 = Vec2::new(m11 * d0.x + m12 * d0.y, m12 * d0.x + m22 * d0.y);
        let c1 = 2.0 * (a11 * md0.x + a21 * md0.y);
        let s1 = 2.0 * (a22 * md0.y);
        let c0 = d0.dot(md0) + 0.5 * (n11 + n22) - 1.0;
        let c2 = 0.5 * (n11 - n22);
        let s2 = n12;
        let lipschitz = c1.hypot(s1) + 2.0 * c2.hypot(s2);
        Self { c0, c1, s1, c2, s2, lipschitz }
    }

    fn eval(&self, t: f64) -> f64 {
        let (s, c) = t.sin_cos();
        self.c0 + self.c1 * c + self.s1 * s + self.c2 * (c * c - s * s) + self.s2 * (2.0 * s * c)
    }

    /// Sign changes of `f` on `[0, 2π)`, sorted.
    fn roots(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4);
        let h = TAU / Self::SEED_INTERVALS as f64;
        let mut lo = 0.0;
        let mut flo = self.eval(lo);
        for i in 1..=Self::SEED_INTERVALS {
            let hi = if i == Self::SEED_INTERVALS { TAU } else { i as f64 * h };
            let fhi = self.eval(hi);
            self.isolate(lo, hi, flo, fhi, &mut out);
            lo = hi;
            flo = fhi;
        }
        // a crossing exactly at 2π duplicates the one at 0
        if out.len() > 1 && TAU - out[out.len() - 1] < 1e-12 && out[0] < 1e-12 {
            out.pop();
        }
        out.into_iter().map(|t| if t >= TAU { t - TAU } else { t }).collect()
    }

    fn isolate(&self, lo: f64, hi: f64, flo: f64, fhi: f64, out: &mut Vec<f64>) {
        let changes = (flo < 0.0) != (fhi < 0.0);
        let width = hi - lo;
        if !changes && flo.abs() + fhi.abs() > self.lipschitz * width {
            return;
        }
        if width < 1e-3 && changes {
            out.push(self.bisect(lo, hi, flo));
            return;
        }
        if width < Self::MIN_WIDTH {
            // tangency: the boundaries touch without crossing
            return;
        }
        let mid = 0.5 * (lo + hi);
        let fmid = self.eval(mid);
        self.isolate(lo, mid, flo, fmid, out);
        self.isolate(mid, hi, fmid, fhi, out);
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, flo: f64) -> f64 {
        let lo_inside = flo < 0.0;
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (self.eval(mid) < 0.0) == lo_inside {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}
