//! Radar measurement model and per-target Kalman tracks.
//!
//! Each radar measures range and azimuth with Gaussian noise whose standard
//! deviations follow from its resolution cells and a fixed signal-to-noise
//! ratio. Measurements are converted to Cartesian positions and fed to a
//! constant-velocity linear Kalman filter; the position block of the
//! predicted covariance is the track's uncertainty ellipse.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{polar_cov_to_cartesian, Cov2, CovEllipse, GeometryError, Vec2};
use crate::types::{Load, RadarId, TargetId};

pub const DEFAULT_SNR: f64 = 13.0;
pub const DEFAULT_RANGE_RESOLUTION: f64 = 150.0;
pub const DEFAULT_AZIMUTH_RESOLUTION: f64 = 2.0 * std::f64::consts::PI / 180.0;
pub const DEFAULT_MAX_RANGE: f64 = 60_000.0;
pub const DEFAULT_PROCESS_NOISE: f64 = 1.0;
pub const DEFAULT_MAX_SPEED: f64 = 300.0;
pub const DEFAULT_TICK_SECONDS: f64 = 1.0;
pub const DEFAULT_COAST_LIMIT: u64 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackingError {
    #[error("target at range {range:.1} m is not visible (max range {max_range:.1} m)")]
    NotVisible { range: f64, max_range: f64 },
    #[error("measurement of target {measurement} applied to track of target {track}")]
    TargetMismatch { track: TargetId, measurement: TargetId },
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("invalid radar config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    pub id: RadarId,
    pub position: Vec2,
    pub budget: Load,
    /// Δr, metres.
    pub range_resolution: f64,
    /// Δθ, radians.
    pub azimuth_resolution: f64,
    /// Linear signal-to-noise ratio.
    pub snr: f64,
    pub max_range: f64,
}

impl RadarConfig {
    pub fn new(id: RadarId, position: Vec2) -> Self {
        Self {
            id,
            position,
            budget: Load::from_units(1.0),
            range_resolution: DEFAULT_RANGE_RESOLUTION,
            azimuth_resolution: DEFAULT_AZIMUTH_RESOLUTION,
            snr: DEFAULT_SNR,
            max_range: DEFAULT_MAX_RANGE,
        }
    }

    pub fn validate(&self) -> Result<(), TrackingError> {
        let bad = |what: &str| Err(TrackingError::InvalidConfig(format!("radar {}: {what}", self.id)));
        if !self.budget.is_positive() {
            return bad("budget must be positive");
        }
        if !(self.range_resolution > 0.0 && self.azimuth_resolution > 0.0) {
            return bad("resolutions must be positive");
        }
        if !(self.snr > 0.0) {
            return bad("snr must be positive");
        }
        if !(self.max_range > 0.0) {
            return bad("max_range must be positive");
        }
        if !self.position.is_finite() {
            return bad("position must be finite");
        }
        Ok(())
    }

    pub fn range_to(&self, p: Vec2) -> f64 {
        (p - self.position).norm()
    }

    pub fn sees(&self, p: Vec2) -> bool {
        let r = self.range_to(p);
        r > 0.0 && r <= self.max_range
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarMeasurement {
    pub target: TargetId,
    pub r: f64,
    pub theta: f64,
    pub sigma_r: f64,
    pub sigma_theta: f64,
    pub tick: u64,
}

impl PolarMeasurement {
    pub fn position(&self, radar_position: Vec2) -> Vec2 {
        radar_position + Vec2::from_polar(self.r, self.theta)
    }

    pub fn cartesian_cov(&self) -> Result<Cov2, GeometryError> {
        polar_cov_to_cartesian(self.r, self.theta, self.sigma_r, self.sigma_theta)
    }
}

/// Constant-velocity motion with white-acceleration process noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    pub dt: f64,
    /// Process-noise intensity, m²/s³.
    pub q: f64,
    /// Initial velocity standard deviation per axis, m/s.
    pub max_speed: f64,
    /// Ticks a track may go without a measurement before it is dropped.
    pub coast_limit: u64,
}

impl Default for MotionModel {
    fn default() -> Self {
        Self {
            dt: DEFAULT_TICK_SECONDS,
            q: DEFAULT_PROCESS_NOISE,
            max_speed: DEFAULT_MAX_SPEED,
            coast_limit: DEFAULT_COAST_LIMIT,
        }
    }
}

/// Kalman estimate `(x, y, vx, vy)` with its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub target: TargetId,
    pub state: Vector4<f64>,
    pub cov: Matrix4<f64>,
    pub last_update_tick: u64,
}

impl TrackState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.state[0], self.state[1])
    }

    pub fn position_cov(&self) -> Result<Cov2, GeometryError> {
        Cov2::from_matrix([
            [self.cov[(0, 0)], self.cov[(0, 1)]],
            [self.cov[(1, 0)], self.cov[(1, 1)]],
        ])
    }

    pub fn position_trace(&self) -> f64 {
        self.cov[(0, 0)] + self.cov[(1, 1)]
    }
}

/// `(σ_r, σ_θ) = (Δr, Δθ) / √(2·snr)`.
pub fn measurement_noise(r: f64, cfg: &RadarConfig) -> Result<(f64, f64), TrackingError> {
    if !(r > 0.0 && r <= cfg.max_range) {
        return Err(TrackingError::NotVisible { range: r, max_range: cfg.max_range });
    }
    let k = (2.0 * cfg.snr).sqrt();
    Ok((cfg.range_resolution / k, cfg.azimuth_resolution / k))
}

/// Noisy range/azimuth of `truth` as seen from `cfg`.
pub fn synthesize_measurement<R: Rng + ?Sized>(
    cfg: &RadarConfig,
    target: TargetId,
    truth: Vec2,
    tick: u64,
    rng: &mut R,
) -> Result<PolarMeasurement, TrackingError> {
    let rel = truth - cfg.position;
    let r = rel.norm();
    let (sigma_r, sigma_theta) = measurement_noise(r, cfg)?;
    let nr: f64 = StandardNormal.sample(rng);
    let nt: f64 = StandardNormal.sample(rng);
    let theta = wrap_angle(rel.angle() + sigma_theta * nt);
    Ok(PolarMeasurement {
        target,
        r: (r + sigma_r * nr).max(f64::MIN_POSITIVE),
        theta,
        sigma_r,
        sigma_theta,
        tick,
    })
}

/// Seed of the measurement stream for one (radar, target, tick) draw.
///
/// Every draw gets its own stream so that two simulations that measure
/// different subsets of targets still see identical noise on the draws they
/// share.
pub fn measurement_seed(seed: u64, radar: RadarId, target: TargetId, tick: u64) -> u64 {
    let mut h = splitmix(seed ^ 0x5241_4441_524e_4554);
    h = splitmix(h ^ u64::from(radar.0));
    h = splitmix(h ^ u64::from(target.0).rotate_left(20));
    splitmix(h ^ tick.rotate_left(40))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}

fn transition(dt: f64) -> Matrix4<f64> {
    #[rustfmt::skip]
    let f = Matrix4::new(
        1.0, 0.0, dt,  0.0,
        0.0, 1.0, 0.0, dt,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    f
}

fn process_noise(dt: f64, q: f64) -> Matrix4<f64> {
    let (a, b, c) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt);
    #[rustfmt::skip]
    let m = Matrix4::new(
        a,   0.0, b,   0.0,
        0.0, a,   0.0, b,
        b,   0.0, c,   0.0,
        0.0, b,   0.0, c,
    );
    m * q
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

pub fn kf_predict(t: &TrackState, dt: f64, q: f64) -> Result<TrackState, TrackingError> {
    if !(dt > 0.0) {
        return Err(TrackingError::NonPositiveStep(dt));
    }
    let f = transition(dt);
    Ok(TrackState {
        target: t.target,
        state: f * t.state,
        cov: symmetrize(&(f * t.cov * f.transpose() + process_noise(dt, q))),
        last_update_tick: t.last_update_tick,
    })
}

/// Kalman update with a converted polar measurement.
pub fn kf_update(
    t: &TrackState,
    m: &PolarMeasurement,
    radar_position: Vec2,
) -> Result<TrackState, TrackingError> {
    if m.target != t.target {
        return Err(TrackingError::TargetMismatch { track: t.target, measurement: m.target });
    }
    let r = m.cartesian_cov()?;
    let mut next = kf_update_cartesian(t, m.position(radar_position), r.to_matrix());
    next.last_update_tick = m.tick;
    Ok(next)
}

/// Linear update with a Cartesian position measurement `z` of covariance `r`
/// (Joseph form).
pub fn kf_update_cartesian(t: &TrackState, z: Vec2, r: [[f64; 2]; 2]) -> TrackState {
    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    let r = Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1]);
    let s = h * t.cov * h.transpose() + r;
    let Some(s_inv) = s.try_inverse() else {
        return t.clone();
    };
    let k = t.cov * h.transpose() * s_inv;
    let innovation = Vector2::new(z.x, z.y) - h * t.state;
    let i_kh = Matrix4::identity() - k * h;
    let cov = i_kh * t.cov * i_kh.transpose() + k * r * k.transpose();
    TrackState {
        target: t.target,
        state: t.state + k * innovation,
        cov: symmetrize(&cov),
        last_update_tick: t.last_update_tick,
    }
}

/// Starts a track at the measured position, with zero velocity of standard
/// deviation `max_speed` per axis.
pub fn init_track(
    m: &PolarMeasurement,
    radar_position: Vec2,
    max_speed: f64,
) -> Result<TrackState, TrackingError> {
    let r = m.cartesian_cov()?;
    let p = m.position(radar_position);
    let v = max_speed * max_speed;
    #[rustfmt::skip]
    let cov = Matrix4::new(
        r.xx(), r.xy(), 0.0, 0.0,
        r.xy(), r.yy(), 0.0, 0.0,
        0.0,    0.0,    v,   0.0,
        0.0,    0.0,    0.0, v,
    );
    Ok(TrackState {
        target: m.target,
        state: Vector4::new(p.x, p.y, 0.0, 0.0),
        cov,
        last_update_tick: m.tick,
    })
}

/// Uncertainty ellipse of the track one step ahead.
pub fn predicted_ellipse(t: &TrackState, model: &MotionModel) -> Result<CovEllipse, TrackingError> {
    let p = kf_predict(t, model.dt, model.q)?;
    Ok(CovEllipse::new(p.position(), p.position_cov()?))
}

/// Measurement ellipse of a target freshly picked up at `position`.
pub fn acquisition_ellipse(cfg: &RadarConfig, position: Vec2) -> Result<CovEllipse, TrackingError> {
    let rel = position - cfg.position;
    let r = rel.norm();
    let (sr, st) = measurement_noise(r, cfg)?;
    Ok(CovEllipse::new(position, polar_cov_to_cartesian(r, rel.angle(), sr, st)?))
}

/// One radar's set of tracks.
///
/// A track that has gone more than `coast_limit` ticks without a measurement
/// is lost and gets re-initialised on its next measurement.
#[derive(Debug, Clone, Default)]
pub struct TrackBook {
    tracks: BTreeMap<TargetId, TrackState>,
}

impl TrackBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, target: TargetId) -> Option<&TrackState> {
        self.tracks.get(&target)
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TargetId, &TrackState)> {
        self.tracks.iter()
    }

    fn is_live(track: &TrackState, model: &MotionModel, tick: u64) -> bool {
        tick.saturating_sub(track.last_update_tick) <= model.coast_limit
    }

    /// Predicted ellipse at `tick` of a live track.
    pub fn live_prediction(&self, model: &MotionModel, target: TargetId, tick: u64) -> Option<CovEllipse> {
        let track = self.tracks.get(&target)?;
        if !Self::is_live(track, model, tick) {
            return None;
        }
        predicted_ellipse(track, model).ok()
    }

    /// Ellipse this radar would hold on a target at `truth` at `tick`: the
    /// smaller of its live track prediction and a fresh acquisition. `None`
    /// when the target is out of range.
    pub fn bid_ellipse(
        &self,
        cfg: &RadarConfig,
        model: &MotionModel,
        target: TargetId,
        truth: Vec2,
        tick: u64,
    ) -> Option<CovEllipse> {
        if !cfg.sees(truth) {
            return None;
        }
        let fresh = acquisition_ellipse(cfg, truth).ok();
        match (self.live_prediction(model, target, tick), fresh) {
            (Some(p), Some(f)) => Some(if p.area() <= f.area() { p } else { f }),
            (p, f) => p.or(f),
        }
    }

    /// Advances every live track to `tick` and folds in this tick's
    /// measurements.
    pub fn advance(
        &mut self,
        cfg: &RadarConfig,
        model: &MotionModel,
        tick: u64,
        measurements: &[PolarMeasurement],
    ) -> Result<(), TrackingError> {
        let mut next = BTreeMap::new();
        for (&target, track) in &self.tracks {
            if Self::is_live(track, model, tick) {
                next.insert(target, kf_predict(track, model.dt, model.q)?);
            }
        }
        for m in measurements {
            let updated = match next.get(&m.target) {
                Some(track) => kf_update(track, m, cfg.position)?,
                None => init_track(m, cfg.position, model.max_speed)?,
            };
            next.insert(m.target, updated);
        }
        self.tracks = next;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn radar() -> RadarConfig {
        RadarConfig::new(RadarId(1), Vec2::ZERO)
    }

    fn track(state: [f64; 4], diag: [f64; 4]) -> TrackState {
        TrackState {
            target: TargetId(7),
            state: Vector4::from(state),
            cov: Matrix4::from_diagonal(&Vector4::from(diag)),
            last_update_tick: 0,
        }
    }

    #[test]
    fn noise_from_resolution() {
        let cfg = radar();
        let (sr, _) = measurement_noise(1000.0, &RadarConfig { range_resolution: 150.0, ..cfg.clone() }).unwrap();
        assert!((sr - 150.0 / 26f64.sqrt()).abs() < 1e-12);
        assert!((sr - 29.417).abs() < 1e-3);
        let (_, st) = measurement_noise(1000.0, &RadarConfig { azimuth_resolution: 0.035, ..cfg.clone() }).unwrap();
        assert!((st - 0.006864).abs() < 1e-6);
        let (sr, st) = measurement_noise(1000.0, &RadarConfig { snr: f64::INFINITY, ..cfg.clone() }).unwrap();
        assert_eq!((sr, st), (0.0, 0.0));
        assert!(matches!(
            measurement_noise(70_000.0, &cfg),
            Err(TrackingError::NotVisible { .. })
        ));
    }

    #[test]
    fn noiseless_measurement_is_exact() {
        let cfg = RadarConfig { snr: f64::INFINITY, ..radar() };
        let truth = Vec2::new(3000.0, -4000.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = synthesize_measurement(&cfg, TargetId(1), truth, 0, &mut rng).unwrap();
        assert!((m.r - 5000.0).abs() < 1e-9);
        assert!((m.theta - (-4000f64).atan2(3000.0)).abs() < 1e-12);
    }

    #[test]
    fn measurement_is_deterministic_per_seed() {
        let cfg = radar();
        let truth = Vec2::new(12_000.0, 5_000.0);
        let draw = || {
            let seed = measurement_seed(42, cfg.id, TargetId(3), 17);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            synthesize_measurement(&cfg, TargetId(3), truth, 17, &mut rng).unwrap()
        };
        let (a, b) = (draw(), draw());
        assert_eq!(a.r.to_bits(), b.r.to_bits());
        assert_eq!(a.theta.to_bits(), b.theta.to_bits());
        assert!(synthesize_measurement(&cfg, TargetId(3), Vec2::new(1e6, 0.0), 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn range_noise_statistics() {
        let cfg = radar();
        let truth = Vec2::new(20_000.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let rs: Vec<f64> = (0..n)
            .map(|_| synthesize_measurement(&cfg, TargetId(0), truth, 0, &mut rng).unwrap().r)
            .collect();
        let mean = rs.iter().sum::<f64>() / n as f64;
        let var = rs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let (sr, _) = measurement_noise(20_000.0, &cfg).unwrap();
        assert!((var.sqrt() / sr - 1.0).abs() < 0.05);
    }

    #[test]
    fn predict_examples() {
        let t = track([0.0, 0.0, 1.0, 0.0], [0.0; 4]);
        let p = kf_predict(&t, 1.0, 0.0).unwrap();
        assert_eq!(p.state, Vector4::new(1.0, 0.0, 1.0, 0.0));
        assert!(matches!(kf_predict(&t, 0.0, 1.0), Err(TrackingError::NonPositiveStep(_))));

        let t = track([0.0; 4], [1.0; 4]);
        let p = kf_predict(&t, 1.0, 0.0).unwrap();
        assert!((p.cov[(0, 0)] - 2.0).abs() < 1e-12 && (p.cov[(1, 1)] - 2.0).abs() < 1e-12);

        let q = kf_predict(&t, 1.0, 1.0).unwrap();
        assert!(q.cov.trace() > p.cov.trace());
    }

    #[test]
    fn update_examples() {
        let t = track([10.0, 20.0, 0.0, 0.0], [100.0, 100.0, 10.0, 10.0]);
        let u = kf_update_cartesian(&t, Vec2::new(10.0, 20.0), [[100.0, 0.0], [0.0, 100.0]]);
        assert!((u.cov[(0, 0)] - 50.0).abs() < 1e-9 && (u.cov[(1, 1)] - 50.0).abs() < 1e-9);

        let z = Vec2::new(55.0, -5.0);
        let u = kf_update_cartesian(&t, z, [[1e30, 0.0], [0.0, 1e30]]);
        assert!((u.state - t.state).norm() < 1e-12);
        assert!((u.cov - t.cov).norm() < 1e-9);

        let u = kf_update_cartesian(&t, z, [[1e-12, 0.0], [0.0, 1e-12]]);
        assert!((u.state[0] - z.x).abs() < 1e-9 && (u.state[1] - z.y).abs() < 1e-9);
    }

    #[test]
    fn update_rejects_other_target() {
        let t = track([0.0; 4], [1.0; 4]);
        let m = PolarMeasurement { target: TargetId(8), r: 10.0, theta: 0.0, sigma_r: 1.0, sigma_theta: 0.1, tick: 0 };
        assert!(matches!(kf_update(&t, &m, Vec2::ZERO), Err(TrackingError::TargetMismatch { .. })));
    }

    #[test]
    fn ellipse_shrinks_after_update() {
        let cfg = radar();
        let model = MotionModel::default();
        let truth = Vec2::new(15_000.0, 8_000.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m0 = synthesize_measurement(&cfg, TargetId(0), truth, 0, &mut rng).unwrap();
        let t0 = init_track(&m0, cfg.position, model.max_speed).unwrap();
        let prior = predicted_ellipse(&t0, &model).unwrap();
        let t1 = kf_predict(&t0, model.dt, model.q).unwrap();
        let m1 = synthesize_measurement(&cfg, TargetId(0), truth, 1, &mut rng).unwrap();
        let t1u = kf_update(&t1, &m1, cfg.position).unwrap();
        let after = CovEllipse::new(t1u.position(), t1u.position_cov().unwrap());
        let before = CovEllipse::new(t1.position(), t1.position_cov().unwrap());
        assert!(after.area() < before.area());
        assert_eq!(prior, predicted_ellipse(&t0, &model).unwrap());
    }

    #[test]
    fn identity_block_gives_unit_circle() {
        let t = track([5.0, 6.0, 1.0, -1.0], [1.0, 1.0, 0.0, 0.0]);
        let model = MotionModel { dt: 1.0, q: 0.0, ..MotionModel::default() };
        let e = predicted_ellipse(&t, &model).unwrap();
        assert_eq!(e.center, Vec2::new(6.0, 5.0));
        assert!((e.area() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn trackbook_initialises_then_updates() {
        let cfg = radar();
        let model = MotionModel::default();
        let mut book = TrackBook::new();
        let truth = Vec2::new(30_000.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut areas = Vec::new();
        for tick in 0..20 {
            areas.push(book.bid_ellipse(&cfg, &model, TargetId(1), truth, tick).unwrap().area());
            let m = synthesize_measurement(&cfg, TargetId(1), truth, tick, &mut rng).unwrap();
            book.advance(&cfg, &model, tick, &[m]).unwrap();
        }
        assert_eq!(book.len(), 1);
        assert!(areas.last().unwrap() < &areas[0]);
        // no more measurements: the track decays and is eventually dropped
        for tick in 20..20 + model.coast_limit {
            book.advance(&cfg, &model, tick, &[]).unwrap();
            assert_eq!(book.len(), 1);
        }
        book.advance(&cfg, &model, 20 + model.coast_limit, &[]).unwrap();
        assert!(book.is_empty());
        assert!(book.bid_ellipse(&cfg, &model, TargetId(1), Vec2::new(0.0, 90_000.0), 40).is_none());
    }
}
