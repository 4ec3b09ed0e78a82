use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::layout::SensorLayout;
use crate::error::{invalid, Result};
use crate::geometry::{wrap_angle, CurvatureProfile, Interpolation, ProfileSample};

/// Width of the cosine ramps at the ends of a template bend, m.
pub const TEMPLATE_RAMP: f64 = 0.005;
const TEMPLATE_KNOT_SPACING: f64 = 5e-4;

/// Manipulation-session model behind the random dataset kind: the shape
/// alternates between holds, where it only jitters around a fixed pose, and
/// moves, where it drifts as a first-order autoregressive walk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    /// Mean hold duration, samples; actual durations are uniform in [0.5, 1.5] x mean.
    pub mean_hold: usize,
    pub mean_move: usize,
    /// Per-sample retention of the walk while moving.
    pub move_correlation: f64,
    /// Standard deviation of the coefficient jitter during a hold.
    pub hold_jitter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSamplerConfig {
    /// Curvature bounds, 1/m.
    pub kappa_range: [f64; 2],
    /// Number of smooth basis functions for κ(s) and for θ(s).
    pub n_modes: usize,
    /// Per-step retention of trajectory walks, in [0, 1).
    pub trajectory_correlation: f64,
    /// Profile length, m.
    pub length: f64,
    pub knot_spacing: f64,
    /// Center and spread of the logit that maps the basis sum into `kappa_range`.
    pub logit_bias: f64,
    pub logit_spread: f64,
    /// Spread of the bend-direction variation along the fiber, rad.
    pub theta_spread: f64,
    /// Spread of a per-shape logit offset: how much overall bend amplitude
    /// varies between poses.
    pub amplitude_spread: f64,
    pub session: SessionConfig,
}

impl Default for ShapeSamplerConfig {
    fn default() -> Self {
        Self {
            kappa_range: [0.58, 33.5],
            n_modes: 8,
            trajectory_correlation: 0.99,
            length: 0.30,
            knot_spacing: 0.002,
            logit_bias: -0.5,
            logit_spread: 2.5,
            theta_spread: 1.0,
            amplitude_spread: 1.5,
            session: SessionConfig { mean_hold: 120, mean_move: 120, move_correlation: 0.97, hold_jitter: 0.02 },
        }
    }
}

impl ShapeSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.kappa_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(invalid("kappa_range must be positive with min < max"));
        }
        if self.n_modes == 0 {
            return Err(invalid("n_modes must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.trajectory_correlation) || !(0.0..1.0).contains(&self.session.move_correlation) {
            return Err(invalid("retention factors must lie in [0, 1)"));
        }
        if !(self.length > 0.0 && self.knot_spacing > 0.0 && self.knot_spacing <= self.length / 4.0) {
            return Err(invalid("length and knot spacing must be positive, spacing at most length/4"));
        }
        if !(self.logit_spread >= 0.0 && self.theta_spread >= 0.0 && self.amplitude_spread >= 0.0 && self.session.hold_jitter >= 0.0) {
            return Err(invalid("spreads must be non-negative"));
        }
        if self.session.mean_hold == 0 || self.session.mean_move == 0 {
            return Err(invalid("session durations must be positive"));
        }
        Ok(())
    }
}

/// Standard-normal basis coefficients describing one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeCoefficients {
    pub kappa: Vec<f64>,
    pub theta: Vec<f64>,
    /// 2D Gaussian whose angle sets the base bend direction.
    pub direction: [f64; 2],
    /// Overall amplitude offset.
    pub amplitude: f64,
}

impl ShapeCoefficients {
    pub fn draw(n_modes: usize, rng: &mut impl Rng) -> Self {
        let mut normal = || rng.sample::<f64, _>(StandardNormal);
        let kappa = (0..n_modes).map(|_| normal()).collect();
        let theta = (0..n_modes).map(|_| normal()).collect();
        let direction = [normal(), normal()];
        let amplitude = normal();
        Self { kappa, theta, direction, amplitude }
    }

    /// `retention * self + sqrt(1 - retention²) * fresh`, elementwise.
    pub fn blend(&self, fresh: &Self, retention: f64) -> Self {
        let keep = (1.0 - retention * retention).sqrt();
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| retention * x + keep * y).collect();
        Self {
            kappa: mix(&self.kappa, &fresh.kappa),
            theta: mix(&self.theta, &fresh.theta),
            direction: [
                retention * self.direction[0] + keep * fresh.direction[0],
                retention * self.direction[1] + keep * fresh.direction[1],
            ],
            amplitude: retention * self.amplitude + keep * fresh.amplitude,
        }
    }

    /// `self + scale * noise`, elementwise.
    pub fn jitter(&self, noise: &Self, scale: f64) -> Self {
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + scale * y).collect();
        Self {
            kappa: add(&self.kappa, &noise.kappa),
            theta: add(&self.theta, &noise.theta),
            direction: [self.direction[0] + scale * noise.direction[0], self.direction[1] + scale * noise.direction[1]],
            amplitude: self.amplitude + scale * noise.amplitude,
        }
    }

    /// Curvature profile encoded by these coefficients.
    ///
    /// `κ(s) = κ_min (κ_max/κ_min)^σ(g(s))` with `g` a cosine series and `σ`
    /// the logistic function, so κ stays strictly inside the range;
    /// `θ(s)` is the base direction plus a sine series. Torsion is zero; twist
    /// enters through θ.
    pub fn to_profile(&self, cfg: &ShapeSamplerConfig) -> Result<CurvatureProfile> {
        let [lo, hi] = cfg.kappa_range;
        let ratio = hi / lo;
        let n = self.kappa.len();
        let kappa_norm = ((n as f64 + 1.0) / 2.0).sqrt();
        let theta_norm = (n as f64 / 2.0).sqrt();
        let theta0 = self.direction[1].atan2(self.direction[0]);
        let knots = (cfg.length / cfg.knot_spacing).round() as usize;
        let samples = (0..=knots)
            .map(|j| {
                let s = cfg.length * j as f64 / knots as f64;
                let x = PI * s / cfg.length;
                let g = self.kappa.iter().enumerate().map(|(k, z)| z * (k as f64 * x).cos()).sum::<f64>();
                let logit = cfg.logit_bias + cfg.amplitude_spread * self.amplitude + cfg.logit_spread * g / kappa_norm;
                let kappa = lo * ratio.powf(1.0 / (1.0 + (-logit).exp()));
                let h = self.theta.iter().enumerate().map(|(k, z)| z * ((k + 1) as f64 * x).sin()).sum::<f64>();
                let theta = wrap_angle(theta0 + cfg.theta_spread * h / theta_norm);
                ProfileSample { s, kappa: kappa.clamp(lo, hi), theta, tau: 0.0 }
            })
            .collect();
        CurvatureProfile::new(samples, cfg.length, Interpolation::Linear)
    }
}

pub fn sample_random_shape(cfg: &ShapeSamplerConfig, rng: &mut impl Rng) -> Result<CurvatureProfile> {
    ShapeCoefficients::draw(cfg.n_modes, rng).to_profile(cfg)
}

/// A continuous movement: AR(1) walk on the basis coefficients with retention
/// `cfg.trajectory_correlation`.
pub fn sample_trajectory(cfg: &ShapeSamplerConfig, steps: usize, rng: &mut impl Rng) -> Result<Vec<CurvatureProfile>> {
    if steps == 0 {
        return Err(invalid("trajectory needs at least one step"));
    }
    trajectory_coefficients(cfg, steps, rng).iter().map(|c| c.to_profile(cfg)).collect()
}

pub fn trajectory_coefficients(cfg: &ShapeSamplerConfig, steps: usize, rng: &mut impl Rng) -> Vec<ShapeCoefficients> {
    let mut out: Vec<ShapeCoefficients> = Vec::with_capacity(steps);
    for _ in 0..steps {
        let fresh = ShapeCoefficients::draw(cfg.n_modes, rng);
        let next = match out.last() {
            Some(prev) => prev.blend(&fresh, cfg.trajectory_correlation),
            None => fresh,
        };
        out.push(next);
    }
    out
}

/// Coefficients of a manipulation session of `steps` samples, with the hold
/// index of each sample (`None` while moving).
pub fn session_coefficients(
    cfg: &ShapeSamplerConfig,
    steps: usize,
    rng: &mut impl Rng,
) -> Vec<(ShapeCoefficients, Option<u32>)> {
    let sc = &cfg.session;
    let duration = |mean: usize, rng: &mut dyn rand::RngCore| {
        let lo = (mean / 2).max(1);
        rng.random_range(lo..=lo + mean)
    };
    let mut out = Vec::with_capacity(steps);
    let mut pose = ShapeCoefficients::draw(cfg.n_modes, rng);
    let mut hold_id = 0u32;
    while out.len() < steps {
        let hold = duration(sc.mean_hold, rng);
        for _ in 0..hold.min(steps - out.len()) {
            let noise = ShapeCoefficients::draw(cfg.n_modes, rng);
            out.push((pose.jitter(&noise, sc.hold_jitter), Some(hold_id)));
        }
        hold_id += 1;
        let moving = duration(sc.mean_move, rng);
        for _ in 0..moving.min(steps - out.len()) {
            let fresh = ShapeCoefficients::draw(cfg.n_modes, rng);
            pose = pose.blend(&fresh, sc.move_correlation);
            out.push((pose.clone(), None));
        }
    }
    out
}

/// A single localized bend of radius `bend_radius` on `[a, b]` with constant
/// direction `theta`, cosine-ramped over `TEMPLATE_RAMP` at each end (halved
/// when the segment is shorter than two ramps).
pub fn template_shape(segment: [f64; 2], bend_radius: f64, theta: f64, layout: &SensorLayout) -> Result<CurvatureProfile> {
    let [a, b] = segment;
    if !(0.0 <= a && a < b && b <= layout.length) {
        return Err(invalid(format!("segment [{a}, {b}] not inside [0, {}]", layout.length)));
    }
    if b - a < TEMPLATE_RAMP {
        return Err(invalid(format!("segment shorter than the {TEMPLATE_RAMP} m ramp")));
    }
    if !(bend_radius > 0.0) {
        return Err(invalid("bend radius must be positive"));
    }
    let kappa = 1.0 / bend_radius;
    let ramp = TEMPLATE_RAMP.min(0.5 * (b - a));
    let theta = wrap_angle(theta);
    let knots = (layout.length / TEMPLATE_KNOT_SPACING).round() as usize;
    let samples = (0..=knots)
        .map(|j| {
            let s = layout.length * j as f64 / knots as f64;
            let w = if s <= a || s >= b {
                0.0
            } else if s < a + ramp {
                0.5 * (1.0 - (PI * (s - a) / ramp).cos())
            } else if s > b - ramp {
                0.5 * (1.0 - (PI * (b - s) / ramp).cos())
            } else {
                1.0
            };
            ProfileSample { s, kappa: kappa * w, theta, tau: 0.0 }
        })
        .collect();
    CurvatureProfile::new(samples, layout.length, Interpolation::Linear)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::default_layout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_shapes_respect_kappa_range() {
        let cfg = ShapeSamplerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for _ in 0..1000 {
            let p = sample_random_shape(&cfg, &mut rng).unwrap();
            lo = lo.min(p.min_kappa());
            hi = hi.max(p.max_kappa());
        }
        assert!(lo >= 0.58 && hi <= 33.5, "range [{lo}, {hi}]");
    }

    #[test]
    fn random_shapes_are_deterministic_and_spread() {
        let cfg = ShapeSamplerConfig::default();
        let a = sample_random_shape(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_random_shape(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        let c = sample_random_shape(&cfg, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let diff = a
            .samples()
            .iter()
            .zip(c.samples())
            .map(|(x, y)| (x.kappa - y.kappa).abs())
            .fold(0.0, f64::max);
        assert!(diff > 0.1);
    }

    #[test]
    fn zero_retention_trajectory_equals_random_draws() {
        let cfg = ShapeSamplerConfig { trajectory_correlation: 0.0, ..Default::default() };
        let traj = sample_trajectory(&cfg, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in traj {
            assert_eq!(p, sample_random_shape(&cfg, &mut rng).unwrap());
        }
    }

    #[test]
    fn single_step_trajectory() {
        let cfg = ShapeSamplerConfig::default();
        assert_eq!(sample_trajectory(&cfg, 1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap().len(), 1);
        assert!(sample_trajectory(&cfg, 0, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
    }

    #[test]
    fn session_has_holds_and_moves() {
        let cfg = ShapeSamplerConfig::default();
        let s = session_coefficients(&cfg, 1000, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(s.len(), 1000);
        assert!(s.iter().any(|x| x.1.is_some()) && s.iter().any(|x| x.1.is_none()));
    }

    #[test]
    fn template_between_planes() {
        let l = default_layout();
        let p = template_shape([0.16, 0.19], 0.05, 0.3, &l).unwrap();
        for &s in &l.plane_positions {
            assert_eq!(p.at(s).kappa, 0.0);
        }
        assert!((p.at(0.175).kappa - 20.0).abs() < 1e-12);
        assert!((p.at(0.175).theta - 0.3).abs() < 1e-12);
        let ramp = p.at(0.1625).kappa;
        assert!(ramp > 0.0 && ramp < 20.0);
    }

    #[test]
    fn template_after_last_plane() {
        let l = default_layout();
        let p = template_shape([0.26, 0.29], 0.05, 0.0, &l).unwrap();
        assert!(l.plane_positions.iter().all(|&s| p.at(s).kappa == 0.0));
        assert!(p.max_kappa() > 19.9);
    }

    #[test]
    fn template_infinite_radius_is_straight() {
        let l = default_layout();
        let p = template_shape([0.11, 0.14], f64::INFINITY, 0.0, &l).unwrap();
        assert_eq!(p.max_kappa(), 0.0);
    }

    #[test]
    fn template_errors() {
        let l = default_layout();
        assert!(template_shape([0.16, 0.163], 0.05, 0.0, &l).is_err());
        assert!(template_shape([0.2, 0.1], 0.05, 0.0, &l).is_err());
        assert!(template_shape([0.2, 0.31], 0.05, 0.0, &l).is_err());
    }
}
