use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can return exactly 2π for tiny negative inputs
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// One knot of an intrinsic curve description.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    /// Arc length, m.
    pub s: f64,
    /// Curvature, 1/m.
    pub kappa: f64,
    /// Bend direction in the fiber-fixed frame, rad.
    pub theta: f64,
    /// Material twist rate, 1/m.
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    PiecewiseConstant,
    Linear,
}

/// Local bend state of the fiber at one arc position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bend {
    pub kappa: f64,
    pub theta: f64,
    pub tau: f64,
}

#[derive(Deserialize)]
struct RawProfile {
    samples: Vec<ProfileSample>,
    length: f64,
    interpolation: Interpolation,
}

/// Curvature, bend direction and twist along the fiber, `κ(s), θ(s), τ(s)`.
///
/// Values between knots follow `interpolation`; outside the knot range the
/// nearest knot governs. Angles interpolate along the shorter arc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct CurvatureProfile {
    samples: Vec<ProfileSample>,
    length: f64,
    interpolation: Interpolation,
}

impl TryFrom<RawProfile> for CurvatureProfile {
    type Error = Error;

    fn try_from(raw: RawProfile) -> Result<Self> {
        CurvatureProfile::new(raw.samples, raw.length, raw.interpolation)
    }
}

impl CurvatureProfile {
    pub fn new(
        samples: Vec<ProfileSample>,
        length: f64,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid(format!("profile length must be positive, got {length}")));
        }
        if samples.is_empty() {
            return Err(invalid("profile needs at least one sample"));
        }
        for (i, p) in samples.iter().enumerate() {
            if !(p.s.is_finite() && p.kappa.is_finite() && p.theta.is_finite() && p.tau.is_finite())
            {
                return Err(invalid(format!("non-finite profile value at sample {i}")));
            }
            if p.s < 0.0 || p.s > length {
                return Err(invalid(format!("sample {i} at s={} outside [0, {length}]", p.s)));
            }
            if p.kappa < 0.0 {
                return Err(invalid(format!("negative curvature at sample {i}")));
            }
            if !(-PI..PI).contains(&p.theta) {
                return Err(invalid(format!("theta at sample {i} outside [-pi, pi)")));
            }
            if i > 0 && p.s <= samples[i - 1].s {
                return Err(invalid("sample arc positions must be strictly increasing"));
            }
        }
        Ok(Self { samples, length, interpolation })
    }

    /// Constant curvature, direction and twist over `[0, length]`.
    pub fn constant(kappa: f64, theta: f64, tau: f64, length: f64) -> Result<Self> {
        Self::new(
            vec![ProfileSample { s: 0.0, kappa, theta: wrap_angle(theta), tau }],
            length,
            Interpolation::PiecewiseConstant,
        )
    }

    pub fn straight(length: f64) -> Result<Self> {
        Self::constant(0.0, 0.0, 0.0, length)
    }

    pub fn samples(&self) -> &[ProfileSample] {
        &self.samples
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Index of the last knot with `s_i <= s` (0 if `s` precedes every knot).
    fn knot_before(&self, s: f64) -> usize {
        self.samples.partition_point(|p| p.s <= s).saturating_sub(1)
    }

    pub fn at(&self, s: f64) -> Bend {
        let i = self.knot_before(s);
        let a = self.samples[i];
        let at_knot = Bend { kappa: a.kappa, theta: a.theta, tau: a.tau };
        match self.interpolation {
            Interpolation::PiecewiseConstant => at_knot,
            Interpolation::Linear => {
                if s <= a.s || i + 1 == self.samples.len() {
                    return at_knot;
                }
                let b = self.samples[i + 1];
                let w = (s - a.s) / (b.s - a.s);
                let dtheta = wrap_angle(b.theta - a.theta);
                Bend {
                    kappa: a.kappa + w * (b.kappa - a.kappa),
                    theta: wrap_angle(a.theta + w * dtheta),
                    tau: a.tau + w * (b.tau - a.tau),
                }
            }
        }
    }

    /// Integral of `f(bend)` over `[a, b]`.
    ///
    /// Composite Simpson on each inter-knot piece, so kinks and jumps at the
    /// knots never fall inside a panel.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(Bend) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut breaks = vec![a];
        breaks.extend(self.samples.iter().map(|p| p.s).filter(|&s| s > a && s < b));
        breaks.push(b);
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let panels = (((hi - lo) / 5e-4).ceil() as usize).clamp(1, 4096) * 2;
            let h = (hi - lo) / panels as f64;
            // evaluate just inside the piece so a jump at `lo` takes the right side
            let eval = |s: f64| f(self.at(s.clamp(lo + 1e-12 * (hi - lo), hi - 1e-12 * (hi - lo))));
            let mut acc = eval(lo) + eval(hi);
            for k in 1..panels {
                let weight = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += weight * eval(lo + k as f64 * h);
            }
            total += acc * h / 3.0;
        }
        total
    }

    /// Largest curvature over the knots (exact for both interpolation modes).
    pub fn max_kappa(&self) -> f64 {
        self.samples.iter().map(|p| p.kappa).fold(0.0, f64::max)
    }

    pub fn min_kappa(&self) -> f64 {
        self.samples.iter().map(|p| p.kappa).fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.samples
            .iter()
            .all(|p| p.s.is_finite() && p.kappa.is_finite() && p.theta.is_finite() && p.tau.is_finite())
    }
}
