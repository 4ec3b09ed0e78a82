use super::curve::{ArcLengthCurve, Frame};
use super::profile::wrap_angle;
use super::Vec3;
use crate::error::{Error, Result};

/// Below this curvature (1/m) a point counts as straight: torsion and bend
/// direction are reported as 0.
pub const KAPPA_STRAIGHT_EPS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureEstimate {
    pub kappa: f64,
    pub tau: f64,
    /// Bend direction relative to the curve's material (or transported) frame.
    pub theta: f64,
}

/// Finite-difference curvature/torsion estimator over a uniformly sampled curve.
///
/// Bend directions are measured in the curve's own frames when it carries
/// them, otherwise in a rotation-minimizing frame transported from the first
/// point (double-reflection method) with the initial normal taken as the
/// projection of +y.
pub struct CurveAnalyzer<'a> {
    curve: &'a ArcLengthCurve,
    frames: Vec<Frame>,
}

impl<'a> CurveAnalyzer<'a> {
    pub fn new(curve: &'a ArcLengthCurve) -> Result<Self> {
        if curve.points.len() < 5 {
            return Err(Error::InvalidInput("curve needs at least 5 points".into()));
        }
        let frames = match &curve.frames {
            Some(f) => f.clone(),
            None => transported_frames(&curve.points),
        };
        Ok(Self { curve, frames })
    }

    pub fn valid_range(&self) -> (f64, f64) {
        let h = self.curve.step;
        (2.0 * h, self.curve.length() - 2.0 * h)
    }

    pub fn estimate(&self, s_query: f64) -> Result<CurvatureEstimate> {
        let (lo, hi) = self.valid_range();
        let slack = 1e-9 * self.curve.step;
        if !(s_query >= lo - slack && s_query <= hi + slack) {
            return Err(Error::OutOfRange { value: s_query, min: lo, max: hi });
        }
        let h = self.curve.step;
        let p = &self.curve.points;
        let i = ((s_query / h).round() as usize).clamp(2, p.len() - 3);

        let d1 = (p[i + 1] - p[i - 1]) / (2.0 * h);
        let d2 = (p[i + 1] - p[i] * 2.0 + p[i - 1]) / (h * h);
        let d3 = (p[i + 2] - p[i + 1] * 2.0 + p[i - 1] * 2.0 - p[i - 2]) / (2.0 * h * h * h);
        let cross = d1.cross(&d2);
        let speed = d1.norm();
        let kappa = cross.norm() / (speed * speed * speed);
        if kappa < KAPPA_STRAIGHT_EPS {
            return Ok(CurvatureEstimate { kappa, tau: 0.0, theta: 0.0 });
        }
        let tau = cross.dot(&d3) / cross.norm_squared();

        let t = d1 / speed;
        let normal = (d2 - t * t.dot(&d2)).normalize();
        let frame = &self.frames[i];
        let theta = wrap_angle(normal.dot(&frame.binormal).atan2(normal.dot(&frame.normal)));
        Ok(CurvatureEstimate { kappa, tau, theta })
    }
}

/// Curvature, torsion and bend direction at arc length `s_query`.
///
/// Uses central stencils, so `s_query` must lie in `[2 step, length - 2 step]`.
pub fn estimate_curvature_torsion(curve: &ArcLengthCurve, s_query: f64) -> Result<CurvatureEstimate> {
    CurveAnalyzer::new(curve)?.estimate(s_query)
}

fn tangents(points: &[Vec3]) -> Vec<Vec3> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let d = if i == 0 {
                points[1] * 4.0 - points[0] * 3.0 - points[2]
            } else if i == n - 1 {
                points[n - 1] * 3.0 - points[n - 2] * 4.0 + points[n - 3]
            } else {
                points[i + 1] - points[i - 1]
            };
            d.normalize()
        })
        .collect()
}

/// Rotation-minimizing frames along a polyline by double reflection.
pub fn transported_frames(points: &[Vec3]) -> Vec<Frame> {
    let t = tangents(points);
    let mut r = Vec3::y() - t[0] * t[0].dot(&Vec3::y());
    if r.norm() < 1e-6 {
        r = Vec3::z() - t[0] * t[0].dot(&Vec3::z());
    }
    let mut r = r.normalize();
    let mut frames = Vec::with_capacity(points.len());
    frames.push(Frame { tangent: t[0], normal: r, binormal: t[0].cross(&r) });
    for i in 0..points.len() - 1 {
        let v1 = points[i + 1] - points[i];
        let c1 = v1.norm_squared();
        let r_l = r - v1 * (2.0 / c1 * v1.dot(&r));
        let t_l = t[i] - v1 * (2.0 / c1 * v1.dot(&t[i]));
        let v2 = t[i + 1] - t_l;
        let c2 = v2.norm_squared();
        r = if c2 > 0.0 { r_l - v2 * (2.0 / c2 * v2.dot(&r_l)) } else { r_l };
        // keep exactly orthonormal against the finite-difference tangent
        r = (r - t[i + 1] * t[i + 1].dot(&r)).normalize();
        frames.push(Frame { tangent: t[i + 1], normal: r, binormal: t[i + 1].cross(&r) });
    }
    frames
}
