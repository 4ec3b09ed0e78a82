use serde::{Deserialize, Serialize};

use super::profile::CurvatureProfile;
use super::Vec3;
use crate::error::{invalid, Result};

/// Orthonormal triad carried along a curve.
///
/// `normal` and `binormal` span the fiber cross-section: they are the
/// material directions at bend angle 0 and π/2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub tangent: Vec3,
    pub normal: Vec3,
    pub binormal: Vec3,
}

impl Frame {
    /// Base frame: tangent +x, normal +y, binormal +z.
    pub fn base() -> Self {
        Self { tangent: Vec3::x(), normal: Vec3::y(), binormal: Vec3::z() }
    }

    /// Gram-Schmidt on (tangent, normal), binormal completed by cross product.
    pub fn orthonormalized(self) -> Self {
        let t = self.tangent.normalize();
        let n = (self.normal - t * t.dot(&self.normal)).normalize();
        Self { tangent: t, normal: n, binormal: t.cross(&n) }
    }

    pub fn orthonormality_error(&self) -> f64 {
        let (t, n, b) = (self.tangent, self.normal, self.binormal);
        [
            (t.norm() - 1.0).abs(),
            (n.norm() - 1.0).abs(),
            (b.norm() - 1.0).abs(),
            t.dot(&n).abs(),
            t.dot(&b).abs(),
            n.dot(&b).abs(),
            (t.cross(&n) - b).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// A centerline sampled at uniform arc-length spacing (positions in m).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcLengthCurve {
    pub step: f64,
    pub points: Vec<Vec3>,
    pub frames: Option<Vec<Frame>>,
}

impl ArcLengthCurve {
    /// Arc length spanned by the samples.
    pub fn length(&self) -> f64 {
        self.points.len().saturating_sub(1) as f64 * self.step
    }

    pub fn tip(&self) -> Vec3 {
        *self.points.last().expect("curve has points")
    }

    /// Position at arc length `s`, linear between samples, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Vec3 {
        let last = self.points.len() - 1;
        let x = (s / self.step).clamp(0.0, last as f64);
        let i = (x.floor() as usize).min(last);
        if i == last {
            return self.points[last];
        }
        let w = x - i as f64;
        self.points[i] * (1.0 - w) + self.points[i + 1] * w
    }
}

/// Number of uniform steps covering `length`; tolerant to `0.3 / 1e-4` style rounding.
pub(crate) fn step_count(length: f64, step: f64) -> usize {
    (length / step + 1e-9).floor() as usize
}

#[derive(Clone, Copy)]
struct State {
    x: Vec3,
    t: Vec3,
    u: Vec3,
    v: Vec3,
    twist: f64,
}

impl State {
    fn axpy(&self, h: f64, d: &State) -> State {
        State {
            x: self.x + d.x * h,
            t: self.t + d.t * h,
            u: self.u + d.u * h,
            v: self.v + d.v * h,
            twist: self.twist + d.twist * h,
        }
    }
}

/// Largest frame rotation per RK4 step, rad.
const MAX_TURN: f64 = 0.05;

fn derivative(profile: &CurvatureProfile, s: f64, y: &State) -> State {
    let bend = profile.at(s);
    // bend direction in the transported frame = material angle + accumulated twist
    let alpha = bend.theta + y.twist;
    let (k1, k2) = (bend.kappa * alpha.cos(), bend.kappa * alpha.sin());
    State {
        x: y.t,
        t: y.u * k1 + y.v * k2,
        u: -y.t * k1,
        v: -y.t * k2,
        twist: bend.tau,
    }
}

/// Integrates an intrinsic profile into a 3D centerline.
///
/// The frame ODE is solved with fixed-step RK4 in a rotation-minimizing frame
/// `(t, u, v)`: `t' = κ(cos α u + sin α v)`, `u' = -κ cos α t`,
/// `v' = -κ sin α t`, where `α = θ + ∫τ`. The triad is re-orthonormalized
/// after every step. The returned frames are the fiber-fixed material frame,
/// i.e. the transported frame rotated by the accumulated twist.
pub fn integrate_frenet(profile: &CurvatureProfile, step: f64) -> Result<ArcLengthCurve> {
    let length = profile.length();
    if !(step.is_finite() && step > 0.0) {
        return Err(invalid(format!("step must be positive, got {step}")));
    }
    if step > length / 10.0 + 1e-15 {
        return Err(invalid(format!("step {step} exceeds length/10 = {}", length / 10.0)));
    }
    if !profile.is_finite() {
        return Err(invalid("profile contains non-finite values"));
    }

    let n = step_count(length, step);
    let base = Frame::base();
    let mut y = State { x: Vec3::zeros(), t: base.tangent, u: base.normal, v: base.binormal, twist: 0.0 };
    let mut points = Vec::with_capacity(n + 1);
    let mut frames = Vec::with_capacity(n + 1);
    let material = |y: &State| {
        let (c, s) = (y.twist.cos(), y.twist.sin());
        Frame { tangent: y.t, normal: y.u * c + y.v * s, binormal: -y.u * s + y.v * c }
    };
    points.push(y.x);
    frames.push(material(&y));

    for i in 0..n {
        let s0 = i as f64 * step;
        // sharp bends get sub-steps so the turn per RK4 step stays small
        let kmax = profile.at(s0).kappa.max(profile.at(s0 + step).kappa);
        let sub = ((kmax * step / MAX_TURN).ceil() as usize).max(1);
        let h = step / sub as f64;
        for j in 0..sub {
            let s = s0 + j as f64 * h;
            let k1 = derivative(profile, s, &y);
            let k2 = derivative(profile, s + 0.5 * h, &y.axpy(0.5 * h, &k1));
            let k3 = derivative(profile, s + 0.5 * h, &y.axpy(0.5 * h, &k2));
            let k4 = derivative(profile, s + h, &y.axpy(h, &k3));
            let w = h / 6.0;
            y = State {
                x: y.x + (k1.x + k2.x * 2.0 + k3.x * 2.0 + k4.x) * w,
                t: y.t + (k1.t + k2.t * 2.0 + k3.t * 2.0 + k4.t) * w,
                u: y.u + (k1.u + k2.u * 2.0 + k3.u * 2.0 + k4.u) * w,
                v: y.v + (k1.v + k2.v * 2.0 + k3.v * 2.0 + k4.v) * w,
                twist: y.twist + (k1.twist + 2.0 * k2.twist + 2.0 * k3.twist + k4.twist) * w,
            };
            let f = Frame { tangent: y.t, normal: y.u, binormal: y.v }.orthonormalized();
            y.t = f.tangent;
            y.u = f.normal;
            y.v = f.binormal;
        }
        points.push(y.x);
        frames.push(material(&y));
    }

    Ok(ArcLengthCurve { step, points, frames: Some(frames) })
}
