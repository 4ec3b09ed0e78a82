use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::curve::{integrate_frenet, ArcLengthCurve};
use super::profile::{wrap_angle, CurvatureProfile, Interpolation, ProfileSample};
use super::Vec3;
use crate::error::{invalid, Result};

/// Number of tracked markers along the sensor.
pub const MARKER_COUNT: usize = 20;

/// Curvature and bend direction read at one sensing plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneReading {
    /// Arc position, m.
    pub s: f64,
    pub kappa: f64,
    pub theta: f64,
}

impl PlaneReading {
    pub fn new(s: f64, kappa: f64, theta: f64) -> Result<Self> {
        if !(s.is_finite() && kappa.is_finite() && theta.is_finite()) {
            return Err(invalid("non-finite plane reading"));
        }
        if kappa < 0.0 {
            return Err(invalid(format!("negative plane curvature {kappa}")));
        }
        if !(-PI..PI).contains(&theta) {
            return Err(invalid(format!("plane angle {theta} outside [-pi, pi)")));
        }
        Ok(Self { s, kappa, theta })
    }
}

/// Marker coordinates in mm, relative to the base frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerShape {
    pub coords: Vec<Vec3>,
}

impl MarkerShape {
    pub fn new(coords: Vec<Vec3>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(invalid("marker shape needs at least 2 points"));
        }
        if coords.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(invalid("non-finite marker coordinate"));
        }
        Ok(Self { coords })
    }

    /// Builds a shape from interleaved `x, y, z` values (mm).
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() % 3 != 0 {
            return Err(invalid(format!("flat marker vector length {} not divisible by 3", values.len())));
        }
        Self::new(values.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.coords.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn tip(&self) -> Vec3 {
        *self.coords.last().unwrap()
    }
}

/// Turns per-plane readings into a piecewise-constant profile and integrates it.
///
/// Each reading governs the span between the midpoints to its neighbours
/// (the first from `s = 0`, the last up to `length`); torsion is zero inside
/// segments.
pub fn reconstruct_from_plane_readings(
    readings: &[PlaneReading],
    length: f64,
    step: f64,
) -> Result<ArcLengthCurve> {
    integrate_frenet(&readings_profile(readings, length)?, step)
}

/// The piecewise-constant profile implied by plane readings.
pub fn readings_profile(readings: &[PlaneReading], length: f64) -> Result<CurvatureProfile> {
    if readings.is_empty() {
        return Err(invalid("no plane readings"));
    }
    for w in readings.windows(2) {
        if w[1].s <= w[0].s {
            return Err(invalid("plane readings must be sorted by arc position"));
        }
    }
    if readings.iter().any(|r| r.s >= length || r.s < 0.0) {
        return Err(invalid("plane reading outside [0, length)"));
    }
    let samples = readings
        .iter()
        .enumerate()
        .map(|(i, r)| ProfileSample {
            s: if i == 0 { 0.0 } else { 0.5 * (readings[i - 1].s + r.s) },
            kappa: r.kappa,
            theta: wrap_angle(r.theta),
            tau: 0.0,
        })
        .collect();
    CurvatureProfile::new(samples, length, Interpolation::PiecewiseConstant)
}

/// `n` markers at uniform arc spacing from the base to the end of `curve`, in mm.
pub fn markers_from_curve(curve: &ArcLengthCurve, n: usize) -> Result<MarkerShape> {
    if n < 2 {
        return Err(invalid("need at least 2 markers"));
    }
    let length = curve.length();
    let coords = (0..n)
        .map(|j| curve.point_at(length * j as f64 / (n - 1) as f64) * 1e3)
        .collect();
    MarkerShape::new(coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_markers_are_evenly_spaced() {
        let c = integrate_frenet(&CurvatureProfile::straight(0.3).unwrap(), 1e-4).unwrap();
        let m = markers_from_curve(&c, MARKER_COUNT).unwrap();
        assert_eq!(m.len(), 20);
        for (j, p) in m.coords.iter().enumerate() {
            assert!((p.x - 300.0 * j as f64 / 19.0).abs() < 1e-9);
        }
        assert!((m.coords[1].x - 15.789_473).abs() < 1e-5);
        let ends = markers_from_curve(&c, 2).unwrap();
        assert!((ends.coords[1] - Vec3::new(300.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn arc_tip_marker_matches_closed_form() {
        let c = integrate_frenet(&CurvatureProfile::constant(10.0, 0.0, 0.0, 0.3).unwrap(), 1e-4).unwrap();
        let m = markers_from_curve(&c, MARKER_COUNT).unwrap();
        let expected = Vec3::new(0.1 * 3f64.sin(), 0.1 * (1.0 - 3f64.cos()), 0.0) * 1e3;
        assert!((m.tip() - expected).norm() < 0.01);
    }

    #[test]
    fn single_reading_governs_whole_length() {
        let r = [PlaneReading::new(0.15, 10.0, 0.0).unwrap()];
        let c = reconstruct_from_plane_readings(&r, 0.3, 1e-4).unwrap();
        let expected = Vec3::new(0.1 * 3f64.sin(), 0.1 * (1.0 - 3f64.cos()), 0.0);
        assert!((c.tip() - expected).norm() * 1e3 < 0.01);
    }

    #[test]
    fn zero_readings_reconstruct_straight() {
        let r: Vec<_> = (1..=5).map(|k| PlaneReading::new(0.05 * k as f64, 0.0, 0.0).unwrap()).collect();
        let c = reconstruct_from_plane_readings(&r, 0.3, 1e-4).unwrap();
        assert!((c.tip() - Vec3::new(0.3, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn midpoint_partition() {
        let r: Vec<_> = [0.05, 0.10, 0.15]
            .iter()
            .map(|&s| PlaneReading::new(s, 1.0, 0.0).unwrap())
            .collect();
        let p = readings_profile(&r, 0.3).unwrap();
        let starts: Vec<f64> = p.samples().iter().map(|x| x.s).collect();
        assert_eq!(starts.len(), 3);
        assert!((starts[1] - 0.075).abs() < 1e-15 && (starts[2] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn reconstruction_errors() {
        assert!(reconstruct_from_plane_readings(&[], 0.3, 1e-4).is_err());
        let r = [PlaneReading { s: 0.2, kappa: 1.0, theta: 0.0 }, PlaneReading { s: 0.1, kappa: 1.0, theta: 0.0 }];
        assert!(reconstruct_from_plane_readings(&r, 0.3, 1e-4).is_err());
        let r = [PlaneReading { s: 0.3, kappa: 1.0, theta: 0.0 }];
        assert!(reconstruct_from_plane_readings(&r, 0.3, 1e-4).is_err());
    }
}
