//! Mode-field-dislocation baseline: per-grating cosine-law calibration,
//! per-plane curvature vectors from intensity ratios, and piecewise-constant
//! shape reconstruction.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    markers_from_curve, reconstruct_from_plane_readings, wrap_angle, MarkerShape, PlaneReading, KAPPA_STRAIGHT_EPS,
    MARKER_COUNT,
};
use crate::optics::{SampleRecord, SensorLayout, FBG_COUNT, GRID_LEN, PLANE_COUNT, SCANS_PER_SAMPLE, SHAPE_STEP};

const CALIBRATION_ROUNDS: usize = 30;
/// Readings whose first-order deviation `|gain κ|` exceeds this are left out of the fit.
const LINEAR_REGIME: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbgCalibration {
    pub phi: f64,
    /// `c r`, m.
    pub gain: f64,
    pub i0: f64,
    pub residual_rms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlCalibration {
    pub fbgs: Vec<FbgCalibration>,
    pub plane_positions: Vec<f64>,
}

/// One calibration observation: peak intensities and the known bends.
#[derive(Clone, Debug)]
pub struct CalibrationSample {
    pub intensities: Vec<f64>,
    /// `(κ, θ)` per plane.
    pub bends: Vec<(f64, f64)>,
}

impl CalibrationSample {
    /// Intensities averaged over the record's scans, bends from its plane summary.
    pub fn from_record(r: &SampleRecord, layout: &SensorLayout) -> Result<Self> {
        Ok(Self {
            intensities: record_intensities(r, layout)?,
            bends: r.planes.chunks_exact(2).map(|c| (c[0] as f64, c[1] as f64)).collect(),
        })
    }
}

/// Peak height of every grating: the largest grid value within ±1 FWHM of the
/// nominal Bragg wavelength, refined by a parabola through the logarithms of
/// that element and its neighbours (exact for a Gaussian peak).
pub fn read_plane_intensities(scan: &[f64], layout: &SensorLayout) -> Result<Vec<f64>> {
    if scan.len() != layout.grid.len() {
        return Err(invalid(format!("scan has {} values, grid has {}", scan.len(), layout.grid.len())));
    }
    layout
        .fbgs
        .iter()
        .map(|f| {
            let window = layout
                .grid
                .iter()
                .enumerate()
                .filter(|(_, &l)| (l - f.lambda_bragg).abs() <= f.peak_fwhm)
                .map(|(j, _)| j);
            let j = window
                .max_by(|&a, &b| scan[a].total_cmp(&scan[b]).then(b.cmp(&a)))
                .ok_or_else(|| invalid(format!("empty window around {} nm", f.lambda_bragg)))?;
            Ok(refine_peak(scan, j))
        })
        .collect()
}

fn refine_peak(scan: &[f64], j: usize) -> f64 {
    let y0 = scan[j];
    if j == 0 || j + 1 >= scan.len() {
        return y0;
    }
    let (ym, yp) = (scan[j - 1], scan[j + 1]);
    if !(ym > 0.0 && yp > 0.0 && y0 > 0.0) {
        return y0;
    }
    let (a, b, c) = (ym.ln(), y0.ln(), yp.ln());
    let curvature = a - 2.0 * b + c;
    if curvature >= 0.0 {
        return y0;
    }
    let delta = (0.5 * (a - c) / curvature).clamp(-1.0, 1.0);
    (b - 0.25 * (a - c) * delta).exp().max(y0)
}

/// Peak heights averaged over the scans of a record.
pub fn record_intensities(r: &SampleRecord, layout: &SensorLayout) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; FBG_COUNT];
    for k in 0..SCANS_PER_SAMPLE {
        let scan: Vec<f64> = r.scan(k).iter().map(|&v| v as f64).collect();
        for (a, v) in acc.iter_mut().zip(read_plane_intensities(&scan, layout)?) {
            *a += v / SCANS_PER_SAMPLE as f64;
        }
    }
    Ok(acc)
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<i64> = values.map(|x| (x * 1e3).round() as i64).collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Fits `I = s (i0 + b κ cos θ + d κ sin θ)` per grating, where `s` is an
/// unknown per-sample normalization scale, by alternating least squares.
/// `gain = |(b, d)| / i0` and `phi = atan2(-d, -b)`.
pub fn calibrate(samples: &[CalibrationSample], layout: &SensorLayout) -> Result<BlCalibration> {
    if samples.is_empty() {
        return Err(Error::InsufficientExcitation("empty calibration set".into()));
    }
    for s in samples {
        if s.intensities.len() != FBG_COUNT || s.bends.len() != PLANE_COUNT {
            return Err(invalid("calibration sample has wrong sizes"));
        }
    }
    for p in 0..PLANE_COUNT {
        let bent = || samples.iter().map(|s| s.bends[p]).filter(|b| b.0 > KAPPA_STRAIGHT_EPS);
        let thetas = distinct(bent().map(|b| b.1));
        let kappas = distinct(bent().map(|b| b.0));
        if thetas < 8 || kappas < 2 {
            return Err(Error::InsufficientExcitation(format!(
                "plane {p}: {thetas} distinct bend directions and {kappas} curvature magnitudes"
            )));
        }
    }

    let n = samples.len();
    let mut scale = vec![1.0; n];
    let mut coef = vec![[1.0, 0.0, 0.0]; FBG_COUNT];
    let mut used = vec![vec![true; n]; FBG_COUNT];
    let features = |s: &CalibrationSample, i: usize| {
        let (k, t) = s.bends[layout.fbgs[i].plane_index];
        [1.0, k * t.cos(), k * t.sin()]
    };
    for round in 0..CALIBRATION_ROUNDS {
        for i in 0..FBG_COUNT {
            let rows: Vec<usize> = (0..n).filter(|&r| used[i][r]).collect();
            if rows.len() < 3 {
                return Err(Error::InsufficientExcitation(format!("grating {i}: too few usable readings")));
            }
            let a = DMatrix::from_fn(rows.len(), 3, |r, c| features(&samples[rows[r]], i)[c]);
            let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| samples[r].intensities[i] / scale[r]));
            let x = a
                .svd(true, true)
                .solve(&y, 1e-12)
                .map_err(|e| Error::CalibrationDegenerate(e.to_string()))?;
            coef[i] = [x[0], x[1], x[2]];
        }
        for (r, s) in samples.iter().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            for (i, c) in coef.iter().enumerate() {
                if !used[i][r] {
                    continue;
                }
                let f = features(s, i);
                let m = c[0] + c[1] * f[1] + c[2] * f[2];
                num += s.intensities[i] * m;
                den += m * m;
            }
            if den > 0.0 {
                scale[r] = num / den;
            }
        }
        let mean = scale.iter().sum::<f64>() / n as f64;
        scale.iter_mut().for_each(|s| *s /= mean);
        coef.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v *= mean));
        if round == 0 {
            for (i, c) in coef.iter().enumerate() {
                let gain = c[1].hypot(c[2]) / c[0].abs().max(f64::MIN_POSITIVE);
                for (r, s) in samples.iter().enumerate() {
                    used[i][r] = gain * s.bends[layout.fbgs[i].plane_index].0 <= LINEAR_REGIME;
                }
            }
        }
    }

    let fbgs = coef
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let i0 = c[0];
            if !(i0.abs() > 1e-9) {
                return Err(Error::CalibrationDegenerate(format!("grating {i} has zero base intensity")));
            }
            let (mut sq, mut cnt) = (0.0, 0);
            for (r, s) in samples.iter().enumerate().filter(|(r, _)| used[i][*r]) {
                let f = features(s, i);
                let d = s.intensities[i] / scale[r] - (c[0] + c[1] * f[1] + c[2] * f[2]);
                sq += d * d;
                cnt += 1;
            }
            Ok(FbgCalibration {
                phi: wrap_angle((-c[2]).atan2(-c[1])),
                gain: c[1].hypot(c[2]) / i0,
                i0,
                residual_rms: (sq / cnt as f64).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlCalibration { fbgs, plane_positions: layout.plane_positions.clone() })
}

/// Per-plane curvature vectors from peak intensities.
///
/// Each plane's three intensities are modelled as
/// `I_i = u i0_i (1 - gain_i κ cos(θ - phi_i))` with an unknown plane scale
/// `u`, which is linear in `(u, uκ cos θ, uκ sin θ)`; the 3x3 system is
/// solved exactly, so the result only depends on intensity ratios.
pub fn estimate_plane_readings(intensities: &[f64], calib: &BlCalibration) -> Result<Vec<PlaneReading>> {
    if intensities.len() != calib.fbgs.len() || calib.fbgs.len() != PLANE_COUNT * 3 {
        return Err(invalid("intensity count does not match calibration"));
    }
    if let Some(i) = calib.fbgs.iter().position(|f| !(f.i0.abs() > 1e-9)) {
        return Err(Error::CalibrationDegenerate(format!("grating {i} has zero base intensity")));
    }
    (0..PLANE_COUNT)
        .map(|p| {
            let idx = [3 * p, 3 * p + 1, 3 * p + 2];
            let m = Matrix3::from_fn(|r, c| {
                let f = &calib.fbgs[idx[r]];
                match c {
                    0 => f.i0,
                    1 => -f.i0 * f.gain * f.phi.cos(),
                    _ => -f.i0 * f.gain * f.phi.sin(),
                }
            });
            let y = Vector3::new(intensities[idx[0]], intensities[idx[1]], intensities[idx[2]]);
            let x = m
                .lu()
                .solve(&y)
                .ok_or_else(|| Error::CalibrationDegenerate(format!("plane {p} system is singular")))?;
            if !(x[0].abs() > 1e-12) {
                return Err(Error::CalibrationDegenerate(format!("plane {p} has no intensity")));
            }
            let (kc, ks) = (x[1] / x[0], x[2] / x[0]);
            let kappa = kc.hypot(ks);
            let theta = if kappa < KAPPA_STRAIGHT_EPS { 0.0 } else { wrap_angle(ks.atan2(kc)) };
            PlaneReading::new(calib.plane_positions[p], kappa, theta)
        })
        .collect()
}

/// BL shape from peak intensities.
pub fn predict_from_intensities(intensities: &[f64], calib: &BlCalibration, layout: &SensorLayout) -> Result<MarkerShape> {
    let readings = estimate_plane_readings(intensities, calib)?;
    let curve = reconstruct_from_plane_readings(&readings, layout.length, SHAPE_STEP)?;
    markers_from_curve(&curve, MARKER_COUNT)
}

/// BL shape from one scan.
pub fn predict_shape_bl(scan: &[f64], calib: &BlCalibration, layout: &SensorLayout) -> Result<MarkerShape> {
    predict_from_intensities(&read_plane_intensities(scan, layout)?, calib, layout)
}

/// BL shape from a record, using the intensities averaged over its scans.
pub fn predict_record_bl(r: &SampleRecord, calib: &BlCalibration, layout: &SensorLayout) -> Result<MarkerShape> {
    debug_assert_eq!(r.scans.len(), SCANS_PER_SAMPLE * GRID_LEN);
    predict_from_intensities(&record_intensities(r, layout)?, calib, layout)
}

/// The calibration the simulator's cosine law implies for `mode_field_gain`.
pub fn nominal_calibration(layout: &SensorLayout, mode_field_gain: f64) -> BlCalibration {
    BlCalibration {
        fbgs: layout
            .fbgs
            .iter()
            .map(|f| FbgCalibration {
                phi: wrap_angle(f.phi),
                gain: mode_field_gain * f.r_offset_m(),
                i0: f.base_amplitude,
                residual_rms: 0.0,
            })
            .collect(),
        plane_positions: layout.plane_positions.clone(),
    }
}
