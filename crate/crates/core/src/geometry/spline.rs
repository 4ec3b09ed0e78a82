use super::curve::{step_count, ArcLengthCurve};
use super::Vec3;
use crate::error::{invalid, Result};

/// Default spline resampling resolution, m.
pub const DEFAULT_RESOLUTION: f64 = 1e-4;

// 8-point Gauss-Legendre nodes and weights on [-1, 1]
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Piecewise cubic through 3D knots, parameterized by cumulative chord length,
/// with not-a-knot end conditions.
#[derive(Clone, Debug)]
pub struct CubicSpline3 {
    knots: Vec<f64>,
    points: Vec<Vec3>,
    /// Second derivatives at the knots.
    moments: Vec<Vec3>,
}

impl CubicSpline3 {
    pub fn new(points: &[Vec3]) -> Result<Self> {
        if points.len() < 4 {
            return Err(invalid(format!("spline needs at least 4 points, got {}", points.len())));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(invalid("non-finite spline point"));
        }
        let mut knots = vec![0.0];
        for w in points.windows(2) {
            let d = (w[1] - w[0]).norm();
            if d <= 0.0 {
                return Err(invalid("duplicate consecutive points"));
            }
            knots.push(knots.last().unwrap() + d);
        }
        let moments = not_a_knot_moments(&knots, points);
        Ok(Self { knots, points: points.to_vec(), moments })
    }

    pub fn param_end(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.knots.len();
        self.knots.partition_point(|&k| k <= t).clamp(1, n - 1) - 1
    }

    pub fn eval(&self, t: f64) -> Vec3 {
        let i = self.segment(t);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        self.points[i] * a
            + self.points[i + 1] * b
            + (self.moments[i] * (a * a * a - a) + self.moments[i + 1] * (b * b * b - b)) * (h * h / 6.0)
    }

    pub fn derivative(&self, t: f64) -> Vec3 {
        let i = self.segment(t);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        (self.points[i + 1] - self.points[i]) / h
            + (self.moments[i + 1] * (3.0 * b * b - 1.0) - self.moments[i] * (3.0 * a * a - 1.0)) * (h / 6.0)
    }

    fn speed(&self, t: f64) -> f64 {
        self.derivative(t).norm()
    }

    /// Arc length between parameters `lo` and `hi` within one segment.
    fn segment_arc(&self, lo: f64, hi: f64) -> f64 {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        GL_NODES
            .iter()
            .zip(GL_WEIGHTS.iter())
            .map(|(x, w)| w * self.speed(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Second derivatives of a not-a-knot cubic spline, per coordinate.
///
/// The end conditions express `M0` and `M_{n-1}` through their neighbours;
/// substituting them leaves a diagonally dominant tridiagonal system in the
/// interior moments.
fn not_a_knot_moments(knots: &[f64], points: &[Vec3]) -> Vec<Vec3> {
    let n = knots.len();
    let m = n - 1;
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let rows = n - 2;
    let mut sub = vec![0.0; rows];
    let mut diag = vec![0.0; rows];
    let mut sup = vec![0.0; rows];
    let mut rhs = vec![Vec3::zeros(); rows];
    for r in 0..rows {
        let i = r + 1;
        sub[r] = h[i - 1];
        diag[r] = 2.0 * (h[i - 1] + h[i]);
        sup[r] = h[i];
        rhs[r] = ((points[i + 1] - points[i]) / h[i] - (points[i] - points[i - 1]) / h[i - 1]) * 6.0;
    }
    // M0 = ((h0 + h1) M1 - h0 M2) / h1
    let (h0, h1) = (h[0], h[1]);
    diag[0] += h0 * (h0 + h1) / h1;
    sup[0] -= h0 * h0 / h1;
    // M_m = ((ha + hb) M_{m-1} - hb M_{m-2}) / ha
    let (ha, hb) = (h[m - 2], h[m - 1]);
    diag[rows - 1] += hb * (ha + hb) / ha;
    sub[rows - 1] -= hb * hb / ha;

    // Thomas algorithm on the interior moments
    let mut cp = vec![0.0; rows];
    let mut dp = vec![Vec3::zeros(); rows];
    cp[0] = sup[0] / diag[0];
    dp[0] = rhs[0] / diag[0];
    for r in 1..rows {
        let denom = diag[r] - sub[r] * cp[r - 1];
        cp[r] = sup[r] / denom;
        dp[r] = (rhs[r] - dp[r - 1] * sub[r]) / denom;
    }
    let mut inner = vec![Vec3::zeros(); rows];
    inner[rows - 1] = dp[rows - 1];
    for r in (0..rows - 1).rev() {
        inner[r] = dp[r] - inner[r + 1] * cp[r];
    }
    let mut moments = Vec::with_capacity(n);
    // n >= 4 guarantees at least two interior moments
    moments.push((inner[0] * (h0 + h1) - inner[1] * h0) / h1);
    moments.extend_from_slice(&inner);
    moments.push((inner[rows - 1] * (ha + hb) - inner[rows - 2] * hb) / ha);
    moments
}

/// Interpolates `points` with a cubic spline and resamples it at uniform arc
/// length `resolution` (m), starting at the first point.
pub fn resample_spline(points: &[Vec3], resolution: f64) -> Result<ArcLengthCurve> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(invalid(format!("resolution must be positive, got {resolution}")));
    }
    let spline = CubicSpline3::new(points)?;
    let knots = &spline.knots;

    // cumulative arc length at the knots
    let mut arc_at_knot = vec![0.0];
    for w in knots.windows(2) {
        let seg = spline.segment_arc(w[0], w[1]);
        arc_at_knot.push(arc_at_knot.last().unwrap() + seg);
    }
    let total = *arc_at_knot.last().unwrap();
    let n = step_count(total, resolution);

    let mut out = Vec::with_capacity(n + 1);
    let mut seg = 0usize;
    let mut t: f64 = 0.0;
    for j in 0..=n {
        let target = j as f64 * resolution;
        while seg + 2 < knots.len() && arc_at_knot[seg + 1] < target {
            seg += 1;
        }
        let (lo, hi) = (knots[seg], knots[seg + 1]);
        let base = arc_at_knot[seg];
        t = t.clamp(lo, hi);
        // Newton on A(t) = target, safeguarded by bisection bounds
        let (mut a, mut b) = (lo, hi);
        for _ in 0..50 {
            let f = base + spline.segment_arc(lo, t) - target;
            if f > 0.0 {
                b = t;
            } else {
                a = t;
            }
            let step = f / spline.speed(t);
            let mut next = t - step;
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - t).abs() < 1e-15 * (1.0 + hi) {
                t = next;
                break;
            }
            t = next;
        }
        out.push(spline.eval(t));
    }
    Ok(ArcLengthCurve { step: resolution, points: out, frames: None })
}
