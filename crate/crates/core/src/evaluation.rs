//! Error metrics, dataset splits, the similarity census and the plane-spacing
//! ablation.
//!
//! Quantiles use linear interpolation between order statistics: the `p`
//! quantile of a sorted list `x` of length `n` sits at rank `h = (n - 1) p`
//! and equals `x[⌊h⌋] + (h - ⌊h⌋)(x[⌊h⌋ + 1] - x[⌊h⌋])`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{
    reconstruct_from_plane_readings, resample_spline, ArcLengthCurve, CurveAnalyzer, MarkerShape, PlaneReading,
};
use crate::optics::Dataset;

/// Arc resolution of the ablation resampling and reconstruction, m.
pub const ABLATION_STEP: f64 = 1e-4;

fn check_pair(pred: &MarkerShape, truth: &MarkerShape) -> Result<()> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(invalid(format!("shapes have {} and {} markers", pred.len(), truth.len())));
    }
    Ok(())
}

/// Distance between the last markers, mm.
pub fn tip_error(pred: &MarkerShape, truth: &MarkerShape) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok((pred.tip() - truth.tip()).norm())
}

/// Root mean square of the per-marker distances, mm.
pub fn shape_rmse(pred: &MarkerShape, truth: &MarkerShape) -> Result<f64> {
    check_pair(pred, truth)?;
    let sum: f64 = pred.coords.iter().zip(&truth.coords).map(|(a, b)| (a - b).norm_squared()).sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// Linear-interpolation quantile of an ascending list.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub mean: f64,
    pub count: usize,
}

pub fn summarize(errors: &[f64]) -> Result<ErrorSummary> {
    if errors.is_empty() {
        return Err(invalid("cannot summarize an empty error list"));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(invalid("error list holds non-finite values"));
    }
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.75));
    Ok(ErrorSummary {
        median: quantile_sorted(&s, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        mean: s.iter().sum::<f64>() / s.len() as f64,
        count: s.len(),
    })
}

/// Per-sample errors of a prediction set and their summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeErrorStats {
    pub tip_errors: Vec<f64>,
    pub rmses: Vec<f64>,
    pub tip: ErrorSummary,
    pub rmse: ErrorSummary,
}

impl ShapeErrorStats {
    pub fn from_pairs(preds: &[MarkerShape], truths: &[MarkerShape]) -> Result<Self> {
        if preds.len() != truths.len() {
            return Err(invalid(format!("{} predictions for {} shapes", preds.len(), truths.len())));
        }
        let tip_errors = preds.iter().zip(truths).map(|(p, t)| tip_error(p, t)).collect::<Result<Vec<_>>>()?;
        let rmses = preds.iter().zip(truths).map(|(p, t)| shape_rmse(p, t)).collect::<Result<Vec<_>>>()?;
        Ok(Self { tip: summarize(&tip_errors)?, rmse: summarize(&rmses)?, tip_errors, rmses })
    }
}

/// Mean over poses of the RMS scatter of predicted tips about the pose mean, mm.
pub fn precision_metric(groups: &[Vec<MarkerShape>]) -> Result<f64> {
    if groups.is_empty() {
        return Err(invalid("no pose groups"));
    }
    let mut total = 0.0;
    for g in groups {
        if g.len() < 2 {
            return Err(invalid("every pose needs at least 2 repetitions"));
        }
        let tips: Vec<_> = g.iter().map(|m| m.tip()).collect();
        let mean = tips.iter().sum::<crate::geometry::Vec3>() / tips.len() as f64;
        let ms = tips.iter().map(|t| (t - mean).norm_squared()).sum::<f64>() / tips.len() as f64;
        total += ms.sqrt();
    }
    Ok(total / groups.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f.is_finite() && f > 0.0 && f < 1.0;
        if !(ok(self.train) && ok(self.val) && self.train + self.val < 1.0) {
            return Err(invalid("split fractions must be in (0, 1) and leave room for a test part"));
        }
        Ok(())
    }

    /// Sizes `⌊train n⌋`, `⌊val n⌋` and the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let part = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let (a, b) = (part(self.train), part(self.val));
        (a, b, n - a - b)
    }
}

/// Seeded shuffle of `0..n`, cut into train, validation and test indices.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    if n < 10 {
        return Err(invalid(format!("need at least 10 samples to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (a, b, _) = spec.sizes(n);
    let test = idx.split_off(a + b);
    let val = idx.split_off(a);
    Ok((idx, val, test))
}

pub fn split_dataset(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = split_indices(data.len(), spec)?;
    Ok((data.subset(&a), data.subset(&b), data.subset(&c)))
}

/// Fraction of `test` shapes with at least `count_thresh` shapes in `train`
/// within `rmse_thresh` mm.
pub fn similarity_census(
    test: &[MarkerShape],
    train: &[MarkerShape],
    rmse_thresh: f64,
    count_thresh: usize,
) -> Result<f64> {
    if test.is_empty() || train.is_empty() {
        return Err(invalid("census needs nonempty test and train sets"));
    }
    let width = train[0].len() * 3;
    if train.iter().chain(test).any(|m| m.len() * 3 != width) {
        return Err(invalid("census shapes must have equal marker counts"));
    }
    let flat: Vec<f64> = train.iter().flat_map(|m| m.to_flat()).collect();
    let limit = rmse_thresh * rmse_thresh * (width / 3) as f64;
    let hits = test
        .par_iter()
        .filter(|q| {
            let q = q.to_flat();
            let mut found = 0usize;
            for row in flat.chunks_exact(width) {
                let mut d = 0.0;
                for (a, b) in row.iter().zip(&q) {
                    d += (a - b) * (a - b);
                }
                if d <= limit {
                    found += 1;
                    if found >= count_thresh {
                        return true;
                    }
                }
            }
            false
        })
        .count();
    Ok(hits as f64 / test.len() as f64)
}

/// Plane positions for a uniform spacing: the centres of consecutive
/// `spacing`-long cells starting at the base.
pub fn plane_positions_for_spacing(spacing: f64, length: f64) -> Result<Vec<f64>> {
    if !(spacing.is_finite() && spacing > 0.0 && spacing <= length) {
        return Err(invalid(format!("spacing {spacing} must lie in (0, {length}]")));
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let s = (k as f64 + 0.5) * spacing;
        if s >= length - 1e-12 {
            break;
        }
        out.push(s);
        k += 1;
    }
    Ok(out)
}

/// Tip error (mm) of rebuilding `truth` from ideal readings at the given planes.
pub fn reconstruction_tip_error(truth: &ArcLengthCurve, planes: &[f64], length: f64) -> Result<f64> {
    let dense = resample_spline(&truth.points, ABLATION_STEP)?;
    let analyzer = CurveAnalyzer::new(&dense)?;
    let (lo, hi) = analyzer.valid_range();
    let readings = planes
        .iter()
        .map(|&s| {
            let e = analyzer.estimate(s.clamp(lo, hi))?;
            PlaneReading::new(s, e.kappa, e.theta)
        })
        .collect::<Result<Vec<_>>>()?;
    let rebuilt = reconstruct_from_plane_readings(&readings, length, ABLATION_STEP)?;
    let tip = dense.point_at(length);
    Ok((rebuilt.tip() - tip).norm() * 1e3)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Plane spacing, m.
    pub spacing: f64,
    pub planes: usize,
    pub tip: ErrorSummary,
}

/// Median tip error of piecewise reconstruction for each plane spacing.
pub fn resolution_ablation(truths: &[ArcLengthCurve], spacings: &[f64], length: f64) -> Result<Vec<AblationRow>> {
    if truths.is_empty() || spacings.is_empty() {
        return Err(invalid("ablation needs shapes and spacings"));
    }
    spacings
        .iter()
        .map(|&d| {
            let planes = plane_positions_for_spacing(d, length)?;
            let errors = truths
                .par_iter()
                .map(|c| reconstruction_tip_error(c, &planes, length))
                .collect::<Result<Vec<_>>>()?;
            Ok(AblationRow { spacing: d, planes: planes.len(), tip: summarize(&errors)? })
        })
        .collect()
}

/// One line of a method comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub dataset: String,
    pub method: String,
    pub tip: ErrorSummary,
    pub rmse: ErrorSummary,
}

pub const TABLE_HEADER: &str = "dataset,method,n,tip_median_mm,tip_iqr_mm,tip_mean_mm,rmse_median_mm,rmse_iqr_mm,rmse_mean_mm";

/// Comparison table as CSV with the fixed column order of [`TABLE_HEADER`].
pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            r.dataset, r.method, r.tip.count, r.tip.median, r.tip.iqr, r.tip.mean, r.rmse.median, r.rmse.iqr, r.rmse.mean
        );
    }
    out
}
