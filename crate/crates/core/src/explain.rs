//! Perturbation saliency: one-sided finite differences of the loss and of
//! the predicted markers with respect to each wavelength element.
//!
//! A probe adds `h` to the same element of all three scans; every probe starts
//! from an untouched copy of the input.

use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::geometry::{MarkerShape, MARKER_COUNT};
use crate::nn::{smooth_l1_value, Network, Real, Tensor, INPUT_CHANNELS, INPUT_LEN, OUTPUT_SIZE};
use crate::optics::{SensorLayout, SCAN_VALUES};

pub const DEFAULT_SPACING: f64 = 0.1;

const CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    /// `loss(perturbed) - loss(original)` per element.
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkerSaliencyMap {
    /// Row-major `INPUT_LEN × MARKER_COUNT` marker displacements, mm.
    pub distances: Vec<f64>,
}

impl MarkerSaliencyMap {
    pub fn row(&self, element: usize) -> &[f64] {
        &self.distances[element * MARKER_COUNT..(element + 1) * MARKER_COUNT]
    }

    /// Summed displacement of all markers per element.
    pub fn totals(&self) -> Vec<f64> {
        self.distances.chunks(MARKER_COUNT).map(|r| r.iter().sum()).collect()
    }
}

/// Eval-mode outputs for the original input followed by the 190 probes.
fn probe_outputs<T: Real>(net: &Network<T>, scans: &[f32], h: f64) -> Result<Vec<f64>> {
    if scans.len() != SCAN_VALUES {
        return Err(invalid(format!("expected {SCAN_VALUES} scan values, got {}", scans.len())));
    }
    if !(h.is_finite() && h != 0.0) {
        return Err(invalid("probe spacing must be finite and nonzero"));
    }
    let base: Vec<f64> = scans.iter().map(|&v| v as f64).collect();
    let probes: Vec<Option<usize>> = std::iter::once(None).chain((0..INPUT_LEN).map(Some)).collect();
    let mut out = Vec::with_capacity(probes.len() * OUTPUT_SIZE);
    for chunk in probes.chunks(CHUNK) {
        let mut data = Vec::with_capacity(chunk.len() * SCAN_VALUES);
        for p in chunk {
            let mut x = base.clone();
            if let Some(j) = *p {
                for c in 0..INPUT_CHANNELS {
                    x[c * INPUT_LEN + j] += h;
                }
            }
            data.extend(x.into_iter().map(T::lit));
        }
        let t = Tensor::new(vec![chunk.len(), INPUT_CHANNELS, INPUT_LEN], data)?;
        out.extend(net.infer(&t)?.data().iter().map(|v| v.as_f64()));
    }
    Ok(out)
}

fn loss(pred: &[f64], target: &[f64], beta: f64) -> f64 {
    pred.iter().zip(target).map(|(p, t)| smooth_l1_value(p - t, beta)).sum::<f64>() / pred.len() as f64
}

/// SmoothL1 loss change per element against the true shape.
pub fn loss_saliency<T: Real>(
    net: &Network<T>,
    scans: &[f32],
    truth: &MarkerShape,
    beta: f64,
    h: f64,
) -> Result<SaliencyMap> {
    let target = truth.to_flat();
    if target.len() != OUTPUT_SIZE {
        return Err(invalid(format!("truth has {} values, the network predicts {OUTPUT_SIZE}", target.len())));
    }
    if !(beta >= 0.0) {
        return Err(invalid("beta must be non-negative"));
    }
    let out = probe_outputs(net, scans, h)?;
    let rows: Vec<&[f64]> = out.chunks(OUTPUT_SIZE).collect();
    let l0 = loss(rows[0], &target, beta);
    Ok(SaliencyMap { deltas: rows[1..].iter().map(|r| loss(r, &target, beta) - l0).collect() })
}

/// Displacement of every predicted marker per element.
pub fn marker_saliency<T: Real>(net: &Network<T>, scans: &[f32], h: f64) -> Result<MarkerSaliencyMap> {
    let out = probe_outputs(net, scans, h)?;
    let rows: Vec<&[f64]> = out.chunks(OUTPUT_SIZE).collect();
    let mut distances = Vec::with_capacity(INPUT_LEN * MARKER_COUNT);
    for r in &rows[1..] {
        for (a, b) in r.chunks(3).zip(rows[0].chunks(3)) {
            distances.push(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
        }
    }
    Ok(MarkerSaliencyMap { distances })
}

/// Elements within `±2` bins of a grating flank (nominal centre `± FWHM / 2`),
/// and elements more than two FWHM away from every grating.
pub fn slope_and_off_resonance(layout: &SensorLayout) -> (Vec<usize>, Vec<usize>) {
    let nearest = |w: f64| {
        (0..layout.grid.len())
            .min_by(|&a, &b| (layout.grid[a] - w).abs().total_cmp(&(layout.grid[b] - w).abs()))
            .unwrap()
    };
    let mut slope = vec![false; layout.grid.len()];
    for f in &layout.fbgs {
        for w in [f.lambda_bragg - 0.5 * f.peak_fwhm, f.lambda_bragg + 0.5 * f.peak_fwhm] {
            let c = nearest(w) as isize;
            for j in (c - 2).max(0)..=(c + 2).min(layout.grid.len() as isize - 1) {
                slope[j as usize] = true;
            }
        }
    }
    let far: Vec<usize> = (0..layout.grid.len())
        .filter(|&j| layout.fbgs.iter().all(|f| (layout.grid[j] - f.lambda_bragg).abs() > 2.0 * f.peak_fwhm))
        .collect();
    ((0..slope.len()).filter(|&j| slope[j]).collect(), far)
}

/// Mean saliency on grating flanks over mean saliency far from every grating.
pub fn slope_contrast(values: &[f64], layout: &SensorLayout) -> Result<f64> {
    if values.len() != layout.grid.len() {
        return Err(invalid("saliency length does not match the grid"));
    }
    let (slope, far) = slope_and_off_resonance(layout);
    if slope.is_empty() || far.is_empty() {
        return Err(invalid("layout leaves no flank or off-resonance elements"));
    }
    let mean = |idx: &[usize]| idx.iter().map(|&j| values[j].abs()).sum::<f64>() / idx.len() as f64;
    Ok(mean(&slope) / mean(&far))
}

impl SaliencyMap {
    /// `element,wavelength_nm,loss_delta` rows.
    pub fn to_csv(&self, grid: &[f64]) -> String {
        let mut s = String::from("element,wavelength_nm,loss_delta\n");
        for (j, d) in self.deltas.iter().enumerate() {
            let _ = writeln!(s, "{j},{:.4},{d:.9e}", grid[j]);
        }
        s
    }
}

impl MarkerSaliencyMap {
    /// `element,wavelength_nm,marker_1..marker_20` rows, mm.
    pub fn to_csv(&self, grid: &[f64]) -> String {
        let mut s = String::from("element,wavelength_nm");
        for m in 1..=MARKER_COUNT {
            let _ = write!(s, ",marker_{m}");
        }
        s.push('\n');
        for j in 0..self.distances.len() / MARKER_COUNT {
            let _ = write!(s, "{j},{:.4}", grid[j]);
            for d in self.row(j) {
                let _ = write!(s, ",{d:.6e}");
            }
            s.push('\n');
        }
        s
    }
}
