use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::effects::EffectsConfig;
use super::layout::{SensorLayout, PLANE_COUNT};
use crate::error::{invalid, Result};
use crate::geometry::{integrate_frenet, markers_from_curve, ArcLengthCurve, CurvatureProfile, MarkerShape, MARKER_COUNT};

/// Integration step used to turn a sampled profile into marker positions, m.
pub const SHAPE_STEP: f64 = 5e-4;
/// Consecutive scans recorded per shape.
pub const SCANS_PER_SAMPLE: usize = 3;

/// One normalized spectrometer read-out on the layout grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumScan {
    pub intensities: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Random,
    Trajectory,
    Template,
}

impl ScenarioKind {
    pub fn tag(self) -> u8 {
        match self {
            Self::Random => 0,
            Self::Trajectory => 1,
            Self::Template => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Self::Random),
            1 => Ok(Self::Trajectory),
            2 => Ok(Self::Template),
            _ => Err(invalid(format!("unknown scenario tag {tag}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Trajectory => "trajectory",
            Self::Template => "template",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "trajectory" => Ok(Self::Trajectory),
            "template" => Ok(Self::Template),
            _ => Err(invalid(format!("unknown dataset kind '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSample {
    pub scans: Vec<SpectrumScan>,
    pub shape: MarkerShape,
    pub profile: CurvatureProfile,
    pub scenario_tag: ScenarioKind,
    pub seed: u64,
}

/// Curvature and bend direction of the profile at each sensing plane.
pub fn plane_bends(profile: &CurvatureProfile, layout: &SensorLayout) -> Vec<(f64, f64)> {
    layout
        .plane_positions
        .iter()
        .map(|&s| {
            let b = profile.at(s);
            (b.kappa, b.theta)
        })
        .collect()
}

/// Cosine-law peak amplitude of every grating.
pub fn peak_amplitudes(profile: &CurvatureProfile, layout: &SensorLayout, effects: &EffectsConfig) -> Vec<f64> {
    let bends = plane_bends(profile, layout);
    layout
        .fbgs
        .iter()
        .map(|f| {
            let (kappa, theta) = bends[f.plane_index];
            let gain = effects.mode_field_gain * f.r_offset_m();
            (f.base_amplitude * (1.0 - gain * kappa * (theta - f.phi).cos())).clamp(0.05, 1.0)
        })
        .collect()
}

fn gaussian(x: f64, center: f64, fwhm: f64) -> f64 {
    let d = (x - center) / fwhm;
    (-4.0 * LN_2 * d * d).exp()
}

/// Bending accumulated along a stretch of fiber.
#[derive(Clone, Copy, Default)]
struct Accumulated {
    /// ∫κ cos θ ds and ∫κ sin θ ds.
    vector: [f64; 2],
    /// ∫κ² ds.
    kappa_sq: f64,
}

impl Accumulated {
    fn over(profile: &CurvatureProfile, a: f64, b: f64) -> Self {
        Self {
            vector: [
                profile.integrate(a, b, |x| x.kappa * x.theta.cos()),
                profile.integrate(a, b, |x| x.kappa * x.theta.sin()),
            ],
            kappa_sq: profile.integrate(a, b, |x| x.kappa * x.kappa),
        }
    }

    fn plus(self, o: Self) -> Self {
        Self { vector: [self.vector[0] + o.vector[0], self.vector[1] + o.vector[1]], kappa_sq: self.kappa_sq + o.kappa_sq }
    }
}

fn check_lengths(profile: &CurvatureProfile, layout: &SensorLayout) -> Result<()> {
    if profile.length() < layout.length - 1e-12 {
        return Err(invalid(format!(
            "profile length {} shorter than sensor length {}",
            profile.length(),
            layout.length
        )));
    }
    if layout.plane_positions.len() != PLANE_COUNT || layout.grid.is_empty() {
        return Err(invalid("malformed layout"));
    }
    Ok(())
}

/// Noise-free, unnormalized reflection spectrum on the layout grid.
pub fn clean_spectrum(profile: &CurvatureProfile, layout: &SensorLayout, effects: &EffectsConfig) -> Result<Vec<f64>> {
    check_lengths(profile, layout)?;
    let bends = plane_bends(profile, layout);
    let amplitudes = peak_amplitudes(profile, layout, effects);

    // accumulated bending up to each plane
    let mut upto = Vec::with_capacity(PLANE_COUNT);
    let (mut acc, mut prev) = (Accumulated::default(), 0.0);
    for &s in &layout.plane_positions {
        acc = acc.plus(Accumulated::over(profile, prev, s));
        upto.push(acc);
        prev = s;
    }
    let pdl_k2 = acc.kappa_sq;

    let bl = &effects.bendloss;
    let transmission_sq = |acc: &Accumulated, lambda: f64| -> f64 {
        if !bl.enabled {
            return 1.0;
        }
        let ripple = 1.0
            + bl.short_depth * (2.0 * PI * lambda / bl.short_period_nm + bl.short_phase_gain * acc.vector[0]).sin()
            + bl.long_depth * (2.0 * PI * lambda / bl.long_period_nm + bl.long_phase_gain * acc.vector[1]).sin();
        (-bl.base_coefficient * acc.kappa_sq * ripple).exp()
    };

    let mut spectrum = vec![0.0; layout.grid.len()];
    for (i, f) in layout.fbgs.iter().enumerate() {
        let (kappa, theta) = bends[f.plane_index];
        let center = if effects.bragg_shift.enabled {
            let strain = effects.bragg_shift.photoelastic_factor * kappa * f.r_offset_m() * (theta - f.phi).cos();
            f.lambda_bragg * (1.0 - strain)
        } else {
            f.lambda_bragg
        };
        let cl = &effects.cladding;
        let dip_depth = if cl.enabled { cl.depth * (cl.curvature_gain * kappa).min(1.0) } else { 0.0 };
        let acc = &upto[f.plane_index];
        for (out, &lambda) in spectrum.iter_mut().zip(&layout.grid) {
            let mut g = gaussian(lambda, center, f.peak_fwhm);
            if dip_depth > 0.0 {
                g *= 1.0 - dip_depth * gaussian(lambda, center - cl.offset_nm, f.peak_fwhm);
            }
            *out += amplitudes[i] * g * transmission_sq(acc, lambda);
        }
    }

    let ft = &effects.fresnel_tail;
    if ft.enabled {
        let last = layout.last_plane();
        let tail = Accumulated::over(profile, last, layout.length);
        let whole = acc.plus(tail);
        let tail_kappa = profile.integrate(last, layout.length, |x| x.kappa);
        let modulation = (ft.modulation_gain * tail.vector[0]).clamp(-0.9, 0.9);
        let phase = ft.phase_gain * tail_kappa + ft.direction_gain * tail.vector[1];
        let path_nm = ft.tail_optical_length_um * 1e3;
        for (out, &lambda) in spectrum.iter_mut().zip(&layout.grid) {
            let fringe = ft.ripple * (1.0 + modulation) * (4.0 * PI * path_nm / lambda + phase).cos();
            *out += (ft.dc_level + fringe) * transmission_sq(&whole, lambda);
        }
    }

    let pd = &effects.pdl;
    if pd.enabled {
        for (out, &lambda) in spectrum.iter_mut().zip(&layout.grid) {
            *out *= 1.0 + pd.depth * (2.0 * PI * lambda / pd.period_nm + pd.birefringence_gain * pdl_k2).sin();
        }
    }
    Ok(spectrum)
}

/// Adds read-out noise, clips at zero and peak-normalizes.
pub fn finish_scan(clean: &[f64], noise_sigma: f64, rng: &mut impl Rng) -> Result<SpectrumScan> {
    let mut values: Vec<f64> = clean
        .iter()
        .map(|&v| {
            let noisy = if noise_sigma > 0.0 { v + noise_sigma * rng.sample::<f64, _>(StandardNormal) } else { v };
            noisy.max(0.0)
        })
        .collect();
    let peak = values.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(invalid("spectrum has no positive signal"));
    }
    values.iter_mut().for_each(|v| *v /= peak);
    Ok(SpectrumScan { intensities: values })
}

pub fn simulate_scan(
    profile: &CurvatureProfile,
    layout: &SensorLayout,
    effects: &EffectsConfig,
    rng: &mut impl Rng,
) -> Result<SpectrumScan> {
    finish_scan(&clean_spectrum(profile, layout, effects)?, effects.noise_sigma, rng)
}

/// The sensor centerline: the profile integrated and cut at the sensor length.
pub fn sensor_curve(profile: &CurvatureProfile, layout: &SensorLayout) -> Result<ArcLengthCurve> {
    check_lengths(profile, layout)?;
    let mut curve = integrate_frenet(profile, SHAPE_STEP)?;
    let keep = crate::geometry::step_count(layout.length, SHAPE_STEP) + 1;
    curve.points.truncate(keep);
    if let Some(f) = curve.frames.as_mut() {
        f.truncate(keep);
    }
    Ok(curve)
}

/// Three scans of one shape with independent noise, plus its marker shape.
pub fn simulate_sample(
    profile: &CurvatureProfile,
    layout: &SensorLayout,
    effects: &EffectsConfig,
    rng: &mut impl Rng,
) -> Result<SimSample> {
    let clean = clean_spectrum(profile, layout, effects)?;
    let scans = (0..SCANS_PER_SAMPLE)
        .map(|_| finish_scan(&clean, effects.noise_sigma, rng))
        .collect::<Result<Vec<_>>>()?;
    let shape = markers_from_curve(&sensor_curve(profile, layout)?, MARKER_COUNT)?;
    Ok(SimSample { scans, shape, profile: profile.clone(), scenario_tag: ScenarioKind::Random, seed: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Interpolation, ProfileSample};
    use crate::optics::default_layout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn straight_fiber_has_equal_peaks_per_plane() {
        let l = default_layout();
        let p = CurvatureProfile::straight(0.3).unwrap();
        let e = EffectsConfig::cosine_only();
        assert!(peak_amplitudes(&p, &l, &e).iter().all(|&a| a == 0.9));
        let clean = clean_spectrum(&p, &l, &e).unwrap();
        for (j, &lambda) in l.grid.iter().enumerate() {
            let oracle: f64 = l
                .fbgs
                .iter()
                .map(|f| 0.9 * (-4.0 * 2f64.ln() * ((lambda - f.lambda_bragg) / f.peak_fwhm).powi(2)).exp())
                .sum();
            assert!((clean[j] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_law_ratio() {
        let l = default_layout();
        let e = EffectsConfig::cosine_only();
        // κ = 5 at plane 0 only, straight elsewhere
        let samples = vec![
            ProfileSample { s: 0.0, kappa: 5.0, theta: 0.0, tau: 0.0 },
            ProfileSample { s: 0.075, kappa: 0.0, theta: 0.0, tau: 0.0 },
        ];
        let p = CurvatureProfile::new(samples, 0.3, Interpolation::PiecewiseConstant).unwrap();
        let a = peak_amplitudes(&p, &l, &e);
        let cr = e.mode_field_gain * 2e-6;
        // plane 0: index 1 is φ = 180°, index 2 is φ = 0°
        let expected = (1.0 - 5.0 * cr) / (1.0 + 5.0 * cr);
        assert!((a[2] / a[1] - expected).abs() < 1e-12);
        assert!(a[2] < a[1]);
        assert!(a[3..].iter().all(|&x| x == 0.9));
    }

    #[test]
    fn confounders_change_off_resonance_region() {
        let l = default_layout();
        let p = CurvatureProfile::constant(12.0, 0.7, 0.0, 0.3).unwrap();
        let mut on = EffectsConfig::cosine_only();
        on.bendloss.enabled = true;
        on.pdl.enabled = true;
        on.fresnel_tail.enabled = true;
        let a = simulate_scan(&p, &l, &on, &mut rng()).unwrap();
        let b = simulate_scan(&p, &l, &EffectsConfig::cosine_only(), &mut rng()).unwrap();
        let outside = |lambda: f64| l.fbgs.iter().all(|f| (lambda - f.lambda_bragg).abs() > 2.0 * f.peak_fwhm);
        let max_diff = l
            .grid
            .iter()
            .zip(a.intensities.iter().zip(&b.intensities))
            .filter(|(lam, _)| outside(**lam))
            .map(|(_, (x, y))| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 0.0);
    }

    #[test]
    fn scans_are_normalized_and_nonnegative() {
        let l = default_layout();
        let p = CurvatureProfile::constant(20.0, -1.0, 0.0, 0.3).unwrap();
        let s = simulate_scan(&p, &l, &EffectsConfig::default(), &mut rng()).unwrap();
        assert_eq!(s.intensities.len(), 190);
        assert_eq!(s.intensities.iter().copied().fold(0.0, f64::max), 1.0);
        assert!(s.intensities.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn noiseless_samples_repeat_scans() {
        let l = default_layout();
        let p = CurvatureProfile::constant(3.0, 0.2, 0.0, 0.3).unwrap();
        let s = simulate_sample(&p, &l, &EffectsConfig::ideal(), &mut rng()).unwrap();
        assert_eq!(s.scans.len(), 3);
        assert_eq!(s.scans[0], s.scans[1]);
        assert_eq!(s.scans[1], s.scans[2]);
        assert_eq!(s.shape.len(), 20);
    }

    #[test]
    fn noise_level_matches_sigma() {
        let l = default_layout();
        let p = CurvatureProfile::straight(0.3).unwrap();
        let mut e = EffectsConfig::cosine_only();
        e.noise_sigma = 0.01;
        e.fresnel_tail.enabled = true;
        e.fresnel_tail.ripple = 0.0;
        e.fresnel_tail.dc_level = 0.2;
        let clean = clean_spectrum(&p, &l, &e).unwrap();
        let peak = clean.iter().copied().fold(0.0, f64::max);
        let mut r = rng();
        let draws = 400;
        // off-resonance element far from any peak: stays well above zero
        let j = 0;
        let vals: Vec<f64> = (0..draws)
            .map(|_| {
                let s = simulate_sample(&p, &l, &e, &mut r).unwrap();
                s.scans[0].intensities[j] * peak
            })
            .collect();
        assert_ne!(vals[0], vals[1]);
        let mean = vals.iter().sum::<f64>() / draws as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
        assert!((sd - 0.01).abs() < 0.0015, "sd {sd}");
    }

    #[test]
    fn short_profile_is_rejected() {
        let l = default_layout();
        let p = CurvatureProfile::straight(0.2).unwrap();
        assert!(simulate_scan(&p, &l, &EffectsConfig::default(), &mut rng()).is_err());
    }

    #[test]
    fn longer_profile_is_cut_at_sensor_end() {
        let l = default_layout();
        let p = CurvatureProfile::straight(0.4).unwrap();
        let s = simulate_sample(&p, &l, &EffectsConfig::ideal(), &mut rng()).unwrap();
        assert!((s.shape.tip().x - 300.0).abs() < 1e-9);
    }
}
