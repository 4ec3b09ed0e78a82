use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BraggShift {
    pub enabled: bool,
    /// Strain-optic factor `1 - p_e`.
    pub photoelastic_factor: f64,
}

/// Bend loss on the way up to each grating, with coherent re-injection ripple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BendLoss {
    pub enabled: bool,
    /// Attenuation per unit `∫κ² ds` (m).
    pub base_coefficient: f64,
    pub short_period_nm: f64,
    pub long_period_nm: f64,
    pub short_depth: f64,
    pub long_depth: f64,
    /// Short-period ripple phase per radian of accumulated in-plane (θ = 0) bending.
    pub short_phase_gain: f64,
    /// Long-period ripple phase per radian of accumulated out-of-plane (θ = π/2) bending.
    pub long_phase_gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizationLoss {
    pub enabled: bool,
    pub depth: f64,
    pub period_nm: f64,
    /// Phase per unit `∫κ² ds` (m).
    pub birefringence_gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CladdingDip {
    pub enabled: bool,
    pub depth: f64,
    /// Dip center below the shifted Bragg wavelength, nm.
    pub offset_nm: f64,
    /// Dip depth scale per unit curvature (m); saturates at 1.
    pub curvature_gain: f64,
}

/// Reflection from the cleaved fiber end, modulated by bending past the last plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FresnelTail {
    pub enabled: bool,
    pub ripple: f64,
    /// Effective optical path of the interfering tail reflection, µm.
    pub tail_optical_length_um: f64,
    pub dc_level: f64,
    /// Ripple amplitude change per radian of in-plane tail bending.
    pub modulation_gain: f64,
    /// Fringe phase per radian of tail bending.
    pub phase_gain: f64,
    /// Fringe phase per radian of out-of-plane tail bending.
    pub direction_gain: f64,
}

/// Forward-model switches and magnitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectsConfig {
    /// Intensity sensitivity factor; `mode_field_gain * r_offset` is the
    /// relative intensity change per unit curvature (m).
    pub mode_field_gain: f64,
    pub bragg_shift: BraggShift,
    pub bendloss: BendLoss,
    pub pdl: PolarizationLoss,
    pub cladding: CladdingDip,
    pub fresnel_tail: FresnelTail,
    /// Gaussian noise standard deviation, fraction of full scale.
    pub noise_sigma: f64,
}

impl Default for EffectsConfig {
    fn default() -> Self {
        Self {
            mode_field_gain: 1500.0,
            bragg_shift: BraggShift { enabled: true, photoelastic_factor: 0.78 },
            bendloss: BendLoss {
                enabled: true,
                base_coefficient: 5e-3,
                short_period_nm: 2.5,
                long_period_nm: 15.0,
                short_depth: 0.05,
                long_depth: 0.10,
                short_phase_gain: 2.0,
                long_phase_gain: 2.0,
            },
            pdl: PolarizationLoss { enabled: true, depth: 0.05, period_nm: 25.0, birefringence_gain: 0.02 },
            cladding: CladdingDip { enabled: true, depth: 0.1, offset_nm: 0.6, curvature_gain: 0.05 },
            fresnel_tail: FresnelTail {
                enabled: true,
                ripple: 0.02,
                tail_optical_length_um: 70.0,
                dc_level: 0.03,
                modulation_gain: 1.0,
                phase_gain: 5.0,
                direction_gain: 2.0,
            },
            noise_sigma: 0.005,
        }
    }
}

impl EffectsConfig {
    /// Cosine law and Bragg shift only, no noise.
    pub fn ideal() -> Self {
        let mut e = Self::default();
        e.bendloss.enabled = false;
        e.pdl.enabled = false;
        e.cladding.enabled = false;
        e.fresnel_tail.enabled = false;
        e.noise_sigma = 0.0;
        e
    }

    /// Every term off except the cosine law.
    pub fn cosine_only() -> Self {
        let mut e = Self::ideal();
        e.bragg_shift.enabled = false;
        e
    }

    pub fn any_confounder(&self) -> bool {
        self.bendloss.enabled || self.pdl.enabled || self.cladding.enabled || self.fresnel_tail.enabled
    }

    pub fn validate(&self) -> Result<()> {
        let depth = |name: &str, d: f64| {
            if (0.0..1.0).contains(&d) {
                Ok(())
            } else {
                Err(invalid(format!("{name} must lie in [0, 1), got {d}")))
            }
        };
        depth("bendloss short depth", self.bendloss.short_depth)?;
        depth("bendloss long depth", self.bendloss.long_depth)?;
        depth("pdl depth", self.pdl.depth)?;
        depth("cladding depth", self.cladding.depth)?;
        depth("fresnel ripple", self.fresnel_tail.ripple)?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise_sigma must be non-negative"));
        }
        if !(self.bendloss.short_period_nm > 0.0 && self.bendloss.short_period_nm < self.bendloss.long_period_nm) {
            return Err(invalid("bendloss periods must satisfy 0 < short < long"));
        }
        if !(self.pdl.period_nm > 0.0) {
            return Err(invalid("pdl period must be positive"));
        }
        if !(self.mode_field_gain >= 0.0 && self.bendloss.base_coefficient >= 0.0) {
            return Err(invalid("gains must be non-negative"));
        }
        if !(self.fresnel_tail.tail_optical_length_um > 0.0 && self.fresnel_tail.dc_level >= 0.0) {
            return Err(invalid("fresnel tail length must be positive and dc level non-negative"));
        }
        Ok(())
    }
}
