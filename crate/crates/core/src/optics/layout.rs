use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const PLANE_COUNT: usize = 5;
pub const FBGS_PER_PLANE: usize = 3;
pub const FBG_COUNT: usize = PLANE_COUNT * FBGS_PER_PLANE;
pub const GRID_LEN: usize = 190;
pub const GRID_START_NM: f64 = 800.0;
pub const GRID_END_NM: f64 = 890.0;

/// One eccentric grating.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbgDescriptor {
    pub plane_index: usize,
    /// Bragg wavelength, nm.
    pub lambda_bragg: f64,
    /// Angular position around the core, rad.
    pub phi: f64,
    /// Radial offset from the fiber axis, µm.
    pub r_offset: f64,
    /// Reflection peak FWHM, nm.
    pub peak_fwhm: f64,
    pub base_amplitude: f64,
}

impl FbgDescriptor {
    pub fn r_offset_m(&self) -> f64 {
        self.r_offset * 1e-6
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorLayout {
    /// Sensor length, m.
    pub length: f64,
    /// Arc positions of the sensing planes, m.
    pub plane_positions: Vec<f64>,
    pub fbgs: Vec<FbgDescriptor>,
    /// Spectrometer wavelength grid, nm.
    pub grid: Vec<f64>,
}

/// `GRID_LEN` uniform samples spanning `[800, 890]` nm, both ends included.
pub fn spectrometer_grid() -> Vec<f64> {
    let spacing = (GRID_END_NM - GRID_START_NM) / (GRID_LEN - 1) as f64;
    (0..GRID_LEN).map(|j| GRID_START_NM + spacing * j as f64).collect()
}

/// The 30 cm, five-plane sensor: planes every 5 cm from s = 5 cm, Bragg
/// wavelengths `813 + 4k` nm assigned plane-major with angular positions
/// top, left, right (90°, 180°, 0°).
pub fn default_layout() -> SensorLayout {
    let phis = [FRAC_PI_2, PI, 0.0];
    let fbgs = (0..FBG_COUNT)
        .map(|k| FbgDescriptor {
            plane_index: k / FBGS_PER_PLANE,
            lambda_bragg: 813.0 + 4.0 * k as f64,
            phi: phis[k % FBGS_PER_PLANE],
            r_offset: 2.0,
            peak_fwhm: 1.0,
            base_amplitude: 0.9,
        })
        .collect();
    SensorLayout {
        length: 0.30,
        plane_positions: (1..=PLANE_COUNT).map(|p| 0.05 * p as f64).collect(),
        fbgs,
        grid: spectrometer_grid(),
    }
}

impl SensorLayout {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) {
            return Err(invalid("layout length must be positive"));
        }
        if self.plane_positions.len() != PLANE_COUNT {
            return Err(invalid(format!("expected {PLANE_COUNT} planes")));
        }
        if self.plane_positions.windows(2).any(|w| w[1] <= w[0])
            || self.plane_positions.iter().any(|&s| s <= 0.0 || s >= self.length)
        {
            return Err(invalid("plane positions must be increasing and inside the sensor"));
        }
        if self.fbgs.len() != FBG_COUNT {
            return Err(invalid(format!("expected {FBG_COUNT} gratings")));
        }
        if self.grid.len() != GRID_LEN {
            return Err(invalid(format!("expected a {GRID_LEN}-point grid")));
        }
        let spacing = (GRID_END_NM - GRID_START_NM) / (GRID_LEN - 1) as f64;
        for (j, &l) in self.grid.iter().enumerate() {
            if (l - (GRID_START_NM + spacing * j as f64)).abs() > 1e-9 {
                return Err(invalid("grid must span [800, 890] nm uniformly"));
            }
        }
        for p in 0..PLANE_COUNT {
            let mut phis: Vec<f64> = self.plane_fbgs(p).map(|(_, f)| f.phi.rem_euclid(2.0 * PI)).collect();
            if phis.len() != FBGS_PER_PLANE {
                return Err(invalid(format!("plane {p} must carry {FBGS_PER_PLANE} gratings")));
            }
            phis.sort_by(f64::total_cmp);
            let quarter_gaps = phis.windows(2).filter(|w| ((w[1] - w[0]) - FRAC_PI_2).abs() < 1e-6).count();
            if quarter_gaps != 2 {
                return Err(invalid(format!("plane {p} gratings must sit 90 degrees apart")));
            }
        }
        for (i, f) in self.fbgs.iter().enumerate() {
            if !(813.0..=869.0).contains(&f.lambda_bragg) {
                return Err(invalid(format!("grating {i} Bragg wavelength outside [813, 869] nm")));
            }
            if !(f.r_offset > 0.0 && f.peak_fwhm > 0.0) {
                return Err(invalid(format!("grating {i} needs positive offset and width")));
            }
            if !(f.base_amplitude > 0.0 && f.base_amplitude <= 1.0) {
                return Err(invalid(format!("grating {i} base amplitude outside (0, 1]")));
            }
            if self.fbgs[..i].iter().any(|g| g.lambda_bragg == f.lambda_bragg) {
                return Err(invalid("Bragg wavelengths must be distinct"));
            }
        }
        Ok(())
    }

    /// Gratings on plane `p`, with their global indices.
    pub fn plane_fbgs(&self, p: usize) -> impl Iterator<Item = (usize, &FbgDescriptor)> {
        self.fbgs.iter().enumerate().filter(move |(_, f)| f.plane_index == p)
    }

    pub fn grid_spacing(&self) -> f64 {
        (self.grid[self.grid.len() - 1] - self.grid[0]) / (self.grid.len() - 1) as f64
    }

    pub fn last_plane(&self) -> f64 {
        *self.plane_positions.last().unwrap()
    }
}
