use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::effects::EffectsConfig;
use super::layout::{SensorLayout, GRID_LEN, PLANE_COUNT};
use super::shapes::{session_coefficients, template_shape, trajectory_coefficients, ShapeSamplerConfig};
use super::simulate::{plane_bends, simulate_sample, ScenarioKind, SimSample, SCANS_PER_SAMPLE};
use crate::error::{invalid, Result};
use crate::geometry::{CurvatureProfile, MarkerShape, MARKER_COUNT};

pub const SCAN_VALUES: usize = SCANS_PER_SAMPLE * GRID_LEN;
pub const SHAPE_VALUES: usize = MARKER_COUNT * 3;
pub const PLANE_VALUES: usize = PLANE_COUNT * 2;

/// Test-set bend segments: mid-gap between three plane pairs and 1 cm past the last plane.
pub const TEMPLATE_SEGMENTS: [[f64; 2]; 4] = [[0.11, 0.14], [0.16, 0.19], [0.21, 0.24], [0.26, 0.29]];
pub const TEMPLATE_RADIUS: f64 = 0.05;
pub const TEMPLATE_REPETITIONS: usize = 2;
pub const TEMPLATE_MEASUREMENTS: usize = 40;
pub const TEMPLATE_COUNT: usize = TEMPLATE_SEGMENTS.len() * TEMPLATE_REPETITIONS * TEMPLATE_MEASUREMENTS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub kind: ScenarioKind,
    pub count: usize,
    pub seed: u64,
    pub layout: SensorLayout,
    pub effects: EffectsConfig,
    pub sampler: ShapeSamplerConfig,
}

/// Compact, single-precision form of a [`SimSample`].
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub seed: u64,
    pub tag: ScenarioKind,
    /// Pose group: hold index for session data, pose index for templates,
    /// `u32::MAX` when the sample belongs to no group.
    pub group: u32,
    /// Three scans back to back, `SCAN_VALUES` values.
    pub scans: Vec<f32>,
    /// Marker coordinates `x, y, z` per marker, mm.
    pub shape: Vec<f32>,
    /// `κ, θ` at each sensing plane.
    pub planes: Vec<f32>,
}

pub const NO_GROUP: u32 = u32::MAX;

impl SampleRecord {
    pub fn from_sample(s: &SimSample, layout: &SensorLayout, group: u32) -> Self {
        Self {
            seed: s.seed,
            tag: s.scenario_tag,
            group,
            scans: s.scans.iter().flat_map(|x| x.intensities.iter().map(|&v| v as f32)).collect(),
            shape: s.shape.to_flat().into_iter().map(|v| v as f32).collect(),
            planes: plane_bends(&s.profile, layout).into_iter().flat_map(|(k, t)| [k as f32, t as f32]).collect(),
        }
    }

    pub fn marker_shape(&self) -> MarkerShape {
        let v: Vec<f64> = self.shape.iter().map(|&x| x as f64).collect();
        MarkerShape::from_flat(&v).expect("record holds a valid shape")
    }

    /// Scan `k` (0..3) as a slice of `GRID_LEN` values.
    pub fn scan(&self, k: usize) -> &[f32] {
        &self.scans[k * GRID_LEN..(k + 1) * GRID_LEN]
    }

    pub fn validate(&self) -> Result<()> {
        if self.scans.len() != SCAN_VALUES || self.shape.len() != SHAPE_VALUES || self.planes.len() != PLANE_VALUES {
            return Err(invalid("record has wrong field sizes"));
        }
        if !self.scans.iter().chain(&self.shape).chain(&self.planes).all(|v| v.is_finite()) {
            return Err(invalid("record holds non-finite values"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// A dataset holding the given records under the same header.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let records: Vec<_> = indices.iter().map(|&i| self.records[i].clone()).collect();
        Self { header: DatasetHeader { count: records.len(), ..self.header.clone() }, records }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sample `index` within a dataset seeded with `seed`.
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    seed ^ splitmix64(index)
}

/// RNG for dataset-level draws (shape walks, template angles), kept apart
/// from every per-sample stream.
fn dataset_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

struct Planned {
    profile: CurvatureProfile,
    group: u32,
}

/// Generates `count` samples of the given kind (templates always yield
/// `TEMPLATE_COUNT`). Shape sequences come from one dataset-level stream;
/// each sample's noise comes from its own stream seeded by [`sample_seed`],
/// so the result does not depend on thread scheduling.
pub fn generate_dataset(
    kind: ScenarioKind,
    count: usize,
    layout: &SensorLayout,
    effects: &EffectsConfig,
    cfg: &ShapeSamplerConfig,
    seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    layout.validate()?;
    effects.validate()?;
    cfg.validate()?;
    if cfg.length < layout.length - 1e-12 {
        return Err(invalid("sampler length shorter than the sensor"));
    }
    let mut rng = dataset_rng(seed);
    let planned: Vec<Planned> = match kind {
        ScenarioKind::Random => session_coefficients(cfg, count, &mut rng)
            .into_iter()
            .map(|(c, hold)| Ok(Planned { profile: c.to_profile(cfg)?, group: hold.unwrap_or(NO_GROUP) }))
            .collect::<Result<_>>()?,
        ScenarioKind::Trajectory => trajectory_coefficients(cfg, count, &mut rng)
            .into_iter()
            .map(|c| Ok(Planned { profile: c.to_profile(cfg)?, group: NO_GROUP }))
            .collect::<Result<_>>()?,
        ScenarioKind::Template => {
            let mut out = Vec::with_capacity(TEMPLATE_COUNT);
            for (k, seg) in TEMPLATE_SEGMENTS.iter().enumerate() {
                for rep in 0..TEMPLATE_REPETITIONS {
                    let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                    let profile = template_shape(*seg, TEMPLATE_RADIUS, theta, layout)?;
                    let group = (k * TEMPLATE_REPETITIONS + rep) as u32;
                    out.extend((0..TEMPLATE_MEASUREMENTS).map(|_| Planned { profile: profile.clone(), group }));
                }
            }
            out
        }
    };
    let records = planned
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let s = sample_seed(seed, i as u64);
            let mut sample = simulate_sample(&p.profile, layout, effects, &mut ChaCha8Rng::seed_from_u64(s))?;
            sample.scenario_tag = kind;
            sample.seed = s;
            Ok(SampleRecord::from_sample(&sample, layout, p.group))
        })
        .collect::<Result<Vec<_>>>()?;
    let header = DatasetHeader {
        kind,
        count: records.len(),
        seed,
        layout: layout.clone(),
        effects: effects.clone(),
        sampler: cfg.clone(),
    };
    Ok(Dataset { header, records })
}
