//! Forward model from fiber shape to edge-FBG reflection spectra, with
//! switchable confounders, and the shape and dataset generators built on it.

mod dataset;
mod effects;
mod layout;
mod shapes;
mod simulate;

pub use dataset::{
    generate_dataset, sample_seed, Dataset, DatasetHeader, SampleRecord, NO_GROUP, PLANE_VALUES, SCAN_VALUES,
    SHAPE_VALUES, TEMPLATE_COUNT, TEMPLATE_MEASUREMENTS, TEMPLATE_RADIUS, TEMPLATE_REPETITIONS, TEMPLATE_SEGMENTS,
};
pub use effects::{BendLoss, BraggShift, CladdingDip, EffectsConfig, FresnelTail, PolarizationLoss};
pub use layout::{
    default_layout, spectrometer_grid, FbgDescriptor, SensorLayout, FBGS_PER_PLANE, FBG_COUNT, GRID_END_NM, GRID_LEN,
    GRID_START_NM, PLANE_COUNT,
};
pub use shapes::{
    sample_random_shape, sample_trajectory, session_coefficients, template_shape, trajectory_coefficients,
    SessionConfig, ShapeCoefficients, ShapeSamplerConfig, TEMPLATE_RAMP,
};
pub use simulate::{
    clean_spectrum, finish_scan, peak_amplitudes, plane_bends, sensor_curve, simulate_sample, simulate_scan,
    ScenarioKind, SimSample, SpectrumScan, SCANS_PER_SAMPLE, SHAPE_STEP,
};
