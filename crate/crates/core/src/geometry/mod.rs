//! Intrinsic-coordinate curve machinery: integrating curvature and twist into
//! centerlines, spline resampling, finite-difference curvature/torsion
//! estimation, and piecewise reconstruction from per-plane bend readings.
//!
//! Lengths are in metres except [`MarkerShape`], which is in millimetres to
//! match the regression targets.

mod curve;
mod estimate;
mod profile;
mod reconstruct;
mod spline;

pub(crate) use curve::step_count;
pub use curve::{integrate_frenet, ArcLengthCurve, Frame};
pub use estimate::{
    estimate_curvature_torsion, transported_frames, CurvatureEstimate, CurveAnalyzer, KAPPA_STRAIGHT_EPS,
};
pub use profile::{wrap_angle, Bend, CurvatureProfile, Interpolation, ProfileSample};
pub use reconstruct::{
    markers_from_curve, readings_profile, reconstruct_from_plane_readings, MarkerShape, PlaneReading,
    MARKER_COUNT,
};
pub use spline::{resample_spline, CubicSpline3, DEFAULT_RESOLUTION};

pub type Vec3 = nalgebra::Vector3<f64>;
