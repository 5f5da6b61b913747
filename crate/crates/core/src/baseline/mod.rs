//! Stratum baseline hazards: Breslow steps, monotone P-spline smoothing and
//! hazard ratios against the Spontaneous stratum.

pub mod breslow;
pub mod bspline;
pub mod nnqp;
pub mod ratio;
pub mod smooth;

pub use breslow::{breslow, breslow_at, BreslowReport, StepCumulativeHazard};
pub use ratio::{central_mean, hazard_ratio_summary, HazardRatioSummary, RatioCurve};
pub use smooth::{pspline_smooth, smooth_all, write_curves_csv, SmoothHazardCurve, SplineConfig};
