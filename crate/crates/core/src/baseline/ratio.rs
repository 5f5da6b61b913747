//! Stratum hazards relative to the Spontaneous hazard.

use serde::{Deserialize, Serialize};

use crate::baseline::smooth::SmoothHazardCurve;
use crate::error::BaselineError;
use crate::strata::StratumLabel;

/// Points below this Spontaneous hazard are left out of the ratio.
pub const MIN_REFERENCE_HAZARD: f64 = 1e-12;
/// Share of the common time support kept, centred.
pub const CENTRAL_FRACTION: f64 = 0.8;
const RATIO_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCurve {
    pub stratum: StratumLabel,
    pub grid: Vec<f64>,
    pub ratio: Vec<f64>,
    /// Mean of `ratio`; `None` when the supports do not overlap or every
    /// point was excluded.
    pub mean_ratio: Option<f64>,
    pub excluded_points: usize,
    pub smoothed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardRatioSummary {
    pub curves: Vec<RatioCurve>,
}

impl HazardRatioSummary {
    pub fn mean_ratio(&self, stratum: StratumLabel) -> Option<f64> {
        self.curves
            .iter()
            .find(|c| c.stratum == stratum)
            .and_then(|c| c.mean_ratio)
    }
}

/// Linear interpolation of `ys` on the increasing grid `xs`.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.len() == 1 || x <= xs[0] {
        return ys[0];
    }
    let k = xs.partition_point(|&v| v <= x);
    if k >= xs.len() {
        return ys[ys.len() - 1];
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    ys[k - 1] + w * (ys[k] - ys[k - 1])
}

fn central(lo: f64, hi: f64) -> (f64, f64) {
    let trim = 0.5 * (1.0 - CENTRAL_FRACTION) * (hi - lo);
    (lo + trim, hi - trim)
}

/// Mean hazard over the central part of the curve's own time support.
pub fn central_mean(curve: &SmoothHazardCurve) -> f64 {
    let (a, b) = central(curve.grid[0], curve.grid[curve.grid.len() - 1]);
    if !(b > a) {
        return curve.hazard.iter().sum::<f64>() / curve.hazard.len() as f64;
    }
    let pts: Vec<f64> = (0..RATIO_POINTS)
        .map(|k| a + (b - a) * k as f64 / (RATIO_POINTS - 1) as f64)
        .collect();
    pts.iter()
        .map(|&t| interpolate(&curve.grid, &curve.hazard, t))
        .sum::<f64>()
        / RATIO_POINTS as f64
}

/// Ratio curves `hazard_s / hazard_Spontaneous` on the central part of the
/// common support of each pair of curves.
pub fn hazard_ratio_summary(
    curves: &[SmoothHazardCurve],
) -> Result<HazardRatioSummary, BaselineError> {
    let reference = curves
        .iter()
        .find(|c| c.stratum == StratumLabel::Spontaneous)
        .ok_or(BaselineError::MissingReference)?;
    let mut out = Vec::with_capacity(curves.len());
    for c in curves {
        let lo = c.grid[0].max(reference.grid[0]);
        let hi = c.grid[c.grid.len() - 1].min(reference.grid[reference.grid.len() - 1]);
        let (a, b) = central(lo, hi);
        let mut grid = Vec::new();
        let mut ratio = Vec::new();
        let mut excluded = 0;
        if b > a {
            for k in 0..RATIO_POINTS {
                let t = a + (b - a) * k as f64 / (RATIO_POINTS - 1) as f64;
                let den = interpolate(&reference.grid, &reference.hazard, t);
                if den < MIN_REFERENCE_HAZARD {
                    excluded += 1;
                    continue;
                }
                grid.push(t);
                ratio.push(interpolate(&c.grid, &c.hazard, t) / den);
            }
        }
        let mean_ratio = if ratio.is_empty() {
            None
        } else {
            Some(ratio.iter().sum::<f64>() / ratio.len() as f64)
        };
        out.push(RatioCurve {
            stratum: c.stratum,
            grid,
            ratio,
            mean_ratio,
            excluded_points: excluded,
            smoothed: c.smoothed,
        });
    }
    Ok(HazardRatioSummary { curves: out })
}
