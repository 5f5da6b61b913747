//! Monotone penalized B-spline smoothing of step cumulative hazards.
//!
//! Times are mapped to `[0, 1]` over the jump range. The cumulative hazard
//! just before and at each jump is fitted by a cubic spline whose coefficients are constrained
//! nondecreasing and nonnegative, so the fitted curve is monotone and its
//! derivative, the hazard, is nonnegative everywhere. The roughness penalty
//! is the squared second divided difference of the coefficients at their
//! Greville abscissae; its null space is the linear functions, so heavy
//! smoothing tends to a constant hazard.
//!
//! The penalty weight minimizes an unbiased risk estimate that uses the
//! martingale covariance of the Breslow errors. For well-sampled strata it
//! is then lowered, if needed, until the fit stays close to the step.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::breslow::StepCumulativeHazard;
use crate::baseline::bspline::BSplineBasis;
use crate::baseline::nnqp::solve_nnqp;
use crate::error::{BaselineError, ExperimentError};
use crate::strata::StratumLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineConfig {
    pub n_basis: usize,
    pub grid_points: usize,
    /// Fixed penalty weight (relative to the basis/penalty trace ratio);
    /// `None` selects it from a log grid by estimated risk.
    pub lambda: Option<f64>,
    pub lambda_grid: usize,
    /// Strata with fewer jumps get an unsmoothed curve.
    pub min_jumps: usize,
    /// Strata with at least this many jumps keep the selected fit within
    /// `fidelity_tol` times the total (or two largest jumps) of the step.
    pub fidelity_min_jumps: usize,
    pub fidelity_tol: f64,
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self {
            n_basis: 20,
            grid_points: 200,
            lambda: None,
            lambda_grid: 20,
            min_jumps: 10,
            fidelity_min_jumps: 500,
            fidelity_tol: 0.02,
        }
    }
}

impl SplineConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.n_basis < 5 {
            return Err(BaselineError::InvalidConfig(
                "n_basis must be at least 5".into(),
            ));
        }
        if self.grid_points < 2 || self.lambda_grid < 1 {
            return Err(BaselineError::InvalidConfig(
                "grid sizes must be positive".into(),
            ));
        }
        if !(self.fidelity_tol > 0.0 && self.fidelity_tol.is_finite()) {
            return Err(BaselineError::InvalidConfig(
                "fidelity_tol must be finite and positive".into(),
            ));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(BaselineError::InvalidConfig(
                    "lambda must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothHazardCurve {
    pub stratum: StratumLabel,
    pub grid: Vec<f64>,
    pub cumhaz: Vec<f64>,
    pub hazard: Vec<f64>,
    pub n_jumps: usize,
    pub smoothed: bool,
    pub n_basis: usize,
    /// Penalty weight used, relative to the trace ratio.
    pub lambda: f64,
    /// Quantile knots collided and uniform knots were used instead.
    pub uniform_knots: bool,
}

/// Uniform grid over `[lo, hi]`.
fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| {
            if k + 1 == points {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (points - 1) as f64
            }
        })
        .collect()
}

fn unsmoothed(step: &StepCumulativeHazard, cfg: &SplineConfig) -> SmoothHazardCurve {
    let (lo, hi) = (
        step.knots.first().copied().unwrap_or(0.0),
        step.knots.last().copied().unwrap_or(0.0),
    );
    let g = if hi > lo {
        grid(lo, hi, cfg.grid_points)
    } else {
        vec![lo]
    };
    let cumhaz: Vec<f64> = g.iter().map(|&t| step.value_at(t)).collect();
    let rate = if hi > lo {
        (step.total() - step.increments.first().copied().unwrap_or(0.0)) / (hi - lo)
    } else {
        0.0
    };
    SmoothHazardCurve {
        stratum: step.stratum,
        hazard: vec![rate; g.len()],
        grid: g,
        cumhaz,
        n_jumps: step.len(),
        smoothed: false,
        n_basis: 0,
        lambda: 0.0,
        uniform_knots: false,
    }
}

/// Second divided differences of coefficients at the abscissae `xi`.
fn penalty_matrix(xi: &[f64]) -> DMatrix<f64> {
    let k = xi.len();
    let mut d = DMatrix::zeros(k - 2, k);
    for r in 0..k - 2 {
        let (h0, h1) = (xi[r + 1] - xi[r], xi[r + 2] - xi[r + 1]);
        d[(r, r)] = 1.0 / h0;
        d[(r, r + 1)] = -1.0 / h0 - 1.0 / h1;
        d[(r, r + 2)] = 1.0 / h1;
    }
    d.transpose() * d
}

fn design(basis: &BSplineBasis, xs: &[f64]) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(xs.len(), basis.n_basis());
    for (row, &x) in xs.iter().enumerate() {
        let (first, v) = basis.eval(x);
        for (r, val) in v.iter().enumerate() {
            b[(row, first + r)] = *val;
        }
    }
    b
}

/// `B' S B` for the error covariance of a Breslow estimator sampled at
/// `xs`: the error is a martingale, so points `p` and `q` covary by the sum
/// of squared increments of the jumps counted at both. `counted[p]` is the
/// number of jumps included at point `p`; points are in time order.
fn error_covariance(b: &DMatrix<f64>, counted: &[usize], increments: &[f64]) -> DMatrix<f64> {
    let (n, k) = b.shape();
    let mut out = DMatrix::zeros(k, k);
    // Suffix sums of design rows over points that include jump `l`.
    let mut suffix = DVector::zeros(k);
    let mut p = n;
    for l in (0..increments.len()).rev() {
        while p > 0 && counted[p - 1] > l {
            p -= 1;
            suffix += b.row(p).transpose();
        }
        out.ger(increments[l] * increments[l], &suffix, &suffix, 1.0);
    }
    out
}

fn lambda_grid(points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| {
            if points == 1 {
                1.0
            } else {
                10f64.powf(-6.0 + 10.0 * i as f64 / (points - 1) as f64)
            }
        })
        .collect()
}

/// Unbiased risk estimate `RSS + 2 tr(H S)` of the unconstrained fit under
/// error covariance `S`. Breslow errors are strongly autocorrelated, so
/// criteria assuming independent errors pick far too little smoothing.
fn risk_score(
    b: &DMatrix<f64>,
    btb: &DMatrix<f64>,
    bty: &DVector<f64>,
    y: &DVector<f64>,
    bsb: &DMatrix<f64>,
    pen: &DMatrix<f64>,
) -> f64 {
    let Some(ch) = (btb + pen).cholesky() else {
        return f64::INFINITY;
    };
    let coef = ch.solve(bty);
    (y - b * &coef).norm_squared() + 2.0 * ch.solve(bsb).trace()
}

/// Largest gap between the spline and the step function over the jump
/// range. Between jumps the step is flat and the spline rises, so the
/// extremes sit at the jump points against either one-sided limit.
fn sup_distance(fitted: &DVector<f64>, y: &DVector<f64>) -> f64 {
    fitted
        .iter()
        .zip(y.iter())
        .step_by(2)
        .zip(y.iter().skip(1).step_by(2))
        .map(|((s, pre), post)| (s - pre).abs().max((s - post).abs()))
        .fold(0.0, f64::max)
}

/// Smooths one stratum's step cumulative hazard.
pub fn pspline_smooth(
    step: &StepCumulativeHazard,
    cfg: &SplineConfig,
) -> Result<SmoothHazardCurve, BaselineError> {
    cfg.validate()?;
    let m = step.len();
    if m < cfg.min_jumps.max(2) {
        return Ok(unsmoothed(step, cfg));
    }
    let (t0, t1) = (step.knots[0], step.knots[m - 1]);
    let span = t1 - t0;
    if !(span > 0.0) {
        return Ok(unsmoothed(step, cfg));
    }
    // Both one-sided limits at every jump, so the fit stays level across
    // gaps between sparse jumps.
    let cum = step.cumulative();
    let mut xs = Vec::with_capacity(2 * m);
    let mut ys = Vec::with_capacity(2 * m);
    let mut counted = Vec::with_capacity(2 * m);
    for (k, t) in step.knots.iter().enumerate() {
        let x = (t - t0) / span;
        xs.extend([x, x]);
        ys.extend([cum[k] - step.increments[k], cum[k]]);
        counted.extend([k, k + 1]);
    }
    let y = DVector::from_vec(ys);

    let (basis, uniform_knots) = match BSplineBasis::at_quantiles(&xs, cfg.n_basis) {
        Some(b) => (b, false),
        None => (BSplineBasis::uniform(cfg.n_basis), true),
    };
    let k = basis.n_basis();
    let b = design(&basis, &xs);
    let btb = b.transpose() * &b;
    let bty = b.transpose() * &y;
    let pen = penalty_matrix(&basis.greville());
    let scale = btb.trace() / pen.trace();
    // Coefficients alpha = L gamma with L the lower-triangular ones matrix
    // and gamma >= 0: nonnegative start, nondecreasing increments.
    let l = DMatrix::from_fn(k, k, |i, j| if j <= i { 1.0 } else { 0.0 });
    let lt = l.transpose();
    let c = &lt * &bty;
    let ridge = 1e-13 * btb.trace() / k as f64;
    let fit = |rel: f64| -> DVector<f64> {
        let mut q = &lt * (&btb + &pen * (rel * scale)) * &l;
        for i in 0..k {
            q[(i, i)] += ridge;
        }
        &l * solve_nnqp(&q, &c)
    };

    let (rel, alpha) = match cfg.lambda {
        Some(l) => (l, fit(l)),
        None => {
            let bsb = error_covariance(&b, &counted, &step.increments);
            let grid = lambda_grid(cfg.lambda_grid);
            let scores: Vec<f64> = grid
                .iter()
                .map(|&r| risk_score(&b, &btb, &bty, &y, &bsb, &(&pen * (r * scale))))
                .collect();
            let best = (0..grid.len())
                .min_by(|&i, &j| scores[i].total_cmp(&scores[j]))
                .unwrap_or(0);
            let mut chosen = (grid[best], fit(grid[best]));
            if m >= cfg.fidelity_min_jumps {
                let max_jump = step.increments.iter().copied().fold(0.0, f64::max);
                let tol = (cfg.fidelity_tol * cum[m - 1]).max(2.0 * max_jump);
                for i in (0..=best).rev() {
                    let alpha = if i == best {
                        chosen.1.clone()
                    } else {
                        fit(grid[i])
                    };
                    let ok = sup_distance(&(&b * &alpha), &y) <= tol;
                    chosen = (grid[i], alpha);
                    if ok {
                        break;
                    }
                }
            }
            chosen
        }
    };

    let g = grid(t0, t1, cfg.grid_points);
    let mut cumhaz = Vec::with_capacity(g.len());
    let mut hazard = Vec::with_capacity(g.len());
    for &t in &g {
        let x = ((t - t0) / span).clamp(0.0, 1.0);
        let (first, v) = basis.eval(x);
        let (_, dv) = basis.eval_deriv(x);
        let s: f64 = v
            .iter()
            .enumerate()
            .map(|(r, val)| val * alpha[first + r])
            .sum();
        let ds: f64 = dv
            .iter()
            .enumerate()
            .map(|(r, val)| val * alpha[first + r])
            .sum();
        cumhaz.push(s.max(0.0));
        hazard.push((ds / span).max(0.0));
    }
    // Rounding can leave a one-ulp dip between equal coefficients.
    for i in 1..cumhaz.len() {
        if cumhaz[i] < cumhaz[i - 1] {
            cumhaz[i] = cumhaz[i - 1];
        }
    }
    Ok(SmoothHazardCurve {
        stratum: step.stratum,
        grid: g,
        cumhaz,
        hazard,
        n_jumps: m,
        smoothed: true,
        n_basis: k,
        lambda: rel,
        uniform_knots,
    })
}

/// Smooths every stratum concurrently; output order follows the input.
pub fn smooth_all(
    steps: &[StepCumulativeHazard],
    cfg: &SplineConfig,
) -> Result<Vec<SmoothHazardCurve>, BaselineError> {
    steps.par_iter().map(|s| pspline_smooth(s, cfg)).collect()
}

/// CSV `stratum,time,cumhaz,hazard`.
pub fn write_curves_csv<W: Write>(
    writer: W,
    curves: &[SmoothHazardCurve],
) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["stratum", "time", "cumhaz", "hazard"])?;
    for c in curves {
        for i in 0..c.grid.len() {
            w.write_record([
                c.stratum.as_str().to_string(),
                crate::report::sig12(c.grid[i]),
                crate::report::sig12(c.cumhaz[i]),
                crate::report::sig12(c.hazard[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
