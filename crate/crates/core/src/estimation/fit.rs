//! Model fits: fixed effects only, and frailty models whose variances
//! maximize the Laplace-approximated integrated partial likelihood.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{EstimationError, ExperimentError};
use crate::estimation::laplace::{laplace_at, LaplaceEval, LaplaceOptions};
use crate::estimation::likelihood::{Parameters, PartialLikelihood, VarianceSpec};
use crate::estimation::nelder_mead::{minimize, NmOptions};
use crate::estimation::newton::{maximize, FixedEffectsObjective, NewtonOptions};
use crate::events::{ActorId, SymbolTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: Vec<f64>,
    pub b_exp: Vec<f64>,
    pub b_pop: Vec<f64>,
    pub sigma_exp: Option<f64>,
    pub sigma_pop: Option<f64>,
    /// Log partial likelihood at the estimates.
    pub loglik: f64,
    /// Laplace-approximated log integrated partial likelihood at the estimates.
    pub marginal: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub risk_policy: Option<String>,
    pub gradient_norm: f64,
    pub sigma_exp_at_lower_bound: bool,
    pub sigma_pop_at_lower_bound: bool,
}

impl FitResult {
    pub fn sigma(&self) -> Option<VarianceSpec> {
        match (self.sigma_exp, self.sigma_pop) {
            (Some(sigma_exp), Some(sigma_pop)) => Some(VarianceSpec {
                sigma_exp,
                sigma_pop,
            }),
            _ => None,
        }
    }

    pub fn params(&self) -> Parameters {
        Parameters {
            theta: self.theta.clone(),
            b_exp: self.b_exp.clone(),
            b_pop: self.b_pop.clone(),
        }
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), ExperimentError> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// CSV `actor,b_exp_hat,b_pop_hat`.
    pub fn write_frailty_csv<W: Write>(
        &self,
        writer: W,
        symbols: &SymbolTable,
    ) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["actor", "b_exp_hat", "b_pop_hat"])?;
        for i in 0..self.b_exp.len() {
            w.write_record([
                symbols.label(ActorId(i)).to_string(),
                self.b_exp[i].to_string(),
                self.b_pop[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrailtyOptions {
    pub init: VarianceSpec,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Outer search over `(ln sigma_exp, ln sigma_pop)`.
    pub outer: NmOptions,
    pub laplace: LaplaceOptions,
}

impl Default for FrailtyOptions {
    fn default() -> Self {
        Self {
            init: VarianceSpec {
                sigma_exp: 1.0,
                sigma_pop: 1.0,
            },
            sigma_min: 1e-3,
            sigma_max: 1e2,
            outer: NmOptions::default(),
            laplace: LaplaceOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FixedOptions {
    pub newton: NewtonOptions,
}

fn to_phi(x: &[f64]) -> VarianceSpec {
    VarianceSpec {
        sigma_exp: x[0].exp(),
        sigma_pop: x[1].exp(),
    }
}

/// Fits the frailty model: a derivative-free search over the log standard
/// deviations, each evaluation solving the penalized problem by Newton's
/// method warm-started from the previous solution.
pub fn fit_frailty<L: PartialLikelihood + ?Sized>(
    data: &L,
    opts: &FrailtyOptions,
) -> Result<FitResult, EstimationError> {
    if !(opts.sigma_min > 0.0 && opts.sigma_max > opts.sigma_min) {
        return Err(EstimationError::InvalidInput(
            "need 0 < sigma_min < sigma_max".into(),
        ));
    }
    let zeros = Parameters::zeros(data.n_fixed(), data.n_actors());
    let (lo, hi) = (opts.sigma_min.ln(), opts.sigma_max.ln());
    let lower = [lo, lo];
    let upper = [hi, hi];

    let evaluate = |x: &[f64], warm: &Parameters| -> Result<LaplaceEval, EstimationError> {
        let phi = to_phi(x);
        laplace_at(data, &phi, warm, &opts.laplace)
            .or_else(|_| laplace_at(data, &phi, &zeros, &opts.laplace))
    };

    let mut warm = zeros.clone();
    let mut best: Option<LaplaceEval> = None;
    let mut last_err = None;
    let x0 = [opts.init.sigma_exp.ln(), opts.init.sigma_pop.ln()];
    let nm = minimize(
        |x| match evaluate(x, &warm) {
            Ok(ev) => {
                let v = ev.value;
                warm = ev.params.clone();
                if best.as_ref().is_none_or(|b| v > b.value) {
                    best = Some(ev);
                }
                -v
            }
            Err(e) => {
                last_err = Some(e);
                f64::INFINITY
            }
        },
        &x0,
        &lower,
        &upper,
        &opts.outer,
    );
    let Some(mut ev) = best else {
        return Err(last_err.unwrap_or(EstimationError::NonFinite));
    };
    let mut x = [ev.phi.sigma_exp.ln(), ev.phi.sigma_pop.ln()];

    // Profiles that keep rising toward zero variance end on the bound.
    let tol = opts.outer.x_tol;
    for k in 0..2 {
        if x[k] > lo + tol && x[k] < lo + 1.0 {
            let mut xb = x;
            xb[k] = lo;
            if let Ok(at_bound) = evaluate(&xb, &ev.params) {
                if at_bound.value >= ev.value - 1e-9 * ev.value.abs().max(1.0) {
                    x = xb;
                    ev = at_bound;
                }
            }
        }
    }
    let phi = ev.phi;

    let loglik = data.log_lik(&ev.params)?;
    Ok(FitResult {
        theta: ev.params.theta.clone(),
        b_exp: ev.params.b_exp.clone(),
        b_pop: ev.params.b_pop.clone(),
        sigma_exp: Some(phi.sigma_exp),
        sigma_pop: Some(phi.sigma_pop),
        loglik,
        marginal: Some(ev.value),
        converged: nm.converged && ev.newton.converged,
        iterations: nm.iterations,
        risk_policy: data.risk_policy().map(|p| p.to_string()),
        gradient_norm: ev.newton.grad_norm,
        sigma_exp_at_lower_bound: x[0] <= lo + tol,
        sigma_pop_at_lower_bound: x[1] <= lo + tol,
    })
}

/// Fits the fixed effects with every frailty held at zero. Without fixed
/// covariates this only evaluates the stratified likelihood.
pub fn fit_fixed<L: PartialLikelihood + ?Sized>(
    data: &L,
    opts: &FixedOptions,
) -> Result<FitResult, EstimationError> {
    let (p, n) = (data.n_fixed(), data.n_actors());
    let (theta, loglik, iterations, converged, gradient_norm) = if p == 0 {
        (
            Vec::new(),
            data.log_lik(&Parameters::zeros(0, n))?,
            0,
            true,
            0.0,
        )
    } else {
        let obj = FixedEffectsObjective { data };
        let out = maximize(&obj, DVector::zeros(p), &opts.newton)?;
        (
            out.x.as_slice().to_vec(),
            out.derivs.value,
            out.iterations,
            out.converged,
            out.grad_norm,
        )
    };
    Ok(FitResult {
        theta,
        b_exp: vec![0.0; n],
        b_pop: vec![0.0; n],
        sigma_exp: None,
        sigma_pop: None,
        loglik,
        marginal: None,
        converged,
        iterations,
        risk_policy: data.risk_policy().map(|p| p.to_string()),
        gradient_norm,
        sigma_exp_at_lower_bound: false,
        sigma_pop_at_lower_bound: false,
    })
}
