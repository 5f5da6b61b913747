//! Laplace approximation of the log partial likelihood integrated over the
//! Gaussian frailties.
//!
//! With `Sigma = diag(sigma_exp^2 I, sigma_pop^2 I)` and the inner mode
//! `(theta_hat, b_hat)`, the Gaussian normalizing constants of the prior and
//! of the Laplace integral cancel, leaving
//! `lppl(theta_hat, b_hat) - 0.5 log det Sigma - 0.5 log det H_bb`, where
//! `H_bb` is the frailty block of the negated Hessian of `lppl`.

use nalgebra::Cholesky;

use crate::error::EstimationError;
use crate::estimation::likelihood::{Parameters, PartialLikelihood, VarianceSpec};
use crate::estimation::newton::{inner_newton, NewtonOptions, NewtonOutcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceOptions {
    /// Keep the `-0.5 log det H_bb` term; without it the objective is the
    /// plain profile of the penalized likelihood.
    pub include_logdet: bool,
    pub newton: NewtonOptions,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self {
            include_logdet: true,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LaplaceEval {
    pub phi: VarianceSpec,
    pub value: f64,
    pub lppl: f64,
    pub log_det_sigma: f64,
    pub log_det_hbb: f64,
    pub params: Parameters,
    pub newton: NewtonOutcome,
}

/// Evaluates the approximation at `phi`, starting the inner solver at `init`.
pub fn laplace_at<L: PartialLikelihood + ?Sized>(
    data: &L,
    phi: &VarianceSpec,
    init: &Parameters,
    opts: &LaplaceOptions,
) -> Result<LaplaceEval, EstimationError> {
    let (params, newton) = inner_newton(data, phi, init, &opts.newton)?;
    if !newton.converged {
        return Err(EstimationError::InnerNotConverged {
            grad_norm: newton.grad_norm,
        });
    }
    let p = data.n_fixed();
    let q = 2 * data.n_actors();
    let hbb = -newton.derivs.hessian.view((p, p), (q, q)).into_owned();
    let chol = Cholesky::new(hbb).ok_or(EstimationError::NotPositiveDefinite)?;
    let log_det_hbb = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>();
    let log_det_sigma = phi.log_det(data.n_actors());
    let lppl = newton.derivs.value;
    let mut value = lppl - 0.5 * log_det_sigma;
    if opts.include_logdet {
        value -= 0.5 * log_det_hbb;
    }
    if !value.is_finite() {
        return Err(EstimationError::NonFinite);
    }
    Ok(LaplaceEval {
        phi: *phi,
        value,
        lppl,
        log_det_sigma,
        log_det_hbb,
        params,
        newton,
    })
}

/// Laplace-approximated log integrated partial likelihood at `phi`.
pub fn laplace_marginal<L: PartialLikelihood + ?Sized>(
    data: &L,
    phi: &VarianceSpec,
) -> Result<f64, EstimationError> {
    let init = Parameters::zeros(data.n_fixed(), data.n_actors());
    laplace_at(data, phi, &init, &LaplaceOptions::default()).map(|e| e.value)
}
