//! Damped Newton maximization for smooth concave objectives.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::EstimationError;
use crate::estimation::likelihood::{
    lppl, lppl_value, Derivatives, Parameters, PartialLikelihood, VarianceSpec,
};

/// A twice-differentiable objective to be maximized.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> Result<f64, EstimationError>;
    fn derivatives(&self, x: &DVector<f64>) -> Result<Derivatives, EstimationError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop once `max |gradient|` falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 50,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    /// Objective value, gradient and Hessian at `x`.
    pub derivs: Derivatives,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Number of steps whose Newton system needed a ridge to factor.
    pub ridge_repairs: usize,
    /// Whether the Hessian at `x` is negative definite.
    pub negative_definite: bool,
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Factors `-H`, adding a growing ridge when it is not positive definite.
fn factor_negated(h: &DMatrix<f64>) -> (Cholesky<f64, Dyn>, bool) {
    let neg = -h;
    if let Some(c) = Cholesky::new(neg.clone()) {
        return (c, false);
    }
    let scale = neg.diagonal().iter().fold(1.0f64, |m, d| m.max(d.abs()));
    let mut tau = 1e-10 * scale;
    loop {
        let mut m = neg.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += tau;
        }
        if let Some(c) = Cholesky::new(m) {
            return (c, true);
        }
        tau *= 10.0;
    }
}

/// Maximizes `obj` from `x0` with Newton steps and step halving.
///
/// Non-convergence is reported through [`NewtonOutcome::converged`]; only
/// failures to evaluate the objective at `x0` are errors.
pub fn maximize<O: Objective + ?Sized>(
    obj: &O,
    x0: DVector<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome, EstimationError> {
    let mut x = x0;
    let mut d = obj.derivatives(&x)?;
    let mut iterations = 0;
    let mut repairs = 0;
    let mut converged = max_norm(&d.gradient) < opts.grad_tol;
    while !converged && iterations < opts.max_iter {
        let (chol, repaired) = factor_negated(&d.hessian);
        repairs += repaired as usize;
        let step = chol.solve(&d.gradient);
        let slack = 1e-12 * d.value.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand = &x + &step * t;
            if let Ok(v) = obj.value(&cand) {
                if v.is_finite() && v >= d.value - slack {
                    accepted = Some(cand);
                    break;
                }
            }
            t *= 0.5;
        }
        iterations += 1;
        let Some(next) = accepted else { break };
        x = next;
        d = obj.derivatives(&x)?;
        converged = max_norm(&d.gradient) < opts.grad_tol;
    }
    let grad_norm = max_norm(&d.gradient);
    let negative_definite = Cholesky::new(-&d.hessian).is_some();
    Ok(NewtonOutcome {
        x,
        derivs: d,
        iterations,
        converged,
        grad_norm,
        ridge_repairs: repairs,
        negative_definite,
    })
}

/// The log penalized partial likelihood as a function of the stacked vector
/// `[theta; b_exp; b_pop]`.
pub struct PenalizedObjective<'a, L: ?Sized> {
    pub data: &'a L,
    pub phi: VarianceSpec,
}

impl<L: PartialLikelihood + ?Sized> Objective for PenalizedObjective<'_, L> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64, EstimationError> {
        let p = Parameters::from_vector(x, self.data.n_fixed(), self.data.n_actors());
        lppl_value(self.data, &p, &self.phi)
    }

    fn derivatives(&self, x: &DVector<f64>) -> Result<Derivatives, EstimationError> {
        let p = Parameters::from_vector(x, self.data.n_fixed(), self.data.n_actors());
        lppl(self.data, &p, &self.phi)
    }
}

/// The log partial likelihood in `theta` alone, with all frailties at zero.
pub struct FixedEffectsObjective<'a, L: ?Sized> {
    pub data: &'a L,
}

impl<L: PartialLikelihood + ?Sized> FixedEffectsObjective<'_, L> {
    fn params(&self, x: &DVector<f64>) -> Parameters {
        let mut p = Parameters::zeros(self.data.n_fixed(), self.data.n_actors());
        p.theta.copy_from_slice(x.as_slice());
        p
    }
}

impl<L: PartialLikelihood + ?Sized> Objective for FixedEffectsObjective<'_, L> {
    fn dim(&self) -> usize {
        self.data.n_fixed()
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64, EstimationError> {
        self.data.log_lik(&self.params(x))
    }

    fn derivatives(&self, x: &DVector<f64>) -> Result<Derivatives, EstimationError> {
        let full = self.data.log_lik_derivs(&self.params(x))?;
        let p = self.data.n_fixed();
        Ok(Derivatives {
            value: full.value,
            gradient: full.gradient.rows(0, p).into_owned(),
            hessian: full.hessian.view((0, 0), (p, p)).into_owned(),
        })
    }
}

/// Maximizes the log penalized partial likelihood at fixed variances.
pub fn inner_newton<L: PartialLikelihood + ?Sized>(
    data: &L,
    phi: &VarianceSpec,
    init: &Parameters,
    opts: &NewtonOptions,
) -> Result<(Parameters, NewtonOutcome), EstimationError> {
    let obj = PenalizedObjective { data, phi: *phi };
    let out = maximize(&obj, init.to_vector(), opts)?;
    let params = Parameters::from_vector(&out.x, data.n_fixed(), data.n_actors());
    Ok((params, out))
}
