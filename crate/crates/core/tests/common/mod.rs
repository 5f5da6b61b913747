#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remfrailty::error::EstimationError;
use remfrailty::estimation::{
    build_model_data, laplace_marginal, Derivatives, DyadCovariates, ModelData, Parameters,
    PartialLikelihood, RiskPolicy, VarianceSpec,
};
use remfrailty::events::{EventHistory, RelationalEvent, SymbolTable};
use remfrailty::strata::TriadicKind;

/// A random small history with random covariates, stratification and
/// parameters.
pub fn random_instance(seed: u64) -> (ModelData, Parameters) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..8);
    let m = rng.random_range(10..60);
    let mut t = 0.0;
    let events: Vec<RelationalEvent> = (0..m)
        .map(|_| {
            t += rng.random::<f64>() + 0.01;
            let a = rng.random_range(0..n);
            let b = (a + rng.random_range(1..n)) % n;
            RelationalEvent::new(a, b, t)
        })
        .collect();
    let h = EventHistory::new(SymbolTable::numeric(n), events).unwrap();
    let kind = TriadicKind::ALL[rng.random_range(0..4)];
    let policy = if rng.random::<bool>() {
        RiskPolicy::Full
    } else {
        RiskPolicy::Sampled {
            m: rng.random_range(1..6),
            seed: rng.random(),
        }
    };
    let p = rng.random_range(0..3);
    let vals: Vec<f64> = (0..n * n * p)
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    let mut vals = vals;
    for i in 0..n {
        for k in 0..p {
            vals[(i * n + i) * p + k] = 0.0;
        }
    }
    let cov = DyadCovariates::new(n, p, vals).unwrap();
    let data = build_model_data(&h, kind, policy)
        .unwrap()
        .with_covariates(cov)
        .unwrap();
    let mut draw = |k: usize| {
        (0..k)
            .map(|_| rng.random::<f64>() * 1.6 - 0.8)
            .collect::<Vec<f64>>()
    };
    let params = Parameters {
        theta: draw(p),
        b_exp: draw(n),
        b_pop: draw(n),
    };
    (data, params)
}

/// Direct evaluation over explicitly listed risk sets.
pub fn naive_lpl(data: &ModelData, params: &Parameters) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = data.n_actors();
    let p = params.theta.len();
    let q = p + 2 * n;
    let design = |i: usize, j: usize| {
        let mut z = DVector::zeros(q);
        let d = i * n + j;
        for k in 0..p {
            z[k] = data.covariates().row(d)[k];
        }
        z[p + i] = 1.0;
        z[p + n + j] = 1.0;
        z
    };
    let theta = params.to_vector();
    let mut value = 0.0;
    let mut grad = DVector::zeros(q);
    let mut hess = DMatrix::zeros(q, q);
    for (e, rs) in data.risk_sets().iter().enumerate() {
        let rec = data.events()[e];
        let zs: Vec<DVector<f64>> = rs.iter().map(|&(i, j)| design(i, j)).collect();
        let etas: Vec<f64> = zs.iter().map(|z| z.dot(&theta)).collect();
        let ze = design(rec.sender, rec.receiver);
        let total: f64 = etas.iter().map(|v| v.exp()).sum();
        value += ze.dot(&theta) - total.ln();
        let mut mean = DVector::zeros(q);
        let mut second = DMatrix::zeros(q, q);
        for (z, eta) in zs.iter().zip(&etas) {
            let w = eta.exp() / total;
            mean += z * w;
            second += z * z.transpose() * w;
        }
        grad += ze - &mean;
        hess -= second - &mean * mean.transpose();
    }
    (value, grad, hess)
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `log int exp(f(x)) dx` by the trapezoid rule on `[lo, hi]`.
pub fn log_trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    let h = (hi - lo) / (points - 1) as f64;
    let vals: Vec<f64> = (0..points).map(|k| f(lo + h * k as f64)).collect();
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = vals
        .iter()
        .enumerate()
        .map(|(k, v)| (v - m).exp() * if k == 0 || k + 1 == points { 0.5 } else { 1.0 })
        .sum();
    m + (s * h).ln()
}

pub fn normal_logpdf(x: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * x * x / var
}

/// `0->1, 1->0`, then alternating arcs until `forward` and `backward`
/// extra events of each direction are used up.
pub fn two_actor_history(forward: usize, backward: usize) -> EventHistory {
    let mut arcs = vec![(0, 1), (1, 0)];
    let (mut f, mut b) = (forward, backward);
    while f + b > 0 {
        if f > 0 {
            arcs.push((0, 1));
            f -= 1;
        }
        if b > 0 {
            arcs.push((1, 0));
            b -= 1;
        }
    }
    let events = arcs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| RelationalEvent::new(a, b, k as f64 + 1.0))
        .collect();
    EventHistory::new(SymbolTable::numeric(2), events).unwrap()
}

/// A two-parameter logistic objective on one actor's two frailties.
pub struct Toy {
    pub rows: Vec<(f64, f64, f64)>,
}

impl PartialLikelihood for Toy {
    fn n_fixed(&self) -> usize {
        0
    }
    fn n_actors(&self) -> usize {
        1
    }
    fn log_lik(&self, p: &Parameters) -> Result<f64, EstimationError> {
        Ok(self.log_lik_derivs(p)?.value)
    }
    fn log_lik_derivs(&self, p: &Parameters) -> Result<Derivatives, EstimationError> {
        let (x, y) = (p.b_exp[0], p.b_pop[0]);
        let mut value = 0.0;
        let mut g = DVector::zeros(2);
        let mut h = DMatrix::zeros(2, 2);
        for &(a, c, u) in &self.rows {
            let eta = a * x + c * y;
            let pr = 1.0 / (1.0 + (-eta).exp());
            value += u * eta - (1.0 + eta.exp()).ln();
            let z = DVector::from_vec(vec![a, c]);
            g += &z * (u - pr);
            h -= &z * z.transpose() * (pr * (1.0 - pr));
        }
        Ok(Derivatives {
            value,
            gradient: g,
            hessian: h,
        })
    }
}

/// Laplace and quadrature log marginals for the two-actor history, where
/// the likelihood depends on the frailties only through the log-rate
/// contrast of `0->1` over `1->0`, Gaussian a priori.
pub fn two_actor_marginals(se: f64, sp: f64) -> (f64, f64) {
    let h = two_actor_history(120, 60);
    let data = build_model_data(&h, TriadicKind::Transitive, RiskPolicy::Full).unwrap();
    let phi = VarianceSpec::new(se, sp).unwrap();
    let var = 2.0 * se * se + 2.0 * sp * sp;
    let g = |d: f64| {
        let p = Parameters {
            theta: vec![],
            b_exp: vec![d, 0.0],
            b_pop: vec![0.0, 0.0],
        };
        data.log_lik(&p).unwrap() + normal_logpdf(d, var)
    };
    let sd = var.sqrt();
    let exact = log_trapezoid(g, -10.0 * sd, 10.0 * sd, 40_001);
    (laplace_marginal(&data, &phi).unwrap(), exact)
}

pub fn toy() -> Toy {
    let rows = (0..150)
        .map(|k| {
            let a = [1.0, 0.0, 1.0][k % 3];
            let c = [0.0, 1.0, -1.0][k % 3];
            let u = if (k * 7) % 5 < 3 { 1.0 } else { 0.0 };
            (a, c, u)
        })
        .collect();
    Toy { rows }
}

/// Laplace and tensor-trapezoid log marginals for the two-frailty toy.
pub fn toy_marginals(se: f64, sp: f64) -> (f64, f64) {
    let toy = toy();
    let phi = VarianceSpec::new(se, sp).unwrap();
    let inner = |x: f64| {
        log_trapezoid(
            |y| {
                let p = Parameters {
                    theta: vec![],
                    b_exp: vec![x],
                    b_pop: vec![y],
                };
                toy.log_lik(&p).unwrap() + normal_logpdf(y, sp * sp)
            },
            -8.0 * sp,
            8.0 * sp,
            401,
        ) + normal_logpdf(x, se * se)
    };
    let exact = log_trapezoid(inner, -8.0 * se, 8.0 * se, 401);
    (laplace_marginal(&toy, &phi).unwrap(), exact)
}
