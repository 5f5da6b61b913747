//! Stratified Cox log partial likelihood in the fixed effects and the
//! sender/receiver frailties, with exact gradient and Hessian.
//!
//! The linear predictor of dyad `i -> j` is
//! `eta = theta . x_ij + b_exp[i] + b_pop[j]`, and each event contributes
//! `eta(event) - log sum_{risk set} exp(eta)`. Parameter vectors are laid out
//! as `[theta (p), b_exp (n), b_pop (n)]`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::EstimationError;
use crate::estimation::data::{ModelData, RiskPolicy, RiskSets};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub theta: Vec<f64>,
    pub b_exp: Vec<f64>,
    pub b_pop: Vec<f64>,
}

impl Parameters {
    pub fn zeros(n_fixed: usize, n_actors: usize) -> Self {
        Self {
            theta: vec![0.0; n_fixed],
            b_exp: vec![0.0; n_actors],
            b_pop: vec![0.0; n_actors],
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.theta.len() + 2 * self.b_exp.len(),
            self.theta
                .iter()
                .chain(&self.b_exp)
                .chain(&self.b_pop)
                .copied(),
        )
    }

    pub fn from_vector(v: &DVector<f64>, n_fixed: usize, n_actors: usize) -> Self {
        let s = v.as_slice();
        Self {
            theta: s[..n_fixed].to_vec(),
            b_exp: s[n_fixed..n_fixed + n_actors].to_vec(),
            b_pop: s[n_fixed + n_actors..n_fixed + 2 * n_actors].to_vec(),
        }
    }

    fn check(&self, n_fixed: usize, n_actors: usize) -> Result<(), EstimationError> {
        if self.theta.len() != n_fixed
            || self.b_exp.len() != n_actors
            || self.b_pop.len() != n_actors
        {
            return Err(EstimationError::InvalidInput(
                "parameter dimensions do not match the data".into(),
            ));
        }
        if self
            .theta
            .iter()
            .chain(&self.b_exp)
            .chain(&self.b_pop)
            .any(|v| !v.is_finite())
        {
            return Err(EstimationError::InvalidInput(
                "parameters must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Standard deviations of the expansiveness and popularity frailties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSpec {
    pub sigma_exp: f64,
    pub sigma_pop: f64,
}

impl VarianceSpec {
    pub fn new(sigma_exp: f64, sigma_pop: f64) -> Result<Self, EstimationError> {
        if !(sigma_exp > 0.0 && sigma_pop > 0.0) || !sigma_exp.is_finite() || !sigma_pop.is_finite()
        {
            return Err(EstimationError::InvalidInput(
                "variance parameters must be positive and finite".into(),
            ));
        }
        Ok(Self {
            sigma_exp,
            sigma_pop,
        })
    }

    /// `log det Sigma` for `n` actors (diagonal blocks `sigma^2 I`).
    pub fn log_det(&self, n_actors: usize) -> f64 {
        2.0 * n_actors as f64 * (self.sigma_exp.ln() + self.sigma_pop.ln())
    }
}

/// Value, gradient and Hessian of a scalar objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// A log partial likelihood in `(theta, b_exp, b_pop)`. Implemented by
/// [`ModelData`]; tests substitute closed-form objectives.
pub trait PartialLikelihood: Sync {
    fn n_fixed(&self) -> usize;
    fn n_actors(&self) -> usize;
    fn log_lik(&self, params: &Parameters) -> Result<f64, EstimationError>;
    fn log_lik_derivs(&self, params: &Parameters) -> Result<Derivatives, EstimationError>;

    fn dim(&self) -> usize {
        self.n_fixed() + 2 * self.n_actors()
    }

    fn risk_policy(&self) -> Option<RiskPolicy> {
        None
    }
}

pub fn lpl<L: PartialLikelihood + ?Sized>(
    data: &L,
    params: &Parameters,
) -> Result<Derivatives, EstimationError> {
    data.log_lik_derivs(params)
}

/// `0.5 * (|b_exp|^2 / sigma_exp^2 + |b_pop|^2 / sigma_pop^2)`.
pub fn penalty(params: &Parameters, phi: &VarianceSpec) -> f64 {
    let se: f64 = params.b_exp.iter().map(|b| b * b).sum();
    let sp: f64 = params.b_pop.iter().map(|b| b * b).sum();
    0.5 * (se / (phi.sigma_exp * phi.sigma_exp) + sp / (phi.sigma_pop * phi.sigma_pop))
}

pub fn lppl_value<L: PartialLikelihood + ?Sized>(
    data: &L,
    params: &Parameters,
    phi: &VarianceSpec,
) -> Result<f64, EstimationError> {
    Ok(data.log_lik(params)? - penalty(params, phi))
}

/// Log penalized partial likelihood `lpl - 0.5 b' Sigma^-1 b` with derivatives.
pub fn lppl<L: PartialLikelihood + ?Sized>(
    data: &L,
    params: &Parameters,
    phi: &VarianceSpec,
) -> Result<Derivatives, EstimationError> {
    let mut d = data.log_lik_derivs(params)?;
    let (p, n) = (data.n_fixed(), data.n_actors());
    d.value -= penalty(params, phi);
    let (ie, ip) = (
        1.0 / (phi.sigma_exp * phi.sigma_exp),
        1.0 / (phi.sigma_pop * phi.sigma_pop),
    );
    for a in 0..n {
        d.gradient[p + a] -= params.b_exp[a] * ie;
        d.gradient[p + n + a] -= params.b_pop[a] * ip;
        d.hessian[(p + a, p + a)] -= ie;
        d.hessian[(p + n + a, p + n + a)] -= ip;
    }
    Ok(d)
}

impl PartialLikelihood for ModelData {
    fn n_fixed(&self) -> usize {
        self.covariates().p()
    }

    fn n_actors(&self) -> usize {
        ModelData::n_actors(self)
    }

    fn log_lik(&self, params: &Parameters) -> Result<f64, EstimationError> {
        params.check(self.n_fixed(), ModelData::n_actors(self))?;
        match &self.risk {
            RiskSets::Full { .. } => full_pass(self, params, false, None).map(|o| o.value),
            RiskSets::Sampled { .. } => sampled_pass(self, params, false).map(|o| o.value),
        }
    }

    fn log_lik_derivs(&self, params: &Parameters) -> Result<Derivatives, EstimationError> {
        params.check(self.n_fixed(), ModelData::n_actors(self))?;
        let out = match &self.risk {
            RiskSets::Full { .. } => full_pass(self, params, true, None)?,
            RiskSets::Sampled { .. } => sampled_pass(self, params, true)?,
        };
        let q = self.dim();
        let info = DMatrix::from_vec(q, q, out.info);
        Ok(Derivatives {
            value: out.value,
            gradient: DVector::from_vec(out.gradient),
            hessian: -info,
        })
    }

    fn risk_policy(&self) -> Option<RiskPolicy> {
        Some(self.policy())
    }
}

struct PassOutput {
    value: f64,
    gradient: Vec<f64>,
    /// Negated Hessian, column-major `q x q`.
    info: Vec<f64>,
}

/// Linear predictors of all ordered dyads (diagonal left at zero).
pub(crate) fn linear_predictors(data: &ModelData, params: &Parameters) -> Vec<f64> {
    let n = ModelData::n_actors(data);
    let cov = data.covariates();
    let mut eta = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = i * n + j;
            let fixed: f64 = cov
                .row(d)
                .iter()
                .zip(&params.theta)
                .map(|(x, t)| x * t)
                .sum();
            eta[d] = fixed + params.b_exp[i] + params.b_pop[j];
        }
    }
    eta
}

/// Per-stratum sums of shifted weights over the stratum's current members.
#[derive(Clone)]
struct StratumSums {
    w: f64,
    peak: f64,
    members: usize,
    by_sender: Vec<f64>,
    by_receiver: Vec<f64>,
    n_sender: Vec<u32>,
    n_receiver: Vec<u32>,
    x: Vec<f64>,
    /// Running sum of `1 / w` over this stratum's events.
    inv_w_cum: f64,
    pending: u32,
}

impl StratumSums {
    fn new(n: usize, p: usize, derivs: bool) -> Self {
        let m = if derivs { n } else { 0 };
        Self {
            w: 0.0,
            peak: 0.0,
            members: 0,
            by_sender: vec![0.0; m],
            by_receiver: vec![0.0; m],
            n_sender: vec![0; m],
            n_receiver: vec![0; m],
            x: vec![0.0; if derivs { p } else { 0 }],
            inv_w_cum: 0.0,
            pending: 0,
        }
    }

    fn add(&mut self, d: usize, n: usize, w: f64, x: &[f64], derivs: bool) {
        self.w += w;
        self.members += 1;
        if self.w > self.peak {
            self.peak = self.w;
        }
        if derivs {
            let (a, b) = (d / n, d % n);
            self.by_sender[a] += w;
            self.by_receiver[b] += w;
            self.n_sender[a] += 1;
            self.n_receiver[b] += 1;
            for (acc, xv) in self.x.iter_mut().zip(x) {
                *acc += w * xv;
            }
        }
    }

    fn remove(&mut self, d: usize, n: usize, w: f64, x: &[f64], derivs: bool) {
        self.w -= w;
        self.members -= 1;
        if derivs {
            let (a, b) = (d / n, d % n);
            self.by_sender[a] -= w;
            self.by_receiver[b] -= w;
            self.n_sender[a] -= 1;
            self.n_receiver[b] -= 1;
            if self.n_sender[a] == 0 {
                self.by_sender[a] = 0.0;
            }
            if self.n_receiver[b] == 0 {
                self.by_receiver[b] = 0.0;
            }
            for (acc, xv) in self.x.iter_mut().zip(x) {
                *acc -= w * xv;
            }
        }
        if self.members == 0 {
            self.w = 0.0;
            self.x.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Recompute a stratum's sums once it has shed this fraction of its peak
/// weight, bounding the cancellation error of incremental removal.
const REFRESH_RATIO: f64 = 1e-3;

/// Per-event risk-set sums `sum exp(eta)` at `params`. Sampled sets are
/// scaled by pool size over sample size so they estimate the full sum.
pub(crate) fn risk_denominators(
    data: &ModelData,
    params: &Parameters,
) -> Result<Vec<f64>, EstimationError> {
    params.check(data.covariates().p(), ModelData::n_actors(data))?;
    let mut out = Vec::with_capacity(data.events().len());
    match &data.risk {
        RiskSets::Full { .. } => {
            full_pass(data, params, false, Some(&mut out))?;
        }
        RiskSets::Sampled { members, offsets } => {
            let n = ModelData::n_actors(data);
            let cov = data.covariates();
            for e in 0..data.events().len() {
                let set = &members[offsets[e]..offsets[e + 1]];
                let sum: f64 = set
                    .iter()
                    .map(|&d| {
                        let fixed: f64 = cov
                            .row(d)
                            .iter()
                            .zip(&params.theta)
                            .map(|(x, t)| x * t)
                            .sum();
                        (fixed + params.b_exp[d / n] + params.b_pop[d % n]).exp()
                    })
                    .sum();
                out.push(sum * data.pool_sizes()[e] as f64 / set.len() as f64);
            }
        }
    }
    if out.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(EstimationError::NonFinite);
    }
    Ok(out)
}

fn full_pass(
    data: &ModelData,
    params: &Parameters,
    derivs: bool,
    mut denominators: Option<&mut Vec<f64>>,
) -> Result<PassOutput, EstimationError> {
    let RiskSets::Full { upgrades, offsets } = &data.risk else {
        unreachable!()
    };
    let n = ModelData::n_actors(data);
    let p = data.covariates().p();
    let q = p + 2 * n;
    let cov = data.covariates();

    let eta = linear_predictors(data, params);
    let shift = (0..n * n)
        .filter(|d| d / n != d % n)
        .map(|d| eta[d])
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(EstimationError::NonFinite);
    }
    let w: Vec<f64> = (0..n * n)
        .map(|d| {
            if d / n == d % n {
                0.0
            } else {
                (eta[d] - shift).exp()
            }
        })
        .collect();

    let mut labels = vec![0u8; n * n];
    let mut sums: Vec<StratumSums> = (0..4).map(|_| StratumSums::new(n, p, derivs)).collect();
    for d in (0..n * n).filter(|d| d / n != d % n) {
        sums[0].add(d, n, w[d], cov.row(d), derivs);
    }

    let mut value = 0.0;
    let mut gradient = vec![0.0; if derivs { q } else { 0 }];
    let mut entry_cum = vec![0.0; if derivs { n * n } else { 0 }];
    let mut exposure = vec![0.0; if derivs { n * n } else { 0 }];
    let mut rows: Vec<f64> = Vec::new();
    let mut mean_total = vec![0.0; if derivs { q } else { 0 }];

    // Emits one Gram row for the pending events of a stratum: all of them
    // share the same risk-set mean of the design vector.
    let flush = |s: &mut StratumSums, rows: &mut Vec<f64>, mean_total: &mut [f64]| {
        if s.pending == 0 {
            return;
        }
        let k = s.pending as f64;
        let root = k.sqrt();
        let inv = 1.0 / s.w;
        let start = rows.len();
        rows.resize(start + q, 0.0);
        let row = &mut rows[start..];
        for (j, xv) in s.x.iter().enumerate() {
            row[j] = xv * inv;
        }
        for a in 0..n {
            row[p + a] = s.by_sender[a] * inv;
            row[p + n + a] = s.by_receiver[a] * inv;
        }
        for (m, r) in mean_total.iter_mut().zip(row.iter_mut()) {
            *m += k * *r;
            *r *= root;
        }
        s.pending = 0;
    };

    for (e, rec) in data.events().iter().enumerate() {
        let s = rec.stratum.index();
        let d = rec.dyad(n);
        let sw = sums[s].w;
        if !(sw > 0.0) || !sw.is_finite() {
            return Err(EstimationError::NonFinite);
        }
        value += eta[d] - shift - sw.ln();
        if let Some(out) = denominators.as_deref_mut() {
            out.push(sw * shift.exp());
        }
        if derivs {
            for (g, xv) in gradient.iter_mut().zip(cov.row(d)) {
                *g += xv;
            }
            gradient[p + rec.sender] += 1.0;
            gradient[p + n + rec.receiver] += 1.0;
            sums[s].pending += 1;
            sums[s].inv_w_cum += 1.0 / sw;
        }
        for u in &upgrades[offsets[e]..offsets[e + 1]] {
            let (f, t, dd) = (u.from.index(), u.to.index(), u.dyad);
            if derivs {
                flush(&mut sums[f], &mut rows, &mut mean_total);
                flush(&mut sums[t], &mut rows, &mut mean_total);
                exposure[dd] += sums[f].inv_w_cum - entry_cum[dd];
                entry_cum[dd] = sums[t].inv_w_cum;
            }
            sums[f].remove(dd, n, w[dd], cov.row(dd), derivs);
            sums[t].add(dd, n, w[dd], cov.row(dd), derivs);
            labels[dd] = t as u8;
            if sums[f].members > 0 && sums[f].w < REFRESH_RATIO * sums[f].peak {
                refresh(&mut sums[f], f as u8, &labels, &w, cov, n, derivs);
            }
        }
    }
    if !value.is_finite() {
        return Err(EstimationError::NonFinite);
    }
    if !derivs {
        return Ok(PassOutput {
            value,
            gradient,
            info: Vec::new(),
        });
    }
    for s in sums.iter_mut() {
        flush(s, &mut rows, &mut mean_total);
    }
    for d in (0..n * n).filter(|d| d / n != d % n) {
        exposure[d] += sums[labels[d] as usize].inv_w_cum - entry_cum[d];
    }
    for (g, m) in gradient.iter_mut().zip(&mean_total) {
        *g -= m;
    }

    // info = sum_d w_d A_d z_d z_d' - sum_groups k u u'
    let mut info = gram(&rows, q);
    for v in info.iter_mut() {
        *v = -*v;
    }
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let d = i * n + j;
            let v = w[d] * exposure[d];
            if v == 0.0 {
                continue;
            }
            let (ia, ib) = (p + i, p + n + j);
            info[ia * q + ia] += v;
            info[ib * q + ib] += v;
            info[ib * q + ia] += v;
            info[ia * q + ib] += v;
            let x = cov.row(d);
            for (k, xk) in x.iter().enumerate() {
                let vx = v * xk;
                for (l, xl) in x.iter().enumerate() {
                    info[l * q + k] += vx * xl;
                }
                info[ia * q + k] += vx;
                info[k * q + ia] += vx;
                info[ib * q + k] += vx;
                info[k * q + ib] += vx;
            }
        }
    }
    Ok(PassOutput {
        value,
        gradient,
        info,
    })
}

fn refresh(
    s: &mut StratumSums,
    label: u8,
    labels: &[u8],
    w: &[f64],
    cov: &crate::estimation::data::DyadCovariates,
    n: usize,
    derivs: bool,
) {
    let (cum, pending) = (s.inv_w_cum, s.pending);
    *s = StratumSums::new(n, cov.p(), derivs);
    for d in (0..n * n).filter(|&d| labels[d] == label && d / n != d % n) {
        s.add(d, n, w[d], cov.row(d), derivs);
    }
    s.peak = s.w;
    s.inv_w_cum = cum;
    s.pending = pending;
}

/// `sum_k r_k r_k'` for the rows stored contiguously in `rows`, reduced over
/// fixed-size blocks in order so the result does not depend on scheduling.
fn gram(rows: &[f64], q: usize) -> Vec<f64> {
    const BLOCK_ROWS: usize = 2048;
    if q == 0 || rows.is_empty() {
        return vec![0.0; q * q];
    }
    let partials: Vec<Vec<f64>> = rows
        .par_chunks(BLOCK_ROWS * q)
        .map(|block| {
            let k = block.len() / q;
            let mut out = vec![0.0; q * q];
            // A = block viewed as q x k (column kk is row kk), B = A'.
            unsafe {
                matrixmultiply::dgemm(
                    q,
                    k,
                    q,
                    1.0,
                    block.as_ptr(),
                    1,
                    q as isize,
                    block.as_ptr(),
                    q as isize,
                    1,
                    0.0,
                    out.as_mut_ptr(),
                    1,
                    q as isize,
                );
            }
            out
        })
        .collect();
    let mut total = vec![0.0; q * q];
    for part in partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    total
}

fn sampled_pass(
    data: &ModelData,
    params: &Parameters,
    derivs: bool,
) -> Result<PassOutput, EstimationError> {
    let RiskSets::Sampled { members, offsets } = &data.risk else {
        unreachable!()
    };
    const CHUNK: usize = 4096;
    let n_events = data.events().len();
    let chunks: Vec<(usize, usize)> = (0..n_events)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(n_events)))
        .collect();
    let partials: Vec<Result<PassOutput, EstimationError>> = chunks
        .par_iter()
        .map(|&(lo, hi)| sampled_chunk(data, params, members, offsets, lo, hi, derivs))
        .collect();
    let q = data.dim();
    let mut out = PassOutput {
        value: 0.0,
        gradient: vec![0.0; if derivs { q } else { 0 }],
        info: vec![0.0; if derivs { q * q } else { 0 }],
    };
    for part in partials {
        let part = part?;
        out.value += part.value;
        for (a, b) in out.gradient.iter_mut().zip(part.gradient) {
            *a += b;
        }
        for (a, b) in out.info.iter_mut().zip(part.info) {
            *a += b;
        }
    }
    if !out.value.is_finite() {
        return Err(EstimationError::NonFinite);
    }
    Ok(out)
}

fn sampled_chunk(
    data: &ModelData,
    params: &Parameters,
    members: &[usize],
    offsets: &[usize],
    lo: usize,
    hi: usize,
    derivs: bool,
) -> Result<PassOutput, EstimationError> {
    let n = ModelData::n_actors(data);
    let cov = data.covariates();
    let p = cov.p();
    let q = p + 2 * n;
    let mut value = 0.0;
    let mut gradient = vec![0.0; if derivs { q } else { 0 }];
    let mut info = vec![0.0; if derivs { q * q } else { 0 }];
    let mut mean = vec![0.0; if derivs { q } else { 0 }];
    let mut touched: Vec<usize> = Vec::new();
    let mut eta = Vec::new();

    for e in lo..hi {
        let set = &members[offsets[e]..offsets[e + 1]];
        eta.clear();
        for &d in set {
            let fixed: f64 = cov
                .row(d)
                .iter()
                .zip(&params.theta)
                .map(|(x, t)| x * t)
                .sum();
            eta.push(fixed + params.b_exp[d / n] + params.b_pop[d % n]);
        }
        let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = eta.iter().map(|v| (v - m).exp()).sum();
        value += eta[0] - m - total.ln();
        if !derivs {
            continue;
        }
        let ev = set[0];
        for (g, xv) in gradient.iter_mut().zip(cov.row(ev)) {
            *g += xv;
        }
        gradient[p + ev / n] += 1.0;
        gradient[p + n + ev % n] += 1.0;

        touched.clear();
        touched.extend(0..p);
        for (k, &d) in set.iter().enumerate() {
            let pk = (eta[k] - m).exp() / total;
            let (ia, ib) = (p + d / n, p + n + d % n);
            info[ia * q + ia] += pk;
            info[ib * q + ib] += pk;
            info[ia * q + ib] += pk;
            info[ib * q + ia] += pk;
            let x = cov.row(d);
            for (i, xi) in x.iter().enumerate() {
                let v = pk * xi;
                for (j, xj) in x.iter().enumerate() {
                    info[j * q + i] += v * xj;
                }
                info[ia * q + i] += v;
                info[i * q + ia] += v;
                info[ib * q + i] += v;
                info[i * q + ib] += v;
                mean[i] += v;
            }
            for idx in [ia, ib] {
                if mean[idx] == 0.0 {
                    touched.push(idx);
                }
                mean[idx] += pk;
            }
        }
        for &i in &touched {
            gradient[i] -= mean[i];
            for &j in &touched {
                info[j * q + i] -= mean[i] * mean[j];
            }
        }
        for &i in &touched {
            mean[i] = 0.0;
        }
    }
    Ok(PassOutput {
        value,
        gradient,
        info,
    })
}
