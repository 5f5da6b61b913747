//! Synthetic histories from the constant-rate frailty model.
//!
//! Each ordered dyad `i -> j` fires at rate
//! `baseline_rate * exp(b_exp[i] + b_pop[j])`, independent of the past. The
//! sampler draws the next waiting time from the superposed exponential clock
//! and then the dyad categorically in proportion to its rate.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, SimulationError};
use crate::events::{EventHistory, RelationalEvent, SymbolTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_actors: usize,
    pub n_events: usize,
    pub sigma_exp: f64,
    pub sigma_pop: f64,
    pub baseline_rate: f64,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: &str| Err(SimulationError::InvalidConfig(m.to_string()));
        if self.n_actors < 2 {
            return bad("n_actors must be at least 2");
        }
        if self.n_events < 1 {
            return bad("n_events must be at least 1");
        }
        if !(self.baseline_rate > 0.0 && self.baseline_rate.is_finite()) {
            return bad("baseline_rate must be positive");
        }
        if !(self.sigma_exp >= 0.0 && self.sigma_pop >= 0.0)
            || !self.sigma_exp.is_finite()
            || !self.sigma_pop.is_finite()
        {
            return bad("sigmas must be finite and nonnegative");
        }
        Ok(())
    }

    /// A generator seeded from `seed`.
    pub fn rng(&self) -> ChaCha8Rng {
        rand::SeedableRng::seed_from_u64(self.seed)
    }
}

/// Per-actor expansiveness (sender) and popularity (receiver) effects on the
/// log-rate scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrailtyVector {
    pub b_exp: Vec<f64>,
    pub b_pop: Vec<f64>,
}

impl FrailtyVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            b_exp: vec![0.0; n],
            b_pop: vec![0.0; n],
        }
    }

    pub fn n_actors(&self) -> usize {
        self.b_exp.len()
    }

    /// CSV `actor,b_exp,b_pop` using the given labels.
    pub fn write_csv<W: Write>(
        &self,
        writer: W,
        symbols: &SymbolTable,
        header: [&str; 3],
    ) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(header)?;
        for i in 0..self.n_actors() {
            w.write_record([
                symbols.label(crate::events::ActorId(i)).to_string(),
                format!("{}", self.b_exp[i]),
                format!("{}", self.b_pop[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn draw_frailties<R: Rng>(
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<FrailtyVector, SimulationError> {
    config.validate()?;
    let n = config.n_actors;
    let exp = Normal::new(0.0, config.sigma_exp)
        .map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;
    let pop = Normal::new(0.0, config.sigma_pop)
        .map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;
    let b_exp = (0..n).map(|_| exp.sample(rng)).collect();
    let b_pop = (0..n).map(|_| pop.sample(rng)).collect();
    Ok(FrailtyVector { b_exp, b_pop })
}

/// Rates over ordered dyads, indexed `i * n + j`; the diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    n_actors: usize,
    rates: Vec<f64>,
}

impl RateTable {
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.n_actors + j]
    }

    pub fn total(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rates
    }

    pub fn n_actors(&self) -> usize {
        self.n_actors
    }
}

pub fn dyad_rates(
    frailties: &FrailtyVector,
    baseline_rate: f64,
) -> Result<RateTable, SimulationError> {
    let n = frailties.n_actors();
    let mut rates = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let r = baseline_rate * (frailties.b_exp[i] + frailties.b_pop[j]).exp();
            if !r.is_finite() {
                return Err(SimulationError::RateOverflow {
                    sender: i,
                    receiver: j,
                });
            }
            rates[i * n + j] = r;
        }
    }
    Ok(RateTable { n_actors: n, rates })
}

/// Draws frailties, then `n_events` events from the constant-rate process.
pub fn simulate<R: Rng>(
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<(EventHistory, FrailtyVector), SimulationError> {
    let frailties = draw_frailties(config, rng)?;
    let history = simulate_with(config, &frailties, rng)?;
    Ok((history, frailties))
}

/// Simulates from given frailties.
pub fn simulate_with<R: Rng>(
    config: &SimulationConfig,
    frailties: &FrailtyVector,
    rng: &mut R,
) -> Result<EventHistory, SimulationError> {
    config.validate()?;
    let n = config.n_actors;
    if frailties.n_actors() != n {
        return Err(SimulationError::InvalidConfig(
            "frailty length differs from n_actors".into(),
        ));
    }
    let table = dyad_rates(frailties, config.baseline_rate)?;
    let mut cumulative = Vec::with_capacity(n * n);
    let mut acc = 0.0;
    for &r in table.as_slice() {
        acc += r;
        cumulative.push(acc);
    }
    let total = acc;
    if !total.is_finite() || total <= 0.0 {
        return Err(SimulationError::RateOverflow {
            sender: 0,
            receiver: 0,
        });
    }
    let clock = Exp::new(total).map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;

    let mut events = Vec::with_capacity(config.n_events);
    let mut t = 0.0f64;
    for _ in 0..config.n_events {
        let next = t + clock.sample(rng);
        t = if next > t { next } else { t.next_up() };
        let u = rng.random::<f64>() * total;
        let mut d = cumulative.partition_point(|&c| c <= u).min(n * n - 1);
        // zero-rate diagonal cells share their predecessor's cumulative value
        while table.as_slice()[d] == 0.0 {
            d = if d > 0 { d - 1 } else { d + 1 };
        }
        events.push(RelationalEvent::new(d / n, d % n, t));
    }
    let history =
        EventHistory::new(SymbolTable::numeric(n), events).expect("simulated events are valid");
    Ok(history)
}
