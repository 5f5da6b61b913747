//! Breslow step estimates of the stratum cumulative baseline hazards.

use serde::{Deserialize, Serialize};

use crate::error::EstimationError;
use crate::estimation::likelihood::risk_denominators;
use crate::estimation::{FitResult, ModelData, Parameters};
use crate::strata::StratumLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCumulativeHazard {
    pub stratum: StratumLabel,
    /// Event times, strictly increasing.
    pub knots: Vec<f64>,
    /// Positive jump at each knot.
    pub increments: Vec<f64>,
}

impl StepCumulativeHazard {
    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Running sums of the increments.
    pub fn cumulative(&self) -> Vec<f64> {
        self.increments
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    }

    /// Right-continuous value at `t`; zero before the first knot.
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.knots.partition_point(|&x| x <= t);
        self.increments[..k].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.increments.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreslowReport {
    /// One curve per stratum that had events, in stratum order.
    pub curves: Vec<StepCumulativeHazard>,
    /// Strata without events, for which no curve exists.
    pub empty_strata: Vec<StratumLabel>,
}

impl BreslowReport {
    pub fn get(&self, stratum: StratumLabel) -> Option<&StepCumulativeHazard> {
        self.curves.iter().find(|c| c.stratum == stratum)
    }
}

/// Breslow estimates at the fitted parameters.
pub fn breslow(data: &ModelData, fit: &FitResult) -> Result<BreslowReport, EstimationError> {
    breslow_at(data, &fit.params())
}

/// Each event in stratum `s` adds `1 / sum_{risk set} exp(eta)` to `s`.
pub fn breslow_at(data: &ModelData, params: &Parameters) -> Result<BreslowReport, EstimationError> {
    let denoms = risk_denominators(data, params)?;
    let mut curves: Vec<StepCumulativeHazard> = StratumLabel::ALL
        .iter()
        .map(|&stratum| StepCumulativeHazard {
            stratum,
            knots: Vec::new(),
            increments: Vec::new(),
        })
        .collect();
    for (rec, den) in data.events().iter().zip(&denoms) {
        let c = &mut curves[rec.stratum.index()];
        let jump = 1.0 / den;
        if c.knots.last() == Some(&rec.time) {
            *c.increments.last_mut().expect("knot has an increment") += jump;
        } else {
            c.knots.push(rec.time);
            c.increments.push(jump);
        }
    }
    let empty_strata = curves
        .iter()
        .filter(|c| c.is_empty())
        .map(|c| c.stratum)
        .collect();
    curves.retain(|c| !c.is_empty());
    Ok(BreslowReport {
        curves,
        empty_strata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{build_model_data, RiskPolicy};
    use crate::events::{EventHistory, RelationalEvent, SymbolTable};
    use crate::strata::TriadicKind;

    fn history(n: usize, arcs: &[(usize, usize)]) -> EventHistory {
        let ev = arcs
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| RelationalEvent::new(a, b, (k + 1) as f64))
            .collect();
        EventHistory::new(SymbolTable::numeric(n), ev).unwrap()
    }

    #[test]
    fn single_event_two_dyads() {
        let d = build_model_data(
            &history(2, &[(0, 1)]),
            TriadicKind::Transitive,
            RiskPolicy::Full,
        )
        .unwrap();
        let r = breslow_at(&d, &Parameters::zeros(0, 2)).unwrap();
        assert_eq!(r.curves.len(), 1);
        assert_eq!(r.curves[0].increments, vec![0.5]);
        assert_eq!(r.empty_strata.len(), 3);
    }

    #[test]
    fn three_event_toy_matches_hand_sums() {
        // 3 actors, events 0->1, 1->0, 2->0 with b_exp = (ln 2, 0, 0), b_pop = 0.
        // Event 1: Spontaneous, all 6 dyads: 2 + 2 + 1 + 1 + 1 + 1 = 8.
        // Event 2: 1->0 is R (0->1 happened); R = {1->0}: 1.
        // Event 3: 2->0 Spontaneous; pool = {0->2, 1->2, 2->0, 2->1}
        //          (0->1 used, 1->0 in R): 2 + 1 + 1 + 1 = 5.
        let d = build_model_data(
            &history(3, &[(0, 1), (1, 0), (2, 0)]),
            TriadicKind::Transitive,
            RiskPolicy::Full,
        )
        .unwrap();
        let p = Parameters {
            theta: vec![],
            b_exp: vec![2f64.ln(), 0.0, 0.0],
            b_pop: vec![0.0; 3],
        };
        let r = breslow_at(&d, &p).unwrap();
        let sp = r.get(StratumLabel::Spontaneous).unwrap();
        let rr = r.get(StratumLabel::R).unwrap();
        assert_eq!(sp.knots, vec![1.0, 3.0]);
        let want = [1.0 / 8.0, 1.0 / 5.0];
        for (g, w) in sp.increments.iter().zip(want) {
            assert!((g - w).abs() <= 1e-15 * w, "{g} vs {w}");
        }
        assert_eq!(rr.increments, vec![1.0]);
        // With all frailties zero the sums are exact integers.
        let z = breslow_at(&d, &Parameters::zeros(0, 3)).unwrap();
        assert_eq!(
            z.get(StratumLabel::Spontaneous).unwrap().increments,
            vec![1.0 / 6.0, 1.0 / 4.0]
        );
    }

    #[test]
    fn cumulative_is_nondecreasing_and_zero_before_first_knot() {
        let cfg = crate::simulate::SimulationConfig {
            n_actors: 8,
            n_events: 120,
            sigma_exp: 1.0,
            sigma_pop: 1.0,
            baseline_rate: 1.0,
            seed: 3,
        };
        let (h, f) = crate::simulate::simulate(&cfg, &mut cfg.rng()).unwrap();
        for policy in [RiskPolicy::Full, RiskPolicy::Sampled { m: 3, seed: 1 }] {
            let d = build_model_data(&h, TriadicKind::Cyclic, policy).unwrap();
            let p = Parameters {
                theta: vec![],
                b_exp: f.b_exp.clone(),
                b_pop: f.b_pop.clone(),
            };
            for c in breslow_at(&d, &p).unwrap().curves {
                assert!(c.increments.iter().all(|&v| v > 0.0));
                assert!(c.knots.windows(2).all(|w| w[0] < w[1]));
                assert_eq!(c.value_at(c.knots[0] - 1e-9), 0.0);
                assert!(c.cumulative().windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
