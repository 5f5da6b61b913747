//! Experiment configuration with per-study defaults at two scales.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::SplineConfig;
use crate::error::ExperimentError;
use crate::estimation::RiskPolicy;
use crate::events::TimeFormat;
use crate::strata::TriadicKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Recovery,
    SampleSize,
    GhostTriadic,
    CaseStudy,
}

impl Study {
    pub fn as_str(self) -> &'static str {
        match self {
            Study::Recovery => "recovery",
            Study::SampleSize => "sample_size",
            Study::GhostTriadic => "ghost_triadic",
            Study::CaseStudy => "case_study",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Paper,
    Desk,
}

impl FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            other => Err(format!("unknown scale `{other}`")),
        }
    }
}

/// One simulated network size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSize {
    pub n_actors: usize,
    pub n_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub study: Study,
    pub replications: usize,
    pub seed: u64,
    /// Network sizes to simulate; ignored by the case study.
    pub scenarios: Vec<ScenarioSize>,
    pub sigma_exp: f64,
    pub sigma_pop: f64,
    pub baseline_rate: f64,
    pub kinds: Vec<TriadicKind>,
    /// `full` or `sampled:M`; `None` picks by network size.
    pub risk: Option<String>,
    /// Ghost study: also fit the frailty model on each data set.
    pub frailty_fits: bool,
    pub include_logdet: bool,
    pub spline: SplineConfig,
    pub input: Option<PathBuf>,
    pub time_format: TimeFormat,
    /// Case study: fewest events allowed after preprocessing.
    pub min_events: usize,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn defaults(study: Study, scale: Scale) -> Self {
        let desk = scale == Scale::Desk;
        let recovery_size = if desk {
            ScenarioSize {
                n_actors: 30,
                n_events: 2000,
            }
        } else {
            ScenarioSize {
                n_actors: 100,
                n_events: 10_000,
            }
        };
        let mut spec = Self {
            study,
            replications: 20,
            seed: 1,
            scenarios: vec![recovery_size],
            sigma_exp: 0.9,
            sigma_pop: 1.3,
            baseline_rate: 1.0,
            kinds: vec![TriadicKind::Transitive],
            risk: None,
            frailty_fits: true,
            include_logdet: true,
            spline: SplineConfig::default(),
            input: None,
            time_format: TimeFormat::Iso8601,
            min_events: 100,
            out_dir: None,
        };
        match study {
            Study::Recovery => {}
            Study::SampleSize => {
                let (events, actors, reps) = if desk {
                    (5000, 50, 50)
                } else {
                    (10_000, 100, 100)
                };
                spec.replications = reps;
                spec.sigma_exp = 0.5;
                spec.sigma_pop = 0.9;
                spec.scenarios = [10, 30, 90]
                    .into_iter()
                    .map(|n_actors| ScenarioSize {
                        n_actors,
                        n_events: events,
                    })
                    .chain([500, 1500, 4500].into_iter().map(|n_events| ScenarioSize {
                        n_actors: actors,
                        n_events,
                    }))
                    .collect();
            }
            Study::GhostTriadic => spec.kinds = TriadicKind::ALL.to_vec(),
            Study::CaseStudy => {
                spec.replications = 1;
                spec.scenarios = Vec::new();
            }
        }
        spec
    }

    /// Applies a JSON object of overrides on top of `self`. Unknown keys are errors.
    pub fn merged(self, overrides: &serde_json::Value) -> Result<Self, ExperimentError> {
        let serde_json::Value::Object(extra) = overrides else {
            return Err(ExperimentError::InvalidSpec(
                "config must be a JSON object".into(),
            ));
        };
        let mut base = serde_json::to_value(&self)?;
        let obj = base.as_object_mut().expect("spec serializes to an object");
        for (k, v) in extra {
            if !obj.contains_key(k) {
                return Err(ExperimentError::InvalidSpec(format!("unknown field `{k}`")));
            }
            obj.insert(k.clone(), v.clone());
        }
        serde_json::from_value(base).map_err(|e| ExperimentError::InvalidSpec(e.to_string()))
    }

    pub fn risk_policy(&self, n_actors: usize, seed: u64) -> Result<RiskPolicy, ExperimentError> {
        match &self.risk {
            None => Ok(RiskPolicy::default_for(n_actors, seed)),
            Some(text) => match text
                .parse::<RiskPolicy>()
                .map_err(ExperimentError::InvalidSpec)?
            {
                RiskPolicy::Sampled { m, .. } => Ok(RiskPolicy::Sampled { m, seed }),
                full => Ok(full),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidSpec(m));
        if self.replications < 1 {
            return bad("replications must be at least 1".into());
        }
        if self.kinds.is_empty() {
            return bad("kinds must not be empty".into());
        }
        let mut kinds = self.kinds.clone();
        kinds.sort_by_key(|k| k.as_str());
        kinds.dedup();
        if kinds.len() != self.kinds.len() {
            return bad("kinds must be distinct".into());
        }
        if let Some(r) = &self.risk {
            r.parse::<RiskPolicy>()
                .map_err(ExperimentError::InvalidSpec)?;
        }
        self.spline
            .validate()
            .map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?;
        if self.study == Study::CaseStudy {
            if self.input.is_none() {
                return bad("the case study needs an input event file".into());
            }
            return Ok(());
        }
        if self.scenarios.is_empty() {
            return bad("at least one scenario is required".into());
        }
        for s in &self.scenarios {
            if s.n_actors < 2 || s.n_events < 1 {
                return bad(format!(
                    "scenario needs >= 2 actors and >= 1 event, got {s:?}"
                ));
            }
        }
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.sigma_exp) || !finite_nonneg(self.sigma_pop) {
            return bad("sigmas must be finite and nonnegative".into());
        }
        if !(self.baseline_rate.is_finite() && self.baseline_rate > 0.0) {
            return bad("baseline_rate must be positive".into());
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one replication of one data-generating scenario.
pub fn derive_seed(seed: u64, scenario: usize, replication: usize) -> u64 {
    mix(mix(mix(seed) ^ scenario as u64) ^ replication as u64)
}
