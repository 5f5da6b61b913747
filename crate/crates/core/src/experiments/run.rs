//! Study drivers. Replications run in parallel; records are assembled in
//! scenario-major, replication-minor order.

use std::fs::File;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::{breslow, central_mean, hazard_ratio_summary, smooth_all, SmoothHazardCurve};
use crate::error::{DataError, ExperimentError};
use crate::estimation::{
    build_model_data, fit_fixed, fit_frailty, FitResult, FixedOptions, FrailtyOptions, ModelData,
};
use crate::events::{
    parse_rows, preprocess_email, EventHistory, PreprocessPolicy, PreprocessReport, SymbolTable,
};
use crate::experiments::spec::{derive_seed, ExperimentSpec, ScenarioSize, Study};
use crate::simulate::{simulate, SimulationConfig};
use crate::strata::{StratumLabel, TriadicKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fixed,
    Frailty,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Fixed => "fixed",
            ModelKind::Frailty => "frailty",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioInfo {
    pub name: String,
    pub n_actors: usize,
    pub n_events: usize,
    pub kind: TriadicKind,
    /// Index of the data-generating size; scenarios sharing it share data.
    pub size_index: usize,
}

#[derive(Debug, Clone)]
pub struct ModelOutcome {
    pub model: ModelKind,
    pub fit: FitResult,
    pub seconds: f64,
    pub curves: Vec<SmoothHazardCurve>,
    /// Mean hazard over the central part of each curve's support.
    pub central_means: Vec<(StratumLabel, f64)>,
    /// Mean stratum-to-Spontaneous hazard ratios.
    pub mean_ratios: Vec<(StratumLabel, f64)>,
}

impl ModelOutcome {
    pub fn mean_ratio(&self, stratum: StratumLabel) -> Option<f64> {
        self.mean_ratios
            .iter()
            .find(|(s, _)| *s == stratum)
            .map(|(_, r)| *r)
    }

    pub fn central_mean(&self, stratum: StratumLabel) -> Option<f64> {
        self.central_means
            .iter()
            .find(|(s, _)| *s == stratum)
            .map(|(_, r)| *r)
    }
}

#[derive(Debug, Clone)]
pub struct ReplicationRecord {
    pub scenario: usize,
    pub replication: usize,
    pub seed: u64,
    pub outcome: Result<Vec<ModelOutcome>, String>,
}

impl ReplicationRecord {
    pub fn model(&self, kind: ModelKind) -> Option<&ModelOutcome> {
        self.outcome.as_ref().ok()?.iter().find(|m| m.model == kind)
    }

    pub fn error(&self) -> Option<&str> {
        self.outcome.as_ref().err().map(String::as_str)
    }
}

#[derive(Debug, Clone)]
pub struct CaseDetails {
    pub preprocess: PreprocessReport,
    pub n_actors: usize,
    pub n_events: usize,
    pub risk_policy: String,
    pub symbols: SymbolTable,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub spec: ExperimentSpec,
    pub scenarios: Vec<ScenarioInfo>,
    pub records: Vec<ReplicationRecord>,
    pub case: Option<CaseDetails>,
}

impl StudyReport {
    pub fn failures(&self) -> impl Iterator<Item = &ReplicationRecord> {
        self.records.iter().filter(|r| r.outcome.is_err())
    }

    pub fn any_failed(&self) -> bool {
        self.failures().next().is_some()
    }

    pub fn records_for(&self, scenario: usize) -> impl Iterator<Item = &ReplicationRecord> {
        self.records.iter().filter(move |r| r.scenario == scenario)
    }
}

#[derive(Debug, Clone, Copy)]
struct Plan {
    models: &'static [ModelKind],
    curves: bool,
}

fn plan(spec: &ExperimentSpec) -> Plan {
    match spec.study {
        Study::Recovery => Plan {
            models: &[ModelKind::Frailty],
            curves: true,
        },
        Study::SampleSize => Plan {
            models: &[ModelKind::Frailty],
            curves: false,
        },
        Study::GhostTriadic if spec.frailty_fits => Plan {
            models: &[ModelKind::Fixed, ModelKind::Frailty],
            curves: true,
        },
        Study::GhostTriadic => Plan {
            models: &[ModelKind::Fixed],
            curves: true,
        },
        Study::CaseStudy => Plan {
            models: &[ModelKind::Fixed, ModelKind::Frailty],
            curves: true,
        },
    }
}

fn fit_model(
    data: &ModelData,
    model: ModelKind,
    spec: &ExperimentSpec,
    curves: bool,
) -> Result<ModelOutcome, String> {
    let start = Instant::now();
    let fit = match model {
        ModelKind::Fixed => fit_fixed(data, &FixedOptions::default()),
        ModelKind::Frailty => {
            let mut opts = FrailtyOptions::default();
            opts.laplace.include_logdet = spec.include_logdet;
            fit_frailty(data, &opts)
        }
    }
    .map_err(|e| format!("{} fit: {e}", model.as_str()))?;
    let seconds = start.elapsed().as_secs_f64();
    let mut out = ModelOutcome {
        model,
        fit,
        seconds,
        curves: Vec::new(),
        central_means: Vec::new(),
        mean_ratios: Vec::new(),
    };
    if curves {
        let steps = breslow(data, &out.fit).map_err(|e| format!("baseline: {e}"))?;
        let smooth =
            smooth_all(&steps.curves, &spec.spline).map_err(|e| format!("smoothing: {e}"))?;
        out.central_means = smooth
            .iter()
            .map(|c| (c.stratum, central_mean(c)))
            .collect();
        if let Ok(summary) = hazard_ratio_summary(&smooth) {
            out.mean_ratios = summary
                .curves
                .iter()
                .filter_map(|c| c.mean_ratio.map(|m| (c.stratum, m)))
                .collect();
        }
        out.curves = smooth;
    }
    Ok(out)
}

fn fit_models(
    history: &EventHistory,
    kind: TriadicKind,
    spec: &ExperimentSpec,
    policy_seed: u64,
    plan: Plan,
) -> Result<Vec<ModelOutcome>, String> {
    let policy = spec
        .risk_policy(history.n_actors(), policy_seed)
        .map_err(|e| e.to_string())?;
    let data = build_model_data(history, kind, policy).map_err(|e| format!("model data: {e}"))?;
    plan.models
        .iter()
        .map(|&m| fit_model(&data, m, spec, plan.curves))
        .collect()
}

fn scenario_infos(spec: &ExperimentSpec) -> Vec<ScenarioInfo> {
    let mut out = Vec::new();
    for (size_index, size) in spec.scenarios.iter().enumerate() {
        for &kind in &spec.kinds {
            out.push(ScenarioInfo {
                name: format!("n{}_e{}_{}", size.n_actors, size.n_events, kind),
                n_actors: size.n_actors,
                n_events: size.n_events,
                kind,
                size_index,
            });
        }
    }
    out
}

/// Simulates each (size, replication) once and fits every kind to it.
fn run_simulated(spec: &ExperimentSpec) -> Result<StudyReport, ExperimentError> {
    spec.validate()?;
    let plan = plan(spec);
    let scenarios = scenario_infos(spec);
    let jobs: Vec<(usize, ScenarioSize, usize)> = spec
        .scenarios
        .iter()
        .enumerate()
        .flat_map(|(si, &size)| (0..spec.replications).map(move |r| (si, size, r)))
        .collect();

    let per_job: Vec<Vec<ReplicationRecord>> = jobs
        .par_iter()
        .map(|&(si, size, r)| {
            let seed = derive_seed(spec.seed, si, r);
            let cfg = SimulationConfig {
                n_actors: size.n_actors,
                n_events: size.n_events,
                sigma_exp: spec.sigma_exp,
                sigma_pop: spec.sigma_pop,
                baseline_rate: spec.baseline_rate,
                seed,
            };
            let history = simulate(&cfg, &mut cfg.rng())
                .map(|(h, _)| h)
                .map_err(|e| format!("simulation: {e}"));
            spec.kinds
                .iter()
                .enumerate()
                .map(|(ki, &kind)| {
                    let outcome = match &history {
                        Ok(h) => fit_models(h, kind, spec, derive_seed(seed, ki, 0), plan),
                        Err(e) => Err(e.clone()),
                    };
                    ReplicationRecord {
                        scenario: si * spec.kinds.len() + ki,
                        replication: r,
                        seed,
                        outcome,
                    }
                })
                .collect()
        })
        .collect();

    let mut records: Vec<ReplicationRecord> = per_job.into_iter().flatten().collect();
    records.sort_by_key(|rec| (rec.scenario, rec.replication));
    Ok(StudyReport {
        spec: spec.clone(),
        scenarios,
        records,
        case: None,
    })
}

pub fn run_recovery(spec: &ExperimentSpec) -> Result<StudyReport, ExperimentError> {
    expect_study(spec, Study::Recovery)?;
    run_simulated(spec)
}

pub fn run_sample_size(spec: &ExperimentSpec) -> Result<StudyReport, ExperimentError> {
    expect_study(spec, Study::SampleSize)?;
    run_simulated(spec)
}

pub fn run_ghost_triadic(spec: &ExperimentSpec) -> Result<StudyReport, ExperimentError> {
    expect_study(spec, Study::GhostTriadic)?;
    run_simulated(spec)
}

/// Email pipeline: drop multi-recipient messages and self-loops, then fit
/// the fixed and frailty models on the first configured kind.
pub fn run_case_study(spec: &ExperimentSpec) -> Result<StudyReport, ExperimentError> {
    expect_study(spec, Study::CaseStudy)?;
    spec.validate()?;
    let path = spec.input.as_ref().expect("validated");
    let file = File::open(path).map_err(DataError::from)?;
    let rows = parse_rows(file, spec.time_format)?;
    let (history, preprocess) = preprocess_email(&rows, PreprocessPolicy::default())?;
    if history.len() < spec.min_events {
        return Err(DataError::TooFewEvents {
            kept: history.len(),
            required: spec.min_events,
        }
        .into());
    }
    let kind = spec.kinds[0];
    let seed = derive_seed(spec.seed, 0, 0);
    let policy = spec.risk_policy(history.n_actors(), seed)?;
    let outcome = fit_models(&history, kind, spec, seed, plan(spec));
    let scenario = ScenarioInfo {
        name: format!("email_{kind}"),
        n_actors: history.n_actors(),
        n_events: history.len(),
        kind,
        size_index: 0,
    };
    let case = CaseDetails {
        preprocess,
        n_actors: history.n_actors(),
        n_events: history.len(),
        risk_policy: policy.to_string(),
        symbols: history.symbols().clone(),
    };
    Ok(StudyReport {
        spec: spec.clone(),
        scenarios: vec![scenario],
        records: vec![ReplicationRecord {
            scenario: 0,
            replication: 0,
            seed,
            outcome,
        }],
        case: Some(case),
    })
}

/// Dispatches on `spec.study`.
pub fn run_study(spec: &ExperimentSpec) -> Result<StudyReport, ExperimentError> {
    match spec.study {
        Study::Recovery => run_recovery(spec),
        Study::SampleSize => run_sample_size(spec),
        Study::GhostTriadic => run_ghost_triadic(spec),
        Study::CaseStudy => run_case_study(spec),
    }
}

fn expect_study(spec: &ExperimentSpec, study: Study) -> Result<(), ExperimentError> {
    if spec.study != study {
        return Err(ExperimentError::InvalidSpec(format!(
            "spec is for `{}`, not `{}`",
            spec.study.as_str(),
            study.as_str()
        )));
    }
    Ok(())
}
