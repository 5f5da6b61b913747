//! Report files: `sigmas.csv`, `hazard_curves.csv`, `summary.json` and, for
//! the case study, `frailties.csv`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::ExperimentError;
use crate::experiments::run::{ModelKind, ModelOutcome, StudyReport};
use crate::experiments::stats::{mean, median, quartiles, Quartiles};
use crate::report::sig12;
use crate::strata::{StratumLabel, TriadicKind};

/// Rounds to 12 significant digits so the JSON text is stable.
fn r12(x: f64) -> Value {
    if x.is_finite() {
        json!(sig12(x).parse::<f64>().expect("sig12 parses"))
    } else {
        Value::Null
    }
}

fn quartiles_json(q: Option<Quartiles>) -> Value {
    match q {
        Some(q) => {
            json!({"q1": r12(q.q1), "median": r12(q.median), "q3": r12(q.q3), "iqr": r12(q.iqr)})
        }
        None => Value::Null,
    }
}

fn opt_sig12(x: Option<f64>) -> String {
    x.map(sig12).unwrap_or_else(|| "NA".into())
}

impl StudyReport {
    /// One row per record: `study,scenario,replication,sigma_exp_hat,sigma_pop_hat,converged,seconds`.
    /// Sigma columns are `NA` for failed or fixed-only replications.
    pub fn write_sigmas_csv<W: Write>(&self, writer: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "study",
            "scenario",
            "replication",
            "sigma_exp_hat",
            "sigma_pop_hat",
            "converged",
            "seconds",
        ])?;
        for rec in &self.records {
            let frailty = rec.model(ModelKind::Frailty);
            let (converged, seconds) = match &rec.outcome {
                Ok(models) => (
                    models.iter().all(|m| m.fit.converged),
                    models.iter().map(|m| m.seconds).sum::<f64>(),
                ),
                Err(_) => (false, 0.0),
            };
            w.write_record([
                self.spec.study.as_str().to_string(),
                self.scenarios[rec.scenario].name.clone(),
                rec.replication.to_string(),
                opt_sig12(frailty.and_then(|m| m.fit.sigma_exp)),
                opt_sig12(frailty.and_then(|m| m.fit.sigma_pop)),
                converged.to_string(),
                format!("{seconds:.3}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `study,scenario,replication,model,stratum,time,cumhaz,hazard` on each curve grid.
    pub fn write_curves_csv<W: Write>(&self, writer: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "study",
            "scenario",
            "replication",
            "model",
            "stratum",
            "time",
            "cumhaz",
            "hazard",
        ])?;
        for rec in &self.records {
            let Ok(models) = &rec.outcome else { continue };
            for m in models {
                for c in &m.curves {
                    for k in 0..c.grid.len() {
                        w.write_record([
                            self.spec.study.as_str(),
                            &self.scenarios[rec.scenario].name,
                            &rec.replication.to_string(),
                            m.model.as_str(),
                            c.stratum.as_str(),
                            &sig12(c.grid[k]),
                            &sig12(c.cumhaz[k]),
                            &sig12(c.hazard[k]),
                        ])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    fn model_summary(&self, scenario: usize, model: ModelKind) -> Value {
        let outcomes: Vec<&ModelOutcome> = self
            .records_for(scenario)
            .filter_map(|r| r.model(model))
            .collect();
        if outcomes.is_empty() {
            return Value::Null;
        }
        let mut central = Map::new();
        let mut ratios = Map::new();
        for s in StratumLabel::ALL {
            let cm: Vec<f64> = outcomes.iter().filter_map(|o| o.central_mean(s)).collect();
            if !cm.is_empty() {
                central.insert(s.as_str().into(), json!({"median": median(&cm).map_or(Value::Null, r12), "mean": mean(&cm).map_or(Value::Null, r12), "n": cm.len()}));
            }
            let mr: Vec<f64> = outcomes.iter().filter_map(|o| o.mean_ratio(s)).collect();
            if !mr.is_empty() {
                ratios.insert(s.as_str().into(), json!({"median": median(&mr).map_or(Value::Null, r12), "mean": mean(&mr).map_or(Value::Null, r12), "n": mr.len()}));
            }
        }
        let se: Vec<f64> = outcomes.iter().filter_map(|o| o.fit.sigma_exp).collect();
        let sp: Vec<f64> = outcomes.iter().filter_map(|o| o.fit.sigma_pop).collect();
        json!({
            "fits": outcomes.len(),
            "converged": outcomes.iter().filter(|o| o.fit.converged).count(),
            "sigma_exp_hat": quartiles_json(quartiles(&se)),
            "sigma_pop_hat": quartiles_json(quartiles(&sp)),
            "sigma_exp_at_lower_bound": outcomes.iter().filter(|o| o.fit.sigma_exp_at_lower_bound).count(),
            "sigma_pop_at_lower_bound": outcomes.iter().filter(|o| o.fit.sigma_pop_at_lower_bound).count(),
            "central_mean_hazard": central,
            "mean_hazard_ratio": ratios,
        })
    }

    /// Share of replications whose triadic-to-Spontaneous mean ratio is
    /// larger under Transitive than under Cyclic stratification.
    fn kind_comparisons(&self) -> Vec<Value> {
        let find = |size: usize, kind: TriadicKind| {
            self.scenarios
                .iter()
                .position(|s| s.size_index == size && s.kind == kind)
        };
        let mut out = Vec::new();
        for size in 0..self.spec.scenarios.len() {
            let (Some(tr), Some(cy)) = (
                find(size, TriadicKind::Transitive),
                find(size, TriadicKind::Cyclic),
            ) else {
                continue;
            };
            for model in [ModelKind::Fixed, ModelKind::Frailty] {
                let by_rep = |sc: usize| -> BTreeMap<usize, f64> {
                    self.records_for(sc)
                        .filter_map(|r| {
                            Some((r.replication, r.model(model)?.mean_ratio(StratumLabel::T)?))
                        })
                        .collect()
                };
                let (t, c) = (by_rep(tr), by_rep(cy));
                let paired: Vec<(f64, f64)> = t
                    .iter()
                    .filter_map(|(r, &a)| Some((a, *c.get(r)?)))
                    .collect();
                if paired.is_empty() {
                    continue;
                }
                let wins = paired.iter().filter(|(a, b)| a > b).count();
                out.push(json!({
                    "n_actors": self.spec.scenarios[size].n_actors,
                    "n_events": self.spec.scenarios[size].n_events,
                    "model": model.as_str(),
                    "paired_replications": paired.len(),
                    "transitive_exceeds_cyclic": wins,
                    "fraction": r12(wins as f64 / paired.len() as f64),
                }));
            }
        }
        out
    }

    pub fn summary(&self) -> Value {
        let scenarios: Vec<Value> = self
            .scenarios
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let recs: Vec<_> = self.records_for(i).collect();
                json!({
                    "name": s.name,
                    "n_actors": s.n_actors,
                    "n_events": s.n_events,
                    "kind": s.kind,
                    "replications": recs.len(),
                    "failed": recs.iter().filter(|r| r.outcome.is_err()).count(),
                    "fixed": self.model_summary(i, ModelKind::Fixed),
                    "frailty": self.model_summary(i, ModelKind::Frailty),
                })
            })
            .collect();
        let failures: Vec<Value> = self
            .failures()
            .map(|r| json!({"scenario": self.scenarios[r.scenario].name, "replication": r.replication, "error": r.error()}))
            .collect();
        let mut out = json!({
            "study": self.spec.study.as_str(),
            "seed": self.spec.seed,
            "replications": self.spec.replications,
            "records": self.records.len(),
            "scenarios": scenarios,
            "failures": failures,
        });
        let comparisons = self.kind_comparisons();
        if !comparisons.is_empty() {
            out["kind_comparisons"] = json!(comparisons);
        }
        if let Some(case) = &self.case {
            out["case_study"] = json!({
                "preprocess": case.preprocess,
                "n_actors": case.n_actors,
                "n_events": case.n_events,
                "risk_policy": case.risk_policy,
            });
        }
        out
    }

    /// Writes every report file into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir)?;
        self.write_sigmas_csv(BufWriter::new(File::create(dir.join("sigmas.csv"))?))?;
        self.write_curves_csv(BufWriter::new(File::create(dir.join("hazard_curves.csv"))?))?;
        let mut summary = BufWriter::new(File::create(dir.join("summary.json"))?);
        serde_json::to_writer_pretty(&mut summary, &self.summary())?;
        summary.write_all(b"\n")?;
        summary.flush()?;
        if let Some(case) = &self.case {
            if let Some(frailty) = self
                .records
                .first()
                .and_then(|r| r.model(ModelKind::Frailty))
            {
                frailty.fit.write_frailty_csv(
                    BufWriter::new(File::create(dir.join("frailties.csv"))?),
                    &case.symbols,
                )?;
            }
        }
        Ok(())
    }
}
