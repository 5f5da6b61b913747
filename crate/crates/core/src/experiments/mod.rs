//! Simulation studies and the email case study, with reproducible reports.

mod output;
mod run;
mod spec;
pub mod stats;

pub use run::{
    run_case_study, run_ghost_triadic, run_recovery, run_sample_size, run_study, CaseDetails,
    ModelKind, ModelOutcome, ReplicationRecord, ScenarioInfo, StudyReport,
};
pub use spec::{derive_seed, ExperimentSpec, Scale, ScenarioSize, Study};
