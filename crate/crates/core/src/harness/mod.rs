//! Seeded protocol runners, verdicts, persistence and verification.
//!
//! A run turns an [`ExperimentConfig`] into an [`ExperimentReport`] plus one
//! CSV table per trial. Trial `k` on environment `e` draws its stream from
//! `seed::derive(config.seed, [e, k])`, so reruns are byte-identical and the
//! execution strategy does not change any output. Every summary is a pure
//! function of the per-trial tables; [`verify`] re-reads them from disk and
//! recomputes it.

pub mod b2;
pub mod b3;
pub mod b4;
pub mod b5;
mod config;
mod report;

pub use config::{
    b2_default_settings, B2Params, B3Params, B4Params, B5Params, ExperimentConfig, Protocol, ProtocolParams, ShiftKind,
    Thresholds,
};
pub use report::{
    criterion_description, export_plots, falsification_summary, verify, CriterionRow, ExperimentReport, Provenance,
    RunOutput, Summary, TrialRecord, Verdict, VerifyOutcome, VERIFY_TOLERANCE,
};

use crate::error::Result;
use crate::exec::Execution;

/// Runs the protocol named in `config`.
pub fn run(config: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    match config.protocol {
        Protocol::B2EfficiencyGeneralization => b2::run(config, exec),
        Protocol::B3ExceptionDecay => b3::run(config, exec),
        Protocol::B4HierarchyGradient => b4::run(config, exec),
        Protocol::B5EnergyProxy => b5::run(config, exec),
    }
}

pub fn run_b2(config: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    b2::run(config, exec)
}

pub fn run_b3(config: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    b3::run(config, exec)
}

pub fn run_b4(config: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    b4::run(config, exec)
}

pub fn run_b5(config: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    b5::run(config, exec)
}
