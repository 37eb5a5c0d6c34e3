//! Per-layer efficiency of greedily optimised encoder stacks.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::{to_csv, trial_file, ExperimentReport, RunOutput, Summary, TrialRecord, Verdict};
use crate::env::EnvSpec;
use crate::error::{LabError, Result};
use crate::exec::Execution;
use crate::hierarchy::{optimize_stack, strictly_increasing, total_efficiency, StackOptions};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B4Row {
    pub layer: usize,
    pub rate_bits: f64,
    pub relevance_bits: f64,
    pub epsilon_ib: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B4EnvSummary {
    pub env_index: usize,
    pub env: String,
    pub trials: usize,
    pub depth: usize,
    /// A single layer is increasing by definition.
    pub vacuous: bool,
    pub increasing: usize,
    pub pass_rate: f64,
    pub mean_epsilon: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B4Summary {
    pub envs: Vec<B4EnvSummary>,
    pub verdict: Verdict,
}

impl B4Summary {
    pub fn evidence(&self) -> String {
        self.envs
            .iter()
            .map(|e| format!("{}: increasing in {}/{} trials", e.env, e.increasing, e.trials))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn run_trial(cfg: &ExperimentConfig, env_index: usize, env: &EnvSpec, trial: usize) -> Result<(TrialRecord, Vec<B4Row>)> {
    let p = &cfg.params.b4;
    let trial_seed = seed::derive(cfg.seed, &[env_index as u64, trial as u64]);
    let joint = env.exact_joint()?;
    let opts = StackOptions {
        restarts: p.restarts,
        execution: Execution::Sequential,
        ..StackOptions::default()
    };
    let out = optimize_stack(&joint, &p.layer_sizes, &p.effective_betas(), trial_seed, opts)?;
    let rows = out
        .stack
        .layers()?
        .into_iter()
        .map(|l| B4Row {
            layer: l.layer,
            rate_bits: l.rate_bits,
            relevance_bits: l.relevance_bits,
            epsilon_ib: l.epsilon_ib,
        })
        .collect();
    let total = total_efficiency(&out.stack)?;
    let mut extra = std::collections::BTreeMap::new();
    extra.insert("product_epsilon".into(), total.product);
    extra.insert("direct_epsilon".into(), total.direct);
    if total.ratio.is_finite() {
        extra.insert("product_over_direct".into(), total.ratio);
    }
    let env_name = env.kind().name();
    let record = TrialRecord {
        trial,
        env_index,
        env: env_name.into(),
        model_index: None,
        model: None,
        seed: trial_seed,
        file: trial_file(cfg.protocol, env_name, env_index, None, trial),
        extra,
    };
    Ok((record, rows))
}

pub fn run(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    cfg.validate()?;
    let envs = cfg.effective_envs();
    let jobs: Vec<(usize, usize)> = (0..envs.len()).flat_map(|e| (0..cfg.trials).map(move |t| (e, t))).collect();
    let results = exec.map(jobs.len(), |i| {
        let (e, t) = jobs[i];
        run_trial(cfg, e, &envs[e], t)
    });
    let mut records = Vec::with_capacity(jobs.len());
    let mut tables = Vec::with_capacity(jobs.len());
    for r in results {
        let (rec, rows) = r?;
        records.push(rec);
        tables.push(rows);
    }
    let files = records
        .iter()
        .zip(&tables)
        .map(|(r, t)| Ok((r.file.clone(), to_csv(t)?)))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(cfg, &records, &tables)?;
    Ok(RunOutput {
        report: ExperimentReport::new(cfg, records, Summary::B4(summary)),
        files,
    })
}

/// Recomputes the summary from per-trial tables.
pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord], tables: &[Vec<B4Row>]) -> Result<B4Summary> {
    let th = &cfg.thresholds;
    let depth = cfg.params.b4.layer_sizes.len();
    let mut envs = Vec::new();
    for (e, env) in cfg.effective_envs().iter().enumerate() {
        let mine: Vec<&Vec<B4Row>> = records.iter().zip(tables).filter(|(r, _)| r.env_index == e).map(|(_, t)| t).collect();
        if mine.iter().any(|t| t.len() != depth) {
            return Err(LabError::Parse(format!("a table in environment {e} does not have {depth} layers")));
        }
        let trials = mine.len();
        let increasing = mine
            .iter()
            .filter(|t| strictly_increasing(&t.iter().map(|r| r.epsilon_ib).collect::<Vec<_>>()))
            .count();
        let pass_rate = if trials == 0 { 0.0 } else { increasing as f64 / trials as f64 };
        let mean_epsilon = (0..depth)
            .map(|l| mine.iter().map(|t| t[l].epsilon_ib).sum::<f64>() / trials.max(1) as f64)
            .collect();
        let vacuous = depth <= 1;
        let verdict = if vacuous || trials == 0 {
            Verdict::Indeterminate
        } else if 1.0 - pass_rate > th.gradient_falsifies {
            Verdict::Falsifies
        } else if pass_rate >= th.gradient_supports {
            Verdict::Supports
        } else {
            Verdict::Indeterminate
        };
        envs.push(B4EnvSummary {
            env_index: e,
            env: env.kind().name().into(),
            trials,
            depth,
            vacuous,
            increasing,
            pass_rate,
            mean_epsilon,
            verdict,
        });
    }
    let verdict = if envs.iter().any(|e| e.verdict == Verdict::Falsifies) {
        Verdict::Falsifies
    } else if !envs.is_empty() && envs.iter().all(|e| e.verdict == Verdict::Supports) {
        Verdict::Supports
    } else {
        Verdict::Indeterminate
    };
    Ok(B4Summary { envs, verdict })
}

#[derive(Serialize)]
struct PlotRow<'a> {
    env: &'a str,
    trial: usize,
    layer: usize,
    rate_bits: f64,
    relevance_bits: f64,
    epsilon_ib: f64,
}

pub(crate) fn plot_rows(report: &ExperimentReport, tables: &[Vec<B4Row>]) -> Result<Vec<u8>> {
    let rows: Vec<PlotRow> = report
        .per_trial
        .iter()
        .zip(tables)
        .flat_map(|(r, t)| {
            t.iter().map(move |row| PlotRow {
                env: &r.env,
                trial: r.trial,
                layer: row.layer,
                rate_bits: row.rate_bits,
                relevance_bits: row.relevance_bits,
                epsilon_ib: row.epsilon_ib,
            })
        })
        .collect();
    to_csv(&rows)
}
