//! Efficiency against out-of-distribution surprise across a family of models.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ShiftKind};
use super::report::{to_csv, trial_file, ExperimentReport, RunOutput, Summary, TrialRecord, Verdict};
use crate::env::{EnvSpec, SymbolStream};
use crate::error::{LabError, Result};
use crate::exec::Execution;
use crate::models::{feed, Family, ModelSpec};
use crate::seed;
use crate::stats::stratified_spearman_permutation;

pub const MIN_SETTINGS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B2Row {
    pub setting: usize,
    pub label: String,
    pub family: Family,
    pub c_efficiency: f64,
    pub train_surprise_bits: f64,
    pub ood_surprise_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B2EnvSummary {
    pub env_index: usize,
    pub env: String,
    pub trials: usize,
    pub settings: usize,
    /// Mean within-trial Spearman correlation of efficiency and OOD surprise.
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub strata_used: usize,
    /// Every trial had constant efficiency or constant surprise.
    pub zero_variance: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B2Summary {
    pub envs: Vec<B2EnvSummary>,
    pub verdict: Verdict,
}

impl B2Summary {
    pub fn evidence(&self) -> String {
        self.envs
            .iter()
            .map(|e| match (e.rho, e.p_value) {
                (Some(r), Some(p)) => format!("{}: rho={r:.3} p={p:.4}", e.env),
                _ => format!("{}: rho undefined", e.env),
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn test_stream(cfg: &ExperimentConfig, env: &EnvSpec, trial_seed: u64) -> Result<SymbolStream> {
    let p = &cfg.params.b2;
    let test_seed = seed::derive(trial_seed, &[1]);
    match p.shift {
        ShiftKind::ContextReweight => env.shifted()?.with_seed(test_seed).with_length(p.test_length).generate(),
        ShiftKind::LabelNoise => {
            let mut s = env.with_seed(test_seed).with_length(p.test_length).generate()?;
            let mut rng = seed::rng_at(trial_seed, &[2]);
            for x in &mut s.symbols {
                *x = rng.random_range(0..s.alphabet);
            }
            Ok(s)
        }
    }
}

fn run_trial(cfg: &ExperimentConfig, env_index: usize, env: &EnvSpec, trial: usize, models: &[ModelSpec]) -> Result<(TrialRecord, Vec<B2Row>)> {
    let trial_seed = seed::derive(cfg.seed, &[env_index as u64, trial as u64]);
    let train = env.with_seed(trial_seed).with_length(cfg.params.b2.train_length).generate()?;
    let test = test_stream(cfg, env, trial_seed)?;
    let rows = models
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let mut m = spec.build_for(&train);
            feed(m.as_mut(), spec, &train, 0..train.len(), |_, _, _| {});
            let ledger = m.ledger();
            let ood: f64 = (0..test.len())
                .map(|i| m.surprise(test.symbols[i], spec.context_at(&test, i)))
                .sum::<f64>()
                / test.len() as f64;
            B2Row {
                setting: k,
                label: spec.label(),
                family: spec.family(),
                c_efficiency: ledger.explained_ratio(),
                train_surprise_bits: ledger.l_residual / ledger.t as f64,
                ood_surprise_bits: ood,
            }
        })
        .collect();
    let env_name = env.kind().name();
    let record = TrialRecord {
        trial,
        env_index,
        env: env_name.into(),
        model_index: None,
        model: None,
        seed: trial_seed,
        file: trial_file(cfg.protocol, env_name, env_index, None, trial),
        extra: Default::default(),
    };
    Ok((record, rows))
}

pub fn run(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    cfg.validate()?;
    let envs = cfg.effective_envs();
    let models = cfg.effective_models();
    if models.len() < MIN_SETTINGS {
        return Err(LabError::InsufficientData(format!(
            "{} model settings; rank correlation needs at least {MIN_SETTINGS}",
            models.len()
        )));
    }
    let jobs: Vec<(usize, usize)> = (0..envs.len()).flat_map(|e| (0..cfg.trials).map(move |t| (e, t))).collect();
    let results = exec.map(jobs.len(), |i| {
        let (e, t) = jobs[i];
        run_trial(cfg, e, &envs[e], t, &models)
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
        report: ExperimentReport::new(cfg, records, Summary::B2(summary)),
        files,
    })
}

/// Recomputes the summary from per-trial tables.
pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord], tables: &[Vec<B2Row>]) -> Result<B2Summary> {
    let th = &cfg.thresholds;
    let envs = cfg.effective_envs();
    let mut out = Vec::with_capacity(envs.len());
    for (e, env) in envs.iter().enumerate() {
        let strata: Vec<(Vec<f64>, Vec<f64>)> = records
            .iter()
            .zip(tables)
            .filter(|(r, _)| r.env_index == e)
            .map(|(_, rows)| {
                (
                    rows.iter().map(|r| r.c_efficiency).collect(),
                    rows.iter().map(|r| r.ood_surprise_bits).collect(),
                )
            })
            .collect();
        let settings = strata.first().map_or(0, |s| s.0.len());
        if settings < MIN_SETTINGS {
            return Err(LabError::InsufficientData(format!("{settings} settings in environment {e}")));
        }
        let test = stratified_spearman_permutation(
            &strata,
            cfg.params.b2.permutations,
            seed::derive(cfg.seed, &[e as u64, u64::MAX]),
        );
        let verdict = match test {
            Some(t) if t.rho <= th.rho_supports && t.p_value < th.p_value => Verdict::Supports,
            Some(t) if t.rho >= th.rho_falsifies && t.p_value < th.p_value => Verdict::Falsifies,
            _ => Verdict::Indeterminate,
        };
        out.push(B2EnvSummary {
            env_index: e,
            env: env.kind().name().into(),
            trials: strata.len(),
            settings,
            rho: test.map(|t| t.rho),
            p_value: test.map(|t| t.p_value),
            strata_used: test.map_or(0, |t| t.strata_used),
            zero_variance: test.is_none(),
            verdict,
        });
    }
    let verdict = if out.iter().any(|e| e.verdict == Verdict::Falsifies) {
        Verdict::Falsifies
    } else if !out.is_empty() && out.iter().all(|e| e.verdict == Verdict::Supports) {
        Verdict::Supports
    } else {
        Verdict::Indeterminate
    };
    Ok(B2Summary { envs: out, verdict })
}

#[derive(Serialize)]
struct PlotRow<'a> {
    env: &'a str,
    trial: usize,
    setting: usize,
    label: &'a str,
    family: Family,
    c_efficiency: f64,
    ood_surprise_bits: f64,
}

pub(crate) fn plot_rows(report: &ExperimentReport, tables: &[Vec<B2Row>]) -> Result<Vec<u8>> {
    let rows: Vec<PlotRow> = report
        .per_trial
        .iter()
        .zip(tables)
        .flat_map(|(r, t)| {
            t.iter().map(move |row| PlotRow {
                env: &r.env,
                trial: r.trial,
                setting: row.setting,
                label: &row.label,
                family: row.family,
                c_efficiency: row.c_efficiency,
                ood_surprise_bits: row.ood_surprise_bits,
            })
        })
        .collect();
    to_csv(&rows)
}
