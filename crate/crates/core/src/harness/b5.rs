//! Operation cost per predictive bit along a learning trajectory.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::{to_csv, trial_file, ExperimentReport, RunOutput, Summary, TrialRecord, Verdict};
use crate::env::EnvSpec;
use crate::error::Result;
use crate::exec::Execution;
use crate::ib::ZERO_RATE;
use crate::models::{captured_information, feed, truth_for, Family, ModelSpec};
use crate::seed;
use crate::stats::theil_sen_slope;

pub const MIN_TREND_POINTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B5Row {
    pub t: u64,
    pub ops: u64,
    /// Operations per step since the previous checkpoint.
    pub ops_per_step: f64,
    /// Predictive information captured by the model, bits.
    pub info_bits: f64,
    /// `ops_per_step / info_bits`; empty when nothing has been captured.
    pub xi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B5TrialTrend {
    pub env_index: usize,
    pub model_index: usize,
    pub trial: usize,
    /// Theil-Sen slope of `xi` against `t` after burn-in.
    pub slope: Option<f64>,
    pub points: usize,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B5FamilySummary {
    pub env_index: usize,
    pub env: String,
    pub model_index: usize,
    pub model: String,
    pub family: Family,
    pub trials: usize,
    /// Trials whose trend is undefined (nothing captured or too few points).
    pub undefined: usize,
    pub negative: usize,
    pub negative_fraction: Option<f64>,
    pub median_xi_first: Option<f64>,
    pub median_xi_last: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B5Summary {
    pub trends: Vec<B5TrialTrend>,
    pub families: Vec<B5FamilySummary>,
    pub verdict: Verdict,
}

impl B5Summary {
    pub fn evidence(&self) -> String {
        self.families
            .iter()
            .map(|f| format!("{}/{}: xi falling in {}/{} trials", f.env, f.family, f.negative, f.trials - f.undefined))
            .collect::<Vec<_>>()
            .join("; ")
    }

    pub fn family(&self, env_index: usize, family: Family) -> Option<&B5FamilySummary> {
        self.families.iter().find(|f| f.env_index == env_index && f.family == family)
    }
}

fn run_trial(
    cfg: &ExperimentConfig,
    env_index: usize,
    env: &EnvSpec,
    model_index: usize,
    spec: &ModelSpec,
    trial: usize,
) -> Result<(TrialRecord, Vec<B5Row>)> {
    let p = &cfg.params.b5;
    let trial_seed = seed::derive(cfg.seed, &[env_index as u64, trial as u64]);
    let stream = env.with_seed(trial_seed).with_length(p.length).generate()?;
    let (truth, freq) = truth_for(spec, &stream)?;
    let mut model = spec.build_for(&stream);
    model.ledger_mut().keep_history = false;
    let mut rows = Vec::new();
    let (mut last_t, mut last_ops) = (0u64, 0u64);
    feed(model.as_mut(), spec, &stream, 0..stream.len(), |i, _, m| {
        let t = i as u64 + 1;
        if !t.is_multiple_of(p.checkpoint_every as u64) {
            return;
        }
        let ops = m.ops().count;
        let per_step = (ops - last_ops) as f64 / (t - last_t) as f64;
        let info = captured_information(m, &truth, &freq);
        rows.push(B5Row {
            t,
            ops,
            ops_per_step: per_step,
            info_bits: info,
            xi: (info > ZERO_RATE).then(|| per_step / info),
        });
        last_t = t;
        last_ops = ops;
    });
    let env_name = env.kind().name();
    let family = spec.family().name();
    let mut extra = BTreeMap::new();
    extra.insert("ops_saturated".into(), if model.ops().saturated { 1.0 } else { 0.0 });
    let record = TrialRecord {
        trial,
        env_index,
        env: env_name.into(),
        model_index: Some(model_index),
        model: Some(spec.label()),
        seed: trial_seed,
        file: trial_file(cfg.protocol, env_name, env_index, Some(&format!("m{model_index}_{family}")), trial),
        extra,
    };
    Ok((record, rows))
}

pub fn run(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    cfg.validate()?;
    let envs = cfg.effective_envs();
    let models = cfg.effective_models();
    let jobs: Vec<(usize, usize, usize)> = (0..envs.len())
        .flat_map(|e| (0..models.len()).flat_map(move |m| (0..cfg.trials).map(move |t| (e, m, t))))
        .collect();
    let results = exec.map(jobs.len(), |i| {
        let (e, m, t) = jobs[i];
        run_trial(cfg, e, &envs[e], m, &models[m], t)
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
        report: ExperimentReport::new(cfg, records, Summary::B5(summary)),
        files,
    })
}

fn trend(rows: &[B5Row], burn_in: u64) -> (Option<f64>, usize) {
    let (t, xi): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.t > burn_in)
        .filter_map(|r| r.xi.map(|x| (r.t as f64, x)))
        .unzip();
    if t.len() < MIN_TREND_POINTS {
        return (None, t.len());
    }
    (theil_sen_slope(&t, &xi), t.len())
}

fn median_opt(v: Vec<f64>) -> Option<f64> {
    (!v.is_empty()).then(|| crate::stats::median(&v))
}

/// Recomputes the summary from per-trial tables.
pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord], tables: &[Vec<B5Row>]) -> Result<B5Summary> {
    let th = &cfg.thresholds;
    let burn_in = cfg.params.b5.burn_in as u64;
    let models = cfg.effective_models();
    let trends: Vec<B5TrialTrend> = records
        .iter()
        .zip(tables)
        .map(|(r, rows)| {
            let (slope, points) = trend(rows, burn_in);
            B5TrialTrend {
                env_index: r.env_index,
                model_index: r.model_index.unwrap_or(0),
                trial: r.trial,
                slope,
                points,
                saturated: r.extra.get("ops_saturated").is_some_and(|v| *v > 0.0),
            }
        })
        .collect();
    let mut families = Vec::new();
    for (e, env) in cfg.effective_envs().iter().enumerate() {
        for (m, spec) in models.iter().enumerate() {
            let idx: Vec<usize> = (0..trends.len())
                .filter(|&i| trends[i].env_index == e && trends[i].model_index == m)
                .collect();
            let defined: Vec<f64> = idx.iter().filter_map(|&i| trends[i].slope).collect();
            let negative = defined.iter().filter(|&&s| s < 0.0).count();
            let after = |first: bool| {
                idx.iter()
                    .filter_map(|&i| {
                        let mut it = tables[i].iter().filter(|r| r.t > burn_in).filter_map(|r| r.xi);
                        if first {
                            it.next()
                        } else {
                            it.next_back()
                        }
                    })
                    .collect::<Vec<f64>>()
            };
            families.push(B5FamilySummary {
                env_index: e,
                env: env.kind().name().into(),
                model_index: m,
                model: spec.label(),
                family: spec.family(),
                trials: idx.len(),
                undefined: idx.len() - defined.len(),
                negative,
                negative_fraction: (!defined.is_empty()).then(|| negative as f64 / defined.len() as f64),
                median_xi_first: median_opt(after(true)),
                median_xi_last: median_opt(after(false)),
            });
        }
    }
    let gen: Vec<&B5FamilySummary> = families.iter().filter(|f| f.family == Family::Generative).collect();
    let defined: usize = gen.iter().map(|f| f.trials - f.undefined).sum();
    let negative: usize = gen.iter().map(|f| f.negative).sum();
    let verdict = if defined == 0 {
        Verdict::Indeterminate
    } else {
        let frac = negative as f64 / defined as f64;
        if frac >= th.xi_supports {
            Verdict::Supports
        } else if frac < th.xi_falsifies {
            Verdict::Falsifies
        } else {
            Verdict::Indeterminate
        }
    };
    Ok(B5Summary {
        trends,
        families,
        verdict,
    })
}

#[derive(Serialize)]
struct PlotRow<'a> {
    env: &'a str,
    model: &'a str,
    trial: usize,
    t: u64,
    ops_per_step: f64,
    info_bits: f64,
    xi: Option<f64>,
}

pub(crate) fn plot_rows(report: &ExperimentReport, tables: &[Vec<B5Row>]) -> Result<Vec<u8>> {
    let rows: Vec<PlotRow> = report
        .per_trial
        .iter()
        .zip(tables)
        .flat_map(|(r, t)| {
            t.iter().map(move |row| PlotRow {
                env: &r.env,
                model: r.model.as_deref().unwrap_or(""),
                trial: r.trial,
                t: row.t,
                ops_per_step: row.ops_per_step,
                info_bits: row.info_bits,
                xi: row.xi,
            })
        })
        .collect();
    to_csv(&rows)
}
