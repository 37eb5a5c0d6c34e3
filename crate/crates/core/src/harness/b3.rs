//! Exception decay and cumulative-exception growth per model family.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::{to_csv, trial_file, ExperimentReport, RunOutput, Summary, TrialRecord, Verdict};
use crate::dynamics::{fit_alpha, log_checkpoints, AlphaFit, FitOptions, Signature};
use crate::env::EnvSpec;
use crate::error::{LabError, Result};
use crate::exec::Execution;
use crate::models::{feed, information_mass, truth_for, Family, ModelSpec};
use crate::seed;
use crate::stats::{median, ols};

pub const CORRELATIONAL_ALPHA_BAND: (f64, f64) = (0.8, 1.2);
pub const GENERATIVE_ALPHA_MAX: f64 = 0.3;
/// Residual mass below this counts as exhausted.
pub const ZERO_RESIDUAL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B3Row {
    pub t: u64,
    /// Information mass of the model against the true conditional, bits.
    pub n_residual: f64,
    pub n_cumulative: u64,
    /// Efficiency after step `t`.
    pub c: f64,
    /// Efficiency summed over steps `0..t`, each read before its update.
    pub c_cumulative: f64,
    pub alpha_point: u8,
    pub epoch_point: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayStatus {
    Fitted,
    /// Residual mass ran out before enough epochs were seen.
    ZeroResidual,
    /// Cumulative efficiency never moved or the fitted rate is not positive.
    NonDecaying,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted `eta * C_eff`: minus the slope of `ln n_residual` on cumulative efficiency.
    pub rate: f64,
    pub r2: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B3TrialFit {
    pub env_index: usize,
    pub model_index: usize,
    pub trial: usize,
    /// No exception occurred inside the fit window.
    pub no_exceptions: bool,
    pub alpha: Option<AlphaFit>,
    pub alpha_error: Option<String>,
    pub signature: Option<Signature>,
    /// Alpha lies in this family's band.
    pub in_band: bool,
    /// Bootstrap interval misses the other family's band.
    pub ci_excludes_other_band: bool,
    pub decay_status: DecayStatus,
    pub decay: Option<DecayFit>,
    /// Smallest efficiency seen from `t_min` on.
    pub c_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B3FamilySummary {
    pub env_index: usize,
    pub env: String,
    pub model_index: usize,
    pub model: String,
    pub family: Family,
    pub trials: usize,
    pub alpha_median: Option<f64>,
    pub no_exceptions: usize,
    pub in_band: usize,
    pub ci_excludes_other_band: usize,
    pub signatures: BTreeMap<String, usize>,
    pub decay_fitted: usize,
    pub decay_deviating: usize,
    pub decay_holding: usize,
    pub decay_r2_median: Option<f64>,
    pub c_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B3Summary {
    pub fits: Vec<B3TrialFit>,
    pub families: Vec<B3FamilySummary>,
    pub verdict: Verdict,
}

impl B3Summary {
    pub fn evidence(&self) -> String {
        self.families
            .iter()
            .map(|f| {
                format!(
                    "{}/{}: alpha~{} in-band {}/{}, decay r2~{} ({} fitted)",
                    f.env,
                    f.family,
                    f.alpha_median.map_or("-".into(), |a| format!("{a:.3}")),
                    f.in_band,
                    f.trials,
                    f.decay_r2_median.map_or("-".into(), |a| format!("{a:.3}")),
                    f.decay_fitted
                )
            })
            .collect::<Vec<_>>()
            .join("; ")
    }

    pub fn family(&self, env_index: usize, family: Family) -> Option<&B3FamilySummary> {
        self.families.iter().find(|f| f.env_index == env_index && f.family == family)
    }
}

/// Checkpoint steps and whether each serves the alpha fit, the decay fit, or both.
pub fn checkpoints(cfg: &ExperimentConfig) -> Vec<(u64, bool, bool)> {
    let p = &cfg.params.b3;
    let alpha = log_checkpoints(p.t_min, p.t_max, p.alpha_points);
    let epochs: Vec<u64> = (1..=p.epochs as u64).map(|i| (p.t_max * i / p.epochs as u64).max(1)).collect();
    let mut all: Vec<u64> = alpha.iter().chain(&epochs).copied().collect();
    all.sort_unstable();
    all.dedup();
    all.into_iter()
        .map(|t| (t, alpha.binary_search(&t).is_ok(), epochs.binary_search(&t).is_ok()))
        .collect()
}

fn run_trial(
    cfg: &ExperimentConfig,
    env_index: usize,
    env: &EnvSpec,
    model_index: usize,
    spec: &ModelSpec,
    trial: usize,
) -> Result<(TrialRecord, Vec<B3Row>)> {
    let trial_seed = seed::derive(cfg.seed, &[env_index as u64, trial as u64]);
    let stream = env.with_seed(trial_seed).with_length(cfg.params.b3.t_max as usize).generate()?;
    let (truth, freq) = truth_for(spec, &stream)?;
    let points = checkpoints(cfg);
    let mut next = 0;
    let mut rows = Vec::with_capacity(points.len());
    let mut model = spec.build_for(&stream);
    let (mut c_prev, mut c_cum) = (0.0, 0.0);
    model.ledger_mut().keep_history = false;
    feed(model.as_mut(), spec, &stream, 0..stream.len(), |i, _, m| {
        c_cum += c_prev;
        c_prev = m.ledger().explained_ratio();
        let t = i as u64 + 1;
        if next < points.len() && points[next].0 == t {
            rows.push(B3Row {
                t,
                n_residual: information_mass(m, &truth, &freq),
                n_cumulative: m.ledger().n_exceptions,
                c: c_prev,
                c_cumulative: c_cum,
                alpha_point: points[next].1 as u8,
                epoch_point: points[next].2 as u8,
            });
            next += 1;
        }
    });
    let env_name = env.kind().name();
    let family = spec.family().name();
    let record = TrialRecord {
        trial,
        env_index,
        env: env_name.into(),
        model_index: Some(model_index),
        model: Some(spec.label()),
        seed: trial_seed,
        file: trial_file(cfg.protocol, env_name, env_index, Some(&format!("m{model_index}_{family}")), trial),
        extra: Default::default(),
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
    let summary = summarize_with(cfg, &records, &tables, exec)?;
    Ok(RunOutput {
        report: ExperimentReport::new(cfg, records, Summary::B3(summary)),
        files,
    })
}

fn classify(cfg: &ExperimentConfig, fit: &AlphaFit) -> Signature {
    let th = &cfg.thresholds;
    if fit.ci_high < th.signature_causal_ci_high {
        Signature::CausalLike
    } else if fit.ci_low > th.signature_correlational_ci_low {
        Signature::CorrelationalLike
    } else {
        Signature::Indeterminate
    }
}

fn decay_fit(rows: &[B3Row]) -> (DecayStatus, Option<DecayFit>) {
    let epochs: Vec<&B3Row> = rows.iter().filter(|r| r.epoch_point == 1).collect();
    let live: Vec<&&B3Row> = epochs.iter().filter(|r| r.n_residual > ZERO_RESIDUAL).collect();
    if live.len() < crate::dynamics::MIN_FIT_POINTS {
        return (DecayStatus::ZeroResidual, None);
    }
    let x: Vec<f64> = live.iter().map(|r| r.c_cumulative).collect();
    let y: Vec<f64> = live.iter().map(|r| r.n_residual.ln()).collect();
    match ols(&x, &y) {
        Some(f) if f.slope < 0.0 => (
            DecayStatus::Fitted,
            Some(DecayFit {
                rate: -f.slope,
                r2: f.r2,
                n_points: x.len(),
            }),
        ),
        _ => (DecayStatus::NonDecaying, None),
    }
}

fn fit_trial(cfg: &ExperimentConfig, rec: &TrialRecord, rows: &[B3Row], family: Family) -> B3TrialFit {
    let p = &cfg.params.b3;
    let model_index = rec.model_index.unwrap_or(0);
    let (t, n): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.alpha_point == 1)
        .map(|r| (r.t as f64, r.n_cumulative as f64))
        .unzip();
    let opts = FitOptions {
        window: (p.t_min as f64, p.t_max as f64),
        bootstrap_reps: p.bootstrap_reps,
        block: p.block,
        seed: seed::derive(cfg.seed, &[rec.env_index as u64, rec.trial as u64, model_index as u64, 7]),
    };
    let no_exceptions = !n.is_empty() && n.iter().all(|&v| v == 0.0);
    let fitted = if no_exceptions {
        // A flat zero count has no growth; fit the offset counts explicitly.
        let ones = vec![1.0; n.len()];
        fit_alpha(&t, &ones, opts).map(|f| AlphaFit {
            offset_applied: true,
            ..f
        })
    } else {
        fit_alpha(&t, &n, opts)
    };
    let (alpha, alpha_error) = match fitted {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let (in_band, excludes) = match (&alpha, family) {
        (Some(f), Family::Correlational) => (
            (CORRELATIONAL_ALPHA_BAND.0..=CORRELATIONAL_ALPHA_BAND.1).contains(&f.alpha),
            f.ci_low >= GENERATIVE_ALPHA_MAX,
        ),
        (Some(f), Family::Generative) => (f.alpha < GENERATIVE_ALPHA_MAX, f.ci_high < CORRELATIONAL_ALPHA_BAND.0),
        _ => (false, false),
    };
    let (decay_status, decay) = decay_fit(rows);
    let c_floor = rows
        .iter()
        .filter(|r| r.t >= p.t_min)
        .map(|r| r.c)
        .fold(f64::INFINITY, f64::min);
    B3TrialFit {
        env_index: rec.env_index,
        model_index,
        trial: rec.trial,
        no_exceptions,
        signature: alpha.as_ref().map(|f| classify(cfg, f)),
        alpha,
        alpha_error,
        in_band,
        ci_excludes_other_band: excludes,
        decay_status,
        decay,
        c_floor: if c_floor.is_finite() { c_floor } else { 0.0 },
    }
}

/// Recomputes the summary from per-trial tables.
pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord], tables: &[Vec<B3Row>]) -> Result<B3Summary> {
    summarize_with(cfg, records, tables, Execution::default())
}

fn summarize_with(cfg: &ExperimentConfig, records: &[TrialRecord], tables: &[Vec<B3Row>], exec: Execution) -> Result<B3Summary> {
    if records.len() != tables.len() {
        return Err(LabError::Parse("record and table counts differ".into()));
    }
    let th = &cfg.thresholds;
    let envs = cfg.effective_envs();
    let models = cfg.effective_models();
    let fits: Vec<B3TrialFit> = exec.map(records.len(), |i| {
        let fam = records[i].model_index.and_then(|m| models.get(m)).map_or(Family::Frozen, |m| m.family());
        fit_trial(cfg, &records[i], &tables[i], fam)
    });
    let mut families = Vec::new();
    for (e, env) in envs.iter().enumerate() {
        for (m, spec) in models.iter().enumerate() {
            let mine: Vec<&B3TrialFit> = fits.iter().filter(|f| f.env_index == e && f.model_index == m).collect();
            let alphas: Vec<f64> = mine.iter().filter_map(|f| f.alpha.map(|a| a.alpha)).collect();
            let r2s: Vec<f64> = mine.iter().filter_map(|f| f.decay.map(|d| d.r2)).collect();
            let mut signatures = BTreeMap::new();
            for f in &mine {
                let key = f.signature.map_or("unfitted", |s| s.name());
                *signatures.entry(key.to_string()).or_default() += 1;
            }
            families.push(B3FamilySummary {
                env_index: e,
                env: env.kind().name().into(),
                model_index: m,
                model: spec.label(),
                family: spec.family(),
                trials: mine.len(),
                alpha_median: (!alphas.is_empty()).then(|| median(&alphas)),
                no_exceptions: mine.iter().filter(|f| f.no_exceptions).count(),
                in_band: mine.iter().filter(|f| f.in_band).count(),
                ci_excludes_other_band: mine.iter().filter(|f| f.ci_excludes_other_band).count(),
                signatures,
                decay_fitted: r2s.len(),
                decay_deviating: r2s.iter().filter(|&&r| r < th.decay_r2_floor).count(),
                decay_holding: r2s.iter().filter(|&&r| r >= th.decay_r2_floor).count(),
                decay_r2_median: (!r2s.is_empty()).then(|| median(&r2s)),
                c_floor: mine.iter().map(|f| f.c_floor).fold(f64::INFINITY, f64::min).min(1.0),
            });
        }
    }
    let gen: Vec<&B3FamilySummary> = families.iter().filter(|f| f.family == Family::Generative).collect();
    let fitted: usize = gen.iter().map(|f| f.decay_fitted).sum();
    let deviating: usize = gen.iter().map(|f| f.decay_deviating).sum();
    let holding: usize = gen.iter().map(|f| f.decay_holding).sum();
    let verdict = if fitted == 0 {
        Verdict::Indeterminate
    } else if deviating as f64 >= th.decay_fraction * fitted as f64 {
        Verdict::Falsifies
    } else if holding as f64 >= th.decay_fraction * fitted as f64 {
        Verdict::Supports
    } else {
        Verdict::Indeterminate
    };
    Ok(B3Summary { fits, families, verdict })
}

#[derive(Serialize)]
struct LogLogRow<'a> {
    env: &'a str,
    model: &'a str,
    trial: usize,
    t: u64,
    log10_t: f64,
    n_cumulative: u64,
    log10_n_cumulative_plus_1: f64,
}

#[derive(Serialize)]
struct DecayRow<'a> {
    env: &'a str,
    model: &'a str,
    trial: usize,
    t: u64,
    c_cumulative: f64,
    n_residual: f64,
    ln_n_residual: Option<f64>,
}

pub(crate) fn plot_loglog(report: &ExperimentReport, tables: &[Vec<B3Row>]) -> Result<Vec<u8>> {
    let rows: Vec<LogLogRow> = report
        .per_trial
        .iter()
        .zip(tables)
        .flat_map(|(r, t)| {
            t.iter().filter(|row| row.alpha_point == 1).map(move |row| LogLogRow {
                env: &r.env,
                model: r.model.as_deref().unwrap_or(""),
                trial: r.trial,
                t: row.t,
                log10_t: (row.t as f64).log10(),
                n_cumulative: row.n_cumulative,
                log10_n_cumulative_plus_1: (row.n_cumulative as f64 + 1.0).log10(),
            })
        })
        .collect();
    to_csv(&rows)
}

pub(crate) fn plot_decay(report: &ExperimentReport, tables: &[Vec<B3Row>]) -> Result<Vec<u8>> {
    let rows: Vec<DecayRow> = report
        .per_trial
        .iter()
        .zip(tables)
        .flat_map(|(r, t)| {
            t.iter().filter(|row| row.epoch_point == 1).map(move |row| DecayRow {
                env: &r.env,
                model: r.model.as_deref().unwrap_or(""),
                trial: r.trial,
                t: row.t,
                c_cumulative: row.c_cumulative,
                n_residual: row.n_residual,
                ln_n_residual: (row.n_residual > 0.0).then(|| row.n_residual.ln()),
            })
        })
        .collect();
    to_csv(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: u64, n: f64, cc: f64) -> B3Row {
        B3Row {
            t,
            n_residual: n,
            n_cumulative: 0,
            c: 0.5,
            c_cumulative: cc,
            alpha_point: 0,
            epoch_point: 1,
        }
    }

    #[test]
    fn decay_fit_recovers_exponential_rate() {
        let rows: Vec<B3Row> = (1..=20).map(|i| row(i, 5.0 * (-0.03 * i as f64 * 10.0).exp(), i as f64 * 10.0)).collect();
        let (s, f) = decay_fit(&rows);
        assert_eq!(s, DecayStatus::Fitted);
        let f = f.unwrap();
        assert!((f.rate - 0.03).abs() < 1e-12 && f.r2 > 0.999999);
    }

    #[test]
    fn exhausted_and_flat_traces_are_flagged() {
        let zero: Vec<B3Row> = (1..=20).map(|i| row(i, if i > 3 { 0.0 } else { 1.0 }, i as f64)).collect();
        assert_eq!(decay_fit(&zero).0, DecayStatus::ZeroResidual);
        let flat: Vec<B3Row> = (1..=20).map(|i| row(i, 0.7, 0.0)).collect();
        assert_eq!(decay_fit(&flat).0, DecayStatus::NonDecaying);
    }

    #[test]
    fn checkpoint_roles() {
        let mut cfg = ExperimentConfig::new(super::super::Protocol::B3ExceptionDecay);
        cfg.params.b3.t_min = 10;
        cfg.params.b3.t_max = 1000;
        cfg.params.b3.alpha_points = 3;
        cfg.params.b3.epochs = 4;
        let c = checkpoints(&cfg);
        let ts: Vec<u64> = c.iter().map(|p| p.0).collect();
        assert_eq!(ts, vec![10, 100, 250, 500, 750, 1000]);
        assert_eq!(c[5], (1000, true, true));
        assert_eq!(c[1], (100, true, false));
    }
}
