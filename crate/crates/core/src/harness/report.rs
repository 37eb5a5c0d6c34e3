use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{ExperimentConfig, Protocol};
use super::{b2, b3, b4, b5};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Supports,
    Falsifies,
    Indeterminate,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Supports => "supports",
            Verdict::Falsifies => "falsifies",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One persisted per-trial table and what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub env_index: usize,
    pub env: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub seed: u64,
    /// Path relative to the output directory.
    pub file: String,
    /// Per-trial values that are not part of the table.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Summary {
    B2(b2::B2Summary),
    B3(b3::B3Summary),
    B4(b4::B4Summary),
    B5(b5::B5Summary),
}

impl Summary {
    pub fn verdict(&self) -> Verdict {
        match self {
            Summary::B2(s) => s.verdict,
            Summary::B3(s) => s.verdict,
            Summary::B4(s) => s.verdict,
            Summary::B5(s) => s.verdict,
        }
    }

    pub fn evidence(&self) -> String {
        match self {
            Summary::B2(s) => s.evidence(),
            Summary::B3(s) => s.evidence(),
            Summary::B4(s) => s.evidence(),
            Summary::B5(s) => s.evidence(),
        }
    }
}

/// One row of the falsification table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub criterion: u8,
    pub description: String,
    pub verdict: Verdict,
    /// Reports disagreeing with the majority verdict.
    pub dissent: usize,
    pub votes: BTreeMap<Verdict, usize>,
    pub evidence: Vec<String>,
}

pub fn criterion_description(criterion: u8) -> &'static str {
    match criterion {
        1 => "compression efficiency does not predict out-of-distribution generalization",
        2 => "exception mass does not decay as an efficiency-weighted exponential",
        3 => "per-layer efficiency shows no monotone increase with depth",
        4 => "energy per bit does not fall as the generative model learns",
        _ => "unknown criterion",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: Protocol,
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub per_trial: Vec<TrialRecord>,
    pub summary: Summary,
    pub falsification: CriterionRow,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig, per_trial: Vec<TrialRecord>, summary: Summary) -> Self {
        let mut row = single_row(config.protocol.criterion(), &summary);
        row.evidence = vec![format!("{}@{}", config.protocol, &config.hash()[..12])];
        ExperimentReport {
            protocol: config.protocol,
            config: config.clone(),
            provenance: Provenance {
                config_sha256: config.hash(),
                seed: config.seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            per_trial,
            summary,
            falsification: row,
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("report.json");
        let text = fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn single_row(criterion: u8, summary: &Summary) -> CriterionRow {
    let v = summary.verdict();
    CriterionRow {
        criterion,
        description: criterion_description(criterion).into(),
        verdict: v,
        dissent: 0,
        votes: BTreeMap::from([(v, 1)]),
        evidence: vec![summary.evidence()],
    }
}

/// Four-row verdict table. Several reports on one criterion are combined by
/// majority; ties are indeterminate. Criteria without a report are indeterminate.
pub fn falsification_summary(reports: &[ExperimentReport]) -> Vec<CriterionRow> {
    (1..=4u8)
        .map(|c| {
            let mine: Vec<&ExperimentReport> = reports.iter().filter(|r| r.protocol.criterion() == c).collect();
            let mut votes: BTreeMap<Verdict, usize> = BTreeMap::new();
            for r in &mine {
                *votes.entry(r.summary.verdict()).or_default() += 1;
            }
            let top = votes.values().copied().max().unwrap_or(0);
            let leaders: Vec<Verdict> = votes.iter().filter(|(_, &n)| n == top).map(|(v, _)| *v).collect();
            let verdict = if leaders.len() == 1 { leaders[0] } else { Verdict::Indeterminate };
            let agreeing = votes.get(&verdict).copied().unwrap_or(0);
            let evidence = if mine.is_empty() {
                vec!["no report".to_string()]
            } else {
                mine.iter()
                    .map(|r| format!("{}@{}: {}", r.protocol, &r.provenance.config_sha256[..12], r.summary.evidence()))
                    .collect()
            };
            CriterionRow {
                criterion: c,
                description: criterion_description(c).into(),
                verdict,
                dissent: mine.len() - agreeing,
                votes,
                evidence,
            }
        })
        .collect()
}

/// Report plus the per-trial CSV files it references.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ExperimentReport,
    /// `(path relative to the output directory, bytes)`.
    pub files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    /// Writes `report.json` and every per-trial file under `dir`.
    pub fn persist(&self, dir: &Path) -> Result<PathBuf> {
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
            }
            fs::write(&path, bytes).map_err(|e| LabError::io(&path, e))?;
        }
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        let path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(&self.report)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| LabError::io(&path, e))?;
        Ok(path)
    }
}

pub(crate) fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| LabError::Parse(e.to_string()))?;
    }
    w.into_inner().map_err(|e| LabError::Parse(e.to_string()))
}

pub(crate) fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => LabError::io(path, io),
        other => LabError::Parse(format!("{}: {other:?}", path.display())),
    })?;
    r.deserialize()
        .map(|row| row.map_err(|e| LabError::Parse(format!("{}: {e}", path.display()))))
        .collect()
}

/// Loads every per-trial table of a report.
pub(crate) fn load_tables<T: DeserializeOwned>(dir: &Path, report: &ExperimentReport) -> Result<Vec<Vec<T>>> {
    report.per_trial.iter().map(|r| read_csv(&dir.join(&r.file))).collect()
}

/// Outcome of recomputing a report's summary from its persisted tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub checked: usize,
    pub mismatches: Vec<String>,
}

impl VerifyOutcome {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub const VERIFY_TOLERANCE: f64 = 1e-9;

fn compare(path: &str, a: &Value, b: &Value, out: &mut VerifyOutcome) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            out.checked += 1;
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            if (x - y).abs() > VERIFY_TOLERANCE * x.abs().max(y.abs()).max(1.0) {
                out.mismatches.push(format!("{path}: stored {x}, recomputed {y}"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            for (k, v) in x {
                match y.get(k) {
                    Some(w) => compare(&format!("{path}.{k}"), v, w, out),
                    None => out.mismatches.push(format!("{path}.{k}: missing from recomputation")),
                }
            }
            for k in y.keys().filter(|k| !x.contains_key(*k)) {
                out.mismatches.push(format!("{path}.{k}: missing from stored report"));
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.mismatches.push(format!("{path}: length {} vs {}", x.len(), y.len()));
                return;
            }
            for (i, (v, w)) in x.iter().zip(y).enumerate() {
                compare(&format!("{path}[{i}]"), v, w, out);
            }
        }
        _ => {
            out.checked += 1;
            if a != b {
                out.mismatches.push(format!("{path}: stored {a}, recomputed {b}"));
            }
        }
    }
}

/// Reads `dir/report.json` and the per-trial tables it lists, recomputes the
/// summary and the verdict row, and lists every disagreement.
pub fn verify(dir: &Path) -> Result<VerifyOutcome> {
    let report = ExperimentReport::load(dir)?;
    let cfg = &report.config;
    let summary = match report.protocol {
        Protocol::B2EfficiencyGeneralization => Summary::B2(b2::summarize(cfg, &report.per_trial, &load_tables(dir, &report)?)?),
        Protocol::B3ExceptionDecay => Summary::B3(b3::summarize(cfg, &report.per_trial, &load_tables(dir, &report)?)?),
        Protocol::B4HierarchyGradient => Summary::B4(b4::summarize(cfg, &report.per_trial, &load_tables(dir, &report)?)?),
        Protocol::B5EnergyProxy => Summary::B5(b5::summarize(cfg, &report.per_trial, &load_tables(dir, &report)?)?),
    };
    let mut out = VerifyOutcome {
        checked: 0,
        mismatches: Vec::new(),
    };
    compare(
        "summary",
        &serde_json::to_value(&report.summary)?,
        &serde_json::to_value(&summary)?,
        &mut out,
    );
    let row = single_row(report.protocol.criterion(), &summary);
    compare(
        "falsification.verdict",
        &serde_json::to_value(report.falsification.verdict)?,
        &serde_json::to_value(row.verdict)?,
        &mut out,
    );
    out.checked += 1;
    if report.provenance.config_sha256 != cfg.hash() {
        out.mismatches.push("provenance.config_sha256 does not match the stored config".into());
    }
    Ok(out)
}

/// Long-format CSVs ready for plotting, one per report, written to `dir/plots`.
pub fn export_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let report = ExperimentReport::load(dir)?;
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| LabError::io(&plots, e))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = plots.join(name);
        fs::write(&path, bytes).map_err(|e| LabError::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    match report.protocol {
        Protocol::B2EfficiencyGeneralization => emit("b2_scatter.csv", b2::plot_rows(&report, &load_tables(dir, &report)?)?)?,
        Protocol::B3ExceptionDecay => {
            let tables = load_tables(dir, &report)?;
            emit("b3_loglog.csv", b3::plot_loglog(&report, &tables)?)?;
            emit("b3_decay.csv", b3::plot_decay(&report, &tables)?)?;
        }
        Protocol::B4HierarchyGradient => emit("b4_layers.csv", b4::plot_rows(&report, &load_tables(dir, &report)?)?)?,
        Protocol::B5EnergyProxy => emit("b5_xi.csv", b5::plot_rows(&report, &load_tables(dir, &report)?)?)?,
    }
    Ok(written)
}

/// File name for a per-trial table.
pub(crate) fn trial_file(protocol: Protocol, env: &str, env_index: usize, model: Option<&str>, trial: usize) -> String {
    match model {
        Some(m) => format!("per_trial/{}_e{env_index}_{env}_{m}_t{trial:03}.csv", protocol.short()),
        None => format!("per_trial/{}_e{env_index}_{env}_t{trial:03}.csv", protocol.short()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compare_flags_differences() {
        let a = serde_json::json!({"x": 1.0, "y": [1, 2], "z": "s"});
        let b = serde_json::json!({"x": 1.0 + 1e-12, "y": [1, 3], "z": "s"});
        let mut out = VerifyOutcome { checked: 0, mismatches: vec![] };
        compare("r", &a, &b, &mut out);
        assert_eq!(out.checked, 4);
        assert_eq!(out.mismatches.len(), 1);
        assert!(out.mismatches[0].starts_with("r.y[1]"));
    }
}
