use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvKind, EnvSpec};
use crate::error::{LabError, Result};
use crate::hierarchy::default_layer_betas;
use crate::models::{ContextSource, ExceptionRule, Family, ModelSpec, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    B2EfficiencyGeneralization,
    B3ExceptionDecay,
    B4HierarchyGradient,
    B5EnergyProxy,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::B2EfficiencyGeneralization,
        Protocol::B3ExceptionDecay,
        Protocol::B4HierarchyGradient,
        Protocol::B5EnergyProxy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::B2EfficiencyGeneralization => "b2_efficiency_generalization",
            Protocol::B3ExceptionDecay => "b3_exception_decay",
            Protocol::B4HierarchyGradient => "b4_hierarchy_gradient",
            Protocol::B5EnergyProxy => "b5_energy_proxy",
        }
    }

    pub fn short(self) -> &'static str {
        &self.name()[..2]
    }

    /// Falsification criterion (1 to 4) this protocol adjudicates.
    pub fn criterion(self) -> u8 {
        match self {
            Protocol::B2EfficiencyGeneralization => 1,
            Protocol::B3ExceptionDecay => 2,
            Protocol::B4HierarchyGradient => 3,
            Protocol::B5EnergyProxy => 4,
        }
    }

    pub fn allows(self, kind: EnvKind) -> bool {
        match self {
            Protocol::B2EfficiencyGeneralization | Protocol::B3ExceptionDecay => kind != EnvKind::Hierarchical,
            Protocol::B4HierarchyGradient => kind == EnvKind::Hierarchical,
            Protocol::B5EnergyProxy => true,
        }
    }

    pub fn default_envs(self) -> Vec<EnvSpec> {
        let kinds: &[EnvKind] = match self {
            Protocol::B2EfficiencyGeneralization | Protocol::B3ExceptionDecay => {
                &[EnvKind::RuleException, EnvKind::MarkovConfounded]
            }
            Protocol::B4HierarchyGradient => &[EnvKind::Hierarchical],
            Protocol::B5EnergyProxy => &[EnvKind::MarkovPlain],
        };
        kinds.iter().map(|&k| EnvSpec::default_for(k, 0)).collect()
    }

    pub fn default_families(self) -> Vec<Family> {
        match self {
            Protocol::B5EnergyProxy => vec![Family::Generative, Family::Correlational],
            _ => vec![Family::Correlational, Family::Generative],
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s || p.short() == s)
            .ok_or_else(|| LabError::Config(format!("unknown protocol `{s}`; expected b2, b3, b4 or b5")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    /// Most and least frequent contexts trade frequencies.
    ContextReweight,
    /// Test symbols are replaced by uniform draws.
    LabelNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct B2Params {
    pub train_length: usize,
    pub test_length: usize,
    pub permutations: usize,
    pub shift: ShiftKind,
}

impl Default for B2Params {
    fn default() -> Self {
        B2Params {
            train_length: 10_000,
            test_length: 5_000,
            permutations: 9_999,
            shift: ShiftKind::ContextReweight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct B3Params {
    pub t_min: u64,
    pub t_max: u64,
    /// Log-spaced checkpoints used for the growth-exponent fit.
    pub alpha_points: usize,
    /// Equally spaced checkpoints used for the decay fit.
    pub epochs: usize,
    pub bootstrap_reps: usize,
    pub block: usize,
}

impl Default for B3Params {
    fn default() -> Self {
        B3Params {
            t_min: 100,
            t_max: 100_000,
            alpha_points: 61,
            epochs: 100,
            bootstrap_reps: 1000,
            block: crate::dynamics::DEFAULT_BLOCK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct B4Params {
    pub layer_sizes: Vec<usize>,
    /// Defaults to `10 / 2^l` per layer.
    pub betas: Option<Vec<f64>>,
    pub restarts: usize,
}

impl Default for B4Params {
    fn default() -> Self {
        B4Params {
            layer_sizes: vec![8, 4, 2],
            betas: None,
            restarts: crate::ib::DEFAULT_RESTARTS,
        }
    }
}

impl B4Params {
    pub fn effective_betas(&self) -> Vec<f64> {
        self.betas.clone().unwrap_or_else(|| default_layer_betas(self.layer_sizes.len()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct B5Params {
    pub length: usize,
    pub checkpoint_every: usize,
    pub burn_in: usize,
}

impl Default for B5Params {
    fn default() -> Self {
        B5Params {
            length: 20_000,
            checkpoint_every: 500,
            burn_in: 2_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolParams {
    pub b2: B2Params,
    pub b3: B3Params,
    pub b4: B4Params,
    pub b5: B5Params,
}

/// Verdict policy. Every number here is a tunable default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub rho_supports: f64,
    pub rho_falsifies: f64,
    pub p_value: f64,
    pub decay_r2_floor: f64,
    /// Share of generative trials whose decay fit must deviate (falsify) or hold (support).
    pub decay_fraction: f64,
    pub signature_causal_ci_high: f64,
    pub signature_correlational_ci_low: f64,
    pub gradient_supports: f64,
    /// Falsifies when the share of non-increasing trials exceeds this.
    pub gradient_falsifies: f64,
    pub xi_supports: f64,
    pub xi_falsifies: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            rho_supports: -0.5,
            rho_falsifies: 0.3,
            p_value: 0.05,
            decay_r2_floor: 0.5,
            decay_fraction: 0.8,
            signature_causal_ci_high: crate::dynamics::CAUSAL_CI_HIGH,
            signature_correlational_ci_low: crate::dynamics::CORRELATIONAL_CI_LOW,
            gradient_supports: 0.9,
            gradient_falsifies: 0.5,
            xi_supports: 0.8,
            xi_falsifies: 0.5,
        }
    }
}

fn default_trials() -> usize {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// One protocol run. JSON fields other than `protocol` are optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub envs: Vec<EnvSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_families: Option<Vec<Family>>,
    /// Explicit model settings; replaces the protocol's default family.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<ModelSpec>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub params: ProtocolParams,
}

impl ExperimentConfig {
    pub fn new(protocol: Protocol) -> Self {
        ExperimentConfig {
            protocol,
            env: None,
            envs: Vec::new(),
            model_families: None,
            models: Vec::new(),
            trials: default_trials(),
            seed: 0,
            output_dir: default_output(),
            thresholds: Thresholds::default(),
            params: ProtocolParams::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>, trials: Option<usize>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.output_dir = o;
        }
        if let Some(t) = trials {
            self.trials = t;
        }
        self
    }

    /// Environments the run covers, in order.
    pub fn effective_envs(&self) -> Vec<EnvSpec> {
        if let Some(e) = &self.env {
            vec![e.clone()]
        } else if !self.envs.is_empty() {
            self.envs.clone()
        } else {
            self.protocol.default_envs()
        }
    }

    pub fn effective_families(&self) -> Vec<Family> {
        self.model_families.clone().unwrap_or_else(|| self.protocol.default_families())
    }

    /// Model settings for protocols that compare individual settings.
    pub fn effective_models(&self) -> Vec<ModelSpec> {
        if !self.models.is_empty() {
            return self.models.clone();
        }
        match self.protocol {
            Protocol::B2EfficiencyGeneralization => {
                let fams = self.effective_families();
                b2_default_settings().into_iter().filter(|m| fams.contains(&m.family())).collect()
            }
            _ => self.effective_families().into_iter().map(ModelSpec::default_for).collect(),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(LabError::Config(m));
        if self.trials == 0 {
            return cfg("trials must be at least 1".into());
        }
        if self.env.is_some() && !self.envs.is_empty() {
            return cfg("give either `env` or `envs`, not both".into());
        }
        for e in self.effective_envs() {
            e.validate()?;
            if !self.protocol.allows(e.kind()) {
                return cfg(format!("protocol {} does not accept environment {}", self.protocol, e.kind()));
            }
        }
        for m in self.effective_models() {
            m.validate()?;
        }
        if self.effective_families().is_empty() {
            return cfg("model_families is empty".into());
        }
        let p = &self.params;
        match self.protocol {
            Protocol::B2EfficiencyGeneralization => {
                if p.b2.train_length == 0 || p.b2.test_length == 0 {
                    return cfg("b2 train and test lengths must be positive".into());
                }
            }
            Protocol::B3ExceptionDecay => {
                let b = &p.b3;
                if b.t_min < 1 || b.t_max <= b.t_min {
                    return cfg(format!("b3 needs 1 <= t_min < t_max, got {} and {}", b.t_min, b.t_max));
                }
                if b.alpha_points < 2 || b.epochs < 2 {
                    return cfg("b3 needs at least two alpha points and two epochs".into());
                }
            }
            Protocol::B4HierarchyGradient => {
                let b = &p.b4;
                if b.layer_sizes.is_empty() || b.layer_sizes.contains(&0) {
                    return cfg("b4 layer_sizes must be nonempty and positive".into());
                }
                if b.layer_sizes.windows(2).any(|w| w[1] > w[0]) {
                    return cfg("b4 layer_sizes must be nonincreasing".into());
                }
                let betas = b.effective_betas();
                if betas.len() != b.layer_sizes.len() {
                    return cfg("b4 betas must match layer_sizes in length".into());
                }
                if betas.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return cfg("b4 betas must be finite and nonnegative".into());
                }
                if b.restarts == 0 {
                    return cfg("b4 restarts must be at least 1".into());
                }
            }
            Protocol::B5EnergyProxy => {
                let b = &p.b5;
                if b.checkpoint_every == 0 || b.length < 2 * b.checkpoint_every {
                    return cfg("b5 needs checkpoint_every >= 1 and at least two checkpoints".into());
                }
            }
        }
        Ok(())
    }
}

/// Eight settings spanning the correlational allowance and generative
/// smoothing and partition choices.
pub fn b2_default_settings() -> Vec<ModelSpec> {
    let mut out: Vec<ModelSpec> = [4, 7, 10, 13]
        .into_iter()
        .map(|k| ModelSpec::Correlational {
            allowance: 2f64.powi(-k),
            rule: ExceptionRule::default(),
        })
        .collect();
    for (prior, partition) in [
        (0.5, Partition::Select),
        (0.5, Partition::Pooled),
        (8.0, Partition::PerContext),
        (0.05, Partition::PerContext),
    ] {
        out.push(ModelSpec::Generative {
            prior,
            partition,
            context: ContextSource::Parent,
            rule: ExceptionRule::default(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_takes_defaults() {
        let c = ExperimentConfig::from_json(r#"{"protocol":"b3_exception_decay"}"#).unwrap();
        assert_eq!(c.trials, 10);
        assert_eq!(c.effective_envs().len(), 2);
        c.validate().unwrap();
        assert!(ExperimentConfig::from_json(r#"{"protocol":"b3_exception_decay","bogus":1}"#).is_err());
    }

    #[test]
    fn overrides_and_hash() {
        let c = ExperimentConfig::new(Protocol::B4HierarchyGradient);
        let d = c.clone().with_overrides(Some(5), None, Some(3));
        assert_eq!((d.seed, d.trials), (5, 3));
        assert_ne!(c.hash(), d.hash());
        assert_eq!(c.hash(), c.clone().hash());
    }

    #[test]
    fn incompatible_env_is_config_error() {
        let mut c = ExperimentConfig::new(Protocol::B4HierarchyGradient);
        c.env = Some(EnvSpec::default_for(EnvKind::RuleException, 0));
        assert!(matches!(c.validate(), Err(LabError::Config(_))));
        let mut c = ExperimentConfig::new(Protocol::B3ExceptionDecay);
        c.trials = 0;
        assert!(matches!(c.validate(), Err(LabError::Config(_))));
    }

    #[test]
    fn protocol_names() {
        assert_eq!("b2".parse::<Protocol>().unwrap(), Protocol::B2EfficiencyGeneralization);
        assert_eq!("b5_energy_proxy".parse::<Protocol>().unwrap(), Protocol::B5EnergyProxy);
        assert!("b9".parse::<Protocol>().is_err());
        assert_eq!(b2_default_settings().len(), 8);
    }
}
