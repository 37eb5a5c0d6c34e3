//! Seeded synthetic environments with exact ground truth.

mod hier;
mod markov;
mod rule;
mod stream;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use hier::{gen_hierarchical, gen_hierarchical_levels, Hierarchical, Noise, MAX_OBSERVED_ALPHABET};
pub use markov::{gen_markov, lag_correlation, stationary, Confounder, MarkovConfounded, MarkovPlain};
pub use rule::{gen_rule_exception, RuleException};
pub use stream::{GroundTruth, SymbolStream};

use crate::error::{LabError, Result};
use crate::info::JointTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    RuleException,
    MarkovPlain,
    MarkovConfounded,
    Hierarchical,
}

impl EnvKind {
    pub const ALL: [EnvKind; 4] = [
        EnvKind::RuleException,
        EnvKind::MarkovPlain,
        EnvKind::MarkovConfounded,
        EnvKind::Hierarchical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::RuleException => "rule_exception",
            EnvKind::MarkovPlain => "markov_plain",
            EnvKind::MarkovConfounded => "markov_confounded",
            EnvKind::Hierarchical => "hierarchical",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown environment kind {s:?}")))
    }
}

/// Typed parameters for each environment kind.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvParams {
    RuleException(RuleException),
    MarkovPlain(MarkovPlain),
    MarkovConfounded(MarkovConfounded),
    Hierarchical(Hierarchical),
}

impl EnvParams {
    pub fn kind(&self) -> EnvKind {
        match self {
            EnvParams::RuleException(_) => EnvKind::RuleException,
            EnvParams::MarkovPlain(_) => EnvKind::MarkovPlain,
            EnvParams::MarkovConfounded(_) => EnvKind::MarkovConfounded,
            EnvParams::Hierarchical(_) => EnvKind::Hierarchical,
        }
    }

    pub fn defaults(kind: EnvKind) -> Self {
        match kind {
            EnvKind::RuleException => EnvParams::RuleException(RuleException::default()),
            EnvKind::MarkovPlain => EnvParams::MarkovPlain(MarkovPlain::default()),
            EnvKind::MarkovConfounded => EnvParams::MarkovConfounded(MarkovConfounded::default()),
            EnvKind::Hierarchical => EnvParams::Hierarchical(Hierarchical::default()),
        }
    }

    fn to_map(&self) -> Map<String, Value> {
        let v = match self {
            EnvParams::RuleException(p) => serde_json::to_value(p),
            EnvParams::MarkovPlain(p) => serde_json::to_value(p),
            EnvParams::MarkovConfounded(p) => serde_json::to_value(p),
            EnvParams::Hierarchical(p) => serde_json::to_value(p),
        }
        .expect("params serialise");
        match v {
            Value::Object(mut m) => {
                m.retain(|_, v| !v.is_null());
                m
            }
            _ => unreachable!("params are structs"),
        }
    }

    fn from_map(kind: EnvKind, m: &Map<String, Value>) -> Result<Self> {
        let v = Value::Object(m.clone());
        let err = |e: serde_json::Error| LabError::Config(format!("{kind} params: {e}"));
        let p = match kind {
            EnvKind::RuleException => EnvParams::RuleException(serde_json::from_value(v).map_err(err)?),
            EnvKind::MarkovPlain => EnvParams::MarkovPlain(serde_json::from_value(v).map_err(err)?),
            EnvKind::MarkovConfounded => EnvParams::MarkovConfounded(serde_json::from_value(v).map_err(err)?),
            EnvKind::Hierarchical => EnvParams::Hierarchical(serde_json::from_value(v).map_err(err)?),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvParams::RuleException(p) => p.validate(),
            EnvParams::MarkovPlain(p) => p.validate(),
            EnvParams::MarkovConfounded(p) => p.validate(),
            EnvParams::Hierarchical(p) => p.validate(),
        }
    }

    pub fn length(&self) -> usize {
        match self {
            EnvParams::RuleException(p) => p.length,
            EnvParams::MarkovPlain(p) => p.length,
            EnvParams::MarkovConfounded(p) => p.length,
            EnvParams::Hierarchical(p) => p.length,
        }
    }

    pub fn set_length(&mut self, length: usize) {
        match self {
            EnvParams::RuleException(p) => p.length = length,
            EnvParams::MarkovPlain(p) => p.length = length,
            EnvParams::MarkovConfounded(p) => p.length = length,
            EnvParams::Hierarchical(p) => p.length = length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpecWire {
    kind: EnvKind,
    #[serde(default)]
    params: Map<String, Value>,
    #[serde(default)]
    seed: u64,
}

/// Environment kind, parameters and seed; JSON form
/// `{"kind": ..., "params": {...}, "seed": ...}`. Omitted parameters take
/// their defaults; unknown parameters are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecWire", into = "SpecWire")]
pub struct EnvSpec {
    pub params: EnvParams,
    pub seed: u64,
}

impl TryFrom<SpecWire> for EnvSpec {
    type Error = LabError;

    fn try_from(w: SpecWire) -> Result<Self> {
        Ok(EnvSpec {
            params: EnvParams::from_map(w.kind, &w.params)?,
            seed: w.seed,
        })
    }
}

impl From<EnvSpec> for SpecWire {
    fn from(s: EnvSpec) -> Self {
        SpecWire {
            kind: s.params.kind(),
            params: s.params.to_map(),
            seed: s.seed,
        }
    }
}

impl EnvSpec {
    pub fn new(params: EnvParams, seed: u64) -> Self {
        EnvSpec { params, seed }
    }

    pub fn default_for(kind: EnvKind, seed: u64) -> Self {
        EnvSpec::new(EnvParams::defaults(kind), seed)
    }

    pub fn kind(&self) -> EnvKind {
        self.params.kind()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        EnvSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn with_length(&self, length: usize) -> Self {
        let mut s = self.clone();
        s.params.set_length(length);
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()
    }

    /// Samples the stream; identical specs give identical streams.
    pub fn generate(&self) -> Result<SymbolStream> {
        match &self.params {
            EnvParams::RuleException(p) => p.generate(self.seed),
            EnvParams::MarkovPlain(p) => p.generate(self.seed),
            EnvParams::MarkovConfounded(p) => p.generate(self.seed),
            EnvParams::Hierarchical(p) => p.generate(self.seed).map(|(s, _)| s),
        }
    }

    /// Exact `p(x, y)` for hierarchical sources; `p(context, symbol)` for the rest.
    pub fn exact_joint(&self) -> Result<JointTable> {
        match &self.params {
            EnvParams::Hierarchical(p) => p.joint(),
            _ => Ok(self
                .with_length(1)
                .generate()?
                .truth
                .expect("generated streams carry ground truth")
                .observed_joint),
        }
    }

    /// Covariate-shifted variant: the most and least frequent contexts trade
    /// frequencies. Hierarchical sources are returned unchanged.
    pub fn shifted(&self) -> Result<EnvSpec> {
        let params = match &self.params {
            EnvParams::RuleException(p) => EnvParams::RuleException(p.shifted()),
            EnvParams::MarkovPlain(p) => EnvParams::MarkovPlain(p.shifted()?),
            EnvParams::MarkovConfounded(p) => EnvParams::MarkovConfounded(p.shifted()),
            EnvParams::Hierarchical(p) => EnvParams::Hierarchical(p.clone()),
        };
        Ok(EnvSpec { params, seed: self.seed })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }
}
