//! Online learners with explicit two-part code accounting.

mod correlational;
mod generative;
mod ledger;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use correlational::{CorrelationalModel, DEFAULT_ALLOWANCE};
pub use generative::{GenerativeModel, Partition, DEFAULT_PRIOR};
pub use ledger::{ExceptionDetector, ExceptionRule, LedgerRow, ModelLedger, OpCounter};

use crate::env::SymbolStream;
use crate::error::{LabError, Result};
use crate::ib::epsilon_ib;
use crate::info::{kl_divergence, Channel, JointTable, DEFAULT_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Correlational,
    Generative,
    /// Fixed predictor that never learns; a reference point.
    Frozen,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Correlational => "correlational",
            Family::Generative => "generative",
            Family::Frozen => "frozen",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlational" => Ok(Family::Correlational),
            "generative" => Ok(Family::Generative),
            "frozen" => Ok(Family::Frozen),
            other => Err(LabError::Config(format!("unknown model family {other:?}"))),
        }
    }
}

/// Outcome of one online update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index after the update.
    pub t: u64,
    /// `-log2 p(observation | context)` before the update, bits.
    pub surprise: f64,
    /// Surprise the update removed on this very observation, bits; this is
    /// what the exception rule thresholds.
    pub residual: f64,
    pub exception: bool,
}

#[inline]
pub(crate) fn surprise_bits(p: f64) -> f64 {
    -p.max(DEFAULT_FLOOR).log2()
}

/// An online next-symbol predictor indexed by context.
pub trait PredictiveModel: Send + Sync {
    fn family(&self) -> Family;
    fn alphabet(&self) -> usize;
    fn contexts(&self) -> usize;
    /// Predictive distribution for `context`.
    fn predict(&self, context: usize) -> Vec<f64>;
    fn update(&mut self, observation: usize, context: usize) -> StepRecord;
    fn ledger(&self) -> &ModelLedger;
    fn ledger_mut(&mut self) -> &mut ModelLedger;
    fn ops(&self) -> &OpCounter;

    /// Surprise of `observation` without learning from it.
    fn surprise(&self, observation: usize, context: usize) -> f64 {
        surprise_bits(self.predict(context)[observation])
    }

    /// All context rows as a channel.
    fn predictor(&self) -> Channel {
        Channel::new((0..self.contexts()).map(|c| self.predict(c)).collect()).expect("model rows are distributions")
    }
}

/// Predictor that never updates its distribution.
#[derive(Debug, Clone)]
pub struct FrozenModel {
    predictor: Channel,
    ledger: ModelLedger,
    ops: OpCounter,
}

impl FrozenModel {
    pub fn new(predictor: Channel) -> Self {
        let k = predictor.n_out();
        FrozenModel {
            predictor,
            ledger: ModelLedger::new(k, 0.0),
            ops: OpCounter::default(),
        }
    }

    pub fn uniform(alphabet: usize, contexts: usize) -> Self {
        FrozenModel::new(Channel::uniform(contexts, alphabet))
    }
}

impl PredictiveModel for FrozenModel {
    fn family(&self) -> Family {
        Family::Frozen
    }

    fn alphabet(&self) -> usize {
        self.predictor.n_out()
    }

    fn contexts(&self) -> usize {
        self.predictor.n_in()
    }

    fn predict(&self, context: usize) -> Vec<f64> {
        self.predictor.row(context).to_vec()
    }

    fn update(&mut self, observation: usize, context: usize) -> StepRecord {
        self.ops.add(2);
        let surprise = surprise_bits(self.predictor.get(context, observation));
        self.ledger.step(surprise, false, 0.0);
        StepRecord {
            t: self.ledger.t,
            surprise,
            residual: 0.0,
            exception: false,
        }
    }

    fn ledger(&self) -> &ModelLedger {
        &self.ledger
    }

    fn ledger_mut(&mut self) -> &mut ModelLedger {
        &mut self.ledger
    }

    fn ops(&self) -> &OpCounter {
        &self.ops
    }

    fn predictor(&self) -> Channel {
        self.predictor.clone()
    }
}

/// Which stream variable a model conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    /// The stream's observable context.
    Stream,
    /// The ground-truth causal parent (the hidden state of a confounded
    /// chain; the observable context elsewhere).
    Parent,
}

fn default_allowance() -> f64 {
    DEFAULT_ALLOWANCE
}

fn default_prior() -> f64 {
    DEFAULT_PRIOR
}

fn default_partition() -> Partition {
    Partition::Select
}

fn default_parent() -> ContextSource {
    ContextSource::Parent
}

/// Serializable model description, tagged by `family`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Correlational {
        #[serde(default = "default_allowance")]
        allowance: f64,
        #[serde(default)]
        rule: ExceptionRule,
    },
    Generative {
        #[serde(default = "default_prior")]
        prior: f64,
        #[serde(default = "default_partition")]
        partition: Partition,
        #[serde(default = "default_parent")]
        context: ContextSource,
        #[serde(default)]
        rule: ExceptionRule,
    },
    /// Uniform predictor over the stream's contexts.
    Frozen,
}

impl ModelSpec {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Correlational => ModelSpec::Correlational {
                allowance: DEFAULT_ALLOWANCE,
                rule: ExceptionRule::default(),
            },
            Family::Generative => ModelSpec::Generative {
                prior: DEFAULT_PRIOR,
                partition: Partition::Select,
                context: ContextSource::Parent,
                rule: ExceptionRule::default(),
            },
            Family::Frozen => ModelSpec::Frozen,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ModelSpec::Correlational { .. } => Family::Correlational,
            ModelSpec::Generative { .. } => Family::Generative,
            ModelSpec::Frozen => Family::Frozen,
        }
    }

    pub fn context_source(&self) -> ContextSource {
        match self {
            ModelSpec::Generative { context, .. } => *context,
            _ => ContextSource::Stream,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rule_ok = |r: &ExceptionRule| r.multiplier >= 0.0 && r.floor_bits >= 0.0;
        match self {
            ModelSpec::Correlational { allowance, rule } => {
                if !(*allowance > 0.0 && *allowance < 1.0) {
                    return Err(LabError::Config(format!("allowance {allowance} not in (0, 1)")));
                }
                if !rule_ok(rule) {
                    return Err(LabError::Config("exception rule must be nonnegative".into()));
                }
            }
            ModelSpec::Generative { prior, rule, .. } => {
                if !(*prior > 0.0) || !prior.is_finite() {
                    return Err(LabError::Config(format!("prior {prior} must be positive")));
                }
                if !rule_ok(rule) {
                    return Err(LabError::Config("exception rule must be nonnegative".into()));
                }
            }
            ModelSpec::Frozen => {}
        }
        Ok(())
    }

    /// Number of context values this model sees on `stream`.
    pub fn context_count(&self, stream: &SymbolStream) -> usize {
        match self.context_source() {
            ContextSource::Stream => stream.context_count.max(1),
            ContextSource::Parent => stream.parent_count(),
        }
    }

    /// Context this model uses at step `i` of `stream`.
    pub fn context_at(&self, stream: &SymbolStream, i: usize) -> usize {
        match self.context_source() {
            ContextSource::Stream => stream.context(i),
            ContextSource::Parent => stream.parent(i),
        }
    }

    pub fn build(&self, alphabet: usize, contexts: usize) -> Box<dyn PredictiveModel> {
        match self {
            ModelSpec::Correlational { allowance, rule } => {
                Box::new(CorrelationalModel::new(alphabet, contexts, *allowance, *rule))
            }
            ModelSpec::Generative {
                prior, partition, rule, ..
            } => Box::new(GenerativeModel::new(alphabet, contexts, *prior, *partition, *rule)),
            ModelSpec::Frozen => Box::new(FrozenModel::uniform(alphabet, contexts)),
        }
    }

    /// Builds a model sized for `stream`.
    pub fn build_for(&self, stream: &SymbolStream) -> Box<dyn PredictiveModel> {
        self.build(stream.alphabet, self.context_count(stream))
    }

    /// Short label for file names and tables.
    pub fn label(&self) -> String {
        match self {
            ModelSpec::Correlational { allowance, .. } => format!("correlational_eps{:.3e}", allowance),
            ModelSpec::Generative {
                prior,
                partition,
                context,
                ..
            } => {
                let p = match partition {
                    Partition::PerContext => "per_context",
                    Partition::Pooled => "pooled",
                    Partition::Select => "select",
                };
                let c = match context {
                    ContextSource::Stream => "stream",
                    ContextSource::Parent => "parent",
                };
                format!("generative_a{prior}_{p}_{c}")
            }
            ModelSpec::Frozen => "frozen".into(),
        }
    }
}

/// Feeds steps `range` of `stream` to `model`, calling `on_step` after each.
pub fn feed(
    model: &mut dyn PredictiveModel,
    spec: &ModelSpec,
    stream: &SymbolStream,
    range: std::ops::Range<usize>,
    mut on_step: impl FnMut(usize, &StepRecord, &dyn PredictiveModel),
) {
    for i in range {
        let ctx = spec.context_at(stream, i);
        let rec = model.update(stream.symbols[i], ctx);
        on_step(i, &rec, model);
    }
}

/// True conditional and context frequencies matching a model's context source.
pub fn truth_for(spec: &ModelSpec, stream: &SymbolStream) -> Result<(Channel, Vec<f64>)> {
    let truth = stream
        .truth
        .as_ref()
        .ok_or_else(|| LabError::usage("stream carries no ground truth"))?;
    Ok(match spec.context_source() {
        ContextSource::Parent => (truth.emission.clone(), truth.parent_freq.clone()),
        ContextSource::Stream => (truth.observed_conditional(), truth.observed_context_freq()),
    })
}

/// Residual information mass `sum_c p(c) KL(p_true(.|c) || p_model(.|c))`,
/// bits. Model zeros are floored so the mass stays finite.
pub fn information_mass(model: &dyn PredictiveModel, truth: &Channel, freq: &[f64]) -> f64 {
    let mut m = 0.0;
    for (c, &w) in freq.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let q: Vec<f64> = model.predict(c).into_iter().map(|v| v.max(DEFAULT_FLOOR)).collect();
        m += w * kl_divergence(truth.row(c), &q);
    }
    m
}

/// Predictive information the model has captured about the next symbol,
/// `sum_c p(c) sum_x p(x|c) log2(q(x|c) / p(x))` in bits: the true `I(C;X)`
/// minus [`information_mass`]. Negative while the model predicts worse than the
/// true marginal.
pub fn captured_information(model: &dyn PredictiveModel, truth: &Channel, freq: &[f64]) -> f64 {
    let k = truth.n_out();
    let mut px = vec![0.0; k];
    for (c, &w) in freq.iter().enumerate() {
        for (x, v) in truth.row(c).iter().enumerate() {
            px[x] += w * v;
        }
    }
    let mut bits = 0.0;
    for (c, &w) in freq.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let q = model.predict(c);
        for (x, &p) in truth.row(c).iter().enumerate() {
            if p > 0.0 {
                bits += w * p * (q[x].max(DEFAULT_FLOOR) / px[x]).log2();
            }
        }
    }
    bits
}

/// Orientation of the efficiency functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencyMode {
    /// `1 - (residual bits per step) / log2 K`, clamped to `[0, 1]`.
    ExplainedRatio,
    /// `L(M) / L(X|M)`; infinite while no residual has accrued.
    MdlRatio,
    /// `epsilon_ib` of the predictor read as an encoder of the context.
    IbOfPredictor,
}

/// Efficiency `C(M_t)` of a model from its ledger. `ib_of_predictor` needs the
/// predictor and the exact `p(context, symbol)`.
pub fn efficiency_functional(
    ledger: &ModelLedger,
    mode: EfficiencyMode,
    predictor_and_joint: Option<(&Channel, &JointTable)>,
) -> Result<f64> {
    if ledger.t == 0 {
        return Err(LabError::usage("ledger has no steps"));
    }
    match mode {
        EfficiencyMode::ExplainedRatio => Ok(ledger.explained_ratio()),
        EfficiencyMode::MdlRatio => Ok(if ledger.l_residual > 0.0 {
            ledger.l_model / ledger.l_residual
        } else {
            f64::INFINITY
        }),
        EfficiencyMode::IbOfPredictor => {
            let (pred, joint) =
                predictor_and_joint.ok_or_else(|| LabError::usage("ib_of_predictor needs the exact joint table"))?;
            epsilon_ib(pred, joint)
        }
    }
}

#[cfg(test)]
mod tests;
