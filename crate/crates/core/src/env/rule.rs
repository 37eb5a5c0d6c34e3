use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stream::{GroundTruth, SymbolStream};
use crate::error::{LabError, Result};
use crate::info::{Channel, JointTable};
use crate::seed;

/// Base-rule stream with context-modulated exceptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleException {
    pub alphabet: usize,
    pub base_symbol: usize,
    /// Global exception probability.
    pub exception_rate: f64,
    pub context_count: usize,
    /// Spread of the per-context odds multipliers, in `[0, 1]`: context `c`
    /// scales the exception odds by `1 + shift * (2c / (C - 1) - 1)`.
    pub context_shift: f64,
    /// Context `c` appears with weight `1 + skew * c` in the cycle.
    pub context_skew: f64,
    /// Explicit context weights; overrides `context_skew`.
    pub context_weights: Option<Vec<f64>>,
    pub length: usize,
}

impl Default for RuleException {
    fn default() -> Self {
        RuleException {
            alphabet: 2,
            base_symbol: 0,
            exception_rate: 0.05,
            context_count: 2,
            context_shift: 0.5,
            context_skew: 1.0,
            context_weights: None,
            length: 10_000,
        }
    }
}

/// Smooth weighted round-robin: deterministic, and every prefix tracks the
/// weights as closely as integer counts allow.
pub(crate) fn weighted_cycle(weights: &[f64], length: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut credit = vec![0.0; weights.len()];
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        let mut pick = 0;
        for (i, w) in weights.iter().enumerate() {
            credit[i] += w;
            if credit[i] > credit[pick] {
                pick = i;
            }
        }
        credit[pick] -= total;
        out.push(pick);
    }
    out
}

impl RuleException {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.alphabet < 2 {
            return bad(format!("alphabet must be at least 2, got {}", self.alphabet));
        }
        if self.base_symbol >= self.alphabet {
            return bad(format!("base_symbol {} outside alphabet {}", self.base_symbol, self.alphabet));
        }
        for (name, v) in [("exception_rate", self.exception_rate), ("context_shift", self.context_shift)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} not in [0, 1]"));
            }
        }
        if self.context_count == 0 {
            return bad("context_count must be at least 1".into());
        }
        if !(self.context_skew >= 0.0) {
            return bad(format!("context_skew = {} must be nonnegative", self.context_skew));
        }
        if let Some(w) = &self.context_weights {
            if w.len() != self.context_count || w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return bad("context_weights must hold one positive weight per context".into());
            }
        }
        if self.length == 0 {
            return bad("length must be at least 1".into());
        }
        Ok(())
    }

    /// Normalised context frequencies.
    pub fn context_freq(&self) -> Vec<f64> {
        let w: Vec<f64> = match &self.context_weights {
            Some(w) => w.clone(),
            None => (0..self.context_count)
                .map(|c| 1.0 + self.context_skew * c as f64)
                .collect(),
        };
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    fn multipliers(&self) -> Vec<f64> {
        let c = self.context_count;
        if c == 1 {
            return vec![1.0];
        }
        (0..c)
            .map(|i| 1.0 + self.context_shift * (2.0 * i as f64 / (c - 1) as f64 - 1.0))
            .collect()
    }

    /// Per-context exception probabilities whose frequency-weighted mean is
    /// `exception_rate`, found by bisection on the base odds.
    pub fn context_rates(&self) -> Vec<f64> {
        let r = self.exception_rate;
        let m = self.multipliers();
        if r <= 0.0 {
            return vec![0.0; m.len()];
        }
        if r >= 1.0 {
            return vec![1.0; m.len()];
        }
        let freq = self.context_freq();
        let rates = |log_odds: f64| -> Vec<f64> {
            m.iter()
                .map(|&mi| {
                    let o = mi * log_odds.exp();
                    o / (1.0 + o)
                })
                .collect()
        };
        let mean = |v: &[f64]| v.iter().zip(&freq).map(|(a, b)| a * b).sum::<f64>();
        let (mut lo, mut hi) = (-60.0f64, 60.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean(&rates(mid)) < r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        rates(0.5 * (lo + hi))
    }

    /// `p(symbol | context)`; exceptions spread evenly over non-base symbols.
    pub fn emission(&self) -> Channel {
        let k = self.alphabet;
        let rows = self
            .context_rates()
            .into_iter()
            .map(|e| {
                (0..k)
                    .map(|s| if s == self.base_symbol { 1.0 - e } else { e / (k - 1) as f64 })
                    .collect()
            })
            .collect();
        Channel::new(rows).expect("rows are normalised")
    }

    /// Swaps the weights of the most and least frequent contexts.
    pub fn shifted(&self) -> RuleException {
        let mut w = self.context_freq();
        if let (Some(hi), Some(lo)) = (argmax(&w), argmin(&w)) {
            w.swap(hi, lo);
        }
        RuleException {
            context_weights: Some(w),
            ..self.clone()
        }
    }

    pub fn generate(&self, seed: u64) -> Result<SymbolStream> {
        self.validate()?;
        let freq = self.context_freq();
        let contexts = weighted_cycle(&freq, self.length);
        let rates = self.context_rates();
        let mut rng = seed::rng(seed);
        let k = self.alphabet;
        let symbols = contexts
            .iter()
            .map(|&c| {
                if rng.random::<f64>() < rates[c] {
                    let s = rng.random_range(0..k - 1);
                    if s >= self.base_symbol {
                        s + 1
                    } else {
                        s
                    }
                } else {
                    self.base_symbol
                }
            })
            .collect();
        let emission = self.emission();
        let observed_joint = JointTable::from_marginal_channel(&freq, &emission)?;
        let mut s = SymbolStream::new(symbols, k, Some((contexts, self.context_count)))?;
        s.seed = seed;
        s.kind = "rule_exception".into();
        s.truth = Some(GroundTruth {
            emission,
            parent_freq: freq,
            parents: None,
            observed_joint,
        });
        Ok(s)
    }
}

pub(crate) fn argmax(v: &[f64]) -> Option<usize> {
    (0..v.len()).reduce(|a, b| if v[b] > v[a] { b } else { a })
}

pub(crate) fn argmin(v: &[f64]) -> Option<usize> {
    (0..v.len()).reduce(|a, b| if v[b] < v[a] { b } else { a })
}

/// Binary base-rule stream with the default cycle skew.
pub fn gen_rule_exception(
    base_symbol: usize,
    exception_rate: f64,
    context_count: usize,
    context_shift: f64,
    length: usize,
    seed: u64,
) -> Result<SymbolStream> {
    RuleException {
        alphabet: 2.max(base_symbol + 1),
        base_symbol,
        exception_rate,
        context_count,
        context_shift,
        length,
        ..RuleException::default()
    }
    .generate(seed)
    .map_err(|e| match e {
        LabError::Config(m) => LabError::Usage(m),
        other => other,
    })
}
