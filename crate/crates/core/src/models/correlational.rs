use super::ledger::{ExceptionDetector, ExceptionRule, ModelLedger, OpCounter};
use super::{surprise_bits, Family, PredictiveModel, StepRecord};

pub const DEFAULT_ALLOWANCE: f64 = 1.0 / 1024.0;

/// Per-context majority rule plus an explicit list of stored exceptions.
///
/// The rule predicts its base symbol with probability `1 - allowance` and
/// spreads `allowance` over the rest. Stored cases are looked up by position,
/// so the model only sharpens on observations it has already stored.
#[derive(Debug, Clone)]
pub struct CorrelationalModel {
    alphabet: usize,
    contexts: usize,
    allowance: f64,
    counts: Vec<u64>,
    base: Vec<Option<usize>>,
    /// `(step, symbol)`, ordered by step.
    store: Vec<(u64, usize)>,
    detector: ExceptionDetector,
    ledger: ModelLedger,
    ops: OpCounter,
}

impl CorrelationalModel {
    pub fn new(alphabet: usize, contexts: usize, allowance: f64, rule: ExceptionRule) -> Self {
        assert!(alphabet >= 1 && contexts >= 1);
        assert!(allowance > 0.0 && allowance < 1.0);
        let log_k = (alphabet as f64).log2();
        CorrelationalModel {
            alphabet,
            contexts,
            allowance,
            counts: vec![0; alphabet * contexts],
            base: vec![None; contexts],
            store: Vec::new(),
            detector: ExceptionDetector::new(rule),
            ledger: ModelLedger::new(alphabet, log_k * (1 + contexts) as f64),
            ops: OpCounter::default(),
        }
    }

    pub fn base_rule(&self, context: usize) -> Option<usize> {
        self.base[context]
    }

    pub fn stored(&self) -> &[(u64, usize)] {
        &self.store
    }

    /// Cost of one stored exception at step `t`: position plus symbol.
    fn exception_bits(&self, t: u64) -> f64 {
        (t as f64).log2() + (self.alphabet as f64).log2()
    }

    fn lookup_cost(&self) -> u64 {
        (usize::BITS - self.store.len().leading_zeros()) as u64 + 1
    }
}

impl PredictiveModel for CorrelationalModel {
    fn family(&self) -> Family {
        Family::Correlational
    }

    fn alphabet(&self) -> usize {
        self.alphabet
    }

    fn contexts(&self) -> usize {
        self.contexts
    }

    fn predict(&self, context: usize) -> Vec<f64> {
        let k = self.alphabet;
        match self.base[context] {
            None => vec![1.0 / k as f64; k],
            Some(_) if k == 1 => vec![1.0],
            Some(b) => {
                let other = self.allowance / (k - 1) as f64;
                (0..k).map(|s| if s == b { 1.0 - self.allowance } else { other }).collect()
            }
        }
    }

    fn update(&mut self, observation: usize, context: usize) -> StepRecord {
        let t = self.ledger.t + 1;
        // Context lookup, probe of the exception store, rule evaluation.
        self.ops.add(2 + self.lookup_cost());
        let surprise = surprise_bits(self.predict(context)[observation]);
        let mut l_model = self.ledger.l_model;
        let exception = if self.base[context].is_none() {
            self.base[context] = Some(observation);
            false
        } else {
            // A stored case is free on lookup, so the regret is the full surprise.
            let exc = self.detector.observe(surprise);
            self.ops.add(3);
            if exc {
                self.store.push((t, observation));
                self.ops.add(self.lookup_cost());
                l_model += self.exception_bits(t);
            }
            exc
        };
        let idx = context * self.alphabet + observation;
        self.counts[idx] += 1;
        let b = self.base[context].expect("set above");
        if self.counts[idx] > self.counts[context * self.alphabet + b] {
            self.base[context] = Some(observation);
        }
        self.ops.add(3);
        self.ledger.step(surprise, exception, l_model);
        StepRecord {
            t,
            surprise,
            residual: surprise,
            exception,
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
}
