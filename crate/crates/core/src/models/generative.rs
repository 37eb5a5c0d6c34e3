use serde::{Deserialize, Serialize};

use super::ledger::{ExceptionDetector, ExceptionRule, ModelLedger, OpCounter};
use super::{surprise_bits, Family, PredictiveModel, StepRecord};

pub const DEFAULT_PRIOR: f64 = 0.5;

/// Context partitions the generative family may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    /// One emission distribution per context.
    PerContext,
    /// One emission distribution shared by all contexts.
    Pooled,
    /// Both candidates; the one with the shorter two-part code is active.
    Select,
}

#[derive(Debug, Clone)]
struct Candidate {
    map: Vec<usize>,
    groups: usize,
    counts: Vec<f64>,
    totals: Vec<f64>,
    /// Prequential code length of the stream so far, bits.
    code_bits: f64,
}

impl Candidate {
    fn new(map: Vec<usize>, alphabet: usize) -> Self {
        let groups = map.iter().max().map_or(1, |m| m + 1);
        Candidate {
            map,
            groups,
            counts: vec![0.0; groups * alphabet],
            totals: vec![0.0; groups],
            code_bits: 0.0,
        }
    }

    fn free_params(&self, alphabet: usize) -> f64 {
        (self.groups * (alphabet - 1)) as f64
    }
}

/// Dirichlet-smoothed emission model per context group.
///
/// `L(M) = log2(#candidates) + (k/2) log2 t` with `k` free emission
/// parameters; no observation is ever stored.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    alphabet: usize,
    contexts: usize,
    prior: f64,
    candidates: Vec<Candidate>,
    active: usize,
    detector: ExceptionDetector,
    ledger: ModelLedger,
    ops: OpCounter,
}

impl GenerativeModel {
    pub fn new(alphabet: usize, contexts: usize, prior: f64, partition: Partition, rule: ExceptionRule) -> Self {
        assert!(alphabet >= 1 && contexts >= 1 && prior > 0.0);
        let per = Candidate::new((0..contexts).collect(), alphabet);
        let pooled = Candidate::new(vec![0; contexts], alphabet);
        let candidates = match partition {
            Partition::PerContext => vec![per],
            Partition::Pooled => vec![pooled],
            Partition::Select if contexts == 1 => vec![pooled],
            Partition::Select => vec![per, pooled],
        };
        let mut m = GenerativeModel {
            alphabet,
            contexts,
            prior,
            candidates,
            active: 0,
            detector: ExceptionDetector::new(rule),
            ledger: ModelLedger::new(alphabet, 0.0),
            ops: OpCounter::default(),
        };
        m.ledger.l_model = m.model_bits(0);
        m
    }

    pub fn structure_bits(&self) -> f64 {
        (self.candidates.len() as f64).log2()
    }

    pub fn parameter_bits(&self, t: u64) -> f64 {
        if t <= 1 {
            return 0.0;
        }
        0.5 * self.candidates[self.active].free_params(self.alphabet) * (t as f64).log2()
    }

    fn model_bits(&self, t: u64) -> f64 {
        self.structure_bits() + self.parameter_bits(t)
    }

    pub fn active_groups(&self) -> usize {
        self.candidates[self.active].groups
    }

    fn prob(&self, cand: &Candidate, context: usize, symbol: usize) -> f64 {
        let g = cand.map[context];
        (cand.counts[g * self.alphabet + symbol] + self.prior) / (cand.totals[g] + self.alphabet as f64 * self.prior)
    }
}

impl PredictiveModel for GenerativeModel {
    fn family(&self) -> Family {
        Family::Generative
    }

    fn alphabet(&self) -> usize {
        self.alphabet
    }

    fn contexts(&self) -> usize {
        self.contexts
    }

    fn predict(&self, context: usize) -> Vec<f64> {
        let cand = &self.candidates[self.active];
        (0..self.alphabet).map(|s| self.prob(cand, context, s)).collect()
    }

    fn update(&mut self, observation: usize, context: usize) -> StepRecord {
        let t = self.ledger.t + 1;
        let k = self.alphabet as f64;
        let mut surprise = 0.0;
        let mut after = 0.0;
        for (i, cand) in self.candidates.iter().enumerate() {
            let g = cand.map[context];
            let c = cand.counts[g * self.alphabet + observation];
            let n = cand.totals[g];
            let before = surprise_bits((c + self.prior) / (n + k * self.prior));
            if i == self.active {
                surprise = before;
                after = surprise_bits((c + 1.0 + self.prior) / (n + 1.0 + k * self.prior));
            }
            // Group lookup, two reads, one division per candidate.
            self.ops.add(4);
        }
        for cand in &mut self.candidates {
            let g = cand.map[context];
            cand.code_bits += surprise_bits(
                (cand.counts[g * self.alphabet + observation] + self.prior) / (cand.totals[g] + k * self.prior),
            );
            cand.counts[g * self.alphabet + observation] += 1.0;
            cand.totals[g] += 1.0;
            self.ops.add(3);
        }
        let residual = surprise - after;
        let exception = self.detector.observe(residual);
        self.ops.add(2);
        if self.candidates.len() > 1 {
            let log_t = (t as f64).log2();
            let score = |c: &Candidate| c.code_bits + 0.5 * c.free_params(self.alphabet) * log_t;
            let best = (0..self.candidates.len())
                .reduce(|a, b| if score(&self.candidates[b]) < score(&self.candidates[a]) { b } else { a })
                .expect("nonempty");
            if score(&self.candidates[best]) < score(&self.candidates[self.active]) {
                self.active = best;
            }
            self.ops.add(self.candidates.len() as u64);
        }
        let l_model = self.model_bits(t);
        self.ledger.step(surprise, exception, l_model);
        StepRecord {
            t,
            surprise,
            residual,
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
