use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// One row of a ledger's history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: u64,
    pub l_model: f64,
    pub l_residual: f64,
    pub n_exceptions: u64,
    pub c_efficiency: f64,
}

/// Running two-part code account of an online model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLedger {
    pub alphabet: usize,
    pub t: u64,
    /// `L(M)`, bits.
    pub l_model: f64,
    /// `L(X|M)`, bits: the sum of per-step surprises.
    pub l_residual: f64,
    pub n_exceptions: u64,
    pub history: Vec<LedgerRow>,
    pub keep_history: bool,
}

impl ModelLedger {
    pub fn new(alphabet: usize, l_model: f64) -> Self {
        ModelLedger {
            alphabet,
            t: 0,
            l_model,
            l_residual: 0.0,
            n_exceptions: 0,
            history: Vec::new(),
            keep_history: true,
        }
    }

    /// Residual bits per step relative to `log2(alphabet)`, clamped to `[0, 1]`.
    pub fn explained_ratio(&self) -> f64 {
        if self.alphabet <= 1 {
            return 1.0;
        }
        if self.t == 0 {
            return 0.0;
        }
        let h_raw = (self.alphabet as f64).log2();
        (1.0 - self.l_residual / self.t as f64 / h_raw).clamp(0.0, 1.0)
    }

    pub fn total_code(&self) -> f64 {
        self.l_model + self.l_residual
    }

    pub(crate) fn step(&mut self, surprise: f64, exception: bool, l_model: f64) {
        self.t += 1;
        self.l_residual += surprise;
        self.l_model = l_model;
        if exception {
            self.n_exceptions += 1;
        }
        if self.keep_history {
            self.history.push(self.row());
        }
    }

    pub fn row(&self) -> LedgerRow {
        LedgerRow {
            t: self.t,
            l_model: self.l_model,
            l_residual: self.l_residual,
            n_exceptions: self.n_exceptions,
            c_efficiency: self.explained_ratio(),
        }
    }

    /// History rows at the given steps (1-based); steps beyond the history are skipped.
    pub fn rows_at(&self, steps: &[u64]) -> Vec<LedgerRow> {
        steps
            .iter()
            .filter(|&&t| t >= 1 && (t as usize) <= self.history.len())
            .map(|&t| self.history[t as usize - 1])
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, rows: &[LedgerRow]) -> Result<()> {
        let io = |e| LabError::io("<ledger>", e);
        writeln!(w, "t,l_model_bits,l_residual_bits,n_exceptions,c_efficiency").map_err(io)?;
        for r in rows {
            writeln!(w, "{},{},{},{},{}", r.t, r.l_model, r.l_residual, r.n_exceptions, r.c_efficiency).map_err(io)?;
        }
        Ok(())
    }
}

/// Flags a residual as an exception when it exceeds
/// `max(mean + multiplier * sd, floor_bits)` of recent non-exception residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExceptionRule {
    pub window: usize,
    pub multiplier: f64,
    pub floor_bits: f64,
}

impl Default for ExceptionRule {
    fn default() -> Self {
        ExceptionRule {
            window: 500,
            multiplier: 1.0,
            floor_bits: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExceptionDetector {
    rule: ExceptionRule,
    recent: VecDeque<f64>,
    sum: f64,
    sum_sq: f64,
}

impl ExceptionDetector {
    pub fn new(rule: ExceptionRule) -> Self {
        ExceptionDetector {
            rule,
            recent: VecDeque::with_capacity(rule.window + 1),
            sum: 0.0,
            sum_sq: 0.0,
        }
    }

    pub fn threshold(&self) -> f64 {
        let n = self.recent.len();
        if n == 0 {
            return self.rule.floor_bits;
        }
        let mean = self.sum / n as f64;
        let var = (self.sum_sq / n as f64 - mean * mean).max(0.0);
        (mean + self.rule.multiplier * var.sqrt()).max(self.rule.floor_bits)
    }

    /// Classifies `residual`; ordinary residuals join the trailing window.
    pub fn observe(&mut self, residual: f64) -> bool {
        let exception = residual > self.threshold();
        if !exception && self.rule.window > 0 {
            self.recent.push_back(residual);
            self.sum += residual;
            self.sum_sq += residual * residual;
            if self.recent.len() > self.rule.window {
                let old = self.recent.pop_front().expect("nonempty");
                self.sum -= old;
                self.sum_sq -= old * old;
            }
        }
        exception
    }
}

/// Saturating count of elementary model operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    pub count: u64,
    pub cap: u64,
    pub saturated: bool,
}

impl Default for OpCounter {
    fn default() -> Self {
        OpCounter::with_cap(u64::MAX)
    }
}

impl OpCounter {
    pub fn with_cap(cap: u64) -> Self {
        OpCounter {
            count: 0,
            cap,
            saturated: false,
        }
    }

    #[inline]
    pub fn add(&mut self, n: u64) {
        match self.count.checked_add(n) {
            Some(v) if v <= self.cap => self.count = v,
            _ => {
                self.count = self.cap;
                self.saturated = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detector_uses_floor_then_window() {
        let mut d = ExceptionDetector::new(ExceptionRule {
            window: 4,
            multiplier: 1.0,
            floor_bits: 0.5,
        });
        assert!(!d.observe(0.4));
        assert!(d.observe(0.6));
        for _ in 0..4 {
            d.observe(2.0 * 0.25);
        }
        assert!((d.threshold() - 0.5).abs() < 1e-12);
        let mut d = ExceptionDetector::new(ExceptionRule {
            window: 4,
            multiplier: 1.0,
            floor_bits: 1.0,
        });
        for v in [1.0, 1.0, 1.0, 0.0] {
            assert!(!d.observe(v));
        }
        // Window [1, 1, 1, 0]: mean 3/4, population sd sqrt(3)/4.
        let expect = 0.75 + 3f64.sqrt() / 4.0;
        assert!((d.threshold() - expect).abs() < 1e-12);
        assert!(!d.observe(1.1));
        assert!(d.observe(1.3));
    }

    #[test]
    fn counter_saturates() {
        let mut c = OpCounter::with_cap(10);
        c.add(7);
        assert!(!c.saturated);
        c.add(7);
        assert_eq!(c.count, 10);
        assert!(c.saturated);
        let mut c = OpCounter::default();
        c.add(u64::MAX);
        c.add(1);
        assert!(c.saturated);
    }

    #[test]
    fn ledger_csv() {
        let mut l = ModelLedger::new(2, 1.0);
        l.step(0.5, false, 1.0);
        l.step(1.5, true, 2.0);
        let mut buf = Vec::new();
        l.write_csv(&mut buf, &l.history).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "t,l_model_bits,l_residual_bits,n_exceptions,c_efficiency\n1,1,0.5,0,0.5\n2,2,2,1,0\n");
    }
}
