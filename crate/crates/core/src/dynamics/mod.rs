//! Exception-decay recurrence and growth-exponent fitting.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::seed;
use crate::stats::{ols, percentile_sorted};

pub const DEFAULT_BLOCK: usize = 16;
pub const MIN_FIT_POINTS: usize = 10;

/// How `n` lines up with `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// `n[0]` is the initial mass and `n[t+1]` follows from `c[t]`.
    Recurrence,
    /// `n[i]` and `c[i]` are measured at the same step.
    Paired,
}

/// Exception mass over time with the efficiency series that drove it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    pub t: Vec<f64>,
    pub n: Vec<f64>,
    /// `n0 exp(-eta sum c)` for recurrence traces.
    pub closed_form: Option<Vec<f64>>,
    pub n_cumulative: Option<Vec<f64>>,
    pub c: Vec<f64>,
    pub eta: f64,
    pub alignment: Alignment,
}

/// Iterates `n(t+1) = n(t) (1 - eta c(t))` from `n0`.
pub fn simulate_decay(n0: f64, eta: f64, c_series: &[f64]) -> Result<DecayTrace> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(LabError::usage(format!("eta = {eta} must lie in (0, 1)")));
    }
    if !(n0 >= 0.0) || !n0.is_finite() {
        return Err(LabError::usage(format!("n0 = {n0} must be finite and nonnegative")));
    }
    if let Some(c) = c_series.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(LabError::usage(format!("efficiency {c} outside [0, 1]")));
    }
    let mut n = Vec::with_capacity(c_series.len() + 1);
    let mut closed = Vec::with_capacity(c_series.len() + 1);
    n.push(n0);
    closed.push(n0);
    let mut sum_c = 0.0;
    for &c in c_series {
        let last = *n.last().expect("nonempty");
        n.push(last * (1.0 - eta * c));
        sum_c += c;
        closed.push(n0 * (-eta * sum_c).exp());
    }
    Ok(DecayTrace {
        t: (0..=c_series.len()).map(|i| i as f64).collect(),
        n,
        closed_form: Some(closed),
        n_cumulative: None,
        c: c_series.to_vec(),
        eta,
        alignment: Alignment::Recurrence,
    })
}

impl DecayTrace {
    /// Largest `|n(t+1) - n(t)(1 - eta c(t))|` over the trace.
    pub fn recurrence_residual(&self) -> f64 {
        match self.alignment {
            Alignment::Recurrence => self
                .c
                .iter()
                .enumerate()
                .map(|(i, c)| (self.n[i + 1] - self.n[i] * (1.0 - self.eta * c)).abs())
                .fold(0.0, f64::max),
            Alignment::Paired => f64::NAN,
        }
    }

    /// Largest `(closed - n) / n0` over the trace.
    pub fn closed_form_gap(&self) -> Option<f64> {
        let cf = self.closed_form.as_ref()?;
        let n0 = self.n[0];
        if n0 == 0.0 {
            return Some(0.0);
        }
        Some(cf.iter().zip(&self.n).map(|(a, b)| (a - b) / n0).fold(0.0, f64::max))
    }

    /// Largest `(closed - n) / closed`, the pointwise relative gap.
    pub fn closed_form_pointwise_gap(&self) -> Option<f64> {
        let cf = self.closed_form.as_ref()?;
        Some(
            cf.iter()
                .zip(&self.n)
                .filter(|(a, _)| **a > 0.0)
                .map(|(a, b)| (a - b) / a)
                .fold(0.0, f64::max),
        )
    }

    /// Columns `t, n_residual, n_cumulative, c`. Cells with no value are empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| LabError::io("<trace>", e);
        writeln!(w, "t,n_residual,n_cumulative,c").map_err(io)?;
        for i in 0..self.n.len() {
            let cum = self
                .n_cumulative
                .as_ref()
                .map_or(String::new(), |v| v[i].to_string());
            let c = self.c.get(i).map_or(String::new(), f64::to_string);
            writeln!(w, "{},{},{},{}", self.t[i], self.n[i], cum, c).map_err(io)?;
        }
        Ok(())
    }
}

/// Power-law fit `n_cum ~ t^alpha` with a block-bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub alpha: f64,
    pub intercept: f64,
    pub r2: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    /// A `+1` offset was added to every count because some were zero.
    pub offset_applied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub window: (f64, f64),
    pub bootstrap_reps: usize,
    pub block: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            window: (1.0, f64::INFINITY),
            bootstrap_reps: 1000,
            block: DEFAULT_BLOCK,
            seed: 0,
        }
    }
}

/// Fits `log n_cum = intercept + alpha log t` over points with `t` inside
/// `opts.window`. Bootstrap resamples contiguous blocks of points.
pub fn fit_alpha(t: &[f64], n_cum: &[f64], opts: FitOptions) -> Result<AlphaFit> {
    if t.len() != n_cum.len() {
        return Err(LabError::usage("t and n_cum differ in length"));
    }
    let (lo, hi) = opts.window;
    if !(lo >= 1.0) || hi < lo {
        return Err(LabError::usage(format!("window ({lo}, {hi}) must satisfy 1 <= t_min <= t_max")));
    }
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(n_cum)
        .filter(|(ti, _)| **ti >= lo && **ti <= hi)
        .map(|(a, b)| (*a, *b))
        .collect();
    if pts.iter().any(|(_, n)| *n < 0.0 || !n.is_finite()) {
        return Err(LabError::usage("counts must be finite and nonnegative"));
    }
    let positive = pts.iter().filter(|(_, n)| *n > 0.0).count();
    if positive < MIN_FIT_POINTS {
        return Err(LabError::InsufficientData(format!(
            "{positive} positive points in window, {MIN_FIT_POINTS} required"
        )));
    }
    let offset_applied = pts.iter().any(|(_, n)| *n == 0.0);
    let off = if offset_applied { 1.0 } else { 0.0 };
    let x: Vec<f64> = pts.iter().map(|(t, _)| t.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|(_, n)| (n + off).ln()).collect();
    let fit = ols(&x, &y).ok_or_else(|| LabError::InsufficientData("all points share one t".into()))?;

    let m = x.len();
    let block = opts.block.clamp(1, (m / 2).max(1));
    let (ci_low, ci_high) = if opts.bootstrap_reps == 0 {
        (fit.slope, fit.slope)
    } else {
        let mut rng = seed::rng(opts.seed);
        let starts = m - block + 1;
        let mut slopes = Vec::with_capacity(opts.bootstrap_reps);
        let (mut bx, mut by) = (Vec::with_capacity(m + block), Vec::with_capacity(m + block));
        for _ in 0..opts.bootstrap_reps {
            bx.clear();
            by.clear();
            while bx.len() < m {
                let s = rng.random_range(0..starts);
                bx.extend_from_slice(&x[s..s + block]);
                by.extend_from_slice(&y[s..s + block]);
            }
            bx.truncate(m);
            by.truncate(m);
            if let Some(f) = ols(&bx, &by) {
                slopes.push(f.slope);
            }
        }
        if slopes.is_empty() {
            (fit.slope, fit.slope)
        } else {
            slopes.sort_by(f64::total_cmp);
            (
                percentile_sorted(&slopes, 0.025).min(fit.slope),
                percentile_sorted(&slopes, 0.975).max(fit.slope),
            )
        }
    };
    Ok(AlphaFit {
        alpha: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        ci_low,
        ci_high,
        window: (lo, hi.min(pts.last().map_or(hi, |p| p.0))),
        n_points: m,
        offset_applied,
    })
}

/// Fits a series indexed by step `t = 1, 2, ...`.
pub fn fit_alpha_series(n_cum: &[f64], opts: FitOptions) -> Result<AlphaFit> {
    let t: Vec<f64> = (1..=n_cum.len()).map(|i| i as f64).collect();
    fit_alpha(&t, n_cum, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signature {
    CausalLike,
    CorrelationalLike,
    Indeterminate,
}

impl Signature {
    pub fn name(self) -> &'static str {
        match self {
            Signature::CausalLike => "causal_like",
            Signature::CorrelationalLike => "correlational_like",
            Signature::Indeterminate => "indeterminate",
        }
    }
}

pub const CAUSAL_CI_HIGH: f64 = 0.5;
pub const CORRELATIONAL_CI_LOW: f64 = 0.7;

/// Causal-like when the whole interval is below 0.5, correlational-like when
/// it is above 0.7.
pub fn classify_model_signature(fit: &AlphaFit) -> Signature {
    if fit.ci_high < CAUSAL_CI_HIGH {
        Signature::CausalLike
    } else if fit.ci_low > CORRELATIONAL_CI_LOW {
        Signature::CorrelationalLike
    } else {
        Signature::Indeterminate
    }
}

/// `count` distinct integer steps log-spaced over `[lo, hi]`.
pub fn log_checkpoints(lo: u64, hi: u64, count: usize) -> Vec<u64> {
    assert!(lo >= 1 && hi >= lo && count >= 1);
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<u64> = (0..count)
        .map(|i| {
            let f = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            (a + (b - a) * f).exp().round() as u64
        })
        .map(|v| v.clamp(lo, hi))
        .collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_efficiency_zero_keeps_mass() {
        let tr = simulate_decay(5.0, 0.3, &[0.0; 20]).unwrap();
        assert!(tr.n.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn recurrence_value() {
        let tr = simulate_decay(100.0, 0.1, &[0.5; 10]).unwrap();
        let direct = 100.0 * 0.95f64.powi(10);
        assert!((tr.n[10] - direct).abs() < 1e-12);
        assert!((tr.n[10] - 59.874).abs() < 1e-3);
        assert_eq!(tr.recurrence_residual(), 0.0);
    }

    #[test]
    fn closed_form_ratio() {
        let tr = simulate_decay(1.0, 0.1, &[1.0; 10]).unwrap();
        let ratio = tr.n[10] / tr.closed_form.as_ref().unwrap()[10];
        let oracle = (0.9 / (-0.1f64).exp()).powi(10);
        assert!((ratio - oracle).abs() < 1e-12);
        assert!((0.94..=1.0).contains(&ratio));
    }

    #[test]
    fn eta_range_enforced() {
        assert!(simulate_decay(1.0, 1.0, &[0.1]).is_err());
        assert!(simulate_decay(1.0, 0.0, &[0.1]).is_err());
        assert!(simulate_decay(1.0, 0.5, &[1.5]).is_err());
    }

    fn pts(f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = log_checkpoints(10, 100_000, 40).into_iter().map(|v| v as f64).collect();
        let n = t.iter().map(|&v| f(v)).collect();
        (t, n)
    }

    #[test]
    fn exact_power_laws() {
        let (t, n) = pts(|t| 3.0 * t);
        let f = fit_alpha(&t, &n, FitOptions::default()).unwrap();
        assert!((f.alpha - 1.0).abs() < 1e-6 && f.r2 > 0.999999);
        assert!(f.ci_low <= f.alpha && f.alpha <= f.ci_high);
        let (t, n) = pts(|_| 7.0);
        assert!(fit_alpha(&t, &n, FitOptions::default()).unwrap().alpha.abs() < 1e-6);
        let (t, n) = pts(|t| 2.0 * t.sqrt());
        assert!((fit_alpha(&t, &n, FitOptions::default()).unwrap().alpha - 0.5).abs() < 1e-6);
    }

    #[test]
    fn zero_counts_get_offset() {
        let (t, mut n) = pts(|t| t);
        n[0] = 0.0;
        let f = fit_alpha(&t, &n, FitOptions::default()).unwrap();
        assert!(f.offset_applied);
        let few = vec![0.0; t.len()];
        assert!(matches!(
            fit_alpha(&t, &few, FitOptions::default()),
            Err(LabError::InsufficientData(_))
        ));
    }

    #[test]
    fn signature_bands() {
        let f = |lo, hi| AlphaFit {
            alpha: 0.5 * (lo + hi),
            intercept: 0.0,
            r2: 1.0,
            ci_low: lo,
            ci_high: hi,
            window: (1.0, 10.0),
            n_points: 10,
            offset_applied: false,
        };
        assert_eq!(classify_model_signature(&f(0.02, 0.11)), Signature::CausalLike);
        assert_eq!(classify_model_signature(&f(0.88, 1.07)), Signature::CorrelationalLike);
        assert_eq!(classify_model_signature(&f(0.4, 0.8)), Signature::Indeterminate);
    }

    #[test]
    fn checkpoints_are_distinct_and_bounded() {
        let c = log_checkpoints(100, 100_000, 61);
        assert_eq!(c[0], 100);
        assert_eq!(*c.last().unwrap(), 100_000);
        assert!(c.windows(2).all(|w| w[1] > w[0]));
    }
}
