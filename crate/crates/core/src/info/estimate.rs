use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exec::Execution;
use crate::seed;
use crate::stats::percentile_sorted;

pub const DEFAULT_BOOTSTRAP_REPS: usize = 1000;
pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    Exact,
    Plugin,
    MillerMadow,
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorId::Exact => "exact",
            EstimatorId::Plugin => "plugin",
            EstimatorId::MillerMadow => "miller_madow",
        })
    }
}

impl FromStr for EstimatorId {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(EstimatorId::Exact),
            "plugin" | "plug-in" => Ok(EstimatorId::Plugin),
            "miller_madow" | "miller-madow" | "mm" => Ok(EstimatorId::MillerMadow),
            other => Err(LabError::usage(format!("unknown estimator {other:?}"))),
        }
    }
}

/// A mutual-information value with a percentile bootstrap interval, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: usize,
    pub estimator_id: EstimatorId,
}

impl MIEstimate {
    /// Degenerate interval around an exactly computed value.
    pub fn exact(value: f64) -> Self {
        MIEstimate {
            value,
            ci_low: value,
            ci_high: value,
            n_samples: 0,
            estimator_id: EstimatorId::Exact,
        }
    }

    pub fn covers(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

/// Dense relabelling of observed symbols so count tables stay small.
fn densify(values: impl Iterator<Item = usize>) -> (Vec<usize>, usize) {
    let vals: Vec<usize> = values.collect();
    let mut sorted = vals.clone();
    sorted.sort_unstable();
    sorted.dedup();
    let idx = vals
        .iter()
        .map(|v| sorted.binary_search(v).expect("value present"))
        .collect();
    (idx, sorted.len())
}

/// Plug-in or Miller-Madow MI from paired observations given as dense indices.
fn point_estimate(xs: &[usize], ys: &[usize], nx: usize, ny: usize, estimator: EstimatorId, scratch: &mut Counts) -> f64 {
    scratch.reset(nx, ny);
    for (&x, &y) in xs.iter().zip(ys) {
        scratch.joint[x * ny + y] += 1;
        scratch.cx[x] += 1;
        scratch.cy[y] += 1;
    }
    let n = xs.len() as f64;
    let mut acc = 0.0;
    for x in 0..nx {
        let cx = scratch.cx[x];
        if cx == 0 {
            continue;
        }
        for y in 0..ny {
            let c = scratch.joint[x * ny + y];
            if c > 0 {
                let c = c as f64;
                acc += c * (c * n / (cx as f64 * scratch.cy[y] as f64)).log2();
            }
        }
    }
    let mut mi = acc / n;
    if estimator == EstimatorId::MillerMadow {
        let sx = scratch.cx.iter().filter(|&&c| c > 0).count() as f64;
        let sy = scratch.cy.iter().filter(|&&c| c > 0).count() as f64;
        let sxy = scratch.joint.iter().filter(|&&c| c > 0).count() as f64;
        // Per-entropy bias (m - 1)/(2n ln 2), combined as H(X) + H(Y) - H(X,Y).
        // With every cell observed this is -(|X||Y| - |X| - |Y| + 1)/(2n ln 2).
        mi += (sx + sy - sxy - 1.0) / (2.0 * n * LN_2);
    }
    mi.max(0.0)
}

#[derive(Default)]
struct Counts {
    joint: Vec<u64>,
    cx: Vec<u64>,
    cy: Vec<u64>,
}

impl Counts {
    fn reset(&mut self, nx: usize, ny: usize) {
        self.joint.clear();
        self.joint.resize(nx * ny, 0);
        self.cx.clear();
        self.cx.resize(nx, 0);
        self.cy.clear();
        self.cy.resize(ny, 0);
    }
}

/// MI of paired samples with a seeded percentile bootstrap interval.
///
/// Replicate `r` draws from a generator seeded by `(seed, r)`, so results do
/// not depend on `exec`.
pub fn estimate_mi_from_samples(
    pairs: &[(usize, usize)],
    estimator: EstimatorId,
    bootstrap_reps: usize,
    seed: u64,
    exec: Execution,
) -> Result<MIEstimate> {
    if pairs.is_empty() {
        return Err(LabError::usage("no samples given"));
    }
    if pairs.len() < MIN_SAMPLES {
        return Err(LabError::InsufficientData(format!(
            "{} samples, at least {MIN_SAMPLES} required",
            pairs.len()
        )));
    }
    if estimator == EstimatorId::Exact {
        return Err(LabError::usage("the exact estimator needs a joint table, not samples"));
    }
    let (xs, nx) = densify(pairs.iter().map(|p| p.0));
    let (ys, ny) = densify(pairs.iter().map(|p| p.1));
    let n = pairs.len();
    let value = point_estimate(&xs, &ys, nx, ny, estimator, &mut Counts::default());

    let (ci_low, ci_high) = if bootstrap_reps == 0 {
        (value, value)
    } else {
        let mut reps = exec.map(bootstrap_reps, |r| {
            let mut rng = seed::rng_at(seed, &[r as u64]);
            let mut bx = Vec::with_capacity(n);
            let mut by = Vec::with_capacity(n);
            for _ in 0..n {
                let i = rng.random_range(0..n);
                bx.push(xs[i]);
                by.push(ys[i]);
            }
            point_estimate(&bx, &by, nx, ny, estimator, &mut Counts::default())
        });
        reps.sort_by(f64::total_cmp);
        let lo = percentile_sorted(&reps, 0.025);
        let hi = percentile_sorted(&reps, 0.975);
        (lo.min(value), hi.max(value))
    };
    Ok(MIEstimate {
        value,
        ci_low,
        ci_high,
        n_samples: n,
        estimator_id: estimator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn copy_and_independent_samples() {
        let mut rng = seed::rng(11);
        let copy: Vec<(usize, usize)> = (0..10_000)
            .map(|_| {
                let b = rng.random_range(0..2);
                (b, b)
            })
            .collect();
        let e = estimate_mi_from_samples(&copy, EstimatorId::MillerMadow, 1000, 1, Execution::Sequential).unwrap();
        assert!((e.value - 1.0).abs() < 0.02);
        assert!(e.ci_low <= e.value && e.value <= e.ci_high);
        assert!(e.covers(1.0), "{e:?}");

        let ind: Vec<(usize, usize)> = (0..10_000)
            .map(|_| (rng.random_range(0..2), rng.random_range(0..2)))
            .collect();
        let e = estimate_mi_from_samples(&ind, EstimatorId::MillerMadow, 200, 1, Execution::Sequential).unwrap();
        assert!(e.value.abs() < 0.02);
    }

    #[test]
    fn deterministic_under_seed_and_execution() {
        let mut rng = seed::rng(5);
        let s: Vec<(usize, usize)> = (0..500)
            .map(|_| {
                let x = rng.random_range(0..3);
                (x, (x + rng.random_range(0..2)) % 3)
            })
            .collect();
        let a = estimate_mi_from_samples(&s, EstimatorId::Plugin, 300, 9, Execution::Sequential).unwrap();
        let b = estimate_mi_from_samples(&s, EstimatorId::Plugin, 300, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn miller_madow_correction_matches_formula() {
        let s: Vec<(usize, usize)> = (0..20).map(|i| (i % 3, (i / 2) % 2)).collect();
        let p = estimate_mi_from_samples(&s, EstimatorId::Plugin, 0, 0, Execution::Sequential).unwrap();
        let m = estimate_mi_from_samples(&s, EstimatorId::MillerMadow, 0, 0, Execution::Sequential).unwrap();
        let (kx, ky) = (3.0, 2.0);
        let correction = (kx * ky - kx - ky + 1.0) / (2.0 * 20.0 * LN_2);
        assert!((m.value - (p.value - correction).max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(
            estimate_mi_from_samples(&[], EstimatorId::Plugin, 10, 0, Execution::Sequential),
            Err(LabError::Usage(_))
        ));
        assert!(matches!(
            estimate_mi_from_samples(&[(0, 0); 5], EstimatorId::Plugin, 10, 0, Execution::Sequential),
            Err(LabError::InsufficientData(_))
        ));
    }
}
