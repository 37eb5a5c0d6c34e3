use std::io::Write;

use serde::{Deserialize, Serialize};

use super::solver::{iterate, partition_encoders, perturb, random_encoder, to_channel, IBPoint, IbOptions, Source};
use crate::error::{LabError, Result};
use crate::exec::Execution;
use crate::info::{mutual_information, Channel, JointTable};
use crate::seed;

pub const DEFAULT_RESTARTS: usize = 8;
/// Upper bound on up-and-down continuation passes.
pub const MAX_CONTINUATION_PASSES: usize = 4;
const CONTINUATION_GAIN: f64 = 1e-9;
/// Partitions of `x` tried as extra starts when there are at most this many.
pub const PARTITION_START_CAP: usize = 64;
pub const DEFAULT_BETA_COUNT: usize = 40;
pub const DEFAULT_BETA_RANGE: (f64, f64) = (0.1, 100.0);
/// Slack allowed in the frontier monotonicity checks.
pub const MONOTONE_TOL: f64 = 1e-6;

/// `count` log-spaced values over `[lo, hi]`, inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && count >= 1);
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

pub fn default_betas() -> Vec<f64> {
    log_spaced(DEFAULT_BETA_RANGE.0, DEFAULT_BETA_RANGE.1, DEFAULT_BETA_COUNT)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub restarts: usize,
    pub ib: IbOptions,
    /// After the independent restarts, sweep β up and then down, seeding each
    /// β from its neighbour's best encoder (as is and with noise), until a
    /// pass improves nothing.
    pub continuation: bool,
    pub execution: Execution,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            restarts: DEFAULT_RESTARTS,
            ib: IbOptions::default(),
            continuation: true,
            execution: Execution::default(),
        }
    }
}

/// IB solutions ordered by β, with the encoder behind each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCurve {
    pub points: Vec<IBPoint>,
    pub encoders: Vec<Channel>,
    /// `I(X;Y)` of the source joint, bits.
    pub source_ixy: f64,
    pub z_size: usize,
}

#[derive(Clone)]
struct Candidate {
    q: Vec<f64>,
    point: IBPoint,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    // Converged beats unconverged, then objective, then lower rate.
    if a.point.converged != b.point.converged {
        return a.point.converged;
    }
    let (oa, ob) = (a.point.objective(), b.point.objective());
    if (oa - ob).abs() > 1e-12 {
        return oa > ob;
    }
    a.point.rate < b.point.rate
}

/// Best-of-restarts IB solution for every β in `betas`.
///
/// Restart `r` at β index `b` is seeded from `(seed, b, r)`, so the curve is
/// identical under sequential and parallel execution. On small alphabets every
/// partition of `x` into at most `z_size` blocks is tried as well.
pub fn sweep_frontier(j: &JointTable, z_size: usize, betas: &[f64], seed: u64, opts: SweepOptions) -> Result<FrontierCurve> {
    if z_size == 0 {
        return Err(LabError::usage("z_size must be at least 1"));
    }
    if betas.is_empty() {
        return Err(LabError::usage("beta schedule is empty"));
    }
    if betas.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
        return Err(LabError::usage("betas must be positive and finite"));
    }
    if betas.windows(2).any(|w| w[1] < w[0]) {
        return Err(LabError::usage("betas must be sorted ascending"));
    }
    if opts.restarts == 0 {
        return Err(LabError::usage("restarts must be at least 1"));
    }
    let src = Source::new(j);
    let nx = j.nx();
    let restarts = opts.restarts;
    let partitions = partition_encoders(nx, z_size, PARTITION_START_CAP);
    let per_beta = restarts + partitions.len();
    let runs = opts.execution.map(betas.len() * per_beta, |k| {
        let (b, r) = (k / per_beta, k % per_beta);
        let init = match r.checked_sub(restarts) {
            Some(i) => partitions[i].clone(),
            None => random_encoder(nx, z_size, &mut seed::rng_at(seed, &[b as u64, r as u64])),
        };
        let (q, point) = iterate(&src, init, z_size, betas[b], opts.ib);
        Candidate { q, point }
    });
    let mut best: Vec<Candidate> = runs
        .chunks(per_beta)
        .map(|c| c.iter().skip(1).fold(c[0].clone(), |acc, x| if better(x, &acc) { x.clone() } else { acc }))
        .collect();

    if opts.continuation && betas.len() > 1 {
        let mut rng = seed::rng_at(seed, &[u64::MAX]);
        let order: Vec<(usize, usize)> = (1..betas.len())
            .map(|b| (b - 1, b))
            .chain((0..betas.len() - 1).rev().map(|b| (b + 1, b)))
            .collect();
        for _ in 0..MAX_CONTINUATION_PASSES {
            let mut improved = false;
            for &(from, to) in &order {
                let starts = [best[from].q.clone(), perturb(&best[from].q, nx, z_size, 0.1, &mut rng)];
                for init in starts {
                    let (q, point) = iterate(&src, init, z_size, betas[to], opts.ib);
                    let cand = Candidate { q, point };
                    if better(&cand, &best[to]) {
                        improved |= cand.point.converged != best[to].point.converged
                            || cand.point.objective() > best[to].point.objective() + CONTINUATION_GAIN;
                        best[to] = cand;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }

    let (points, encoders) = best
        .into_iter()
        .map(|c| (c.point, to_channel(c.q, z_size)))
        .unzip();
    Ok(FrontierCurve {
        points,
        encoders,
        source_ixy: mutual_information(j),
        z_size,
    })
}

impl FrontierCurve {
    /// Converged points only, in β order.
    pub fn converged_points(&self) -> Vec<IBPoint> {
        self.points.iter().copied().filter(|p| p.converged).collect()
    }

    /// Rate nondecreasing in β over converged points.
    pub fn rate_monotone_in_beta(&self) -> bool {
        self.converged_points().windows(2).all(|w| w[1].rate >= w[0].rate - MONOTONE_TOL)
    }

    /// Relevance nondecreasing in rate over converged points.
    pub fn relevance_monotone_in_rate(&self) -> bool {
        let mut pts = self.converged_points();
        pts.sort_by(|a, b| a.rate.total_cmp(&b.rate));
        pts.windows(2).all(|w| w[1].relevance >= w[0].relevance - MONOTONE_TOL)
    }

    /// Monotone upper envelope `(rate, relevance)` through the origin,
    /// built from converged points.
    pub fn envelope(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = std::iter::once((0.0, 0.0))
            .chain(self.converged_points().iter().map(|p| (p.rate, p.relevance)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for (r, u) in pts {
            match out.last() {
                Some(&(_, lu)) if u <= lu => {}
                Some(&(lr, _)) if r <= lr => {
                    out.pop();
                    out.push((r, u));
                }
                _ => out.push((r, u)),
            }
        }
        out
    }

    /// Interpolated frontier relevance at `rate`; the flag is set when `rate`
    /// lies beyond the largest frontier rate and the last value is held flat.
    pub fn relevance_at(&self, rate: f64) -> (f64, bool) {
        let env = self.envelope();
        let &(r_max, u_max) = env.last().expect("envelope contains the origin");
        if rate > r_max {
            return (u_max, rate > r_max + MONOTONE_TOL);
        }
        for w in env.windows(2) {
            let ((r0, u0), (r1, u1)) = (w[0], w[1]);
            if rate <= r1 {
                if r1 - r0 <= 0.0 {
                    return (u1, false);
                }
                return (u0 + (u1 - u0) * (rate - r0) / (r1 - r0), false);
            }
        }
        (u_max, false)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "beta,rate_bits,relevance_bits,epsilon_ib,converged")?;
        for p in &self.points {
            writeln!(w, "{},{},{},{},{}", p.beta, p.rate, p.relevance, p.epsilon_ib, p.converged)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_spacing_endpoints() {
        let b = default_betas();
        assert_eq!(b.len(), 40);
        assert!((b[0] - 0.1).abs() < 1e-12 && (b[39] - 100.0).abs() < 1e-9);
        assert!(b.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn copy_joint_reaches_full_efficiency() {
        let j = JointTable::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let c = sweep_frontier(&j, 2, &default_betas(), 3, SweepOptions::default()).unwrap();
        let last = c.points.last().unwrap();
        assert!((last.rate - 1.0).abs() < 1e-6 && (last.relevance - 1.0).abs() < 1e-6);
        assert!((last.epsilon_ib - 1.0).abs() < 1e-6);
    }

    #[test]
    fn independent_joint_has_no_relevance() {
        let j = JointTable::new(vec![vec![0.12, 0.28], vec![0.18, 0.42]]).unwrap();
        let c = sweep_frontier(&j, 2, &log_spaced(0.5, 50.0, 8), 3, SweepOptions::default()).unwrap();
        assert!(c.points.iter().all(|p| p.relevance < 1e-9));
    }

    #[test]
    fn schedule_validation() {
        let j = JointTable::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let o = SweepOptions::default();
        assert!(sweep_frontier(&j, 2, &[], 0, o).is_err());
        assert!(sweep_frontier(&j, 2, &[2.0, 1.0], 0, o).is_err());
        assert!(sweep_frontier(&j, 2, &[0.0, 1.0], 0, o).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let j = JointTable::new(vec![vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap();
        let c = sweep_frontier(&j, 2, &[1.0, 10.0], 0, SweepOptions::default()).unwrap();
        let s = c.to_csv_string();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "beta,rate_bits,relevance_bits,epsilon_ib,converged");
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn sequential_and_parallel_sweeps_agree() {
        let j = JointTable::new(vec![vec![0.2, 0.05], vec![0.1, 0.15], vec![0.05, 0.2], vec![0.15, 0.1]]).unwrap();
        let seq = SweepOptions {
            execution: Execution::Sequential,
            ..SweepOptions::default()
        };
        let par = SweepOptions {
            execution: Execution::Parallel,
            ..SweepOptions::default()
        };
        let betas = log_spaced(0.5, 20.0, 6);
        assert_eq!(
            sweep_frontier(&j, 2, &betas, 4, seq).unwrap(),
            sweep_frontier(&j, 2, &betas, 4, par).unwrap()
        );
    }
}
