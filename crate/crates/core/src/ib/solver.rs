use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::info::{Channel, JointTable};
use crate::seed::{self, LabRng};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 5000;
pub const INIT_CONCENTRATION: f64 = 5.0;
/// Uniform weight mixed into [`partition_encoders`] starts.
pub const PARTITION_INIT_MIX: f64 = 0.2;
/// Below this rate an encoder carries no information and `epsilon_ib` is 0.
pub const ZERO_RATE: f64 = 1e-12;

/// One solution of the IB trade-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IBPoint {
    pub beta: f64,
    /// `I(X;Z)` in bits.
    pub rate: f64,
    /// `I(Z;Y)` in bits.
    pub relevance: f64,
    pub epsilon_ib: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl IBPoint {
    /// `relevance - rate / beta`; `-rate` at `beta = 0`.
    pub fn objective(&self) -> f64 {
        if self.beta > 0.0 {
            self.relevance - self.rate / self.beta
        } else {
            -self.rate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IbOptions {
    fn default() -> Self {
        IbOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

pub(crate) fn ratio(relevance: f64, rate: f64) -> f64 {
    if rate < ZERO_RATE {
        0.0
    } else {
        (relevance / rate).clamp(0.0, 1.0)
    }
}

/// Encoder rows drawn from a symmetric Dirichlet around uniform.
pub(crate) fn random_encoder(nx: usize, nz: usize, rng: &mut LabRng) -> Vec<f64> {
    let gamma = Gamma::new(INIT_CONCENTRATION, 1.0).expect("valid gamma");
    let mut q = Vec::with_capacity(nx * nz);
    for _ in 0..nx {
        let row: Vec<f64> = (0..nz).map(|_| gamma.sample(rng).max(1e-300)).collect();
        let s: f64 = row.iter().sum();
        q.extend(row.into_iter().map(|v| v / s));
    }
    q
}

/// One encoder per partition of `x` into at most `nz` blocks (up to relabelling),
/// each hard assignment blended with uniform. Empty when there are more than
/// `cap` partitions.
pub(crate) fn partition_encoders(nx: usize, nz: usize, cap: usize) -> Vec<Vec<f64>> {
    let mut labels = vec![0usize; nx];
    let mut out = Vec::new();
    fn walk(i: usize, used: usize, nz: usize, labels: &mut [usize], out: &mut Vec<Vec<usize>>, cap: usize) -> bool {
        if i == labels.len() {
            out.push(labels.to_vec());
            return out.len() <= cap;
        }
        for z in 0..(used + 1).min(nz) {
            labels[i] = z;
            if !walk(i + 1, used.max(z + 1), nz, labels, out, cap) {
                return false;
            }
        }
        true
    }
    if nx == 0 || !walk(0, 0, nz, &mut labels, &mut out, cap) {
        return Vec::new();
    }
    out.into_iter()
        .map(|assign| {
            let mut q = vec![PARTITION_INIT_MIX / nz as f64; nx * nz];
            for (x, z) in assign.into_iter().enumerate() {
                q[x * nz + z] += 1.0 - PARTITION_INIT_MIX;
            }
            q
        })
        .collect()
}

/// Precomputed pieces of the source joint reused across iterations.
pub(crate) struct Source {
    nx: usize,
    ny: usize,
    px: Vec<f64>,
    joint: Vec<f64>,
    /// `p(y|x) ln p(y|x)` summed over y, per x (negative conditional entropy, nats).
    neg_hyx: Vec<f64>,
    pyx: Vec<f64>,
}

impl Source {
    pub(crate) fn new(j: &JointTable) -> Self {
        let nx = j.nx();
        let ny = j.ny();
        let px = j.px();
        let mut pyx = vec![0.0; nx * ny];
        let mut neg_hyx = vec![0.0; nx];
        for x in 0..nx {
            for y in 0..ny {
                let v = if px[x] > 0.0 { j.get(x, y) / px[x] } else { 0.0 };
                pyx[x * ny + y] = v;
                if v > 0.0 {
                    neg_hyx[x] += v * v.ln();
                }
            }
        }
        Source {
            nx,
            ny,
            px,
            joint: j.as_slice().to_vec(),
            neg_hyx,
            pyx,
        }
    }
}

/// Returns `(rate, relevance)` in bits for encoder `q` (row-major `nx x nz`).
pub(crate) fn evaluate(src: &Source, q: &[f64], nz: usize) -> (f64, f64) {
    let (nx, ny) = (src.nx, src.ny);
    let mut qz = vec![0.0; nz];
    let mut pzy = vec![0.0; nz * ny];
    for x in 0..nx {
        let row = &q[x * nz..(x + 1) * nz];
        for z in 0..nz {
            let w = row[z];
            if w == 0.0 {
                continue;
            }
            qz[z] += src.px[x] * w;
            for y in 0..ny {
                pzy[z * ny + y] += w * src.joint[x * ny + y];
            }
        }
    }
    let mut rate = 0.0;
    for x in 0..nx {
        if src.px[x] == 0.0 {
            continue;
        }
        for z in 0..nz {
            let w = q[x * nz + z];
            if w > 0.0 && qz[z] > 0.0 {
                rate += src.px[x] * w * (w / qz[z]).log2();
            }
        }
    }
    let mut py = vec![0.0; ny];
    for x in 0..nx {
        for y in 0..ny {
            py[y] += src.joint[x * ny + y];
        }
    }
    let mut rel = 0.0;
    for z in 0..nz {
        for y in 0..ny {
            let v = pzy[z * ny + y];
            if v > 0.0 {
                rel += v * (v / (qz[z] * py[y])).log2();
            }
        }
    }
    (rate.max(0.0), rel.max(0.0))
}

/// Runs the self-consistent updates from `q` until the Lagrangian
/// `rate - beta * relevance` changes by less than `tol`.
pub(crate) fn iterate(src: &Source, mut q: Vec<f64>, nz: usize, beta: f64, opts: IbOptions) -> (Vec<f64>, IBPoint) {
    let (nx, ny) = (src.nx, src.ny);
    let mut qz = vec![0.0; nz];
    let mut qyz = vec![0.0; nz * ny];
    let mut ln_qyz = vec![0.0; nz * ny];
    let mut logits = vec![0.0; nz];
    let (mut rate, mut rel) = evaluate(src, &q, nz);
    let mut prev_f = rate - beta * rel;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        qz.iter_mut().for_each(|v| *v = 0.0);
        qyz.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..nx {
            for z in 0..nz {
                let w = q[x * nz + z];
                if w == 0.0 {
                    continue;
                }
                qz[z] += src.px[x] * w;
                for y in 0..ny {
                    qyz[z * ny + y] += w * src.joint[x * ny + y];
                }
            }
        }
        for z in 0..nz {
            for y in 0..ny {
                let i = z * ny + y;
                if qz[z] > 0.0 {
                    qyz[i] /= qz[z];
                }
                ln_qyz[i] = if qyz[i] > 0.0 { qyz[i].ln() } else { f64::NEG_INFINITY };
            }
        }
        for x in 0..nx {
            let mut best = f64::NEG_INFINITY;
            for z in 0..nz {
                logits[z] = if qz[z] <= 0.0 {
                    f64::NEG_INFINITY
                } else if beta == 0.0 {
                    qz[z].ln()
                } else {
                    // KL(p(y|x) || q(y|z)) in nats.
                    let mut cross = 0.0;
                    for y in 0..ny {
                        let p = src.pyx[x * ny + y];
                        if p > 0.0 {
                            cross += p * ln_qyz[z * ny + y];
                        }
                    }
                    let kl = src.neg_hyx[x] - cross;
                    qz[z].ln() - beta * kl
                };
                best = best.max(logits[z]);
            }
            let row = &mut q[x * nz..(x + 1) * nz];
            if best == f64::NEG_INFINITY {
                // Unreachable for a valid source: some cluster always covers x.
                row.iter_mut().for_each(|v| *v = 1.0 / nz as f64);
                continue;
            }
            let mut s = 0.0;
            for z in 0..nz {
                let v = (logits[z] - best).exp();
                row[z] = v;
                s += v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        (rate, rel) = evaluate(src, &q, nz);
        let f = rate - beta * rel;
        if (f - prev_f).abs() < opts.tol {
            converged = true;
            break;
        }
        prev_f = f;
    }
    let point = IBPoint {
        beta,
        rate,
        relevance: rel,
        epsilon_ib: ratio(rel, rate),
        iterations,
        converged,
    };
    (q, point)
}

pub(crate) fn to_channel(q: Vec<f64>, nz: usize) -> Channel {
    Channel::new(q.chunks(nz).map(<[f64]>::to_vec).collect()).expect("IB rows are normalised")
}

fn check_args(z_size: usize, beta: f64) -> Result<()> {
    if z_size == 0 {
        return Err(LabError::usage("z_size must be at least 1"));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(LabError::usage(format!("beta must be finite and nonnegative, got {beta}")));
    }
    Ok(())
}

/// One seeded run of the self-consistent IB iterations.
pub fn ib_fixed_point(
    j: &JointTable,
    z_size: usize,
    beta: f64,
    seed: u64,
    opts: IbOptions,
) -> Result<(Channel, IBPoint)> {
    check_args(z_size, beta)?;
    let src = Source::new(j);
    let mut rng = seed::rng(seed);
    let init = random_encoder(j.nx(), z_size, &mut rng);
    let (q, point) = iterate(&src, init, z_size, beta, opts);
    Ok((to_channel(q, z_size), point))
}

/// Runs the iterations from a caller-supplied starting encoder.
pub fn ib_from_encoder(j: &JointTable, init: &Channel, beta: f64, opts: IbOptions) -> Result<(Channel, IBPoint)> {
    check_args(init.n_out(), beta)?;
    if init.n_in() != j.nx() {
        return Err(LabError::usage(format!(
            "initial encoder input size {} does not match |X| = {}",
            init.n_in(),
            j.nx()
        )));
    }
    let src = Source::new(j);
    let q: Vec<f64> = init.rows().into_iter().flatten().collect();
    let (q, point) = iterate(&src, q, init.n_out(), beta, opts);
    Ok((to_channel(q, init.n_out()), point))
}

/// Convex mix of an encoder with fresh Dirichlet noise, used to restart from a
/// neighbouring solution without inheriting its dead clusters.
pub(crate) fn perturb(q: &[f64], nx: usize, nz: usize, weight: f64, rng: &mut LabRng) -> Vec<f64> {
    let noise = random_encoder(nx, nz, rng);
    let jitter: f64 = rng.random::<f64>() * 1e-3;
    q.iter()
        .zip(noise)
        .map(|(a, b)| (1.0 - weight - jitter) * a + (weight + jitter) * b)
        .collect()
}
