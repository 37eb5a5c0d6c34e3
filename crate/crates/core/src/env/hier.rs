use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stream::{GroundTruth, SymbolStream};
use crate::error::{LabError, Result};
use crate::info::JointTable;
use crate::seed;

pub const MAX_OBSERVED_ALPHABET: usize = 4096;

/// Flip probability shared by all levels or given per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Noise {
    Uniform(f64),
    PerLevel(Vec<f64>),
}

/// Tree of noisy binary copies. A uniform bit `Y` sits at the root; every
/// node passes its bit to `round(2^branch_entropy)` children through a binary
/// symmetric channel; the observed symbol packs the leaf bits (first leaf is
/// the most significant bit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hierarchical {
    pub levels: usize,
    pub branch_entropy: f64,
    /// `levels - 1` entries when given per level; entry 0 is the edge out of
    /// the root.
    pub noise: Noise,
    pub length: usize,
}

impl Default for Hierarchical {
    fn default() -> Self {
        Hierarchical {
            levels: 3,
            branch_entropy: 1.0,
            noise: Noise::Uniform(0.1),
            length: 10_000,
        }
    }
}

impl Hierarchical {
    pub fn fanout(&self) -> usize {
        2f64.powf(self.branch_entropy).round().max(1.0) as usize
    }

    fn noise_at(&self, edge: usize) -> f64 {
        match &self.noise {
            Noise::Uniform(v) => *v,
            Noise::PerLevel(v) => v[edge],
        }
    }

    /// Leaf count, or `None` when the observed alphabet would exceed the cap.
    fn leaves(&self) -> Option<usize> {
        let f = self.fanout();
        let mut leaves = 1usize;
        for _ in 1..self.levels {
            leaves = leaves.checked_mul(f)?;
            if leaves > 12 {
                return None;
            }
        }
        Some(leaves)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(LabError::Config(format!("levels must be at least 2, got {}", self.levels)));
        }
        if !(self.branch_entropy >= 0.0) || !self.branch_entropy.is_finite() {
            return Err(LabError::Config("branch_entropy must be a nonnegative number".into()));
        }
        let values: Vec<f64> = match &self.noise {
            Noise::Uniform(v) => vec![*v],
            Noise::PerLevel(v) => {
                if v.len() != self.levels - 1 {
                    return Err(LabError::Config(format!(
                        "noise needs {} per-level entries, got {}",
                        self.levels - 1,
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(LabError::Config("noise probabilities must lie in [0, 1]".into()));
        }
        if self.length == 0 {
            return Err(LabError::Config("length must be at least 1".into()));
        }
        if self.leaves().is_none() {
            return Err(LabError::Capacity(format!(
                "observed alphabet exceeds {MAX_OBSERVED_ALPHABET} symbols"
            )));
        }
        Ok(())
    }

    pub fn observed_alphabet(&self) -> Result<usize> {
        self.validate()?;
        Ok(1 << self.leaves().expect("validated"))
    }

    /// Distribution of the packed leaves under a node at `depth` holding `v`.
    fn leaves_given(&self, v: usize, depth: usize) -> Vec<f64> {
        if depth == self.levels - 1 {
            let mut d = vec![0.0; 2];
            d[v] = 1.0;
            return d;
        }
        let n = self.noise_at(depth);
        let sub: [Vec<f64>; 2] = [self.leaves_given(0, depth + 1), self.leaves_given(1, depth + 1)];
        let stay = if v == 0 { 1.0 - n } else { n };
        let child: Vec<f64> = sub[0]
            .iter()
            .zip(&sub[1])
            .map(|(a, b)| stay * a + (1.0 - stay) * b)
            .collect();
        let mut out = vec![1.0];
        for _ in 0..self.fanout() {
            let mut next = Vec::with_capacity(out.len() * child.len());
            for &a in &out {
                for &b in &child {
                    next.push(a * b);
                }
            }
            out = next;
        }
        out
    }

    /// Exact `p(x, y)` with `x` the packed leaves (rows) and `y` the root.
    pub fn joint(&self) -> Result<JointTable> {
        self.validate()?;
        let c0 = self.leaves_given(0, 0);
        let c1 = self.leaves_given(1, 0);
        let rows = c0.iter().zip(&c1).map(|(a, b)| vec![0.5 * a, 0.5 * b]).collect();
        JointTable::from_weights(rows)
    }

    fn sample_leaves(&self, v: usize, depth: usize, rng: &mut impl Rng, out: &mut usize) {
        if depth == self.levels - 1 {
            *out = (*out << 1) | v;
            return;
        }
        let n = self.noise_at(depth);
        for _ in 0..self.fanout() {
            let c = if rng.random::<f64>() < n { 1 - v } else { v };
            self.sample_leaves(c, depth + 1, rng, out);
        }
    }

    /// Sampled stream (symbols are packed leaves, contexts are the root bit)
    /// together with the exact `p(x, y)`.
    pub fn generate(&self, seed: u64) -> Result<(SymbolStream, JointTable)> {
        let joint = self.joint()?;
        let k = joint.nx();
        let mut rng = seed::rng(seed);
        let mut symbols = Vec::with_capacity(self.length);
        let mut contexts = Vec::with_capacity(self.length);
        for _ in 0..self.length {
            let y = rng.random_range(0..2);
            let mut x = 0usize;
            self.sample_leaves(y, 0, &mut rng, &mut x);
            symbols.push(x);
            contexts.push(y);
        }
        let yx = joint.transpose();
        let mut s = SymbolStream::new(symbols, k, Some((contexts, 2)))?;
        s.seed = seed;
        s.kind = "hierarchical".into();
        s.truth = Some(GroundTruth {
            emission: yx.y_given_x(),
            parent_freq: vec![0.5, 0.5],
            parents: None,
            observed_joint: yx,
        });
        Ok((s, joint))
    }
}

/// Hierarchical source with one noise level shared by every edge.
pub fn gen_hierarchical(
    levels: usize,
    branch_entropy: f64,
    noise: f64,
    length: usize,
    seed: u64,
) -> Result<(SymbolStream, JointTable)> {
    Hierarchical {
        levels,
        branch_entropy,
        noise: Noise::Uniform(noise),
        length,
    }
    .generate(seed)
    .map_err(|e| match e {
        LabError::Config(m) => LabError::Usage(m),
        other => other,
    })
}

/// Same tree with per-level noise.
pub fn gen_hierarchical_levels(
    levels: usize,
    branch_entropy: f64,
    noise: Vec<f64>,
    length: usize,
    seed: u64,
) -> Result<(SymbolStream, JointTable)> {
    Hierarchical {
        levels,
        branch_entropy,
        noise: Noise::PerLevel(noise),
        length,
    }
    .generate(seed)
}
