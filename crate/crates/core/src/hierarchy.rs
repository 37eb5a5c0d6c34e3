//! Stacked encoders `X = Z0 -> Z1 -> ... -> ZL` and their per-layer efficiency.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exec::Execution;
use crate::ib::{encoder_information, ib_fixed_point, IBPoint, IbOptions, DEFAULT_RESTARTS};
use crate::info::{mutual_information, Channel, JointTable};
use crate::seed;

pub const DEFAULT_LAYER_BETA: f64 = 10.0;

/// `DEFAULT_LAYER_BETA / 2^l` for each layer.
pub fn default_layer_betas(depth: usize) -> Vec<f64> {
    (0..depth).map(|l| DEFAULT_LAYER_BETA / (1u64 << l) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    /// `encoders[l]` maps `Z_l` to `Z_{l+1}`.
    pub encoders: Vec<Channel>,
    pub source: JointTable,
}

/// Rate and relevance of one layer, bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerInfo {
    pub layer: usize,
    pub rate_bits: f64,
    pub relevance_bits: f64,
    pub epsilon_ib: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalEfficiency {
    pub product: f64,
    pub direct: f64,
    /// `product / direct`; `NaN` when `direct` is 0.
    pub ratio: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den < crate::ib::ZERO_RATE {
        0.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

impl LayerStack {
    pub fn new(encoders: Vec<Channel>, source: JointTable) -> Result<Self> {
        let mut n = source.nx();
        for (l, e) in encoders.iter().enumerate() {
            if e.n_in() != n {
                return Err(LabError::usage(format!(
                    "layer {l} expects {} inputs but the layer below emits {n}",
                    e.n_in()
                )));
            }
            n = e.n_out();
        }
        Ok(LayerStack { encoders, source })
    }

    pub fn depth(&self) -> usize {
        self.encoders.len()
    }

    /// Joints `p(z_l, y)` for `l = 0..=depth`.
    pub fn joints(&self) -> Result<Vec<JointTable>> {
        let mut out = Vec::with_capacity(self.encoders.len() + 1);
        out.push(self.source.clone());
        for e in &self.encoders {
            let next = out.last().expect("nonempty").push_rows(e)?;
            out.push(next);
        }
        Ok(out)
    }

    /// End-to-end channel `X -> Z_L`.
    pub fn composed(&self) -> Result<Channel> {
        let mut c = Channel::identity(self.source.nx());
        for e in &self.encoders {
            c = c.then(e)?;
        }
        Ok(c)
    }

    pub fn layers(&self) -> Result<Vec<LayerInfo>> {
        let joints = self.joints()?;
        self.encoders
            .iter()
            .enumerate()
            .map(|(l, e)| {
                let (rate, rel) = encoder_information(e, &joints[l])?;
                Ok(LayerInfo {
                    layer: l,
                    rate_bits: rate,
                    relevance_bits: rel,
                    epsilon_ib: ratio(rel, rate),
                })
            })
            .collect()
    }

    /// Columns `layer, rate_bits, relevance_bits, epsilon_ib`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| LabError::io("<layers>", e);
        writeln!(w, "layer,rate_bits,relevance_bits,epsilon_ib").map_err(io)?;
        for r in self.layers()? {
            writeln!(w, "{},{},{},{}", r.layer, r.rate_bits, r.relevance_bits, r.epsilon_ib).map_err(io)?;
        }
        Ok(())
    }
}

/// `I(Z_{l+1};Y) / I(Z_l;Z_{l+1})` for layer `l`, 0 for a zero-rate layer.
pub fn layer_efficiency(stack: &LayerStack, l: usize) -> Result<f64> {
    if l >= stack.depth() {
        return Err(LabError::usage(format!("layer {l} out of range for depth {}", stack.depth())));
    }
    let mut j = stack.source.clone();
    for e in &stack.encoders[..l] {
        j = j.push_rows(e)?;
    }
    let (rate, rel) = encoder_information(&stack.encoders[l], &j)?;
    Ok(ratio(rel, rate))
}

/// Product of per-layer efficiencies beside the direct `X -> Z_L` efficiency.
pub fn total_efficiency(stack: &LayerStack) -> Result<TotalEfficiency> {
    if stack.depth() == 0 {
        return Err(LabError::usage("stack has no layers"));
    }
    let product = stack.layers()?.iter().map(|l| l.epsilon_ib).product();
    let end = stack.composed()?;
    let xz = JointTable::from_marginal_channel(&stack.source.px(), &end)?;
    let zy = stack.source.push_rows(&end)?;
    let direct = ratio(mutual_information(&zy), mutual_information(&xz));
    let ratio = if direct > 0.0 { product / direct } else { f64::NAN };
    Ok(TotalEfficiency { product, direct, ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackOptions {
    pub restarts: usize,
    pub ib: IbOptions,
    pub execution: Execution,
}

impl Default for StackOptions {
    fn default() -> Self {
        StackOptions {
            restarts: DEFAULT_RESTARTS,
            ib: IbOptions::default(),
            execution: Execution::default(),
        }
    }
}

/// Result of [`optimize_stack`]: the stack plus the solver point per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedStack {
    pub stack: LayerStack,
    pub points: Vec<IBPoint>,
}

fn better(a: &IBPoint, b: &IBPoint) -> bool {
    if a.converged != b.converged {
        return a.converged;
    }
    let (oa, ob) = (a.objective(), b.objective());
    if (oa - ob).abs() > 1e-12 {
        return oa > ob;
    }
    a.rate < b.rate
}

/// Greedy bottom-up optimisation: layer `l` is solved against `p(z_l, y)` with
/// every lower layer frozen. Layer `l`, restart `r` uses seed `derive(seed, [l, r])`.
pub fn optimize_stack(
    source: &JointTable,
    layer_sizes: &[usize],
    beta_per_layer: &[f64],
    seed: u64,
    opts: StackOptions,
) -> Result<OptimizedStack> {
    if layer_sizes.is_empty() {
        return Err(LabError::usage("layer_sizes is empty"));
    }
    if layer_sizes.len() != beta_per_layer.len() {
        return Err(LabError::usage(format!(
            "{} layer sizes but {} betas",
            layer_sizes.len(),
            beta_per_layer.len()
        )));
    }
    if layer_sizes.windows(2).any(|w| w[1] > w[0]) {
        return Err(LabError::usage("layer sizes must be nonincreasing"));
    }
    if opts.restarts == 0 {
        return Err(LabError::usage("restarts must be at least 1"));
    }
    let mut joint = source.clone();
    let mut encoders = Vec::with_capacity(layer_sizes.len());
    let mut points = Vec::with_capacity(layer_sizes.len());
    for (l, (&size, &beta)) in layer_sizes.iter().zip(beta_per_layer).enumerate() {
        let runs = opts.execution.map(opts.restarts, |r| {
            ib_fixed_point(&joint, size, beta, seed::derive(seed, &[l as u64, r as u64]), opts.ib)
        });
        let mut best: Option<(Channel, IBPoint)> = None;
        for run in runs {
            let (enc, p) = run?;
            if best.as_ref().is_none_or(|(_, b)| better(&p, b)) {
                best = Some((enc, p));
            }
        }
        let (enc, p) = best.expect("restarts >= 1");
        joint = joint.push_rows(&enc)?;
        encoders.push(enc);
        points.push(p);
    }
    Ok(OptimizedStack {
        stack: LayerStack::new(encoders, source.clone())?,
        points,
    })
}

/// `true` when every layer is strictly more efficient than the one below.
pub fn strictly_increasing(eps: &[f64]) -> bool {
    eps.windows(2).all(|w| w[1] > w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::gen_hierarchical;
    use crate::info::entropy;

    fn hier() -> JointTable {
        gen_hierarchical(3, 1.0, 0.1, 10, 0).unwrap().1
    }

    #[test]
    fn identity_layer_rate_is_entropy() {
        let j = hier();
        let s = LayerStack::new(vec![Channel::identity(j.nx())], j.clone()).unwrap();
        let e = layer_efficiency(&s, 0).unwrap();
        let oracle = mutual_information(&j) / entropy(&j.px()).unwrap();
        assert!((e - oracle).abs() < 1e-12);
        let t = total_efficiency(&s).unwrap();
        assert!((t.product - t.direct).abs() < 1e-12);
    }

    #[test]
    fn constant_layer_is_zero() {
        let j = hier();
        let s = LayerStack::new(vec![Channel::constant(j.nx(), 4, 0)], j).unwrap();
        assert_eq!(layer_efficiency(&s, 0).unwrap(), 0.0);
    }

    #[test]
    fn lossless_stack_direct_efficiency() {
        let j = hier();
        let perm: Vec<usize> = (0..16).rev().collect();
        let s = LayerStack::new(
            vec![Channel::deterministic(&perm, 16).unwrap(), Channel::identity(16)],
            j.clone(),
        )
        .unwrap();
        let t = total_efficiency(&s).unwrap();
        let oracle = mutual_information(&j) / entropy(&j.px()).unwrap();
        assert!((t.direct - oracle).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let j = hier();
        assert!(LayerStack::new(vec![Channel::identity(3)], j).is_err());
    }

    #[test]
    fn optimized_stack_gradient_and_dpi() {
        let j = hier();
        let o = optimize_stack(&j, &[8, 4, 2], &default_layer_betas(3), 1, StackOptions::default()).unwrap();
        let layers = o.stack.layers().unwrap();
        let eps: Vec<f64> = layers.iter().map(|l| l.epsilon_ib).collect();
        assert!(strictly_increasing(&eps), "{eps:?}");
        let joints = o.stack.joints().unwrap();
        for w in joints.windows(2) {
            assert!(mutual_information(&w[1]) <= mutual_information(&w[0]) + 1e-9);
        }
        let t = total_efficiency(&o.stack).unwrap();
        assert!(t.ratio > 0.0 && t.ratio <= 2.0, "{t:?}");
    }

    #[test]
    fn constant_beta_keeps_lower_layers_level() {
        let j = hier();
        let o = optimize_stack(&j, &[8, 4, 2], &[DEFAULT_LAYER_BETA; 3], 1, StackOptions::default()).unwrap();
        let l = o.stack.layers().unwrap();
        assert!((l[0].epsilon_ib - l[1].epsilon_ib).abs() < 0.02);
    }

    #[test]
    fn zero_beta_gives_zero_efficiency() {
        let j = hier();
        let o = optimize_stack(&j, &[8, 4, 2], &[0.0; 3], 1, StackOptions::default()).unwrap();
        assert!(o.stack.layers().unwrap().iter().all(|l| l.epsilon_ib == 0.0));
    }

    #[test]
    fn single_flat_layer_matches_solver() {
        let j = hier();
        let o = optimize_stack(&j, &[16], &[100.0], 3, StackOptions::default()).unwrap();
        assert!((o.points[0].relevance - mutual_information(&j)).abs() < 1e-3);
    }
}
