use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rule::{argmax, argmin};
use super::stream::{GroundTruth, SymbolStream};
use crate::error::{LabError, Result};
use crate::info::{Channel, JointTable};
use crate::seed::{self, LabRng};

/// Hidden-state kernels of a confounded chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confounder {
    /// `p(symbol_t | hidden_t)`.
    pub emission: Channel,
    /// `p(context_t | hidden_{t-1})`.
    pub lagged: Channel,
}

/// Stationary distribution via power iteration on the lazy chain `(P + I)/2`,
/// started from uniform.
pub fn stationary(transition: &Channel) -> Vec<f64> {
    let n = transition.n_in();
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let next_raw = transition.apply(&v).expect("square kernel");
        let next: Vec<f64> = v.iter().zip(&next_raw).map(|(a, b)| 0.5 * (a + b)).collect();
        let diff: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if diff < 1e-15 {
            break;
        }
    }
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn sample(row: &[f64], rng: &mut LabRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u beyond the cumulative sum; take the last positive entry.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Samples a Markov chain, optionally observed through a hidden confounder.
///
/// Plain: the initial state is drawn uniformly and emitted as the first
/// context; symbol `t` is the state after `t + 1` transitions and its context
/// is the preceding state. Confounded: `transition` drives a hidden chain
/// started from its stationary law; the symbol at `t` is emitted from hidden
/// state `h_t` and the context from `h_{t-1}`, so contexts and symbols are
/// correlated only through the hidden chain. Hidden states are recorded as
/// the ground-truth parents.
pub fn gen_markov(transition: &Channel, length: usize, seed: u64, confounder: Option<&Confounder>) -> Result<SymbolStream> {
    let n = transition.n_in();
    if transition.n_out() != n {
        return Err(LabError::usage(format!(
            "transition must be square, got {}x{}",
            n,
            transition.n_out()
        )));
    }
    if length == 0 {
        return Err(LabError::usage("length must be at least 1"));
    }
    let mut rng = seed::rng(seed);
    let pi = stationary(transition);
    match confounder {
        None => {
            let mut state = rng.random_range(0..n);
            let mut symbols = Vec::with_capacity(length);
            let mut contexts = Vec::with_capacity(length);
            for _ in 0..length {
                contexts.push(state);
                state = sample(transition.row(state), &mut rng);
                symbols.push(state);
            }
            let mut s = SymbolStream::new(symbols, n, Some((contexts, n)))?;
            s.seed = seed;
            s.kind = "markov_plain".into();
            s.truth = Some(GroundTruth {
                emission: transition.clone(),
                parent_freq: pi.clone(),
                parents: None,
                observed_joint: JointTable::from_marginal_channel(&pi, transition)?,
            });
            Ok(s)
        }
        Some(cf) => {
            if cf.emission.n_in() != n || cf.lagged.n_in() != n {
                return Err(LabError::usage("confounder kernels must take the hidden state as input"));
            }
            let k = cf.emission.n_out();
            let m = cf.lagged.n_out();
            let mut prev = sample(&pi, &mut rng);
            let mut symbols = Vec::with_capacity(length);
            let mut contexts = Vec::with_capacity(length);
            let mut parents = Vec::with_capacity(length);
            for _ in 0..length {
                let h = sample(transition.row(prev), &mut rng);
                contexts.push(sample(cf.lagged.row(prev), &mut rng));
                symbols.push(sample(cf.emission.row(h), &mut rng));
                parents.push(h);
                prev = h;
            }
            let mut rows = vec![vec![0.0; k]; m];
            for hp in 0..n {
                for (w, row) in rows.iter_mut().enumerate() {
                    let a = pi[hp] * cf.lagged.get(hp, w);
                    for h in 0..n {
                        let b = a * transition.get(hp, h);
                        for (x, cell) in row.iter_mut().enumerate() {
                            *cell += b * cf.emission.get(h, x);
                        }
                    }
                }
            }
            let mut s = SymbolStream::new(symbols, k, Some((contexts, m)))?;
            s.seed = seed;
            s.kind = "markov_confounded".into();
            s.truth = Some(GroundTruth {
                emission: cf.emission.clone(),
                parent_freq: pi,
                parents: Some(parents),
                observed_joint: JointTable::from_weights(rows)?,
            });
            Ok(s)
        }
    }
}

/// Noisy cycle: from state `i` move to `i + 1 (mod K)` with probability
/// `advance`, otherwise to any other state uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkovPlain {
    pub states: usize,
    pub advance: f64,
    /// Explicit kernel; overrides `states` and `advance`.
    pub transition: Option<Vec<Vec<f64>>>,
    pub length: usize,
}

impl Default for MarkovPlain {
    fn default() -> Self {
        MarkovPlain {
            states: 8,
            advance: 0.9,
            transition: None,
            length: 10_000,
        }
    }
}

impl MarkovPlain {
    pub fn kernel(&self) -> Result<Channel> {
        if let Some(rows) = &self.transition {
            let c = Channel::new(rows.clone()).map_err(|e| LabError::Config(e.to_string()))?;
            if c.n_in() != c.n_out() {
                return Err(LabError::Config("transition must be square".into()));
            }
            return Ok(c);
        }
        let k = self.states;
        if k < 2 {
            return Err(LabError::Config(format!("states must be at least 2, got {k}")));
        }
        if !(0.0..=1.0).contains(&self.advance) {
            return Err(LabError::Config(format!("advance = {} not in [0, 1]", self.advance)));
        }
        let off = (1.0 - self.advance) / (k - 1) as f64;
        let rows = (0..k)
            .map(|i| (0..k).map(|j| if j == (i + 1) % k { self.advance } else { off }).collect())
            .collect();
        Channel::new(rows).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel()?;
        if self.length == 0 {
            return Err(LabError::Config("length must be at least 1".into()));
        }
        Ok(())
    }

    /// Relabels the most and least frequent states. A chain with a uniform
    /// stationary law is returned unchanged.
    pub fn shifted(&self) -> Result<MarkovPlain> {
        let p = self.kernel()?;
        let pi = stationary(&p);
        let (a, b) = (argmax(&pi).unwrap_or(0), argmin(&pi).unwrap_or(0));
        let perm = |i: usize| if i == a { b } else if i == b { a } else { i };
        let n = p.n_in();
        let rows = (0..n).map(|i| (0..n).map(|j| p.get(perm(i), perm(j))).collect()).collect();
        Ok(MarkovPlain {
            transition: Some(rows),
            ..self.clone()
        })
    }

    pub fn generate(&self, seed: u64) -> Result<SymbolStream> {
        self.validate()?;
        gen_markov(&self.kernel()?, self.length, seed, None)
    }
}

/// Two-state hidden chain observed through a binary symbol and a binary
/// lagged correlate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkovConfounded {
    /// `P(h_t = 1 | h_{t-1} = 0)`.
    pub flip_01: f64,
    /// `P(h_t = 0 | h_{t-1} = 1)`.
    pub flip_10: f64,
    /// `P(symbol = h)`.
    pub emission_fidelity: f64,
    /// `P(context = h_{t-1})`.
    pub lag_fidelity: f64,
    pub length: usize,
}

impl Default for MarkovConfounded {
    fn default() -> Self {
        MarkovConfounded {
            flip_01: 0.1,
            flip_10: 0.2,
            emission_fidelity: 0.85,
            lag_fidelity: 0.85,
            length: 10_000,
        }
    }
}

fn binary(fidelity: f64) -> Channel {
    Channel::new(vec![vec![fidelity, 1.0 - fidelity], vec![1.0 - fidelity, fidelity]]).expect("stochastic")
}

impl MarkovConfounded {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("flip_01", self.flip_01),
            ("flip_10", self.flip_10),
            ("emission_fidelity", self.emission_fidelity),
            ("lag_fidelity", self.lag_fidelity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(LabError::Config(format!("{name} = {v} not in [0, 1]")));
            }
        }
        if self.flip_01 + self.flip_10 <= 0.0 {
            return Err(LabError::Config("hidden chain must be able to move".into()));
        }
        if self.length == 0 {
            return Err(LabError::Config("length must be at least 1".into()));
        }
        Ok(())
    }

    pub fn transition(&self) -> Channel {
        Channel::new(vec![
            vec![1.0 - self.flip_01, self.flip_01],
            vec![self.flip_10, 1.0 - self.flip_10],
        ])
        .expect("stochastic")
    }

    pub fn confounder(&self) -> Confounder {
        Confounder {
            emission: binary(self.emission_fidelity),
            lagged: binary(self.lag_fidelity),
        }
    }

    /// Swaps the hidden chain's stationary frequencies.
    pub fn shifted(&self) -> MarkovConfounded {
        MarkovConfounded {
            flip_01: self.flip_10,
            flip_10: self.flip_01,
            ..self.clone()
        }
    }

    pub fn generate(&self, seed: u64) -> Result<SymbolStream> {
        self.validate()?;
        gen_markov(&self.transition(), self.length, seed, Some(&self.confounder()))
    }
}

/// Pearson correlation between context and symbol under `p(context, symbol)`,
/// treating both as numeric indices.
pub fn lag_correlation(joint: &JointTable) -> f64 {
    let px = joint.px();
    let py = joint.py();
    let mean = |p: &[f64]| p.iter().enumerate().map(|(i, v)| i as f64 * v).sum::<f64>();
    let (mx, my) = (mean(&px), mean(&py));
    let var = |p: &[f64], m: f64| p.iter().enumerate().map(|(i, v)| (i as f64 - m).powi(2) * v).sum::<f64>();
    let mut cov = 0.0;
    for x in 0..joint.nx() {
        for y in 0..joint.ny() {
            cov += (x as f64 - mx) * (y as f64 - my) * joint.get(x, y);
        }
    }
    let d = (var(&px, mx) * var(&py, my)).sqrt();
    if d > 0.0 {
        cov / d
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::pearson;

    #[test]
    fn identity_chain_is_constant() {
        let s = gen_markov(&Channel::identity(3), 200, 5, None).unwrap();
        assert!(s.symbols.iter().all(|&x| x == s.symbols[0]));
    }

    #[test]
    fn doubly_stochastic_frequencies() {
        let p = Channel::new(vec![vec![0.3, 0.7], vec![0.7, 0.3]]).unwrap();
        let pi = stationary(&p);
        let s = gen_markov(&p, 100_000, 8, None).unwrap();
        let f1 = s.symbols.iter().filter(|&&x| x == 1).count() as f64 / 1e5;
        assert!((f1 - pi[1]).abs() < 0.01);
        assert!((pi[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_square_is_rejected() {
        let p = Channel::new(vec![vec![0.5, 0.5, 0.0], vec![0.2, 0.3, 0.5]]).unwrap();
        assert!(matches!(gen_markov(&p, 10, 0, None), Err(LabError::Usage(_))));
    }

    #[test]
    fn confounded_correlation_matches_oracle() {
        let env = MarkovConfounded::default();
        let s = env.generate(3).unwrap();
        let truth = s.truth.as_ref().unwrap();
        // Independent oracle: sum over (h_{t-1}, h_t) by hand for the binary case.
        let (a, b, e, f) = (env.flip_01, env.flip_10, env.emission_fidelity, env.lag_fidelity);
        let pi = [b / (a + b), a / (a + b)];
        let trans = [[1.0 - a, a], [b, 1.0 - b]];
        let bin = |fid: f64, i: usize, j: usize| if i == j { fid } else { 1.0 - fid };
        for w in 0..2 {
            for x in 0..2 {
                let mut p = 0.0;
                for hp in 0..2 {
                    for h in 0..2 {
                        p += pi[hp] * bin(f, hp, w) * trans[hp][h] * bin(e, h, x);
                    }
                }
                assert!((truth.observed_joint.get(w, x) - p).abs() < 1e-12);
            }
        }
        let rho = lag_correlation(&truth.observed_joint);
        assert!(rho > 0.2, "{rho}");
        let ctx: Vec<f64> = s.contexts.as_ref().unwrap().iter().map(|&v| v as f64).collect();
        let sym: Vec<f64> = s.symbols.iter().map(|&v| v as f64).collect();
        let emp = pearson(&ctx, &sym).unwrap();
        assert!((emp - rho).abs() < 0.05, "{emp} vs {rho}");
        // No direct effect: the symbol's law given its hidden parent ignores the context.
        let parents = truth.parents.as_ref().unwrap();
        for h in 0..2 {
            for w in 0..2 {
                let idx: Vec<usize> = (0..s.len())
                    .filter(|&i| parents[i] == h && s.context(i) == w)
                    .collect();
                let ones = idx.iter().filter(|&&i| s.symbols[i] == 1).count() as f64 / idx.len() as f64;
                assert!((ones - truth.emission.get(h, 1)).abs() < 0.05);
            }
        }
    }

    #[test]
    fn shifted_confounded_swaps_stationary() {
        let env = MarkovConfounded::default();
        let a = stationary(&env.transition());
        let b = stationary(&env.shifted().transition());
        assert!((a[0] - b[1]).abs() < 1e-12);
    }
}
