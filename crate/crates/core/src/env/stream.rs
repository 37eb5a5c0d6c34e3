use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::info::{Channel, JointTable};

/// Exact generative structure behind a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `p(symbol | parent)` where the parent is the true causal context.
    pub emission: Channel,
    /// Stationary (or cycle) frequency of each parent value.
    pub parent_freq: Vec<f64>,
    /// Per-step parent values when they differ from the observable contexts
    /// (hidden states of a confounded chain); `None` means the observable
    /// context is the parent.
    pub parents: Option<Vec<usize>>,
    /// Stationary `p(context, symbol)` over the observable context.
    pub observed_joint: JointTable,
}

impl GroundTruth {
    pub fn parent_count(&self) -> usize {
        self.emission.n_in()
    }

    /// `p(symbol | observable context)`.
    pub fn observed_conditional(&self) -> Channel {
        self.observed_joint.y_given_x()
    }

    pub fn observed_context_freq(&self) -> Vec<f64> {
        self.observed_joint.px()
    }
}

/// A sampled symbol sequence with optional aligned contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolStream {
    pub symbols: Vec<usize>,
    pub alphabet: usize,
    pub contexts: Option<Vec<usize>>,
    /// Number of distinct context values; 0 without contexts.
    pub context_count: usize,
    pub seed: u64,
    pub kind: String,
    pub truth: Option<GroundTruth>,
}

impl SymbolStream {
    /// Validates alignment and ranges. `contexts` is `(values, count)`.
    pub fn new(symbols: Vec<usize>, alphabet: usize, contexts: Option<(Vec<usize>, usize)>) -> Result<Self> {
        if alphabet == 0 {
            return Err(LabError::usage("alphabet must be at least 1"));
        }
        if let Some((i, s)) = symbols.iter().enumerate().find(|(_, &s)| s >= alphabet) {
            return Err(LabError::usage(format!("symbol {s} at position {i} outside alphabet {alphabet}")));
        }
        let (contexts, context_count) = match contexts {
            None => (None, 0),
            Some((c, n)) => {
                if c.len() != symbols.len() {
                    return Err(LabError::usage(format!(
                        "{} contexts for {} symbols",
                        c.len(),
                        symbols.len()
                    )));
                }
                if let Some((i, v)) = c.iter().enumerate().find(|(_, &v)| v >= n) {
                    return Err(LabError::usage(format!("context {v} at position {i} outside count {n}")));
                }
                (Some(c), n)
            }
        };
        Ok(SymbolStream {
            symbols,
            alphabet,
            contexts,
            context_count,
            seed: 0,
            kind: "custom".into(),
            truth: None,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Context of step `i`, or 0 for context-free streams.
    pub fn context(&self, i: usize) -> usize {
        self.contexts.as_ref().map_or(0, |c| c[i])
    }

    /// Parent of step `i` under the ground truth, falling back to the context.
    pub fn parent(&self, i: usize) -> usize {
        match self.truth.as_ref().and_then(|t| t.parents.as_ref()) {
            Some(p) => p[i],
            None => self.context(i),
        }
    }

    /// Count of parent values (at least 1).
    pub fn parent_count(&self) -> usize {
        match &self.truth {
            Some(t) => t.parent_count(),
            None => self.context_count.max(1),
        }
    }

    /// Text form: a `#alphabet=K contexts=C seed=S kind=...` header, an
    /// optional `#truth=<json>` line, then `symbol` or `symbol context` rows.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| LabError::io("<stream>", e);
        writeln!(
            w,
            "#alphabet={} contexts={} seed={} kind={}",
            self.alphabet, self.context_count, self.seed, self.kind
        )
        .map_err(io)?;
        if let Some(t) = &self.truth {
            writeln!(w, "#truth={}", serde_json::to_string(t)?).map_err(io)?;
        }
        let mut line = String::new();
        for i in 0..self.symbols.len() {
            line.clear();
            match &self.contexts {
                Some(c) => write!(line, "{} {}", self.symbols[i], c[i]),
                None => write!(line, "{}", self.symbols[i]),
            }
            .expect("formatting into a String");
            writeln!(w, "{line}").map_err(io)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| LabError::Parse("empty stream file".into()))?
            .map_err(|e| LabError::io("<stream>", e))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| LabError::Parse("stream header must start with '#'".into()))?;
        let (mut alphabet, mut context_count, mut seed, mut kind) = (None, 0usize, 0u64, String::from("custom"));
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| LabError::Parse(format!("bad header field {field:?}")))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| LabError::Parse(format!("bad value for {k}: {v:?}")));
            match k {
                "alphabet" => alphabet = Some(num(v)? as usize),
                "contexts" => context_count = num(v)? as usize,
                "seed" => seed = num(v)?,
                "kind" => kind = v.to_string(),
                _ => {}
            }
        }
        let alphabet = alphabet.ok_or_else(|| LabError::Parse("header lacks alphabet".into()))?;
        let mut truth = None;
        let mut symbols = Vec::new();
        let mut contexts = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| LabError::io("<stream>", e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#truth=") {
                truth = Some(serde_json::from_str(rest)?);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| LabError::Parse(format!("line {}: bad integer {s:?}", n + 2)))
            };
            symbols.push(parse(it.next().expect("nonempty line"))?);
            if let Some(c) = it.next() {
                contexts.push(parse(c)?);
            }
        }
        let ctx = if contexts.is_empty() {
            None
        } else if contexts.len() == symbols.len() {
            Some((contexts, context_count))
        } else {
            return Err(LabError::Parse("some rows carry a context and some do not".into()));
        };
        let mut s = SymbolStream::new(symbols, alphabet, ctx).map_err(|e| LabError::Parse(e.to_string()))?;
        s.seed = seed;
        s.kind = kind;
        s.truth = truth;
        Ok(s)
    }
}
