use super::table::Channel;
use crate::env::SymbolStream;
use crate::error::{LabError, Result};

pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Average model surprise, in bits per step, over the last `horizon` symbols.
///
/// Row selection: the stream's own context when it carries one; otherwise the
/// previous symbol, or row 0 for a single-row (unconditional) predictor.
/// Zero probabilities are raised to `floor`; with `floor = None` they are a
/// coverage error.
pub fn epistemic_entropy_rate(
    predictor: &Channel,
    stream: &SymbolStream,
    horizon: usize,
    floor: Option<f64>,
) -> Result<f64> {
    let n = stream.len();
    if horizon == 0 {
        return Err(LabError::usage("horizon must be at least 1"));
    }
    if horizon > n {
        return Err(LabError::usage(format!("horizon {horizon} exceeds stream length {n}")));
    }
    if predictor.n_out() < stream.alphabet {
        return Err(LabError::ModelCoverage(format!(
            "predictor emits {} symbols, stream alphabet is {}",
            predictor.n_out(),
            stream.alphabet
        )));
    }
    let unconditional = predictor.n_in() == 1;
    let start = n - horizon;
    if stream.contexts.is_none() && !unconditional && start == 0 {
        return Err(LabError::usage(
            "previous-symbol contexts need horizon < stream length",
        ));
    }
    let mut total = 0.0;
    for i in start..n {
        let ctx = if unconditional {
            0
        } else if let Some(c) = &stream.contexts {
            c[i]
        } else {
            stream.symbols[i - 1]
        };
        if ctx >= predictor.n_in() {
            return Err(LabError::ModelCoverage(format!(
                "context {ctx} at step {i} has no predictor row"
            )));
        }
        let p = predictor.get(ctx, stream.symbols[i]);
        let p = match floor {
            Some(f) => p.max(f),
            None if p <= 0.0 => {
                return Err(LabError::ModelCoverage(format!(
                    "symbol {} has zero probability in context {ctx} at step {i}",
                    stream.symbols[i]
                )))
            }
            None => p,
        };
        total -= p.log2();
    }
    Ok(total / horizon as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(symbols: Vec<usize>, alphabet: usize) -> SymbolStream {
        SymbolStream::new(symbols, alphabet, None).unwrap()
    }

    #[test]
    fn perfect_and_uniform_predictors() {
        let s = stream(vec![1; 50], 2);
        let perfect = Channel::new(vec![vec![0.0, 1.0]]).unwrap();
        assert_eq!(epistemic_entropy_rate(&perfect, &s, 50, None).unwrap(), 0.0);
        let s = stream((0..64).map(|i| i % 4).collect(), 4);
        let uni = Channel::uniform(4, 4);
        assert!((epistemic_entropy_rate(&uni, &s, 60, None).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn floor_and_coverage() {
        let s = stream(vec![0, 1, 0, 1], 2);
        let wrong = Channel::new(vec![vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            epistemic_entropy_rate(&wrong, &s, 4, None),
            Err(LabError::ModelCoverage(_))
        ));
        let h = epistemic_entropy_rate(&wrong, &s, 4, Some(1e-12)).unwrap();
        assert!((h - 0.5 * -(1e-12f64).log2()).abs() < 1e-9);
        let s = SymbolStream::new(vec![0, 1], 2, Some((vec![0, 3], 4))).unwrap();
        assert!(matches!(
            epistemic_entropy_rate(&Channel::uniform(2, 2), &s, 2, Some(1e-12)),
            Err(LabError::ModelCoverage(_))
        ));
    }
}
