use serde::{Deserialize, Serialize};

use super::frontier::FrontierCurve;
use super::solver::ratio;
use crate::error::{LabError, Result};
use crate::info::{mutual_information, Channel, JointTable};

/// `(I(X;Z), I(Z;Y))` in bits for an encoder applied to the rows of `j`.
pub fn encoder_information(encoder: &Channel, j: &JointTable) -> Result<(f64, f64)> {
    if encoder.n_in() != j.nx() {
        return Err(LabError::usage(format!(
            "encoder input size {} does not match |X| = {}",
            encoder.n_in(),
            j.nx()
        )));
    }
    let xz = JointTable::from_marginal_channel(&j.px(), encoder)?;
    let zy = j.push_rows(encoder)?;
    Ok((mutual_information(&xz), mutual_information(&zy)))
}

/// `I(Z;Y) / I(X;Z)`, with 0 for encoders below the zero-rate threshold.
pub fn epsilon_ib(encoder: &Channel, j: &JointTable) -> Result<f64> {
    let (rate, rel) = encoder_information(encoder, j)?;
    Ok(ratio(rel, rate))
}

/// Excess distortion of an encoder over the frontier at the same rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdGap {
    /// `max(raw, 0)`, bits.
    pub gap: f64,
    /// Frontier relevance minus encoder relevance; negative when the encoder
    /// sits above the interpolated curve.
    pub raw: f64,
    pub encoder_rate: f64,
    pub encoder_relevance: f64,
    pub frontier_relevance: f64,
    /// Encoder rate exceeded the largest frontier rate.
    pub extrapolated: bool,
    pub above_frontier: bool,
}

/// Distortion is `I(X;Y) - I(Z;Y)`, so the gap reduces to the relevance the
/// frontier achieves at the encoder's rate minus the encoder's relevance.
pub fn rd_gap(encoder: &Channel, j: &JointTable, frontier: &FrontierCurve) -> Result<RdGap> {
    if frontier.converged_points().is_empty() {
        return Err(LabError::usage("frontier has no converged points"));
    }
    let ixy = mutual_information(j);
    if (ixy - frontier.source_ixy).abs() > 1e-9 {
        return Err(LabError::usage("frontier was computed for a different joint"));
    }
    let (rate, rel) = encoder_information(encoder, j)?;
    let (front, extrapolated) = frontier.relevance_at(rate);
    let raw = (ixy - rel) - (ixy - front);
    Ok(RdGap {
        gap: raw.max(0.0),
        raw,
        encoder_rate: rate,
        encoder_relevance: rel,
        frontier_relevance: front,
        extrapolated,
        above_frontier: raw < -1e-6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ib::{default_betas, sweep_frontier, SweepOptions};

    #[test]
    fn efficiency_examples() {
        let copy = JointTable::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert!((epsilon_ib(&Channel::identity(2), &copy).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(epsilon_ib(&Channel::constant(2, 3, 0), &copy).unwrap(), 0.0);
        let j = JointTable::new(vec![vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap();
        let oracle = mutual_information(&j) / 1.0;
        assert!((epsilon_ib(&Channel::identity(2), &j).unwrap() - oracle).abs() < 1e-12);
        assert!(epsilon_ib(&Channel::identity(3), &j).is_err());
    }

    #[test]
    fn gap_examples() {
        let j = JointTable::new(vec![
            vec![0.25, 0.02, 0.03],
            vec![0.03, 0.2, 0.02],
            vec![0.05, 0.05, 0.15],
            vec![0.08, 0.02, 0.1],
        ])
        .unwrap();
        let f = sweep_frontier(&j, 3, &default_betas(), 2, SweepOptions::default()).unwrap();
        for enc in &f.encoders {
            let g = rd_gap(enc, &j, &f).unwrap();
            assert!(g.gap < 1e-6, "{g:?}");
        }
        let g = rd_gap(&Channel::constant(4, 3, 1), &j, &f).unwrap();
        assert!(g.gap.abs() < 1e-9 && g.frontier_relevance.abs() < 1e-9);

        let best = f.encoders.last().unwrap();
        let garbled = best.mix(&Channel::uniform(4, 3), 0.3).unwrap();
        let g = rd_gap(&garbled, &j, &f).unwrap();
        assert!(g.gap > 0.0, "{g:?}");
    }
}
