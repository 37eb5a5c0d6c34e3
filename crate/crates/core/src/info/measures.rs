use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::table::{validate_probability_vector, JointTable};
use crate::error::{LabError, Result};

/// `-p log2 p` with `0 log 0 = 0`.
#[inline]
pub(crate) fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy in bits of a probability vector.
pub fn entropy(p: &[f64]) -> Result<f64> {
    validate_probability_vector(p)?;
    Ok(p.iter().map(|&v| plogp(v)).sum::<f64>().max(0.0))
}

/// Entropy of an already validated vector; skips the checks.
pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    p.iter().map(|&v| plogp(v)).sum::<f64>().max(0.0)
}

pub fn joint_entropy(j: &JointTable) -> f64 {
    entropy_unchecked(j.as_slice())
}

/// `I(X;Y)` in bits, clamped at zero against rounding.
pub fn mutual_information(j: &JointTable) -> f64 {
    let px = j.px();
    let py = j.py();
    let mut acc = 0.0;
    for (x, &pxv) in px.iter().enumerate() {
        for (y, &pyv) in py.iter().enumerate() {
            let pxy = j.get(x, y);
            if pxy > 0.0 {
                acc += pxy * (pxy / (pxv * pyv)).log2();
            }
        }
    }
    acc.max(0.0)
}

/// Which variable of a joint table is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Rows.
    X,
    /// Columns.
    Y,
}

impl FromStr for Axis {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" | "row" | "rows" | "0" => Ok(Axis::X),
            "y" | "col" | "cols" | "column" | "1" => Ok(Axis::Y),
            other => Err(LabError::usage(format!("unknown axis {other:?}; expected x or y"))),
        }
    }
}

/// Entropy of the other variable given `given`: `H(X|Y)` for `Axis::Y`,
/// `H(Y|X)` for `Axis::X`.
pub fn conditional_entropy(j: &JointTable, given: Axis) -> f64 {
    let h_joint = joint_entropy(j);
    let h_given = match given {
        Axis::X => entropy_unchecked(&j.px()),
        Axis::Y => entropy_unchecked(&j.py()),
    };
    (h_joint - h_given).max(0.0)
}

/// KL divergence `D(p || q)` in bits; infinite when `q` misses support of `p`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            acc += a * (a / b).log2();
        }
    }
    acc.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: Vec<Vec<f64>>) -> JointTable {
        JointTable::new(rows).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]).unwrap(), 0.0);
        let direct = -(2.0 * 0.4 * 0.4f64.log2() + 2.0 * 0.1 * 0.1f64.log2());
        let h = entropy(&[0.4, 0.1, 0.1, 0.4]).unwrap();
        assert!((h - direct).abs() < 1e-12);
        assert!((h - 1.7219).abs() < 1e-4);
        assert!(matches!(entropy(&[0.6, 0.6]), Err(LabError::Distribution(_))));
        assert!(matches!(entropy(&[-0.5, 1.5]), Err(LabError::Distribution(_))));
    }

    #[test]
    fn mutual_information_examples() {
        assert!((mutual_information(&t(vec![vec![0.5, 0.0], vec![0.0, 0.5]])) - 1.0).abs() < 1e-12);
        assert!(mutual_information(&t(vec![vec![0.25, 0.25], vec![0.25, 0.25]])).abs() < 1e-12);
        // Binary symmetric channel with crossover 0.2: 1 - h(0.2).
        let h02 = -(0.2f64 * 0.2f64.log2() + 0.8 * 0.8f64.log2());
        let i = mutual_information(&t(vec![vec![0.4, 0.1], vec![0.1, 0.4]]));
        assert!((i - (1.0 - h02)).abs() < 1e-12);
        assert!((i - 0.278).abs() < 1e-3);
    }

    #[test]
    fn conditional_entropy_examples() {
        let copy = t(vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert!(conditional_entropy(&copy, Axis::Y).abs() < 1e-12);
        let ind = t(vec![vec![0.25, 0.25], vec![0.25, 0.25]]);
        assert!((conditional_entropy(&ind, Axis::X) - 1.0).abs() < 1e-12);
        let j = t(vec![vec![0.4, 0.1], vec![0.1, 0.4]]);
        let oracle = 1.0 - mutual_information(&j);
        assert!((conditional_entropy(&j, Axis::Y) - oracle).abs() < 1e-12);
        assert!((conditional_entropy(&j, Axis::Y) - 0.722).abs() < 1e-3);
    }

    #[test]
    fn axis_parsing() {
        assert_eq!("Y".parse::<Axis>().unwrap(), Axis::Y);
        assert_eq!("row".parse::<Axis>().unwrap(), Axis::X);
        assert!(matches!("z".parse::<Axis>(), Err(LabError::Usage(_))));
    }
}
