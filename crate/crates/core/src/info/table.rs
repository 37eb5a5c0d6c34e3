use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Normalisation slack accepted on input; values are renormalised exactly
/// afterwards so stored tables meet the tighter 1e-12 invariant.
pub const INPUT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Wire {
    rows: Vec<Vec<f64>>,
    #[serde(default)]
    row_labels: Vec<String>,
    #[serde(default)]
    col_labels: Vec<String>,
}

fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn check_rect(rows: &[Vec<f64>], what: &str) -> Result<(usize, usize)> {
    let n_in = rows.len();
    if n_in == 0 {
        return Err(LabError::Distribution(format!("{what} has no rows")));
    }
    let n_out = rows[0].len();
    if n_out == 0 {
        return Err(LabError::Distribution(format!("{what} has empty rows")));
    }
    if rows.iter().any(|r| r.len() != n_out) {
        return Err(LabError::Distribution(format!("{what} rows have unequal lengths")));
    }
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(LabError::Distribution(format!(
                    "{what} entry ({i},{j}) = {v} is negative or non-finite"
                )));
            }
        }
    }
    Ok((n_in, n_out))
}

fn check_labels(labels: Vec<String>, n: usize, what: &str) -> Result<Vec<String>> {
    if labels.is_empty() {
        Ok(default_labels(n))
    } else if labels.len() == n {
        Ok(labels)
    } else {
        Err(LabError::Distribution(format!(
            "{what}: {} labels for {n} entries",
            labels.len()
        )))
    }
}

/// Exact finite joint distribution `p(x, y)`; `x` indexes rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Wire", into = "Wire")]
pub struct JointTable {
    p: Vec<f64>,
    nx: usize,
    ny: usize,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
}

impl JointTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_labels(rows, Vec::new(), Vec::new())
    }

    pub fn with_labels(rows: Vec<Vec<f64>>, row_labels: Vec<String>, col_labels: Vec<String>) -> Result<Self> {
        let (nx, ny) = check_rect(&rows, "joint table")?;
        let total: f64 = rows.iter().flatten().sum();
        if (total - 1.0).abs() > INPUT_TOLERANCE {
            return Err(LabError::Distribution(format!("joint table sums to {total}, not 1")));
        }
        let p = rows.into_iter().flatten().map(|v| v / total).collect();
        Ok(JointTable {
            p,
            nx,
            ny,
            row_labels: check_labels(row_labels, nx, "row labels")?,
            col_labels: check_labels(col_labels, ny, "column labels")?,
        })
    }

    /// Builds a table from nonnegative weights (counts, unnormalised mass).
    pub fn from_weights(rows: Vec<Vec<f64>>) -> Result<Self> {
        check_rect(&rows, "weight table")?;
        let total: f64 = rows.iter().flatten().sum();
        if total <= 0.0 {
            return Err(LabError::Distribution("weight table has zero mass".into()));
        }
        Self::new(rows.into_iter().map(|r| r.into_iter().map(|v| v / total).collect()).collect())
    }

    /// `p(x, y) = p(x) q(y | x)`.
    pub fn from_marginal_channel(px: &[f64], channel: &Channel) -> Result<Self> {
        if px.len() != channel.n_in() {
            return Err(LabError::usage(format!(
                "marginal has {} entries but channel input size is {}",
                px.len(),
                channel.n_in()
            )));
        }
        validate_probability_vector(px)?;
        let rows = (0..px.len())
            .map(|x| channel.row(x).iter().map(|q| px[x] * q).collect())
            .collect();
        Self::new(rows)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.p[x * self.ny + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.p[x * self.ny..(x + 1) * self.ny]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.p.chunks(self.ny).map(<[f64]>::to_vec).collect()
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn px(&self) -> Vec<f64> {
        self.p.chunks(self.ny).map(|r| r.iter().sum()).collect()
    }

    pub fn py(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ny];
        for r in self.p.chunks(self.ny) {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }

    pub fn transpose(&self) -> JointTable {
        let mut p = vec![0.0; self.p.len()];
        for x in 0..self.nx {
            for y in 0..self.ny {
                p[y * self.nx + x] = self.get(x, y);
            }
        }
        JointTable {
            p,
            nx: self.ny,
            ny: self.nx,
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
        }
    }

    /// `p(y | x)` as a channel. Rows with `p(x) = 0` are set uniform.
    pub fn y_given_x(&self) -> Channel {
        let rows = self
            .p
            .chunks(self.ny)
            .map(|r| {
                let s: f64 = r.iter().sum();
                if s > 0.0 {
                    r.iter().map(|v| v / s).collect()
                } else {
                    vec![1.0 / self.ny as f64; self.ny]
                }
            })
            .collect();
        Channel::new(rows).expect("conditional rows are normalised by construction")
    }

    /// Joint of `(Z, Y)` after passing `X` through `encoder`:
    /// `p(z, y) = sum_x p(x, y) q(z | x)`.
    pub fn push_rows(&self, encoder: &Channel) -> Result<JointTable> {
        if encoder.n_in() != self.nx {
            return Err(LabError::usage(format!(
                "encoder input size {} does not match |X| = {}",
                encoder.n_in(),
                self.nx
            )));
        }
        let nz = encoder.n_out();
        let mut p = vec![0.0; nz * self.ny];
        for x in 0..self.nx {
            let q = encoder.row(x);
            let r = self.row(x);
            for (z, &qz) in q.iter().enumerate() {
                if qz == 0.0 {
                    continue;
                }
                for (y, &pxy) in r.iter().enumerate() {
                    p[z * self.ny + y] += qz * pxy;
                }
            }
        }
        let total: f64 = p.iter().sum();
        for v in &mut p {
            *v /= total;
        }
        Ok(JointTable {
            p,
            nx: nz,
            ny: self.ny,
            row_labels: default_labels(nz),
            col_labels: self.col_labels.clone(),
        })
    }
}

impl TryFrom<Wire> for JointTable {
    type Error = LabError;

    fn try_from(w: Wire) -> Result<Self> {
        JointTable::with_labels(w.rows, w.row_labels, w.col_labels)
    }
}

impl From<JointTable> for Wire {
    fn from(t: JointTable) -> Self {
        Wire {
            rows: t.rows(),
            row_labels: t.row_labels,
            col_labels: t.col_labels,
        }
    }
}

/// Row-stochastic map `q(out | in)`; `in` indexes rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Wire", into = "Wire")]
pub struct Channel {
    q: Vec<f64>,
    n_in: usize,
    n_out: usize,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
}

impl Channel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_labels(rows, Vec::new(), Vec::new())
    }

    pub fn with_labels(rows: Vec<Vec<f64>>, row_labels: Vec<String>, col_labels: Vec<String>) -> Result<Self> {
        let (n_in, n_out) = check_rect(&rows, "channel")?;
        let mut q = Vec::with_capacity(n_in * n_out);
        for (i, r) in rows.into_iter().enumerate() {
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > INPUT_TOLERANCE {
                return Err(LabError::Distribution(format!("channel row {i} sums to {s}, not 1")));
            }
            q.extend(r.into_iter().map(|v| v / s));
        }
        Ok(Channel {
            q,
            n_in,
            n_out,
            row_labels: check_labels(row_labels, n_in, "row labels")?,
            col_labels: check_labels(col_labels, n_out, "column labels")?,
        })
    }

    /// Normalises each row of nonnegative weights.
    pub fn from_weights(rows: Vec<Vec<f64>>) -> Result<Self> {
        check_rect(&rows, "channel weights")?;
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let s: f64 = r.iter().sum();
                if s <= 0.0 {
                    Err(LabError::Distribution(format!("channel weight row {i} has zero mass")))
                } else {
                    Ok(r.into_iter().map(|v| v / s).collect())
                }
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Self::new(rows)
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        Self::new(rows).expect("identity is stochastic")
    }

    /// Maps every input to output `z`.
    pub fn constant(n_in: usize, n_out: usize, z: usize) -> Self {
        assert!(z < n_out);
        let rows = (0..n_in)
            .map(|_| (0..n_out).map(|j| f64::from(u8::from(j == z))).collect())
            .collect();
        Self::new(rows).expect("constant channel is stochastic")
    }

    pub fn uniform(n_in: usize, n_out: usize) -> Self {
        Self::new(vec![vec![1.0 / n_out as f64; n_out]; n_in]).expect("uniform channel is stochastic")
    }

    /// Deterministic channel from a lookup table `out = map[in]`.
    pub fn deterministic(map: &[usize], n_out: usize) -> Result<Self> {
        if let Some(&bad) = map.iter().find(|&&z| z >= n_out) {
            return Err(LabError::usage(format!("output {bad} out of range for size {n_out}")));
        }
        Self::new(
            map.iter()
                .map(|&z| (0..n_out).map(|j| f64::from(u8::from(j == z))).collect())
                .collect(),
        )
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    #[inline]
    pub fn get(&self, i: usize, o: usize) -> f64 {
        self.q[i * self.n_out + o]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.q[i * self.n_out..(i + 1) * self.n_out]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.q.chunks(self.n_out).map(<[f64]>::to_vec).collect()
    }

    /// Output marginal for input distribution `p_in`.
    pub fn apply(&self, p_in: &[f64]) -> Result<Vec<f64>> {
        if p_in.len() != self.n_in {
            return Err(LabError::usage(format!(
                "input distribution has {} entries, channel expects {}",
                p_in.len(),
                self.n_in
            )));
        }
        let mut out = vec![0.0; self.n_out];
        for (i, &pi) in p_in.iter().enumerate() {
            for (o, q) in out.iter_mut().zip(self.row(i)) {
                *o += pi * q;
            }
        }
        Ok(out)
    }

    /// Series composition: `self` (a -> b) followed by `next` (b -> c).
    pub fn then(&self, next: &Channel) -> Result<Channel> {
        if self.n_out != next.n_in {
            return Err(LabError::usage(format!(
                "cannot compose {}x{} with {}x{}",
                self.n_in, self.n_out, next.n_in, next.n_out
            )));
        }
        let rows = (0..self.n_in)
            .map(|i| next.apply(self.row(i)).expect("sizes checked"))
            .collect();
        Channel::new(rows)
    }

    /// Convex mix `(1 - weight) * self + weight * other`.
    pub fn mix(&self, other: &Channel, weight: f64) -> Result<Channel> {
        if self.n_in != other.n_in || self.n_out != other.n_out || !(0.0..=1.0).contains(&weight) {
            return Err(LabError::usage("channel mix needs equal shapes and weight in [0,1]"));
        }
        let q = self
            .q
            .iter()
            .zip(&other.q)
            .map(|(a, b)| (1.0 - weight) * a + weight * b)
            .collect::<Vec<_>>();
        Channel::new(q.chunks(self.n_out).map(<[f64]>::to_vec).collect())
    }
}

impl TryFrom<Wire> for Channel {
    type Error = LabError;

    fn try_from(w: Wire) -> Result<Self> {
        Channel::with_labels(w.rows, w.row_labels, w.col_labels)
    }
}

impl From<Channel> for Wire {
    fn from(c: Channel) -> Self {
        Wire {
            rows: c.rows(),
            row_labels: c.row_labels,
            col_labels: c.col_labels,
        }
    }
}

/// Checks nonnegativity and normalisation within [`INPUT_TOLERANCE`].
pub fn validate_probability_vector(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(LabError::Distribution("empty probability vector".into()));
    }
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(LabError::Distribution(format!("entry {i} = {v} is negative or non-finite")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > INPUT_TOLERANCE {
        return Err(LabError::Distribution(format!("probabilities sum to {s}, not 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_tables() {
        assert!(JointTable::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(JointTable::new(vec![vec![-0.1, 1.1]]).is_err());
        assert!(JointTable::new(vec![vec![0.5], vec![0.25, 0.25]]).is_err());
        assert!(Channel::new(vec![vec![0.5, 0.4]]).is_err());
    }

    #[test]
    fn marginals_are_consistent() {
        let j = JointTable::new(vec![vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        let px = j.px();
        let py = j.py();
        assert!((px[0] - 0.3).abs() < 1e-12 && (px[1] - 0.7).abs() < 1e-12);
        assert!((py[0] - 0.4).abs() < 1e-12 && (py[1] - 0.6).abs() < 1e-12);
        let t = j.transpose();
        assert_eq!(t.get(1, 0), j.get(0, 1));
    }

    #[test]
    fn json_wire_format() {
        let j = JointTable::new(vec![vec![0.25, 0.25], vec![0.5, 0.0]]).unwrap();
        let s = serde_json::to_string(&j).unwrap();
        assert_eq!(
            s,
            r#"{"rows":[[0.25,0.25],[0.5,0.0]],"row_labels":["0","1"],"col_labels":["0","1"]}"#
        );
        let back: JointTable = serde_json::from_str(&s).unwrap();
        assert_eq!(back, j);
        let bad = serde_json::from_str::<Channel>(r#"{"rows":[[0.3,0.3]]}"#);
        assert!(bad.is_err());
        let c: Channel = serde_json::from_str(r#"{"rows":[[0.3,0.7]],"row_labels":["a"],"col_labels":["u","v"]}"#).unwrap();
        assert_eq!(c.n_out(), 2);
    }

    #[test]
    fn push_rows_matches_manual_sum() {
        let j = JointTable::new(vec![vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap();
        let enc = Channel::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let zy = j.push_rows(&enc).unwrap();
        assert!((zy.get(0, 0) - (0.4 * 0.9 + 0.1 * 0.2)).abs() < 1e-15);
        assert!((zy.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
