//! Small statistics toolkit used by the fitting and protocol code.

use rand::seq::SliceRandom;

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; `1.0` when `y` has zero variance and the
    /// fit is exact, `0.0` when `y` has zero variance otherwise impossible.
    pub r2: f64,
}

/// Ordinary least squares `y = intercept + slope * x`.
///
/// Returns `None` when fewer than two points are given or `x` is constant.
pub fn ols(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Some(LinearFit { slope, intercept, r2 })
}

/// Median of all pairwise slopes. `None` with fewer than two distinct x.
pub fn theil_sen_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let mut slopes = Vec::with_capacity(x.len() * x.len() / 2);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[j] - x[i];
            if dx != 0.0 {
                slopes.push((y[j] - y[i]) / dx);
            }
        }
    }
    if slopes.is_empty() {
        return None;
    }
    slopes.sort_by(f64::total_cmp);
    Some(median_sorted(&slopes))
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        f64::NAN
    } else {
        median_sorted(&s)
    }
}

/// Linear-interpolated percentile (`q` in `[0, 1]`) of an ascending slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation; `None` if either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    // Relative guard: constant columns can pick up rounding noise.
    let scale_x = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let scale_y = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if sxx <= 1e-24 * scale_x * scale_x || syy <= 1e-24 * scale_y * scale_y {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation; `None` when either variable is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTest {
    pub rho: f64,
    /// Two-sided permutation p-value, `(1 + #{|rho_perm| >= |rho|}) / (1 + n)`.
    pub p_value: f64,
}

/// Spearman correlation with a seeded two-sided permutation test.
pub fn spearman_permutation(x: &[f64], y: &[f64], permutations: usize, seed: u64) -> Option<RankTest> {
    let rx = ranks(x);
    let ry = ranks(y);
    let rho = pearson(&rx, &ry)?;
    let mut rng = seed::rng(seed);
    let mut shuffled = ry.clone();
    let mut hits = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        let r = pearson(&rx, &shuffled).unwrap_or(0.0);
        if r.abs() >= rho.abs() - 1e-12 {
            hits += 1;
        }
    }
    Some(RankTest {
        rho,
        p_value: (1 + hits) as f64 / (1 + permutations) as f64,
    })
}

/// Mean within-stratum Spearman correlation with a two-sided permutation test
/// that shuffles `y` inside each stratum. Strata where either side is constant
/// are dropped; `None` when no stratum remains.
pub fn stratified_spearman_permutation(strata: &[(Vec<f64>, Vec<f64>)], permutations: usize, seed: u64) -> Option<StratifiedRankTest> {
    let ranked: Vec<(Vec<f64>, Vec<f64>)> = strata
        .iter()
        .map(|(x, y)| (ranks(x), ranks(y)))
        .filter(|(rx, ry)| pearson(rx, ry).is_some())
        .collect();
    if ranked.is_empty() {
        return None;
    }
    let stat = |rs: &[(Vec<f64>, Vec<f64>)]| mean(&rs.iter().map(|(rx, ry)| pearson(rx, ry).unwrap_or(0.0)).collect::<Vec<_>>());
    let rho = stat(&ranked);
    let mut rng = seed::rng(seed);
    let mut shuffled = ranked.clone();
    let mut hits = 0usize;
    for _ in 0..permutations {
        for (_, ry) in &mut shuffled {
            ry.shuffle(&mut rng);
        }
        if stat(&shuffled).abs() >= rho.abs() - 1e-12 {
            hits += 1;
        }
    }
    Some(StratifiedRankTest {
        rho,
        p_value: (1 + hits) as f64 / (1 + permutations) as f64,
        strata_used: ranked.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratifiedRankTest {
    pub rho: f64,
    pub p_value: f64,
    pub strata_used: usize,
}
