//! Reference computations written without the library's own routines.

#![allow(dead_code)]

use rand::Rng;

pub fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
}

/// Flat-Dirichlet draw of length `n`.
pub fn dirichlet<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    normalize(&mut v);
    v
}

pub fn random_joint<R: Rng>(rng: &mut R, nx: usize, ny: usize) -> Vec<Vec<f64>> {
    let flat = dirichlet(rng, nx * ny);
    flat.chunks(ny).map(|r| r.to_vec()).collect()
}

pub fn random_channel<R: Rng>(rng: &mut R, n_in: usize, n_out: usize) -> Vec<Vec<f64>> {
    (0..n_in).map(|_| dirichlet(rng, n_out)).collect()
}

pub fn mi_bits(joint: &[Vec<f64>]) -> f64 {
    let ny = joint[0].len();
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..ny).map(|y| joint.iter().map(|r| r[y]).sum()).collect();
    let mut acc = 0.0;
    for (x, row) in joint.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            if p > 0.0 {
                acc += p * (p / (px[x] * py[y])).ln();
            }
        }
    }
    acc / std::f64::consts::LN_2
}

/// `(I(X;Z), I(Z;Y))` for encoder `q[x][z]` on `joint[x][y]`.
pub fn encoder_rate_relevance(joint: &[Vec<f64>], q: &[Vec<f64>]) -> (f64, f64) {
    let nz = q[0].len();
    let ny = joint[0].len();
    let xz: Vec<Vec<f64>> = joint
        .iter()
        .zip(q)
        .map(|(row, qz)| {
            let px: f64 = row.iter().sum();
            qz.iter().map(|v| px * v).collect()
        })
        .collect();
    let mut zy = vec![vec![0.0; ny]; nz];
    for (row, qz) in joint.iter().zip(q) {
        for z in 0..nz {
            for y in 0..ny {
                zy[z][y] += qz[z] * row[y];
            }
        }
    }
    (mi_bits(&xz), mi_bits(&zy))
}

/// One-hot rows for the map `x -> map[x]`.
pub fn one_hot(map: &[usize], nz: usize) -> Vec<Vec<f64>> {
    map.iter()
        .map(|&z| (0..nz).map(|k| if k == z { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Every map `0..nx -> 0..nz`.
pub fn all_maps(nx: usize, nz: usize) -> Vec<Vec<usize>> {
    let total = nz.pow(nx as u32);
    (0..total)
        .map(|mut k| {
            (0..nx)
                .map(|_| {
                    let d = k % nz;
                    k /= nz;
                    d
                })
                .collect()
        })
        .collect()
}

/// `n` index pairs drawn from `joint` by inverse CDF.
pub fn sample_pairs<R: Rng>(rng: &mut R, joint: &[Vec<f64>], n: usize) -> Vec<(usize, usize)> {
    let ny = joint[0].len();
    let mut cdf = Vec::with_capacity(joint.len() * ny);
    let mut acc = 0.0;
    for row in joint {
        for &p in row {
            acc += p;
            cdf.push(acc);
        }
    }
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            (k / ny, k % ny)
        })
        .collect()
}
