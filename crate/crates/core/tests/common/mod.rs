#![allow(dead_code)]

use dualrej::nn::{seeded_rng, standard_normal};
use dualrej::{Matrix, WindowPair};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    seeded_rng(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal::<f64, _>(rng)).collect()
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Random symmetric positive definite matrix `B Bᵀ + d·I / 10`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..d).map(|_| normals(rng, d)).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let s: f64 = (0..d).map(|k| b[i][k] * b[j][k]).sum();
                    s + if i == j { d as f64 / 10.0 } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

pub fn to_matrix(a: &[Vec<f64>]) -> Matrix<f64> {
    Matrix::from_rows(a).unwrap()
}

/// Windows with random inputs and targets.
pub fn random_windows(rng: &mut ChaCha8Rng, count: usize, l: usize, s: usize, n: usize) -> Vec<WindowPair<f64>> {
    (0..count)
        .map(|i| WindowPair {
            input: Matrix::from_vec(l, n, normals(rng, l * n)),
            target: Matrix::from_vec(s, n, normals(rng, s * n)),
            origin_index: i,
        })
        .collect()
}

/// Relative error used by the finite-difference checks.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// `count` distinct indices below `n`.
pub fn pick_indices(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while out.len() < count {
        let i = rng.random_range(0..n);
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Autocorrelated windows: each variable is an AR(1) path with coefficient
/// `phi` and unit marginal variance, plus `shift`.
pub fn ar_windows(rng: &mut ChaCha8Rng, count: usize, l: usize, n: usize, phi: f64, shift: f64) -> Vec<Vec<f64>> {
    let scale = (1.0 - phi * phi).sqrt();
    (0..count)
        .map(|_| {
            let mut state: Vec<f64> = normals(rng, n);
            let mut out = Vec::with_capacity(l * n);
            for _ in 0..l {
                for v in state.iter_mut() {
                    *v = phi * *v + scale * standard_normal::<f64, _>(rng);
                }
                out.extend(state.iter().map(|v| v + shift));
            }
            out
        })
        .collect()
}
