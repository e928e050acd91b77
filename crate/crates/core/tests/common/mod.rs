//! Independent reference computations shared by the integration suites.
//! None of these call into the solver internals they are used to check.

#![allow(dead_code)]

use cbmm::{ResponseMatrix, ScoreField};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random mask with observation probability `p_obs` and random ±1 responses.
pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, j: usize, p_obs: f64) -> ResponseMatrix {
    let mut trips = Vec::new();
    for i in 0..n {
        for c in 0..j {
            if rng.random::<f64>() < p_obs {
                let y = if rng.random::<bool>() { 1 } else { -1 };
                trips.push((i, c, y));
            }
        }
    }
    ResponseMatrix::from_triplets(n, j, &trips).unwrap()
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

/// `Σ_Ω log(1 + exp(-y x / σ))`, the cross-entropy written as a softplus.
pub fn softplus_loss(x: &[f64], m: &ResponseMatrix, sigma: f64) -> f64 {
    m.entries().zip(x).map(|((_, _, y), &xv)| softplus_term(xv, y.sign(), sigma)).sum()
}

/// Loss contribution of one observed entry with label `y` in {-1, 1}.
pub fn softplus_term(x: f64, y: f64, sigma: f64) -> f64 {
    let z = -y * x / sigma;
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Dense `|Ω| x J` design for the discrimination subproblem and its right-hand side.
pub fn stacked_a_system(theta: &[f64], b: &[f64], y_tilde: &ScoreField, m: &ResponseMatrix) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (pos, (i, j, _)) in m.entries().enumerate() {
        let mut row = vec![0.0; m.n_items()];
        row[j] = theta[i];
        rows.push(row);
        rhs.push(y_tilde[pos] - b[j]);
    }
    (rows, rhs)
}

/// Solves the square system `g x = r` by Gaussian elimination with partial pivoting.
fn solve_dense(mut g: Vec<Vec<f64>>, mut r: Vec<f64>) -> Vec<f64> {
    let n = r.len();
    for k in 0..n {
        let p = (k..n).max_by(|&u, &v| g[u][k].abs().total_cmp(&g[v][k].abs())).unwrap();
        g.swap(k, p);
        r.swap(k, p);
        for row in k + 1..n {
            let f = g[row][k] / g[k][k];
            if f != 0.0 {
                for col in k..n {
                    g[row][col] -= f * g[k][col];
                }
                r[row] -= f * r[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| g[k][c] * x[c]).sum();
        x[k] = (r[k] - s) / g[k][k];
    }
    x
}

/// Least squares on the columns in `set`, via the normal equations.
fn ls_on(a: &[Vec<f64>], rhs: &[f64], set: &[usize]) -> Vec<f64> {
    let k = set.len();
    let mut g = vec![vec![0.0; k]; k];
    let mut r = vec![0.0; k];
    for (row, &y) in a.iter().zip(rhs) {
        for (u, &cu) in set.iter().enumerate() {
            r[u] += row[cu] * y;
            for (v, &cv) in set.iter().enumerate() {
                g[u][v] += row[cu] * row[cv];
            }
        }
    }
    solve_dense(g, r)
}

/// Lawson–Hanson active-set NNLS for `min ‖A x - rhs‖² s.t. x ≥ 0`.
pub fn lawson_hanson(a: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = a.first().map_or(0, |r| r.len());
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = 1e-12 * scale * scale * rhs.len().max(1) as f64;
    for _outer in 0..(3 * n + 10) {
        // w = Aᵀ(rhs - A x)
        let resid: Vec<f64> = a
            .iter()
            .zip(rhs)
            .map(|(row, &y)| y - row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>())
            .collect();
        let w: Vec<f64> = (0..n).map(|c| a.iter().zip(&resid).map(|(row, r)| row[c] * r).sum()).collect();
        let Some(t) = (0..n).filter(|&c| !passive[c] && w[c] > tol).max_by(|&u, &v| w[u].total_cmp(&w[v])) else {
            break;
        };
        passive[t] = true;
        loop {
            let set: Vec<usize> = (0..n).filter(|&c| passive[c]).collect();
            let z_set = ls_on(a, rhs, &set);
            if z_set.iter().all(|&v| v > 0.0) {
                for (k, &c) in set.iter().enumerate() {
                    x[c] = z_set[k];
                }
                for c in 0..n {
                    if !passive[c] {
                        x[c] = 0.0;
                    }
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &c) in set.iter().enumerate() {
                if z_set[k] <= 0.0 {
                    alpha = alpha.min(x[c] / (x[c] - z_set[k]));
                }
            }
            for (k, &c) in set.iter().enumerate() {
                x[c] += alpha * (z_set[k] - x[c]);
                if x[c] <= 1e-15 {
                    x[c] = 0.0;
                    passive[c] = false;
                }
            }
        }
    }
    x
}

/// Masked quadratic `Σ_Ω (a_j θ_i + b_j - ỹ_ij)²`, written out directly.
pub fn masked_quadratic(theta: &[f64], a: &[f64], b: &[f64], y_tilde: &ScoreField, m: &ResponseMatrix) -> f64 {
    let mut s = 0.0;
    for (pos, (i, j, _)) in m.entries().enumerate() {
        let r = a[j] * theta[i] + b[j] - y_tilde[pos];
        s += r * r;
    }
    s
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Loss trace is nonincreasing up to `slack` relative to the previous value.
pub fn is_monotone(trace: &[f64], slack: f64) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + slack * w[0].abs())
}
