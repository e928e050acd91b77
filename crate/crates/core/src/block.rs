//! Masked block updates for the rank-one-plus-intercept factorization
//! subproblem `min ‖θaᵀ + 1bᵀ - Ỹ‖²_{F(Ω)}` subject to `a ≥ 0`.
//!
//! Every update is separable across its coordinates, so each one is a scalar
//! least-squares problem over one row or column's observed entries.

use crate::link::ScoreField;
use crate::response::ResponseMatrix;

/// Result of one block update.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutput {
    pub values: Vec<f64>,
    /// Coordinates with an empty index set or a zero denominator; these are set to 0.
    pub degenerate: Vec<usize>,
    /// Number of `Ỹ` entries read.
    pub touches: usize,
}

/// Non-negative discrimination update.
///
/// The rank-one structure decouples the NNLS problem by column, and for a
/// single non-negative scalar the active-set method stops at
/// `max(0, unconstrained minimizer)`.
pub fn update_a(theta: &[f64], b: &[f64], y_tilde: &ScoreField, m: &ResponseMatrix) -> BlockOutput {
    let mut values = vec![0.0; m.n_items()];
    let mut degenerate = Vec::new();
    let mut touches = 0;
    for (j, out) in values.iter_mut().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for (&i, &pos) in m.col_models(j).iter().zip(m.col_positions(j)) {
            let th = theta[i];
            num += th * (y_tilde[pos] - b[j]);
            den += th * th;
            touches += 1;
        }
        if den > 0.0 {
            *out = (num / den).max(0.0);
        } else {
            degenerate.push(j);
        }
    }
    BlockOutput {
        values,
        degenerate,
        touches,
    }
}

/// Easiness update: masked column mean of `Ỹ - θaᵀ`.
pub fn update_b(theta: &[f64], a: &[f64], y_tilde: &ScoreField, m: &ResponseMatrix) -> BlockOutput {
    let mut values = vec![0.0; m.n_items()];
    let mut degenerate = Vec::new();
    let mut touches = 0;
    for (j, out) in values.iter_mut().enumerate() {
        let rows = m.col_models(j);
        if rows.is_empty() {
            degenerate.push(j);
            continue;
        }
        let mut sum = 0.0;
        for (&i, &pos) in rows.iter().zip(m.col_positions(j)) {
            sum += y_tilde[pos] - a[j] * theta[i];
            touches += 1;
        }
        *out = sum / rows.len() as f64;
    }
    BlockOutput {
        values,
        degenerate,
        touches,
    }
}

/// Ability update: `θ_i = Σ_{j∈Ω_i} a_j (ỹ_ij - b_j) / Σ_{j∈Ω_i} a_j²`.
pub fn update_theta(a: &[f64], b: &[f64], y_tilde: &ScoreField, m: &ResponseMatrix) -> BlockOutput {
    let mut values = vec![0.0; m.n_models()];
    let mut degenerate = Vec::new();
    let mut touches = 0;
    for (i, out) in values.iter_mut().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for pos in m.row_range(i) {
            let j = m.col_at(pos);
            num += a[j] * (y_tilde[pos] - b[j]);
            den += a[j] * a[j];
            touches += 1;
        }
        if den > 0.0 {
            *out = num / den;
        } else {
            degenerate.push(i);
        }
    }
    BlockOutput {
        values,
        degenerate,
        touches,
    }
}

/// Masked quadratic `‖θaᵀ + 1bᵀ - Ỹ‖²_{F(Ω)}`.
pub fn factorization_objective(
    theta: &[f64],
    a: &[f64],
    b: &[f64],
    y_tilde: &ScoreField,
    m: &ResponseMatrix,
) -> f64 {
    m.entries()
        .enumerate()
        .map(|(pos, (i, j, _))| {
            let r = a[j] * theta[i] + b[j] - y_tilde[pos];
            r * r
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(n: usize, j: usize) -> ResponseMatrix {
        ResponseMatrix::from_dense(n, j, &vec![1; n * j]).unwrap()
    }

    #[test]
    fn update_a_two_point_least_squares() {
        let m = full(2, 1);
        // R = Ỹ - b = (2, 4) with b = 0.
        let y = ScoreField::from_dense(&m, &[2.0, 4.0]);
        let out = update_a(&[1.0, 2.0], &[0.0], &y, &m);
        assert!((out.values[0] - 2.0).abs() < 1e-15);
        assert!(out.degenerate.is_empty());
    }

    #[test]
    fn update_a_projects_negative_solution() {
        let m = full(2, 1);
        let y = ScoreField::from_dense(&m, &[-1.0, -1.0]);
        let out = update_a(&[1.0, 1.0], &[0.0], &y, &m);
        assert_eq!(out.values[0], 0.0);
    }

    #[test]
    fn update_a_flags_empty_column() {
        let m = ResponseMatrix::from_triplets(2, 2, &[(0, 0, 1), (1, 0, -1)]).unwrap();
        let y = ScoreField::from_vec(vec![1.0, -1.0]);
        let out = update_a(&[1.0, -1.0], &[0.0, 0.0], &y, &m);
        assert_eq!(out.values[1], 0.0);
        assert_eq!(out.degenerate, vec![1]);
        let out = update_a(&[0.0, 0.0], &[0.0, 0.0], &y, &m);
        assert_eq!(out.degenerate, vec![0, 1]);
    }

    #[test]
    fn update_b_examples() {
        let m = full(2, 2);
        let y = ScoreField::from_dense(&m, &[1.0, 5.0, 3.0, -1.0]);
        let out = update_b(&[0.0, 0.0], &[1.0, 1.0], &y, &m);
        assert_eq!(out.values, vec![2.0, 2.0]);

        let m = full(2, 1);
        let y = ScoreField::from_dense(&m, &[3.0, 1.0]);
        let out = update_b(&[1.0, -1.0], &[1.0], &y, &m);
        assert!((out.values[0] - 2.0).abs() < 1e-15);

        let m = ResponseMatrix::from_triplets(2, 2, &[(0, 1, 1)]).unwrap();
        let y = ScoreField::from_vec(vec![1.0]);
        let out = update_b(&[0.0, 0.0], &[1.0, 1.0], &y, &m);
        assert_eq!(out.values[0], 0.0);
        assert_eq!(out.degenerate, vec![0]);
    }

    #[test]
    fn update_theta_examples() {
        let m = full(2, 3);
        let y = ScoreField::from_dense(&m, &[1.0, 2.0, 6.0, -3.0, 0.0, 0.0]);
        let out = update_theta(&[1.0; 3], &[0.0; 3], &y, &m);
        assert_eq!(out.values, vec![3.0, -1.0]);

        let m = full(1, 2);
        let y = ScoreField::from_dense(&m, &[1.0, 4.0]);
        let out = update_theta(&[1.0, 2.0], &[0.0, 0.0], &y, &m);
        assert!((out.values[0] - 9.0 / 5.0).abs() < 1e-15);

        let out = update_theta(&[0.0, 0.0], &[0.0, 0.0], &y, &m);
        assert_eq!(out.values[0], 0.0);
        assert_eq!(out.degenerate, vec![0]);
    }

    #[test]
    fn full_observation_reduces_to_dense_formulas() {
        let (n, j) = (4, 3);
        let m = full(n, j);
        let yt: Vec<f64> = (0..n * j).map(|k| (k as f64 * 0.37).sin() * 3.0).collect();
        let y = ScoreField::from_dense(&m, &yt);
        let theta = [0.5, -1.0, 2.0, 0.25];
        let a = [0.3, 1.1, 0.0];
        let b = [0.2, -0.4, 1.5];

        // b = (Ỹ - θaᵀ)ᵀ 1 / N
        let bb = update_b(&theta, &a, &y, &m).values;
        for c in 0..j {
            let dense: f64 = (0..n).map(|i| yt[i * j + c] - theta[i] * a[c]).sum::<f64>() / n as f64;
            assert!((bb[c] - dense).abs() < 1e-14);
        }
        // θ = (Ỹ - 1bᵀ) a / (aᵀa)
        let th = update_theta(&a, &b, &y, &m).values;
        let ata: f64 = a.iter().map(|v| v * v).sum();
        for i in 0..n {
            let dense: f64 = (0..j).map(|c| (yt[i * j + c] - b[c]) * a[c]).sum::<f64>() / ata;
            assert!((th[i] - dense).abs() < 1e-14);
        }
    }

    #[test]
    fn updates_touch_observed_entries_only() {
        let m = ResponseMatrix::from_triplets(3, 4, &[(0, 0, 1), (0, 3, -1), (1, 1, 1), (2, 0, -1), (2, 2, 1)]).unwrap();
        let y = ScoreField::from_vec(vec![0.5; 5]);
        let th = [1.0, -0.5, 0.2];
        let a = [0.5, 1.0, 0.0, 2.0];
        let b = [0.0; 4];
        assert_eq!(update_a(&th, &b, &y, &m).touches, 5);
        assert_eq!(update_b(&th, &a, &y, &m).touches, 5);
        assert_eq!(update_theta(&a, &b, &y, &m).touches, 5);
    }
}
