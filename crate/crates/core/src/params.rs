use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::ScoreField;
use crate::response::ResponseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("parameter lengths (theta {theta}, a {a}, b {b}) do not match a {n_models}x{n_items} matrix")]
    Shape {
        theta: usize,
        a: usize,
        b: usize,
        n_models: usize,
        n_items: usize,
    },
    #[error("discrimination a[{0}] = {1} is negative")]
    NegativeDiscrimination(usize, f64),
    #[error("parameters contain non-finite values")]
    NonFinite,
}

/// Abilities `θ`, non-negative discriminations `a` and easiness `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ModelParams {
    pub fn new(theta: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Self {
        ModelParams { theta, a, b }
    }

    pub fn n_models(&self) -> usize {
        self.theta.len()
    }

    pub fn n_items(&self) -> usize {
        self.a.len()
    }

    /// Checks lengths against `(n_models, n_items)`, `a ≥ 0` and finiteness.
    pub fn validate(&self, n_models: usize, n_items: usize) -> Result<(), ParamsError> {
        if self.theta.len() != n_models || self.a.len() != n_items || self.b.len() != n_items {
            return Err(ParamsError::Shape {
                theta: self.theta.len(),
                a: self.a.len(),
                b: self.b.len(),
                n_models,
                n_items,
            });
        }
        let all = self.theta.iter().chain(&self.a).chain(&self.b);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(ParamsError::NonFinite);
        }
        if let Some((j, &v)) = self.a.iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(ParamsError::NegativeDiscrimination(j, v));
        }
        Ok(())
    }

    pub fn validate_for(&self, m: &ResponseMatrix) -> Result<(), ParamsError> {
        self.validate(m.n_models(), m.n_items())
    }

    /// `x_ij = a_j θ_i + b_j`.
    #[inline]
    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.a[j] * self.theta[i] + self.b[j]
    }

    /// Scores on the observed entries of `m`, touching each entry once.
    pub fn scores_on(&self, m: &ResponseMatrix) -> ScoreField {
        let mut out = Vec::with_capacity(m.n_observed());
        for i in 0..m.n_models() {
            let th = self.theta[i];
            for &j in m.row_items(i) {
                out.push(self.a[j] * th + self.b[j]);
            }
        }
        ScoreField::from_vec(out)
    }

    /// Full row-major `N x J` score grid, `U Vᵀ` with `U = (θ, 1)`, `V = (a, b)`.
    pub fn dense_scores(&self) -> Vec<f64> {
        let j = self.n_items();
        let mut out = Vec::with_capacity(self.n_models() * j);
        for &th in &self.theta {
            out.extend((0..j).map(|c| self.a[c] * th + self.b[c]));
        }
        out
    }

    /// Concatenated parameter vector `W = (θ, a, b)`.
    pub fn flatten(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.a).chain(&self.b).copied().collect()
    }

    /// Euclidean distance between the concatenated parameter vectors.
    pub fn distance(&self, other: &ModelParams) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    /// Projects into the box `|θ_i| ≤ B`, `0 ≤ a_j ≤ B`, `|b_j| ≤ B`.
    pub fn clamp_to(&mut self, bound: f64) {
        for v in &mut self.theta {
            *v = v.clamp(-bound, bound);
        }
        for v in &mut self.a {
            *v = v.clamp(0.0, bound);
        }
        for v in &mut self.b {
            *v = v.clamp(-bound, bound);
        }
    }
}
