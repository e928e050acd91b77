//! Logistic link, the masked cross-entropy objective and the quadratic
//! majorization target used by each MM step.

use std::ops::{Index, IndexMut};

use thiserror::Error;

use crate::response::{scaled_response, ResponseMatrix};

/// Probabilities are clamped into `[EPS, 1 - EPS]` before taking logs in [`bce_loss`].
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("temperature must be positive and finite (got {0})")]
pub struct InvalidTemperature(pub f64);

/// Link temperature `σ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(sigma: f64) -> Result<Self, InvalidTemperature> {
        if sigma.is_finite() && sigma > 0.0 {
            Ok(Temperature(sigma))
        } else {
            Err(InvalidTemperature(sigma))
        }
    }

    #[inline]
    pub fn sigma(self) -> f64 {
        self.0
    }

    /// Lipschitz constant of the per-entry loss gradient, `1 / (4σ²)`.
    #[inline]
    pub fn lipschitz(self) -> f64 {
        1.0 / (4.0 * self.0 * self.0)
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature(1.0)
    }
}

impl TryFrom<f64> for Temperature {
    type Error = InvalidTemperature;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Temperature::new(v)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

/// Scores `x_ij` on the observed entries of a [`ResponseMatrix`], stored in
/// the matrix's CSR order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField(Vec<f64>);

impl ScoreField {
    pub fn zeros(m: &ResponseMatrix) -> Self {
        ScoreField(vec![0.0; m.n_observed()])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ScoreField(values)
    }

    /// Samples a dense row-major `N x J` grid at the observed entries.
    pub fn from_dense(m: &ResponseMatrix, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), m.n_models() * m.n_items());
        ScoreField(m.entries().map(|(i, j, _)| dense[i * m.n_items() + j]).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Index<usize> for ScoreField {
    type Output = f64;
    fn index(&self, pos: usize) -> &f64 {
        &self.0[pos]
    }
}

impl IndexMut<usize> for ScoreField {
    fn index_mut(&mut self, pos: usize) -> &mut f64 {
        &mut self.0[pos]
    }
}

/// `Φ(x) = 1 / (1 + exp(-x/σ))`, evaluated without overflow.
#[inline]
pub fn logistic(x: f64, t: Temperature) -> f64 {
    let z = x / t.sigma();
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Masked binary cross-entropy `ℓ(X)` summed over the observed entries.
pub fn bce_loss(x: &ScoreField, m: &ResponseMatrix, t: Temperature) -> f64 {
    debug_assert_eq!(x.len(), m.n_observed());
    let mut total = 0.0;
    for (pos, &xij) in x.as_slice().iter().enumerate() {
        let gamma = scaled_response(m.response_at(pos));
        let p = logistic(xij, t).clamp(PROB_EPS, 1.0 - PROB_EPS);
        total -= gamma * p.ln() + (1.0 - gamma) * (1.0 - p).ln();
    }
    total
}

/// Entrywise gradient `∂ℓ/∂x_ij = -(y_ij/σ) Φ(-y_ij x_ij)` of the unclamped loss.
pub fn loss_gradient(x: &ScoreField, m: &ResponseMatrix, t: Temperature) -> ScoreField {
    let inv_sigma = 1.0 / t.sigma();
    ScoreField(
        x.as_slice()
            .iter()
            .enumerate()
            .map(|(pos, &xij)| {
                let y = m.response_at(pos).sign();
                -y * inv_sigma * logistic(-y * xij, t)
            })
            .collect(),
    )
}

/// Majorization target `Ỹ = X̃ + 4σ Y∘Φ(-Y∘X̃)` on the observed entries.
pub fn surrogate_target(x_tilde: &ScoreField, m: &ResponseMatrix, t: Temperature) -> ScoreField {
    surrogate_target_counted(x_tilde, m, t).0
}

/// [`surrogate_target`] together with the number of score entries it read and wrote.
pub fn surrogate_target_counted(
    x_tilde: &ScoreField,
    m: &ResponseMatrix,
    t: Temperature,
) -> (ScoreField, usize) {
    debug_assert_eq!(x_tilde.len(), m.n_observed());
    let step = 4.0 * t.sigma();
    let mut out = Vec::with_capacity(x_tilde.len());
    let mut touches = 0usize;
    for i in 0..m.n_models() {
        for pos in m.row_range(i) {
            let y = m.response_at(pos).sign();
            let xt = x_tilde[pos];
            out.push(xt + step * y * logistic(-y * xt, t));
            touches += 1;
        }
    }
    (ScoreField(out), touches)
}
