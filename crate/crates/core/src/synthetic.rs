//! Synthetic 2PL data with controllable discrimination sparsity and
//! MCAR / MAR / MNAR missingness.
//!
//! Generation order is fixed: zero mask on `a`, scores, Bernoulli responses,
//! then missingness. Each stage draws from its own sub-stream of the master
//! seed.

use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::{logistic, Temperature};
use crate::params::ModelParams;
use crate::response::{Response, ResponseMatrix};
use crate::rng::{stream_rng, streams};

/// Lower and upper bounds of the uniform draw for nonzero `a_j`.
pub const A_RANGE: (f64, f64) = (0.5, 1.0);
/// Variance of the easiness draw `b_j ~ N(0, 0.5)`.
pub const B_VARIANCE: f64 = 0.5;
pub const DEFAULT_MAR_BETA: f64 = 2.0;

const ALPHA_BRACKET: (f64, f64) = (-50.0, 50.0);
const ALPHA_MAX_ITER: usize = 200;
const ALPHA_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("could not calibrate MAR intercept for target rate {0}")]
    CalibrationFailed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    #[default]
    Mcar,
    Mar,
    Mnar,
}

impl FromStr for Pattern {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mcar" => Ok(Pattern::Mcar),
            "mar" => Ok(Pattern::Mar),
            "mnar" => Ok(Pattern::Mnar),
            other => Err(format!("unknown missingness pattern '{other}'")),
        }
    }
}

/// Recipe for one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_models: usize,
    pub n_items: usize,
    pub sigma: f64,
    /// Target missing rate for MCAR and MAR.
    pub rho: f64,
    pub pattern: Pattern,
    pub mar_beta: f64,
    /// Column gate rate for MNAR; falls back to `rho` when unset.
    pub mnar_col_rate: Option<f64>,
    /// Fraction of items with `a_j = 0`.
    pub sparsity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_models: 1000,
            n_items: 1000,
            sigma: 1.0,
            rho: 0.0,
            pattern: Pattern::Mcar,
            mar_beta: DEFAULT_MAR_BETA,
            mnar_col_rate: None,
            sparsity: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |msg: String| Err(SyntheticError::InvalidSpec(msg));
        if self.n_models == 0 || self.n_items == 0 {
            return bad("dimensions must be positive".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return bad(format!("sparsity must lie in [0, 1), got {}", self.sparsity));
        }
        if !self.mar_beta.is_finite() {
            return bad("mar_beta must be finite".into());
        }
        if let Some(rc) = self.mnar_col_rate {
            if !(0.0..=1.0).contains(&rc) {
                return bad(format!("mnar_col_rate must lie in [0, 1], got {rc}"));
            }
        }
        if self.pattern == Pattern::Mar && self.rho > 0.0 && (self.n_models < 2 || self.n_items < 2) {
            return bad("MAR missingness needs at least two rows and two columns".into());
        }
        Ok(())
    }

    pub fn temperature(&self) -> Temperature {
        Temperature::new(self.sigma).expect("validated sigma")
    }

    /// Number of zeroed discriminations, `round(s J)`.
    pub fn n_zero_items(&self) -> usize {
        (self.sparsity * self.n_items as f64).round() as usize
    }
}

/// Ground truth behind one synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub params: ModelParams,
    /// Row-major `N x J` true scores.
    pub scores: Vec<f64>,
    pub responses: ResponseMatrix,
    /// Sorted item indices with `a_j = 0`.
    pub zero_mask: Vec<usize>,
}

pub fn generate(spec: &SyntheticSpec) -> Result<GroundTruth, SyntheticError> {
    spec.validate()?;
    let (n, j) = (spec.n_models, spec.n_items);
    let t = spec.temperature();

    let mut rng = stream_rng(spec.seed, streams::PARAMS);
    let b_dist = Normal::new(0.0, B_VARIANCE.sqrt()).expect("positive variance");
    let theta: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut a: Vec<f64> = (0..j).map(|_| rng.random_range(A_RANGE.0..A_RANGE.1)).collect();
    let b: Vec<f64> = (0..j).map(|_| b_dist.sample(&mut rng)).collect();

    let mut rng = stream_rng(spec.seed, streams::SPARSITY);
    let mut zero_mask = sample(&mut rng, j, spec.n_zero_items()).into_vec();
    zero_mask.sort_unstable();
    for &k in &zero_mask {
        a[k] = 0.0;
    }

    let params = ModelParams::new(theta, a, b);
    let scores = params.dense_scores();

    let mut rng = stream_rng(spec.seed, streams::RESPONSES);
    let entries: Vec<_> = scores
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let y = if rng.random::<f64>() < logistic(x, t) {
                Response::Correct
            } else {
                Response::Incorrect
            };
            (k / j, k % j, y)
        })
        .collect();
    let full = ResponseMatrix::from_entries(n, j, entries).expect("generated entries are valid");

    let mut rng = stream_rng(spec.seed, streams::MISSINGNESS);
    let responses = match spec.pattern {
        Pattern::Mcar => mcar_with(&full, spec.rho, &mut rng),
        Pattern::Mar if spec.rho > 0.0 => mar_with(&full, spec.rho, spec.mar_beta, &mut rng)?,
        Pattern::Mar => full,
        Pattern::Mnar => mnar_with(&full, spec.mnar_col_rate.unwrap_or(spec.rho), &mut rng),
    };

    Ok(GroundTruth {
        params,
        scores,
        responses,
        zero_mask,
    })
}

fn mcar_with<R: Rng>(m: &ResponseMatrix, rho: f64, rng: &mut R) -> ResponseMatrix {
    if rho == 0.0 {
        return m.clone();
    }
    m.retain(|_, _, _| rng.random::<f64>() >= rho)
}

/// Drops each observed entry independently with probability `rho`.
pub fn apply_mcar(m: &ResponseMatrix, rho: f64, seed: u64) -> Result<ResponseMatrix, SyntheticError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(SyntheticError::InvalidSpec(format!("rho must lie in [0, 1), got {rho}")));
    }
    Ok(mcar_with(m, rho, &mut stream_rng(seed, streams::MISSINGNESS)))
}

/// Spatial position `Sp_ij = (r_i + c_j) / 2` with 1-based normalized indices;
/// `i` and `j` are 0-based here.
pub fn spatial_position(i: usize, j: usize, n_models: usize, n_items: usize) -> f64 {
    // (i1 - 1)/(N - 1) with i1 = i + 1
    let r = i as f64 / (n_models - 1) as f64;
    let c = j as f64 / (n_items - 1) as f64;
    0.5 * (r + c)
}

fn logistic_unit(x: f64) -> f64 {
    logistic(x, Temperature::default())
}

fn mean_mar_probability(alpha: f64, beta: f64, n: usize, j: usize) -> f64 {
    let col: Vec<f64> = (0..j).map(|c| c as f64 / (j - 1) as f64).collect();
    let mut total = 0.0;
    for i in 0..n {
        let r = i as f64 / (n - 1) as f64;
        total += col.iter().map(|&c| logistic_unit(alpha + beta * 0.5 * (r + c))).sum::<f64>();
    }
    total / (n * j) as f64
}

/// Finds `α` with grid-mean `Φ(α + β Sp_ij)` equal to `rho` by bisection.
pub fn calibrate_mar_alpha(rho: f64, beta: f64, n_models: usize, n_items: usize) -> Result<f64, SyntheticError> {
    let (mut lo, mut hi) = ALPHA_BRACKET;
    let f = |alpha: f64| mean_mar_probability(alpha, beta, n_models, n_items) - rho;
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(SyntheticError::CalibrationFailed(rho));
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..ALPHA_MAX_ITER {
        mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() <= ALPHA_TOL {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

fn mar_with<R: Rng>(m: &ResponseMatrix, rho: f64, beta: f64, rng: &mut R) -> Result<ResponseMatrix, SyntheticError> {
    let (n, j) = (m.n_models(), m.n_items());
    let alpha = calibrate_mar_alpha(rho, beta, n, j)?;
    Ok(m.retain(|i, c, _| {
        let p = logistic_unit(alpha + beta * spatial_position(i, c, n, j));
        rng.random::<f64>() >= p
    }))
}

/// Graded missingness: entry `(i, j)` is dropped with probability `Φ(α + β Sp_ij)`,
/// `α` calibrated so the grid-average drop probability equals `rho`.
pub fn apply_mar(m: &ResponseMatrix, rho: f64, beta: f64, seed: u64) -> Result<ResponseMatrix, SyntheticError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(SyntheticError::InvalidSpec(format!("MAR rho must lie in (0, 1), got {rho}")));
    }
    if m.n_models() < 2 || m.n_items() < 2 {
        return Err(SyntheticError::InvalidSpec("MAR needs at least two rows and columns".into()));
    }
    mar_with(m, rho, beta, &mut stream_rng(seed, streams::MISSINGNESS))
}

fn mnar_with<R: Rng>(m: &ResponseMatrix, col_rate: f64, rng: &mut R) -> ResponseMatrix {
    let gates: Vec<bool> = (0..m.n_items()).map(|_| rng.random::<f64>() < col_rate).collect();
    m.retain(|_, j, y| !(gates[j] && y == Response::Incorrect))
}

/// Column-gated MNAR: each column is gated with probability `col_rate`, and
/// gated columns lose every incorrect response.
pub fn apply_mnar(m: &ResponseMatrix, col_rate: f64, seed: u64) -> Result<ResponseMatrix, SyntheticError> {
    if !(0.0..=1.0).contains(&col_rate) {
        return Err(SyntheticError::InvalidSpec(format!("column rate must lie in [0, 1], got {col_rate}")));
    }
    Ok(mnar_with(m, col_rate, &mut stream_rng(seed, streams::MISSINGNESS)))
}
