//! The cBMM driver: initialization, the majorize/minimize loop and
//! first-order stationarity diagnostics.

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{update_a, update_b, update_theta};
use crate::link::{bce_loss, loss_gradient, surrogate_target_counted, Temperature};
use crate::metrics::{spearman, MetricError};
use crate::params::{ModelParams, ParamsError};
use crate::response::ResponseMatrix;
use crate::rng::{stream_rng, streams};

/// Norm below which `θ` or `a` is reported as collapsed.
pub const COLLAPSE_NORM: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("objective became non-finite ({loss}) at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Params(#[from] ParamsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cbmm,
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub sigma: Temperature,
    /// Relative loss-change threshold `δ`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Standard deviation of `log a_j` at initialization.
    pub init_sd_log_a: f64,
    /// Standard deviation of `b_j` at initialization.
    pub init_sd_b: f64,
    /// Box bound `B` on `|θ_i|`, `a_j` and `|b_j|`.
    pub clamp_bound: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            sigma: Temperature::default(),
            tol: 1e-4,
            max_iter: 1000,
            seed: 0,
            init_sd_log_a: 1.0,
            init_sd_b: 1.0,
            clamp_bound: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.tol > 0.0) {
            return Err(FitError::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(FitError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.init_sd_log_a > 0.0 && self.init_sd_b > 0.0) {
            return Err(FitError::InvalidConfig("initialization scales must be positive".into()));
        }
        if let Some(bound) = self.clamp_bound {
            if !(bound > 0.0) {
                return Err(FitError::InvalidConfig(format!("clamp bound must be positive, got {bound}")));
            }
        }
        Ok(())
    }
}

/// First-order stationarity summary for `min ℓ` subject to `a ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// `‖∇_θ ℓ‖₂`.
    pub grad_theta_norm: f64,
    /// `‖∇_b ℓ‖₂`.
    pub grad_b_norm: f64,
    pub min_a: f64,
    /// Smallest `(∇_a ℓ)_j` over `j` with `a_j = 0`; 0 when no coordinate sits on the bound.
    pub min_grad_a_on_active: f64,
    /// `max_j |a_j (∇_a ℓ)_j|`.
    pub complementarity: f64,
}

/// Echo of the settings a fit was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub method: Method,
    pub sigma: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

/// Entry counts of the kernels in the last sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepTouches {
    pub surrogate: usize,
    pub update_a: usize,
    pub update_b: usize,
    pub update_theta: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ModelParams,
    /// `loss_trace[0]` is the objective at the starting point; entry `t` follows sweep `t`.
    pub loss_trace: Vec<f64>,
    /// `‖W⁽ᵗ⁾ - W⁽ᵗ⁻¹⁾‖` for each sweep.
    pub step_norms: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt: KktResidual,
    pub degenerate_rows: Vec<usize>,
    pub degenerate_cols: Vec<usize>,
    /// `‖θ‖` or `‖a‖` fell below [`COLLAPSE_NORM`] at the returned point.
    pub collapsed: bool,
    pub touches: SweepTouches,
    pub run: RunInfo,
}

impl FitResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("loss trace always holds the initial loss")
    }
}

/// Draws `θ_i ~ N(0,1)`, `log a_j ~ N(0, sd_a²)`, `b_j ~ N(0, sd_b²)` from the config seed.
pub fn init_params(n_models: usize, n_items: usize, cfg: &FitConfig) -> ModelParams {
    let mut rng = stream_rng(cfg.seed, streams::INIT);
    let log_a = Normal::new(0.0, cfg.init_sd_log_a).expect("positive scale");
    let b_dist = Normal::new(0.0, cfg.init_sd_b).expect("positive scale");
    let theta = (0..n_models).map(|_| StandardNormal.sample(&mut rng)).collect();
    let a = (0..n_items).map(|_| log_a.sample(&mut rng).exp()).collect();
    let b = (0..n_items).map(|_| b_dist.sample(&mut rng)).collect();
    ModelParams::new(theta, a, b)
}

fn merge_flags(mut a: Vec<usize>, b: Vec<usize>) -> Vec<usize> {
    a.extend(b);
    a.sort_unstable();
    a.dedup();
    a
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs cBMM from `init`, or from [`init_params`] when `init` is `None`.
pub fn fit(m: &ResponseMatrix, cfg: &FitConfig, init: Option<&ModelParams>) -> Result<FitResult, FitError> {
    cfg.validate()?;
    let t = cfg.sigma;
    let mut params = match init {
        Some(p) => {
            p.validate_for(m)?;
            p.clone()
        }
        None => init_params(m.n_models(), m.n_items(), cfg),
    };
    if let Some(bound) = cfg.clamp_bound {
        params.clamp_to(bound);
    }

    let mut x = params.scores_on(m);
    let mut loss_old = bce_loss(&x, m, t);
    if !loss_old.is_finite() {
        return Err(FitError::NonFiniteLoss { iteration: 0, loss: loss_old });
    }
    let mut loss_trace = vec![loss_old];
    let mut step_norms = Vec::new();
    let mut converged = loss_old == 0.0;
    let mut iterations = 0;
    let mut degenerate_rows = Vec::new();
    let mut degenerate_cols = Vec::new();
    let mut touches = SweepTouches::default();

    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let (y_tilde, surrogate_touches) = surrogate_target_counted(&x, m, t);
        let previous = params.clone();

        // Each coordinate problem is a 1-D convex quadratic, so clamping the
        // block minimizer gives the exact box-constrained minimizer.
        let out_a = update_a(&params.theta, &params.b, &y_tilde, m);
        params.a = out_a.values;
        if let Some(bound) = cfg.clamp_bound {
            params.a.iter_mut().for_each(|v| *v = v.min(bound));
        }
        let out_b = update_b(&params.theta, &params.a, &y_tilde, m);
        params.b = out_b.values;
        if let Some(bound) = cfg.clamp_bound {
            params.b.iter_mut().for_each(|v| *v = v.clamp(-bound, bound));
        }
        let out_theta = update_theta(&params.a, &params.b, &y_tilde, m);
        params.theta = out_theta.values;
        if let Some(bound) = cfg.clamp_bound {
            params.theta.iter_mut().for_each(|v| *v = v.clamp(-bound, bound));
        }

        touches = SweepTouches {
            surrogate: surrogate_touches,
            update_a: out_a.touches,
            update_b: out_b.touches,
            update_theta: out_theta.touches,
        };
        degenerate_cols = merge_flags(out_a.degenerate, out_b.degenerate);
        degenerate_rows = out_theta.degenerate;

        x = params.scores_on(m);
        let loss_new = bce_loss(&x, m, t);
        if !loss_new.is_finite() {
            return Err(FitError::NonFiniteLoss { iteration: iterations, loss: loss_new });
        }
        loss_trace.push(loss_new);
        step_norms.push(params.distance(&previous));

        converged = loss_old == 0.0 || (loss_new - loss_old).abs() / loss_old.abs() <= cfg.tol;
        loss_old = loss_new;
    }

    let kkt = kkt_residual(&params, m, t);
    let collapsed = l2(&params.theta) < COLLAPSE_NORM || l2(&params.a) < COLLAPSE_NORM;
    Ok(FitResult {
        params,
        loss_trace,
        step_norms,
        iterations,
        converged,
        kkt,
        degenerate_rows,
        degenerate_cols,
        collapsed,
        touches,
        run: RunInfo {
            method: Method::Cbmm,
            sigma: t.sigma(),
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            seed: cfg.seed,
        },
    })
}

/// Gradients of `ℓ(θaᵀ + 1bᵀ)` with respect to `θ`, `a` and `b`.
pub fn parameter_gradients(p: &ModelParams, m: &ResponseMatrix, t: Temperature) -> ModelParams {
    let g = loss_gradient(&p.scores_on(m), m, t);
    let mut grad_theta = vec![0.0; m.n_models()];
    let mut grad_a = vec![0.0; m.n_items()];
    let mut grad_b = vec![0.0; m.n_items()];
    for (i, gt) in grad_theta.iter_mut().enumerate() {
        for pos in m.row_range(i) {
            let j = m.col_at(pos);
            *gt += g[pos] * p.a[j];
            grad_a[j] += g[pos] * p.theta[i];
            grad_b[j] += g[pos];
        }
    }
    ModelParams::new(grad_theta, grad_a, grad_b)
}

pub fn kkt_residual(p: &ModelParams, m: &ResponseMatrix, t: Temperature) -> KktResidual {
    let grad = parameter_gradients(p, m, t);
    let min_a = p.a.iter().copied().fold(f64::INFINITY, f64::min);
    let min_grad_a_on_active = p
        .a
        .iter()
        .zip(&grad.a)
        .filter(|(&a, _)| a == 0.0)
        .map(|(_, &g)| g)
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |v| v.min(g))))
        .unwrap_or(0.0);
    let complementarity = p
        .a
        .iter()
        .zip(&grad.a)
        .map(|(a, g)| (a * g).abs())
        .fold(0.0, f64::max);
    KktResidual {
        grad_theta_norm: l2(&grad.theta),
        grad_b_norm: l2(&grad.b),
        min_a: if min_a.is_finite() { min_a } else { 0.0 },
        min_grad_a_on_active,
        complementarity,
    }
}

/// Rank agreement of two parameter triplets, `(ρ_θ, ρ_a, ρ_b)`.
pub fn equivalence_check(p1: &ModelParams, p2: &ModelParams) -> Result<(f64, f64, f64), MetricError> {
    Ok((
        spearman(&p1.theta, &p2.theta)?,
        spearman(&p1.a, &p2.a)?,
        spearman(&p1.b, &p2.b)?,
    ))
}
