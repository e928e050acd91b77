//! Projected-gradient reference fitter.
//!
//! Plain gradient descent on `(θ, a, b)` with projection `a ← max(a, 0)` and
//! Armijo backtracking. It shares only the objective and its entrywise
//! gradient with the cBMM path; none of the block updates.

use crate::fit::{kkt_residual, parameter_gradients, FitError, FitResult, Method, RunInfo, SweepTouches, COLLAPSE_NORM};
use crate::link::{bce_loss, Temperature};
use crate::params::ModelParams;
use crate::response::ResponseMatrix;

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Largest step tried at each iteration.
    pub step_size: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl OracleConfig {
    /// Step `0.1 / L` with `L = 1/(4σ²)`, 20,000 iterations, tolerance `1e-10`.
    pub fn for_temperature(t: Temperature) -> Self {
        OracleConfig {
            step_size: 0.1 / t.lipschitz(),
            max_iter: 20_000,
            tol: 1e-10,
            seed: 0,
        }
    }
}

fn projected_step(p: &ModelParams, g: &ModelParams, step: f64) -> ModelParams {
    let shift = |v: &[f64], d: &[f64]| v.iter().zip(d).map(|(x, dx)| x - step * dx).collect::<Vec<_>>();
    let mut a = shift(&p.a, &g.a);
    a.iter_mut().for_each(|v| *v = v.max(0.0));
    ModelParams::new(shift(&p.theta, &g.theta), a, shift(&p.b, &g.b))
}

pub fn fit_oracle(
    m: &ResponseMatrix,
    t: Temperature,
    cfg: &OracleConfig,
    init: &ModelParams,
) -> Result<FitResult, FitError> {
    if !(cfg.step_size > 0.0) || !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(FitError::InvalidConfig("oracle needs positive step, tolerance and iteration count".into()));
    }
    init.validate_for(m)?;
    let mut params = init.clone();
    let mut loss = bce_loss(&params.scores_on(m), m, t);
    if !loss.is_finite() {
        return Err(FitError::NonFiniteLoss { iteration: 0, loss });
    }
    let mut loss_trace = vec![loss];
    let mut step_norms = Vec::new();
    let mut converged = loss == 0.0;
    let mut iterations = 0;
    let mut step = cfg.step_size;

    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let grad = parameter_gradients(&params, m, t);
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = projected_step(&params, &grad, step);
            let cand_loss = bce_loss(&cand.scores_on(m), m, t);
            if !cand_loss.is_finite() {
                return Err(FitError::NonFiniteLoss { iteration: iterations, loss: cand_loss });
            }
            let moved = cand.distance(&params);
            if cand_loss <= loss - ARMIJO_C / step * moved * moved {
                accepted = Some((cand, cand_loss, moved));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_loss, moved)) = accepted else {
            // No descent at any resolvable step: stationary to machine precision.
            loss_trace.push(loss);
            step_norms.push(0.0);
            converged = true;
            break;
        };
        let delta = (cand_loss - loss).abs() / loss.abs();
        params = cand;
        loss = cand_loss;
        loss_trace.push(loss);
        step_norms.push(moved);
        converged = loss == 0.0 || delta <= cfg.tol;
        step = (step * 2.0).min(cfg.step_size);
    }

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let degenerate_rows = (0..m.n_models())
        .filter(|&i| m.row_items(i).iter().all(|&j| params.a[j] == 0.0))
        .collect();
    let degenerate_cols = (0..m.n_items()).filter(|&j| m.col_models(j).is_empty()).collect();
    Ok(FitResult {
        kkt: kkt_residual(&params, m, t),
        collapsed: norm(&params.theta) < COLLAPSE_NORM || norm(&params.a) < COLLAPSE_NORM,
        params,
        loss_trace,
        step_norms,
        iterations,
        converged,
        degenerate_rows,
        degenerate_cols,
        touches: SweepTouches::default(),
        run: RunInfo {
            method: Method::Oracle,
            sigma: t.sigma(),
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            seed: cfg.seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{init_params, FitConfig};

    #[test]
    fn default_step_is_tenth_of_inverse_lipschitz() {
        let cfg = OracleConfig::for_temperature(Temperature::new(0.5).unwrap());
        assert!((cfg.step_size - 0.1).abs() < 1e-15);
        assert_eq!(cfg.max_iter, 20_000);
        assert_eq!(cfg.tol, 1e-10);
    }

    #[test]
    fn loss_trace_is_nonincreasing() {
        let m = ResponseMatrix::from_dense(4, 5, &[1, -1, 1, 1, -1, -1, -1, 1, 1, 1, 1, 1, -1, 1, -1, -1, 1, -1, -1, 1]).unwrap();
        let init = init_params(4, 5, &FitConfig { seed: 2, ..Default::default() });
        let cfg = OracleConfig { max_iter: 500, ..OracleConfig::for_temperature(Temperature::default()) };
        let r = fit_oracle(&m, Temperature::default(), &cfg, &init).unwrap();
        for w in r.loss_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(r.params.a.iter().all(|&v| v >= 0.0));
        assert_eq!(r.run.method, Method::Oracle);
    }
}
