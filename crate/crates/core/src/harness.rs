//! Replicate, stability and ranking harnesses behind the CLI.
//!
//! Replicates run on a bounded rayon pool; results are always returned in
//! input order so output files do not depend on scheduling.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::fit::{fit, FitConfig, FitError, FitResult};
use crate::metrics::{
    average_accuracy, coefficient_of_variation, dense_descending_ranks, evaluate, ranking_flow, spearman,
    FlowEntry, MetricError, MetricsReport, Truth,
};
use crate::params::ModelParams;
use crate::response::ResponseMatrix;
use crate::synthetic::{generate, SyntheticError, SyntheticSpec};

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "CBMM_THREADS";
pub const DEFAULT_REPLICATES: usize = 50;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("replicate {replicate} at scale {scale}: {source}")]
    Cell {
        scale: f64,
        replicate: usize,
        #[source]
        source: FitError,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Worker count from `threads`, then `CBMM_THREADS`, then the available cores.
pub fn resolve_threads(threads: Option<usize>) -> usize {
    threads
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))
}

/// Runs `fit` and measures its wall time with a monotonic clock.
pub fn timed_fit(m: &ResponseMatrix, cfg: &FitConfig, init: Option<&ModelParams>) -> Result<(FitResult, f64), FitError> {
    let start = Instant::now();
    let r = fit(m, cfg, init)?;
    Ok((r, start.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub data_seed: u64,
    pub fit_seed: u64,
    pub realized_missing_rate: f64,
    pub metrics: MetricsReport,
    pub runtime_secs: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Generates and fits `replicates` datasets; replicate `r` uses data seed
/// `spec.seed + r` and fit seed `cfg.seed + r`.
pub fn run_replicates(
    spec: &SyntheticSpec,
    cfg: &FitConfig,
    replicates: usize,
    threads: usize,
) -> Result<Vec<ReplicateRow>, HarnessError> {
    spec.validate()?;
    cfg.validate()?;
    let sigma = spec.temperature();
    pool(threads)?.install(|| {
        (0..replicates)
            .into_par_iter()
            .map(|r| {
                let data_seed = spec.seed.wrapping_add(r as u64);
                let fit_seed = cfg.seed.wrapping_add(r as u64);
                let g = generate(&SyntheticSpec { seed: data_seed, ..spec.clone() })?;
                let run_cfg = FitConfig { seed: fit_seed, sigma, ..cfg.clone() };
                let (res, secs) = timed_fit(&g.responses, &run_cfg, None)?;
                let truth = Truth {
                    theta: &g.params.theta,
                    a: &g.params.a,
                    b: &g.params.b,
                    scores: Some(&g.scores),
                };
                let metrics = evaluate(&truth, &res.params, sigma)?;
                Ok(ReplicateRow {
                    replicate: r,
                    data_seed,
                    fit_seed,
                    realized_missing_rate: g.responses.missing_rate(),
                    metrics,
                    runtime_secs: secs,
                    iterations: res.iterations,
                    converged: res.converged,
                })
            })
            .collect()
    })
}

pub fn replicate_csv(rows: &[ReplicateRow]) -> String {
    use crate::io::fmt_opt;
    let mut out = String::from(
        "replicate,data_seed,fit_seed,realized_missing_rate,spearman_theta,spearman_a,rmse_b,rel_err_x,hellinger,recall_a,precision_a,runtime_secs,iterations,converged\n",
    );
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.replicate,
            r.data_seed,
            r.fit_seed,
            r.realized_missing_rate,
            fmt_opt(m.spearman_theta),
            fmt_opt(m.spearman_a),
            m.rmse_b,
            fmt_opt(m.rel_err_x),
            fmt_opt(m.hellinger),
            fmt_opt(m.recall_a),
            fmt_opt(m.precision_a),
            r.runtime_secs,
            r.iterations,
            r.converged
        ));
    }
    out
}

/// Fits every (scale, replicate) cell. `scales` are variances of `log a_j`
/// and `b_j` at initialization; replicate `r` uses seed `cfg.seed + r` at
/// every scale. Returned as `[scale][replicate]`.
pub fn stability_fits(
    m: &ResponseMatrix,
    scales: &[f64],
    replicates: usize,
    cfg: &FitConfig,
    threads: usize,
) -> Result<Vec<Vec<FitResult>>, HarnessError> {
    if scales.is_empty() || replicates == 0 {
        return Err(HarnessError::Invalid("need at least one scale and one replicate".into()));
    }
    if let Some(s) = scales.iter().find(|s| !(**s > 0.0)) {
        return Err(HarnessError::Invalid(format!("initialization scale must be positive, got {s}")));
    }
    let cells: Vec<(usize, usize)> = (0..scales.len()).flat_map(|k| (0..replicates).map(move |r| (k, r))).collect();
    let results: Vec<Result<FitResult, HarnessError>> = pool(threads)?.install(|| {
        cells
            .par_iter()
            .map(|&(k, r)| {
                let sd = scales[k].sqrt();
                let run_cfg = FitConfig {
                    seed: cfg.seed.wrapping_add(r as u64),
                    init_sd_log_a: sd,
                    init_sd_b: sd,
                    ..cfg.clone()
                };
                fit(m, &run_cfg, None).map_err(|source| HarnessError::Cell { scale: scales[k], replicate: r, source })
            })
            .collect()
    });
    let mut grid: Vec<Vec<FitResult>> = (0..scales.len()).map(|_| Vec::with_capacity(replicates)).collect();
    for ((k, _), res) in cells.into_iter().zip(results) {
        grid[k].push(res?);
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_sd(values: &[f64]) -> MeanSd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanSd { mean, sd }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCell {
    pub row_scale: f64,
    pub col_scale: f64,
    pub theta: MeanSd,
    pub a: MeanSd,
    pub b: MeanSd,
}

/// Lower-triangular table of Spearman agreement between scales, pairing the
/// fits that share a replicate seed.
pub fn stability_table(scales: &[f64], grid: &[Vec<FitResult>]) -> Result<Vec<StabilityCell>, HarnessError> {
    let mut cells = Vec::new();
    for k in 0..scales.len() {
        for l in 0..=k {
            let (mut th, mut aa, mut bb) = (Vec::new(), Vec::new(), Vec::new());
            for (f1, f2) in grid[k].iter().zip(&grid[l]) {
                let (p1, p2) = (&f1.params, &f2.params);
                th.push(spearman(&p1.theta, &p2.theta)?);
                aa.push(spearman(&p1.a, &p2.a)?);
                bb.push(spearman(&p1.b, &p2.b)?);
            }
            cells.push(StabilityCell {
                row_scale: scales[k],
                col_scale: scales[l],
                theta: mean_sd(&th),
                a: mean_sd(&aa),
                b: mean_sd(&bb),
            });
        }
    }
    Ok(cells)
}

pub fn stability_csv(cells: &[StabilityCell]) -> String {
    let mut out = String::from("row_scale,col_scale,theta_mean,theta_sd,a_mean,a_sd,b_mean,b_sd\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.row_scale, c.col_scale, c.theta.mean, c.theta.sd, c.a.mean, c.a.sd, c.b.mean, c.b.sd
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub model: usize,
    pub avg_accuracy: Option<f64>,
    pub theta_hat: f64,
    pub rank_by_accuracy: Option<usize>,
    pub rank_by_theta: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rows: Vec<RankRow>,
    /// Spearman between accuracy and ability over models with observed items.
    pub spearman: f64,
    /// Same, restricted to the top `top_pct` percent of models by accuracy.
    pub spearman_top: Option<f64>,
    pub cv_a: f64,
    pub flow: Vec<FlowEntry>,
}

pub fn rank_models(
    m: &ResponseMatrix,
    params: &ModelParams,
    top_pct: Option<f64>,
    top_k: usize,
) -> Result<RankReport, HarnessError> {
    params
        .validate_for(m)
        .map_err(|e| HarnessError::Invalid(format!("fit does not match response matrix: {e}")))?;
    let acc = average_accuracy(m);
    let observed: Vec<usize> = (0..m.n_models()).filter(|&i| acc[i].is_some()).collect();
    let acc_obs: Vec<f64> = observed.iter().map(|&i| acc[i].unwrap()).collect();
    let theta_obs: Vec<f64> = observed.iter().map(|&i| params.theta[i]).collect();

    let rho = spearman(&acc_obs, &theta_obs)?;
    let spearman_top = match top_pct {
        Some(pct) => {
            if !(pct > 0.0 && pct <= 100.0) {
                return Err(HarnessError::Invalid(format!("top percentage must lie in (0, 100], got {pct}")));
            }
            let mut order: Vec<usize> = (0..observed.len()).collect();
            order.sort_by(|&x, &y| acc_obs[y].total_cmp(&acc_obs[x]).then(x.cmp(&y)));
            let keep = ((pct / 100.0) * observed.len() as f64).ceil() as usize;
            let sel = &order[..keep.min(order.len())];
            let a: Vec<f64> = sel.iter().map(|&k| acc_obs[k]).collect();
            let t: Vec<f64> = sel.iter().map(|&k| theta_obs[k]).collect();
            Some(spearman(&a, &t)?)
        }
        None => None,
    };

    let acc_ranks = dense_descending_ranks(&acc_obs);
    let theta_ranks = dense_descending_ranks(&params.theta);
    let mut rank_acc = vec![None; m.n_models()];
    for (k, &i) in observed.iter().enumerate() {
        rank_acc[i] = Some(acc_ranks[k]);
    }
    let rows = (0..m.n_models())
        .map(|i| RankRow {
            model: i,
            avg_accuracy: acc[i],
            theta_hat: params.theta[i],
            rank_by_accuracy: rank_acc[i],
            rank_by_theta: theta_ranks[i],
        })
        .collect();

    let flow = ranking_flow(&acc_obs, &theta_obs, top_k)?
        .into_iter()
        .map(|e| FlowEntry { model: observed[e.model], ..e })
        .collect();

    Ok(RankReport {
        rows,
        spearman: rho,
        spearman_top,
        cv_a: coefficient_of_variation(&params.a)?,
        flow,
    })
}

pub fn ranking_csv(r: &RankReport) -> String {
    use crate::io::fmt_opt;
    let mut out = String::from("model,avg_accuracy,theta_hat,rank_by_accuracy,rank_by_theta\n");
    for row in &r.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.model,
            fmt_opt(row.avg_accuracy),
            row.theta_hat,
            row.rank_by_accuracy.map_or_else(|| "NA".into(), |v| v.to_string()),
            row.rank_by_theta
        ));
    }
    out
}

pub fn flow_csv(flow: &[FlowEntry]) -> String {
    let mut out = String::from("model,rank_acc,rank_theta\n");
    for e in flow {
        out.push_str(&format!("{},{},{}\n", e.model, e.rank_by_accuracy, e.rank_by_theta));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd_of_single_value() {
        assert_eq!(mean_sd(&[0.7]), MeanSd { mean: 0.7, sd: 0.0 });
        let m = mean_sd(&[1.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.sd - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn replicate_rows_are_ordered_and_deterministic() {
        let spec = SyntheticSpec { n_models: 30, n_items: 20, seed: 100, ..Default::default() };
        let cfg = FitConfig { seed: 7, ..Default::default() };
        let rows = run_replicates(&spec, &cfg, 4, 3).unwrap();
        assert_eq!(rows.iter().map(|r| r.replicate).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(rows[2].data_seed, 102);
        assert!(rows.iter().all(|r| r.runtime_secs >= 0.0));
        let again = run_replicates(&spec, &cfg, 4, 1).unwrap();
        for (x, y) in rows.iter().zip(&again) {
            assert_eq!(x.metrics, y.metrics);
            assert_eq!(x.iterations, y.iterations);
        }
        let csv = replicate_csv(&rows);
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn stability_diagonal_is_exact() {
        let g = generate(&SyntheticSpec { n_models: 40, n_items: 30, seed: 3, ..Default::default() }).unwrap();
        let scales = [1.0, 1.0];
        let grid = stability_fits(&g.responses, &scales, 1, &FitConfig::default(), 2).unwrap();
        let cells = stability_table(&scales, &grid).unwrap();
        assert_eq!(cells.len(), 3);
        for c in &cells {
            assert!((c.theta.mean - 1.0).abs() < 1e-12);
            assert_eq!(c.theta.sd, 0.0);
        }
    }

    #[test]
    fn rank_monotone_theta_gives_unit_spearman() {
        let m = ResponseMatrix::from_dense(4, 3, &[1, 1, 1, 1, 1, -1, 1, -1, -1, -1, -1, -1]).unwrap();
        let acc: Vec<f64> = average_accuracy(&m).into_iter().map(Option::unwrap).collect();
        let theta: Vec<f64> = acc.iter().map(|v| 2.0 * v - 0.3).collect();
        let p = ModelParams::new(theta, vec![0.7; 3], vec![0.0; 3]);
        let r = rank_models(&m, &p, Some(50.0), 4).unwrap();
        assert!((r.spearman - 1.0).abs() < 1e-12);
        assert_eq!(r.cv_a, 0.0);
        assert_eq!(r.flow.len(), 4);
        assert!(r.flow.iter().all(|e| e.rank_by_accuracy == e.rank_by_theta));
        assert!((r.spearman_top.unwrap() - 1.0).abs() < 1e-12);
    }
}
