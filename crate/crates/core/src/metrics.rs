//! Recovery metrics against a known ground truth and ranking analytics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::{logistic, Temperature};
use crate::response::{scaled_response, ResponseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("rank correlation undefined for a constant vector")]
    DegenerateVector,
    #[error("reference score matrix is identically zero")]
    ZeroTruth,
    #[error("coefficient of variation undefined for non-positive mean")]
    ZeroMean,
}

fn check_lengths(u: &[f64], v: &[f64]) -> Result<(), MetricError> {
    if u.len() != v.len() {
        return Err(MetricError::LengthMismatch(u.len(), v.len()));
    }
    Ok(())
}

/// Ranks `1..=n` in ascending order, ties receiving the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&x, &y| v[x].total_cmp(&v[y]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (da, db) = (a - mu, b - mv);
        suv += da * db;
        suu += da * da;
        svv += db * db;
    }
    if suu == 0.0 || svv == 0.0 {
        return Err(MetricError::DegenerateVector);
    }
    Ok((suv / (suu * svv).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    check_lengths(u, v)?;
    if u.len() < 2 {
        return Err(MetricError::TooShort(u.len()));
    }
    pearson(&average_ranks(u), &average_ranks(v))
}

pub fn rmse(u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    check_lengths(u, v)?;
    if u.is_empty() {
        return Err(MetricError::TooShort(0));
    }
    let ss: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / u.len() as f64).sqrt())
}

/// `‖X - X̂‖²_F / ‖X‖²_F` over the full grid.
pub fn relative_error(x_true: &[f64], x_hat: &[f64]) -> Result<f64, MetricError> {
    check_lengths(x_true, x_hat)?;
    let denom: f64 = x_true.iter().map(|x| x * x).sum();
    if denom == 0.0 {
        return Err(MetricError::ZeroTruth);
    }
    let num: f64 = x_true.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / denom)
}

/// Squared Hellinger distance between Bernoulli(p) and Bernoulli(q).
#[inline]
pub fn hellinger_sq(p: f64, q: f64) -> f64 {
    (p.sqrt() - q.sqrt()).powi(2) + ((1.0 - p).sqrt() - (1.0 - q).sqrt()).powi(2)
}

/// Grid average of the squared Hellinger distance between `Φ(x̂_ij)` and `Φ(x_ij)`.
pub fn hellinger(x_true: &[f64], x_hat: &[f64], t: Temperature) -> Result<f64, MetricError> {
    check_lengths(x_true, x_hat)?;
    if x_true.is_empty() {
        return Err(MetricError::TooShort(0));
    }
    let total: f64 = x_true
        .iter()
        .zip(x_hat)
        .map(|(&x, &xh)| hellinger_sq(logistic(xh, t), logistic(x, t)))
        .sum();
    Ok(total / x_true.len() as f64)
}

/// Recall and precision of the recovered support of `a`; `None` marks `0/0`.
pub fn sparsity_scores(a_true: &[f64], a_hat: &[f64]) -> Result<(Option<f64>, Option<f64>), MetricError> {
    check_lengths(a_true, a_hat)?;
    let (mut tp, mut fn_, mut fp) = (0usize, 0usize, 0usize);
    for (&t, &h) in a_true.iter().zip(a_hat) {
        match (t != 0.0, h != 0.0) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok((ratio(tp, tp + fn_), ratio(tp, tp + fp)))
}

/// Mean scaled response per model; `None` for models without observed items.
pub fn average_accuracy(m: &ResponseMatrix) -> Vec<Option<f64>> {
    (0..m.n_models())
        .map(|i| {
            let range = m.row_range(i);
            let n = range.len();
            (n > 0).then(|| range.map(|pos| scaled_response(m.response_at(pos))).sum::<f64>() / n as f64)
        })
        .collect()
}

/// Population standard deviation over mean.
pub fn coefficient_of_variation(a_hat: &[f64]) -> Result<f64, MetricError> {
    if a_hat.is_empty() {
        return Err(MetricError::TooShort(0));
    }
    let n = a_hat.len() as f64;
    let mean = a_hat.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(MetricError::ZeroMean);
    }
    if a_hat.iter().all(|&v| v == a_hat[0]) {
        return Ok(0.0);
    }
    let var = a_hat.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

/// Dense ranks in descending order: the largest value gets rank 1 and ties share a rank.
pub fn dense_descending_ranks(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&x, &y| v[y].total_cmp(&v[x]));
    let mut ranks = vec![0; v.len()];
    let mut rank = 0;
    let mut last: Option<f64> = None;
    for &k in &order {
        if last != Some(v[k]) {
            rank += 1;
            last = Some(v[k]);
        }
        ranks[k] = rank;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEntry {
    pub model: usize,
    pub rank_by_accuracy: usize,
    pub rank_by_theta: usize,
}

/// Models ranked within the top `top_k` (dense rank ≤ `top_k`) by both accuracy and ability.
pub fn ranking_flow(acc: &[f64], theta_hat: &[f64], top_k: usize) -> Result<Vec<FlowEntry>, MetricError> {
    check_lengths(acc, theta_hat)?;
    let ra = dense_descending_ranks(acc);
    let rt = dense_descending_ranks(theta_hat);
    Ok((0..acc.len())
        .filter(|&k| ra[k] <= top_k && rt[k] <= top_k)
        .map(|k| FlowEntry {
            model: k,
            rank_by_accuracy: ra[k],
            rank_by_theta: rt[k],
        })
        .collect())
}

/// Recovery metrics for one fit against simulation truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub spearman_theta: Option<f64>,
    pub spearman_a: Option<f64>,
    pub rmse_b: f64,
    /// Absent when the true scores are unknown.
    pub rel_err_x: Option<f64>,
    pub hellinger: Option<f64>,
    pub recall_a: Option<f64>,
    pub precision_a: Option<f64>,
}

/// Truth parameters together with whether the full score grid is known.
pub struct Truth<'a> {
    pub theta: &'a [f64],
    pub a: &'a [f64],
    pub b: &'a [f64],
    pub scores: Option<&'a [f64]>,
}

/// Computes every applicable metric. Spearman of a constant vector is reported as `None`.
pub fn evaluate(
    truth: &Truth<'_>,
    est: &crate::params::ModelParams,
    t: Temperature,
) -> Result<MetricsReport, MetricError> {
    check_lengths(truth.theta, &est.theta)?;
    check_lengths(truth.a, &est.a)?;
    check_lengths(truth.b, &est.b)?;
    let soft = |r: Result<f64, MetricError>| match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricError::DegenerateVector) => Ok(None),
        Err(e) => Err(e),
    };
    let spearman_theta = soft(spearman(truth.theta, &est.theta))?;
    let spearman_a = soft(spearman(truth.a, &est.a))?;
    let rmse_b = rmse(truth.b, &est.b)?;
    let (rel_err_x, hellinger_d) = match truth.scores {
        Some(x) => {
            let xh = est.dense_scores();
            (Some(relative_error(x, &xh)?), Some(hellinger(x, &xh, t)?))
        }
        None => (None, None),
    };
    let (recall_a, precision_a) = sparsity_scores(truth.a, &est.a)?;
    Ok(MetricsReport {
        spearman_theta,
        spearman_a,
        rmse_b,
        rel_err_x,
        hellinger: hellinger_d,
        recall_a,
        precision_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spearman_examples() {
        let u = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        let rev = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&u, &rev).unwrap() + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(MetricError::DegenerateVector));
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(MetricError::TooShort(1))));
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[1.0, 2.0, 5.0], &[3.5, 4.5, 7.5]).unwrap() - 2.5).abs() < 1e-15);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.535_533_9).abs() < 1e-7);
    }

    #[test]
    fn relative_error_examples() {
        let x = [1.0, -2.0, 0.5];
        assert_eq!(relative_error(&x, &x).unwrap(), 0.0);
        assert_eq!(relative_error(&x, &[0.0; 3]).unwrap(), 1.0);
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_eq!(relative_error(&x, &twice).unwrap(), 1.0);
        assert_eq!(relative_error(&[0.0; 3], &x), Err(MetricError::ZeroTruth));
    }

    #[test]
    fn hellinger_examples() {
        let t = Temperature::default();
        let x = [0.3, -1.0, 2.0];
        assert_eq!(hellinger(&x, &x, t).unwrap(), 0.0);
        assert_eq!(hellinger_sq(1.0, 0.0), 2.0);
        assert_eq!(hellinger(&[0.0, 0.0], &[0.0, 0.0], t).unwrap(), 0.0);
        // Saturated scores approach the per-entry bound of 2.
        let h = hellinger(&[1e6], &[-1e6], t).unwrap();
        assert!((h - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sparsity_examples() {
        let truth = [0.0, 0.7, 0.0, 0.9];
        assert_eq!(sparsity_scores(&truth, &[0.0, 0.1, 0.0, 2.0]).unwrap(), (Some(1.0), Some(1.0)));
        assert_eq!(sparsity_scores(&truth, &[0.2, 0.1, 0.3, 2.0]).unwrap(), (Some(1.0), Some(0.5)));
        assert_eq!(sparsity_scores(&[0.5, 0.6], &[0.0, 0.0]).unwrap(), (Some(0.0), None));
    }

    #[test]
    fn accuracy_examples() {
        let m = ResponseMatrix::from_triplets(
            4,
            3,
            &[(0, 0, 1), (0, 1, 1), (1, 0, -1), (1, 2, -1), (2, 0, 1), (2, 1, -1), (2, 2, 1)],
        )
        .unwrap();
        let acc = average_accuracy(&m);
        assert_eq!(acc[0], Some(1.0));
        assert_eq!(acc[1], Some(0.0));
        assert!((acc[2].unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(acc[3], None);
    }

    #[test]
    fn cv_examples() {
        assert_eq!(coefficient_of_variation(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(coefficient_of_variation(&[1.0, 3.0]).unwrap(), 0.5);
        let a = [0.3, 1.2, 0.7, 2.0];
        let scaled: Vec<f64> = a.iter().map(|v| v * 7.5).collect();
        assert!((coefficient_of_variation(&a).unwrap() - coefficient_of_variation(&scaled).unwrap()).abs() < 1e-14);
        assert_eq!(coefficient_of_variation(&[0.0, 0.0]), Err(MetricError::ZeroMean));
    }

    #[test]
    fn ranking_flow_examples() {
        let flow = ranking_flow(&[0.9, 0.8, 0.7], &[1.0, 2.0, 0.5], 2).unwrap();
        assert_eq!(
            flow,
            vec![
                FlowEntry { model: 0, rank_by_accuracy: 1, rank_by_theta: 2 },
                FlowEntry { model: 1, rank_by_accuracy: 2, rank_by_theta: 1 },
            ]
        );
        let acc = [0.2, 0.5, 0.5, 0.9];
        let theta: Vec<f64> = acc.iter().map(|v: &f64| v.exp() * 3.0 - 1.0).collect();
        let flow = ranking_flow(&acc, &theta, acc.len()).unwrap();
        assert_eq!(flow.len(), 4);
        assert!(flow.iter().all(|e| e.rank_by_accuracy == e.rank_by_theta));
        // tied models share a dense rank
        assert_eq!(dense_descending_ranks(&acc), vec![3, 2, 2, 1]);
    }

    proptest! {
        #[test]
        fn spearman_invariant_under_monotone_maps(v in proptest::collection::vec(-50.0f64..50.0, 3..30), w in proptest::collection::vec(-50.0f64..50.0, 3..30)) {
            let n = v.len().min(w.len());
            let (v, w) = (&v[..n], &w[..n]);
            if let Ok(r) = spearman(v, w) {
                let tv: Vec<f64> = v.iter().map(|x| (x / 10.0).exp() + 3.0).collect();
                let tw: Vec<f64> = w.iter().map(|x| x * x * x + 2.0 * x).collect();
                let r2 = spearman(&tv, &tw).unwrap();
                prop_assert!((r - r2).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn hellinger_symmetric(x in proptest::collection::vec(-8.0f64..8.0, 1..40), y in proptest::collection::vec(-8.0f64..8.0, 1..40)) {
            let n = x.len().min(y.len());
            let t = Temperature::default();
            let h1 = hellinger(&x[..n], &y[..n], t).unwrap();
            let h2 = hellinger(&y[..n], &x[..n], t).unwrap();
            prop_assert!((h1 - h2).abs() < 1e-15);
            prop_assert!((0.0..=2.0).contains(&h1));
            prop_assert_eq!(hellinger(&x[..n], &x[..n], t).unwrap(), 0.0);
        }

        #[test]
        fn relative_error_permutation_invariant(x in proptest::collection::vec(-5.0f64..5.0, 6), y in proptest::collection::vec(-5.0f64..5.0, 6), perm in Just([3usize, 0, 5, 1, 4, 2])) {
            prop_assume!(x.iter().any(|v| *v != 0.0));
            let r = relative_error(&x, &y).unwrap();
            let px: Vec<f64> = perm.iter().map(|&k| x[k]).collect();
            let py: Vec<f64> = perm.iter().map(|&k| y[k]).collect();
            prop_assert!((r - relative_error(&px, &py).unwrap()).abs() < 1e-12 * (1.0 + r));
        }

        #[test]
        fn sparsity_depends_on_support_only(t in proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..3.0], 1..20), h in proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..3.0], 1..20), s in 0.1f64..10.0) {
            let n = t.len().min(h.len());
            let ts: Vec<f64> = t[..n].iter().map(|v| v * s).collect();
            let hs: Vec<f64> = h[..n].iter().map(|v| v * (s + 1.0)).collect();
            prop_assert_eq!(sparsity_scores(&t[..n], &h[..n]).unwrap(), sparsity_scores(&ts, &hs).unwrap());
        }
    }
}
