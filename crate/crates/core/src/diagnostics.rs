//! Posterior summaries, credible intervals, coverage and ESS.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::procrustes_distance;
use crate::model::ParamState;

/// Flattened scalar parameters of a state: every `β_l` entry as
/// `beta_{l}_{j}` and the lower triangle of `Σ` as `sigma_{a}_{b}` (1-based,
/// `a ≥ b`).
pub fn flatten_params(state: &ParamState) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (l, bl) in state.beta.iter().enumerate() {
        for (j, v) in bl.iter().enumerate() {
            out.push((format!("beta_{}_{}", l + 1, j + 1), *v));
        }
    }
    let k = state.sigma.nrows();
    for a in 0..k {
        for b in 0..=a {
            out.push((format!("sigma_{}_{}", a + 1, b + 1), state.sigma[(a, b)]));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    /// 2.5% empirical quantile.
    pub lower: f64,
    /// 97.5% empirical quantile.
    pub upper: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub beta_mean: Vec<Vec<f64>>,
    pub sigma_mean: Vec<Vec<f64>>,
    pub params: Vec<ParamSummary>,
    /// Size-and-shape distance between the posterior-mean and true `B_1`
    /// (the mean configuration when `d = 1`).
    pub rho: Option<f64>,
}

impl PosteriorSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn beta_mean_state(&self) -> ParamState {
        ParamState {
            beta: self.beta_mean.iter().map(|b| nalgebra::DVector::from_vec(b.clone())).collect(),
            sigma: crate::geometry::matrix_from_rows(&self.sigma_mean).expect("rectangular"),
            rotations: Vec::new(),
        }
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Effective sample size by Geyer's initial positive sequence estimator.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let c0 = autocov(0);
    if !(c0 > 0.0) {
        return n as f64;
    }
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = (autocov(2 * m) + autocov(2 * m + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    n as f64 / tau.max(1.0 / n as f64)
}

/// Means, 95% equal-tailed intervals and ESS of every scalar parameter,
/// plus `ρ` against the truth when one is supplied.
pub fn summarize(draws: &[ParamState], truth: Option<&ParamState>) -> Result<PosteriorSummary> {
    let first = draws
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot summarize an empty chain".into()))?;
    let names: Vec<String> = flatten_params(first).into_iter().map(|(n, _)| n).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(draws.len()); names.len()];
    for draw in draws {
        let flat = flatten_params(draw);
        if flat.len() != names.len() {
            return Err(Error::InvalidArgument("draws have inconsistent dimensions".into()));
        }
        for (col, (_, v)) in columns.iter_mut().zip(flat) {
            col.push(v);
        }
    }
    let params = names
        .into_iter()
        .zip(&columns)
        .map(|(name, col)| {
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            ParamSummary {
                name,
                mean,
                lower: quantile(&sorted, 0.025),
                upper: quantile(&sorted, 0.975),
                ess: effective_sample_size(col),
            }
        })
        .collect();

    let n = draws.len() as f64;
    let beta_mean: Vec<Vec<f64>> = (0..first.beta.len())
        .map(|l| {
            let mut acc = vec![0.0; first.beta[l].len()];
            for d in draws {
                for (a, v) in acc.iter_mut().zip(d.beta[l].iter()) {
                    *a += v;
                }
            }
            acc.into_iter().map(|a| a / n).collect()
        })
        .collect();
    let mut sigma_mean = DMatrix::zeros(first.sigma.nrows(), first.sigma.ncols());
    for d in draws {
        sigma_mean += &d.sigma;
    }
    sigma_mean /= n;

    let mut summary = PosteriorSummary {
        n_draws: draws.len(),
        beta_mean,
        sigma_mean: crate::geometry::matrix_to_rows(&sigma_mean),
        params,
        rho: None,
    };
    if let Some(truth) = truth {
        let est = summary.beta_mean_state().coefficient_matrix(0);
        summary.rho = Some(procrustes_distance(&est, &truth.coefficient_matrix(0))?);
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub name: String,
    pub fraction: f64,
}

/// Fraction of replicates whose 95% interval contains the true value, per
/// scalar parameter. `truth` should be the identified truth.
pub fn coverage_report(summaries: &[PosteriorSummary], truth: &ParamState) -> Vec<Coverage> {
    flatten_params(truth)
        .into_iter()
        .map(|(name, value)| {
            let hits = summaries
                .iter()
                .filter(|s| s.param(&name).is_some_and(|p| p.lower <= value && value <= p.upper))
                .count();
            Coverage {
                fraction: if summaries.is_empty() { 0.0 } else { hits as f64 / summaries.len() as f64 },
                name,
            }
        })
        .collect()
}
