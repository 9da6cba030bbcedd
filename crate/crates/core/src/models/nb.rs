//! Gaussian Naïve Bayes with a relative variance floor.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::Result;

const LN_2PI: f64 = 1.837877066409345;

/// Per-class feature Gaussians and class priors. Variances are maximum
/// likelihood (divide by class count), floored at 1e-9 times the mean
/// feature variance of the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub case_mean: Vec<f64>,
    pub case_var: Vec<f64>,
    pub control_mean: Vec<f64>,
    pub control_var: Vec<f64>,
    /// ln(P(case)) − ln(P(control)).
    pub log_prior_odds: f64,
}

impl GaussianNb {
    pub fn n_features(&self) -> usize {
        self.case_mean.len()
    }

    /// ln P(case|x) − ln P(control|x).
    pub fn log_posterior_odds(&self, x: ArrayView1<'_, f64>) -> f64 {
        let mut odds = self.log_prior_odds;
        for (j, v) in x.iter().enumerate() {
            odds += log_density(*v, self.case_mean[j], self.case_var[j])
                - log_density(*v, self.control_mean[j], self.control_var[j]);
        }
        odds
    }
}

fn log_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

fn class_moments(d: &Dataset, case: bool) -> (Vec<f64>, Vec<f64>, usize) {
    let rows: Vec<usize> = d
        .y
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_case() == case)
        .map(|(i, _)| i)
        .collect();
    let n = rows.len() as f64;
    let p = d.n_features();
    let mut mean = vec![0.0; p];
    let mut var = vec![0.0; p];
    for &i in &rows {
        for (j, v) in d.x.row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    for &i in &rows {
        for (j, v) in d.x.row(i).iter().enumerate() {
            var[j] += (v - mean[j]).powi(2);
        }
    }
    for v in &mut var {
        *v /= n;
    }
    (mean, var, rows.len())
}

pub fn train_gaussian_nb(d: &Dataset) -> Result<GaussianNb> {
    let (case_mean, mut case_var, n_case) = class_moments(d, true);
    let (control_mean, mut control_var, n_control) = class_moments(d, false);

    // relative floor against degenerate per-class variances
    let n = d.n_samples() as f64;
    let p = d.n_features();
    let mut pooled = 0.0;
    for j in 0..p {
        let col = d.x.column(j);
        let m = col.sum() / n;
        pooled += col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    }
    let floor = (1e-9 * pooled / p as f64).max(1e-12);
    for v in case_var.iter_mut().chain(control_var.iter_mut()) {
        if *v < floor {
            *v = floor;
        }
    }

    Ok(GaussianNb {
        case_mean,
        case_var,
        control_mean,
        control_var,
        log_prior_odds: (n_case as f64 / n).ln() - (n_control as f64 / n).ln(),
    })
}
