//! L2-regularized logistic regression fit by gradient ascent with
//! backtracking line search. The intercept is not penalized, so in the
//! heavy-regularization limit the score collapses to the prior log odds.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::Standardizer;
use crate::dataset::Dataset;
use crate::error::Result;

const GRAD_TOL: f64 = 1e-6;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Weights in standardized feature space.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardizer: Standardizer,
    pub converged: bool,
}

impl LogisticModel {
    /// Soft score: the linear predictor wᵀx + b.
    pub fn linear_predictor(&self, x: ArrayView1<'_, f64>) -> f64 {
        let z = self.standardizer.apply(x);
        self.weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

/// Penalized log-likelihood Σ ln σ(yᵢzᵢ) − (λ/2)‖w‖² and its gradient.
pub(crate) fn objective_and_gradient(
    x: &Array2<f64>,
    y: &[f64],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let p = weights.len();
    let mut value = 0.0;
    let mut grad_w = vec![0.0; p];
    let mut grad_b = 0.0;
    for (i, row) in x.rows().into_iter().enumerate() {
        let z = weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + bias;
        let yz = y[i] * z;
        // ln σ(yz), stable on both tails
        value += if yz > 0.0 { -((-yz).exp().ln_1p()) } else { yz - yz.exp().ln_1p() };
        let s = 1.0 / (1.0 + (yz).exp()); // 1 − σ(yz)
        let coeff = s * y[i];
        for (g, v) in grad_w.iter_mut().zip(row) {
            *g += coeff * v;
        }
        grad_b += coeff;
    }
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g -= l2 * w;
    }
    value -= 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (value, grad_w, grad_b)
}

pub fn train_logistic(d: &Dataset, l2: f64, max_iter: usize) -> Result<LogisticModel> {
    let standardizer = Standardizer::fit(&d.x);
    let x = standardizer.apply_matrix(&d.x);
    let y: Vec<f64> = d.y.iter().map(|l| l.sign()).collect();
    let p = x.ncols();

    // Diagonal curvature bounds: the penalty makes the weight block far
    // stiffer than the intercept, so a single global step length would
    // starve whichever block is better conditioned.
    let scale_w: Vec<f64> = (0..p)
        .map(|j| {
            let col_sq: f64 = x.column(j).iter().map(|v| v * v).sum();
            1.0 / (0.25 * col_sq + l2 + 1e-12)
        })
        .collect();
    let scale_b = 1.0 / (0.25 * x.nrows() as f64);

    let mut weights = vec![0.0; p];
    let mut bias = 0.0;
    let mut converged = false;
    let (mut value, mut grad_w, mut grad_b) = objective_and_gradient(&x, &y, &weights, bias, l2);

    for _ in 0..max_iter {
        let grad_norm = grad_w
            .iter()
            .chain(std::iter::once(&grad_b))
            .fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm <= GRAD_TOL {
            converged = true;
            break;
        }
        let dir_w: Vec<f64> = grad_w.iter().zip(&scale_w).map(|(g, s)| g * s).collect();
        let dir_b = grad_b * scale_b;
        let ascent = grad_w.iter().zip(&dir_w).map(|(g, d)| g * d).sum::<f64>() + grad_b * dir_b;
        let mut step = 1.0;
        loop {
            let cand_w: Vec<f64> =
                weights.iter().zip(&dir_w).map(|(w, d)| w + step * d).collect();
            let cand_b = bias + step * dir_b;
            let (cand_value, cand_gw, cand_gb) =
                objective_and_gradient(&x, &y, &cand_w, cand_b, l2);
            if cand_value >= value + ARMIJO * step * ascent {
                weights = cand_w;
                bias = cand_b;
                value = cand_value;
                grad_w = cand_gw;
                grad_b = cand_gb;
                break;
            }
            step *= 0.5;
            if step < 1e-16 {
                break;
            }
        }
    }

    Ok(LogisticModel { weights, bias, standardizer, converged })
}
