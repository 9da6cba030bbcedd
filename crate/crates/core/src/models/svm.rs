//! Soft-margin linear SVM trained by coordinate ascent on the dual.
//!
//! The solver repeatedly picks the maximal violating pair under the
//! equality constraint Σαᵢyᵢ = 0 and solves the two-variable subproblem in
//! closed form, LIBSVM-style. Features are standardized by training
//! mean/sd; the soft score is the raw decision value ŵᵀx + w₀.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::Standardizer;
use crate::dataset::Dataset;
use crate::error::Result;

const KKT_TOL: f64 = 1e-6;
const BOUND_EPS: f64 = 1e-12;

/// Fitted hyperplane in standardized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// Normal to the hyperplane (standardized space).
    pub weights: Vec<f64>,
    /// Offset.
    pub bias: f64,
    pub standardizer: Standardizer,
    /// Dual variables per training sample, for KKT inspection.
    pub alpha: Vec<f64>,
    pub converged: bool,
}

impl LinearModel {
    pub fn decision_value(&self, x: ArrayView1<'_, f64>) -> f64 {
        let z = self.standardizer.apply(x);
        self.weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

pub fn train_linear_svm(d: &Dataset, c: f64, max_passes: usize) -> Result<LinearModel> {
    let standardizer = Standardizer::fit(&d.x);
    let x = standardizer.apply_matrix(&d.x);
    let y: Vec<f64> = d.y.iter().map(|l| l.sign()).collect();

    let solved = solve_dual(&x, &y, c, max_passes);

    let p = x.ncols();
    let mut weights = vec![0.0; p];
    for (i, &a) in solved.alpha.iter().enumerate() {
        if a > 0.0 {
            for (w, v) in weights.iter_mut().zip(x.row(i)) {
                *w += a * y[i] * v;
            }
        }
    }

    // Bias from free support vectors; falls back to the midpoint of the
    // final KKT interval when every α sits on a bound.
    let raw: Vec<f64> = (0..x.nrows())
        .map(|i| weights.iter().zip(x.row(i)).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    let free: Vec<usize> = solved
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > BOUND_EPS && a < c - BOUND_EPS)
        .map(|(i, _)| i)
        .collect();
    let bias = if !free.is_empty() {
        free.iter().map(|&i| y[i] - raw[i]).sum::<f64>() / free.len() as f64
    } else {
        let (m_up, m_low) = kkt_interval(&solved.alpha, &y, &raw, c);
        0.5 * (m_up + m_low)
    };

    Ok(LinearModel {
        weights,
        bias,
        standardizer,
        alpha: solved.alpha,
        converged: solved.converged,
    })
}

struct DualSolution {
    alpha: Vec<f64>,
    converged: bool,
}

/// Maximal-violating-pair coordinate ascent on the dual. One pass is `n`
/// pair updates; KKT gap is checked before every update.
fn solve_dual(x: &Array2<f64>, y: &[f64], c: f64, max_passes: usize) -> DualSolution {
    let n = x.nrows();
    let gram = x.dot(&x.t());
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − Σα with Q_ij = yᵢyⱼK_ij
    let mut grad = vec![-1.0; n];
    let mut converged = false;

    'outer: for _ in 0..max_passes {
        for _ in 0..n {
            let mut up: Option<(usize, f64)> = None;
            let mut low: Option<(usize, f64)> = None;
            for t in 0..n {
                let g = -y[t] * grad[t];
                let has_headroom_up = (y[t] > 0.0 && alpha[t] < c - BOUND_EPS)
                    || (y[t] < 0.0 && alpha[t] > BOUND_EPS);
                let has_headroom_low = (y[t] < 0.0 && alpha[t] < c - BOUND_EPS)
                    || (y[t] > 0.0 && alpha[t] > BOUND_EPS);
                if has_headroom_up && up.is_none_or(|(_, best)| g > best) {
                    up = Some((t, g));
                }
                if has_headroom_low && low.is_none_or(|(_, best)| g < best) {
                    low = Some((t, g));
                }
            }
            let (Some((i, g_i)), Some((j, g_j))) = (up, low) else {
                converged = true;
                break 'outer;
            };
            if g_i - g_j <= KKT_TOL {
                converged = true;
                break 'outer;
            }

            // Move along the constraint-preserving direction
            // αᵢ += yᵢδ, αⱼ −= yⱼδ.
            let eta = gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)];
            let headroom_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
            let headroom_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
            let bound = headroom_i.min(headroom_j);
            let delta = if eta > 1e-12 { ((g_i - g_j) / eta).min(bound) } else { bound };

            alpha[i] += y[i] * delta;
            alpha[j] -= y[j] * delta;
            // snap onto bounds so set membership stays exact
            for t in [i, j] {
                if alpha[t] < BOUND_EPS {
                    alpha[t] = 0.0;
                } else if alpha[t] > c - BOUND_EPS {
                    alpha[t] = c;
                }
            }
            for t in 0..n {
                grad[t] += y[t] * delta * (gram[(t, i)] - gram[(t, j)]);
            }
        }
    }

    DualSolution { alpha, converged }
}

/// (max over I_up, min over I_low) of yᵢ − ŵᵀxᵢ at the current iterate.
fn kkt_interval(alpha: &[f64], y: &[f64], raw: &[f64], c: f64) -> (f64, f64) {
    let mut m_up = f64::NEG_INFINITY;
    let mut m_low = f64::INFINITY;
    for t in 0..alpha.len() {
        let g = y[t] - raw[t];
        let in_up =
            (y[t] > 0.0 && alpha[t] < c - BOUND_EPS) || (y[t] < 0.0 && alpha[t] > BOUND_EPS);
        let in_low =
            (y[t] < 0.0 && alpha[t] < c - BOUND_EPS) || (y[t] > 0.0 && alpha[t] > BOUND_EPS);
        if in_up && g > m_up {
            m_up = g;
        }
        if in_low && g < m_low {
            m_low = g;
        }
    }
    (m_up, m_low)
}
