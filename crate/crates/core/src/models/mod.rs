//! Base classifiers: linear SVM, random forest, CART, Gaussian Naïve Bayes
//! and L2-regularized logistic regression.
//!
//! Every trained model exposes the same two calls: a real-valued soft score
//! (`predict_score`) and the hard label obtained by thresholding it
//! (`predict_label`). SVM, logistic regression and NB threshold at 0; tree
//! vote ratios threshold at 0.5. Ties always go to control.

mod logistic;
mod nb;
mod svm;
mod tree;

pub use logistic::LogisticModel;
pub use nb::GaussianNb;
pub use svm::LinearModel;
pub use tree::{Forest, Tree};

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Declarative model configuration, as embedded in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Svm {
        #[serde(rename = "C", default = "default_c")]
        c: f64,
        #[serde(default = "default_max_passes")]
        max_passes: usize,
    },
    Rf {
        #[serde(default = "default_n_trees")]
        n_trees: usize,
        /// Features sampled per split; `None` means ⌈√p⌉.
        #[serde(default)]
        mtry: Option<usize>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_true")]
        bootstrap: bool,
    },
    Cart,
    Nb,
    Logreg {
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "default_max_passes")]
        max_iter: usize,
    },
    /// Fixed-output baseline; scores `sign` of the label.
    Constant { label: Label },
}

fn default_c() -> f64 {
    1.0
}
fn default_l2() -> f64 {
    1.0
}
fn default_n_trees() -> usize {
    500
}
fn default_max_passes() -> usize {
    10_000
}
fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Svm { .. } => "svm",
            ModelSpec::Rf { .. } => "rf",
            ModelSpec::Cart => "cart",
            ModelSpec::Nb => "nb",
            ModelSpec::Logreg { .. } => "logreg",
            ModelSpec::Constant { .. } => "constant",
        }
    }
}

/// Per-column training mean and standard deviation. Columns with zero
/// spread map to 0 after scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &ndarray::Array2<f64>) -> Standardizer {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.sum() / n;
            let var = if n > 1.0 {
                col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            mean.push(m);
            sd.push(var.sqrt());
        }
        Standardizer { mean, sd }
    }

    pub fn apply(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    pub fn apply_matrix(&self, x: &ndarray::Array2<f64>) -> ndarray::Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if self.sd[j] > 0.0 { (*v - self.mean[j]) / self.sd[j] } else { 0.0 };
            }
        }
        out
    }
}

/// A fitted classifier of any supported kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainedModel {
    Svm(LinearModel),
    Forest(Forest),
    Cart(Tree),
    Nb(GaussianNb),
    Logistic(LogisticModel),
    Constant(Label),
}

/// Versioned on-disk wrapper for a trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub schema_version: u32,
    pub model: TrainedModel,
}

impl TrainedModel {
    /// Trains a model of the requested kind. Requires both classes in `d`
    /// except for the constant baseline.
    pub fn train(spec: &ModelSpec, d: &Dataset) -> Result<TrainedModel> {
        if !matches!(spec, ModelSpec::Constant { .. }) && !d.both_classes_present() {
            return Err(Error::SingleClass);
        }
        Ok(match spec {
            ModelSpec::Svm { c, max_passes } => {
                TrainedModel::Svm(svm::train_linear_svm(d, *c, *max_passes)?)
            }
            ModelSpec::Rf { n_trees, mtry, seed, bootstrap } => TrainedModel::Forest(
                tree::train_random_forest(d, *n_trees, *mtry, *seed, *bootstrap)?,
            ),
            ModelSpec::Cart => TrainedModel::Cart(tree::train_cart(d)?),
            ModelSpec::Nb => TrainedModel::Nb(nb::train_gaussian_nb(d)?),
            ModelSpec::Logreg { l2, max_iter } => {
                TrainedModel::Logistic(logistic::train_logistic(d, *l2, *max_iter)?)
            }
            ModelSpec::Constant { label } => TrainedModel::Constant(*label),
        })
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Svm(m) => m.weights.len(),
            TrainedModel::Forest(f) => f.n_features,
            TrainedModel::Cart(t) => t.n_features,
            TrainedModel::Nb(m) => m.n_features(),
            TrainedModel::Logistic(m) => m.weights.len(),
            TrainedModel::Constant(_) => 0,
        }
    }

    fn check_dim(&self, x: ArrayView1<'_, f64>) -> Result<()> {
        let expected = self.n_features();
        if matches!(self, TrainedModel::Constant(_)) || x.len() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { got: x.len(), expected })
        }
    }

    /// Real-valued discriminative output: signed decision value for SVM and
    /// logistic regression, case-vote fraction for forests and trees, log
    /// posterior odds for NB.
    pub fn predict_score(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            TrainedModel::Svm(m) => m.decision_value(x),
            TrainedModel::Forest(f) => f.vote_ratio(x),
            TrainedModel::Cart(t) => t.case_fraction(x),
            TrainedModel::Nb(m) => m.log_posterior_odds(x),
            TrainedModel::Logistic(m) => m.linear_predictor(x),
            TrainedModel::Constant(label) => label.sign(),
        })
    }

    /// Decision threshold applied to the soft score.
    pub fn threshold(&self) -> f64 {
        match self {
            TrainedModel::Forest(_) | TrainedModel::Cart(_) => 0.5,
            _ => 0.0,
        }
    }

    /// Hard label: score strictly above the threshold is a case; a tie goes
    /// to control.
    pub fn predict_label(&self, x: ArrayView1<'_, f64>) -> Result<Label> {
        let score = self.predict_score(x)?;
        Ok(if score > self.threshold() { Label::Case } else { Label::Control })
    }

    /// False when an iterative trainer hit its pass cap before meeting its
    /// tolerance; such models still carry the best iterate.
    pub fn converged(&self) -> bool {
        match self {
            TrainedModel::Svm(m) => m.converged,
            TrainedModel::Logistic(m) => m.converged,
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_dataset() -> Dataset {
        Dataset::new(
            array![[0.0, 1.0], [0.2, 0.8], [1.0, 0.1], [1.2, -0.1]],
            vec![Label::Control, Label::Control, Label::Case, Label::Case],
            vec![crate::dataset::SourceTag::Panel; 2],
            vec!["f0".into(), "f1".into()],
            (0..4).map(|i| format!("s{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn model_spec_json_round_trip() {
        let specs = [
            r#"{"kind":"svm","C":1.0}"#,
            r#"{"kind":"rf","n_trees":500,"mtry":null,"seed":3}"#,
            r#"{"kind":"cart"}"#,
            r#"{"kind":"nb"}"#,
            r#"{"kind":"logreg","l2":1.0}"#,
        ];
        for text in specs {
            let spec: ModelSpec = serde_json::from_str(text).unwrap();
            let again: ModelSpec =
                serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
            assert_eq!(spec, again);
        }
    }

    #[test]
    fn single_class_is_rejected_by_every_trainer() {
        let d = tiny_dataset();
        let single = d.with_labels(vec![Label::Case; 4]).unwrap();
        for spec in [
            ModelSpec::Svm { c: 1.0, max_passes: 100 },
            ModelSpec::Rf { n_trees: 3, mtry: None, seed: 0, bootstrap: true },
            ModelSpec::Cart,
            ModelSpec::Nb,
            ModelSpec::Logreg { l2: 1.0, max_iter: 100 },
        ] {
            assert!(matches!(TrainedModel::train(&spec, &single), Err(Error::SingleClass)));
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let d = tiny_dataset();
        let m = TrainedModel::train(&ModelSpec::Cart, &d).unwrap();
        let too_long = ndarray::Array1::zeros(5);
        assert!(matches!(
            m.predict_score(too_long.view()),
            Err(Error::DimensionMismatch { got: 5, expected: 2 })
        ));
    }

    #[test]
    fn labels_follow_scores_for_every_kind() {
        let d = tiny_dataset();
        let specs = [
            ModelSpec::Svm { c: 1.0, max_passes: 10_000 },
            ModelSpec::Rf { n_trees: 21, mtry: None, seed: 5, bootstrap: true },
            ModelSpec::Cart,
            ModelSpec::Nb,
            ModelSpec::Logreg { l2: 1.0, max_iter: 10_000 },
            ModelSpec::Constant { label: Label::Control },
        ];
        let mut state = 0x12345678u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 1000) as f64 / 250.0 - 2.0
        };
        for spec in specs {
            let m = TrainedModel::train(&spec, &d).unwrap();
            for _ in 0..200 {
                let x = array![next(), next()];
                let score = m.predict_score(x.view()).unwrap();
                let label = m.predict_label(x.view()).unwrap();
                if matches!(m, TrainedModel::Constant(l) if l == Label::Control) {
                    assert_eq!(label, Label::Control);
                    continue;
                }
                assert_eq!(label.is_case(), score > m.threshold(), "{}", spec.name());
            }
        }
    }

    #[test]
    fn saved_model_round_trips() {
        let d = tiny_dataset();
        for spec in [
            ModelSpec::Svm { c: 1.0, max_passes: 10_000 },
            ModelSpec::Rf { n_trees: 5, mtry: Some(1), seed: 2, bootstrap: true },
            ModelSpec::Nb,
        ] {
            let model = TrainedModel::train(&spec, &d).unwrap();
            let saved = SavedModel { schema_version: MODEL_SCHEMA_VERSION, model: model.clone() };
            let text = serde_json::to_string(&saved).unwrap();
            let back: SavedModel = serde_json::from_str(&text).unwrap();
            assert_eq!(back.model, model);
        }
    }
}
