//! Combination strategies for two feature sources: plain column merge,
//! model inclusion (one source's soft score appended as an extra feature to
//! the other source), and model composition (a second-level classifier over
//! both sources' soft scores). Plus Welch t-test feature selection.
//!
//! Every strategy trains end-to-end on the training split only; prediction
//! recomputes base scores for the new sample before applying the top model.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label, SourceTag};
use crate::error::{Error, Result};
use crate::eval::welch_t;
use crate::models::{ModelSpec, TrainedModel};

/// How level-one scores for training the top model are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScoreMode {
    /// Score the training samples with the model fit on all of them.
    #[default]
    InSample,
    /// K-fold cross-fit scores; the final base model still uses all rows.
    OutOfFold { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceId {
    A,
    B,
}

/// Declarative fusion configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FusionSpec {
    DataMerge {
        model: ModelSpec,
    },
    ModelInclusion {
        base: ModelSpec,
        /// Which source the base model is fit on; its score feeds the other.
        base_source: SourceId,
        target: ModelSpec,
        #[serde(default)]
        score_mode: ScoreMode,
    },
    ModelComposition {
        base_a: ModelSpec,
        base_b: ModelSpec,
        second_level: ModelSpec,
        #[serde(default)]
        score_mode: ScoreMode,
    },
}

/// A fitted fusion pipeline. Prediction takes one feature vector per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FusedModel {
    Merged {
        model: TrainedModel,
        n_features_a: usize,
    },
    Inclusion {
        base: TrainedModel,
        base_source: SourceId,
        target: TrainedModel,
    },
    Composition {
        base_a: TrainedModel,
        base_b: TrainedModel,
        second: TrainedModel,
    },
}

impl FusedModel {
    pub fn predict_score(&self, xa: ArrayView1<'_, f64>, xb: ArrayView1<'_, f64>) -> Result<f64> {
        match self {
            FusedModel::Merged { model, .. } => {
                let joined = concat_vec(xa, xb);
                model.predict_score(ndarray::aview1(&joined))
            }
            FusedModel::Inclusion { base, base_source, target } => {
                let (source, rest) = match base_source {
                    SourceId::A => (xa, xb),
                    SourceId::B => (xb, xa),
                };
                let score = base.predict_score(source)?;
                let mut augmented: Vec<f64> = rest.to_vec();
                augmented.push(score);
                target.predict_score(ndarray::aview1(&augmented))
            }
            FusedModel::Composition { base_a, base_b, second } => {
                let scores = [base_a.predict_score(xa)?, base_b.predict_score(xb)?];
                second.predict_score(ndarray::aview1(&scores))
            }
        }
    }

    pub fn predict_label(&self, xa: ArrayView1<'_, f64>, xb: ArrayView1<'_, f64>) -> Result<Label> {
        let score = self.predict_score(xa, xb)?;
        Ok(if score > self.top_model().threshold() { Label::Case } else { Label::Control })
    }

    fn top_model(&self) -> &TrainedModel {
        match self {
            FusedModel::Merged { model, .. } => model,
            FusedModel::Inclusion { target, .. } => target,
            FusedModel::Composition { second, .. } => second,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            FusedModel::Merged { model, .. } => model.converged(),
            FusedModel::Inclusion { base, target, .. } => base.converged() && target.converged(),
            FusedModel::Composition { base_a, base_b, second } => {
                base_a.converged() && base_b.converged() && second.converged()
            }
        }
    }
}

fn concat_vec(xa: ArrayView1<'_, f64>, xb: ArrayView1<'_, f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(xa.len() + xb.len());
    v.extend(xa.iter());
    v.extend(xb.iter());
    v
}

fn check_matched(a: &Dataset, b: &Dataset) -> Result<()> {
    if a.sample_ids != b.sample_ids {
        return Err(Error::SampleMismatch {
            detail: "sample ids differ or are ordered differently".into(),
        });
    }
    if a.y != b.y {
        return Err(Error::SampleMismatch { detail: "labels differ between sources".into() });
    }
    Ok(())
}

/// Column concatenation of two sample-matched datasets, tags preserved.
pub fn data_merge(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    check_matched(a, b)?;
    let x = ndarray::concatenate(Axis(1), &[a.x.view(), b.x.view()])
        .expect("row counts already checked");
    let mut column_tags = a.column_tags.clone();
    column_tags.extend_from_slice(&b.column_tags);
    let mut column_names = a.column_names.clone();
    column_names.extend_from_slice(&b.column_names);
    Dataset::new(x, a.y.clone(), column_tags, column_names, a.sample_ids.clone())
}

/// Appends one SCORE-tagged column.
pub fn append_score_column(d: &Dataset, scores: &[f64], name: &str) -> Result<Dataset> {
    if scores.len() != d.n_samples() {
        return Err(Error::LengthMismatch { left: d.n_samples(), right: scores.len() });
    }
    let column = Array2::from_shape_vec((scores.len(), 1), scores.to_vec())
        .expect("column shape is consistent");
    let x = ndarray::concatenate(Axis(1), &[d.x.view(), column.view()])
        .expect("row counts match");
    let mut column_tags = d.column_tags.clone();
    column_tags.push(SourceTag::Score);
    let mut column_names = d.column_names.clone();
    column_names.push(name.to_string());
    Dataset::new(x, d.y.clone(), column_tags, column_names, d.sample_ids.clone())
}

/// The n×2 SCORE matrix feeding a composition's second level.
pub fn compose_scores(
    scores_a: &[f64],
    scores_b: &[f64],
    y: &[Label],
    sample_ids: &[String],
) -> Result<Dataset> {
    if scores_a.len() != scores_b.len() || scores_a.len() != y.len() {
        return Err(Error::LengthMismatch { left: scores_a.len(), right: scores_b.len() });
    }
    let mut x = Array2::zeros((y.len(), 2));
    for i in 0..y.len() {
        x[(i, 0)] = scores_a[i];
        x[(i, 1)] = scores_b[i];
    }
    Dataset::new(
        x,
        y.to_vec(),
        vec![SourceTag::Score; 2],
        vec!["score_a".into(), "score_b".into()],
        sample_ids.to_vec(),
    )
}

/// Fits a base model and produces its per-training-sample scores under the
/// requested mode. The returned model is always fit on all rows.
fn level_one_scores(
    spec: &ModelSpec,
    d: &Dataset,
    mode: &ScoreMode,
) -> Result<(TrainedModel, Vec<f64>)> {
    let model = TrainedModel::train(spec, d)?;
    let scores = match mode {
        ScoreMode::InSample => {
            let mut s = Vec::with_capacity(d.n_samples());
            for i in 0..d.n_samples() {
                s.push(model.predict_score(d.row(i))?);
            }
            s
        }
        ScoreMode::OutOfFold { k } => {
            if *k < 2 {
                return Err(Error::ConfigInvalid("OUT_OF_FOLD needs k >= 2".into()));
            }
            // class-wise round robin keeps folds balanced and deterministic
            let mut fold = vec![0usize; d.n_samples()];
            let mut counters = [0usize, 0usize];
            for i in 0..d.n_samples() {
                let c = usize::from(d.y[i].is_case());
                fold[i] = counters[c] % k;
                counters[c] += 1;
            }
            let mut s = vec![0.0; d.n_samples()];
            for f in 0..*k {
                let train_rows: Vec<usize> =
                    (0..d.n_samples()).filter(|&i| fold[i] != f).collect();
                let holdout: Vec<usize> = (0..d.n_samples()).filter(|&i| fold[i] == f).collect();
                if holdout.is_empty() {
                    continue;
                }
                let sub = d.select_rows(&train_rows);
                let fold_model = TrainedModel::train(spec, &sub)?;
                for &i in &holdout {
                    s[i] = fold_model.predict_score(d.row(i))?;
                }
            }
            s
        }
    };
    Ok((model, scores))
}

/// Model inclusion: the base model's soft score becomes one extra feature
/// of the other source's dataset.
pub fn train_inclusion(
    base: &ModelSpec,
    base_source: SourceId,
    target: &ModelSpec,
    score_mode: &ScoreMode,
    a: &Dataset,
    b: &Dataset,
) -> Result<FusedModel> {
    check_matched(a, b)?;
    let (source_ds, target_ds) = match base_source {
        SourceId::A => (a, b),
        SourceId::B => (b, a),
    };
    let (base_model, scores) = level_one_scores(base, source_ds, score_mode)?;
    let augmented =
        append_score_column(target_ds, &scores, &format!("score_{}", base.name()))?;
    let target_model = TrainedModel::train(target, &augmented)?;
    Ok(FusedModel::Inclusion { base: base_model, base_source, target: target_model })
}

/// Model composition: one base model per source, a second-level model over
/// the pair of soft scores.
pub fn train_composition(
    base_a: &ModelSpec,
    base_b: &ModelSpec,
    second_level: &ModelSpec,
    score_mode: &ScoreMode,
    a: &Dataset,
    b: &Dataset,
) -> Result<FusedModel> {
    check_matched(a, b)?;
    let (model_a, scores_a) = level_one_scores(base_a, a, score_mode)?;
    let (model_b, scores_b) = level_one_scores(base_b, b, score_mode)?;
    let level_two = compose_scores(&scores_a, &scores_b, &a.y, &a.sample_ids)?;
    let second = TrainedModel::train(second_level, &level_two)?;
    Ok(FusedModel::Composition { base_a: model_a, base_b: model_b, second })
}

/// Trains any fusion strategy on a matched pair of datasets.
pub fn train_fused(spec: &FusionSpec, a: &Dataset, b: &Dataset) -> Result<FusedModel> {
    match spec {
        FusionSpec::DataMerge { model } => {
            let merged = data_merge(a, b)?;
            Ok(FusedModel::Merged {
                model: TrainedModel::train(model, &merged)?,
                n_features_a: a.n_features(),
            })
        }
        FusionSpec::ModelInclusion { base, base_source, target, score_mode } => {
            train_inclusion(base, *base_source, target, score_mode, a, b)
        }
        FusionSpec::ModelComposition { base_a, base_b, second_level, score_mode } => {
            train_composition(base_a, base_b, second_level, score_mode, a, b)
        }
    }
}

/// Welch t statistic per column plus the selected column indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestSelection {
    /// Kept columns, in their original order.
    pub indices: Vec<usize>,
    /// Welch t per original column.
    pub t_values: Vec<f64>,
}

/// Keeps the `k` columns with the largest |Welch t| between classes, ties
/// broken toward the lower column index. Column order is preserved.
pub fn t_test_select(d: &Dataset, k: usize) -> Result<(Dataset, TTestSelection)> {
    if !d.both_classes_present() {
        return Err(Error::SingleClass);
    }
    if k > d.n_features() {
        return Err(Error::KTooLarge { k, p: d.n_features() });
    }
    let case_rows: Vec<usize> =
        (0..d.n_samples()).filter(|&i| d.y[i].is_case()).collect();
    let control_rows: Vec<usize> =
        (0..d.n_samples()).filter(|&i| !d.y[i].is_case()).collect();

    let t_values: Vec<f64> = (0..d.n_features())
        .map(|j| {
            let col = d.x.column(j);
            let cases: Vec<f64> = case_rows.iter().map(|&i| col[i]).collect();
            let controls: Vec<f64> = control_rows.iter().map(|&i| col[i]).collect();
            welch_t(&cases, &controls)
        })
        .collect();

    let mut ranked: Vec<usize> = (0..d.n_features()).collect();
    ranked.sort_by(|&a, &b| {
        t_values[b]
            .abs()
            .partial_cmp(&t_values[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut indices: Vec<usize> = ranked[..k].to_vec();
    indices.sort_unstable();

    let selected = d.select_columns(&indices);
    Ok((selected, TTestSelection { indices, t_values }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn dataset(x: Array2<f64>, y: Vec<Label>, tag: SourceTag) -> Dataset {
        let p = x.ncols();
        let n = x.nrows();
        Dataset::new(
            x,
            y,
            vec![tag; p],
            (0..p).map(|j| format!("{tag:?}_{j}")).collect(),
            (0..n).map(|i| format!("s{i}")).collect(),
        )
        .unwrap()
    }

    fn labels6() -> Vec<Label> {
        vec![
            Label::Control,
            Label::Control,
            Label::Control,
            Label::Case,
            Label::Case,
            Label::Case,
        ]
    }

    fn source_a() -> Dataset {
        dataset(
            array![[0.1], [0.5], [0.9], [2.2], [2.8], [3.4]],
            labels6(),
            SourceTag::Spectral,
        )
    }

    fn source_b() -> Dataset {
        dataset(
            array![
                [1.0, 0.2],
                [1.1, 0.1],
                [0.9, 0.3],
                [-1.0, 0.2],
                [-1.2, 0.4],
                [-0.8, 0.0]
            ],
            labels6(),
            SourceTag::Panel,
        )
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let a = source_a();
        let empty = Dataset::new(
            Array2::zeros((6, 0)),
            labels6(),
            vec![],
            vec![],
            a.sample_ids.clone(),
        )
        .unwrap();
        let merged = data_merge(&a, &empty).unwrap();
        assert_eq!(merged.x, a.x);
        assert_eq!(merged.column_tags, a.column_tags);
    }

    #[test]
    fn merge_keeps_paper_scale_shapes_and_tags() {
        let n = 3;
        let wide = |p: usize, tag| {
            dataset(
                Array2::from_shape_fn((n, p), |(i, j)| (i * p + j) as f64),
                vec![Label::Case, Label::Control, Label::Case],
                tag,
            )
        };
        let spectral = wide(1554, SourceTag::Spectral);
        let panel = wide(30, SourceTag::Panel);
        let merged = data_merge(&spectral, &panel).unwrap();
        assert_eq!(merged.n_features(), 1584);
        assert!(merged.column_tags[..1554].iter().all(|t| *t == SourceTag::Spectral));
        assert!(merged.column_tags[1554..].iter().all(|t| *t == SourceTag::Panel));
    }

    #[test]
    fn merge_copies_columns_bit_exactly() {
        let a = source_a();
        let b = source_b();
        let merged = data_merge(&a, &b).unwrap();
        for i in 0..6 {
            assert_eq!(merged.x[(i, 0)], a.x[(i, 0)]);
            assert_eq!(merged.x[(i, 1)], b.x[(i, 0)]);
            assert_eq!(merged.x[(i, 2)], b.x[(i, 1)]);
        }
    }

    #[test]
    fn merge_is_associative_in_order() {
        let a = source_a();
        let b = source_b();
        let c = dataset(array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]], labels6(), SourceTag::Score);
        let left = data_merge(&data_merge(&a, &b).unwrap(), &c).unwrap();
        let right = data_merge(&a, &data_merge(&b, &c).unwrap()).unwrap();
        assert_eq!(left, right);
    }

    #[test]
    fn merge_rejects_mismatched_samples() {
        let a = source_a();
        let mut b = source_b();
        b.sample_ids[2] = "other".into();
        assert!(matches!(data_merge(&a, &b), Err(Error::SampleMismatch { .. })));
    }

    #[test]
    fn score_column_shape_and_tag() {
        let b = source_b();
        let scores = vec![0.5; 6];
        let out = append_score_column(&b, &scores, "score_svm").unwrap();
        assert_eq!(out.n_features(), b.n_features() + 1);
        assert_eq!(*out.column_tags.last().unwrap(), SourceTag::Score);
        assert_eq!(out.column_names.last().unwrap(), "score_svm");
        for i in 0..6 {
            assert_eq!(out.x[(i, 2)], 0.5);
        }
    }

    #[test]
    fn composition_matrix_shape_and_tags() {
        let y = labels6();
        let ids: Vec<String> = (0..6).map(|i| format!("s{i}")).collect();
        let d = compose_scores(&[0.0; 6], &[1.0; 6], &y, &ids).unwrap();
        assert_eq!(d.x.dim(), (6, 2));
        assert_eq!(d.column_tags, vec![SourceTag::Score; 2]);
    }

    #[test]
    fn inclusion_with_constant_base_matches_plain_target() {
        let a = source_a();
        let b = source_b();
        let fused = train_inclusion(
            &ModelSpec::Constant { label: Label::Control },
            SourceId::A,
            &ModelSpec::Cart,
            &ScoreMode::InSample,
            &a,
            &b,
        )
        .unwrap();
        let plain = TrainedModel::train(&ModelSpec::Cart, &b).unwrap();
        let FusedModel::Inclusion { target, .. } = &fused else {
            panic!("expected inclusion");
        };
        assert_eq!(target.n_features(), b.n_features() + 1);
        for i in 0..6 {
            let via_fused = fused.predict_label(a.row(i), b.row(i)).unwrap();
            let via_plain = plain.predict_label(b.row(i)).unwrap();
            assert_eq!(via_fused, via_plain);
        }
    }

    #[test]
    fn inclusion_paper_row_trains_and_separates() {
        let a = source_a();
        let b = source_b();
        let fused = train_inclusion(
            &ModelSpec::Svm { c: 1.0, max_passes: 10_000 },
            SourceId::A,
            &ModelSpec::Rf { n_trees: 25, mtry: None, seed: 3, bootstrap: true },
            &ScoreMode::InSample,
            &a,
            &b,
        )
        .unwrap();
        for i in 0..6 {
            assert_eq!(fused.predict_label(a.row(i), b.row(i)).unwrap(), labels6()[i]);
        }
    }

    #[test]
    fn composition_of_separating_bases_has_zero_training_error() {
        let a = source_a();
        let b = source_b();
        let fused = train_composition(
            &ModelSpec::Cart,
            &ModelSpec::Cart,
            &ModelSpec::Nb,
            &ScoreMode::InSample,
            &a,
            &b,
        )
        .unwrap();
        for i in 0..6 {
            assert_eq!(fused.predict_label(a.row(i), b.row(i)).unwrap(), labels6()[i]);
        }
    }

    #[test]
    fn composition_paper_row_trains() {
        let fused = train_fused(
            &FusionSpec::ModelComposition {
                base_a: ModelSpec::Svm { c: 1.0, max_passes: 10_000 },
                base_b: ModelSpec::Rf { n_trees: 25, mtry: None, seed: 9, bootstrap: true },
                second_level: ModelSpec::Nb,
                score_mode: ScoreMode::InSample,
            },
            &source_a(),
            &source_b(),
        )
        .unwrap();
        assert!(fused.converged());
        let (a, b) = (source_a(), source_b());
        for i in 0..6 {
            assert_eq!(fused.predict_label(a.row(i), b.row(i)).unwrap(), labels6()[i]);
        }
    }

    #[test]
    fn out_of_fold_scores_are_deterministic() {
        let a = source_a();
        let b = source_b();
        let spec = FusionSpec::ModelComposition {
            base_a: ModelSpec::Logreg { l2: 1.0, max_iter: 10_000 },
            base_b: ModelSpec::Nb,
            second_level: ModelSpec::Logreg { l2: 1.0, max_iter: 10_000 },
            score_mode: ScoreMode::OutOfFold { k: 3 },
        };
        let m1 = train_fused(&spec, &a, &b).unwrap();
        let m2 = train_fused(&spec, &a, &b).unwrap();
        assert_eq!(
            serde_json::to_string(&m1).unwrap(),
            serde_json::to_string(&m2).unwrap()
        );
    }

    #[test]
    fn fusion_spec_json_round_trip() {
        let texts = [
            r#"{"strategy":"DATA_MERGE","model":{"kind":"rf","n_trees":500,"seed":1}}"#,
            r#"{"strategy":"MODEL_INCLUSION","base":{"kind":"svm","C":1.0},"base_source":"A","target":{"kind":"rf","n_trees":500,"seed":2},"score_mode":"IN_SAMPLE"}"#,
            r#"{"strategy":"MODEL_COMPOSITION","base_a":{"kind":"svm","C":1.0},"base_b":{"kind":"rf","n_trees":500,"seed":3},"second_level":{"kind":"nb"},"score_mode":{"OUT_OF_FOLD":{"k":5}}}"#,
        ];
        for text in texts {
            let spec: FusionSpec = serde_json::from_str(text).unwrap();
            let again: FusionSpec =
                serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
            assert_eq!(spec, again);
        }
    }

    #[test]
    fn welch_selection_matches_hand_computation() {
        // column 0 separates, column 1 is identical across classes
        let x = array![
            [1.0, 4.0],
            [1.2, 5.0],
            [0.8, 6.0],
            [3.0, 4.0],
            [3.3, 5.0],
            [2.7, 6.0]
        ];
        let d = dataset(x, labels6(), SourceTag::Panel);
        let (selected, sel) = t_test_select(&d, 1).unwrap();
        assert_eq!(sel.indices, vec![0]);
        assert_eq!(selected.n_features(), 1);

        let cases = [3.0f64, 3.3, 2.7];
        let controls = [1.0f64, 1.2, 0.8];
        let mc = 3.0;
        let mk = 1.0;
        let vc = cases.iter().map(|x| (x - mc).powi(2)).sum::<f64>() / 2.0;
        let vk = controls.iter().map(|x| (x - mk).powi(2)).sum::<f64>() / 2.0;
        let expect = (mc - mk) / (vc / 3.0 + vk / 3.0).sqrt();
        assert_abs_diff_eq!(sel.t_values[0], expect, epsilon = 1e-9);
        assert_abs_diff_eq!(sel.t_values[1].abs(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn selection_with_k_equal_p_is_identity() {
        let d = source_b();
        let (selected, sel) = t_test_select(&d, 2).unwrap();
        assert_eq!(sel.indices, vec![0, 1]);
        assert_eq!(selected.x, d.x);
        assert_eq!(selected.column_names, d.column_names);
    }

    #[test]
    fn selection_breaks_ties_toward_lower_index() {
        // identical columns -> identical |t|; lower index wins
        let x = array![[1.0, 1.0], [2.0, 2.0], [5.0, 5.0], [6.0, 6.0]];
        let d = dataset(
            x,
            vec![Label::Control, Label::Control, Label::Case, Label::Case],
            SourceTag::Panel,
        );
        let (_, sel) = t_test_select(&d, 1).unwrap();
        assert_eq!(sel.indices, vec![0]);
    }

    #[test]
    fn selection_errors() {
        let d = source_b();
        assert!(matches!(t_test_select(&d, 3), Err(Error::KTooLarge { k: 3, p: 2 })));
        let single = d.with_labels(vec![Label::Case; 6]).unwrap();
        assert!(matches!(t_test_select(&single, 1), Err(Error::SingleClass)));
    }
}
