//! The resampled experiment runner: wires split plans, per-repeat spectral
//! feature extraction, optional t-test selection, and the model or fusion
//! strategy of each pipeline into an [`EvalReport`].
//!
//! Everything that learns from data — TIC target, alignment reference, peak
//! model, feature selection, base and second-level models — is refit inside
//! each repeat on the training indices only.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};
use crate::eval::{confusion_metrics, roc_auc, EvalReport, RepeatMetrics, SplitIndices, SplitPlan};
use crate::fusion::{train_fused, FusionSpec};
use crate::models::{ModelSpec, TrainedModel};
use crate::peaks::{build_peak_model, extract_features, mean_profile, PeakModel};
use crate::spectra::{
    align, correct_baseline, normalize_tic, smooth, tic, variance_stabilize, PipelineConfig,
    Spectrum,
};

pub const EXPERIMENT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakConfig {
    /// Half-width of the feature averaging window, in grid points.
    pub neighborhood: usize,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self { neighborhood: 5 }
    }
}

/// Which source a pipeline consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SourceSel {
    A,
    B,
    Merged,
    Fused,
}

/// One row of an experiment: a source selection, optional differential
/// feature selection, and a model or fusion strategy.
///
/// `t_test_k` selects the top-k columns of source A by |Welch t| (fit on
/// the training rows), except when the pipeline consumes source B alone, in
/// which case it selects on B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDef {
    pub id: String,
    pub source: SourceSel,
    #[serde(default)]
    pub t_test_k: Option<usize>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub fusion: Option<FusionSpec>,
}

impl PipelineDef {
    pub fn validate(&self) -> Result<()> {
        match self.source {
            SourceSel::Fused => {
                if self.fusion.is_none() || self.model.is_some() {
                    return Err(Error::ConfigInvalid(format!(
                        "pipeline '{}': FUSED requires a fusion spec and no model",
                        self.id
                    )));
                }
            }
            _ => {
                if self.model.is_none() || self.fusion.is_some() {
                    return Err(Error::ConfigInvalid(format!(
                        "pipeline '{}': source {:?} requires a model and no fusion spec",
                        self.id, self.source
                    )));
                }
            }
        }
        Ok(())
    }
}

/// File-based experiment description consumed by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub inputs: InputPaths,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub peaks: PeakConfig,
    #[serde(default)]
    pub split: crate::eval::SplitParams,
    pub pipelines: Vec<PipelineDef>,
}

fn default_schema_version() -> u32 {
    EXPERIMENT_SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    /// Spectra CSV for source A; omit when `features_a` is given instead.
    #[serde(default)]
    pub spectra: Option<String>,
    /// Pre-extracted feature CSV for source A.
    #[serde(default)]
    pub features_a: Option<String>,
    /// Feature CSV for source B.
    pub panel: String,
    pub labels: String,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pipelines.is_empty() {
            return Err(Error::ConfigInvalid("no pipelines configured".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for def in &self.pipelines {
            def.validate()?;
            if !ids.insert(def.id.as_str()) {
                return Err(Error::ConfigInvalid(format!("duplicate pipeline id '{}'", def.id)));
            }
        }
        match (&self.inputs.spectra, &self.inputs.features_a) {
            (Some(_), Some(_)) => Err(Error::ConfigInvalid(
                "give either inputs.spectra or inputs.features_a, not both".into(),
            )),
            (None, None) => Err(Error::ConfigInvalid(
                "source A needs inputs.spectra or inputs.features_a".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// One source's in-memory representation.
#[derive(Debug, Clone)]
pub enum SourceData {
    /// Already a feature matrix; used as-is in every repeat.
    Features(Dataset),
    /// Raw spectra; the full preprocessing and peak chain is refit per
    /// repeat on the training samples.
    RawSpectra(Vec<Spectrum>),
}

/// Sample-matched pair of sources plus labels.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub a: SourceData,
    pub b: SourceData,
    pub labels: Vec<Label>,
    pub sample_ids: Vec<String>,
}

impl ExperimentData {
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.sample_ids.len() {
            return Err(Error::LengthMismatch {
                left: self.labels.len(),
                right: self.sample_ids.len(),
            });
        }
        for source in [&self.a, &self.b] {
            match source {
                SourceData::Features(d) => {
                    if d.sample_ids != self.sample_ids {
                        return Err(Error::SampleMismatch {
                            detail: "feature source rows do not match the label order".into(),
                        });
                    }
                    if d.y != self.labels {
                        return Err(Error::SampleMismatch {
                            detail: "feature source labels do not match".into(),
                        });
                    }
                }
                SourceData::RawSpectra(spectra) => {
                    if spectra.len() != self.sample_ids.len() {
                        return Err(Error::LengthMismatch {
                            left: spectra.len(),
                            right: self.sample_ids.len(),
                        });
                    }
                    for (s, id) in spectra.iter().zip(&self.sample_ids) {
                        if &s.sample_id != id {
                            return Err(Error::SampleMismatch {
                                detail: format!(
                                    "spectrum '{}' out of order, expected '{id}'",
                                    s.sample_id
                                ),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Variance stabilization, baseline correction and smoothing; these are
/// per-sample and independent of any training split.
pub fn preprocess_base(spectra: &[Spectrum], cfg: &PipelineConfig) -> Result<Vec<Spectrum>> {
    spectra
        .par_iter()
        .map(|s| {
            let stabilized = variance_stabilize(s);
            let corrected = correct_baseline(&stabilized, cfg)?;
            Ok(smooth(&corrected, cfg))
        })
        .collect()
}

/// Split-dependent half of the spectral chain: TIC target, alignment
/// reference and peak model, all learned from training spectra.
#[derive(Debug, Clone)]
pub struct FittedSpectral {
    pub tic_target: f64,
    pub reference: Spectrum,
    pub peak_model: PeakModel,
}

pub fn fit_spectral(
    train: &[Spectrum],
    cfg: &PipelineConfig,
    peak_cfg: &PeakConfig,
) -> Result<FittedSpectral> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let tic_target = train.iter().map(|s| tic(s, cfg)).sum::<f64>() / train.len() as f64;
    let normalized: Vec<Spectrum> =
        train.iter().map(|s| normalize_tic(s, cfg, tic_target)).collect::<Result<_>>()?;
    let reference = mean_profile(&normalized)?;
    let aligned: Vec<Spectrum> =
        normalized.iter().map(|s| align(s, &reference, cfg).1).collect();
    let aligned_mean = mean_profile(&aligned)?;
    let peak_model = build_peak_model(&aligned_mean, peak_cfg.neighborhood)?;
    Ok(FittedSpectral { tic_target, reference, peak_model })
}

impl FittedSpectral {
    /// Normalizes, aligns and featurizes a batch with the fitted transforms.
    pub fn features(
        &self,
        batch: &[Spectrum],
        labels: &[Label],
        cfg: &PipelineConfig,
    ) -> Result<Dataset> {
        let transformed: Vec<Spectrum> = batch
            .iter()
            .map(|s| {
                let normalized = normalize_tic(s, cfg, self.tic_target)?;
                Ok(align(&normalized, &self.reference, cfg).1)
            })
            .collect::<Result<_>>()?;
        extract_features(&transformed, &self.peak_model, labels)
    }
}

/// Feature matrices for one repeat; rows cover all samples, but every
/// fitted transform saw only the repeat's training rows.
#[derive(Debug, Clone)]
pub struct RepeatData {
    pub a: Arc<Dataset>,
    pub b: Arc<Dataset>,
}

/// Builds per-repeat feature matrices for both sources. The result is
/// shared by every pipeline evaluated under the same plan.
pub fn materialize(
    data: &ExperimentData,
    plan: &SplitPlan,
    cfg: &PipelineConfig,
    peak_cfg: &PeakConfig,
) -> Result<Vec<RepeatData>> {
    data.validate()?;
    if plan.n != data.labels.len() {
        return Err(Error::LengthMismatch { left: plan.n, right: data.labels.len() });
    }
    let a = materialize_source(&data.a, data, plan, cfg, peak_cfg)?;
    let b = materialize_source(&data.b, data, plan, cfg, peak_cfg)?;
    Ok(a.into_iter().zip(b).map(|(a, b)| RepeatData { a, b }).collect())
}

fn materialize_source(
    source: &SourceData,
    data: &ExperimentData,
    plan: &SplitPlan,
    cfg: &PipelineConfig,
    peak_cfg: &PeakConfig,
) -> Result<Vec<Arc<Dataset>>> {
    match source {
        SourceData::Features(d) => {
            let shared = Arc::new(d.clone());
            Ok(vec![shared; plan.repeats.len()])
        }
        SourceData::RawSpectra(spectra) => {
            let base = preprocess_base(spectra, cfg)?;
            plan.repeats
                .par_iter()
                .map(|split| {
                    let train: Vec<Spectrum> =
                        split.train.iter().map(|&i| base[i].clone()).collect();
                    let fitted = fit_spectral(&train, cfg, peak_cfg)?;
                    let ds = fitted.features(&base, &data.labels, cfg)?;
                    Ok(Arc::new(ds))
                })
                .collect()
        }
    }
}

/// Runs one pipeline over pre-materialized repeats.
pub fn run_on_materialized(
    def: &PipelineDef,
    repeats: &[RepeatData],
    plan: &SplitPlan,
) -> Result<EvalReport> {
    def.validate()?;
    if repeats.len() != plan.repeats.len() {
        return Err(Error::LengthMismatch { left: repeats.len(), right: plan.repeats.len() });
    }
    let results: Vec<(RepeatMetrics, bool)> = plan
        .repeats
        .par_iter()
        .zip(repeats)
        .map(|(split, rd)| run_one_repeat(def, rd, split))
        .collect::<Result<_>>()?;
    let any_nonconverged = results.iter().any(|(_, converged)| !converged);
    let per_repeat = results.into_iter().map(|(m, _)| m).collect();
    Ok(EvalReport::from_repeats(def.id.clone(), plan, per_repeat, any_nonconverged))
}

/// Convenience wrapper: materializes and runs a single pipeline.
pub fn run_experiment(
    def: &PipelineDef,
    data: &ExperimentData,
    plan: &SplitPlan,
    cfg: &PipelineConfig,
    peak_cfg: &PeakConfig,
) -> Result<EvalReport> {
    let repeats = materialize(data, plan, cfg, peak_cfg)?;
    run_on_materialized(def, &repeats, plan)
}

/// Test-set soft scores and labels for one repeat; used directly by
/// leakage diagnostics.
pub fn fit_and_score(
    def: &PipelineDef,
    rd: &RepeatData,
    split: &SplitIndices,
) -> Result<(Vec<f64>, Vec<Label>, bool)> {
    let mut a = Arc::clone(&rd.a);
    let mut b = Arc::clone(&rd.b);

    if let Some(k) = def.t_test_k {
        let on_b = matches!(def.source, SourceSel::B);
        let scoped = if on_b { &b } else { &a };
        let train_view = scoped.select_rows(&split.train);
        let (_, selection) = crate::fusion::t_test_select(&train_view, k)?;
        let reduced = Arc::new(scoped.select_columns(&selection.indices));
        if on_b {
            b = reduced;
        } else {
            a = reduced;
        }
    }

    match def.source {
        SourceSel::A | SourceSel::B => {
            let ds = if matches!(def.source, SourceSel::A) { &a } else { &b };
            let spec = def.model.as_ref().expect("validated");
            let model = TrainedModel::train(spec, &ds.select_rows(&split.train))?;
            let mut scores = Vec::with_capacity(split.test.len());
            let mut predicted = Vec::with_capacity(split.test.len());
            for &i in &split.test {
                scores.push(model.predict_score(ds.row(i))?);
                predicted.push(model.predict_label(ds.row(i))?);
            }
            Ok((scores, predicted, model.converged()))
        }
        SourceSel::Merged | SourceSel::Fused => {
            let spec = match def.source {
                SourceSel::Merged => FusionSpec::DataMerge {
                    model: def.model.clone().expect("validated"),
                },
                _ => def.fusion.clone().expect("validated"),
            };
            let fused = train_fused(
                &spec,
                &a.select_rows(&split.train),
                &b.select_rows(&split.train),
            )?;
            let mut scores = Vec::with_capacity(split.test.len());
            let mut predicted = Vec::with_capacity(split.test.len());
            for &i in &split.test {
                scores.push(fused.predict_score(a.row(i), b.row(i))?);
                predicted.push(fused.predict_label(a.row(i), b.row(i))?);
            }
            Ok((scores, predicted, fused.converged()))
        }
    }
}

fn run_one_repeat(
    def: &PipelineDef,
    rd: &RepeatData,
    split: &SplitIndices,
) -> Result<(RepeatMetrics, bool)> {
    assert_disjoint(split);
    let (scores, predicted, converged) = fit_and_score(def, rd, split)?;
    let truth: Vec<Label> = split.test.iter().map(|&i| rd.a.y[i]).collect();

    let confusion = confusion_metrics(&truth, &predicted)?;
    let (roc, auc) = match roc_auc(&scores, &truth) {
        Ok((roc, auc)) => (roc, Some(auc)),
        Err(Error::SingleClass) => (Vec::new(), None),
        Err(e) => return Err(e),
    };
    let metrics = RepeatMetrics {
        error: confusion.error,
        sensitivity: nan_to_none(confusion.sensitivity),
        specificity: nan_to_none(confusion.specificity),
        auc,
        roc,
    };
    Ok((metrics, converged))
}

fn nan_to_none(v: f64) -> Option<f64> {
    if v.is_nan() {
        None
    } else {
        Some(v)
    }
}

fn assert_disjoint(split: &SplitIndices) {
    let mut train = split.train.iter().peekable();
    for &t in &split.test {
        while let Some(&&h) = train.peek() {
            if h < t {
                train.next();
            } else {
                break;
            }
        }
        if let Some(&&h) = train.peek() {
            assert_ne!(h, t, "train and test overlap at index {t}");
        }
    }
}
