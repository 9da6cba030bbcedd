//! Two-source biomarker classification pipeline: spectral preprocessing,
//! peak feature extraction, base classifiers with soft discriminative
//! outputs, model fusion strategies, and a resampled evaluation harness
//! with a variance-corrected paired t-test.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fusion;
pub mod io;
pub mod models;
pub mod peaks;
pub mod rng;
pub mod spectra;
pub mod suite;
pub mod synth;

pub use dataset::{Dataset, Label, SourceTag};
pub use error::{Error, Result};
pub use eval::{
    corrected_t_test, make_splits, ComparisonResult, EvalReport, Metric, SplitParams, SplitPlan,
};
pub use experiment::{
    run_experiment, ExperimentConfig, ExperimentData, PeakConfig, PipelineDef, SourceData,
    SourceSel,
};
pub use fusion::{FusedModel, FusionSpec, ScoreMode, SourceId};
pub use models::{ModelSpec, TrainedModel};
pub use peaks::PeakModel;
pub use spectra::{PipelineConfig, Spectrum};
pub use suite::{SuiteConfig, SuiteResult};
pub use synth::{SynthConfig, SynthOutput, SynthTruth};
