//! The canned two-source experiment grid: every base model on each source
//! and on the merged data, plus the four model-combination pipelines, with
//! corrected t-test comparisons against the merged-data forest.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{
    corrected_t_test, make_splits, ComparisonResult, EvalReport, Metric, SplitParams,
};
use crate::experiment::{
    materialize, run_on_materialized, ExperimentData, PeakConfig, PipelineDef, SourceData,
    SourceSel,
};
use crate::fusion::{FusionSpec, ScoreMode, SourceId};
use crate::models::ModelSpec;
use crate::rng::derive_seed;
use crate::spectra::PipelineConfig;
use crate::synth::{generate, SynthConfig, SynthOutput};

/// Full configuration of one suite run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub synth: SynthConfig,
    pub pipeline: PipelineConfig,
    pub peaks: PeakConfig,
    pub split: SplitParams,
    /// Trees per forest across the grid.
    pub n_trees: usize,
    pub svm_c: f64,
    pub logreg_l2: f64,
    /// Differential features kept by the t-test selection row.
    pub t_test_k: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            pipeline: PipelineConfig {
                smooth_sigma: 2.0,
                qc_sd_limit: 4.0,
                ..PipelineConfig::default()
            },
            peaks: PeakConfig { neighborhood: 3 },
            split: SplitParams::default(),
            n_trees: 500,
            svm_c: 1.0,
            logreg_l2: 1.0,
            t_test_k: 50,
        }
    }
}

impl SuiteConfig {
    /// Default suite with all seeds derived from one master seed.
    pub fn seeded(seed: u64) -> Self {
        let mut cfg = Self::default();
        cfg.synth.seed = seed;
        cfg.split.seed = derive_seed(seed, 0xB10F);
        cfg
    }

    fn svm(&self) -> ModelSpec {
        ModelSpec::Svm { c: self.svm_c, max_passes: 10_000 }
    }

    fn rf(&self, salt: u64) -> ModelSpec {
        ModelSpec::Rf {
            n_trees: self.n_trees,
            mtry: None,
            seed: derive_seed(self.synth.seed, salt),
            bootstrap: true,
        }
    }

    fn logreg(&self) -> ModelSpec {
        ModelSpec::Logreg { l2: self.logreg_l2, max_iter: 10_000 }
    }

    fn base_model(&self, kind: &str, salt: u64) -> ModelSpec {
        match kind {
            "cart" => ModelSpec::Cart,
            "nb" => ModelSpec::Nb,
            "logreg" => self.logreg(),
            "rf" => self.rf(salt),
            "svm" => self.svm(),
            other => unreachable!("unknown grid model {other}"),
        }
    }

    /// Single-model rows: each base model on the panel source, the
    /// spectral source, and the merged data.
    pub fn table1_defs(&self) -> Vec<PipelineDef> {
        let mut defs = Vec::new();
        for (group, source) in [
            ("panel", SourceSel::B),
            ("spectral", SourceSel::A),
            ("merged", SourceSel::Merged),
        ] {
            for (m, kind) in ["cart", "nb", "logreg", "rf", "svm"].iter().enumerate() {
                defs.push(PipelineDef {
                    id: format!("{group}-{kind}"),
                    source,
                    t_test_k: None,
                    model: Some(self.base_model(kind, 1000 + defs.len() as u64 + m as u64)),
                    fusion: None,
                });
            }
        }
        defs
    }

    /// Model-combination rows.
    pub fn table2_defs(&self) -> Vec<PipelineDef> {
        vec![
            PipelineDef {
                id: "comp-svm-rf-nb".into(),
                source: SourceSel::Fused,
                t_test_k: None,
                model: None,
                fusion: Some(FusionSpec::ModelComposition {
                    base_a: self.svm(),
                    base_b: self.rf(2001),
                    second_level: ModelSpec::Nb,
                    score_mode: ScoreMode::InSample,
                }),
            },
            PipelineDef {
                id: "incl-svm-to-panel-rf".into(),
                source: SourceSel::Fused,
                t_test_k: None,
                model: None,
                fusion: Some(FusionSpec::ModelInclusion {
                    base: self.svm(),
                    base_source: SourceId::A,
                    target: self.rf(2002),
                    score_mode: ScoreMode::InSample,
                }),
            },
            PipelineDef {
                id: "incl-rf-to-spectral-svm".into(),
                source: SourceSel::Fused,
                t_test_k: None,
                model: None,
                fusion: Some(FusionSpec::ModelInclusion {
                    base: self.rf(2003),
                    base_source: SourceId::B,
                    target: self.svm(),
                    score_mode: ScoreMode::InSample,
                }),
            },
            PipelineDef {
                id: "ttest50-merged-rf".into(),
                source: SourceSel::Merged,
                t_test_k: Some(self.t_test_k),
                model: Some(self.rf(2004)),
                fusion: None,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub pipeline_a: String,
    pub pipeline_b: String,
    pub metric: Metric,
    pub result: ComparisonResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub table1: Vec<EvalReport>,
    pub table2: Vec<EvalReport>,
    /// Each combination row against the merged-data forest, on per-split
    /// AUC and error.
    pub comparisons: Vec<ComparisonRecord>,
}

/// Generates synthetic two-source data and runs the full grid under one
/// split plan, so every report is comparable by the corrected t-test.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteResult> {
    let SynthOutput { spectra, panel, labels, .. } = generate(&cfg.synth)?;
    let sample_ids = panel.sample_ids.clone();
    let data = ExperimentData {
        a: SourceData::RawSpectra(spectra),
        b: SourceData::Features(panel),
        labels,
        sample_ids,
    };
    let plan = make_splits(&data.labels, &cfg.split)?;
    let repeats = materialize(&data, &plan, &cfg.pipeline, &cfg.peaks)?;

    let run_all = |defs: Vec<PipelineDef>| -> Result<Vec<EvalReport>> {
        defs.iter().map(|def| run_on_materialized(def, &repeats, &plan)).collect()
    };
    let table1 = run_all(cfg.table1_defs())?;
    let table2 = run_all(cfg.table2_defs())?;

    let merged_rf = table1
        .iter()
        .find(|r| r.pipeline_id == "merged-rf")
        .expect("grid contains merged-rf");
    let mut comparisons = Vec::new();
    for report in &table2 {
        for metric in [Metric::Auc, Metric::Error] {
            comparisons.push(ComparisonRecord {
                pipeline_a: report.pipeline_id.clone(),
                pipeline_b: merged_rf.pipeline_id.clone(),
                metric,
                result: corrected_t_test(report, merged_rf, metric, 0.05)?,
            });
        }
    }

    Ok(SuiteResult { table1, table2, comparisons })
}

fn fmt_pct(v: f64) -> String {
    if v.is_nan() {
        "--".into()
    } else {
        format!("{:.2}%", 100.0 * v)
    }
}

fn fmt_auc(v: f64) -> String {
    if v.is_nan() {
        "--".into()
    } else {
        format!("{v:.3}")
    }
}

/// Renders reports in the two-row-per-model layout (means over the splits,
/// then their standard deviations).
pub fn render_table(title: &str, rows: &[(&str, &EvalReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{title}\n{:<26}{:<8}{:>10}{:>10}{:>10}{:>8}\n",
        "", "", "Error", "SN", "SP", "AUC"
    ));
    let mut last_group = "";
    for (group, report) in rows {
        let shown = if *group == last_group { "" } else { group };
        last_group = group;
        let id = report.pipeline_id.rsplit('-').next().unwrap_or(&report.pipeline_id);
        out.push_str(&format!(
            "{shown:<26}{id:<8}{:>10}{:>10}{:>10}{:>8}\n",
            fmt_pct(report.error.mean),
            fmt_pct(report.sensitivity.mean),
            fmt_pct(report.specificity.mean),
            fmt_auc(report.auc.mean),
        ));
        out.push_str(&format!(
            "{:<26}{:<8}{:>10}{:>10}{:>10}{:>8}\n",
            "",
            "std",
            fmt_pct(report.error.std),
            fmt_pct(report.sensitivity.std),
            fmt_pct(report.specificity.std),
            fmt_auc(report.auc.std),
        ));
    }
    out
}

/// Table 1 analogue: grouped by source.
pub fn render_table1(reports: &[EvalReport]) -> String {
    let rows: Vec<(&str, &EvalReport)> = reports
        .iter()
        .map(|r| {
            let group = r.pipeline_id.split('-').next().unwrap_or("");
            (group, r)
        })
        .collect();
    render_table("Data fusion", &rows)
}

/// Table 2 analogue: one group per combination strategy.
pub fn render_table2(reports: &[EvalReport]) -> String {
    let rows: Vec<(&str, &EvalReport)> =
        reports.iter().map(|r| (r.pipeline_id.as_str(), r)).collect();
    render_table("Model combination", &rows)
}

pub fn render_comparisons(comparisons: &[ComparisonRecord]) -> String {
    let mut out = String::from("Corrected resampled paired t-tests\n");
    for c in comparisons {
        let flag = if c.result.degenerate { " (zero-variance difference)" } else { "" };
        out.push_str(&format!(
            "{} vs {} on {}: t = {:.4}, p = {:.6}, {}{}\n",
            c.pipeline_a,
            c.pipeline_b,
            c.metric,
            c.result.t,
            c.result.p,
            if c.result.significant { "significant at 0.05" } else { "not significant" },
            flag,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_the_expected_rows() {
        let cfg = SuiteConfig::seeded(3);
        let t1 = cfg.table1_defs();
        assert_eq!(t1.len(), 15);
        for def in &t1 {
            def.validate().unwrap();
        }
        let t2 = cfg.table2_defs();
        assert_eq!(t2.len(), 4);
        for def in &t2 {
            def.validate().unwrap();
        }
        let ids: std::collections::HashSet<_> =
            t1.iter().chain(&t2).map(|d| d.id.clone()).collect();
        assert_eq!(ids.len(), 19);
    }

    #[test]
    fn rendered_means_match_aggregates_at_two_decimals() {
        use crate::eval::{summarize, RepeatMetrics, SplitIndices, SplitPlan};
        let per_repeat: Vec<RepeatMetrics> = [0.12, 0.18, 0.2]
            .iter()
            .map(|&error| RepeatMetrics {
                error,
                sensitivity: Some(1.0 - error),
                specificity: Some(0.9),
                auc: Some(0.85),
                roc: vec![],
            })
            .collect();
        let plan = SplitPlan {
            n: 10,
            params: SplitParams::default(),
            repeats: vec![SplitIndices { train: (0..7).collect(), test: (7..10).collect() }; 3],
            fingerprint: "x".into(),
        };
        let report = EvalReport::from_repeats("panel-cart".into(), &plan, per_repeat, false);
        let text = render_table1(std::slice::from_ref(&report));
        let mean_line = text.lines().nth(2).unwrap();
        let expect = format!("{:.2}%", 100.0 * summarize([0.12, 0.18, 0.2].into_iter()).mean);
        assert!(mean_line.contains(&expect), "line: {mean_line}");
        let std_line = text.lines().nth(3).unwrap();
        assert!(std_line.trim_start().starts_with("std"));
    }

    #[test]
    fn degenerate_rows_render_without_panicking() {
        use crate::eval::{MetricSummary, RepeatMetrics};
        let report = EvalReport {
            schema_version: crate::eval::REPORT_SCHEMA_VERSION,
            pipeline_id: "panel-cart".into(),
            plan_fingerprint: "x".into(),
            n_train: 7,
            n_test: 3,
            per_repeat: vec![RepeatMetrics {
                error: 0.5,
                sensitivity: None,
                specificity: Some(1.0),
                auc: None,
                roc: vec![],
            }],
            error: MetricSummary { mean: 0.5, std: 0.0 },
            sensitivity: MetricSummary { mean: f64::NAN, std: f64::NAN },
            specificity: MetricSummary { mean: 1.0, std: 0.0 },
            auc: MetricSummary { mean: f64::NAN, std: f64::NAN },
            any_nonconverged: false,
        };
        let text = render_table1(std::slice::from_ref(&report));
        assert!(text.contains("--"));
    }
}
