//! Subcommand implementations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use biofuse_core::eval::REPORT_SCHEMA_VERSION;
use biofuse_core::experiment::{materialize, run_on_materialized, ExperimentData, SourceData};
use biofuse_core::io;
use biofuse_core::spectra::{self, PipelineConfig};
use biofuse_core::suite::{self, SuiteConfig};
use biofuse_core::{
    corrected_t_test, make_splits, Error, EvalReport, Label, Metric, SourceTag, SynthConfig,
};

use crate::manifest;
use crate::CliError;

/// Multi-report container written by `evaluate`.
#[derive(Serialize, Deserialize)]
struct ReportFile {
    schema_version: u32,
    reports: Vec<EvalReport>,
}

pub fn synth(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out_dir: PathBuf,
) -> Result<(), CliError> {
    let mut cfg: SynthConfig = match &config {
        Some(path) => io::read_json(path)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let out = biofuse_core::synth::generate(&cfg)?;

    io::write_spectra_csv(out_dir.join("spectra.csv"), &out.spectra)?;
    io::write_feature_csv(out_dir.join("panel.csv"), &out.panel)?;
    let pairs: Vec<(String, Label)> = out
        .panel
        .sample_ids
        .iter()
        .cloned()
        .zip(out.labels.iter().copied())
        .collect();
    io::write_labels_csv(out_dir.join("labels.csv"), &pairs)?;
    io::write_json_atomic(out_dir.join("truth.json"), &out.truth)?;
    manifest::write(
        out_dir.join("manifest.json"),
        "synth",
        manifest::digest(&cfg),
        vec![cfg.seed],
    )?;
    println!(
        "wrote {} spectra, {}-feature panel and labels to {}",
        out.spectra.len(),
        out.panel.n_features(),
        out_dir.display()
    );
    Ok(())
}

pub fn preprocess(
    input: PathBuf,
    config: Option<PathBuf>,
    out: PathBuf,
    qc_report: PathBuf,
) -> Result<(), CliError> {
    let cfg: PipelineConfig = match &config {
        Some(path) => io::read_json(path)?,
        None => PipelineConfig::default(),
    };
    cfg.validate()?;
    let raw = io::read_spectra_csv(&input)?;
    let filtered = spectra::qc_filter(raw, &cfg)?;
    io::write_json_atomic(&qc_report, &filtered.report)?;
    if filtered.kept.is_empty() {
        return Err(Error::BatchTooSmall { len: 0, min: 1 }.into());
    }

    let base = biofuse_core::experiment::preprocess_base(&filtered.kept, &cfg)?;
    let tic_target =
        base.iter().map(|s| spectra::tic(s, &cfg)).sum::<f64>() / base.len() as f64;
    let normalized: Vec<spectra::Spectrum> = base
        .iter()
        .map(|s| spectra::normalize_tic(s, &cfg, tic_target))
        .collect::<biofuse_core::Result<_>>()?;
    let reference = biofuse_core::peaks::mean_profile(&normalized)?;
    let aligned: Vec<spectra::Spectrum> = normalized
        .iter()
        .map(|s| spectra::align(s, &reference, &cfg).1)
        .collect();

    io::write_spectra_csv(&out, &aligned)?;
    manifest::write(
        sibling_manifest(&out),
        "preprocess",
        manifest::digest(&cfg),
        vec![],
    )?;
    println!(
        "preprocessed {} spectra ({} excluded by QC) into {}",
        aligned.len(),
        filtered.excluded.len(),
        out.display()
    );
    Ok(())
}

pub fn peaks(
    input: PathBuf,
    labels: PathBuf,
    out: PathBuf,
    model: PathBuf,
    neighborhood: usize,
) -> Result<(), CliError> {
    let spectra = io::read_spectra_csv(&input)?;
    let label_pairs = io::read_labels_csv(&labels)?;
    let lookup: std::collections::HashMap<&str, Label> =
        label_pairs.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    let y: Vec<Label> = spectra
        .iter()
        .map(|s| {
            lookup.get(s.sample_id.as_str()).copied().ok_or_else(|| Error::SampleMismatch {
                detail: format!("sample '{}' missing from label file", s.sample_id),
            })
        })
        .collect::<biofuse_core::Result<_>>()?;

    let mean = biofuse_core::peaks::mean_profile(&spectra)?;
    let peak_model = biofuse_core::peaks::build_peak_model(&mean, neighborhood)?;
    let features = biofuse_core::peaks::extract_features(&spectra, &peak_model, &y)?;

    io::write_feature_csv(&out, &features)?;
    io::write_json_atomic(&model, &peak_model)?;
    manifest::write(
        sibling_manifest(&out),
        "peaks",
        manifest::digest(&peak_model),
        vec![],
    )?;
    println!(
        "extracted {} peak features for {} samples into {}",
        peak_model.n_peaks(),
        features.n_samples(),
        out.display()
    );
    Ok(())
}

/// Loads experiment inputs, resolving relative paths against the config
/// file's directory.
fn load_experiment_data(
    cfg: &biofuse_core::ExperimentConfig,
    config_dir: &Path,
) -> Result<ExperimentData, CliError> {
    let resolve = |p: &str| -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            config_dir.join(path)
        }
    };
    let label_pairs = io::read_labels_csv(resolve(&cfg.inputs.labels))?;
    let panel_file = io::read_feature_csv(resolve(&cfg.inputs.panel))?;
    let panel = io::dataset_from_feature_file(panel_file, &label_pairs, SourceTag::Panel)?;
    let sample_ids = panel.sample_ids.clone();
    let labels = panel.y.clone();

    let a = match (&cfg.inputs.spectra, &cfg.inputs.features_a) {
        (Some(path), None) => SourceData::RawSpectra(io::read_spectra_csv(resolve(path))?),
        (None, Some(path)) => {
            let file = io::read_feature_csv(resolve(path))?;
            SourceData::Features(io::dataset_from_feature_file(
                file,
                &label_pairs,
                SourceTag::Spectral,
            )?)
        }
        _ => unreachable!("checked by ExperimentConfig::validate"),
    };
    Ok(ExperimentData { a, b: SourceData::Features(panel), labels, sample_ids })
}

pub fn evaluate(config_path: PathBuf, out: PathBuf, strict: bool) -> Result<(), CliError> {
    let cfg: biofuse_core::ExperimentConfig = io::read_json(&config_path)?;
    cfg.validate()?;
    cfg.pipeline.validate()?;
    let config_dir = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let data = load_experiment_data(&cfg, &config_dir)?;
    let plan = make_splits(&data.labels, &cfg.split)?;
    let repeats = materialize(&data, &plan, &cfg.pipeline, &cfg.peaks)?;

    let reports: Vec<EvalReport> = cfg
        .pipelines
        .iter()
        .map(|def| run_on_materialized(def, &repeats, &plan))
        .collect::<biofuse_core::Result<_>>()?;

    let nonconverged: Vec<String> = reports
        .iter()
        .filter(|r| r.any_nonconverged)
        .map(|r| r.pipeline_id.clone())
        .collect();

    io::write_json_atomic(&out, &ReportFile { schema_version: REPORT_SCHEMA_VERSION, reports })?;
    manifest::write(
        sibling_manifest(&out),
        "evaluate",
        manifest::digest(&cfg),
        vec![cfg.split.seed],
    )?;
    println!("wrote {} pipeline reports to {}", cfg.pipelines.len(), out.display());
    if strict && !nonconverged.is_empty() {
        return Err(CliError::Numerical(format!(
            "trainers did not converge in pipelines: {}",
            nonconverged.join(", ")
        )));
    }
    Ok(())
}

fn load_report(path: &Path, id: Option<String>) -> Result<EvalReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    if let Ok(file) = serde_json::from_str::<ReportFile>(&text) {
        let mut reports = file.reports;
        return match (&id, reports.len()) {
            (None, 1) => Ok(reports.remove(0)),
            (None, n) => Err(Error::ConfigInvalid(format!(
                "{} holds {n} reports; select one with an id flag",
                path.display()
            ))
            .into()),
            (Some(want), _) => reports
                .into_iter()
                .find(|r| &r.pipeline_id == want)
                .ok_or_else(|| {
                    Error::ConfigInvalid(format!(
                        "no pipeline '{want}' in {}",
                        path.display()
                    ))
                    .into()
                }),
        };
    }
    serde_json::from_str::<EvalReport>(&text).map_err(|e| Error::from(e).into())
}

pub fn compare(
    a: PathBuf,
    b: PathBuf,
    metric: Metric,
    a_id: Option<String>,
    b_id: Option<String>,
) -> Result<(), CliError> {
    let report_a = load_report(&a, a_id)?;
    let report_b = load_report(&b, b_id)?;
    let result = corrected_t_test(&report_a, &report_b, metric, 0.05)?;
    println!(
        "{} vs {} on {metric}",
        report_a.pipeline_id, report_b.pipeline_id
    );
    println!("t = {:.6}", result.t);
    println!("p = {:.6}", result.p);
    println!("significant at 0.05: {}", if result.significant { "yes" } else { "no" });
    if result.degenerate {
        println!("note: zero-variance difference; p is a 0-sentinel");
    }
    Ok(())
}

pub struct SuiteArgs {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub config: Option<PathBuf>,
    pub trees: Option<usize>,
    pub repeats: Option<usize>,
    pub grid_size: Option<usize>,
    pub samples: Option<usize>,
    pub true_peaks: Option<usize>,
    pub strict: bool,
}

pub fn paper_suite(args: SuiteArgs) -> Result<(), CliError> {
    let mut cfg: SuiteConfig = match &args.config {
        Some(path) => io::read_json(path)?,
        None => SuiteConfig::seeded(args.seed),
    };
    if args.config.is_some() {
        // keep the file's settings but honor an explicit seed
        if args.seed != 0 {
            cfg.synth.seed = args.seed;
            cfg.split.seed = biofuse_core::rng::derive_seed(args.seed, 0xB10F);
        }
    }
    if let Some(trees) = args.trees {
        cfg.n_trees = trees;
    }
    if let Some(repeats) = args.repeats {
        cfg.split.n_repeats = repeats;
    }
    if let Some(grid) = args.grid_size {
        cfg.synth.spectral_grid_size = grid;
    }
    if let Some(n) = args.samples {
        cfg.synth.n_samples = n;
        cfg.synth.n_cases = n / 2;
    }
    if let Some(peaks) = args.true_peaks {
        cfg.synth.n_true_peaks = peaks;
        // the t-test row must not ask for more columns than get detected
        cfg.t_test_k = cfg.t_test_k.min((peaks / 2).max(1));
    }

    let result = suite::run_suite(&cfg)?;
    let out = &args.out_dir;

    // regenerate the data for the record; same seed, same bytes
    let synth_out = biofuse_core::synth::generate(&cfg.synth)?;
    io::write_spectra_csv(out.join("data/spectra.csv"), &synth_out.spectra)?;
    io::write_feature_csv(out.join("data/panel.csv"), &synth_out.panel)?;
    let pairs: Vec<(String, Label)> = synth_out
        .panel
        .sample_ids
        .iter()
        .cloned()
        .zip(synth_out.labels.iter().copied())
        .collect();
    io::write_labels_csv(out.join("data/labels.csv"), &pairs)?;
    io::write_json_atomic(out.join("data/truth.json"), &synth_out.truth)?;

    for report in result.table1.iter().chain(&result.table2) {
        io::write_json_atomic(
            out.join(format!("reports/{}.json", report.pipeline_id)),
            report,
        )?;
        write_roc_csv(&out.join(format!("roc/{}.csv", report.pipeline_id)), report)?;
    }
    let table1 = suite::render_table1(&result.table1);
    let table2 = suite::render_table2(&result.table2);
    let comparisons = suite::render_comparisons(&result.comparisons);
    io::write_text_atomic(out.join("table1.txt"), &table1)?;
    io::write_text_atomic(out.join("table2.txt"), &table2)?;
    io::write_json_atomic(out.join("comparisons.json"), &result.comparisons)?;
    io::write_text_atomic(out.join("comparisons.txt"), &comparisons)?;
    manifest::write(
        out.join("manifest.json"),
        "paper-suite",
        manifest::digest(&cfg),
        vec![cfg.synth.seed, cfg.split.seed],
    )?;

    print!("{table1}\n{table2}\n{comparisons}");

    let nonconverged: Vec<&str> = result
        .table1
        .iter()
        .chain(&result.table2)
        .filter(|r| r.any_nonconverged)
        .map(|r| r.pipeline_id.as_str())
        .collect();
    if args.strict && !nonconverged.is_empty() {
        return Err(CliError::Numerical(format!(
            "trainers did not converge in pipelines: {}",
            nonconverged.join(", ")
        )));
    }
    Ok(())
}

fn write_roc_csv(path: &Path, report: &EvalReport) -> Result<(), CliError> {
    let mut text = String::from("repeat,fpr,tpr\n");
    for (r, metrics) in report.per_repeat.iter().enumerate() {
        for point in &metrics.roc {
            text.push_str(&format!("{r},{},{}\n", point.fpr, point.tpr));
        }
    }
    io::write_text_atomic(path, &text)?;
    Ok(())
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}
