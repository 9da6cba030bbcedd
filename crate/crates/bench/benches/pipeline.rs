use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use biofuse_core::experiment::{fit_spectral, preprocess_base, PeakConfig};
use biofuse_core::eval::roc_auc;
use biofuse_core::models::{ModelSpec, TrainedModel};
use biofuse_core::spectra::{align, correct_baseline, smooth, variance_stabilize};
use biofuse_core::synth::{generate, SynthConfig};
use biofuse_core::{Label, PipelineConfig};

fn bench_cfg() -> SynthConfig {
    SynthConfig {
        n_samples: 40,
        n_cases: 20,
        spectral_grid_size: 1554,
        n_true_peaks: 110,
        seed: 42,
        ..SynthConfig::default()
    }
}

fn pipeline_cfg() -> PipelineConfig {
    PipelineConfig { smooth_sigma: 2.0, ..PipelineConfig::default() }
}

fn preprocessing(c: &mut Criterion) {
    let out = generate(&bench_cfg()).unwrap();
    let cfg = pipeline_cfg();
    let spectrum = out.spectra[0].clone();

    c.bench_function("variance_stabilize_1554", |b| {
        b.iter(|| variance_stabilize(black_box(&spectrum)))
    });
    let stabilized = variance_stabilize(&spectrum);
    c.bench_function("correct_baseline_w200_1554", |b| {
        b.iter(|| correct_baseline(black_box(&stabilized), &cfg).unwrap())
    });
    let corrected = correct_baseline(&stabilized, &cfg).unwrap();
    c.bench_function("smooth_sigma2_1554", |b| b.iter(|| smooth(black_box(&corrected), &cfg)));
}

fn alignment(c: &mut Criterion) {
    let out = generate(&bench_cfg()).unwrap();
    let cfg = pipeline_cfg();
    let base = preprocess_base(&out.spectra, &cfg).unwrap();
    let fitted = fit_spectral(&base, &cfg, &PeakConfig { neighborhood: 3 }).unwrap();
    c.bench_function("align_110_peaks", |b| {
        b.iter(|| align(black_box(&base[1]), &fitted.reference, &cfg))
    });
}

fn training(c: &mut Criterion) {
    let out = generate(&bench_cfg()).unwrap();
    let panel = out.panel;
    c.bench_function("svm_train_panel30", |b| {
        b.iter(|| {
            TrainedModel::train(
                &ModelSpec::Svm { c: 1.0, max_passes: 10_000 },
                black_box(&panel),
            )
            .unwrap()
        })
    });
    c.bench_function("rf50_train_panel30", |b| {
        b.iter(|| {
            TrainedModel::train(
                &ModelSpec::Rf { n_trees: 50, mtry: None, seed: 1, bootstrap: true },
                black_box(&panel),
            )
            .unwrap()
        })
    });
}

fn metrics(c: &mut Criterion) {
    let mut state = 0x5eedu64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % 1000) as f64 / 1000.0
    };
    let scores: Vec<f64> = (0..1000).map(|_| next()).collect();
    let labels: Vec<Label> = (0..1000)
        .map(|i| if i % 2 == 0 { Label::Case } else { Label::Control })
        .collect();
    c.bench_function("roc_auc_1000", |b| {
        b.iter(|| roc_auc(black_box(&scores), black_box(&labels)).unwrap())
    });
}

criterion_group!(benches, preprocessing, alignment, training, metrics);
criterion_main!(benches);
