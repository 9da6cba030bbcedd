//! Property tests for the preprocessing and evaluation invariants.

use proptest::prelude::*;

use biofuse_core::dataset::{Dataset, Label, SourceTag};
use biofuse_core::eval::roc_auc;
use biofuse_core::fusion::data_merge;
use biofuse_core::spectra::{
    correct_baseline, normalize_tic, smooth, variance_stabilize, PipelineConfig, Spectrum,
};

fn spectrum_from(intensity: Vec<f64>) -> Spectrum {
    let mz = (0..intensity.len()).map(|i| 1500.0 + 10.0 * i as f64).collect();
    Spectrum::new(mz, intensity, "p").unwrap()
}

fn intensity_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cube_root_is_strictly_monotone(v in intensity_vec(2..40)) {
        let s = variance_stabilize(&spectrum_from(v.clone()));
        for (i, a) in v.iter().enumerate() {
            for (j, b) in v.iter().enumerate() {
                if a < b {
                    prop_assert!(s.intensity[i] < s.intensity[j]);
                }
            }
        }
    }

    #[test]
    fn cube_root_inverts_through_cubing(v in intensity_vec(2..40)) {
        let s = variance_stabilize(&spectrum_from(v.clone()));
        for (r, orig) in s.intensity.iter().zip(&v) {
            prop_assert!((r.powi(3) - orig).abs() <= 1e-12 * orig.abs().max(1.0));
        }
    }

    #[test]
    fn baseline_ignores_additive_constants(
        v in intensity_vec(30..80),
        c in -100.0..100.0f64,
        window in 3usize..25,
    ) {
        let cfg = PipelineConfig { baseline_window: window, ..PipelineConfig::default() };
        let plain = correct_baseline(&spectrum_from(v.clone()), &cfg).unwrap();
        let shifted_input: Vec<f64> = v.iter().map(|x| x + c).collect();
        let shifted = correct_baseline(&spectrum_from(shifted_input), &cfg).unwrap();
        for (a, b) in plain.intensity.iter().zip(&shifted.intensity) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn smoothing_preserves_constants(c in -20.0..20.0f64, sigma in 0.5..6.0f64, n in 16usize..64) {
        let cfg = PipelineConfig { smooth_sigma: sigma, ..PipelineConfig::default() };
        let out = smooth(&spectrum_from(vec![c; n]), &cfg);
        for v in out.intensity {
            prop_assert!((v - c).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn tic_normalization_is_idempotent(
        v in prop::collection::vec(0.01..40.0f64, 8..60),
        target in 0.1..50.0f64,
    ) {
        let cfg = PipelineConfig::default();
        let s = spectrum_from(v);
        let once = normalize_tic(&s, &cfg, target).unwrap();
        let twice = normalize_tic(&once, &cfg, target).unwrap();
        for (a, b) in once.intensity.iter().zip(&twice.intensity) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn auc_survives_strictly_increasing_maps(
        scores in prop::collection::vec(-5.0..5.0f64, 6..40),
        flips in prop::collection::vec(any::<bool>(), 6..40),
    ) {
        let n = scores.len().min(flips.len());
        let scores = &scores[..n];
        let mut labels: Vec<Label> = flips[..n]
            .iter()
            .map(|&case| if case { Label::Case } else { Label::Control })
            .collect();
        labels[0] = Label::Case;
        labels[n - 1] = Label::Control;
        let (_, base) = roc_auc(scores, &labels).unwrap();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let affine: Vec<f64> = scores.iter().map(|s| 11.0 * s + 3.0).collect();
        prop_assert_eq!(roc_auc(&exp, &labels).unwrap().1, base);
        prop_assert_eq!(roc_auc(&affine, &labels).unwrap().1, base);
    }

    #[test]
    fn merge_is_exact_and_order_associative(
        cols_a in prop::collection::vec(prop::collection::vec(-9.0..9.0f64, 5), 0..4),
        cols_b in prop::collection::vec(prop::collection::vec(-9.0..9.0f64, 5), 1..4),
        cols_c in prop::collection::vec(prop::collection::vec(-9.0..9.0f64, 5), 1..4),
    ) {
        let labels = vec![
            Label::Case,
            Label::Control,
            Label::Case,
            Label::Control,
            Label::Case,
        ];
        let build = |cols: &[Vec<f64>], tag: SourceTag| {
            let p = cols.len();
            let mut x = ndarray::Array2::zeros((5, p));
            for (j, col) in cols.iter().enumerate() {
                for (i, v) in col.iter().enumerate() {
                    x[(i, j)] = *v;
                }
            }
            Dataset::new(
                x,
                labels.clone(),
                vec![tag; p],
                (0..p).map(|j| format!("{tag:?}{j}")).collect(),
                (0..5).map(|i| format!("s{i}")).collect(),
            )
            .unwrap()
        };
        let a = build(&cols_a, SourceTag::Spectral);
        let b = build(&cols_b, SourceTag::Panel);
        let c = build(&cols_c, SourceTag::Score);

        let ab = data_merge(&a, &b).unwrap();
        prop_assert_eq!(ab.n_features(), a.n_features() + b.n_features());
        for i in 0..5 {
            for j in 0..a.n_features() {
                prop_assert_eq!(ab.x[(i, j)], a.x[(i, j)]);
            }
            for j in 0..b.n_features() {
                prop_assert_eq!(ab.x[(i, a.n_features() + j)], b.x[(i, j)]);
            }
        }
        let left = data_merge(&ab, &c).unwrap();
        let right = data_merge(&a, &data_merge(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }
}
