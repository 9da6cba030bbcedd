//! Peak locations learned from a training mean profile, and conversion of
//! spectra into fixed-length peak-intensity feature vectors.
//!
//! The peak model is fit once on training data; applying it to new spectra
//! never re-detects peaks, so test samples cannot leak into the feature
//! definition.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label, SourceTag};
use crate::error::{Error, Result};
use crate::spectra::{detect_spectrum_peaks, Spectrum};

pub const PEAK_MODEL_SCHEMA_VERSION: u32 = 1;

/// Peak locations plus the half-width of the averaging neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakModel {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    /// Ascending grid indices of the selected peaks.
    pub peak_indices: Vec<usize>,
    /// m/z value at each peak index, for grid checks and column naming.
    pub peak_mz: Vec<f64>,
    /// Half-width of the averaging window, in grid points.
    pub neighborhood: usize,
}

fn default_schema_version() -> u32 {
    PEAK_MODEL_SCHEMA_VERSION
}

impl PeakModel {
    pub fn n_peaks(&self) -> usize {
        self.peak_indices.len()
    }

    fn check_grid(&self, s: &Spectrum) -> Result<()> {
        for (&idx, &mz) in self.peak_indices.iter().zip(&self.peak_mz) {
            let ok = idx < s.len() && {
                let g = s.mz[idx];
                (g - mz).abs() <= 1e-9 * mz.abs().max(1.0)
            };
            if !ok {
                return Err(Error::GridMismatch {
                    detail: format!(
                        "spectrum {} does not carry m/z {mz} at grid index {idx}",
                        s.sample_id
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Pointwise mean of a batch of spectra sharing one m/z grid.
pub fn mean_profile(training: &[Spectrum]) -> Result<Spectrum> {
    let first = training.first().ok_or(Error::EmptyTrainingSet)?;
    for s in &training[1..] {
        if s.mz != first.mz {
            return Err(Error::GridMismatch {
                detail: format!("spectrum {} is on a different grid", s.sample_id),
            });
        }
    }
    let n = training.len() as f64;
    let mut sum = vec![0.0; first.len()];
    for s in training {
        for (acc, v) in sum.iter_mut().zip(&s.intensity) {
            *acc += v;
        }
    }
    for v in &mut sum {
        *v /= n;
    }
    Ok(Spectrum { mz: first.mz.clone(), intensity: sum, sample_id: "mean".into() })
}

/// Detects peaks on a (smoothed) mean profile and fixes the feature
/// neighborhood. Peaks closer than `2*neighborhood` are merged, keeping the
/// higher apex, so no two feature columns cover the same window.
pub fn build_peak_model(mean: &Spectrum, neighborhood: usize) -> Result<PeakModel> {
    let detected = detect_spectrum_peaks(mean);
    if detected.is_empty() {
        return Err(Error::NoPeaksFound);
    }
    let min_sep = 2 * neighborhood;
    let mut kept: Vec<usize> = Vec::with_capacity(detected.len());
    for idx in detected {
        match kept.last() {
            Some(&prev) if idx - prev < min_sep => {
                if mean.intensity[idx] > mean.intensity[prev] {
                    *kept.last_mut().unwrap() = idx;
                }
            }
            _ => kept.push(idx),
        }
    }
    let peak_mz = kept.iter().map(|&i| mean.mz[i]).collect();
    Ok(PeakModel {
        schema_version: PEAK_MODEL_SCHEMA_VERSION,
        peak_indices: kept,
        peak_mz,
        neighborhood,
    })
}

/// Converts each spectrum into its peak-feature vector: feature `j` is the
/// mean intensity over `[idx_j - w, idx_j + w]`, truncated at the grid
/// bounds.
pub fn extract_features(batch: &[Spectrum], pm: &PeakModel, labels: &[Label]) -> Result<Dataset> {
    if batch.len() != labels.len() {
        return Err(Error::LengthMismatch { left: batch.len(), right: labels.len() });
    }
    for s in batch {
        pm.check_grid(s)?;
    }
    let (n, p) = (batch.len(), pm.n_peaks());
    let mut x = Array2::zeros((n, p));
    for (i, s) in batch.iter().enumerate() {
        for (j, &idx) in pm.peak_indices.iter().enumerate() {
            x[(i, j)] = windowed_mean(&s.intensity, idx, pm.neighborhood);
        }
    }
    let column_names = pm.peak_mz.iter().map(|mz| format!("peak_{mz:.4}")).collect();
    Dataset::new(
        x,
        labels.to_vec(),
        vec![SourceTag::Spectral; p],
        column_names,
        batch.iter().map(|s| s.sample_id.clone()).collect(),
    )
}

fn windowed_mean(v: &[f64], center: usize, half: usize) -> f64 {
    let lo = center.saturating_sub(half);
    let hi = (center + half).min(v.len() - 1);
    let mut sum = 0.0;
    for &x in &v[lo..=hi] {
        sum += x;
    }
    sum / (hi - lo + 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spectrum(intensity: Vec<f64>, id: &str) -> Spectrum {
        let mz = (0..intensity.len()).map(|i| 1000.0 + i as f64).collect();
        Spectrum::new(mz, intensity, id).unwrap()
    }

    #[test]
    fn mean_of_one_is_itself() {
        let s = spectrum(vec![1.0, 5.0, 2.0], "a");
        let m = mean_profile(std::slice::from_ref(&s)).unwrap();
        assert_eq!(m.intensity, s.intensity);
    }

    #[test]
    fn mean_of_opposites_is_zero() {
        let v = vec![3.0, -1.0, 7.5, 0.25];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let m = mean_profile(&[spectrum(v, "a"), spectrum(neg, "b")]).unwrap();
        for x in m.intensity {
            assert_abs_diff_eq!(x, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn mean_matches_scalar_resummation() {
        let batch: Vec<Spectrum> = (0..7)
            .map(|k| {
                spectrum(
                    (0..30).map(|i| ((i * 7 + k * 13) % 17) as f64 * 0.3).collect(),
                    &format!("s{k}"),
                )
            })
            .collect();
        let m = mean_profile(&batch).unwrap();
        for i in 0..30 {
            let mut acc = 0.0;
            for s in &batch {
                acc += s.intensity[i];
            }
            assert_abs_diff_eq!(m.intensity[i], acc / 7.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mean_rejects_grid_mismatch_and_empty() {
        assert!(matches!(mean_profile(&[]), Err(Error::EmptyTrainingSet)));
        let a = spectrum(vec![1.0; 5], "a");
        let b = Spectrum::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![1.0; 5], "b").unwrap();
        assert!(matches!(mean_profile(&[a, b]), Err(Error::GridMismatch { .. })));
    }

    fn triangle(n: usize, apex: usize, h: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let d = i.abs_diff(apex) as f64;
                (h - d).max(0.0)
            })
            .collect()
    }

    #[test]
    fn model_from_single_triangle() {
        let mean = spectrum(triangle(41, 20, 8.0), "m");
        let pm = build_peak_model(&mean, 5).unwrap();
        assert_eq!(pm.peak_indices, vec![20]);
        assert_eq!(pm.peak_mz, vec![1020.0]);
    }

    #[test]
    fn flat_mean_has_no_peaks() {
        let mean = spectrum(vec![2.0; 30], "m");
        assert!(matches!(build_peak_model(&mean, 5), Err(Error::NoPeaksFound)));
    }

    #[test]
    fn close_peaks_merge_keeping_higher_apex() {
        // spikes at 10 and 16 are closer than 2*neighborhood and merge into
        // the higher one; the spike at 30 stands alone
        let mut v = vec![0.0; 40];
        v[10] = 4.0;
        v[16] = 6.0;
        v[30] = 5.0;
        let pm = build_peak_model(&spectrum(v, "m"), 5).unwrap();
        assert_eq!(pm.peak_indices, vec![16, 30]);
    }

    #[test]
    fn recovers_injected_bumps_at_scale() {
        // 1554 bumps, 12 points apart, on a clean profile
        let n_bumps = 1554usize;
        let spacing = 12usize;
        let n = n_bumps * spacing + 2 * spacing;
        let mut v = vec![0.0; n];
        let centers: Vec<usize> = (0..n_bumps).map(|k| spacing + k * spacing).collect();
        for &c in &centers {
            for i in c.saturating_sub(6)..(c + 6).min(n - 1) {
                let d = i as f64 - c as f64;
                v[i] += 5.0 * (-d * d / (2.0 * 2.25)).exp();
            }
        }
        let pm = build_peak_model(&spectrum(v, "m"), 3).unwrap();
        assert_eq!(pm.n_peaks(), n_bumps);
        for (&found, &truth) in pm.peak_indices.iter().zip(&centers) {
            assert!(found.abs_diff(truth) <= 1);
        }
    }

    fn labels(n: usize) -> Vec<Label> {
        (0..n).map(|i| if i % 2 == 0 { Label::Case } else { Label::Control }).collect()
    }

    #[test]
    fn zero_neighborhood_reads_the_apex() {
        let pm = PeakModel {
            schema_version: PEAK_MODEL_SCHEMA_VERSION,
            peak_indices: vec![3, 7],
            peak_mz: vec![1003.0, 1007.0],
            neighborhood: 0,
        };
        let s = spectrum((0..12).map(|i| i as f64 * 1.5).collect(), "a");
        let d = extract_features(&[s], &pm, &labels(1)).unwrap();
        assert_eq!(d.x[(0, 0)], 4.5);
        assert_eq!(d.x[(0, 1)], 10.5);
        assert_eq!(d.column_tags, vec![SourceTag::Spectral; 2]);
    }

    #[test]
    fn constant_spectrum_gives_constant_features() {
        let pm = PeakModel {
            schema_version: PEAK_MODEL_SCHEMA_VERSION,
            peak_indices: vec![0, 5, 19],
            peak_mz: vec![1000.0, 1005.0, 1019.0],
            neighborhood: 4,
        };
        let d = extract_features(&[spectrum(vec![3.25; 20], "a")], &pm, &labels(1)).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(d.x[(0, j)], 3.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn features_match_naive_double_loop() {
        let pm = PeakModel {
            schema_version: PEAK_MODEL_SCHEMA_VERSION,
            peak_indices: vec![2, 9, 24, 29],
            peak_mz: vec![1002.0, 1009.0, 1024.0, 1029.0],
            neighborhood: 3,
        };
        let batch: Vec<Spectrum> = (0..5)
            .map(|k| {
                spectrum(
                    (0..30).map(|i| ((i * 3 + k) % 11) as f64 - 4.0).collect(),
                    &format!("s{k}"),
                )
            })
            .collect();
        let d = extract_features(&batch, &pm, &labels(5)).unwrap();
        for (i, s) in batch.iter().enumerate() {
            for (j, &c) in pm.peak_indices.iter().enumerate() {
                let lo = c.saturating_sub(3);
                let hi = (c + 3).min(29);
                let mut acc = 0.0;
                let mut count = 0.0;
                for t in lo..=hi {
                    acc += s.intensity[t];
                    count += 1.0;
                }
                assert_abs_diff_eq!(d.x[(i, j)], acc / count, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn features_are_translation_covariant() {
        let pm = PeakModel {
            schema_version: PEAK_MODEL_SCHEMA_VERSION,
            peak_indices: vec![4, 14],
            peak_mz: vec![1004.0, 1014.0],
            neighborhood: 2,
        };
        let base: Vec<f64> = (0..20).map(|i| (i as f64 * 0.9).sin()).collect();
        let shifted: Vec<f64> = base.iter().map(|v| v + 1.75).collect();
        let a = extract_features(&[spectrum(base, "a")], &pm, &labels(1)).unwrap();
        let b = extract_features(&[spectrum(shifted, "b")], &pm, &labels(1)).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(b.x[(0, j)], a.x[(0, j)] + 1.75, epsilon = 1e-12);
        }
    }

    #[test]
    fn row_permutation_permutes_features() {
        let pm = PeakModel {
            schema_version: PEAK_MODEL_SCHEMA_VERSION,
            peak_indices: vec![5],
            peak_mz: vec![1005.0],
            neighborhood: 1,
        };
        let batch: Vec<Spectrum> = (0..4)
            .map(|k| spectrum((0..12).map(|i| (i + k) as f64).collect(), &format!("s{k}")))
            .collect();
        let fwd = extract_features(&batch, &pm, &labels(4)).unwrap();
        let rev_batch: Vec<Spectrum> = batch.iter().rev().cloned().collect();
        let rev = extract_features(&rev_batch, &pm, &labels(4)).unwrap();
        for i in 0..4 {
            assert_eq!(fwd.x[(i, 0)], rev.x[(3 - i, 0)]);
            assert_eq!(fwd.sample_ids[i], rev.sample_ids[3 - i]);
        }
    }

    #[test]
    fn grid_mismatch_is_detected() {
        let pm = PeakModel {
            schema_version: PEAK_MODEL_SCHEMA_VERSION,
            peak_indices: vec![3],
            peak_mz: vec![9999.0],
            neighborhood: 1,
        };
        let s = spectrum(vec![1.0; 10], "a");
        assert!(matches!(
            extract_features(&[s], &pm, &labels(1)),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn peak_model_round_trips_through_json() {
        let pm = PeakModel {
            schema_version: PEAK_MODEL_SCHEMA_VERSION,
            peak_indices: vec![1, 8, 400],
            peak_mz: vec![1001.25, 1008.5, 1400.125],
            neighborhood: 5,
        };
        let text = serde_json::to_string(&pm).unwrap();
        let back: PeakModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, pm);
    }
}
