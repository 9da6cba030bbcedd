//! Deterministic generator of paired synthetic data sources.
//!
//! The spectral source carries correlated Gaussian bumps on a drifting
//! baseline, with the class signal spread as a small linear shift across
//! many correlated peaks — the regime a linear model handles well. The
//! panel source is a set of independent probes whose class signal is an
//! XOR-like interaction plus two thresholded marginals — axis-aligned
//! structure that favors trees and defeats a single hyperplane.
//!
//! Spectra are emitted raw (cubed, with drift and noise) so the whole
//! preprocessing chain is exercised downstream.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label, SourceTag};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::spectra::Spectrum;

pub const TRUTH_SCHEMA_VERSION: u32 = 1;

// stream namespaces per purpose
const STREAM_ASSIGN: u64 = 0;
const STREAM_STRUCTURE: u64 = 1;
const STREAM_SPECTRAL: u64 = 1_000;
const STREAM_PANEL: u64 = 2_000_000;

/// Peaks per correlation block; members share one latent factor.
const BLOCK_SIZE: usize = 4;
/// Fraction of blocks carrying the class contrast.
const INFORMATIVE_BLOCK_FRACTION: f64 = 0.45;
/// Relative amplitude spread around each peak's base height.
const AMP_SPREAD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_cases: usize,
    pub spectral_grid_size: usize,
    pub n_true_peaks: usize,
    /// Equicorrelation ρ of the latent peak amplitudes, in [0, 1).
    pub peak_correlation: f64,
    /// Per-peak class shift of the latent amplitude factor, applied with a
    /// common sign across the informative peaks.
    pub linear_effect_size: f64,
    pub n_panel_features: usize,
    /// Strength of the panel's interaction and threshold signals.
    pub panel_effect: f64,
    /// Additive noise on the variance-stabilized intensity scale.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 106,
            n_cases: 53,
            spectral_grid_size: 1554,
            n_true_peaks: 160,
            peak_correlation: 0.8,
            linear_effect_size: 0.13,
            n_panel_features: 30,
            panel_effect: 1.6,
            noise_sd: 0.15,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cases < 2 || self.n_samples - self.n_cases < 2 {
            return Err(Error::ConfigInvalid("need at least 2 samples per class".into()));
        }
        if self.n_cases >= self.n_samples {
            return Err(Error::ConfigInvalid("n_cases must be below n_samples".into()));
        }
        if !(0.0..1.0).contains(&self.peak_correlation) {
            return Err(Error::ConfigInvalid("peak_correlation must be in [0, 1)".into()));
        }
        if self.spectral_grid_size < 64 || self.n_true_peaks == 0 {
            return Err(Error::ConfigInvalid("grid too small or no peaks".into()));
        }
        let spacing = (self.spectral_grid_size as f64 - 24.0) / self.n_true_peaks as f64;
        if spacing < 8.0 {
            return Err(Error::ConfigInvalid(format!(
                "{} peaks do not fit a {}-point grid (spacing {spacing:.1} < 8)",
                self.n_true_peaks, self.spectral_grid_size
            )));
        }
        if self.n_panel_features < 8 {
            return Err(Error::ConfigInvalid("need at least 8 panel features".into()));
        }
        if self.noise_sd < 0.0 || self.panel_effect < 0.0 || self.linear_effect_size < 0.0 {
            return Err(Error::ConfigInvalid("effect sizes and noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Ground-truth metadata written alongside generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub schema_version: u32,
    /// Unjittered apex grid indices.
    pub peak_centers: Vec<usize>,
    pub peak_center_mz: Vec<f64>,
    /// Correlation block of each peak.
    pub peak_block: Vec<usize>,
    /// Positions (into the peak list) of peaks carrying class signal.
    pub informative_peaks: Vec<usize>,
    /// Shift direction per informative peak.
    pub informative_signs: Vec<f64>,
    pub panel_xor_features: [usize; 2],
    pub panel_threshold_features: Vec<usize>,
    /// Per-sample m/z jitter in grid points.
    pub per_sample_shift: Vec<i64>,
    pub config: SynthConfig,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub spectra: Vec<Spectrum>,
    pub panel: Dataset,
    pub labels: Vec<Label>,
    pub truth: SynthTruth,
}

struct PeakStructure {
    centers: Vec<usize>,
    base_height: Vec<f64>,
    sigma: Vec<f64>,
    block_of: Vec<usize>,
    informative: Vec<usize>,
    signs: Vec<f64>,
}

fn peak_structure(cfg: &SynthConfig) -> PeakStructure {
    let mut rng = stream(cfg.seed, STREAM_STRUCTURE);
    let g = cfg.spectral_grid_size as f64;
    let margin = 12.0;
    let step = (g - 2.0 * margin) / cfg.n_true_peaks as f64;
    let jitter_max = ((step - 8.0) / 2.0).clamp(0.0, 2.0);

    let mut centers = Vec::with_capacity(cfg.n_true_peaks);
    let mut base_height = Vec::with_capacity(cfg.n_true_peaks);
    let mut sigma = Vec::with_capacity(cfg.n_true_peaks);
    for k in 0..cfg.n_true_peaks {
        let jitter = if jitter_max > 0.0 { rng.random_range(-jitter_max..=jitter_max) } else { 0.0 };
        let c = margin + (k as f64 + 0.5) * step + jitter;
        centers.push(c.round() as usize);
        base_height.push(rng.random_range(1.5..4.0));
        sigma.push(rng.random_range(1.5..2.2));
    }

    // Correlation blocks interleave across the m/z axis (co-regulated
    // species appear at scattered masses), so block structure is not
    // confounded with window crosstalk between spatial neighbors.
    let n_blocks = cfg.n_true_peaks.div_ceil(BLOCK_SIZE);
    let block_of: Vec<usize> = (0..cfg.n_true_peaks).map(|k| k % n_blocks).collect();

    // The class signal lives in a random subset of blocks, as an
    // alternating within-block contrast. It is orthogonal to each block's
    // shared factor, so single-feature views see it buried in block
    // variance while a linear within-block difference cancels that
    // variance and recovers it.
    let n_inf_blocks = ((n_blocks as f64 * INFORMATIVE_BLOCK_FRACTION).round() as usize).max(1);
    let mut pool: Vec<usize> = (0..n_blocks).collect();
    for i in 0..n_inf_blocks {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let chosen: std::collections::HashSet<usize> = pool[..n_inf_blocks].iter().copied().collect();
    let mut informative = Vec::new();
    let mut signs = Vec::new();
    for k in 0..cfg.n_true_peaks {
        if chosen.contains(&block_of[k]) {
            informative.push(k);
            let member = k / n_blocks;
            signs.push(if member % 2 == 0 { 1.0 } else { -1.0 });
        }
    }

    PeakStructure { centers, base_height, sigma, block_of, informative, signs }
}

fn assign_labels(cfg: &SynthConfig) -> Vec<Label> {
    use rand::seq::SliceRandom;
    let mut rng = stream(cfg.seed, STREAM_ASSIGN);
    let mut order: Vec<usize> = (0..cfg.n_samples).collect();
    order.shuffle(&mut rng);
    let mut labels = vec![Label::Control; cfg.n_samples];
    for &i in order.iter().take(cfg.n_cases) {
        labels[i] = Label::Case;
    }
    labels
}

/// Latent correlated amplitude factors for sample `i`, class shift included.
/// Drawn first in the sample's stream so it matches what `generate` embeds.
fn sample_latent(
    cfg: &SynthConfig,
    structure: &PeakStructure,
    label: Label,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let rho = cfg.peak_correlation;
    let n_blocks = cfg.n_true_peaks.div_ceil(BLOCK_SIZE);
    let block_factor: Vec<f64> = (0..n_blocks).map(|_| normal.sample(rng)).collect();
    let mut z: Vec<f64> = (0..cfg.n_true_peaks)
        .map(|k| {
            rho.sqrt() * block_factor[structure.block_of[k]]
                + (1.0 - rho).sqrt() * normal.sample(rng)
        })
        .collect();
    for (pos, sign) in structure.informative.iter().zip(&structure.signs) {
        z[*pos] += label.sign() * cfg.linear_effect_size * sign;
    }
    z
}

/// Sanity-mode view of the latent amplitude matrix (n × peaks), for
/// checking the configured inter-peak correlation.
pub fn latent_peak_amplitudes(cfg: &SynthConfig) -> Result<(Array2<f64>, Vec<Label>)> {
    cfg.validate()?;
    let structure = peak_structure(cfg);
    let labels = assign_labels(cfg);
    let mut z = Array2::zeros((cfg.n_samples, cfg.n_true_peaks));
    for i in 0..cfg.n_samples {
        let mut rng = stream(cfg.seed, STREAM_SPECTRAL + i as u64);
        let latent = sample_latent(cfg, &structure, labels[i], &mut rng);
        for (k, v) in latent.into_iter().enumerate() {
            z[(i, k)] = v;
        }
    }
    Ok((z, labels))
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let structure = peak_structure(cfg);
    let labels = assign_labels(cfg);
    let sample_ids: Vec<String> = (0..cfg.n_samples).map(|i| format!("s{i:04}")).collect();

    let g = cfg.spectral_grid_size;
    let mz: Vec<f64> = (0..g)
        .map(|i| 1500.0 + i as f64 * (18_500.0 / (g as f64 - 1.0)))
        .collect();

    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut spectra = Vec::with_capacity(cfg.n_samples);
    let mut shifts = Vec::with_capacity(cfg.n_samples);

    for i in 0..cfg.n_samples {
        let mut rng = stream(cfg.seed, STREAM_SPECTRAL + i as u64);
        let latent = sample_latent(cfg, &structure, labels[i], &mut rng);

        let shift = rng.random_range(-2i64..=2);
        shifts.push(shift);
        let drift_scale = 1.8 + 0.5 * rng.random_range(0.0..1.0);
        let drift_exp = 2.5 + rng.random_range(0.0..1.0);

        // drift on the stabilized scale, then bumps, then noise
        let mut vs: Vec<f64> = (0..g)
            .map(|idx| {
                let t = idx as f64 / (g as f64 - 1.0);
                drift_scale * (1.0 - 0.35 * t) + drift_exp * (-6.0 * t).exp()
            })
            .collect();
        for k in 0..cfg.n_true_peaks {
            let amp = structure.base_height[k] * (1.0 + AMP_SPREAD * latent[k]).max(0.05);
            let center = structure.centers[k] as f64 + shift as f64;
            let sd = structure.sigma[k];
            let reach = (5.0 * sd).ceil() as i64;
            let c = center.round() as i64;
            for idx in (c - reach).max(0)..=(c + reach).min(g as i64 - 1) {
                let d = idx as f64 - center;
                vs[idx as usize] += amp * (-d * d / (2.0 * sd * sd)).exp();
            }
        }
        if cfg.noise_sd > 0.0 {
            for v in &mut vs {
                *v += cfg.noise_sd * normal.sample(&mut rng);
            }
        }

        // emit raw detector-scale intensities; the chain's cube root
        // recovers the stabilized signal exactly
        let raw: Vec<f64> = vs.iter().map(|v| v.powi(3)).collect();
        spectra.push(Spectrum::new(mz.clone(), raw, sample_ids[i].clone())?);
    }

    let panel = generate_panel(cfg, &labels, &sample_ids)?;

    let truth = SynthTruth {
        schema_version: TRUTH_SCHEMA_VERSION,
        peak_center_mz: structure.centers.iter().map(|&c| mz[c]).collect(),
        peak_centers: structure.centers,
        peak_block: structure.block_of,
        informative_peaks: structure.informative,
        informative_signs: structure.signs,
        panel_xor_features: [0, 1],
        panel_threshold_features: (2..8).collect(),
        per_sample_shift: shifts,
        config: cfg.clone(),
    };

    Ok(SynthOutput { spectra, panel, labels, truth })
}

fn generate_panel(cfg: &SynthConfig, labels: &[Label], sample_ids: &[String]) -> Result<Dataset> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let p = cfg.n_panel_features;
    let mut x = Array2::zeros((cfg.n_samples, p));
    let a = 0.7 * cfg.panel_effect;
    let tau = 0.875 * cfg.panel_effect;

    for i in 0..cfg.n_samples {
        let mut rng = stream(cfg.seed, STREAM_PANEL + i as u64);
        let is_case = labels[i].is_case();

        // XOR pair: cases sit in the (+,+)/(−,−) quadrants, controls in the
        // mixed ones; marginal means stay at zero for both classes
        let quadrant: f64 = if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };
        let e0: f64 = normal.sample(&mut rng);
        let e1: f64 = normal.sample(&mut rng);
        x[(i, 0)] = a * quadrant + 0.33 * e0;
        let second = if is_case { quadrant } else { -quadrant };
        x[(i, 1)] = a * second + 0.33 * e1;

        // thresholded marginals: most cases land in a symmetric bimodal
        // mass clear of the control bulk. Class means stay equal, so the
        // signal is invisible to a linear score but a two-split box
        // isolates it.
        for j in 2..8 {
            let base: f64 = normal.sample(&mut rng);
            let pushed = rng.random_range(0.0..1.0) < 0.65;
            let side: f64 = if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };
            let extra: f64 = normal.sample(&mut rng);
            x[(i, j)] = if is_case && pushed && cfg.panel_effect > 0.0 {
                side * (tau + 0.45 * extra.abs())
            } else {
                base
            };
        }

        for j in 8..p {
            x[(i, j)] = normal.sample(&mut rng);
        }
    }

    Dataset::new(
        x,
        labels.to_vec(),
        vec![SourceTag::Panel; p],
        (0..p).map(|j| format!("panel_{j:02}")).collect(),
        sample_ids.to_vec(),
    )
}
