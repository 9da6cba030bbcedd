//! Preprocessing chain for profile spectra: variance stabilization, baseline
//! correction, Gaussian smoothing, TIC normalization, peak-anchored alignment
//! and TIC-based batch quality control.
//!
//! All operations are pure: they take a [`Spectrum`] and return a new one,
//! leaving the m/z grid untouched unless stated otherwise.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// One sample's (m/z, intensity) series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Strictly increasing m/z grid (Daltons).
    pub mz: Vec<f64>,
    /// Intensity per grid point, same length as `mz`.
    pub intensity: Vec<f64>,
    pub sample_id: String,
}

impl Spectrum {
    pub fn new(mz: Vec<f64>, intensity: Vec<f64>, sample_id: impl Into<String>) -> Result<Self> {
        if mz.len() < 2 {
            return Err(Error::SpectrumTooShort { len: mz.len(), min: 2 });
        }
        if mz.len() != intensity.len() {
            return Err(Error::GridMismatch {
                detail: format!("mz has {} points, intensity has {}", mz.len(), intensity.len()),
            });
        }
        if mz.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::GridMismatch {
                detail: "mz grid is not strictly increasing".into(),
            });
        }
        Ok(Self { mz, intensity, sample_id: sample_id.into() })
    }

    pub fn len(&self) -> usize {
        self.mz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mz.is_empty()
    }

    fn with_intensity(&self, intensity: Vec<f64>) -> Spectrum {
        Spectrum { mz: self.mz.clone(), intensity, sample_id: self.sample_id.clone() }
    }
}

/// Knobs for the preprocessing chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Moving-window width for baseline estimation, in grid points.
    /// Rounded up to the next odd value ≥ 3 before use.
    pub baseline_window: usize,
    /// Gaussian smoothing bandwidth in grid-index units.
    pub smooth_sigma: f64,
    /// TIC window lower bound (Daltons).
    pub tic_lo: f64,
    /// TIC window upper bound (Daltons).
    pub tic_hi: f64,
    /// QC exclusion threshold in standard deviations of batch TIC.
    pub qc_sd_limit: f64,
    /// Alignment penalty per unmatched peak.
    pub gap_penalty: f64,
    /// Alignment match bandwidth (Daltons).
    pub match_bandwidth: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            baseline_window: 200,
            smooth_sigma: 5.0,
            tic_lo: 1500.0,
            tic_hi: 20000.0,
            qc_sd_limit: 2.0,
            gap_penalty: 0.2,
            match_bandwidth: 40.0,
        }
    }
}

impl PipelineConfig {
    /// Baseline window after the odd-width adjustment.
    pub fn effective_baseline_window(&self) -> usize {
        let w = self.baseline_window.max(3);
        if w % 2 == 0 {
            w + 1
        } else {
            w
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.baseline_window == 0 {
            return Err(Error::ConfigInvalid("baseline_window must be positive".into()));
        }
        if !(self.smooth_sigma > 0.0) {
            return Err(Error::ConfigInvalid("smooth_sigma must be positive".into()));
        }
        if !(self.tic_lo < self.tic_hi) {
            return Err(Error::ConfigInvalid("tic_lo must be below tic_hi".into()));
        }
        if !(self.qc_sd_limit > 0.0) {
            return Err(Error::ConfigInvalid("qc_sd_limit must be positive".into()));
        }
        if self.gap_penalty < 0.0 {
            return Err(Error::ConfigInvalid("gap_penalty must be non-negative".into()));
        }
        if !(self.match_bandwidth > 0.0) {
            return Err(Error::ConfigInvalid("match_bandwidth must be positive".into()));
        }
        Ok(())
    }
}

/// Replaces every intensity by its signed cube root.
pub fn variance_stabilize(s: &Spectrum) -> Spectrum {
    s.with_intensity(s.intensity.iter().map(|v| v.cbrt()).collect())
}

/// Subtracts a moving-window baseline: window minimum, then window mean of
/// the minima. Edge windows are truncated, never padded.
pub fn correct_baseline(s: &Spectrum, cfg: &PipelineConfig) -> Result<Spectrum> {
    let w = cfg.effective_baseline_window();
    let n = s.len();
    if n < w {
        return Err(Error::SpectrumTooShort { len: n, min: w });
    }
    let half = w / 2;

    let mins = sliding_min(&s.intensity, half);

    // Mean pass over the minima. Each window is summed directly, left to
    // right, so the result is bit-identical to a naive two-pass estimator.
    let mut baseline = vec![0.0; n];
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let mut sum = 0.0;
        for &m in &mins[lo..=hi] {
            sum += m;
        }
        baseline[i] = sum / (hi - lo + 1) as f64;
    }

    let corrected = s
        .intensity
        .iter()
        .zip(&baseline)
        .map(|(v, b)| v - b)
        .collect();
    Ok(s.with_intensity(corrected))
}

/// Centered sliding minimum with truncated edge windows, O(n) via a
/// monotone deque.
fn sliding_min(v: &[f64], half: usize) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    let mut deque: VecDeque<usize> = VecDeque::new();
    let mut right = 0;
    for i in 0..n {
        let hi = (i + half).min(n - 1);
        while right <= hi {
            while let Some(&back) = deque.back() {
                if v[back] >= v[right] {
                    deque.pop_back();
                } else {
                    break;
                }
            }
            deque.push_back(right);
            right += 1;
        }
        let lo = i.saturating_sub(half);
        while let Some(&front) = deque.front() {
            if front < lo {
                deque.pop_front();
            } else {
                break;
            }
        }
        out[i] = v[*deque.front().expect("window never empty")];
    }
    out
}

/// Gaussian smoothing with the kernel truncated at 4σ and renormalized per
/// position, so constants are reproduced exactly at the edges.
pub fn smooth(s: &Spectrum, cfg: &PipelineConfig) -> Spectrum {
    let sigma = cfg.smooth_sigma;
    let radius = (4.0 * sigma).ceil() as usize;
    let kernel: Vec<f64> = (0..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();

    let n = s.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        let mut acc = 0.0;
        let mut norm = 0.0;
        for j in lo..=hi {
            let w = kernel[i.abs_diff(j)];
            acc += w * s.intensity[j];
            norm += w;
        }
        out[i] = acc / norm;
    }
    s.with_intensity(out)
}

/// Sum of intensity over the configured TIC window.
pub fn tic(s: &Spectrum, cfg: &PipelineConfig) -> f64 {
    s.mz
        .iter()
        .zip(&s.intensity)
        .filter(|(mz, _)| **mz >= cfg.tic_lo && **mz <= cfg.tic_hi)
        .map(|(_, v)| v)
        .sum()
}

/// Scales intensities so the windowed TIC equals `target`.
pub fn normalize_tic(s: &Spectrum, cfg: &PipelineConfig, target: f64) -> Result<Spectrum> {
    let current = tic(s, cfg);
    if current <= 0.0 {
        return Err(Error::ZeroTic { lo: cfg.tic_lo, hi: cfg.tic_hi, tic: current });
    }
    let scale = target / current;
    Ok(s.with_intensity(s.intensity.iter().map(|v| v * scale).collect()))
}

/// One excluded sample with its TIC z-score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QcExclusion {
    pub sample_id: String,
    pub tic: f64,
    pub z_score: f64,
}

/// Result of [`qc_filter`]: retained spectra plus the exclusion report.
#[derive(Debug, Clone)]
pub struct QcFiltered {
    pub kept: Vec<Spectrum>,
    pub excluded: Vec<Spectrum>,
    pub report: Vec<QcExclusion>,
}

/// Excludes spectra whose TIC deviates from the batch mean by more than
/// `qc_sd_limit` sample standard deviations.
pub fn qc_filter(batch: Vec<Spectrum>, cfg: &PipelineConfig) -> Result<QcFiltered> {
    if batch.len() < 2 {
        return Err(Error::BatchTooSmall { len: batch.len(), min: 2 });
    }
    let tics: Vec<f64> = batch.iter().map(|s| tic(s, cfg)).collect();
    let n = tics.len() as f64;
    let mean = tics.iter().sum::<f64>() / n;
    let var = tics.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();

    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    let mut report = Vec::new();
    for (s, t) in batch.into_iter().zip(tics) {
        let z = if sd > 0.0 { (t - mean) / sd } else { 0.0 };
        // With sd == 0 the threshold comparison involves 0·limit (or NaN for
        // an infinite limit); both keep the sample, which is the intent.
        if (t - mean).abs() > cfg.qc_sd_limit * sd {
            report.push(QcExclusion { sample_id: s.sample_id.clone(), tic: t, z_score: z });
            excluded.push(s);
        } else {
            kept.push(s);
        }
    }
    Ok(QcFiltered { kept, excluded, report })
}

/// Detects local maxima: indices where the first difference crosses from
/// positive to negative, kept when the topographic prominence clears
/// 3× the median absolute first difference.
pub fn detect_spectrum_peaks(s: &Spectrum) -> Vec<usize> {
    let v = &s.intensity;
    let n = v.len();
    if n < 3 {
        return Vec::new();
    }

    let mut abs_diffs: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    abs_diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = abs_diffs.len();
    let median = if m % 2 == 1 {
        abs_diffs[m / 2]
    } else {
        0.5 * (abs_diffs[m / 2 - 1] + abs_diffs[m / 2])
    };
    let floor = 3.0 * median;

    let mut peaks = Vec::new();
    let mut k = 0;
    while k + 1 < n {
        if v[k + 1] > v[k] {
            // rising edge; skip across any flat apex
            let apex = k + 1;
            let mut j = apex;
            while j + 1 < n && v[j + 1] == v[j] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[j] && prominence(v, apex) >= floor {
                peaks.push(apex);
            }
            k = j;
        } else {
            k += 1;
        }
    }
    peaks
}

/// Topographic prominence: apex height above the higher of the two valley
/// minima reached before terrain rises above the apex (or the series ends).
fn prominence(v: &[f64], idx: usize) -> f64 {
    let h = v[idx];
    let mut left_min = h;
    let mut i = idx;
    while i > 0 {
        i -= 1;
        if v[i] > h {
            break;
        }
        if v[i] < left_min {
            left_min = v[i];
        }
    }
    let mut right_min = h;
    let mut i = idx;
    while i + 1 < v.len() {
        i += 1;
        if v[i] > h {
            break;
        }
        if v[i] < right_min {
            right_min = v[i];
        }
    }
    h - left_min.max(right_min)
}

/// Monotone peak correspondence between a target and a reference spectrum,
/// plus the piecewise-linear m/z warp it induces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Alignment {
    /// Matched (reference grid index, target grid index) pairs, strictly
    /// increasing in both coordinates.
    pub pairs: Vec<(usize, usize)>,
    /// Warp anchors as (target m/z, reference m/z), including the identity
    /// endpoints at the grid bounds.
    pub anchors: Vec<(f64, f64)>,
    /// Total match score minus gap penalties.
    pub score: f64,
    /// Set when either side had no detectable peaks and the warp fell back
    /// to the identity.
    pub degenerate: bool,
}

impl Alignment {
    fn identity(score: f64, degenerate: bool) -> Self {
        Alignment { pairs: Vec::new(), anchors: Vec::new(), score, degenerate }
    }

    /// Maps a target m/z onto the reference axis. Identity outside the
    /// anchored range.
    pub fn warp(&self, mz: f64) -> f64 {
        piecewise_linear(&self.anchors, mz)
    }

    /// Inverse map: reference m/z back onto the target axis.
    pub fn warp_inverse(&self, mz: f64) -> f64 {
        if self.anchors.is_empty() {
            return mz;
        }
        let swapped: Vec<(f64, f64)> = self.anchors.iter().map(|&(t, r)| (r, t)).collect();
        piecewise_linear(&swapped, mz)
    }
}

fn piecewise_linear(anchors: &[(f64, f64)], x: f64) -> f64 {
    if anchors.is_empty() {
        return x;
    }
    let (first, last) = (anchors[0], anchors[anchors.len() - 1]);
    if x <= first.0 {
        // identity extrapolation below the anchored range
        return if x < first.0 { x } else { first.1 };
    }
    if x >= last.0 {
        return if x > last.0 { x } else { last.1 };
    }
    let pos = anchors.partition_point(|&(a, _)| a <= x);
    let (x0, y0) = anchors[pos - 1];
    let (x1, y1) = anchors[pos];
    y0 + (x - x0) / (x1 - x0) * (y1 - y0)
}

/// DP cell: accumulated match score and number of matched pairs. The score
/// of a prefix is derived as `match_sum - gap * (i + j - 2*matched)`, so the
/// same value is produced no matter how gaps interleave with matches.
#[derive(Clone, Copy)]
struct Cell {
    match_sum: f64,
    matched: u32,
}

fn cell_value(c: Cell, i: usize, j: usize, gap: f64) -> f64 {
    c.match_sum - gap * ((i + j) as f64 - 2.0 * c.matched as f64)
}

/// Aligns `target` onto `reference`: peaks are detected on both sides,
/// matched by dynamic programming over the monotone matchings (match score
/// `exp(-Δmz²/2bw²)`, each unmatched peak costs `gap_penalty`), and the
/// target is resampled through the anchored piecewise-linear warp onto the
/// reference grid.
pub fn align(target: &Spectrum, reference: &Spectrum, cfg: &PipelineConfig) -> (Alignment, Spectrum) {
    let tgt_peaks = detect_spectrum_peaks(target);
    let ref_peaks = detect_spectrum_peaks(reference);

    if tgt_peaks.is_empty() || ref_peaks.is_empty() {
        let alignment = Alignment::identity(0.0, true);
        let warped = resample(target, reference, &alignment);
        return (alignment, warped);
    }

    let gap = cfg.gap_penalty;
    let bw2 = 2.0 * cfg.match_bandwidth * cfg.match_bandwidth;
    let score_of = |ri: usize, tj: usize| -> f64 {
        let d = reference.mz[ref_peaks[ri]] - target.mz[tgt_peaks[tj]];
        (-(d * d) / bw2).exp()
    };

    let (m, n) = (ref_peaks.len(), tgt_peaks.len());
    let mut dp = vec![Cell { match_sum: 0.0, matched: 0 }; (m + 1) * (n + 1)];
    let idx = |i: usize, j: usize| i * (n + 1) + j;
    // 0 = diagonal (match), 1 = skip reference peak, 2 = skip target peak
    let mut step = vec![0u8; (m + 1) * (n + 1)];

    for i in 1..=m {
        step[idx(i, 0)] = 1;
    }
    for j in 1..=n {
        step[idx(0, j)] = 2;
    }
    for i in 1..=m {
        for j in 1..=n {
            let diag = Cell {
                match_sum: dp[idx(i - 1, j - 1)].match_sum + score_of(i - 1, j - 1),
                matched: dp[idx(i - 1, j - 1)].matched + 1,
            };
            let up = dp[idx(i - 1, j)];
            let left = dp[idx(i, j - 1)];
            let (vd, vu, vl) = (
                cell_value(diag, i, j, gap),
                cell_value(up, i, j, gap),
                cell_value(left, i, j, gap),
            );
            if vd >= vu && vd >= vl {
                dp[idx(i, j)] = diag;
                step[idx(i, j)] = 0;
            } else if vu >= vl {
                dp[idx(i, j)] = up;
                step[idx(i, j)] = 1;
            } else {
                dp[idx(i, j)] = left;
                step[idx(i, j)] = 2;
            }
        }
    }

    let final_cell = dp[idx(m, n)];
    let score = cell_value(final_cell, m, n, gap);

    let mut pairs = Vec::new();
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        match step[idx(i, j)] {
            0 => {
                pairs.push((ref_peaks[i - 1], tgt_peaks[j - 1]));
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
    }
    pairs.reverse();

    let anchors = build_anchors(&pairs, target, reference);
    let alignment = Alignment { pairs, anchors, score, degenerate: false };
    let warped = resample(target, reference, &alignment);
    (alignment, warped)
}

/// Anchor list (target m/z, reference m/z) with identity corner points at
/// the shared grid bounds; anchors that would break strict monotonicity in
/// either coordinate are dropped.
fn build_anchors(pairs: &[(usize, usize)], target: &Spectrum, reference: &Spectrum) -> Vec<(f64, f64)> {
    let lo = target.mz[0].min(reference.mz[0]);
    let hi = target.mz[target.len() - 1].max(reference.mz[reference.len() - 1]);
    let mut anchors = vec![(lo, lo)];
    for &(ri, tj) in pairs {
        let cand = (target.mz[tj], reference.mz[ri]);
        let prev = anchors[anchors.len() - 1];
        if cand.0 > prev.0 && cand.1 > prev.1 && cand.0 < hi && cand.1 < hi {
            anchors.push(cand);
        }
    }
    anchors.push((hi, hi));
    anchors
}

/// Resamples the target onto the reference grid through the alignment's
/// inverse warp, interpolating intensities linearly.
fn resample(target: &Spectrum, reference: &Spectrum, alignment: &Alignment) -> Spectrum {
    let intensity = reference
        .mz
        .iter()
        .map(|&u| {
            let t = alignment.warp_inverse(u);
            interp(&target.mz, &target.intensity, t)
        })
        .collect();
    Spectrum {
        mz: reference.mz.clone(),
        intensity,
        sample_id: target.sample_id.clone(),
    }
}

/// Linear interpolation on a sorted grid; clamps to the edge values.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let pos = xs.partition_point(|&a| a <= x);
    let (x0, x1) = (xs[pos - 1], xs[pos]);
    let (y0, y1) = (ys[pos - 1], ys[pos]);
    y0 + (x - x0) / (x1 - x0) * (y1 - y0)
}
