//! Random sub-sampling evaluation: split plans, 0-1-loss metrics, ROC/AUC,
//! and the variance-corrected resampled paired t-test for comparing two
//! pipelines evaluated under the same plan.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::rng::stream;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitParams {
    pub train_fraction: f64,
    pub n_repeats: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self { train_fraction: 0.7, n_repeats: 40, seed: 0, stratified: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// A reproducible set of train/test splits over `n` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n: usize,
    pub params: SplitParams,
    pub repeats: Vec<SplitIndices>,
    /// Digest of the parameters and every index list; two reports are
    /// comparable only when their fingerprints agree.
    pub fingerprint: String,
}

impl SplitPlan {
    pub fn n_train(&self) -> usize {
        self.repeats[0].train.len()
    }

    pub fn n_test(&self) -> usize {
        self.repeats[0].test.len()
    }
}

/// Generates the split plan for the given labels.
pub fn make_splits(labels: &[Label], params: &SplitParams) -> Result<SplitPlan> {
    let n = labels.len();
    if n < 4 {
        return Err(Error::TooFewSamples { n, detail: "need at least 4 samples".into() });
    }
    if !(params.train_fraction > 0.0 && params.train_fraction < 1.0) {
        return Err(Error::ConfigInvalid("train_fraction must be in (0, 1)".into()));
    }
    if params.n_repeats == 0 {
        return Err(Error::ConfigInvalid("n_repeats must be positive".into()));
    }
    let target_train = (params.train_fraction * n as f64).round() as usize;
    if target_train == 0 || target_train >= n {
        return Err(Error::TooFewSamples {
            n,
            detail: format!("train fraction {} leaves an empty side", params.train_fraction),
        });
    }

    let case_idx: Vec<usize> =
        (0..n).filter(|&i| labels[i].is_case()).collect();
    let control_idx: Vec<usize> =
        (0..n).filter(|&i| !labels[i].is_case()).collect();

    let alloc = if params.stratified {
        if case_idx.len() < 2 || control_idx.len() < 2 {
            return Err(Error::TooFewSamples {
                n,
                detail: "stratified splits need at least 2 samples per class".into(),
            });
        }
        Some(stratified_allocation(
            &[case_idx.len(), control_idx.len()],
            params.train_fraction,
            target_train,
        )?)
    } else {
        None
    };

    let mut repeats = Vec::with_capacity(params.n_repeats);
    for r in 0..params.n_repeats {
        let mut rng = stream(params.seed, r as u64);
        let mut train: Vec<usize>;
        match &alloc {
            Some(per_class) => {
                train = Vec::with_capacity(target_train);
                for (class_idx, &take) in [&case_idx, &control_idx].iter().zip(per_class) {
                    let mut pool = (*class_idx).clone();
                    pool.shuffle(&mut rng);
                    train.extend_from_slice(&pool[..take]);
                }
            }
            None => {
                let mut pool: Vec<usize> = (0..n).collect();
                pool.shuffle(&mut rng);
                train = pool[..target_train].to_vec();
            }
        }
        train.sort_unstable();
        let in_train: Vec<bool> = {
            let mut mask = vec![false; n];
            for &i in &train {
                mask[i] = true;
            }
            mask
        };
        let test: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
        repeats.push(SplitIndices { train, test });
    }

    let fingerprint = fingerprint(n, params, &repeats);
    Ok(SplitPlan { n, params: params.clone(), repeats, fingerprint })
}

/// Train-set size per class: proportional floor, remainders by largest
/// fraction, clamped so every class keeps at least one sample on each side.
fn stratified_allocation(counts: &[usize; 2], fraction: f64, target: usize) -> Result<[usize; 2]> {
    let exact = [fraction * counts[0] as f64, fraction * counts[1] as f64];
    let mut alloc = [exact[0].floor() as usize, exact[1].floor() as usize];
    let mut rest = target.saturating_sub(alloc[0] + alloc[1]);
    let order = if exact[0] - exact[0].floor() >= exact[1] - exact[1].floor() {
        [0, 1]
    } else {
        [1, 0]
    };
    for c in order {
        if rest > 0 && alloc[c] + 1 <= counts[c] - 1 {
            alloc[c] += 1;
            rest -= 1;
        }
    }
    for c in 0..2 {
        alloc[c] = alloc[c].clamp(1, counts[c] - 1);
    }
    // settle any drift from clamping
    let mut guard = 0;
    while alloc[0] + alloc[1] != target {
        let sum = alloc[0] + alloc[1];
        let grow = sum < target;
        let candidate = (0..2).find(|&c| {
            if grow {
                alloc[c] + 1 <= counts[c] - 1
            } else {
                alloc[c] > 1
            }
        });
        match candidate {
            Some(c) if grow => alloc[c] += 1,
            Some(c) => alloc[c] -= 1,
            None => {
                return Err(Error::TooFewSamples {
                    n: counts[0] + counts[1],
                    detail: "cannot satisfy stratified allocation".into(),
                })
            }
        }
        guard += 1;
        if guard > counts[0] + counts[1] {
            return Err(Error::TooFewSamples {
                n: counts[0] + counts[1],
                detail: "stratified allocation did not converge".into(),
            });
        }
    }
    Ok(alloc)
}

fn fingerprint(n: usize, params: &SplitParams, repeats: &[SplitIndices]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!(
        "n={n};fraction={};repeats={};seed={};stratified={}\n",
        params.train_fraction, params.n_repeats, params.seed, params.stratified
    ));
    for r in repeats {
        for &i in &r.train {
            hasher.update((i as u64).to_le_bytes());
        }
        hasher.update(b"|");
        for &i in &r.test {
            hasher.update((i as u64).to_le_bytes());
        }
        hasher.update(b";");
    }
    hex::encode(hasher.finalize())
}

/// Error, sensitivity and specificity under 0-1 loss. Sensitivity is NaN
/// when no positives are present, specificity likewise for negatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionMetrics {
    pub error: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

pub fn confusion_metrics(labels: &[Label], predictions: &[Label]) -> Result<ConfusionMetrics> {
    if labels.len() != predictions.len() {
        return Err(Error::LengthMismatch { left: labels.len(), right: predictions.len() });
    }
    if labels.is_empty() {
        return Err(Error::LengthMismatch { left: 0, right: 0 });
    }
    let (mut tp, mut fp, mut tn, mut fne) = (0usize, 0usize, 0usize, 0usize);
    for (l, p) in labels.iter().zip(predictions) {
        match (l.is_case(), p.is_case()) {
            (true, true) => tp += 1,
            (true, false) => fne += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let positives = tp + fne;
    let negatives = tn + fp;
    Ok(ConfusionMetrics {
        error: (fp + fne) as f64 / labels.len() as f64,
        sensitivity: if positives > 0 { tp as f64 / positives as f64 } else { f64::NAN },
        specificity: if negatives > 0 { tn as f64 / negatives as f64 } else { f64::NAN },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve (thresholds swept descending) and AUC as the Mann-Whitney
/// pair statistic with ties counted one half.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<(Vec<RocPoint>, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    let n_case = labels.iter().filter(|l| l.is_case()).count();
    let n_control = labels.len() - n_case;
    if n_case == 0 || n_control == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut roc = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let mut wins: u64 = 0;
    let mut ties: u64 = 0;
    let mut seen_cases: u64 = 0;
    let mut seen_controls: u64 = 0;

    let mut at = 0;
    while at < order.len() {
        let threshold = scores[order[at]];
        let mut group_cases: u64 = 0;
        let mut group_controls: u64 = 0;
        while at < order.len() && scores[order[at]] == threshold {
            if labels[order[at]].is_case() {
                group_cases += 1;
            } else {
                group_controls += 1;
            }
            at += 1;
        }
        // every control *below* this score loses to the group's cases
        let controls_below = n_control as u64 - seen_controls - group_controls;
        wins += group_cases * controls_below;
        ties += group_cases * group_controls;
        seen_cases += group_cases;
        seen_controls += group_controls;
        roc.push(RocPoint {
            fpr: seen_controls as f64 / n_control as f64,
            tpr: seen_cases as f64 / n_case as f64,
        });
    }

    let auc = (2 * wins + ties) as f64 / (2 * (n_case as u64) * (n_control as u64)) as f64;
    Ok((roc, auc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auc,
    Error,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "auc" => Ok(Metric::Auc),
            "error" => Ok(Metric::Error),
            other => Err(format!("unknown metric '{other}', expected auc or error")),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Auc => "auc",
            Metric::Error => "error",
        })
    }
}

/// One repeat's held-out metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatMetrics {
    pub error: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub auc: Option<f64>,
    pub roc: Vec<RocPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation; a single value has std 0.
pub fn summarize(values: impl Iterator<Item = f64>) -> MetricSummary {
    let v: Vec<f64> = values.collect();
    let k = v.len() as f64;
    if v.is_empty() {
        return MetricSummary { mean: f64::NAN, std: f64::NAN };
    }
    let mean = v.iter().sum::<f64>() / k;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    MetricSummary { mean, std }
}

/// Per-repeat and aggregate evaluation results for one pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub pipeline_id: String,
    pub plan_fingerprint: String,
    pub n_train: usize,
    pub n_test: usize,
    pub per_repeat: Vec<RepeatMetrics>,
    pub error: MetricSummary,
    pub sensitivity: MetricSummary,
    pub specificity: MetricSummary,
    pub auc: MetricSummary,
    /// True when any repeat's trainer stopped at its pass cap.
    pub any_nonconverged: bool,
}

impl EvalReport {
    pub fn from_repeats(
        pipeline_id: String,
        plan: &SplitPlan,
        per_repeat: Vec<RepeatMetrics>,
        any_nonconverged: bool,
    ) -> EvalReport {
        let error = summarize(per_repeat.iter().map(|r| r.error));
        let sensitivity = summarize(per_repeat.iter().filter_map(|r| r.sensitivity));
        let specificity = summarize(per_repeat.iter().filter_map(|r| r.specificity));
        let auc = summarize(per_repeat.iter().filter_map(|r| r.auc));
        EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            pipeline_id,
            plan_fingerprint: plan.fingerprint.clone(),
            n_train: plan.n_train(),
            n_test: plan.n_test(),
            per_repeat,
            error,
            sensitivity,
            specificity,
            auc,
            any_nonconverged,
        }
    }

    fn metric_values(&self, metric: Metric) -> Result<Vec<f64>> {
        match metric {
            Metric::Error => Ok(self.per_repeat.iter().map(|r| r.error).collect()),
            Metric::Auc => self
                .per_repeat
                .iter()
                .map(|r| {
                    r.auc.ok_or_else(|| {
                        Error::ConfigInvalid(
                            "a repeat has no AUC (single-class test split)".into(),
                        )
                    })
                })
                .collect(),
        }
    }
}

/// Outcome of the corrected resampled paired t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub t: f64,
    pub p: f64,
    pub significant: bool,
    /// Set when the difference had zero variance but nonzero mean; `p` is a
    /// 0-sentinel in that case and `t` is reported as 0.
    pub degenerate: bool,
}

/// Nadeau–Bengio corrected resampled paired t-test on a per-repeat metric.
/// The variance of the mean difference is inflated by (1/k + n_test/n_train)
/// to compensate for overlapping training sets.
pub fn corrected_t_test(
    report_a: &EvalReport,
    report_b: &EvalReport,
    metric: Metric,
    alpha: f64,
) -> Result<ComparisonResult> {
    if report_a.plan_fingerprint != report_b.plan_fingerprint
        || report_a.n_train != report_b.n_train
        || report_a.n_test != report_b.n_test
    {
        return Err(Error::PlanMismatch);
    }
    let a = report_a.metric_values(metric)?;
    let b = report_b.metric_values(metric)?;
    if a.len() != b.len() {
        return Err(Error::PlanMismatch);
    }
    let k = a.len();
    if k < 2 {
        return Err(Error::TooFewRepeats { got: k });
    }

    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / k as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k as f64 - 1.0);

    if var == 0.0 {
        return Ok(if mean == 0.0 {
            ComparisonResult { t: 0.0, p: 1.0, significant: false, degenerate: false }
        } else {
            ComparisonResult { t: 0.0, p: 0.0, significant: true, degenerate: true }
        });
    }

    let correction = 1.0 / k as f64 + report_a.n_test as f64 / report_a.n_train as f64;
    let t = mean / (correction * var).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (k - 1) as f64)
        .map_err(|e| Error::ConfigInvalid(format!("t distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(ComparisonResult { t, p, significant: p < alpha, degenerate: false })
}

/// Welch's unequal-variance t statistic between two samples.
pub fn welch_t(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (na - 1.0);
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (nb - 1.0);
    let denom = (va / na + vb / nb).sqrt();
    if denom == 0.0 {
        if ma == mb {
            0.0
        } else {
            (ma - mb).signum() * f64::INFINITY
        }
    } else {
        (ma - mb) / denom
    }
}
