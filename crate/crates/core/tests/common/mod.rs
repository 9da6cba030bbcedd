//! Independent oracles for the acceptance suite. Everything here is a
//! deliberately naive re-computation that shares no code with the library
//! paths it checks.

use biofuse_core::Label;

/// Direct O(n·k) Gaussian convolution, kernel recomputed per position.
pub fn naive_gaussian_smooth(v: &[f64], sigma: f64) -> Vec<f64> {
    let n = v.len();
    let radius = (4.0 * sigma).ceil() as i64;
    (0..n as i64)
        .map(|i| {
            let mut acc = 0.0;
            let mut norm = 0.0;
            for j in (i - radius).max(0)..=(i + radius).min(n as i64 - 1) {
                let d = (i - j) as f64;
                let w = (-d * d / (2.0 * sigma * sigma)).exp();
                acc += w * v[j as usize];
                norm += w;
            }
            acc / norm
        })
        .collect()
}

/// Exhaustive search over every monotone matching of two peak lists.
/// Score convention: match terms summed in ascending pair order, then the
/// gap penalty once per unmatched peak.
pub fn best_monotone_matching_score(
    ref_mz: &[f64],
    tgt_mz: &[f64],
    gap: f64,
    bandwidth: f64,
) -> f64 {
    let bw2 = 2.0 * bandwidth * bandwidth;
    let score_of = |ri: usize, tj: usize| {
        let d = ref_mz[ri] - tgt_mz[tj];
        (-(d * d) / bw2).exp()
    };
    let (m, n) = (ref_mz.len(), tgt_mz.len());
    let mut best = f64::NEG_INFINITY;
    // every strictly increasing pair sequence, including the empty one
    fn recurse(
        m: usize,
        n: usize,
        i: usize,
        j: usize,
        sum: f64,
        matched: usize,
        gap: f64,
        score_of: &dyn Fn(usize, usize) -> f64,
        best: &mut f64,
    ) {
        let total = sum - gap * ((m + n - 2 * matched) as f64);
        if total > *best {
            *best = total;
        }
        for ri in i..m {
            for tj in j..n {
                recurse(m, n, ri + 1, tj + 1, sum + score_of(ri, tj), matched + 1, gap, score_of, best);
            }
        }
    }
    recurse(m, n, 0, 0, 0.0, 0, gap, &score_of, &mut best);
    best
}

/// O(n²) pair counting with ties worth one half.
pub fn auc_pairwise(scores: &[f64], labels: &[Label]) -> f64 {
    let mut wins = 0u64;
    let mut ties = 0u64;
    let mut n_case = 0u64;
    let mut n_control = 0u64;
    for (i, li) in labels.iter().enumerate() {
        if !li.is_case() {
            n_control += 1;
            continue;
        }
        n_case += 1;
        for (j, lj) in labels.iter().enumerate() {
            if lj.is_case() {
                continue;
            }
            if scores[i] > scores[j] {
                wins += 1;
            } else if scores[i] == scores[j] {
                ties += 1;
            }
        }
    }
    (2 * wins + ties) as f64 / (2 * n_case * n_control) as f64
}

/// Small deterministic xorshift for test inputs.
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() % 1_000_000) as f64 / 1_000_000.0
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}
