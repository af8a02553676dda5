//! Video-score aggregation, AP/AUC metrics and the domain-shift diagnostics.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{Label, Scenario};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

pub const DEFAULT_OVERLAP_BINS: usize = 50;

/// Smoothed maximum `log Σ exp(s_t)` of the frame scores.
pub fn aggregate_video_score(frame_scores: &[f64]) -> Result<f64> {
    if frame_scores.is_empty() {
        return Err(Error::EmptySequence);
    }
    if frame_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("frame score".into()));
    }
    Ok(linalg::log_sum_exp(frame_scores))
}

fn check_scores(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { context: "labels", expected: scores.len(), got: labels.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("score".into()));
    }
    let fake = labels.iter().filter(|l| **l == Label::Fake).count();
    let real = labels.len() - fake;
    if fake == 0 {
        return Err(Error::SingleClass("no fake samples"));
    }
    if real == 0 {
        return Err(Error::SingleClass("no real samples"));
    }
    Ok((real, fake))
}

fn descending(a: &f64, b: &f64) -> Ordering {
    b.partial_cmp(a).unwrap_or(Ordering::Equal)
}

/// Step-wise average precision with fake as the positive class. Equal
/// scores keep their input order.
pub fn average_precision(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (_, positives) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| descending(&scores[i], &scores[j]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == Label::Fake {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Probability that a fake outscores a real sample, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (real, fake) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| descending(&scores[j], &scores[i]));
    // Midranks over ascending scores.
    let mut fake_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid = (start + end + 1) as f64 / 2.0;
        fake_rank_sum += mid * order[start..end].iter().filter(|&&i| labels[i] == Label::Fake).count() as f64;
        start = end;
    }
    let u = fake_rank_sum - (fake * (fake + 1)) as f64 / 2.0;
    Ok(u / (fake * real) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdEstimate {
    pub unbiased: f64,
    pub biased: f64,
    /// Gaussian bandwidth from the median heuristic; zero when every point coincides.
    pub bandwidth: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median pairwise Euclidean distance over the pooled rows.
pub fn median_bandwidth(x: &Matrix, y: &Matrix) -> f64 {
    let rows: Vec<&[f64]> = x.iter_rows().chain(y.iter_rows()).collect();
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(linalg::sqrt(sq_dist(rows[i], rows[j])));
        }
    }
    if d.is_empty() {
        0.0
    } else {
        median(d)
    }
}

/// Squared MMD between the row sets of `x` and `y` under a Gaussian kernel
/// `k(a, b) = exp(-‖a-b‖² / 2h²)` with median-heuristic bandwidth `h`.
pub fn mmd2(x: &Matrix, y: &Matrix) -> Result<MmdEstimate> {
    for m in [x, y] {
        if m.rows() < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: m.rows() });
        }
    }
    if x.cols() != y.cols() {
        return Err(Error::DimensionMismatch { context: "mmd feature width", expected: x.cols(), got: y.cols() });
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite("mmd features".into()));
    }
    let h = median_bandwidth(x, y);
    if h <= 0.0 {
        return Ok(MmdEstimate { unbiased: 0.0, biased: 0.0, bandwidth: 0.0 });
    }
    let gamma = 1.0 / (2.0 * h * h);
    let k = |a: &[f64], b: &[f64]| linalg::exp(-gamma * sq_dist(a, b));
    let within = |m: &Matrix| {
        let mut off = 0.0;
        for i in 0..m.rows() {
            for j in 0..m.rows() {
                if i != j {
                    off += k(m.row(i), m.row(j));
                }
            }
        }
        off
    };
    let (n, mm) = (x.rows() as f64, y.rows() as f64);
    let (kxx, kyy) = (within(x), within(y));
    let mut kxy = 0.0;
    for a in x.iter_rows() {
        for b in y.iter_rows() {
            kxy += k(a, b);
        }
    }
    let cross = 2.0 * kxy / (n * mm);
    Ok(MmdEstimate {
        unbiased: kxx / (n * (n - 1.0)) + kyy / (mm * (mm - 1.0)) - cross,
        // Diagonal kernel terms are exactly 1.
        biased: (kxx + n) / (n * n) + (kyy + mm) / (mm * mm) - cross,
        bandwidth: h,
    })
}

/// Histogram intersection of the two score distributions over their pooled range.
pub fn score_overlap(real: &[f64], fake: &[f64], bins: usize) -> Result<f64> {
    if real.is_empty() {
        return Err(Error::EmptyGroup("real"));
    }
    if fake.is_empty() {
        return Err(Error::EmptyGroup("fake"));
    }
    if bins < 2 {
        return Err(Error::InvalidConfig("overlap needs at least 2 bins".into()));
    }
    if real.iter().chain(fake).any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("score".into()));
    }
    let lo = real.iter().chain(fake).copied().fold(f64::INFINITY, f64::min);
    let hi = real.iter().chain(fake).copied().fold(f64::NEG_INFINITY, f64::max);
    let hist = |s: &[f64]| {
        let mut h = alloc::vec![0.0; bins];
        for &v in s {
            let b = if hi > lo { (((v - lo) / (hi - lo)) * bins as f64) as usize } else { 0 };
            h[b.min(bins - 1)] += 1.0 / s.len() as f64;
        }
        h
    };
    let (hr, hf) = (hist(real), hist(fake));
    let overlap: f64 = hr.iter().zip(&hf).map(|(a, b)| a.min(*b)).sum();
    Ok(overlap.clamp(0.0, 1.0))
}

/// Per-sample scoring record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub sample_id: String,
    pub frame_scores: Vec<f64>,
    pub video_score: f64,
    pub weights: [f64; 3],
    /// Weighted channel means, used as the clip's diagnostic feature.
    pub features: [f64; 3],
    pub label: Label,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ap: f64,
    pub auc: f64,
    pub real: usize,
    pub fake: usize,
}

impl Metrics {
    pub fn compute(scores: &[f64], labels: &[Label]) -> Result<Self> {
        let (real, fake) = check_scores(scores, labels)?;
        Ok(Self { ap: average_precision(scores, labels)?, auc: roc_auc(scores, labels)?, real, fake })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub scenario: Scenario,
    pub count: usize,
    /// `None` when the scenario holds only one class.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub overall: Metrics,
    pub per_scenario: Vec<ScenarioMetrics>,
}

/// Metrics over a set of reports. Reports are ordered by sample id first, so
/// the result does not depend on input order.
pub fn metrics_table(reports: &[ScoreReport]) -> Result<MetricsTable> {
    let mut sorted: Vec<&ScoreReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let collect = |filter: &dyn Fn(&ScoreReport) -> bool| {
        let picked: Vec<&&ScoreReport> = sorted.iter().filter(|r| filter(r)).collect();
        let s: Vec<f64> = picked.iter().map(|r| r.video_score).collect();
        let l: Vec<Label> = picked.iter().map(|r| r.label).collect();
        (s, l)
    };
    let (s, l) = collect(&|_| true);
    let overall = Metrics::compute(&s, &l)?;
    let mut per_scenario = Vec::new();
    for scenario in Scenario::ALL {
        let (s, l) = collect(&|r| r.scenario == scenario);
        if s.is_empty() {
            continue;
        }
        let metrics = match Metrics::compute(&s, &l) {
            Ok(m) => Some(m),
            Err(Error::SingleClass(_)) => None,
            Err(e) => return Err(e),
        };
        per_scenario.push(ScenarioMetrics { scenario, count: s.len(), metrics });
    }
    Ok(MetricsTable { overall, per_scenario })
}

/// Domain-shift diagnostics. `mmd2` is clamped at zero; `mmd2_raw` keeps the
/// unbiased estimate, which may dip slightly negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub mmd2: Option<f64>,
    pub mmd2_raw: Option<f64>,
    pub bandwidth: Option<f64>,
    pub overlap: Option<f64>,
    pub bins: usize,
}

impl DiagnosticReport {
    pub fn new(bins: usize) -> Self {
        Self { mmd2: None, mmd2_raw: None, bandwidth: None, overlap: None, bins }
    }

    pub fn with_mmd(mut self, x: &Matrix, y: &Matrix) -> Result<Self> {
        let m = mmd2(x, y)?;
        self.mmd2 = Some(m.unbiased.max(0.0));
        self.mmd2_raw = Some(m.unbiased);
        self.bandwidth = Some(m.bandwidth);
        Ok(self)
    }

    pub fn with_overlap(mut self, real: &[f64], fake: &[f64]) -> Result<Self> {
        self.overlap = Some(score_overlap(real, fake, self.bins)?);
        Ok(self)
    }
}

/// Stacks the diagnostic feature of each report into a matrix.
pub fn feature_matrix<'a, I: IntoIterator<Item = &'a ScoreReport>>(reports: I) -> Matrix {
    let rows: Vec<Vec<f64>> = reports.into_iter().map(|r| r.features.to_vec()).collect();
    if rows.is_empty() {
        return Matrix::zeros(0, 3);
    }
    Matrix::from_rows(&rows).expect("rows share width 3")
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake, Real};

    #[test]
    fn video_score_closed_forms() {
        assert_eq!(aggregate_video_score(&[2.5]).unwrap(), 2.5);
        assert!((aggregate_video_score(&[0.0; 4]).unwrap() - 1.3862943611198906).abs() < 1e-12);
        assert!((aggregate_video_score(&[10.0, -100.0, -100.0]).unwrap() - 10.0).abs() < 1e-6);
        assert_eq!(aggregate_video_score(&[]), Err(Error::EmptySequence));
    }

    #[test]
    fn ap_hand_ranking() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[Fake, Real, Fake]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(average_precision(&[0.9, 0.1], &[Fake, Real]).unwrap(), 1.0);
        assert!(matches!(average_precision(&[0.1, 0.2], &[Real, Real]), Err(Error::SingleClass(_))));
    }

    #[test]
    fn auc_cases() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[Fake, Real]).unwrap(), 1.0);
        let auc = roc_auc(&[0.1, 0.9, 0.2, 0.8], &[Real, Real, Fake, Fake]).unwrap();
        assert!((auc - 0.5).abs() < 1e-12);
        assert_eq!(roc_auc(&[0.3; 4], &[Real, Fake, Real, Fake]).unwrap(), 0.5);
    }

    #[test]
    fn mmd_duplicated_singletons() {
        let x = Matrix::from_rows(&[alloc::vec![0.0, 0.0], alloc::vec![0.0, 0.0]]).unwrap();
        let y = Matrix::from_rows(&[alloc::vec![3.0, 4.0], alloc::vec![3.0, 4.0]]).unwrap();
        let m = mmd2(&x, &y).unwrap();
        // Pairwise distances are {0, 0, 5, 5, 5, 5}; median 5.
        assert_eq!(m.bandwidth, 5.0);
        let kxy = libm::exp(-25.0 / 50.0);
        assert!((m.biased - (2.0 - 2.0 * kxy)).abs() < 1e-12);
        assert!((m.unbiased - (2.0 - 2.0 * kxy)).abs() < 1e-12);
        let same = mmd2(&x, &x).unwrap();
        assert_eq!(same.unbiased, 0.0);
    }

    #[test]
    fn mmd_needs_two_rows() {
        let x = Matrix::zeros(1, 2);
        let y = Matrix::zeros(3, 2);
        assert_eq!(mmd2(&x, &y), Err(Error::TooFewSamples { needed: 2, got: 1 }));
    }

    #[test]
    fn overlap_extremes() {
        assert_eq!(score_overlap(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 50).unwrap(), 1.0);
        assert_eq!(score_overlap(&[0.0, 0.1], &[5.0, 5.1], 50).unwrap(), 0.0);
        assert_eq!(score_overlap(&[], &[1.0], 50), Err(Error::EmptyGroup("real")));
    }

    fn report(id: &str, s: f64, label: Label, scenario: Scenario) -> ScoreReport {
        ScoreReport {
            sample_id: id.into(),
            frame_scores: alloc::vec![s],
            video_score: s,
            weights: [1.0 / 3.0; 3],
            features: [s, 0.0, 0.0],
            label,
            scenario,
        }
    }

    #[test]
    fn metrics_table_is_order_invariant() {
        let mut r = alloc::vec![
            report("a", 0.1, Real, Scenario::Talking),
            report("b", 0.5, Fake, Scenario::Talking),
            report("c", 0.5, Real, Scenario::Singing),
            report("d", 0.9, Fake, Scenario::Singing),
            report("e", 0.5, Fake, Scenario::Talking),
        ];
        let a = metrics_table(&r).unwrap();
        r.reverse();
        assert_eq!(a, metrics_table(&r).unwrap());
        assert_eq!(a.per_scenario.len(), 2);
    }
}
