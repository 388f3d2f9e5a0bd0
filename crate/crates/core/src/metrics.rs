//! Ranking metrics over labeled scores: tie-corrected AUROC, ROC curves,
//! and thresholded accuracy. Detection reports plug in through
//! [`scores_from_reports`] and [`report_accuracy`].

use crate::detect::DetectionReport;
use crate::error::{Error, Result};

/// Scores with binary labels (`true` = positive class). Construction
/// validates lengths, finiteness, and non-emptiness once so the metric
/// functions can assume a clean payload.
#[derive(Debug, Clone)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::InvalidParam {
                name: "labels",
                detail: format!("{} scores vs {} labels", scores.len(), labels.len()),
            });
        }
        if scores.is_empty() {
            return Err(Error::EmptyInput { what: "scores" });
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidParam {
                name: "scores",
                detail: format!("non-finite score {bad}"),
            });
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Same scores, flipped labels.
    pub fn flipped(&self) -> Self {
        Self {
            scores: self.scores.clone(),
            labels: self.labels.iter().map(|l| !l).collect(),
        }
    }
}

/// Area under the ROC curve via the Mann-Whitney statistic with midranks
/// for ties: the probability that a random positive outscores a random
/// negative, counting ties as half.
///
/// Fails if either class is absent.
pub fn auroc(data: &LabeledScores) -> Result<f64> {
    let np = data.positives();
    let nn = data.negatives();
    if np == 0 || nn == 0 {
        return Err(Error::SingleClass);
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.scores[a].partial_cmp(&data.scores[b]).unwrap());

    // Midranks: every member of a tie group gets the group's average
    // 1-based rank. Ranks are integers or half-integers, so the positive
    // rank sum is exact in f64 far beyond any realistic n.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && data.scores[order[j]] == data.scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if data.labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }

    let u = rank_sum_pos - (np * (np + 1)) as f64 / 2.0;
    Ok(u / (np as f64 * nn as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Decision threshold realizing this point under `score >= threshold`.
    /// The (0, 0) anchor carries +infinity.
    pub threshold: f64,
}

/// ROC curve: the (0, 0) anchor plus one point per distinct score, scanned
/// from the highest threshold down. The final point is always (1, 1).
pub fn roc_curve(data: &LabeledScores) -> Result<Vec<RocPoint>> {
    let np = data.positives();
    let nn = data.negatives();
    if np == 0 || nn == 0 {
        return Err(Error::SingleClass);
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.scores[b].partial_cmp(&data.scores[a]).unwrap());

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < n {
        let score = data.scores[order[i]];
        let mut j = i;
        while j < n && data.scores[order[j]] == score {
            if data.labels[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / nn as f64,
            tpr: tp as f64 / np as f64,
            threshold: score,
        });
        i = j;
    }
    Ok(points)
}

/// Trapezoidal area under a curve of [`RocPoint`]s ordered by fpr.
/// Mathematically identical to [`auroc`] on the same data, ties included
/// (tie groups become diagonal segments whose trapezoids count half).
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum()
}

/// ROC CSV: `fpr,tpr,threshold`, one row per curve point. The leading
/// anchor's threshold serializes as `inf`.
pub fn write_roc_csv(points: &[RocPoint], path: &std::path::Path) -> Result<()> {
    let mut text = String::from("fpr,tpr,threshold\n");
    for p in points {
        text.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_positives + self.true_negatives) as f64 / self.total() as f64
    }
}

/// Accuracy of the verdict rule `score >= threshold` against the labels.
/// The threshold lives on the verdict scale, so it must fall in `[0.5, 1]`.
pub fn accuracy_at(data: &LabeledScores, threshold: f64) -> Result<(f64, Confusion)> {
    if !(0.5..=1.0).contains(&threshold) {
        return Err(Error::InvalidParam {
            name: "threshold",
            detail: format!("{threshold} is outside [0.5, 1]"),
        });
    }
    let mut c = Confusion::default();
    for (&score, &label) in data.scores.iter().zip(&data.labels) {
        match (score >= threshold, label) {
            (true, true) => c.true_positives += 1,
            (true, false) => c.false_positives += 1,
            (false, true) => c.false_negatives += 1,
            (false, false) => c.true_negatives += 1,
        }
    }
    Ok((c.accuracy(), c))
}

/// Extracts `(q_max, truth)` pairs from scan reports for ranking metrics.
/// AUROC on raw scores is rank-identical to AUROC on their CDF values, so
/// `q_max` is used directly. Every report must carry ground truth.
pub fn scores_from_reports(reports: &[DetectionReport]) -> Result<LabeledScores> {
    let mut scores = Vec::with_capacity(reports.len());
    let mut labels = Vec::with_capacity(reports.len());
    for r in reports {
        let truth = r.truth.ok_or_else(|| Error::MissingTruth {
            image: r.image.clone(),
        })?;
        scores.push(r.q_max);
        labels.push(truth);
    }
    LabeledScores::new(scores, labels)
}

/// Accuracy and confusion counts of the verdicts already present in the
/// reports, judged against their ground truth.
pub fn report_accuracy(reports: &[DetectionReport]) -> Result<(f64, Confusion)> {
    if reports.is_empty() {
        return Err(Error::EmptyInput { what: "detection reports" });
    }
    let mut c = Confusion::default();
    for r in reports {
        let truth = r.truth.ok_or_else(|| Error::MissingTruth {
            image: r.image.clone(),
        })?;
        match (r.verdict, truth) {
            (true, true) => c.true_positives += 1,
            (true, false) => c.false_positives += 1,
            (false, true) => c.false_negatives += 1,
            (false, false) => c.true_negatives += 1,
        }
    }
    Ok((c.accuracy(), c))
}
