//! Threshold-free and thresholded classification metrics with bootstrap
//! confidence intervals, calibration curves, and Platt recalibration.
//!
//! Scores are probabilities in [0, 1]; labels are 0.0 / 1.0.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Debug)]
pub enum EvalError {
    UndefinedMetric(&'static str),
    UndefinedCi,
    TooFewSamples { n: usize, need: usize },
    FitError(String),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::UndefinedMetric(why) => write!(f, "metric undefined: {}", why),
            EvalError::UndefinedCi => write!(f, "all bootstrap resamples were degenerate"),
            EvalError::TooFewSamples { n, need } => {
                write!(f, "bootstrap needs at least {} samples, got {}", need, n)
            }
            EvalError::FitError(msg) => write!(f, "recalibration fit failed: {}", msg),
        }
    }
}

impl std::error::Error for EvalError {}

fn class_counts(labels: &[f64]) -> (usize, usize) {
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    (n_pos, labels.len() - n_pos)
}

/// Area under the ROC curve as the tie-aware Mann-Whitney statistic:
/// (#concordant pairs + ½·#tied pairs) / (n₁·n₀), computed through
/// average ranks in O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(scores.len(), labels.len());
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::UndefinedMetric("both classes must be present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank across the tie group [i, j].
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1.0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n1 = n_pos as f64;
    let u = rank_sum_pos - n1 * (n1 + 1.0) / 2.0;
    Ok(u / (n1 * n_neg as f64))
}

/// Area under the precision-recall curve as average precision: the
/// step-wise integral of precision over recall along a descending-score
/// sweep with tied scores grouped.
pub fn pr_auc(scores: &[f64], labels: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(scores.len(), labels.len());
    let (n_pos, _) = class_counts(labels);
    if n_pos == 0 {
        return Err(EvalError::UndefinedMetric("needs at least one positive"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let tp_prev = tp;
        for &idx in &order[i..=j] {
            if labels[idx] == 1.0 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        if tp > tp_prev {
            let precision = tp as f64 / (tp + fp) as f64;
            let delta_recall = (tp - tp_prev) as f64 / n_pos as f64;
            ap += precision * delta_recall;
        }
        i = j + 1;
    }
    Ok(ap)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Confusion-matrix metrics at a score threshold (score ≥ threshold is a
/// positive call). Precision, recall, and F1 are 0 when their denominator
/// is 0.
pub fn classify_metrics(scores: &[f64], labels: &[f64], threshold: f64) -> ClassMetrics {
    assert_eq!(scores.len(), labels.len());
    assert!(!scores.is_empty());
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels.iter()) {
        match (s >= threshold, y == 1.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics {
        accuracy: (tp + tn) as f64 / scores.len() as f64,
        precision,
        recall,
        f1,
    }
}

/// Percentile bootstrap 95% interval. Resamples are seeded independently
/// from the master seed, so aggregation order never matters; resamples
/// missing a class are redrawn up to 10 times, then skipped.
pub fn bootstrap_ci<F>(
    metric: F,
    scores: &[f64],
    labels: &[f64],
    n_boot: usize,
    seed: u64,
) -> Result<(f64, f64), EvalError>
where
    F: Fn(&[f64], &[f64]) -> Result<f64, EvalError>,
{
    let n = scores.len();
    if n < 20 {
        return Err(EvalError::TooFewSamples { n, need: 20 });
    }
    let mut values = Vec::with_capacity(n_boot);
    let mut bs = Vec::with_capacity(n);
    let mut bl = Vec::with_capacity(n);
    for i in 0..n_boot {
        let mut rng = Rng::derive(seed, i as u64);
        for _retry in 0..10 {
            bs.clear();
            bl.clear();
            for _ in 0..n {
                let k = rng.below(n);
                bs.push(scores[k]);
                bl.push(labels[k]);
            }
            let (p, q) = class_counts(&bl);
            if p > 0 && q > 0 {
                if let Ok(v) = metric(&bs, &bl) {
                    values.push(v);
                }
                break;
            }
        }
    }
    if values.is_empty() {
        return Err(EvalError::UndefinedCi);
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((percentile(&values, 0.025), percentile(&values, 0.975)))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let pos = q * (m - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub mean_pred: f64,
    pub frac_pos: f64,
    pub count: usize,
}

/// Equal-width reliability bins over [0, 1]. Empty bins are emitted with
/// count 0 and NaN fractions.
pub fn calibration_curve(scores: &[f64], labels: &[f64], bins: usize) -> Vec<CalibrationBin> {
    assert!(bins >= 1);
    let mut sums = vec![0.0f64; bins];
    let mut pos = vec![0.0f64; bins];
    let mut counts = vec![0usize; bins];
    for (&s, &y) in scores.iter().zip(labels.iter()) {
        debug_assert!((0.0..=1.0).contains(&s), "score {} outside [0, 1]", s);
        let idx = ((s * bins as f64).floor() as usize).min(bins - 1);
        sums[idx] += s;
        pos[idx] += y;
        counts[idx] += 1;
    }
    (0..bins)
        .map(|i| CalibrationBin {
            bin_lo: i as f64 / bins as f64,
            bin_hi: (i + 1) as f64 / bins as f64,
            mean_pred: if counts[i] == 0 {
                f64::NAN
            } else {
                sums[i] / counts[i] as f64
            },
            frac_pos: if counts[i] == 0 {
                f64::NAN
            } else {
                pos[i] / counts[i] as f64
            },
            count: counts[i],
        })
        .collect()
}

/// Fitted sigmoid remapping σ(a·logit(s) + b).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
}

const SCORE_CLAMP: f64 = 1e-7;

fn logit(s: f64) -> f64 {
    let s = s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    (s / (1.0 - s)).ln()
}

impl PlattScaling {
    pub fn apply(&self, score: f64) -> f64 {
        1.0 / (1.0 + (-(self.a * logit(score) + self.b)).exp())
    }

    pub fn apply_all(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&s| self.apply(s)).collect()
    }
}

/// Fit (a, b) by Newton iteration on the dev-set cross entropy of
/// σ(a·logit(s) + b). The problem is 2-D logistic regression, so the
/// objective is convex; targets are smoothed to (N₊+1)/(N₊+2) and
/// 1/(N₋+2) so perfectly separated dev scores still yield a finite fit.
pub fn platt_recalibrate(
    dev_scores: &[f64],
    dev_labels: &[f64],
) -> Result<PlattScaling, EvalError> {
    let (n_pos, n_neg) = class_counts(dev_labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::UndefinedMetric(
            "recalibration needs both classes in the dev set",
        ));
    }
    let t_pos = (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0);
    let t_neg = 1.0 / (n_neg as f64 + 2.0);
    let dev_labels: Vec<f64> = dev_labels
        .iter()
        .map(|&y| if y == 1.0 { t_pos } else { t_neg })
        .collect();
    let z: Vec<f64> = dev_scores.iter().map(|&s| logit(s)).collect();
    let n = z.len() as f64;
    let (mut a, mut b) = (1.0f64, 0.0f64);
    for _iter in 0..1000 {
        let mut ga = 0.0;
        let mut gb = 0.0;
        let mut haa = 0.0;
        let mut hab = 0.0;
        let mut hbb = 0.0;
        for (&zi, &yi) in z.iter().zip(dev_labels.iter()) {
            let p = 1.0 / (1.0 + (-(a * zi + b)).exp());
            let r = p - yi;
            ga += r * zi;
            gb += r;
            let w = (p * (1.0 - p)).max(1e-12);
            haa += w * zi * zi;
            hab += w * zi;
            hbb += w;
        }
        ga /= n;
        gb /= n;
        haa = haa / n + 1e-9;
        hab /= n;
        hbb = hbb / n + 1e-9;
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-300 {
            return Err(EvalError::FitError("singular hessian".to_string()));
        }
        let mut da = (hbb * ga - hab * gb) / det;
        let mut db = (haa * gb - hab * ga) / det;
        // Clip the Newton step: saturated logistics make the Hessian
        // nearly singular and the raw step explodes.
        let step = da.abs().max(db.abs());
        if step > 0.5 {
            let shrink = 0.5 / step;
            da *= shrink;
            db *= shrink;
        }
        a -= da;
        b -= db;
        if !a.is_finite() || !b.is_finite() {
            return Err(EvalError::FitError("diverged".to_string()));
        }
        if da.abs().max(db.abs()) < 1e-10 {
            return Ok(PlattScaling { a, b });
        }
    }
    Err(EvalError::FitError(
        "no convergence in 1000 iterations".to_string(),
    ))
}

/// ROC curve points (fpr, tpr), descending-threshold sweep with ties
/// grouped, including the (0, 0) endpoint.
pub fn roc_points(scores: &[f64], labels: &[f64]) -> Vec<(f64, f64)> {
    let (n_pos, n_neg) = class_counts(labels);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] == 1.0 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        pts.push((
            if n_neg == 0 { 0.0 } else { fp as f64 / n_neg as f64 },
            if n_pos == 0 { 0.0 } else { tp as f64 / n_pos as f64 },
        ));
        i = j + 1;
    }
    pts
}

/// PR curve points (recall, precision), descending-threshold sweep with
/// ties grouped.
pub fn pr_points(scores: &[f64], labels: &[f64]) -> Vec<(f64, f64)> {
    let (n_pos, _) = class_counts(labels);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut pts = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] == 1.0 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        if n_pos > 0 {
            pts.push((tp as f64 / n_pos as f64, tp as f64 / (tp + fp) as f64));
        }
        i = j + 1;
    }
    pts
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MetricWithCi {
    pub point: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub horizon_min: u16,
    pub n: usize,
    pub auroc: MetricWithCi,
    pub auprc: MetricWithCi,
    pub accuracy: MetricWithCi,
    pub precision: MetricWithCi,
    pub recall: MetricWithCi,
    pub f1: MetricWithCi,
    pub roc_points: Vec<(f64, f64)>,
    pub pr_points: Vec<(f64, f64)>,
    pub calibration: Vec<CalibrationBin>,
    /// Present when scores were Platt-recalibrated before reporting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platt: Option<PlattScaling>,
}

/// Full report: the six headline metrics with 95% bootstrap intervals
/// plus curve points for external plotting.
pub fn evaluate(
    scores: &[f64],
    labels: &[f64],
    horizon_min: u16,
    threshold: f64,
    n_boot: usize,
    bins: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    type MetricFn<'a> = &'a dyn Fn(&[f64], &[f64]) -> Result<f64, EvalError>;
    let with_ci = |point: f64,
                   f: MetricFn,
                   stream: u64|
     -> Result<MetricWithCi, EvalError> {
        let (ci_lo, ci_hi) = bootstrap_ci(f, scores, labels, n_boot, seed ^ stream)?;
        // Percentile intervals can in principle miss the point estimate;
        // the report contract keeps the point inside.
        Ok(MetricWithCi {
            point,
            ci_lo: ci_lo.min(point),
            ci_hi: ci_hi.max(point),
        })
    };

    let auroc = with_ci(roc_auc(scores, labels)?, &roc_auc, 0x01)?;
    let auprc = with_ci(pr_auc(scores, labels)?, &pr_auc, 0x02)?;
    let base = classify_metrics(scores, labels, threshold);
    let acc_fn = move |s: &[f64], l: &[f64]| Ok(classify_metrics(s, l, threshold).accuracy);
    let prec_fn = move |s: &[f64], l: &[f64]| Ok(classify_metrics(s, l, threshold).precision);
    let rec_fn = move |s: &[f64], l: &[f64]| Ok(classify_metrics(s, l, threshold).recall);
    let f1_fn = move |s: &[f64], l: &[f64]| Ok(classify_metrics(s, l, threshold).f1);
    let accuracy = with_ci(base.accuracy, &acc_fn, 0x03)?;
    let precision = with_ci(base.precision, &prec_fn, 0x04)?;
    let recall = with_ci(base.recall, &rec_fn, 0x05)?;
    let f1 = with_ci(base.f1, &f1_fn, 0x06)?;

    Ok(EvalReport {
        horizon_min,
        n: scores.len(),
        auroc,
        auprc,
        accuracy,
        precision,
        recall,
        f1,
        roc_points: roc_points(scores, labels),
        pr_points: pr_points(scores, labels),
        calibration: calibration_curve(scores, labels, bins),
        platt: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(n²) pair-counting oracle for AUROC.
    fn pair_count_auc(scores: &[f64], labels: &[f64]) -> f64 {
        let mut concordant = 0.0f64;
        let mut pairs = 0.0f64;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1.0 && labels[j] == 0.0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        concordant += 1.0;
                    } else if scores[i] == scores[j] {
                        concordant += 0.5;
                    }
                }
            }
        }
        concordant / pairs
    }

    #[test]
    fn auroc_perfect_and_tied() {
        let labels = vec![0.0, 0.0, 1.0, 1.0];
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5, 0.5, 0.5, 0.5], &labels).unwrap(), 0.5);
    }

    #[test]
    fn auroc_textbook_example() {
        let labels = vec![0.0, 0.0, 1.0, 1.0];
        let scores = vec![0.1, 0.4, 0.35, 0.8];
        assert_eq!(roc_auc(&scores, &labels).unwrap(), 0.75);
    }

    #[test]
    fn auroc_single_class_is_undefined() {
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[1.0, 1.0]),
            Err(EvalError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn auroc_matches_pair_counting_exactly() {
        let mut rng = Rng::seed_from(31);
        for trial in 0..50 {
            let n = 20 + rng.below(180);
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.below(25) as f64) / 25.0) // plenty of ties
                .collect();
            let mut labels: Vec<f64> = (0..n).map(|_| (rng.below(2)) as f64).collect();
            if !labels.contains(&1.0) {
                labels[0] = 1.0;
            }
            if !labels.contains(&0.0) {
                labels[1] = 0.0;
            }
            let fast = roc_auc(&scores, &labels).unwrap();
            let slow = pair_count_auc(&scores, &labels);
            assert_eq!(fast, slow, "trial {}", trial);
        }
    }

    #[test]
    fn auroc_complement_identity() {
        let mut rng = Rng::seed_from(77);
        for _ in 0..50 {
            let n = 20 + rng.below(180);
            let scores: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let mut labels: Vec<f64> = (0..n).map(|_| rng.below(2) as f64).collect();
            if !labels.contains(&1.0) {
                labels[0] = 1.0;
            }
            if !labels.contains(&0.0) {
                labels[1] = 0.0;
            }
            let flipped: Vec<f64> = labels.iter().map(|&y| 1.0 - y).collect();
            let a = roc_auc(&scores, &labels).unwrap();
            let b = roc_auc(&scores, &flipped).unwrap();
            assert_eq!(a + b, 1.0);
        }
    }

    #[test]
    fn auroc_invariant_under_monotone_transform() {
        let mut rng = Rng::seed_from(13);
        let n = 150;
        let scores: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        let labels: Vec<f64> = (0..n)
            .map(|i| if i % 3 == 0 { 1.0 } else { 0.0 })
            .collect();
        let squashed: Vec<f64> = scores
            .iter()
            .map(|&s| 1.0 / (1.0 + (-5.0 * s).exp()))
            .collect();
        let a = roc_auc(&scores, &labels).unwrap();
        let b = roc_auc(&squashed, &labels).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    /// Exhaustive-threshold oracle for average precision: O(n²) rescan of
    /// the whole score set at every unique threshold.
    fn exhaustive_ap(scores: &[f64], labels: &[f64]) -> f64 {
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let n_pos = labels.iter().filter(|&&y| y == 1.0).count() as f64;
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for &t in &thresholds {
            let mut tp = 0.0;
            let mut fp = 0.0;
            for (&s, &y) in scores.iter().zip(labels.iter()) {
                if s >= t {
                    if y == 1.0 {
                        tp += 1.0;
                    } else {
                        fp += 1.0;
                    }
                }
            }
            let recall = tp / n_pos;
            if recall > prev_recall {
                ap += (recall - prev_recall) * (tp / (tp + fp));
            }
            prev_recall = recall;
        }
        ap
    }

    #[test]
    fn ap_perfect_separation() {
        let labels = vec![0.0, 0.0, 1.0, 1.0];
        assert_eq!(pr_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
    }

    #[test]
    fn ap_single_positive_by_hand() {
        assert_eq!(pr_auc(&[0.2, 0.9], &[1.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn ap_matches_exhaustive_oracle() {
        let mut rng = Rng::seed_from(211);
        for _ in 0..20 {
            let n = 200;
            let scores: Vec<f64> = (0..n).map(|_| (rng.below(40) as f64) / 40.0).collect();
            let mut labels: Vec<f64> = (0..n).map(|_| rng.below(2) as f64).collect();
            if !labels.contains(&1.0) {
                labels[0] = 1.0;
            }
            let fast = pr_auc(&scores, &labels).unwrap();
            let slow = exhaustive_ap(&scores, &labels);
            assert!((fast - slow).abs() < 1e-12, "{} vs {}", fast, slow);
        }
    }

    #[test]
    fn ap_zero_positives_undefined() {
        assert!(matches!(
            pr_auc(&[0.1, 0.9], &[0.0, 0.0]),
            Err(EvalError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn classify_metrics_hand_confusion_matrix() {
        // TP=2, FP=1, FN=2, TN=6: precision 2/3, recall 1/2, f1 4/7.
        let scores = vec![0.9, 0.8, 0.7, 0.2, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        let labels = vec![1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let m = classify_metrics(&scores, &labels, 0.5);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 0.5).abs() < 1e-12);
        assert!((m.f1 - 4.0 / 7.0).abs() < 1e-12);
        assert!((m.accuracy - 8.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn classify_metrics_all_correct() {
        let m = classify_metrics(&[0.9, 0.1], &[1.0, 0.0], 0.5);
        assert_eq!(
            m,
            ClassMetrics {
                accuracy: 1.0,
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
    }

    #[test]
    fn classify_metrics_zero_denominator_convention() {
        let m = classify_metrics(&[0.1, 0.2], &[1.0, 1.0], 0.5);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn f1_identity_holds() {
        let mut rng = Rng::seed_from(4);
        for _ in 0..30 {
            let n = 50;
            let scores: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let labels: Vec<f64> = (0..n).map(|_| rng.below(2) as f64).collect();
            let m = classify_metrics(&scores, &labels, 0.5);
            if m.precision + m.recall > 0.0 {
                let expect = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                assert!((m.f1 - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bootstrap_constant_metric_collapses() {
        let scores: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        let labels: Vec<f64> = (0..50).map(|i| (i % 2) as f64).collect();
        let (lo, hi) = bootstrap_ci(|_, _| Ok(0.42), &scores, &labels, 200, 9).unwrap();
        assert_eq!(lo, 0.42);
        assert_eq!(hi, 0.42);
    }

    #[test]
    fn bootstrap_same_seed_same_interval() {
        let mut rng = Rng::seed_from(55);
        let scores: Vec<f64> = (0..100).map(|_| rng.next_f64()).collect();
        let labels: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let a = bootstrap_ci(roc_auc, &scores, &labels, 300, 17).unwrap();
        let b = bootstrap_ci(roc_auc, &scores, &labels, 300, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_well_separated_interval_is_tight() {
        let mut rng = Rng::seed_from(99);
        let n = 500;
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = (i % 2) as f64;
            let s = if y == 1.0 {
                0.8 + 0.19 * rng.next_f64()
            } else {
                0.01 + 0.19 * rng.next_f64()
            };
            scores.push(s);
            labels.push(y);
        }
        let (lo, hi) = bootstrap_ci(roc_auc, &scores, &labels, 1000, 3).unwrap();
        assert!(hi - lo < 0.05, "interval width {}", hi - lo);
    }

    #[test]
    fn bootstrap_needs_twenty_samples() {
        let scores = vec![0.5; 10];
        let labels = vec![1.0; 10];
        assert!(matches!(
            bootstrap_ci(roc_auc, &scores, &labels, 100, 0),
            Err(EvalError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn calibration_simulated_bernoulli_is_diagonal() {
        let mut rng = Rng::seed_from(123);
        let n = 10_000;
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let p = rng.next_f64();
            scores.push(p);
            labels.push(if rng.next_f64() < p { 1.0 } else { 0.0 });
        }
        for bin in calibration_curve(&scores, &labels, 10) {
            if bin.count > 0 {
                assert!(
                    (bin.mean_pred - bin.frac_pos).abs() < 0.05,
                    "bin [{}, {}): mean_pred {} frac_pos {}",
                    bin.bin_lo,
                    bin.bin_hi,
                    bin.mean_pred,
                    bin.frac_pos
                );
            }
        }
    }

    #[test]
    fn calibration_single_bin_prevalence() {
        let scores = vec![0.2, 0.8, 0.5, 0.9];
        let labels = vec![0.0, 1.0, 1.0, 1.0];
        let bins = calibration_curve(&scores, &labels, 1);
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].count, 4);
        assert!((bins[0].frac_pos - 0.75).abs() < 1e-12);
    }

    #[test]
    fn calibration_concentrated_scores_populate_one_bin() {
        let scores = vec![0.05; 7];
        let labels = vec![0.0; 7];
        let bins = calibration_curve(&scores, &labels, 10);
        assert_eq!(bins[0].count, 7);
        for bin in &bins[1..] {
            assert_eq!(bin.count, 0);
            assert!(bin.mean_pred.is_nan());
        }
    }

    fn simulated_calibrated(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = Rng::seed_from(seed);
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let p = 0.02 + 0.96 * rng.next_f64();
            scores.push(p);
            labels.push(if rng.next_f64() < p { 1.0 } else { 0.0 });
        }
        (scores, labels)
    }

    #[test]
    fn platt_on_calibrated_scores_is_identity_like() {
        let (scores, labels) = simulated_calibrated(10_000, 5);
        let fit = platt_recalibrate(&scores, &labels).unwrap();
        assert!((fit.a - 1.0).abs() < 0.1, "a = {}", fit.a);
        assert!(fit.b.abs() < 0.1, "b = {}", fit.b);
    }

    #[test]
    fn platt_recovers_overconfidence_factor() {
        // Doubling the logit makes scores overconfident; the fitted slope
        // should come out near 0.5 to undo it.
        let (scores, labels) = simulated_calibrated(10_000, 6);
        let overconfident: Vec<f64> = scores
            .iter()
            .map(|&s| 1.0 / (1.0 + (-2.0 * logit(s)).exp()))
            .collect();
        let fit = platt_recalibrate(&overconfident, &labels).unwrap();
        assert!((fit.a - 0.5).abs() < 0.07, "a = {}", fit.a);
    }

    #[test]
    fn platt_apply_preserves_ranking_and_auroc() {
        let (scores, labels) = simulated_calibrated(2_000, 7);
        let fit = platt_recalibrate(&scores, &labels).unwrap();
        let remapped = fit.apply_all(&scores);
        let before = roc_auc(&scores, &labels).unwrap();
        let after = roc_auc(&remapped, &labels).unwrap();
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn evaluate_produces_consistent_report() {
        let (scores, labels) = simulated_calibrated(400, 8);
        let report = evaluate(&scores, &labels, 5, 0.5, 200, 10, 3).unwrap();
        assert_eq!(report.n, 400);
        for m in [
            report.auroc,
            report.auprc,
            report.accuracy,
            report.precision,
            report.recall,
            report.f1,
        ] {
            assert!(m.point >= 0.0 && m.point <= 1.0);
            assert!(m.ci_lo <= m.point + 1e-12 && m.point <= m.ci_hi + 1e-12);
        }
        let total: usize = report.calibration.iter().map(|b| b.count).sum();
        assert_eq!(total, 400);
    }
}
