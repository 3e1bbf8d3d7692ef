//! Independent oracles shared by the integration suites. Everything here
//! is deliberately written as directly as possible — O(T²) transforms,
//! O(n²) pair counts, exhaustive interval scans — so it checks the fast
//! implementations from a different route.

use safdnet::labeling::{BeatSeries, EventPeriod, PeriodKind};

/// Direct O(T²) DFT over the half spectrum.
pub fn naive_dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let t = x.len();
    let bins = t / 2 + 1;
    let mut re = vec![0.0; bins];
    let mut im = vec![0.0; bins];
    for k in 0..bins {
        for (n, &v) in x.iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * (k * n) as f64 / t as f64;
            re[k] += v * ang.cos();
            im[k] += v * ang.sin();
        }
    }
    (re, im)
}

/// Enumerate every beat interval and keep the maximal sustained ones.
pub fn brute_force_events(beats: &BeatSeries) -> Vec<EventPeriod> {
    let n = beats.len();
    let mut out = Vec::new();
    type Qualifier = Box<dyn Fn(f64) -> bool>;
    let specs: [(PeriodKind, Qualifier); 2] = [
        (PeriodKind::Hypotension, Box::new(|m| m < 65.0)),
        (PeriodKind::Nonhypotension, Box::new(|m| m > 75.0)),
    ];
    for (kind, qualifies) in specs {
        let flags: Vec<bool> = beats.map.iter().map(|&m| qualifies(m)).collect();
        let prefix: Vec<usize> = std::iter::once(0)
            .chain(flags.iter().scan(0usize, |acc, &f| {
                *acc += f as usize;
                Some(*acc)
            }))
            .collect();
        for i in 0..n {
            for j in i..n {
                let all = prefix[j + 1] - prefix[i] == j + 1 - i;
                let span_ok = beats.beat_times_s[j] - beats.beat_times_s[i] >= 60.0;
                let maximal = (i == 0 || !flags[i - 1]) && (j + 1 == n || !flags[j + 1]);
                if all && span_ok && maximal {
                    out.push(EventPeriod {
                        kind,
                        start_s: beats.beat_times_s[i],
                        end_s: beats.beat_times_s[j],
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| a.start_s.partial_cmp(&b.start_s).unwrap());
    out
}

/// O(n²) concordant/tied pair counting for AUROC.
pub fn pair_count_auc(scores: &[f64], labels: &[f64]) -> f64 {
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

/// Average precision by exhaustive threshold rescoring, O(n²).
pub fn exhaustive_ap(scores: &[f64], labels: &[f64]) -> f64 {
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
