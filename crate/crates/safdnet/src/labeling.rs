//! Event labeling: cardiac-cycle detection, per-beat mean arterial
//! pressure, sustained hypotensive / nonhypotensive periods with the
//! 65–75 mmHg gray zone, and horizon-aligned dataset assembly with
//! negative-class balancing.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rng::{hash_bytes, Rng};
use crate::signal_io::{
    cut_segment, ChannelMode, Label, Segment, SegmentCheck, SignalError, WaveformCase, GRID_HZ,
};

/// Hypotension: per-beat MAP below this for a sustained period.
pub const HYPO_MAP_MMHG: f64 = 65.0;
/// Nonhypotension: per-beat MAP above this for a sustained period.
pub const NONHYPO_MAP_MMHG: f64 = 75.0;
/// Minimum sustained span for either event kind.
pub const MIN_EVENT_SPAN_S: f64 = 60.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeakParams {
    /// Absolute height floor, in signal units. None disables the filter.
    pub min_height: Option<f64>,
    pub min_prominence: f64,
    pub min_distance_s: f64,
}

impl PeakParams {
    pub fn abp() -> Self {
        PeakParams {
            min_height: Some(40.0),
            min_prominence: 10.0,
            min_distance_s: 0.3,
        }
    }

    /// Channel defaults; relative thresholds resolve against the data.
    pub fn for_channel(name: &str, data: &[f64]) -> Self {
        let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = data.iter().copied().fold(f64::INFINITY, f64::min);
        match name {
            "ABP" => PeakParams::abp(),
            "ECG" => PeakParams {
                min_height: Some(0.3 * max),
                min_prominence: 0.3,
                min_distance_s: 0.3,
            },
            _ => PeakParams {
                min_height: None,
                min_prominence: 0.1 * (max - min),
                min_distance_s: 0.3,
            },
        }
    }
}

#[derive(Debug)]
pub enum LabelError {
    InsufficientBeats(usize),
    Signal(SignalError),
}

impl fmt::Display for LabelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelError::InsufficientBeats(n) => {
                write!(f, "needs at least 2 peaks to form a beat, found {}", n)
            }
            LabelError::Signal(e) => write!(f, "{}", e),
        }
    }
}

impl std::error::Error for LabelError {}

impl From<SignalError> for LabelError {
    fn from(e: SignalError) -> Self {
        LabelError::Signal(e)
    }
}

fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    // Walk outward until a strictly higher sample (or the edge); the base
    // on each side is the minimum seen along the way.
    let mut left_min = h;
    let mut j = peak;
    while j > 0 {
        j -= 1;
        if x[j] > h {
            break;
        }
        left_min = left_min.min(x[j]);
    }
    let mut right_min = h;
    let mut j = peak;
    while j + 1 < x.len() {
        j += 1;
        if x[j] > h {
            break;
        }
        right_min = right_min.min(x[j]);
    }
    h - left_min.max(right_min)
}

/// Local-maximum detection on a 100 Hz signal with height, prominence,
/// and minimum-distance constraints. Among conflicting candidates the
/// higher peak wins; ties break toward the earlier index.
pub fn detect_peaks(x: &[f64], p: &PeakParams) -> Vec<usize> {
    assert!(p.min_distance_s > 0.0, "min_distance_s must be positive");
    if x.len() < 3 {
        return Vec::new();
    }
    let mut candidates: Vec<usize> = (1..x.len() - 1)
        .filter(|&i| x[i] > x[i - 1] && x[i] > x[i + 1])
        .collect();
    if let Some(h) = p.min_height {
        candidates.retain(|&i| x[i] >= h);
    }
    candidates.retain(|&i| prominence(x, i) >= p.min_prominence);

    // Distance selection by priority: higher first, earlier on ties.
    let min_samples = p.min_distance_s * GRID_HZ;
    let mut order = candidates.clone();
    order.sort_by(|&a, &b| {
        x[b].partial_cmp(&x[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let far_enough = kept
            .iter()
            .all(|&k| (k.abs_diff(i)) as f64 + 1e-9 >= min_samples);
        if far_enough {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Per-beat series derived from consecutive ABP peak pairs.
#[derive(Clone, Debug)]
pub struct BeatSeries {
    pub beat_times_s: Vec<f64>,
    pub sbp: Vec<f64>,
    pub dbp: Vec<f64>,
    pub map: Vec<f64>,
}

impl BeatSeries {
    pub fn len(&self) -> usize {
        self.beat_times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beat_times_s.is_empty()
    }
}

/// Each cardiac cycle spans a consecutive peak pair: SBP is the maximum,
/// DBP the minimum over the cycle, and MAP = DBP + (SBP − DBP)/3.
pub fn beats_to_map(abp: &[f64], peaks: &[usize]) -> Result<BeatSeries, LabelError> {
    if peaks.len() < 2 {
        return Err(LabelError::InsufficientBeats(peaks.len()));
    }
    let n = peaks.len() - 1;
    let mut out = BeatSeries {
        beat_times_s: Vec::with_capacity(n),
        sbp: Vec::with_capacity(n),
        dbp: Vec::with_capacity(n),
        map: Vec::with_capacity(n),
    };
    for w in peaks.windows(2) {
        let (start, end) = (w[0], w[1]);
        let cycle = &abp[start..=end];
        let sbp = cycle.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dbp = cycle.iter().copied().fold(f64::INFINITY, f64::min);
        out.beat_times_s.push(start as f64 / GRID_HZ);
        out.sbp.push(sbp);
        out.dbp.push(dbp);
        out.map.push(dbp + (sbp - dbp) / 3.0);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodKind {
    Hypotension,
    Nonhypotension,
    Gray,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventPeriod {
    pub kind: PeriodKind,
    pub start_s: f64,
    pub end_s: f64,
}

/// Maximal runs of beats with MAP < 65 (hypotension) or MAP > 75
/// (nonhypotension) spanning at least 60 s; everything else between the
/// first and last beat is gray.
pub fn find_events(beats: &BeatSeries) -> Vec<EventPeriod> {
    let mut accepted: Vec<EventPeriod> = Vec::new();
    accepted.extend(sustained_runs(beats, PeriodKind::Hypotension, |m| {
        m < HYPO_MAP_MMHG
    }));
    accepted.extend(sustained_runs(beats, PeriodKind::Nonhypotension, |m| {
        m > NONHYPO_MAP_MMHG
    }));
    accepted.sort_by(|a, b| a.start_s.partial_cmp(&b.start_s).unwrap());

    let mut out = Vec::new();
    if beats.is_empty() {
        return out;
    }
    let t_first = beats.beat_times_s[0];
    let t_last = *beats.beat_times_s.last().unwrap();
    let mut cursor = t_first;
    for period in accepted {
        if period.start_s > cursor {
            out.push(EventPeriod {
                kind: PeriodKind::Gray,
                start_s: cursor,
                end_s: period.start_s,
            });
        }
        cursor = period.end_s;
        out.push(period);
    }
    if t_last > cursor {
        out.push(EventPeriod {
            kind: PeriodKind::Gray,
            start_s: cursor,
            end_s: t_last,
        });
    }
    out
}

fn sustained_runs(
    beats: &BeatSeries,
    kind: PeriodKind,
    qualifies: impl Fn(f64) -> bool,
) -> Vec<EventPeriod> {
    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..=beats.len() {
        let in_run = i < beats.len() && qualifies(beats.map[i]);
        match (run_start, in_run) {
            (None, true) => run_start = Some(i),
            (Some(s), false) => {
                let start_t = beats.beat_times_s[s];
                let end_t = beats.beat_times_s[i - 1];
                if end_t - start_t >= MIN_EVENT_SPAN_S {
                    out.push(EventPeriod {
                        kind,
                        start_s: start_t,
                        end_s: end_t,
                    });
                }
                run_start = None;
            }
            _ => {}
        }
    }
    out
}

/// Which split a case belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

/// A labeled per-horizon dataset slice.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub segments: Vec<Segment>,
    pub split: Split,
    pub horizon_min: u16,
    pub seed: u64,
}

/// Case-level splitting: a case's segments never straddle splits.
pub fn split_cases(case_ids: &[String], fractions: (f64, f64, f64), seed: u64) -> BTreeMap<String, Split> {
    let mut ids: Vec<String> = case_ids.to_vec();
    ids.sort();
    let mut rng = Rng::derive(seed, 0x5EED_5713);
    rng.shuffle(&mut ids);
    let n = ids.len();
    let n_train = (fractions.0 * n as f64).round() as usize;
    let n_dev = (fractions.1 * n as f64).round() as usize;
    let mut out = BTreeMap::new();
    for (i, id) in ids.into_iter().enumerate() {
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
        out.insert(id, split);
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub horizons_min: Vec<u16>,
    pub window_s: f64,
    pub channel_mode: ChannelMode,
    /// Cap on negatives per positive event.
    pub negatives_per_event: usize,
    /// Candidate grid step for negative window ends, seconds.
    pub negative_grid_s: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            horizons_min: vec![3, 5, 10, 15],
            window_s: 30.0,
            channel_mode: ChannelMode::Multi,
            negatives_per_event: 2,
            negative_grid_s: 1.0,
            seed: 0,
        }
    }
}

/// Assemble horizon-aligned labeled segments for one grid-rate case.
///
/// Positives: the window ending exactly h minutes before each hypotension
/// onset, if it exists and passes validation. Negatives: up to
/// `negatives_per_event` windows per emitted positive, drawn uniformly at
/// random (seeded per case) from windows whose end lies h minutes before a
/// point strictly inside a nonhypotension period. Cases with no
/// hypotension events contribute at most `negatives_per_event` negatives.
/// Gray-zone-targeted windows are never emitted.
pub fn build_dataset(
    case: &WaveformCase,
    cfg: &DatasetConfig,
) -> Result<BTreeMap<u16, Vec<Segment>>, LabelError> {
    if !case.is_on_grid() {
        let rate = case
            .channels
            .values()
            .next()
            .map(|c| c.sample_rate_hz)
            .unwrap_or(0.0);
        return Err(LabelError::Signal(SignalError::NotResampled { rate_hz: rate }));
    }
    let abp = &case.channel("ABP")?.samples;
    let peaks = detect_peaks(abp, &PeakParams::for_channel("ABP", abp));
    let mut out: BTreeMap<u16, Vec<Segment>> = BTreeMap::new();
    if peaks.len() < 2 {
        for &h in &cfg.horizons_min {
            out.insert(h, Vec::new());
        }
        return Ok(out);
    }
    let beats = beats_to_map(abp, &peaks)?;
    let events = find_events(&beats);
    let onsets: Vec<f64> = events
        .iter()
        .filter(|e| e.kind == PeriodKind::Hypotension)
        .map(|e| e.start_s)
        .collect();
    let nonhypo: Vec<&EventPeriod> = events
        .iter()
        .filter(|e| e.kind == PeriodKind::Nonhypotension)
        .collect();

    let window_len = (cfg.window_s * GRID_HZ).round() as usize;
    let n_samples = case
        .channels
        .values()
        .map(|c| c.samples.len())
        .min()
        .unwrap_or(0);
    let case_seed = cfg.seed ^ hash_bytes(case.case_id.as_bytes());

    for &h in &cfg.horizons_min {
        let mut rng = Rng::derive(case_seed, h as u64);
        let lead_s = h as f64 * 60.0;
        let mut segments = Vec::new();

        // Positive anchor: window ends exactly h minutes before each onset.
        let mut n_pos = 0usize;
        for &onset in &onsets {
            let end_s = onset - lead_s;
            let t0 = end_s - cfg.window_s;
            if t0 < 0.0 {
                continue;
            }
            let start = (t0 * GRID_HZ).round() as usize;
            if start + window_len > n_samples {
                continue;
            }
            let mut seg = cut_segment(case, start, window_len, cfg.channel_mode)?;
            seg.label = Label::Hypotension;
            seg.horizon_min = h;
            if accept(&seg) {
                segments.push(seg);
                n_pos += 1;
            }
        }

        // Negative candidates: window end e such that e + lead is strictly
        // inside a nonhypotension period.
        let quota = if n_pos >= 1 {
            cfg.negatives_per_event * n_pos
        } else if onsets.is_empty() {
            cfg.negatives_per_event
        } else {
            0
        };
        if quota > 0 {
            let mut candidates: Vec<usize> = Vec::new();
            let grid = (cfg.negative_grid_s * GRID_HZ).round() as usize;
            let mut end = window_len;
            while end <= n_samples.saturating_sub(1) {
                let end_s = end as f64 / GRID_HZ;
                let target = end_s + lead_s;
                if nonhypo
                    .iter()
                    .any(|p| target > p.start_s && target < p.end_s)
                {
                    candidates.push(end);
                }
                end += grid;
            }
            rng.shuffle(&mut candidates);
            let mut taken = 0;
            for end in candidates {
                if taken == quota {
                    break;
                }
                let start = end - window_len;
                let mut seg = cut_segment(case, start, window_len, cfg.channel_mode)?;
                seg.label = Label::Nonhypotension;
                seg.horizon_min = h;
                if accept(&seg) {
                    segments.push(seg);
                    taken += 1;
                }
            }
        }
        out.insert(h, segments);
    }
    Ok(out)
}

fn accept(seg: &Segment) -> bool {
    let abp: Vec<f64> = seg.data.row(0).iter().map(|&v| v as f64).collect();
    let peaks = detect_peaks(&abp, &PeakParams::for_channel("ABP", &abp));
    matches!(
        crate::signal_io::validate_segment(seg, &peaks),
        SegmentCheck::Accept
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_peak_count_matches_analytic() {
        // 1.25 Hz over 30 s: maxima at t = 0.2 + 0.8k, so 37 or 38 peaks.
        let x: Vec<f64> = (0..3000)
            .map(|i| (2.0 * std::f64::consts::PI * 1.25 * i as f64 / 100.0).sin())
            .collect();
        let peaks = detect_peaks(
            &x,
            &PeakParams {
                min_height: Some(0.0),
                min_prominence: 0.5,
                min_distance_s: 0.3,
            },
        );
        assert!(
            peaks.len() == 37 || peaks.len() == 38,
            "found {}",
            peaks.len()
        );
        for w in peaks.windows(2) {
            let gap = (w[1] - w[0]) as f64 / 100.0;
            assert!((gap - 0.8).abs() < 0.03, "gap {}", gap);
        }
    }

    #[test]
    fn monotone_ramp_has_no_peaks() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(detect_peaks(
            &x,
            &PeakParams {
                min_height: None,
                min_prominence: 0.0,
                min_distance_s: 0.1,
            }
        )
        .is_empty());
    }

    #[test]
    fn equal_peaks_keep_the_earlier_one() {
        // Two equal peaks 0.1 s apart with a 0.3 s minimum distance.
        let mut x = vec![0.0; 100];
        x[20] = 1.0;
        x[30] = 1.0;
        let peaks = detect_peaks(
            &x,
            &PeakParams {
                min_height: None,
                min_prominence: 0.5,
                min_distance_s: 0.3,
            },
        );
        assert_eq!(peaks, vec![20]);
    }

    #[test]
    fn map_formula_on_known_cycle() {
        // Cycle max 120, min 80: MAP = 80 + 40/3.
        let mut abp = vec![80.0; 200];
        abp[50] = 120.0;
        abp[150] = 120.0;
        let beats = beats_to_map(&abp, &[50, 150]).unwrap();
        assert_eq!(beats.len(), 1);
        assert!((beats.map[0] - (80.0 + 40.0 / 3.0)).abs() < 1e-12);
        assert_eq!(beats.sbp[0], 120.0);
        assert_eq!(beats.dbp[0], 80.0);
    }

    #[test]
    fn degenerate_constant_pressure() {
        let abp = vec![90.0; 300];
        let beats = beats_to_map(&abp, &[50, 150, 250]).unwrap();
        for i in 0..beats.len() {
            assert_eq!(beats.sbp[i], 90.0);
            assert_eq!(beats.dbp[i], 90.0);
            assert_eq!(beats.map[i], 90.0);
        }
    }

    #[test]
    fn too_few_peaks_is_an_error() {
        let abp = vec![90.0; 100];
        assert!(matches!(
            beats_to_map(&abp, &[10]),
            Err(LabelError::InsufficientBeats(1))
        ));
    }

    fn uniform_beats(maps: &[f64], spacing_s: f64) -> BeatSeries {
        BeatSeries {
            beat_times_s: (0..maps.len()).map(|i| i as f64 * spacing_s).collect(),
            sbp: maps.iter().map(|m| m + 20.0).collect(),
            dbp: maps.iter().map(|m| m - 10.0).collect(),
            map: maps.to_vec(),
        }
    }

    #[test]
    fn sustained_low_map_becomes_one_event() {
        // MAP 60 for 90 s (beats once per second).
        let beats = uniform_beats(&vec![60.0; 91], 1.0);
        let events = find_events(&beats);
        let hypo: Vec<_> = events
            .iter()
            .filter(|e| e.kind == PeriodKind::Hypotension)
            .collect();
        assert_eq!(hypo.len(), 1);
        assert_eq!(hypo[0].start_s, 0.0);
        assert_eq!(hypo[0].end_s, 90.0);
    }

    #[test]
    fn gray_zone_map_yields_no_events() {
        // MAP 70 for 10 minutes: neither hypo nor nonhypo, all gray.
        let beats = uniform_beats(&vec![70.0; 601], 1.0);
        let events = find_events(&beats);
        assert!(events
            .iter()
            .all(|e| e.kind == PeriodKind::Gray), "{:?}", events);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].start_s, 0.0);
        assert_eq!(events[0].end_s, 600.0);
    }

    #[test]
    fn short_dip_is_not_an_event() {
        // MAP < 65 for only 50 s, then recovery to 80.
        let mut maps = vec![60.0; 51];
        maps.extend(vec![80.0; 100]);
        let beats = uniform_beats(&maps, 1.0);
        let events = find_events(&beats);
        assert!(events
            .iter()
            .all(|e| e.kind != PeriodKind::Hypotension));
    }

    /// O(n²) oracle: enumerate every beat interval, test the sustained
    /// condition directly, and keep the maximal ones.
    fn brute_force_events(beats: &BeatSeries) -> Vec<EventPeriod> {
        let n = beats.len();
        let mut out = Vec::new();
        for (kind, qual) in [
            (
                PeriodKind::Hypotension,
                Box::new(|m: f64| m < HYPO_MAP_MMHG) as Box<dyn Fn(f64) -> bool>,
            ),
            (
                PeriodKind::Nonhypotension,
                Box::new(|m: f64| m > NONHYPO_MAP_MMHG),
            ),
        ] {
            let flags: Vec<bool> = beats.map.iter().map(|&m| qual(m)).collect();
            let prefix: Vec<usize> = std::iter::once(0)
                .chain(flags.iter().scan(0, |acc, &f| {
                    *acc += f as usize;
                    Some(*acc)
                }))
                .collect();
            for i in 0..n {
                for j in i..n {
                    let all = prefix[j + 1] - prefix[i] == j + 1 - i;
                    let span_ok =
                        beats.beat_times_s[j] - beats.beat_times_s[i] >= MIN_EVENT_SPAN_S;
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

    #[test]
    fn random_map_walks_match_brute_force() {
        let mut rng = Rng::seed_from(2024);
        for _ in 0..25 {
            let n = 100 + rng.below(300);
            let mut map = 80.0;
            let maps: Vec<f64> = (0..n)
                .map(|_| {
                    map += rng.gauss() * 4.0;
                    map = map.clamp(40.0, 110.0);
                    map
                })
                .collect();
            let beats = uniform_beats(&maps, 0.8);
            let fast: Vec<EventPeriod> = find_events(&beats)
                .into_iter()
                .filter(|e| e.kind != PeriodKind::Gray)
                .collect();
            let slow = brute_force_events(&beats);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn periods_partition_time() {
        let mut rng = Rng::seed_from(7);
        let maps: Vec<f64> = (0..500)
            .map(|_| 40.0 + 60.0 * rng.next_f64())
            .collect();
        let beats = uniform_beats(&maps, 1.0);
        let events = find_events(&beats);
        // Coverage: consecutive periods tile [first, last] without gaps.
        assert_eq!(events.first().unwrap().start_s, beats.beat_times_s[0]);
        assert_eq!(
            events.last().unwrap().end_s,
            *beats.beat_times_s.last().unwrap()
        );
        for w in events.windows(2) {
            assert!(
                (w[0].end_s - w[1].start_s).abs() < 1e-12,
                "gap between {:?} and {:?}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn split_cases_is_deterministic_and_case_level() {
        let ids: Vec<String> = (0..40).map(|i| format!("case_{:03}", i)).collect();
        let a = split_cases(&ids, (0.7, 0.15, 0.15), 11);
        let b = split_cases(&ids, (0.7, 0.15, 0.15), 11);
        assert_eq!(a, b);
        let n_train = a.values().filter(|s| **s == Split::Train).count();
        let n_dev = a.values().filter(|s| **s == Split::Dev).count();
        let n_test = a.values().filter(|s| **s == Split::Test).count();
        assert_eq!(n_train, 28);
        assert_eq!(n_dev, 6);
        assert_eq!(n_test, 6);
    }
}
