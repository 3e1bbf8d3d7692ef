//! Seeded generator of physiologic-like 4-channel recordings with
//! ground-truth hypotension onsets and learnable pre-onset signatures.
//!
//! The point is not physiologic fidelity: cases exist so the labeling
//! pipeline can be checked against known event times and so the model has
//! something learnable at desk scale. Waveforms are built so that the
//! per-beat MAP recovered by the labeling pipeline equals the generator's
//! MAP trajectory: the pulse shape is normalized to peak at +2/3 and
//! trough at −1/3 of pulse pressure, which makes DBP + (SBP − DBP)/3
//! reproduce the programmed mean exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::signal_io::{Channel, WaveformCase};

/// Frequency of the spectral-tone precursor, Hz.
pub const TONE_HZ: f64 = 8.0;
/// Tone amplitude added to ABP, mmHg. Sits near the default noise floor.
pub const TONE_ABP_MMHG: f64 = 1.0;
/// Tone amplitude added to PPG, arbitrary units.
pub const TONE_PPG: f64 = 0.01;
/// Pulse-pressure shrink factor at onset for the pp_decay precursor.
pub const PP_DECAY_FACTOR: f64 = 0.6;
/// Heart-rate multiplier at onset for the hr_drift precursor.
pub const HR_DRIFT_FACTOR: f64 = 1.25;
/// MAP ramp duration into and out of an event, seconds.
const RAMP_S: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecursorKind {
    PpDecay,
    HrDrift,
    SpectralTone,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSigma {
    pub abp: f64,
    pub ecg: f64,
    pub ppg: f64,
    pub co2: f64,
}

impl ChannelSigma {
    pub fn zero() -> Self {
        ChannelSigma {
            abp: 0.0,
            ecg: 0.0,
            ppg: 0.0,
            co2: 0.0,
        }
    }
}

impl Default for ChannelSigma {
    fn default() -> Self {
        ChannelSigma {
            abp: 1.0,
            ecg: 0.02,
            ppg: 0.02,
            co2: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthParams {
    pub duration_s: f64,
    pub hr_bpm: f64,
    pub base_map_mmhg: f64,
    pub pulse_pressure_mmhg: f64,
    pub n_events: usize,
    pub precursor_lead_s: f64,
    pub precursor_kind: PrecursorKind,
    pub noise_sigma: ChannelSigma,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            duration_s: 1800.0,
            hr_bpm: 75.0,
            base_map_mmhg: 90.0,
            pulse_pressure_mmhg: 40.0,
            n_events: 2,
            precursor_lead_s: 120.0,
            precursor_kind: PrecursorKind::PpDecay,
            noise_sigma: ChannelSigma::default(),
            sample_rate_hz: 100.0,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub enum SynthError {
    InvalidParams(String),
    Schedule(String),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::InvalidParams(msg) => write!(f, "invalid generator params: {}", msg),
            SynthError::Schedule(msg) => write!(f, "event schedule: {}", msg),
        }
    }
}

impl std::error::Error for SynthError {}

/// One scheduled hypotension event: MAP crosses 65 mmHg downward at
/// `onset_s` and back upward at `onset_s + below_s`.
#[derive(Clone, Copy, Debug)]
pub struct ScheduledEvent {
    pub onset_s: f64,
    pub below_s: f64,
    pub nadir_mmhg: f64,
}

/// The pulse shape: a skewed von-Mises-style bump, one strict maximum and
/// one strict minimum per cycle (so beat detection never splits a cycle
/// on a secondary crest), normalized to +2/3 at the peak and −1/3 at the
/// trough. Multiplied by pulse pressure and added to the MAP trajectory
/// it produces SBP = MAP + 2·PP/3 and DBP = MAP − PP/3.
fn raw_pulse(phi: f64) -> f64 {
    // Monotone phase warp keeps the shape unimodal while skewing the
    // upstroke faster than the decay.
    let warped = phi - 0.3 * phi.sin();
    (4.0 * (warped.cos() - 1.0)).exp()
}

fn pulse_extrema() -> (f64, f64) {
    static EXTREMA: OnceLock<(f64, f64)> = OnceLock::new();
    *EXTREMA.get_or_init(|| {
        let n = 400_000;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let v = raw_pulse(2.0 * std::f64::consts::PI * i as f64 / n as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    })
}

/// Normalized pulse shape in [−1/3, +2/3].
pub fn pulse_shape(phi: f64) -> f64 {
    let (lo, hi) = pulse_extrema();
    (raw_pulse(phi) - lo) / (hi - lo) - 1.0 / 3.0
}

/// Normalized pulse shape in [0, 1] (used for PPG).
fn pulse_shape01(phi: f64) -> f64 {
    let (lo, hi) = pulse_extrema();
    (raw_pulse(phi) - lo) / (hi - lo)
}

/// Deterministic event schedule for the given params.
pub fn schedule_events(p: &SynthParams) -> Result<Vec<ScheduledEvent>, SynthError> {
    validate(p)?;
    if p.n_events == 0 {
        return Ok(Vec::new());
    }
    let mut rng = Rng::derive(p.seed, 0x5C4E_D01E);
    let head = p.precursor_lead_s + RAMP_S + 10.0;
    let tail = RAMP_S + 10.0;
    // Gap keeps the next precursor clear of the previous recovery.
    let gap = p.precursor_lead_s + 2.0 * RAMP_S + 30.0;

    for _attempt in 0..200 {
        let mut events: Vec<ScheduledEvent> = (0..p.n_events)
            .map(|_| {
                let below_s = rng.uniform(90.0, 180.0);
                let latest = p.duration_s - below_s - tail;
                ScheduledEvent {
                    onset_s: rng.uniform(head, latest.max(head)),
                    below_s,
                    nadir_mmhg: rng.uniform(55.0, 60.0),
                }
            })
            .collect();
        events.sort_by(|a, b| a.onset_s.partial_cmp(&b.onset_s).unwrap());
        let fits = events
            .iter()
            .all(|e| e.onset_s >= head && e.onset_s + e.below_s + tail <= p.duration_s)
            && events
                .windows(2)
                .all(|w| w[1].onset_s - (w[0].onset_s + w[0].below_s) >= gap);
        if fits {
            return Ok(events);
        }
    }
    Err(SynthError::Schedule(format!(
        "could not place {} events in {} s after rescheduling",
        p.n_events, p.duration_s
    )))
}

fn validate(p: &SynthParams) -> Result<(), SynthError> {
    if p.duration_s < 120.0 {
        return Err(SynthError::InvalidParams(format!(
            "duration {} s below 120 s",
            p.duration_s
        )));
    }
    if p.base_map_mmhg <= 75.0 {
        return Err(SynthError::InvalidParams(format!(
            "base MAP {} must exceed 75 mmHg",
            p.base_map_mmhg
        )));
    }
    if p.precursor_lead_s < 60.0 {
        return Err(SynthError::InvalidParams(format!(
            "precursor lead {} s below 60 s",
            p.precursor_lead_s
        )));
    }
    if !(20.0..=1000.0).contains(&p.sample_rate_hz) {
        return Err(SynthError::InvalidParams(format!(
            "sample rate {} Hz out of range",
            p.sample_rate_hz
        )));
    }
    Ok(())
}

/// Programmed MAP at time `t` for a given schedule. Piecewise linear:
/// base, a 30 s down-ramp crossing 65 exactly at the onset, a hold at the
/// nadir, and a symmetric 30 s up-ramp crossing 65 at onset + below_s.
pub fn map_trajectory(p: &SynthParams, events: &[ScheduledEvent], t: f64) -> f64 {
    let base = p.base_map_mmhg;
    for e in events {
        let span = base - e.nadir_mmhg;
        let down_start = e.onset_s - RAMP_S * (base - 65.0) / span;
        let hold_start = down_start + RAMP_S;
        let up_start = e.onset_s + e.below_s - RAMP_S * (65.0 - e.nadir_mmhg) / span;
        let up_end = up_start + RAMP_S;
        if t < down_start || t > up_end {
            continue;
        }
        if t < hold_start {
            return base - span * (t - down_start) / RAMP_S;
        }
        if t < up_start {
            return e.nadir_mmhg;
        }
        return e.nadir_mmhg + span * (t - up_start) / RAMP_S;
    }
    base
}

/// Precursor envelope in [0, 1]: ramps up through each lead window, holds
/// through the event, recovers over one ramp after it.
fn precursor_level(p: &SynthParams, events: &[ScheduledEvent], t: f64) -> f64 {
    for e in events {
        let start = e.onset_s - p.precursor_lead_s;
        let end = e.onset_s + e.below_s;
        if t >= start && t < e.onset_s {
            return (t - start) / p.precursor_lead_s;
        }
        if t >= e.onset_s && t <= end {
            return 1.0;
        }
        if t > end && t < end + RAMP_S {
            return 1.0 - (t - end) / RAMP_S;
        }
    }
    0.0
}

/// True while the spectral tone is active: the lead window before each
/// onset.
fn tone_active(p: &SynthParams, events: &[ScheduledEvent], t: f64) -> bool {
    events
        .iter()
        .any(|e| t >= e.onset_s - p.precursor_lead_s && t < e.onset_s)
}

/// Generate one 4-channel case. Fixed seed means bit-identical output.
pub fn gen_case(p: &SynthParams, case_id: &str) -> Result<WaveformCase, SynthError> {
    let events = schedule_events(p)?;
    let n = (p.duration_s * p.sample_rate_hz).floor() as usize + 1;
    let dt = 1.0 / p.sample_rate_hz;

    let mut abp = Vec::with_capacity(n);
    let mut ecg = Vec::with_capacity(n);
    let mut ppg = Vec::with_capacity(n);
    let mut co2 = Vec::with_capacity(n);

    let mut noise = [
        Rng::derive(p.seed, 1),
        Rng::derive(p.seed, 2),
        Rng::derive(p.seed, 3),
        Rng::derive(p.seed, 4),
    ];

    let mut phi = 0.0f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    for i in 0..n {
        let t = i as f64 * dt;
        let level = precursor_level(p, &events, t);
        let (pp_mult, hr_mult) = match p.precursor_kind {
            PrecursorKind::PpDecay => (1.0 - (1.0 - PP_DECAY_FACTOR) * level, 1.0),
            PrecursorKind::HrDrift => (1.0, 1.0 + (HR_DRIFT_FACTOR - 1.0) * level),
            PrecursorKind::SpectralTone => (1.0, 1.0),
        };
        let tone = if p.precursor_kind == PrecursorKind::SpectralTone && tone_active(p, &events, t)
        {
            (two_pi * TONE_HZ * t).sin()
        } else {
            0.0
        };

        let map_t = map_trajectory(p, &events, t);
        let pp = p.pulse_pressure_mmhg * pp_mult;
        abp.push(
            map_t + pp * pulse_shape(phi) + TONE_ABP_MMHG * tone
                + p.noise_sigma.abp * noise[0].gauss(),
        );

        // R-spike plus a small T-wave, phase-locked to the pulse.
        let wrapped = {
            let m = phi % two_pi;
            if m > std::f64::consts::PI {
                m - two_pi
            } else {
                m
            }
        };
        let spike = (-(wrapped / 0.12) * (wrapped / 0.12)).exp();
        let t_wave = 0.2 * (-((wrapped - 2.0) / 0.5) * ((wrapped - 2.0) / 0.5)).exp();
        ecg.push(spike + t_wave + p.noise_sigma.ecg * noise[1].gauss());

        ppg.push(
            pp_mult * pulse_shape01(phi - 0.5) + TONE_PPG * tone
                + p.noise_sigma.ppg * noise[2].gauss(),
        );

        // Capnogram-like plateau wave at 15 breaths/min.
        let resp = 40.0 / (1.0 + (-6.0 * (two_pi * 0.25 * t - 1.0).sin()).exp());
        co2.push(resp + p.noise_sigma.co2 * noise[3].gauss());

        phi += two_pi * p.hr_bpm * hr_mult / 60.0 * dt;
    }

    let mut channels = BTreeMap::new();
    let mk = |samples: Vec<f64>, units: &str| Channel {
        sample_rate_hz: p.sample_rate_hz,
        samples,
        units: units.to_string(),
    };
    channels.insert("ABP".to_string(), mk(abp, "mmHg"));
    channels.insert("ECG".to_string(), mk(ecg, "mV"));
    channels.insert("PPG".to_string(), mk(ppg, "a.u."));
    channels.insert("CO2".to_string(), mk(co2, "mmHg"));

    Ok(WaveformCase {
        case_id: case_id.to_string(),
        channels,
        event_truth_s: Some(events.iter().map(|e| e.onset_s).collect()),
    })
}

/// Add seeded Gaussian noise on top of an existing case; sigma 0 on a
/// channel leaves it bit-identical. Pure: returns a new case.
pub fn inject_noise(case: &WaveformCase, extra_sigma: &ChannelSigma, seed: u64) -> WaveformCase {
    let mut out = case.clone();
    let sigmas = [
        ("ABP", extra_sigma.abp),
        ("ECG", extra_sigma.ecg),
        ("PPG", extra_sigma.ppg),
        ("CO2", extra_sigma.co2),
    ];
    for (idx, (name, sigma)) in sigmas.iter().enumerate() {
        assert!(*sigma >= 0.0, "noise sigma must be nonnegative");
        if *sigma == 0.0 {
            continue;
        }
        if let Some(ch) = out.channels.get_mut(*name) {
            let mut rng = Rng::derive(seed, 0xA0D0 + idx as u64);
            for v in ch.samples.iter_mut() {
                *v += sigma * rng.gauss();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{beats_to_map, detect_peaks, find_events, PeakParams, PeriodKind};

    fn quiet_params(n_events: usize, duration_s: f64, seed: u64) -> SynthParams {
        SynthParams {
            duration_s,
            n_events,
            noise_sigma: ChannelSigma::zero(),
            seed,
            ..SynthParams::default()
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let p = SynthParams {
            seed: 33,
            duration_s: 300.0,
            n_events: 1,
            precursor_lead_s: 60.0,
            ..SynthParams::default()
        };
        let a = gen_case(&p, "case").unwrap();
        let b = gen_case(&p, "case").unwrap();
        for name in ["ABP", "ECG", "PPG", "CO2"] {
            assert_eq!(a.channels[name].samples, b.channels[name].samples);
        }
        assert_eq!(a.event_truth_s, b.event_truth_s);
    }

    #[test]
    fn quiet_case_recovers_base_map() {
        let p = quiet_params(0, 240.0, 5);
        let case = gen_case(&p, "quiet").unwrap();
        let abp = &case.channels["ABP"].samples;
        let peaks = detect_peaks(abp, &PeakParams::abp());
        let beats = beats_to_map(abp, &peaks).unwrap();
        assert!(beats.len() > 200);
        for &m in &beats.map {
            assert!(
                (m - p.base_map_mmhg).abs() < 0.5,
                "per-beat MAP {} drifted from base {}",
                m,
                p.base_map_mmhg
            );
        }
    }

    #[test]
    fn scheduled_events_are_recovered_by_labeling() {
        let p = quiet_params(2, 1800.0, 9);
        let case = gen_case(&p, "events").unwrap();
        let truth = case.event_truth_s.clone().unwrap();
        assert_eq!(truth.len(), 2);

        let abp = &case.channels["ABP"].samples;
        let peaks = detect_peaks(abp, &PeakParams::abp());
        let beats = beats_to_map(abp, &peaks).unwrap();
        let hypo: Vec<_> = find_events(&beats)
            .into_iter()
            .filter(|e| e.kind == PeriodKind::Hypotension)
            .collect();
        assert_eq!(hypo.len(), 2, "expected exactly the scheduled events");
        for (event, onset) in hypo.iter().zip(truth.iter()) {
            assert!(
                (event.start_s - onset).abs() < 5.0,
                "onset {} recovered at {}",
                onset,
                event.start_s
            );
        }
    }

    #[test]
    fn impossible_schedule_errors() {
        let p = SynthParams {
            duration_s: 400.0,
            n_events: 5,
            ..SynthParams::default()
        };
        assert!(matches!(
            gen_case(&p, "toomany"),
            Err(SynthError::Schedule(_))
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = SynthParams {
            base_map_mmhg: 70.0,
            ..SynthParams::default()
        };
        assert!(matches!(
            gen_case(&p, "bad"),
            Err(SynthError::InvalidParams(_))
        ));
    }

    #[test]
    fn inject_zero_noise_is_identity() {
        let p = quiet_params(0, 150.0, 3);
        let case = gen_case(&p, "id").unwrap();
        let same = inject_noise(&case, &ChannelSigma::zero(), 99);
        for name in ["ABP", "ECG", "PPG", "CO2"] {
            assert_eq!(case.channels[name].samples, same.channels[name].samples);
        }
    }

    #[test]
    fn injected_noise_raises_variance_by_sigma_squared() {
        let p = SynthParams {
            duration_s: 1000.0,
            n_events: 0,
            noise_sigma: ChannelSigma::zero(),
            ..SynthParams::default()
        };
        let case = gen_case(&p, "var").unwrap();
        let extra = ChannelSigma {
            abp: 5.0,
            ..ChannelSigma::zero()
        };
        let noisy = inject_noise(&case, &extra, 1234);
        let n = case.channels["ABP"].samples.len();
        assert!(n >= 100_000);
        let diffs: Vec<f64> = case.channels["ABP"]
            .samples
            .iter()
            .zip(noisy.channels["ABP"].samples.iter())
            .map(|(a, b)| b - a)
            .collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
        assert!(
            (var - 25.0).abs() < 2.5,
            "variance increase {} not within 10% of 25",
            var
        );
    }

    #[test]
    fn different_noise_seeds_share_events() {
        let p = quiet_params(1, 600.0, 77);
        let case = gen_case(&p, "base").unwrap();
        let extra = ChannelSigma {
            abp: 1.0,
            ..ChannelSigma::zero()
        };
        let a = inject_noise(&case, &extra, 1);
        let b = inject_noise(&case, &extra, 2);
        assert_ne!(a.channels["ABP"].samples, b.channels["ABP"].samples);
        assert_eq!(a.event_truth_s, b.event_truth_s);
    }

    #[test]
    fn pulse_shape_extremes_give_exact_sbp_dbp_split() {
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for i in 0..200_000 {
            let v = pulse_shape(2.0 * std::f64::consts::PI * i as f64 / 200_000.0);
            hi = hi.max(v);
            lo = lo.min(v);
        }
        assert!((hi - 2.0 / 3.0).abs() < 1e-6);
        assert!((lo + 1.0 / 3.0).abs() < 1e-6);
    }
}
