//! Waveform case I/O: loading case directories, resampling to the common
//! 100 Hz grid, slicing into fixed windows, segment quality rejection, and
//! the binary segment-archive format.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::labeling;
use crate::numerics::Tensor;

/// Channel order used everywhere a segment matrix is built.
pub const CHANNEL_NAMES: [&str; 4] = ["ABP", "ECG", "PPG", "CO2"];

/// The shared grid rate all signals are resampled onto.
pub const GRID_HZ: f64 = 100.0;

#[derive(Clone, Debug)]
pub struct Channel {
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
    pub units: String,
}

impl Channel {
    pub fn duration_s(&self) -> f64 {
        if self.samples.len() < 2 {
            0.0
        } else {
            (self.samples.len() - 1) as f64 / self.sample_rate_hz
        }
    }
}

#[derive(Clone, Debug)]
pub struct WaveformCase {
    pub case_id: String,
    pub channels: BTreeMap<String, Channel>,
    /// Ground-truth hypotension onset times, synthetic cases only.
    pub event_truth_s: Option<Vec<f64>>,
}

impl WaveformCase {
    pub fn channel(&self, name: &str) -> Result<&Channel, SignalError> {
        self.channels
            .get(name)
            .ok_or_else(|| SignalError::MissingChannel(name.to_string()))
    }

    /// Shortest channel duration; windowing never reads past this.
    pub fn duration_s(&self) -> f64 {
        self.channels
            .values()
            .map(Channel::duration_s)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_on_grid(&self) -> bool {
        self.channels
            .values()
            .all(|c| (c.sample_rate_hz - GRID_HZ).abs() < 1e-9)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Nonhypotension,
    Hypotension,
    Unlabeled,
}

impl Label {
    pub fn to_byte(self) -> u8 {
        match self {
            Label::Nonhypotension => 0,
            Label::Hypotension => 1,
            Label::Unlabeled => 255,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, SignalError> {
        match b {
            0 => Ok(Label::Nonhypotension),
            1 => Ok(Label::Hypotension),
            255 => Ok(Label::Unlabeled),
            other => Err(SignalError::Archive(format!("invalid label byte {}", other))),
        }
    }

    pub fn as_f64(self) -> Option<f64> {
        match self {
            Label::Nonhypotension => Some(0.0),
            Label::Hypotension => Some(1.0),
            Label::Unlabeled => None,
        }
    }
}

/// One model input: a (C, T) matrix on the 100 Hz grid.
#[derive(Clone, Debug)]
pub struct Segment {
    pub data: Tensor<f32>,
    pub t_start: f64,
    pub case_id: String,
    pub label: Label,
    pub horizon_min: u16,
    pub rejected_reason: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    Multi,
    AbpOnly,
}

impl ChannelMode {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            ChannelMode::Multi => &CHANNEL_NAMES,
            ChannelMode::AbpOnly => &CHANNEL_NAMES[..1],
        }
    }

    pub fn channels(self) -> usize {
        self.names().len()
    }
}

#[derive(Debug)]
pub enum SignalError {
    MissingChannel(String),
    Format(String),
    Upsampling { source_hz: f64, target_hz: f64 },
    NotResampled { rate_hz: f64 },
    Archive(String),
    Io(std::io::Error),
}

impl fmt::Display for SignalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalError::MissingChannel(name) => write!(f, "missing channel {}", name),
            SignalError::Format(msg) => write!(f, "format error: {}", msg),
            SignalError::Upsampling {
                source_hz,
                target_hz,
            } => write!(
                f,
                "upsampling unsupported: source {} Hz below target {} Hz",
                source_hz, target_hz
            ),
            SignalError::NotResampled { rate_hz } => {
                write!(f, "case not on the {} Hz grid (found {} Hz)", GRID_HZ, rate_hz)
            }
            SignalError::Archive(msg) => write!(f, "segment archive: {}", msg),
            SignalError::Io(e) => write!(f, "io error: {}", e),
        }
    }
}

impl std::error::Error for SignalError {}

impl From<std::io::Error> for SignalError {
    fn from(e: std::io::Error) -> Self {
        SignalError::Io(e)
    }
}

#[derive(Serialize, Deserialize)]
struct CaseManifest {
    case_id: String,
    sample_rate_hz: BTreeMap<String, f64>,
    units: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    event_truth_s: Option<Vec<f64>>,
}

/// Load a case directory containing `manifest.json` and `waveform.csv`.
pub fn load_case(dir: &Path) -> Result<WaveformCase, SignalError> {
    let manifest_text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: CaseManifest = serde_json::from_str(&manifest_text)
        .map_err(|e| SignalError::Format(format!("manifest.json: {}", e)))?;

    for name in CHANNEL_NAMES {
        if !manifest.sample_rate_hz.contains_key(name) {
            return Err(SignalError::MissingChannel(name.to_string()));
        }
        let rate = manifest.sample_rate_hz[name];
        if !(50.0..=1000.0).contains(&rate) {
            return Err(SignalError::Format(format!(
                "channel {} rate {} Hz outside [50, 1000]",
                name, rate
            )));
        }
    }
    match manifest.units.get("ABP") {
        Some(u) if u == "mmHg" => {}
        other => {
            return Err(SignalError::Format(format!(
                "ABP units must be mmHg, got {:?}",
                other
            )))
        }
    }
    // One shared time column means one shared rate per case.
    let rates: Vec<f64> = manifest.sample_rate_hz.values().copied().collect();
    if rates.iter().any(|r| (r - rates[0]).abs() > 1e-9) {
        return Err(SignalError::Format(
            "per-channel sample rates must match the shared time column".to_string(),
        ));
    }

    let csv_text = fs::read_to_string(dir.join("waveform.csv"))?;
    let mut lines = csv_text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SignalError::Format("waveform.csv is empty".to_string()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"time_s") {
        return Err(SignalError::Format(
            "waveform.csv must start with a time_s column".to_string(),
        ));
    }
    let mut col_idx = BTreeMap::new();
    for name in CHANNEL_NAMES {
        match cols.iter().position(|&c| c == name) {
            Some(idx) => {
                col_idx.insert(name.to_string(), idx);
            }
            None => return Err(SignalError::MissingChannel(name.to_string())),
        }
    }

    let mut samples: BTreeMap<String, Vec<f64>> = CHANNEL_NAMES
        .iter()
        .map(|&n| (n.to_string(), Vec::new()))
        .collect();
    let mut prev_time = f64::NEG_INFINITY;
    for (line_no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(SignalError::Format(format!(
                "waveform.csv line {}: expected {} fields, got {}",
                line_no + 2,
                cols.len(),
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, SignalError> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| SignalError::Format(format!("waveform.csv line {}: bad number {:?}", line_no + 2, s)))
        };
        let t = parse(fields[0])?;
        if t <= prev_time {
            return Err(SignalError::Format(format!(
                "waveform.csv line {}: time_s not strictly increasing",
                line_no + 2
            )));
        }
        prev_time = t;
        for (name, &idx) in &col_idx {
            samples.get_mut(name).unwrap().push(parse(fields[idx])?);
        }
    }

    let mut channels = BTreeMap::new();
    for name in CHANNEL_NAMES {
        let data = samples.remove(name).unwrap();
        if data.is_empty() {
            return Err(SignalError::Format(format!("channel {} is empty", name)));
        }
        channels.insert(
            name.to_string(),
            Channel {
                sample_rate_hz: manifest.sample_rate_hz[name],
                samples: data,
                units: manifest
                    .units
                    .get(name)
                    .cloned()
                    .unwrap_or_else(|| "a.u.".to_string()),
            },
        );
    }

    Ok(WaveformCase {
        case_id: manifest.case_id,
        channels,
        event_truth_s: manifest.event_truth_s,
    })
}

/// Write a case directory in the `load_case` format.
pub fn write_case(dir: &Path, case: &WaveformCase) -> Result<(), SignalError> {
    fs::create_dir_all(dir)?;
    let manifest = CaseManifest {
        case_id: case.case_id.clone(),
        sample_rate_hz: case
            .channels
            .iter()
            .map(|(k, v)| (k.clone(), v.sample_rate_hz))
            .collect(),
        units: case
            .channels
            .iter()
            .map(|(k, v)| (k.clone(), v.units.clone()))
            .collect(),
        event_truth_s: case.event_truth_s.clone(),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    let n = case
        .channels
        .values()
        .map(|c| c.samples.len())
        .min()
        .unwrap_or(0);
    let rate = case
        .channels
        .values()
        .next()
        .map(|c| c.sample_rate_hz)
        .unwrap_or(GRID_HZ);
    let mut out = String::with_capacity(n * 32);
    out.push_str("time_s,ABP,ECG,PPG,CO2\n");
    for i in 0..n {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i as f64 / rate,
            case.channels["ABP"].samples[i],
            case.channels["ECG"].samples[i],
            case.channels["PPG"].samples[i],
            case.channels["CO2"].samples[i],
        ));
    }
    fs::write(dir.join("waveform.csv"), out)?;
    Ok(())
}

/// Linear interpolation onto the uniform target grid. Downsampling only;
/// output length is floor(duration × target) + 1.
pub fn resample(channel: &Channel, target_hz: f64) -> Result<Channel, SignalError> {
    if channel.sample_rate_hz < target_hz {
        return Err(SignalError::Upsampling {
            source_hz: channel.sample_rate_hz,
            target_hz,
        });
    }
    let n = channel.samples.len();
    if n == 1 {
        return Ok(Channel {
            sample_rate_hz: target_hz,
            samples: channel.samples.clone(),
            units: channel.units.clone(),
        });
    }
    let duration = (n - 1) as f64 / channel.sample_rate_hz;
    let n_out = (duration * target_hz + 1e-9).floor() as usize + 1;
    let ratio = channel.sample_rate_hz / target_hz;
    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let pos = (i as f64 * ratio).min((n - 1) as f64);
        let i0 = pos.floor() as usize;
        let frac = pos - i0 as f64;
        let v = if frac == 0.0 {
            channel.samples[i0]
        } else {
            channel.samples[i0] + frac * (channel.samples[i0 + 1] - channel.samples[i0])
        };
        out.push(v);
    }
    Ok(Channel {
        sample_rate_hz: target_hz,
        samples: out,
        units: channel.units.clone(),
    })
}

/// Resample every channel of a case onto the 100 Hz grid.
pub fn resample_case(case: &WaveformCase) -> Result<WaveformCase, SignalError> {
    let mut channels = BTreeMap::new();
    for (name, ch) in &case.channels {
        channels.insert(name.clone(), resample(ch, GRID_HZ)?);
    }
    Ok(WaveformCase {
        case_id: case.case_id.clone(),
        channels,
        event_truth_s: case.event_truth_s.clone(),
    })
}

/// Cut a (C, T) segment starting at sample `start` from a grid-rate case.
/// Caller guarantees the window fits.
pub fn cut_segment(
    case: &WaveformCase,
    start: usize,
    t_len: usize,
    mode: ChannelMode,
) -> Result<Segment, SignalError> {
    let names = mode.names();
    let mut data = Tensor::zeros(&[names.len(), t_len]);
    for (c, &name) in names.iter().enumerate() {
        let ch = case.channel(name)?;
        let slice = &ch.samples[start..start + t_len];
        for (dst, &src) in data.row_mut(c).iter_mut().zip(slice.iter()) {
            *dst = src as f32;
        }
    }
    Ok(Segment {
        data,
        t_start: start as f64 / GRID_HZ,
        case_id: case.case_id.clone(),
        label: Label::Unlabeled,
        horizon_min: 0,
        rejected_reason: None,
    })
}

/// Non-overlapping (by default) aligned windows over a grid-rate case.
/// Cases shorter than one window yield an empty list.
pub fn segment_case(
    case: &WaveformCase,
    window_s: f64,
    stride_s: f64,
    mode: ChannelMode,
) -> Result<Vec<Segment>, SignalError> {
    for ch in case.channels.values() {
        if (ch.sample_rate_hz - GRID_HZ).abs() > 1e-9 {
            return Err(SignalError::NotResampled {
                rate_hz: ch.sample_rate_hz,
            });
        }
    }
    let t_len = (window_s * GRID_HZ).round() as usize;
    let stride = (stride_s * GRID_HZ).round() as usize;
    assert!(t_len > 0 && stride > 0, "window and stride must be positive");

    let n = mode
        .names()
        .iter()
        .map(|&name| case.channels.get(name).map_or(0, |c| c.samples.len()))
        .min()
        .unwrap_or(0);

    let mut out = Vec::new();
    let mut start = 0;
    while start + t_len <= n {
        out.push(cut_segment(case, start, t_len, mode)?);
        start += stride;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RejectReason {
    UndetectableRhythm,
    RateTooLow,
    RateTooHigh,
    MapTooLow,
    MapTooHigh,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::UndetectableRhythm => "undetectable rhythm",
            RejectReason::RateTooLow => "rate<30bpm",
            RejectReason::RateTooHigh => "rate>180bpm",
            RejectReason::MapTooLow => "MAP<20",
            RejectReason::MapTooHigh => "MAP>160",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SegmentCheck {
    Accept,
    Reject(RejectReason),
}

/// Quality gate over one segment given its ABP peak indices (precomputed
/// with `labeling::detect_peaks`). Pure: never mutates the segment.
pub fn validate_segment(segment: &Segment, abp_peaks: &[usize]) -> SegmentCheck {
    if abp_peaks.len() < 5 {
        return SegmentCheck::Reject(RejectReason::UndetectableRhythm);
    }
    let abp: Vec<f64> = segment.data.row(0).iter().map(|&v| v as f64).collect();
    let span_s = (abp_peaks[abp_peaks.len() - 1] - abp_peaks[0]) as f64 / GRID_HZ;
    if span_s <= 0.0 {
        return SegmentCheck::Reject(RejectReason::UndetectableRhythm);
    }
    let rate_bpm = 60.0 * (abp_peaks.len() - 1) as f64 / span_s;
    if rate_bpm < 30.0 {
        return SegmentCheck::Reject(RejectReason::RateTooLow);
    }
    if rate_bpm > 180.0 {
        return SegmentCheck::Reject(RejectReason::RateTooHigh);
    }
    let beats = match labeling::beats_to_map(&abp, abp_peaks) {
        Ok(b) => b,
        Err(_) => return SegmentCheck::Reject(RejectReason::UndetectableRhythm),
    };
    for &m in &beats.map {
        if m < 20.0 {
            return SegmentCheck::Reject(RejectReason::MapTooLow);
        }
        if m > 160.0 {
            return SegmentCheck::Reject(RejectReason::MapTooHigh);
        }
    }
    SegmentCheck::Accept
}

const ARCHIVE_MAGIC: &[u8; 4] = b"SAFD";
const ARCHIVE_VERSION: u32 = 1;

/// Write segments to the binary archive format (little-endian):
/// magic `SAFD`, u32 version, u32 n_segments, u32 C, u32 T; then per
/// segment f32[C×T] row-major, u8 label, u16 horizon_min, u32 case-id
/// length + UTF-8 bytes, f64 t_start.
pub fn write_segments(path: &Path, segments: &[Segment]) -> Result<(), SignalError> {
    let (c, t) = match segments.first() {
        Some(s) => (s.data.rows() as u32, s.data.cols() as u32),
        None => (0, 0),
    };
    for s in segments {
        if s.data.rows() as u32 != c || s.data.cols() as u32 != t {
            return Err(SignalError::Archive(
                "segments in one archive must share (C, T)".to_string(),
            ));
        }
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(ARCHIVE_MAGIC);
    buf.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(segments.len() as u32).to_le_bytes());
    buf.extend_from_slice(&c.to_le_bytes());
    buf.extend_from_slice(&t.to_le_bytes());
    for s in segments {
        for &v in s.data.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.push(s.label.to_byte());
        buf.extend_from_slice(&s.horizon_min.to_le_bytes());
        let id = s.case_id.as_bytes();
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id);
        buf.extend_from_slice(&s.t_start.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SignalError> {
        if self.pos + n > self.buf.len() {
            return Err(SignalError::Archive("truncated archive".to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SignalError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16, SignalError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, SignalError> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64, SignalError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_segments(path: &Path) -> Result<Vec<Segment>, SignalError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = ByteReader {
        buf: &bytes,
        pos: 0,
    };
    if r.take(4)? != ARCHIVE_MAGIC {
        return Err(SignalError::Archive("bad magic".to_string()));
    }
    let version = r.u32()?;
    if version != ARCHIVE_VERSION {
        return Err(SignalError::Archive(format!("unsupported version {}", version)));
    }
    let n_segments = r.u32()? as usize;
    let c = r.u32()? as usize;
    let t = r.u32()? as usize;

    let mut out = Vec::with_capacity(n_segments);
    for _ in 0..n_segments {
        let raw = r.take(c * t * 4)?;
        let mut data = Vec::with_capacity(c * t);
        for chunk in raw.chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        let label = Label::from_byte(r.u8()?)?;
        let horizon_min = r.u16()?;
        let id_len = r.u32()? as usize;
        let case_id = String::from_utf8(r.take(id_len)?.to_vec())
            .map_err(|_| SignalError::Archive("case id not UTF-8".to_string()))?;
        let t_start = r.f64()?;
        out.push(Segment {
            data: Tensor::from_vec(&[c, t], data),
            t_start,
            case_id,
            label,
            horizon_min,
            rejected_reason: None,
        });
    }
    if r.pos != bytes.len() {
        return Err(SignalError::Archive("trailing bytes after segments".to_string()));
    }
    Ok(out)
}
