//! Generate a synthetic 4-channel case, print its event schedule, and
//! write it as a case directory (manifest.json + waveform.csv).
//!
//! Run with: cargo run --release --example generate_waveforms [out_dir]

use safdnet::labeling::{beats_to_map, detect_peaks, PeakParams};
use safdnet::signal_io;
use safdnet::synthgen::{gen_case, ChannelSigma, PrecursorKind, SynthParams};

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/example_case".to_string());

    let params = SynthParams {
        duration_s: 1200.0,
        hr_bpm: 78.0,
        base_map_mmhg: 92.0,
        pulse_pressure_mmhg: 42.0,
        n_events: 2,
        precursor_lead_s: 120.0,
        precursor_kind: PrecursorKind::PpDecay,
        noise_sigma: ChannelSigma::default(),
        sample_rate_hz: 100.0,
        seed: 7,
    };

    let case = gen_case(&params, "demo_case").expect("schedule fits");
    println!("case {}: {:.0} s at {} Hz", case.case_id, case.duration_s(), 100);
    for (name, ch) in &case.channels {
        let lo = ch.samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ch.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "  {:<4} {:>7} samples, range [{:>7.2}, {:>7.2}] {}",
            name,
            ch.samples.len(),
            lo,
            hi,
            ch.units
        );
    }
    println!("scheduled hypotension onsets (s): {:?}", case.event_truth_s);

    // Show what the labeling pipeline sees.
    let abp = &case.channels["ABP"].samples;
    let peaks = detect_peaks(abp, &PeakParams::abp());
    let beats = beats_to_map(abp, &peaks).expect("beats");
    let min_map = beats.map.iter().cloned().fold(f64::INFINITY, f64::min);
    println!(
        "detected {} beats; per-beat MAP range [{:.1}, {:.1}] mmHg",
        beats.len(),
        min_map,
        beats.map.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    );

    let dir = std::path::PathBuf::from(&out);
    signal_io::write_case(&dir, &case).expect("write case dir");
    println!("wrote {}", dir.display());
}
