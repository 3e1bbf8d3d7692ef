//! Beat detection, per-beat MAP, and sustained-event finding on a
//! synthetic case with a known hypotension episode.
//!
//! Run with: cargo run --release --example peaks_and_events

use safdnet::labeling::{
    beats_to_map, build_dataset, detect_peaks, find_events, DatasetConfig, PeakParams, PeriodKind,
};
use safdnet::signal_io::Label;
use safdnet::synthgen::{gen_case, SynthParams};

fn main() {
    let params = SynthParams {
        duration_s: 1500.0,
        n_events: 2,
        seed: 11,
        ..SynthParams::default()
    };
    let case = gen_case(&params, "events_demo").expect("schedule fits");
    println!(
        "ground-truth onsets: {:?}",
        case.event_truth_s.as_deref().unwrap_or(&[])
    );

    let abp = &case.channels["ABP"].samples;
    let peaks = detect_peaks(abp, &PeakParams::for_channel("ABP", abp));
    println!("{} ABP peaks over {:.0} s", peaks.len(), case.duration_s());

    let beats = beats_to_map(abp, &peaks).expect("beats");
    println!(
        "first beat: t={:.2}s sbp={:.1} dbp={:.1} map={:.1}",
        beats.beat_times_s[0], beats.sbp[0], beats.dbp[0], beats.map[0]
    );

    println!("\nperiods (hypotension < 65 mmHg, nonhypotension > 75 mmHg, sustained >= 60 s):");
    for period in find_events(&beats) {
        let tag = match period.kind {
            PeriodKind::Hypotension => "HYPO ",
            PeriodKind::Nonhypotension => "nonhy",
            PeriodKind::Gray => "gray ",
        };
        println!(
            "  {}  [{:>8.2}, {:>8.2}] s  ({:.0} s)",
            tag,
            period.start_s,
            period.end_s,
            period.end_s - period.start_s
        );
    }

    let datasets = build_dataset(&case, &DatasetConfig::default()).expect("labeling");
    println!("\nhorizon-aligned samples (30 s windows):");
    for (h, segments) in &datasets {
        let pos = segments.iter().filter(|s| s.label == Label::Hypotension).count();
        println!(
            "  {:>2} min ahead: {} positives, {} negatives",
            h,
            pos,
            segments.len() - pos
        );
        for seg in segments.iter().filter(|s| s.label == Label::Hypotension) {
            println!(
                "      positive window [{:.0}, {:.0}] s targets onset at {:.0} s",
                seg.t_start,
                seg.t_start + 30.0,
                seg.t_start + 30.0 + *h as f64 * 60.0
            );
        }
    }
}
