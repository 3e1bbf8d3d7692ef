//! The adaptive filter stage in isolation: build a two-tone signal in
//! noise, then show how different mask settings reshape it.
//!
//! Run with: cargo run --release --example adaptive_filter

use safdnet::model::safb_forward;
use safdnet::numerics::fft::{n_bins, rfft};
use safdnet::numerics::Tensor;
use safdnet::rng::Rng;

fn band_energy(x: &[f64], lo_hz: f64, hi_hz: f64, fs: f64) -> f64 {
    let (re, im) = rfft(x).unwrap();
    let df = fs / x.len() as f64;
    (0..re.len())
        .filter(|&k| {
            let f = k as f64 * df;
            f >= lo_hz && f <= hi_hz
        })
        .map(|k| re[k] * re[k] + im[k] * im[k])
        .sum()
}

fn main() {
    let t = 1000;
    let fs = 100.0;
    let mut rng = Rng::seed_from(3);
    // 2 Hz "physiology" + 8 Hz "signature" + white noise.
    let signal: Vec<f64> = (0..t)
        .map(|i| {
            let ts = i as f64 / fs;
            3.0 * (2.0 * std::f64::consts::PI * 2.0 * ts).sin()
                + 0.8 * (2.0 * std::f64::consts::PI * 8.0 * ts).sin()
                + rng.gauss()
        })
        .collect();
    let x = Tensor::from_vec(&[1, t], signal);
    let bins = n_bins(t);
    let df = fs / t as f64;

    let report = |name: &str, y: &Tensor<f64>| {
        println!(
            "{:<22} energy@2Hz {:>10.0}   energy@8Hz {:>8.0}   broadband(20-50) {:>8.0}",
            name,
            band_energy(y.row(0), 1.8, 2.2, fs),
            band_energy(y.row(0), 7.8, 8.2, fs),
            band_energy(y.row(0), 20.0, 50.0, fs),
        );
    };
    report("input", &x);

    // Neutral mask (w = 0): everything at half gain.
    let neutral = safb_forward(&x, &Tensor::zeros(&[1, bins])).unwrap();
    report("mask 0.5 (w=0)", &neutral);

    // Hand-set band-pass around 8 Hz: open only bins near 8 Hz.
    let mut w = Tensor::filled(&[1, bins], -12.0);
    for k in 0..bins {
        let f = k as f64 * df;
        if (f - 8.0).abs() < 0.5 {
            w.set2(0, k, 12.0);
        }
    }
    let passed = safb_forward(&x, &w).unwrap();
    report("band-pass at 8 Hz", &passed);

    // Notch: suppress 8 Hz, keep the rest.
    let mut w = Tensor::filled(&[1, bins], 12.0);
    for k in 0..bins {
        let f = k as f64 * df;
        if (f - 8.0).abs() < 0.5 {
            w.set2(0, k, -12.0);
        }
    }
    let notched = safb_forward(&x, &w).unwrap();
    report("notch at 8 Hz", &notched);

    println!("\nthe mask is sigmoid(w): w=0 gives gain 0.5, ±12 saturates to ~0/1");
}
