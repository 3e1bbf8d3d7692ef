//! The evaluation toolkit on simulated scores: threshold-free metrics
//! with bootstrap intervals, a reliability table, and Platt rescaling of
//! overconfident predictions.
//!
//! Run with: cargo run --release --example metrics_toolkit

use safdnet::evaluation::{
    bootstrap_ci, calibration_curve, classify_metrics, platt_recalibrate, pr_auc, roc_auc,
};
use safdnet::rng::Rng;

fn main() {
    // Simulate a decent classifier: scores drawn per class.
    let mut rng = Rng::seed_from(42);
    let n = 2000;
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = (i % 3 == 0) as i32 as f64; // ~1:2 class ratio
        let base = if y == 1.0 { 0.65 } else { 0.35 };
        let s: f64 = base + 0.25 * rng.gauss();
        scores.push(s.clamp(0.001, 0.999));
        labels.push(y);
    }

    let auroc = roc_auc(&scores, &labels).unwrap();
    let auprc = pr_auc(&scores, &labels).unwrap();
    let (lo, hi) = bootstrap_ci(roc_auc, &scores, &labels, 1000, 7).unwrap();
    let m = classify_metrics(&scores, &labels, 0.5);
    println!("n = {}, prevalence = {:.3}", n, labels.iter().sum::<f64>() / n as f64);
    println!("AUROC {:.4} (95% CI {:.4}-{:.4})", auroc, lo, hi);
    println!("AUPRC {:.4}", auprc);
    println!(
        "at threshold 0.5: accuracy {:.3}, precision {:.3}, recall {:.3}, f1 {:.3}",
        m.accuracy, m.precision, m.recall, m.f1
    );

    println!("\nreliability bins (mean predicted vs observed):");
    for bin in calibration_curve(&scores, &labels, 10) {
        if bin.count > 0 {
            println!(
                "  [{:.1}, {:.1})  pred {:.3}  observed {:.3}  n={}",
                bin.bin_lo, bin.bin_hi, bin.mean_pred, bin.frac_pos, bin.count
            );
        }
    }

    // Make the scores overconfident, then undo it with Platt scaling.
    let overconfident: Vec<f64> = scores
        .iter()
        .map(|&s| {
            let z = (s / (1.0 - s)).ln() * 2.5;
            1.0 / (1.0 + (-z).exp())
        })
        .collect();
    let fit = platt_recalibrate(&overconfident, &labels).unwrap();
    println!(
        "\noverconfident scores (logits x2.5): fitted Platt slope a = {:.3}, intercept b = {:+.3}",
        fit.a, fit.b
    );
    let fixed = fit.apply_all(&overconfident);
    let dev = |s: &[f64]| -> f64 {
        calibration_curve(s, &labels, 10)
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| (b.mean_pred - b.frac_pos).abs())
            .fold(0.0, f64::max)
    };
    println!(
        "max reliability gap: before {:.3}, after recalibration {:.3}",
        dev(&overconfident),
        dev(&fixed)
    );
    println!(
        "AUROC unchanged by the monotone remap: {:.6} -> {:.6}",
        roc_auc(&overconfident, &labels).unwrap(),
        roc_auc(&fixed, &labels).unwrap()
    );
}
