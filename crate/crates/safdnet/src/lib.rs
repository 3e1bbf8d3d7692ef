//! Early warning of intraoperative hypotension from multi-channel biosignal
//! waveforms (ABP, ECG, PPG, CO2).
//!
//! The pipeline, end to end:
//!
//! 1. [`synthgen`] — seeded generator of physiologic-like 4-channel cases
//!    with ground-truth hypotension onsets and learnable pre-onset
//!    signatures.
//! 2. [`signal_io`] — case loading, resampling to 100 Hz, windowing into
//!    fixed-length segments, quality rejection, and the binary segment
//!    archive format.
//! 3. [`labeling`] — cardiac-cycle detection, per-beat mean arterial
//!    pressure, sustained hypotensive/nonhypotensive period finding with a
//!    65–75 mmHg gray zone, and horizon-aligned dataset assembly.
//! 4. [`model`] — the network: a trainable frequency-importance mask
//!    applied between an FFT/IFFT pair, dual CNN/LSTM paths fused by
//!    bidirectional cross-attention, and a sigmoid head, plus ablation
//!    variants.
//! 5. [`training`] — seeded mini-batch training with dev-set model
//!    selection and binary checkpoints.
//! 6. [`evaluation`] — AUROC/AUPRC/accuracy/F1 with bootstrap confidence
//!    intervals, calibration curves, and Platt recalibration.
//! 7. [`explain`] — exports of the learned frequency mask and Grad-CAM
//!    style time-domain sensitivity maps.
//!
//! Everything is built on [`numerics`], a small reverse-mode autodiff
//! engine whose every trainable operation is validated by a
//! finite-difference gradient checker, and [`rng`], a pinned deterministic
//! generator so that fixed seeds reproduce runs bit for bit.
//!
//! The `safdnet` binary exposes the same pipeline as subcommands; see
//! [`cli`]. Runnable walkthroughs live in `examples/`.

pub mod benchmark;
pub mod cli;
pub mod evaluation;
pub mod explain;
pub mod labeling;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod signal_io;
pub mod synthgen;
pub mod training;
