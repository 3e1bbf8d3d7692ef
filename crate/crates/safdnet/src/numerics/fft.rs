//! Real-input FFT pair on the half spectrum (F = ⌊T/2⌋ + 1 bins).
//!
//! Conventions, fixed across the whole crate:
//! - forward transform is unnormalized (bin 0 is the plain sum of samples),
//! - inverse carries the 1/T factor, so `irfft(rfft(x), T) == x`,
//! - gradients flow through the pair via the adjoint linear maps below,
//!   never via numerical differentiation.
//!
//! Transforms are computed in f64 regardless of the caller's scalar type;
//! rustfft supplies the underlying complex FFT.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::scalar::Scalar;
use super::tensor::Tensor;
use super::NumericsError;

/// Half-spectrum of a (C, T) real signal: shape (C, F) with parallel
/// real/imaginary storage.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum<S> {
    pub rows: usize,
    pub bins: usize,
    pub re: Vec<S>,
    pub im: Vec<S>,
}

impl<S: Scalar> ComplexSpectrum<S> {
    pub fn zeros(rows: usize, bins: usize) -> Self {
        ComplexSpectrum {
            rows,
            bins,
            re: vec![S::ZERO; rows * bins],
            im: vec![S::ZERO; rows * bins],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.re.iter().all(|v| v.is_finite()) && self.im.iter().all(|v| v.is_finite())
    }
}

/// Number of half-spectrum bins for a length-T signal.
pub fn n_bins(t: usize) -> usize {
    t / 2 + 1
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(t: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(t))
}

fn inverse_plan(t: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(t))
}

/// Unnormalized forward transform of one real row; returns (re, im) of the
/// half spectrum.
pub fn rfft<S: Scalar>(x: &[S]) -> Result<(Vec<S>, Vec<S>), NumericsError> {
    let t = x.len();
    if t < 2 {
        return Err(NumericsError::InvalidLength {
            what: "rfft input",
            len: t,
            expected: "at least 2 samples".to_string(),
        });
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v.to_f64(), 0.0)).collect();
    forward_plan(t).process(&mut buf);
    let f = n_bins(t);
    let re = buf[..f].iter().map(|c| S::from_f64(c.re)).collect();
    let im = buf[..f].iter().map(|c| S::from_f64(c.im)).collect();
    Ok((re, im))
}

/// 1/T-normalized inverse of one half-spectrum row.
pub fn irfft<S: Scalar>(re: &[S], im: &[S], t: usize) -> Result<Vec<S>, NumericsError> {
    let f = n_bins(t);
    if re.len() != f || im.len() != f {
        return Err(NumericsError::InvalidLength {
            what: "irfft input",
            len: re.len(),
            expected: format!("{} bins for T = {}", f, t),
        });
    }
    // Rebuild the full spectrum by Hermitian symmetry; imaginary parts of
    // the DC and (even-T) Nyquist bins never reach the real output.
    let mut buf = vec![Complex::new(0.0, 0.0); t];
    for k in 0..f {
        buf[k] = Complex::new(re[k].to_f64(), im[k].to_f64());
    }
    for k in f..t {
        let src = buf[t - k];
        buf[k] = Complex::new(src.re, -src.im);
    }
    inverse_plan(t).process(&mut buf);
    let inv_t = 1.0 / t as f64;
    Ok(buf.iter().map(|c| S::from_f64(c.re * inv_t)).collect())
}

/// Per-bin weight of one half-spectrum bin in the inverse reconstruction:
/// 1 for DC and the even-T Nyquist bin, 2 for every interior bin.
fn bin_weight(k: usize, t: usize) -> f64 {
    let f = n_bins(t);
    if k == 0 || (t.is_multiple_of(2) && k == f - 1) {
        1.0
    } else {
        2.0
    }
}

/// Adjoint of `irfft` as a linear map R^{2F} -> R^T: given the cotangent of
/// the time-domain output, returns the cotangent of the stored (re, im)
/// half-spectrum. Reduces to a scaled forward transform.
pub fn irfft_adjoint<S: Scalar>(grad_time: &[S]) -> Result<(Vec<S>, Vec<S>), NumericsError> {
    let t = grad_time.len();
    let (mut re, mut im) = rfft::<f64>(&grad_time.iter().map(|v| v.to_f64()).collect::<Vec<_>>())?;
    let inv_t = 1.0 / t as f64;
    for k in 0..re.len() {
        let w = bin_weight(k, t) * inv_t;
        re[k] *= w;
        im[k] *= w;
    }
    // DC and even-T Nyquist imaginary parts do not influence irfft output.
    im[0] = 0.0;
    if t.is_multiple_of(2) {
        let last = im.len() - 1;
        im[last] = 0.0;
    }
    Ok((
        re.into_iter().map(S::from_f64).collect(),
        im.into_iter().map(S::from_f64).collect(),
    ))
}

/// Adjoint of `rfft` as a linear map R^T -> R^{2F}: given the cotangent of
/// the half spectrum, returns the cotangent of the time-domain input.
/// Reduces to a scaled inverse transform.
pub fn rfft_adjoint<S: Scalar>(
    grad_re: &[S],
    grad_im: &[S],
    t: usize,
) -> Result<Vec<S>, NumericsError> {
    let f = n_bins(t);
    if grad_re.len() != f || grad_im.len() != f {
        return Err(NumericsError::InvalidLength {
            what: "rfft_adjoint input",
            len: grad_re.len(),
            expected: format!("{} bins for T = {}", f, t),
        });
    }
    let re: Vec<f64> = (0..f)
        .map(|k| grad_re[k].to_f64() * t as f64 / bin_weight(k, t))
        .collect();
    let im: Vec<f64> = (0..f)
        .map(|k| grad_im[k].to_f64() * t as f64 / bin_weight(k, t))
        .collect();
    let out = irfft::<f64>(&re, &im, t)?;
    Ok(out.into_iter().map(S::from_f64).collect())
}

/// Forward transform of every channel of a (C, T) tensor.
pub fn rfft_channels<S: Scalar>(x: &Tensor<S>) -> Result<ComplexSpectrum<S>, NumericsError> {
    let (c, t) = (x.rows(), x.cols());
    let f = n_bins(t);
    let mut out = ComplexSpectrum::zeros(c, f);
    for ch in 0..c {
        let (re, im) = rfft(x.row(ch))?;
        out.re[ch * f..(ch + 1) * f].copy_from_slice(&re);
        out.im[ch * f..(ch + 1) * f].copy_from_slice(&im);
    }
    Ok(out)
}

/// Inverse transform of every channel back to a (C, T) tensor.
pub fn irfft_channels<S: Scalar>(
    spec: &ComplexSpectrum<S>,
    t: usize,
) -> Result<Tensor<S>, NumericsError> {
    let f = spec.bins;
    let mut out = Tensor::zeros(&[spec.rows, t]);
    for ch in 0..spec.rows {
        let row = irfft(&spec.re[ch * f..(ch + 1) * f], &spec.im[ch * f..(ch + 1) * f], t)?;
        out.row_mut(ch).copy_from_slice(&row);
    }
    Ok(out)
}
