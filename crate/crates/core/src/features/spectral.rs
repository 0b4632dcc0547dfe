//! Short-time power spectra, mel filterbank and DCT-II.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Scalar;

/// Number of frames for `n` samples without centering.
pub fn frame_count(n: usize, frame_len: usize, hop: usize) -> usize {
    if n < frame_len {
        0
    } else {
        1 + (n - frame_len) / hop
    }
}

/// Periodic Hann window.
pub fn hann<T: Scalar>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| T::lit(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Framed, windowed power spectrogram. Each frame holds `nfft / 2 + 1` bins.
pub struct Stft<T: Scalar> {
    frame_len: usize,
    hop: usize,
    nfft: usize,
    window: Vec<T>,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Scalar> Stft<T> {
    pub fn new(frame_len: usize, hop: usize, nfft: usize) -> Self {
        assert!(nfft >= frame_len && hop > 0 && frame_len > 0);
        Self {
            frame_len,
            hop,
            nfft,
            window: hann(frame_len),
            fft: FftPlanner::new().plan_fft_forward(nfft),
        }
    }

    pub fn bins(&self) -> usize {
        self.nfft / 2 + 1
    }

    pub fn nfft(&self) -> usize {
        self.nfft
    }

    pub fn power(&self, samples: &[T]) -> Vec<Vec<T>> {
        let frames = frame_count(samples.len(), self.frame_len, self.hop);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.nfft];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.fft.get_inplace_scratch_len()];
        (0..frames)
            .map(|f| {
                let frame = &samples[f * self.hop..f * self.hop + self.frame_len];
                for (b, (&x, &w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                    *b = Complex::new(x * w, T::zero());
                }
                for b in buf[self.frame_len..].iter_mut() {
                    *b = Complex::new(T::zero(), T::zero());
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                buf[..self.bins()].iter().map(|c| c.norm_sqr()).collect()
            })
            .collect()
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, equally spaced on the mel scale, peak weight 1.
#[derive(Debug, Clone)]
pub struct MelFilterbank<T> {
    /// `(first_bin, weights)` per filter.
    filters: Vec<(usize, Vec<T>)>,
}

impl<T: Scalar> MelFilterbank<T> {
    pub fn new(n_filters: usize, nfft: usize, sample_rate: f64, f_min: f64, f_max: f64) -> Self {
        let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_filters + 1) as f64))
            .collect();
        let bins = nfft / 2 + 1;
        let bin_hz = |k: usize| k as f64 * sample_rate / nfft as f64;
        let filters = (0..n_filters)
            .map(|m| {
                let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let mut first = None;
                let mut w = Vec::new();
                for k in 0..bins {
                    let f = bin_hz(k);
                    let v = ((f - lo) / (c - lo)).min((hi - f) / (hi - c));
                    if v > 0.0 {
                        first.get_or_insert(k);
                        w.push(T::lit(v));
                    } else if first.is_some() {
                        break;
                    }
                }
                (first.unwrap_or(0), w)
            })
            .collect();
        Self { filters }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn apply(&self, power: &[T]) -> Vec<T> {
        self.filters
            .iter()
            .map(|(start, w)| {
                w.iter()
                    .zip(&power[*start..])
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }
}

/// Orthonormal DCT-II keeping the first `n_out` coefficients.
#[derive(Debug, Clone)]
pub struct Dct<T> {
    basis: Vec<Vec<T>>,
}

impl<T: Scalar> Dct<T> {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        let basis = (0..n_out)
            .map(|k| {
                let s = if k == 0 {
                    (1.0 / n_in as f64).sqrt()
                } else {
                    (2.0 / n_in as f64).sqrt()
                };
                (0..n_in)
                    .map(|m| {
                        T::lit(
                            s * (std::f64::consts::PI * k as f64 * (m as f64 + 0.5) / n_in as f64).cos(),
                        )
                    })
                    .collect()
            })
            .collect();
        Self { basis }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        self.basis
            .iter()
            .map(|row| row.iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }
}
