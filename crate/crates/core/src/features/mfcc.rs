//! Mel-frequency cepstral coefficients and their fixed-length standardisation.

use serde::{Deserialize, Serialize};

use super::spectral::{frame_count, Dct, MelFilterbank, Stft};
use super::{FeatureSet, FeatureVector};
use crate::audio::{Recording, PIPELINE_RATE};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const N_MFCC: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccParams {
    pub window_samples: usize,
    pub hop_samples: usize,
    pub nfft: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
    pub n_coefficients: usize,
}

impl Default for MfccParams {
    /// 25 ms Hann window, 10 ms hop, 512-point FFT, 40 mel bands over 0-8 kHz.
    fn default() -> Self {
        Self {
            window_samples: 400,
            hop_samples: 160,
            nfft: 512,
            n_mels: 40,
            f_min: 0.0,
            f_max: 8000.0,
            log_floor: 1e-10,
            n_coefficients: N_MFCC,
        }
    }
}

/// Coefficient-major matrix: `n_coefficients` rows by `n_frames` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix<T> {
    data: Vec<T>,
    n_coefficients: usize,
    n_frames: usize,
    pub frame_rate: f64,
}

impl<T: Scalar> MfccMatrix<T> {
    pub fn n_coefficients(&self) -> usize {
        self.n_coefficients
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// All frames of coefficient `c`.
    pub fn coefficient(&self, c: usize) -> &[T] {
        &self.data[c * self.n_frames..(c + 1) * self.n_frames]
    }

    pub fn get(&self, c: usize, t: usize) -> T {
        self.data[c * self.n_frames + t]
    }

    pub fn frame(&self, t: usize) -> Vec<T> {
        (0..self.n_coefficients).map(|c| self.get(c, t)).collect()
    }

    fn from_frames(frames: Vec<Vec<T>>, n_coefficients: usize, frame_rate: f64) -> Self {
        let n_frames = frames.len();
        let mut data = vec![T::zero(); n_coefficients * n_frames];
        for (t, f) in frames.iter().enumerate() {
            for (c, &v) in f.iter().enumerate() {
                data[c * n_frames + t] = v;
            }
        }
        Self {
            data,
            n_coefficients,
            n_frames,
            frame_rate,
        }
    }
}

/// Reusable extractor holding the FFT plan, filterbank and DCT basis.
pub struct MfccExtractor<T: Scalar> {
    params: MfccParams,
    stft: Stft<T>,
    mel: MelFilterbank<T>,
    dct: Dct<T>,
}

impl<T: Scalar> MfccExtractor<T> {
    pub fn new(params: MfccParams) -> Self {
        let stft = Stft::new(params.window_samples, params.hop_samples, params.nfft);
        let mel = MelFilterbank::new(
            params.n_mels,
            params.nfft,
            PIPELINE_RATE as f64,
            params.f_min,
            params.f_max,
        );
        let dct = Dct::new(params.n_mels, params.n_coefficients);
        Self {
            params,
            stft,
            mel,
            dct,
        }
    }

    pub fn params(&self) -> &MfccParams {
        &self.params
    }

    /// Cepstra from an already computed power spectrum frame.
    pub fn cepstrum(&self, power: &[T]) -> Vec<T> {
        let floor = T::lit(self.params.log_floor);
        let logmel: Vec<T> = self.mel.apply(power).into_iter().map(|e| e.max(floor).ln()).collect();
        self.dct.apply(&logmel)
    }

    pub fn extract(&self, rec: &Recording<T>) -> Result<MfccMatrix<T>> {
        if rec.sample_rate != PIPELINE_RATE {
            return Err(Error::InvalidInput(format!(
                "MFCC extraction expects {PIPELINE_RATE} Hz audio, got {} Hz",
                rec.sample_rate
            )));
        }
        if frame_count(rec.len(), self.params.window_samples, self.params.hop_samples) == 0 {
            return Err(Error::TooShort {
                samples: rec.len(),
                required: self.params.window_samples,
            });
        }
        let frames: Vec<Vec<T>> = self
            .stft
            .power(&rec.samples)
            .iter()
            .map(|p| self.cepstrum(p))
            .collect();
        Ok(MfccMatrix::from_frames(
            frames,
            self.params.n_coefficients,
            PIPELINE_RATE as f64 / self.params.hop_samples as f64,
        ))
    }
}

pub fn extract_mfcc<T: Scalar>(rec: &Recording<T>, params: &MfccParams) -> Result<MfccMatrix<T>> {
    MfccExtractor::new(params.clone()).extract(rec)
}

/// Trims (keeping the head) or zero-pads to `target_frames` and flattens
/// coefficient-major: all frames of coefficient 0, then coefficient 1, ...
pub fn standardize_mfcc<T: Scalar>(m: &MfccMatrix<T>, target_frames: usize) -> FeatureVector<T> {
    let mut values = Vec::with_capacity(m.n_coefficients * target_frames);
    let mut names = Vec::with_capacity(values.capacity());
    for c in 0..m.n_coefficients {
        let coef = m.coefficient(c);
        for t in 0..target_frames {
            values.push(coef.get(t).copied().unwrap_or_else(T::zero));
            names.push(format!("mfcc{c}_t{t}"));
        }
    }
    FeatureVector {
        values,
        names,
        feature_set: FeatureSet::Mfcc,
    }
}

/// Rounded mean frame count over the training matrices.
pub fn mfcc_target_frames(frame_counts: &[usize]) -> Result<usize> {
    if frame_counts.is_empty() {
        return Err(Error::InvalidInput(
            "cannot derive MFCC target length from zero training recordings".into(),
        ));
    }
    let mean = frame_counts.iter().sum::<usize>() as f64 / frame_counts.len() as f64;
    Ok((mean.round() as usize).max(1))
}
