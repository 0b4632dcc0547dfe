//! 88-slot acoustic parameter vector.
//!
//! The slots cover the descriptor families of the extended Geneva minimalistic
//! acoustic parameter set with formula-level definitions given here:
//!
//! * pitch: autocorrelation F0 (60-500 Hz) on 40 ms windows every 10 ms,
//!   summarised in Hz and in semitones relative to 27.5 Hz;
//! * loudness: `(frame power)^0.3` on 25 ms Hann frames every 10 ms;
//! * voice quality: local jitter, RAP, PPQ5, local shimmer (ratio and dB),
//!   APQ3, APQ5, autocorrelation HNR, H1-H2 and H1-A3 harmonic differences;
//! * formants F1-F3 from order-18 LPC roots on voiced frames;
//! * spectral shape: centroid, flux of the sum-normalised magnitude spectrum,
//!   alpha ratio (50-1000 Hz vs 1-5 kHz energy), Hammarberg index (peak
//!   0-2 kHz vs peak 2-5 kHz), dB spectral slope per kHz in 0-500 Hz and
//!   500-1500 Hz, 85 % roll-off; split into voiced and unvoiced frames;
//! * cepstral: MFCC 1-4;
//! * temporal: voiced fraction, voiced-run rate and lengths, unvoiced-run
//!   lengths, loudness peak rate, equivalent sound level.
//!
//! Slots that depend on a voiced frame are NaN (missing) when no frame is voiced.

use rustfft::num_complex::Complex;

use super::mfcc::{MfccExtractor, MfccParams};
use super::pitch::{find_pulses, perturbation, track_pitch, PitchTrack};
use super::spectral::Stft;
use super::{FeatureSet, FeatureVector};
use crate::audio::{Recording, PIPELINE_RATE};
use crate::scalar::Scalar;

pub const ACOUSTIC_DIM: usize = 88;

pub const ACOUSTIC_SLOTS: [&str; ACOUSTIC_DIM] = [
    // pitch (12)
    "f0_mean_hz",
    "f0_stddev_hz",
    "f0_semitone_mean",
    "f0_semitone_stddev_norm",
    "f0_semitone_p20",
    "f0_semitone_p50",
    "f0_semitone_p80",
    "f0_semitone_range_p20_p80",
    "f0_rising_slope_mean",
    "f0_rising_slope_stddev",
    "f0_falling_slope_mean",
    "f0_falling_slope_stddev",
    // loudness (10)
    "loudness_mean",
    "loudness_stddev_norm",
    "loudness_p20",
    "loudness_p50",
    "loudness_p80",
    "loudness_range_p20_p80",
    "loudness_rising_slope_mean",
    "loudness_rising_slope_stddev",
    "loudness_falling_slope_mean",
    "loudness_falling_slope_stddev",
    // voice quality (13)
    "jitter_local",
    "jitter_rap",
    "jitter_ppq5",
    "jitter_ddp",
    "shimmer_local",
    "shimmer_local_db",
    "shimmer_apq3",
    "shimmer_apq5",
    "shimmer_dda",
    "hnr_mean_db",
    "hnr_stddev_db",
    "h1_h2_db",
    "h1_a3_db",
    // formants (9)
    "f1_mean_hz",
    "f2_mean_hz",
    "f3_mean_hz",
    "f1_bandwidth_hz",
    "f2_bandwidth_hz",
    "f3_bandwidth_hz",
    "f1_stddev_norm",
    "f2_stddev_norm",
    "f3_stddev_norm",
    // spectral, all frames (8)
    "spectral_centroid_mean",
    "spectral_centroid_stddev",
    "spectral_flux_mean",
    "spectral_flux_stddev_norm",
    "alpha_ratio_mean",
    "hammarberg_index_mean",
    "slope_0_500_mean",
    "slope_500_1500_mean",
    // spectral, voiced frames (10)
    "alpha_ratio_voiced_mean",
    "alpha_ratio_voiced_stddev_norm",
    "hammarberg_index_voiced_mean",
    "hammarberg_index_voiced_stddev_norm",
    "slope_0_500_voiced_mean",
    "slope_0_500_voiced_stddev_norm",
    "slope_500_1500_voiced_mean",
    "slope_500_1500_voiced_stddev_norm",
    "spectral_flux_voiced_mean",
    "spectral_flux_voiced_stddev_norm",
    // spectral, unvoiced frames (5)
    "alpha_ratio_unvoiced_mean",
    "hammarberg_index_unvoiced_mean",
    "slope_0_500_unvoiced_mean",
    "slope_500_1500_unvoiced_mean",
    "spectral_flux_unvoiced_mean",
    // cepstral (12)
    "mfcc1_mean",
    "mfcc2_mean",
    "mfcc3_mean",
    "mfcc4_mean",
    "mfcc1_stddev",
    "mfcc2_stddev",
    "mfcc3_stddev",
    "mfcc4_stddev",
    "mfcc1_voiced_mean",
    "mfcc2_voiced_mean",
    "mfcc3_voiced_mean",
    "mfcc4_voiced_mean",
    // temporal (9)
    "voiced_fraction",
    "voiced_segments_per_sec",
    "voiced_segment_length_mean_sec",
    "voiced_segment_length_stddev_sec",
    "unvoiced_segment_length_mean_sec",
    "unvoiced_segment_length_stddev_sec",
    "loudness_peaks_per_sec",
    "equivalent_sound_level_db",
    "spectral_rolloff85_mean",
];

/// Index of a named slot.
pub fn slot(name: &str) -> Option<usize> {
    ACOUSTIC_SLOTS.iter().position(|s| *s == name)
}

const NAN: f64 = f64::NAN;
const LPC_ORDER: usize = 18;

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Population standard deviation.
fn std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Coefficient of variation; 0 when the values are constant.
fn std_norm(v: &[f64]) -> f64 {
    let (m, s) = (mean(v), std(v));
    if s == 0.0 {
        0.0
    } else {
        s / m.abs()
    }
}

/// Linear-interpolated percentile, `q` in [0, 1].
fn percentile(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

/// Mean and standard deviation of rising and falling per-second slopes of a
/// contour, computed over consecutive frames inside each run.
fn slope_stats(runs: &[Vec<f64>], frame_rate: f64) -> [f64; 4] {
    let mut rise = Vec::new();
    let mut fall = Vec::new();
    for r in runs {
        for w in r.windows(2) {
            let d = (w[1] - w[0]) * frame_rate;
            if d > 0.0 {
                rise.push(d);
            } else if d < 0.0 {
                fall.push(-d);
            }
        }
    }
    let z = |v: &[f64], f: fn(&[f64]) -> f64| if v.is_empty() { 0.0 } else { f(v) };
    [z(&rise, mean), z(&rise, std), z(&fall, mean), z(&fall, std)]
}

struct FrameSpectrum {
    centroid: f64,
    alpha: f64,
    hammarberg: f64,
    slope_lo: f64,
    slope_hi: f64,
    rolloff: f64,
    flux: Option<f64>,
}

fn band_slope_db_per_khz(power: &[f64], bin_hz: f64, lo: f64, hi: f64) -> f64 {
    let pts: Vec<(f64, f64)> = power
        .iter()
        .enumerate()
        .map(|(k, &p)| (k as f64 * bin_hz, p))
        .filter(|(f, _)| *f >= lo && *f <= hi)
        .map(|(f, p)| (f / 1000.0, 10.0 * p.max(1e-20).log10()))
        .collect();
    if pts.len() < 2 {
        return NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn frame_spectrum(power: &[f64], bin_hz: f64, prev_mag: Option<&[f64]>) -> (FrameSpectrum, Vec<f64>) {
    let total: f64 = power.iter().sum();
    let mag_sum: f64 = power.iter().map(|p| p.sqrt()).sum();
    let mag: Vec<f64> = if mag_sum > 0.0 {
        power.iter().map(|p| p.sqrt() / mag_sum).collect()
    } else {
        vec![0.0; power.len()]
    };
    let flux = prev_mag.map(|pm| pm.iter().zip(&mag).map(|(a, b)| (b - a) * (b - a)).sum());
    if total <= 0.0 {
        let s = FrameSpectrum {
            centroid: NAN,
            alpha: NAN,
            hammarberg: NAN,
            slope_lo: NAN,
            slope_hi: NAN,
            rolloff: NAN,
            flux: None,
        };
        return (s, mag);
    }
    let band = |lo: f64, hi: f64| -> (f64, f64) {
        let mut sum = 0.0;
        let mut max = 0.0f64;
        for (k, &p) in power.iter().enumerate() {
            let f = k as f64 * bin_hz;
            if f >= lo && f < hi {
                sum += p;
                max = max.max(p);
            }
        }
        (sum, max)
    };
    let (lo_sum, _) = band(50.0, 1000.0);
    let (hi_sum, _) = band(1000.0, 5000.0);
    let (_, lo_max) = band(0.0, 2000.0);
    let (_, hi_max) = band(2000.0, 5000.0);
    let ratio_db = |a: f64, b: f64| {
        if a > 0.0 && b > 0.0 {
            10.0 * (a / b).log10()
        } else {
            NAN
        }
    };
    let centroid = power.iter().enumerate().map(|(k, p)| k as f64 * bin_hz * p).sum::<f64>() / total;
    let mut acc = 0.0;
    let mut rolloff = NAN;
    for (k, &p) in power.iter().enumerate() {
        acc += p;
        if acc >= 0.85 * total {
            rolloff = k as f64 * bin_hz;
            break;
        }
    }
    let s = FrameSpectrum {
        centroid,
        alpha: ratio_db(lo_sum, hi_sum),
        hammarberg: ratio_db(lo_max, hi_max),
        slope_lo: band_slope_db_per_khz(power, bin_hz, 0.0, 500.0),
        slope_hi: band_slope_db_per_khz(power, bin_hz, 500.0, 1500.0),
        rolloff,
        flux,
    };
    (s, mag)
}

/// Autocorrelation LPC via Levinson-Durbin; returns `a[1..=order]` of
/// `A(z) = 1 + a1 z^-1 + ...`.
fn lpc(x: &[f64], order: usize) -> Option<Vec<f64>> {
    let n = x.len();
    if n <= order {
        return None;
    }
    let r: Vec<f64> = (0..=order)
        .map(|k| (0..n - k).map(|i| x[i] * x[i + k]).sum())
        .collect();
    if r[0] <= 0.0 {
        return None;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0] * (1.0 + 1e-9);
    for i in 1..=order {
        let acc: f64 = (1..i).map(|j| a[j] * r[i - j]).sum::<f64>() + r[i];
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            return None;
        }
    }
    Some(a[1..].to_vec())
}

/// Roots of the monic polynomial `z^n + c[0] z^(n-1) + ... + c[n-1]` (Durand-Kerner).
fn poly_roots(c: &[f64]) -> Vec<Complex<f64>> {
    let n = c.len();
    let eval = |z: Complex<f64>| c.iter().fold(Complex::new(1.0, 0.0), |acc, &ci| acc * z + ci);
    let seed = Complex::new(0.4, 0.9);
    let mut roots: Vec<Complex<f64>> = (0..n).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let mut den = Complex::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    den *= roots[i] - roots[j];
                }
            }
            if den.norm() < 1e-300 {
                den = Complex::new(1e-12, 0.0);
            }
            let step = eval(roots[i]) / den;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-12 {
            break;
        }
    }
    roots
}

/// F1-F3 (frequency, bandwidth) from one frame.
fn formants(frame: &[f64], fs: f64) -> Option<[(f64, f64); 3]> {
    let n = frame.len();
    let x: Vec<f64> = (0..n)
        .map(|i| {
            let pre = if i == 0 { frame[0] } else { frame[i] - 0.97 * frame[i - 1] };
            let w = 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
            pre * w
        })
        .collect();
    let a = lpc(&x, LPC_ORDER)?;
    let mut cands: Vec<(f64, f64)> = poly_roots(&a)
        .into_iter()
        .filter(|z| z.im > 0.0 && z.norm().is_finite())
        .map(|z| {
            let f = z.im.atan2(z.re) * fs / (2.0 * std::f64::consts::PI);
            let bw = -z.norm().ln() * fs / std::f64::consts::PI;
            (f, bw)
        })
        .filter(|&(f, bw)| f > 90.0 && f < fs / 2.0 - 50.0 && bw > 0.0 && bw < 600.0)
        .collect();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    (cands.len() >= 3).then(|| [cands[0], cands[1], cands[2]])
}

fn peak_db_near(power: &[f64], bin_hz: f64, centre: f64, half_width: f64) -> f64 {
    let lo = ((centre - half_width) / bin_hz).ceil().max(0.0) as usize;
    let hi = (((centre + half_width) / bin_hz).floor() as usize).min(power.len() - 1);
    if lo > hi {
        return NAN;
    }
    let m = power[lo..=hi].iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        10.0 * m.log10()
    } else {
        NAN
    }
}

fn runs_of(track: &PitchTrack, voiced: bool) -> Vec<f64> {
    let hop_s = track.hop as f64 / PIPELINE_RATE as f64;
    let r = if voiced { track.voiced_runs() } else { track.unvoiced_runs() };
    r.into_iter().map(|(a, b)| (b - a) as f64 * hop_s).collect()
}

pub fn extract_acoustic<T: Scalar>(rec: &Recording<T>) -> FeatureVector<T> {
    let x: Vec<f64> = rec.samples.iter().map(|v| v.as_f64()).collect();
    let values = acoustic_values(&x, rec.sample_rate);
    FeatureVector {
        values: values.into_iter().map(T::lit).collect(),
        names: ACOUSTIC_SLOTS.iter().map(|s| s.to_string()).collect(),
        feature_set: FeatureSet::Acoustic,
    }
}

fn acoustic_values(x: &[f64], sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let duration = x.len() as f64 / fs;
    let params = MfccParams::default();
    let hop = params.hop_samples;
    let frame_rate = fs / hop as f64;
    let stft = Stft::<f64>::new(params.window_samples, hop, params.nfft);
    let bin_hz = fs / params.nfft as f64;
    let mfcc = MfccExtractor::<f64>::new(params.clone());

    let track = track_pitch(x, sample_rate);
    // STFT frame centre -> nearest pitch frame
    let pitch_of = |f: usize| -> Option<f64> {
        let centre = (f * hop) as f64 + params.window_samples as f64 / 2.0;
        let k = ((centre - track.window as f64 / 2.0) / track.hop as f64).round();
        if k < 0.0 {
            return track.frames.first().and_then(|fr| fr.f0);
        }
        track.frames.get(k as usize).or(track.frames.last()).and_then(|fr| fr.f0)
    };

    let mut out = Vec::with_capacity(ACOUSTIC_DIM);

    // pitch
    let f0: Vec<f64> = track.frames.iter().filter_map(|f| f.f0).collect();
    let semis: Vec<f64> = f0.iter().map(|f| 12.0 * (f / 27.5).log2()).collect();
    let semitone_runs: Vec<Vec<f64>> = track
        .voiced_runs()
        .into_iter()
        .map(|(a, b)| {
            track.frames[a..b]
                .iter()
                .map(|fr| 12.0 * (fr.f0.unwrap() / 27.5).log2())
                .collect()
        })
        .collect();
    if f0.is_empty() {
        out.extend([NAN; 12]);
    } else {
        let p20 = percentile(&semis, 0.2);
        let p80 = percentile(&semis, 0.8);
        out.extend([
            mean(&f0),
            std(&f0),
            mean(&semis),
            std_norm(&semis),
            p20,
            percentile(&semis, 0.5),
            p80,
            p80 - p20,
        ]);
        out.extend(slope_stats(&semitone_runs, 1.0 / PITCH_HOP));
    }

    // loudness and spectra
    let power = stft.power(x);
    let loud: Vec<f64> = power
        .iter()
        .map(|p| (p.iter().sum::<f64>() / (params.nfft * params.window_samples) as f64).powf(0.3))
        .collect();
    if loud.is_empty() {
        out.extend([NAN; 10]);
    } else {
        let p20 = percentile(&loud, 0.2);
        let p80 = percentile(&loud, 0.8);
        out.extend([
            mean(&loud),
            std_norm(&loud),
            p20,
            percentile(&loud, 0.5),
            p80,
            p80 - p20,
        ]);
        out.extend(slope_stats(std::slice::from_ref(&loud), frame_rate));
    }

    // voice quality
    let pulses = find_pulses(x, sample_rate, &track);
    match perturbation(&pulses, sample_rate) {
        Some(p) => out.extend([
            p.jitter_local,
            p.jitter_rap,
            p.jitter_ppq5,
            3.0 * p.jitter_rap,
            p.shimmer_local,
            p.shimmer_local_db,
            p.shimmer_apq3,
            p.shimmer_apq5,
            3.0 * p.shimmer_apq3,
        ]),
        None => out.extend([NAN; 9]),
    }
    let hnr: Vec<f64> = track
        .frames
        .iter()
        .filter(|f| f.f0.is_some())
        .map(|f| {
            let r = f.correlation.clamp(1e-6, 1.0 - 1e-6);
            10.0 * (r / (1.0 - r)).log10()
        })
        .collect();
    out.push(mean(&hnr));
    out.push(std(&hnr));

    let mut h1h2 = Vec::new();
    let mut h1a3 = Vec::new();
    let mut fm: [Vec<f64>; 3] = Default::default();
    let mut bw: [Vec<f64>; 3] = Default::default();
    for (f, p) in power.iter().enumerate() {
        let Some(f0) = pitch_of(f) else { continue };
        let frame = &x[f * hop..f * hop + params.window_samples];
        let form = formants(frame, fs);
        let h1 = peak_db_near(p, bin_hz, f0, 0.1 * f0 + bin_hz);
        let h2 = peak_db_near(p, bin_hz, 2.0 * f0, 0.1 * f0 + bin_hz);
        if h1.is_finite() && h2.is_finite() {
            h1h2.push(h1 - h2);
        }
        if let Some(fr) = form {
            for i in 0..3 {
                fm[i].push(fr[i].0);
                bw[i].push(fr[i].1);
            }
            let a3 = peak_db_near(p, bin_hz, fr[2].0, 0.5 * f0);
            if h1.is_finite() && a3.is_finite() {
                h1a3.push(h1 - a3);
            }
        }
    }
    out.push(mean(&h1h2));
    out.push(mean(&h1a3));
    for v in &fm {
        out.push(mean(v));
    }
    for v in &bw {
        out.push(mean(v));
    }
    for v in &fm {
        out.push(if v.is_empty() { NAN } else { std_norm(v) });
    }

    // spectral shape
    let mut prev: Option<Vec<f64>> = None;
    let mut all: Vec<FrameSpectrum> = Vec::with_capacity(power.len());
    for p in &power {
        let (s, mag) = frame_spectrum(p, bin_hz, prev.as_deref());
        all.push(s);
        prev = Some(mag);
    }
    let voiced_flags: Vec<bool> = (0..power.len()).map(|f| pitch_of(f).is_some()).collect();
    let pick = |get: fn(&FrameSpectrum) -> f64, want: Option<bool>| -> Vec<f64> {
        all.iter()
            .zip(&voiced_flags)
            .filter(|(_, &v)| want.is_none_or(|w| w == v))
            .map(|(s, _)| get(s))
            .filter(|v| v.is_finite())
            .collect()
    };
    let flux = |want: Option<bool>| -> Vec<f64> {
        all.iter()
            .zip(&voiced_flags)
            .filter(|(_, &v)| want.is_none_or(|w| w == v))
            .filter_map(|(s, _)| s.flux)
            .collect()
    };
    let sn = |v: Vec<f64>| if v.is_empty() { NAN } else { std_norm(&v) };
    let centroid = pick(|s| s.centroid, None);
    out.extend([
        mean(&centroid),
        std(&centroid),
        mean(&flux(None)),
        sn(flux(None)),
        mean(&pick(|s| s.alpha, None)),
        mean(&pick(|s| s.hammarberg, None)),
        mean(&pick(|s| s.slope_lo, None)),
        mean(&pick(|s| s.slope_hi, None)),
    ]);
    let v = Some(true);
    out.extend([
        mean(&pick(|s| s.alpha, v)),
        sn(pick(|s| s.alpha, v)),
        mean(&pick(|s| s.hammarberg, v)),
        sn(pick(|s| s.hammarberg, v)),
        mean(&pick(|s| s.slope_lo, v)),
        sn(pick(|s| s.slope_lo, v)),
        mean(&pick(|s| s.slope_hi, v)),
        sn(pick(|s| s.slope_hi, v)),
        mean(&flux(v)),
        sn(flux(v)),
    ]);
    let u = Some(false);
    out.extend([
        mean(&pick(|s| s.alpha, u)),
        mean(&pick(|s| s.hammarberg, u)),
        mean(&pick(|s| s.slope_lo, u)),
        mean(&pick(|s| s.slope_hi, u)),
        mean(&flux(u)),
    ]);

    // cepstral
    let ceps: Vec<Vec<f64>> = power.iter().map(|p| mfcc.cepstrum(p)).collect();
    let coef = |c: usize, want: Option<bool>| -> Vec<f64> {
        ceps.iter()
            .zip(&voiced_flags)
            .filter(|(_, &v)| want.is_none_or(|w| w == v))
            .map(|(cc, _)| cc[c])
            .collect()
    };
    for c in 1..=4 {
        out.push(mean(&coef(c, None)));
    }
    for c in 1..=4 {
        out.push(std(&coef(c, None)));
    }
    for c in 1..=4 {
        out.push(mean(&coef(c, Some(true))));
    }

    // temporal
    let vr = runs_of(&track, true);
    let ur = runs_of(&track, false);
    let peaks = if loud.len() >= 3 {
        let thr = 0.5 * (percentile(&loud, 0.2) + percentile(&loud, 0.8));
        loud.windows(3)
            .filter(|w| w[1] > w[0] && w[1] >= w[2] && w[1] > thr)
            .count() as f64
    } else {
        0.0
    };
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    out.extend([
        track.voiced_fraction(),
        if duration > 0.0 { vr.len() as f64 / duration } else { 0.0 },
        mean(&vr),
        std(&vr),
        mean(&ur),
        std(&ur),
        if duration > 0.0 { peaks / duration } else { 0.0 },
        10.0 * (ms + 1e-12).log10(),
        mean(&pick(|s| s.rolloff, None)),
    ]);

    debug_assert_eq!(out.len(), ACOUSTIC_DIM);
    out
}

const PITCH_HOP: f64 = super::pitch::PITCH_HOP_S;
