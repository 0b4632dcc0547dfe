//! Polyphase windowed-sinc resampling.
//!
//! The conversion ratio is reduced to `up / down`. Output sample `n` sits at
//! input position `n * down / up`; its fractional part selects one of `up`
//! filter phases. Each phase has [`RESAMPLER_TAPS`] taps measured at the lower
//! of the two rates, so downsampling widens the kernel in input samples.

use super::Recording;
use crate::scalar::Scalar;

/// Taps per phase, counted at the lower of the two rates.
pub const RESAMPLER_TAPS: usize = 64;
/// Passband edge as a fraction of the lower Nyquist frequency.
const CUTOFF: f64 = 0.90;
const KAISER_BETA: f64 = 8.6;
/// Phase tables above this size are computed on the fly instead.
const MAX_TABLE_PHASES: u64 = 4096;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

#[derive(Debug, Clone)]
pub struct Resampler<T> {
    in_rate: u32,
    out_rate: u32,
    up: u64,
    down: u64,
    /// Half-width in input samples.
    half: usize,
    /// Cutoff in cycles per input sample.
    fc: f64,
    table: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> Resampler<T> {
    pub fn new(in_rate: u32, out_rate: u32) -> Self {
        assert!(in_rate > 0 && out_rate > 0, "sample rates must be positive");
        let g = gcd(in_rate as u64, out_rate as u64);
        let up = out_rate as u64 / g;
        let down = in_rate as u64 / g;
        let stretch = (in_rate as f64 / out_rate as f64).max(1.0);
        let half = ((RESAMPLER_TAPS / 2) as f64 * stretch).ceil() as usize;
        let fc = 0.5 * CUTOFF * (out_rate.min(in_rate) as f64 / in_rate as f64);
        let mut r = Self {
            in_rate,
            out_rate,
            up,
            down,
            half,
            fc,
            table: None,
        };
        if in_rate != out_rate && up <= MAX_TABLE_PHASES {
            r.table = Some((0..up).map(|p| r.phase_taps(p as f64 / up as f64)).collect());
        }
        r
    }

    /// Taps for input samples `i0 - half + 1 ..= i0 + half` when the output
    /// position is `i0 + frac`. Normalised to unit DC gain.
    fn phase_taps(&self, frac: f64) -> Vec<T> {
        let h = self.half as f64;
        let norm = bessel_i0(KAISER_BETA);
        let mut taps: Vec<f64> = (0..2 * self.half)
            .map(|j| {
                // distance from the output position to input sample i0 - half + 1 + j
                let d = (j as f64 - h + 1.0) - frac;
                let x = 2.0 * self.fc * d;
                let sinc = if x.abs() < 1e-12 {
                    1.0
                } else {
                    (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
                };
                let r = d / h;
                let w = if r.abs() >= 1.0 {
                    0.0
                } else {
                    bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
                };
                2.0 * self.fc * sinc * w
            })
            .collect();
        let s: f64 = taps.iter().sum();
        if s != 0.0 {
            taps.iter_mut().for_each(|t| *t /= s);
        }
        taps.into_iter().map(T::lit).collect()
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        ((input_len as u64 * self.up).div_ceil(self.down)) as usize
    }

    pub fn process(&self, input: &[T]) -> Vec<T> {
        if self.in_rate == self.out_rate {
            return input.to_vec();
        }
        let n_out = self.output_len(input.len());
        let mut out = Vec::with_capacity(n_out);
        for n in 0..n_out as u64 {
            let pos = n * self.down;
            let i0 = (pos / self.up) as isize;
            let phase = pos % self.up;
            let owned;
            let taps: &[T] = match &self.table {
                Some(t) => &t[phase as usize],
                None => {
                    owned = self.phase_taps(phase as f64 / self.up as f64);
                    &owned
                }
            };
            let start = i0 - self.half as isize + 1;
            let mut acc = T::zero();
            for (j, &w) in taps.iter().enumerate() {
                let k = start + j as isize;
                if k >= 0 && (k as usize) < input.len() {
                    acc += w * input[k as usize];
                }
            }
            out.push(acc);
        }
        out
    }
}

/// Resamples to `target_rate`; equal rates return the samples unchanged.
pub fn resample<T: Scalar>(rec: &Recording<T>, target_rate: u32) -> Recording<T> {
    if rec.sample_rate == target_rate {
        return rec.clone();
    }
    let r = Resampler::new(rec.sample_rate, target_rate);
    Recording::new(r.process(&rec.samples), target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;

    fn tone(freq: f64, rate: u32, seconds: f64) -> Recording<f64> {
        let n = (seconds * rate as f64).round() as usize;
        Recording::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
                .collect(),
            rate,
        )
    }

    /// Blackman-Harris windowed power spectrum of the central part of `x`.
    fn spectrum(x: &[f64], trim: usize) -> Vec<f64> {
        let x = &x[trim..x.len() - trim];
        let n = x.len();
        let a = [0.35875, 0.48829, 0.14128, 0.01168];
        let mut buf: Vec<Complex<f64>> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64;
                let w = a[0] - a[1] * t.cos() + a[2] * (2.0 * t).cos() - a[3] * (3.0 * t).cos();
                Complex::new(v * w, 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        buf[..n / 2].iter().map(|c| c.norm_sqr()).collect()
    }

    #[test]
    fn length_arithmetic() {
        let r = resample(&tone(100.0, 44_100, 3.0), 16_000);
        assert_eq!(r.len(), 48_000);
        assert_eq!(r.sample_rate, 16_000);
    }

    #[test]
    fn identity_rate_is_bitwise_unchanged() {
        let x = tone(321.0, 16_000, 0.5);
        assert_eq!(resample(&x, 16_000), x);
    }

    #[test]
    fn tone_stays_clean_after_downsampling() {
        let x = tone(440.0, 50_000, 2.0);
        let y = resample(&x, 16_000);
        let trim = 4000;
        let p = spectrum(&y.samples, trim);
        let n = y.len() - 2 * trim;
        let hz = |k: usize| k as f64 * 16_000.0 / n as f64;
        let (kmax, _) = p
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
        assert!((hz(kmax) - 440.0).abs() <= 2.0, "peak at {} Hz", hz(kmax));
        let in_band: f64 = p.iter().enumerate().filter(|(k, _)| (hz(*k) - 440.0).abs() <= 20.0).map(|(_, v)| v).sum();
        let out_band: f64 = p.iter().enumerate().filter(|(k, _)| (hz(*k) - 440.0).abs() > 20.0).map(|(_, v)| v).sum();
        let db = 10.0 * (out_band / in_band).log10();
        assert!(db < -60.0, "out-of-band energy {db:.1} dB");
    }

    #[test]
    fn tone_energy_preserved_within_one_db() {
        for (from, to) in [(44_100, 16_000), (16_000, 44_100), (50_000, 16_000)] {
            let x = tone(1000.0, from, 1.0);
            let y = resample(&x, to);
            let rms = |s: &[f64], trim: usize| {
                let s = &s[trim..s.len() - trim];
                (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt()
            };
            let db = 20.0 * (rms(&y.samples, to as usize / 20) / rms(&x.samples, from as usize / 20)).log10();
            assert!(db.abs() < 1.0, "{from}->{to}: {db} dB");
        }
    }

    #[test]
    fn round_trip_duration() {
        let x = tone(200.0, 44_100, 1.37);
        let back = resample(&resample(&x, 16_000), 44_100);
        assert!((back.duration() - x.duration()).abs() <= 2.0 / 44_100.0);
    }

    #[test]
    fn large_phase_counts_use_direct_taps() {
        let x = tone(300.0, 44_100, 0.1);
        let y = resample(&x, 16_001);
        assert_eq!(y.len(), Resampler::<f64>::new(44_100, 16_001).output_len(x.len()));
        assert!(y.samples.iter().all(|v| v.is_finite() && v.abs() < 0.6));
    }
}
