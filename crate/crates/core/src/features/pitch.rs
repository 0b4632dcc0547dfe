//! Autocorrelation pitch tracking and cycle-level perturbation measures.

/// Pitch search range in Hz.
pub const F0_MIN: f64 = 60.0;
pub const F0_MAX: f64 = 500.0;
/// Analysis window and hop in seconds.
pub const PITCH_WINDOW_S: f64 = 0.040;
pub const PITCH_HOP_S: f64 = 0.010;
/// Minimum normalised cross-correlation for a voiced frame.
pub const VOICING_THRESHOLD: f64 = 0.5;
/// Frames quieter than this relative to the loudest frame are unvoiced.
const RELATIVE_ENERGY_FLOOR: f64 = 1e-3;
const ABSOLUTE_RMS_FLOOR: f64 = 1e-7;
/// Candidates within this fraction of the best correlation are preferred at shorter lags.
const OCTAVE_TOLERANCE: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchFrame {
    /// Centre of the analysis window, seconds.
    pub time: f64,
    /// F0 in Hz; `None` for unvoiced frames.
    pub f0: Option<f64>,
    /// Best normalised cross-correlation in the search range.
    pub correlation: f64,
    pub rms: f64,
}

#[derive(Debug, Clone)]
pub struct PitchTrack {
    pub frames: Vec<PitchFrame>,
    pub window: usize,
    pub hop: usize,
}

impl PitchTrack {
    pub fn voiced_fraction(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.frames.iter().filter(|f| f.f0.is_some()).count() as f64 / self.frames.len() as f64
    }

    /// Maximal runs of voiced frames as `(first, last_exclusive)` frame indices.
    pub fn voiced_runs(&self) -> Vec<(usize, usize)> {
        runs(&self.frames.iter().map(|f| f.f0.is_some()).collect::<Vec<_>>(), true)
    }

    pub fn unvoiced_runs(&self) -> Vec<(usize, usize)> {
        runs(&self.frames.iter().map(|f| f.f0.is_some()).collect::<Vec<_>>(), false)
    }
}

fn runs(flags: &[bool], want: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < flags.len() {
        if flags[i] == want {
            let s = i;
            while i < flags.len() && flags[i] == want {
                i += 1;
            }
            out.push((s, i));
        } else {
            i += 1;
        }
    }
    out
}

/// Normalised cross-correlation of `x[0..n-lag]` with `x[lag..n]`.
fn nccf(x: &[f64], lag: usize) -> f64 {
    let n = x.len() - lag;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let a = x[i];
        let b = x[i + lag];
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    let d = (xx * yy).sqrt();
    if d > 0.0 {
        xy / d
    } else {
        0.0
    }
}

/// Vertex offset of the parabola through three equally spaced points, in (-0.5, 0.5).
pub(crate) fn parabolic_offset(ym: f64, y0: f64, yp: f64) -> f64 {
    let den = ym - 2.0 * y0 + yp;
    if den.abs() < 1e-300 {
        0.0
    } else {
        (0.5 * (ym - yp) / den).clamp(-0.5, 0.5)
    }
}

pub fn track_pitch(samples: &[f64], sample_rate: u32) -> PitchTrack {
    let fs = sample_rate as f64;
    let window = (PITCH_WINDOW_S * fs).round() as usize;
    let hop = (PITCH_HOP_S * fs).round() as usize;
    let min_lag = (fs / F0_MAX).floor().max(2.0) as usize;
    let max_lag = ((fs / F0_MIN).ceil() as usize).min(window.saturating_sub(2));
    let n_frames = super::spectral::frame_count(samples.len(), window, hop);

    let rms: Vec<f64> = (0..n_frames)
        .map(|f| {
            let w = &samples[f * hop..f * hop + window];
            (w.iter().map(|v| v * v).sum::<f64>() / window as f64).sqrt()
        })
        .collect();
    let max_rms = rms.iter().copied().fold(0.0, f64::max);

    let frames = (0..n_frames)
        .map(|f| {
            let w = &samples[f * hop..f * hop + window];
            let time = (f * hop) as f64 / fs + 0.5 * window as f64 / fs;
            let loud = rms[f] > ABSOLUTE_RMS_FLOOR && rms[f] >= max_rms * RELATIVE_ENERGY_FLOOR.sqrt();
            if !loud || min_lag + 2 > max_lag {
                return PitchFrame {
                    time,
                    f0: None,
                    correlation: 0.0,
                    rms: rms[f],
                };
            }
            let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(|lag| nccf(w, lag)).collect();
            // r[i] corresponds to lag min_lag - 1 + i
            let best = r[1..r.len() - 1].iter().copied().fold(f64::MIN, f64::max);
            let mut chosen = None;
            for i in 1..r.len() - 1 {
                if r[i] >= r[i - 1] && r[i] >= r[i + 1] && r[i] >= OCTAVE_TOLERANCE * best {
                    chosen = Some(i);
                    break;
                }
            }
            let Some(i) = chosen else {
                return PitchFrame {
                    time,
                    f0: None,
                    correlation: best,
                    rms: rms[f],
                };
            };
            let lag = (min_lag - 1 + i) as f64 + parabolic_offset(r[i - 1], r[i], r[i + 1]);
            let voiced = r[i] >= VOICING_THRESHOLD;
            PitchFrame {
                time,
                f0: voiced.then(|| fs / lag),
                correlation: r[i],
                rms: rms[f],
            }
        })
        .collect();
    PitchTrack {
        frames,
        window,
        hop,
    }
}

/// Glottal-cycle markers: positive waveform peaks located cycle by cycle
/// inside voiced runs, with sub-sample refinement.
#[derive(Debug, Clone, Default)]
pub struct Pulses {
    /// Pulse times in samples, grouped by voiced run.
    pub times: Vec<Vec<f64>>,
    pub amplitudes: Vec<Vec<f64>>,
}

fn local_period(track: &PitchTrack, fs: f64, sample: f64) -> Option<f64> {
    let t = sample / fs - 0.5 * track.window as f64 / fs;
    let idx = (t / (track.hop as f64 / fs)).round().max(0.0) as usize;
    let idx = idx.min(track.frames.len().checked_sub(1)?);
    track.frames[idx].f0.map(|f0| fs / f0)
}

fn refined_peak(x: &[f64], lo: usize, hi: usize) -> Option<(f64, f64)> {
    if hi <= lo + 2 || hi > x.len() {
        return None;
    }
    let (mut k, mut v) = (lo, f64::MIN);
    for (i, &s) in x.iter().enumerate().take(hi).skip(lo) {
        if s > v {
            v = s;
            k = i;
        }
    }
    if k == 0 || k + 1 >= x.len() {
        return Some((k as f64, v));
    }
    let d = parabolic_offset(x[k - 1], x[k], x[k + 1]);
    let amp = x[k] - 0.25 * (x[k - 1] - x[k + 1]) * d;
    Some((k as f64 + d, amp))
}

pub fn find_pulses(samples: &[f64], sample_rate: u32, track: &PitchTrack) -> Pulses {
    let fs = sample_rate as f64;
    let mut out = Pulses::default();
    for (a, b) in track.voiced_runs() {
        let start = a * track.hop;
        let end = ((b - 1) * track.hop + track.window).min(samples.len());
        let Some(p0) = local_period(track, fs, start as f64 + track.window as f64 / 2.0) else {
            continue;
        };
        let Some((mut t, amp)) = refined_peak(samples, start, (start + p0.ceil() as usize).min(end)) else {
            continue;
        };
        let mut times = vec![t];
        let mut amps = vec![amp];
        loop {
            let Some(p) = local_period(track, fs, t).or_else(|| local_period(track, fs, t - p0)) else {
                break;
            };
            let lo = (t + 0.75 * p).ceil() as usize;
            let hi = (t + 1.25 * p).floor() as usize + 1;
            if hi > end {
                break;
            }
            match refined_peak(samples, lo, hi) {
                Some((nt, na)) => {
                    t = nt;
                    times.push(nt);
                    amps.push(na);
                }
                None => break,
            }
        }
        if times.len() >= 3 {
            out.times.push(times);
            out.amplitudes.push(amps);
        }
    }
    out
}

/// Cycle-to-cycle perturbation measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub jitter_local: f64,
    pub jitter_rap: f64,
    pub jitter_ppq5: f64,
    pub shimmer_local: f64,
    pub shimmer_local_db: f64,
    pub shimmer_apq3: f64,
    pub shimmer_apq5: f64,
}

/// Mean absolute deviation of each value from its centred `width`-point average,
/// relative to the overall mean.
fn perturbation_quotient(v: &[f64], width: usize) -> Option<f64> {
    let h = width / 2;
    if v.len() < width {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let dev: Vec<f64> = (h..v.len() - h)
        .map(|i| {
            let avg = v[i - h..=i + h].iter().sum::<f64>() / width as f64;
            (v[i] - avg).abs()
        })
        .collect();
    Some(dev.iter().sum::<f64>() / dev.len() as f64 / mean)
}

fn mean_abs_diff(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    Some(v.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (v.len() - 1) as f64)
}

/// Jitter and shimmer from pulse trains. Periods outside the pitch range or
/// differing from a neighbour by more than a factor 1.3 break the sequence.
pub fn perturbation(pulses: &Pulses, sample_rate: u32) -> Option<Perturbation> {
    let fs = sample_rate as f64;
    let (pmin, pmax) = (fs / F0_MAX, fs / F0_MIN);
    let mut periods: Vec<Vec<f64>> = Vec::new();
    let mut amps: Vec<Vec<f64>> = Vec::new();
    for (times, a) in pulses.times.iter().zip(&pulses.amplitudes) {
        let mut cur_p = Vec::new();
        let mut cur_a = vec![a[0]];
        for i in 1..times.len() {
            let p = times[i] - times[i - 1];
            let ok = p >= pmin && p <= pmax && cur_p.last().is_none_or(|&q: &f64| p / q < 1.3 && q / p < 1.3);
            if ok {
                cur_p.push(p);
                cur_a.push(a[i]);
            } else {
                if cur_p.len() >= 2 {
                    periods.push(std::mem::take(&mut cur_p));
                    amps.push(std::mem::take(&mut cur_a));
                }
                cur_p.clear();
                cur_a = vec![a[i]];
            }
        }
        if cur_p.len() >= 2 {
            periods.push(cur_p);
            amps.push(cur_a);
        }
    }
    let all_p: Vec<f64> = periods.iter().flatten().copied().collect();
    let all_a: Vec<f64> = amps.iter().flatten().copied().collect();
    if all_p.len() < 3 || all_a.iter().any(|&a| a <= 0.0) {
        return None;
    }
    let mean_p = all_p.iter().sum::<f64>() / all_p.len() as f64;
    let mean_a = all_a.iter().sum::<f64>() / all_a.len() as f64;
    // averages over runs weighted by the number of differences
    let weighted = |seqs: &[Vec<f64>], f: &dyn Fn(&[f64]) -> Option<f64>| -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for s in seqs {
            if let Some(v) = f(s) {
                num += v * s.len() as f64;
                den += s.len() as f64;
            }
        }
        (den > 0.0).then(|| num / den)
    };
    let jitter_local = weighted(&periods, &|s| mean_abs_diff(s))? / mean_p;
    let shimmer_local = weighted(&amps, &|s| mean_abs_diff(s))? / mean_a;
    let shimmer_local_db = weighted(&amps, &|s| {
        (s.len() >= 2).then(|| {
            s.windows(2).map(|w| (20.0 * (w[1] / w[0]).log10()).abs()).sum::<f64>() / (s.len() - 1) as f64
        })
    })?;
    Some(Perturbation {
        jitter_local,
        jitter_rap: weighted(&periods, &|s| perturbation_quotient(s, 3)).unwrap_or(f64::NAN),
        jitter_ppq5: weighted(&periods, &|s| perturbation_quotient(s, 5)).unwrap_or(f64::NAN),
        shimmer_local,
        shimmer_local_db,
        shimmer_apq3: weighted(&amps, &|s| perturbation_quotient(s, 3)).unwrap_or(f64::NAN),
        shimmer_apq5: weighted(&amps, &|s| perturbation_quotient(s, 5)).unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: u32 = 16_000;

    fn sine(freq: f64, seconds: f64) -> Vec<f64> {
        let n = (seconds * FS as f64) as usize;
        (0..n)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / FS as f64).sin())
            .collect()
    }

    #[test]
    fn tracks_pure_tone() {
        for f in [80.0, 150.0, 220.0, 440.0] {
            let t = track_pitch(&sine(f, 1.0), FS);
            assert!(t.voiced_fraction() > 0.95);
            for fr in &t.frames {
                let f0 = fr.f0.unwrap();
                assert!((f0 - f).abs() < 1.0, "{f}: got {f0}");
            }
        }
    }

    #[test]
    fn rich_harmonics_do_not_cause_octave_errors() {
        let n = FS as usize;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / FS as f64;
                (1..8)
                    .map(|k| (2.0 * std::f64::consts::PI * 130.0 * k as f64 * t).sin() / k as f64)
                    .sum()
            })
            .collect();
        let t = track_pitch(&x, FS);
        for fr in &t.frames {
            assert!((fr.f0.unwrap() - 130.0).abs() < 1.5);
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let t = track_pitch(&vec![0.0; 8000], FS);
        assert_eq!(t.voiced_fraction(), 0.0);
        assert!(t.voiced_runs().is_empty());
        assert_eq!(t.unvoiced_runs().len(), 1);
    }

    #[test]
    fn clean_tone_has_tiny_jitter() {
        let x = sine(220.0, 1.0);
        let t = track_pitch(&x, FS);
        let p = perturbation(&find_pulses(&x, FS, &t), FS).unwrap();
        assert!(p.jitter_local < 1e-3, "{p:?}");
        assert!(p.shimmer_local < 1e-3, "{p:?}");
    }

    #[test]
    fn parabola_vertex() {
        // y = -(x - 0.3)^2 sampled at -1, 0, 1
        let f = |x: f64| -(x - 0.3) * (x - 0.3);
        assert!((parabolic_offset(f(-1.0), f(0.0), f(1.0)) - 0.3).abs() < 1e-12);
    }
}
