use std::io::{Read, Seek};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Recording;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn map_err(e: hound::Error) -> Error {
    match e {
        hound::Error::FormatError(m) => Error::UnsupportedFormat(m.to_string()),
        hound::Error::Unsupported => Error::UnsupportedFormat("unsupported WAV codec".into()),
        hound::Error::IoError(io) => Error::Decode(io.to_string()),
        other => Error::Decode(other.to_string()),
    }
}

/// Decodes a PCM WAV file (8/16/24/32-bit integer or 32-bit float), averaging channels to mono.
pub fn decode_wav<T: Scalar>(path: &Path) -> Result<Recording<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_wav(std::io::BufReader::new(file))
}

pub fn read_wav<T: Scalar, R: Read>(reader: R) -> Result<Recording<T>> {
    let mut rdr = WavReader::new(reader).map_err(map_err)?;
    let spec = rdr.spec();
    if spec.sample_rate == 0 || spec.channels == 0 {
        return Err(Error::UnsupportedFormat("zero sample rate or channel count".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => rdr
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_err)?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            rdr.samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(map_err)?
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!("{bits}-bit {fmt:?} samples")));
        }
    };
    let ch = spec.channels as usize;
    if interleaved.len() % ch != 0 {
        return Err(Error::Decode("partial frame at end of data".into()));
    }
    let inv = 1.0 / ch as f64;
    let samples = interleaved
        .chunks_exact(ch)
        .map(|frame| T::lit((frame.iter().sum::<f64>() * inv).clamp(-1.0, 1.0)))
        .collect();
    Ok(Recording::new(samples, spec.sample_rate))
}

/// Duration in seconds from the header alone.
pub fn wav_duration(path: &Path) -> Result<f64> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let rdr = WavReader::new(std::io::BufReader::new(file)).map_err(map_err)?;
    let spec = rdr.spec();
    Ok(rdr.duration() as f64 / spec.sample_rate as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Writes interleaved channels; `channels[c][i]` is sample `i` of channel `c`.
pub fn write_wav<T: Scalar>(
    path: &Path,
    channels: &[&[T]],
    sample_rate: u32,
    encoding: WavEncoding,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_wav_to(std::io::BufWriter::new(file), channels, sample_rate, encoding)
}

pub(crate) fn write_wav_to<T: Scalar, W: std::io::Write + Seek>(
    writer: W,
    channels: &[&[T]],
    sample_rate: u32,
    encoding: WavEncoding,
) -> Result<()> {
    let n = channels.first().map_or(0, |c| c.len());
    if channels.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("channels differ in length".into()));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let mut w = WavWriter::new(writer, spec).map_err(map_err)?;
    for i in 0..n {
        for c in channels {
            let v = c[i].as_f64().clamp(-1.0, 1.0);
            match encoding {
                WavEncoding::Pcm16 => w
                    .write_sample((v * 32767.0).round() as i16)
                    .map_err(map_err)?,
                WavEncoding::Float32 => w.write_sample(v as f32).map_err(map_err)?,
            }
        }
    }
    w.finalize().map_err(map_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn encode(channels: &[&[f64]], rate: u32, enc: WavEncoding) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        write_wav_to(&mut buf, channels, rate, enc).unwrap();
        buf.into_inner()
    }

    #[test]
    fn three_seconds_mono_16bit() {
        let n = 3 * 44_100;
        let s: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin() * 0.5).collect();
        let bytes = encode(&[&s], 44_100, WavEncoding::Pcm16);
        let rec: Recording<f64> = read_wav(Cursor::new(bytes)).unwrap();
        assert_eq!(rec.len(), 132_300);
        assert_eq!(rec.sample_rate, 44_100);
        assert!((rec.samples[100] - s[100]).abs() < 1.0 / 32_767.0);
    }

    #[test]
    fn antiphase_stereo_averages_to_zero() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.05).sin() * 0.8).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let bytes = encode(&[&x, &neg], 16_000, WavEncoding::Pcm16);
        let rec: Recording<f64> = read_wav(Cursor::new(bytes)).unwrap();
        assert!(rec.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duration_at_fifty_khz() {
        let s = vec![0.1f64; 65_000];
        let bytes = encode(&[&s], 50_000, WavEncoding::Float32);
        let rec: Recording<f32> = read_wav(Cursor::new(bytes)).unwrap();
        assert!((rec.duration() - 1.3).abs() <= 1.0 / 50_000.0);
    }

    #[test]
    fn non_wav_is_unsupported() {
        let err = read_wav::<f64, _>(Cursor::new(b"ID3\x03not a wav file at all".to_vec())).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)), "{err}");
    }

    #[test]
    fn truncated_is_decode_error() {
        let s = vec![0.25f64; 4000];
        let mut bytes = encode(&[&s], 16_000, WavEncoding::Pcm16);
        bytes.truncate(bytes.len() - 3001);
        let err = read_wav::<f64, _>(Cursor::new(bytes)).unwrap_err();
        assert!(matches!(err, Error::Decode(_)), "{err}");
    }
}
