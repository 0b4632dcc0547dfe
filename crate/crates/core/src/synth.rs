//! Synthetic sustained-vowel corpus with planted class and demographic effects.
//!
//! Each patient gets a glottal pulse train with cycle-to-cycle period jitter
//! and amplitude shimmer, shaped by a spectral-tilt filter and three formant
//! resonators for /a/. Malignant patients have more jitter and shimmer and a
//! flatter spectral tilt; they are also older and mostly male. Embeddings are
//! a fixed random projection of segment-averaged log-mel spectra.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, Recording, WavEncoding, PIPELINE_RATE};
use crate::dataset::{write_manifest, Label, LabeledDataset, PatientRecord, Sex};
use crate::error::{Error, Result};
use crate::features::spectral::{MelFilterbank, Stft};
use crate::features::{write_embeddings, EmbeddingMatrix, EMBEDDING_DIM};

pub const MALIGNANT_PATHOLOGY: &str = "Laryngeal cancer";
pub const BENIGN_PATHOLOGIES: [&str; 3] = ["Vocal palsy", "Vocal nodules", "Polyp"];
pub const SYMPTOM_COLUMNS: [&str; 3] = ["hoarseness", "dysphagia", "weight_loss"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub name: String,
    pub n: usize,
    pub prevalence: f64,
    pub seed: u64,
    pub duration: f64,
    pub sample_rate: u32,
    /// Mean relative period jitter of benign voices.
    pub jitter: f64,
    /// Relative increase of jitter and shimmer for malignant voices.
    pub perturbation_increase: f64,
    /// Change of the tilt-filter pole for malignant voices (negative = flatter).
    pub tilt_shift: f64,
    /// Between-patient spread of the tilt pole.
    pub tilt_spread: f64,
    /// Noise standard deviation relative to the voiced signal RMS.
    pub noise: f64,
    pub symptoms: bool,
    pub lifestyle: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            n: 600,
            prevalence: 0.05,
            seed: 42,
            duration: 3.0,
            sample_rate: PIPELINE_RATE,
            jitter: 0.008,
            perturbation_increase: 0.30,
            tilt_shift: -0.05,
            tilt_spread: 0.02,
            noise: 0.02,
            symptoms: true,
            lifestyle: true,
        }
    }
}

/// Per-patient source and filter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceParams {
    pub f0: f64,
    pub jitter: f64,
    pub shimmer: f64,
    pub tilt: f64,
    pub formants: [(f64, f64); 3],
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPatient {
    pub record: PatientRecord,
    pub voice: VoiceParams,
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("positive sd").sample(rng)
}

/// Patients with labels, demographics, optional symptoms and voice settings.
pub fn synth_patients(cfg: &SynthConfig) -> Vec<SynthPatient> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_mal = ((cfg.n as f64 * cfg.prevalence).round() as usize).clamp(2, cfg.n.saturating_sub(2));
    let width = cfg.n.to_string().len().max(4);
    // spread malignant patients evenly through the id range
    let malignant: BTreeSet<usize> = (0..n_mal).map(|k| (k * cfg.n + cfg.n / 2) / n_mal).collect();
    (0..cfg.n)
        .map(|i| {
            let label = Label::from_bool(malignant.contains(&i));
            let m = label.is_malignant();
            let sex = if rng.gen_bool(if m { 0.9 } else { 0.45 }) { Sex::Male } else { Sex::Female };
            let age = if m { normal(&mut rng, 64.0, 8.0) } else { normal(&mut rng, 46.0, 13.0) };
            let age = age.round().clamp(18.0, 95.0) as u32;
            let pathology = if m {
                MALIGNANT_PATHOLOGY.to_string()
            } else {
                BENIGN_PATHOLOGIES[rng.gen_range(0..BENIGN_PATHOLOGIES.len())].to_string()
            };
            let mut symptoms = BTreeMap::new();
            if cfg.symptoms {
                for (k, name) in SYMPTOM_COLUMNS.iter().enumerate() {
                    let p = match (k, m) {
                        (0, true) => 0.8,
                        (0, false) => 0.5,
                        (_, true) => 0.35,
                        (_, false) => 0.1,
                    };
                    let v = if rng.gen_bool(0.05) { None } else { Some(f64::from(u8::from(rng.gen_bool(p)))) };
                    symptoms.insert(name.to_string(), v);
                }
            }
            let (packs, drinks) = if cfg.lifestyle {
                let smoker = rng.gen_bool(if m { 0.6 } else { 0.25 });
                let packs = if smoker { (rng.gen_range(0.2..2.0f64) * 10.0).round() / 10.0 } else { 0.0 };
                let drinks = f64::from(rng.gen_range(0u8..if m { 5 } else { 3 }));
                (Some(packs), Some(drinks))
            } else {
                (None, None)
            };
            let id = format!("{}{:0width$}", cfg.name.chars().next().unwrap_or('p'), i);
            let male = sex == Sex::Male;
            let f0 = if male { normal(&mut rng, 115.0, 12.0) } else { normal(&mut rng, 205.0, 18.0) };
            let scale = if m { 1.0 + cfg.perturbation_increase } else { 1.0 };
            let jitter = normal(&mut rng, cfg.jitter, cfg.jitter * 0.15).max(cfg.jitter * 0.3) * scale;
            let shimmer = normal(&mut rng, 0.04, 0.006).max(0.01) * scale;
            let tilt = normal(&mut rng, 0.92 + if m { cfg.tilt_shift } else { 0.0 }, cfg.tilt_spread).clamp(0.5, 0.985);
            let base = if male {
                [(730.0, 80.0), (1090.0, 90.0), (2440.0, 120.0)]
            } else {
                [(850.0, 80.0), (1220.0, 90.0), (2810.0, 120.0)]
            };
            let formants = base.map(|(f, b)| (f * normal(&mut rng, 1.0, 0.04), b));
            let voice = VoiceParams {
                f0: f0.clamp(70.0, 320.0),
                jitter,
                shimmer,
                tilt,
                formants,
                noise: cfg.noise,
                seed: rng.gen(),
            };
            SynthPatient {
                record: PatientRecord {
                    id: id.clone(),
                    audio_path: format!("audio/{id}.wav"),
                    pathology,
                    label,
                    sex,
                    age,
                    symptoms,
                    packs_per_day: packs,
                    drinks_per_day: drinks,
                    extra: BTreeMap::new(),
                },
                voice,
            }
        })
        .collect()
}

/// Two-pole resonator normalised to unit gain at DC.
fn resonate(x: &mut [f64], freq: f64, bandwidth: f64, fs: f64) {
    let r = (-PI * bandwidth / fs).exp();
    let c = 2.0 * r * (2.0 * PI * freq / fs).cos();
    let g = 1.0 - c + r * r;
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = g * *v + c * y1 - r * r * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

/// Renders one sustained vowel.
pub fn synth_voice(p: &VoiceParams, duration: f64, sample_rate: u32) -> Recording<f64> {
    let fs = sample_rate as f64;
    let n = (duration * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut x = vec![0.0; n];
    let half = 8i64;
    let mut t = rng.gen_range(0.0..fs / p.f0);
    while (t as usize) < n {
        let amp = 1.0 + p.shimmer * normal(&mut rng, 0.0, 1.0);
        // band-limited impulse at fractional position t
        let centre = t.floor() as i64;
        for k in (centre - half + 1)..=(centre + half) {
            if k < 0 || k as usize >= n {
                continue;
            }
            let d = k as f64 - t;
            let sinc = if d.abs() < 1e-12 { 1.0 } else { (PI * d).sin() / (PI * d) };
            let w = 0.5 + 0.5 * (PI * d / half as f64).cos();
            x[k as usize] += amp * sinc * w;
        }
        t += fs / p.f0 * (1.0 + p.jitter * normal(&mut rng, 0.0, 1.0));
    }
    // spectral tilt: double real pole
    for _ in 0..2 {
        let mut y1 = 0.0;
        for v in x.iter_mut() {
            y1 = *v + p.tilt * y1;
            *v = y1 * (1.0 - p.tilt);
        }
    }
    for &(f, b) in &p.formants {
        resonate(&mut x, f, b, fs);
    }
    // lip radiation
    let mut prev = 0.0;
    for v in x.iter_mut() {
        let d = *v - prev;
        prev = *v;
        *v = d;
    }
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt().max(1e-12);
    let fade = (0.02 * fs) as usize;
    for (i, v) in x.iter_mut().enumerate() {
        let ramp = (i.min(n - 1 - i) as f64 / fade as f64).min(1.0);
        *v = (*v / rms * 0.1 + p.noise * 0.1 * normal(&mut rng, 0.0, 1.0)) * ramp;
    }
    Recording::new(x, sample_rate)
}

/// Fixed projection from 40 log-mel bands to the embedding dimension.
fn projection() -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0E3B_ED00);
    let sd = 1.0 / (40f64).sqrt();
    (0..EMBEDDING_DIM).map(|_| (0..40).map(|_| normal(&mut rng, 0.0, sd)).collect()).collect()
}

/// Stand-in for a pretrained speech encoder: one frame per half second of
/// audio, each the tanh of a random projection of the mean log-mel spectrum.
pub fn synth_embedding(rec: &Recording<f64>) -> Result<EmbeddingMatrix<f64>> {
    let rec = crate::audio::resample(rec, PIPELINE_RATE);
    let stft = Stft::<f64>::new(400, 160, 512);
    let mel = MelFilterbank::<f64>::new(40, 512, PIPELINE_RATE as f64, 0.0, 8000.0);
    let spectra = stft.power(&rec.samples);
    let per_segment = 50;
    let w = projection();
    let frames: Vec<Vec<f64>> = spectra
        .chunks(per_segment)
        .filter(|c| c.len() * 2 >= per_segment || spectra.len() < per_segment)
        .map(|chunk| {
            let mut logmel = vec![0.0; 40];
            for p in chunk {
                for (acc, e) in logmel.iter_mut().zip(mel.apply(p)) {
                    *acc += e.max(1e-10).ln() / chunk.len() as f64;
                }
            }
            let mean = logmel.iter().sum::<f64>() / 40.0;
            w.iter()
                .map(|row| {
                    let z: f64 = row.iter().zip(&logmel).map(|(a, b)| a * (b - mean)).sum();
                    ((z / 3.0).tanh() * 1e5).round() / 1e5
                })
                .collect()
        })
        .collect();
    EmbeddingMatrix::from_frames(&frames)
}

/// Files written by [`write_synthetic_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPaths {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub label_map: PathBuf,
    pub symptom_schema: Option<PathBuf>,
    pub embeddings: PathBuf,
    /// Directory the manifest's relative `audio_path` values resolve against.
    pub audio_root: PathBuf,
}

pub fn label_map_text() -> String {
    format!("[malignant]\n{MALIGNANT_PATHOLOGY}\n")
}

/// Writes audio, manifest, label map, symptom schema and embeddings under `dir`.
pub fn write_synthetic_dataset(dir: &Path, cfg: &SynthConfig) -> Result<SynthPaths> {
    use rayon::prelude::*;

    let audio_root = dir.to_path_buf();
    let audio_dir = dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let patients = synth_patients(cfg);
    let embeddings: Vec<(String, EmbeddingMatrix<f64>)> = patients
        .par_iter()
        .map(|p| {
            let rec = synth_voice(&p.voice, cfg.duration, cfg.sample_rate);
            write_wav(&audio_root.join(&p.record.audio_path), &[&rec.samples], cfg.sample_rate, WavEncoding::Pcm16)?;
            Ok((p.record.id.clone(), synth_embedding(&rec)?))
        })
        .collect::<Result<_>>()?;
    let ds = LabeledDataset {
        name: cfg.name.clone(),
        records: patients.into_iter().map(|p| p.record).collect(),
        symptom_columns: if cfg.symptoms { SYMPTOM_COLUMNS.iter().map(|s| s.to_string()).collect() } else { Vec::new() },
        has_lifestyle: cfg.lifestyle,
        source: None,
    };
    let manifest = dir.join(format!("{}.csv", cfg.name));
    let f = std::fs::File::create(&manifest).map_err(|e| Error::io(&manifest, e))?;
    write_manifest(&ds, f)?;
    let label_map = dir.join("labels.txt");
    std::fs::write(&label_map, label_map_text()).map_err(|e| Error::io(&label_map, e))?;
    let symptom_schema = if cfg.symptoms {
        let p = dir.join(format!("{}.symptoms.txt", cfg.name));
        std::fs::write(&p, SYMPTOM_COLUMNS.join("\n") + "\n").map_err(|e| Error::io(&p, e))?;
        Some(p)
    } else {
        None
    };
    let emb_path = dir.join(format!("{}.embeddings.csv", cfg.name));
    write_embeddings(&emb_path, &embeddings.into_iter().collect())?;
    Ok(SynthPaths {
        dir: dir.to_path_buf(),
        manifest,
        label_map,
        symptom_schema,
        embeddings: emb_path,
        audio_root,
    })
}
