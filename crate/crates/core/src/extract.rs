//! Feature matrices for whole datasets, one row per manifest record.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::audio::{decode_wav, resample, Recording, PIPELINE_RATE};
use crate::dataset::{LabeledDataset, PatientRecord};
use crate::error::{Error, Result};
use crate::features::{
    extract_acoustic, extract_mfcc, mean_pool, mfcc_target_frames, standardize_mfcc, EmbeddingMatrix, FeatureSet,
    FeatureTable, FeatureVector, MfccMatrix, MfccParams, ACOUSTIC_SLOTS,
};
use crate::matrix::FeatureMatrix;
use crate::persist::MfccSpec;

/// Absolute paths pass through; relative ones are joined to `root`.
pub fn audio_path(root: &Path, rec: &PatientRecord) -> PathBuf {
    let p = Path::new(&rec.audio_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// Decodes to mono and resamples to the pipeline rate.
pub fn load_audio(path: &Path) -> Result<Recording<f64>> {
    let rec = decode_wav::<f64>(path)?;
    Ok(if rec.sample_rate == PIPELINE_RATE {
        rec
    } else {
        resample(&rec, PIPELINE_RATE)
    })
}

fn with_context(path: &Path, e: Error) -> Error {
    match e {
        e @ Error::Io { .. } => e,
        other => Error::InvalidInput(format!("{}: {other}", path.display())),
    }
}

/// Where a dataset's precomputed features live.
#[derive(Debug, Clone, Default)]
pub struct FeatureSources {
    pub audio_root: PathBuf,
    pub embeddings: Option<BTreeMap<String, EmbeddingMatrix<f64>>>,
    /// Replaces on-the-fly acoustic extraction when present.
    pub acoustic_table: Option<FeatureTable>,
}

/// Per-dataset intermediate features, before MFCC length standardisation.
#[derive(Debug, Clone, Default)]
pub struct RawFeatures {
    pub acoustic: Option<FeatureMatrix<f64>>,
    pub mfcc: Option<Vec<MfccMatrix<f64>>>,
    pub embedding: Option<FeatureMatrix<f64>>,
}

impl RawFeatures {
    /// Frame counts of the MFCC matrices, for deriving the target length.
    pub fn mfcc_frame_counts(&self) -> Option<Vec<usize>> {
        self.mfcc.as_ref().map(|m| m.iter().map(|x| x.n_frames()).collect())
    }

    /// Final matrix for one feature set. MFCC rows are trimmed or padded to `target_frames`.
    pub fn matrix(&self, set: FeatureSet, target_frames: Option<usize>) -> Result<FeatureMatrix<f64>> {
        let missing = || Error::Config(format!("{set} features were not computed for this dataset"));
        match set {
            FeatureSet::Acoustic => self.acoustic.clone().ok_or_else(missing),
            FeatureSet::Embedding => self.embedding.clone().ok_or_else(missing),
            FeatureSet::Mfcc => {
                let mats = self.mfcc.as_ref().ok_or_else(missing)?;
                let target = target_frames.ok_or_else(|| Error::Config("MFCC target length not set".into()))?;
                rows_of(mats.iter().map(|m| standardize_mfcc(m, target)).collect())
            }
        }
    }
}

fn rows_of(vectors: Vec<FeatureVector<f64>>) -> Result<FeatureMatrix<f64>> {
    let names = match vectors.first() {
        Some(v) => v.names.clone(),
        None => return Ok(FeatureMatrix::empty_rows(0)),
    };
    let rows: Vec<Vec<f64>> = vectors.into_iter().map(|v| v.values).collect();
    FeatureMatrix::from_named_rows(names, &rows)
}

/// Computes the requested feature sets, decoding each recording at most once.
pub fn compute_raw(ds: &LabeledDataset, sources: &FeatureSources, sets: &[FeatureSet], mfcc: &MfccParams) -> Result<RawFeatures> {
    let want_acoustic = sets.contains(&FeatureSet::Acoustic) && sources.acoustic_table.is_none();
    let want_mfcc = sets.contains(&FeatureSet::Mfcc);
    let mut out = RawFeatures::default();
    if want_acoustic || want_mfcc {
        log::info!("{}: extracting audio features from {} recordings", ds.name, ds.len());
        let per_file: Vec<(Option<FeatureVector<f64>>, Option<MfccMatrix<f64>>)> = ds
            .records
            .par_iter()
            .map(|r| {
                let path = audio_path(&sources.audio_root, r);
                let rec = load_audio(&path).map_err(|e| with_context(&path, e))?;
                let a = want_acoustic.then(|| extract_acoustic(&rec));
                let m = if want_mfcc {
                    Some(extract_mfcc(&rec, mfcc).map_err(|e| with_context(&path, e))?)
                } else {
                    None
                };
                Ok((a, m))
            })
            .collect::<Result<_>>()?;
        let (a, m): (Vec<_>, Vec<_>) = per_file.into_iter().unzip();
        if want_acoustic {
            out.acoustic = Some(rows_of(a.into_iter().flatten().collect())?);
        }
        if want_mfcc {
            out.mfcc = Some(m.into_iter().flatten().collect());
        }
    }
    if sets.contains(&FeatureSet::Acoustic) {
        if let Some(table) = &sources.acoustic_table {
            let ids: Vec<&str> = ds.records.iter().map(|r| r.id.as_str()).collect();
            let m = table.lookup(&ids)?;
            if m.ncols() != ACOUSTIC_SLOTS.len() {
                log::warn!("acoustic table has {} columns, expected {}", m.ncols(), ACOUSTIC_SLOTS.len());
            }
            out.acoustic = Some(m);
        }
    }
    if sets.contains(&FeatureSet::Embedding) {
        let emb = sources
            .embeddings
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{}: no embedding file configured", ds.name)))?;
        let pooled = ds
            .records
            .iter()
            .map(|r| {
                emb.get(&r.id)
                    .map(mean_pool)
                    .ok_or_else(|| Error::InvalidInput(format!("{}: no embedding for recording `{}`", ds.name, r.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.embedding = Some(rows_of(pooled)?);
    }
    Ok(out)
}

/// MFCC spec derived from training recordings only.
pub fn mfcc_spec(train: &RawFeatures, params: &MfccParams) -> Result<Option<MfccSpec>> {
    match train.mfcc_frame_counts() {
        Some(counts) => Ok(Some(MfccSpec {
            params: params.clone(),
            target_frames: mfcc_target_frames(&counts)?,
        })),
        None => Ok(None),
    }
}

/// Feature vector for a single decoded recording.
pub fn recording_features(set: FeatureSet, rec: &Recording<f64>, mfcc: Option<&MfccSpec>) -> Result<Vec<f64>> {
    match set {
        FeatureSet::Acoustic => Ok(extract_acoustic(rec).values),
        FeatureSet::Mfcc => {
            let spec = mfcc.ok_or_else(|| Error::Config("MFCC bundle without MFCC settings".into()))?;
            Ok(standardize_mfcc(&extract_mfcc(rec, &spec.params)?, spec.target_frames).values)
        }
        FeatureSet::Embedding => Err(Error::Config("embeddings are read from file, not computed from audio".into())),
    }
}
