//! Model bundles: a short text header followed by a JSON payload whose
//! numeric blocks are base64-encoded little-endian `f64`.
//!
//! ```text
//! voxbench-bundle
//! schema_version: 1
//! cell: svm__mfcc__voice
//! checksum-sha256: 9f86d0...
//! ---
//! { ...payload... }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifiers::{Algorithm, HyperParams};
use crate::error::{Error, Result};
use crate::features::{FeatureSet, MfccParams};
use crate::matrix::FeatureMatrix;
use crate::model_selection::{FittedPipeline, SelectScope};
use crate::preprocessing::{InputVariant, SideLayout};

pub const SCHEMA_VERSION: u32 = 1;
const MAGIC: &str = "voxbench-bundle";

/// MFCC settings a bundle needs to rebuild its input vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccSpec {
    pub params: MfccParams,
    pub target_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub cv: u64,
    pub bootstrap: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub cell_id: String,
    pub feature_set: FeatureSet,
    pub input_variant: InputVariant,
    pub algorithm: Algorithm,
    pub hyperparams: HyperParams,
    pub select_scope: SelectScope,
    pub side_layout: SideLayout,
    /// Names of the audio feature columns the pipeline expects.
    pub audio_features: Vec<String>,
    pub mfcc: Option<MfccSpec>,
    pub pipeline: FittedPipeline<f64>,
    pub seeds: Seeds,
    pub cv_mean_balanced_accuracy: f64,
    pub deviation_notes: Vec<String>,
}

impl ModelBundle {
    pub fn score(&self, audio: &FeatureMatrix<f64>, side: Option<&FeatureMatrix<f64>>) -> Result<Vec<f64>> {
        self.pipeline.score(audio, side)
    }

    /// Bundle file contents.
    pub fn to_text(&self) -> Result<String> {
        let payload = serde_json::to_string_pretty(self)?;
        let digest = hex(&Sha256::digest(payload.as_bytes()));
        Ok(format!(
            "{MAGIC}\nschema_version: {}\ncell: {}\nchecksum-sha256: {digest}\n---\n{payload}\n",
            self.schema_version, self.cell_id
        ))
    }

    /// Parses bundle text. The schema version is checked before the checksum
    /// so that files from other versions are refused by name.
    pub fn from_text(text: &str) -> Result<Self> {
        let (header, payload) = text
            .split_once("\n---\n")
            .ok_or_else(|| Error::BundleFormat("missing `---` separator".into()))?;
        let mut lines = header.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(Error::BundleFormat(format!("first line is not `{MAGIC}`")));
        }
        let mut version = None;
        let mut checksum = None;
        for line in lines {
            if let Some((k, v)) = line.split_once(':') {
                match k.trim() {
                    "schema_version" => {
                        version = Some(v.trim().parse::<u32>().map_err(|_| {
                            Error::BundleFormat(format!("bad schema_version `{}`", v.trim()))
                        })?)
                    }
                    "checksum-sha256" => checksum = Some(v.trim().to_string()),
                    _ => {}
                }
            }
        }
        let version = version.ok_or_else(|| Error::BundleFormat("missing schema_version".into()))?;
        if version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: version,
                supported: SCHEMA_VERSION,
            });
        }
        let checksum = checksum.ok_or_else(|| Error::BundleFormat("missing checksum".into()))?;
        let payload = payload.strip_suffix('\n').unwrap_or(payload);
        if hex(&Sha256::digest(payload.as_bytes())) != checksum {
            return Err(Error::Checksum);
        }
        let bundle: ModelBundle = serde_json::from_str(payload)?;
        if bundle.schema_version != version {
            return Err(Error::BundleFormat("header and payload schema versions differ".into()));
        }
        Ok(bundle)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    std::fs::write(path, bundle.to_text()?).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelBundle::from_text(&text)
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::classifiers::{LogRegParams, LogRegSolver, Penalty};
    use crate::dataset::Label;
    use crate::model_selection::{refit, CvConfig, TrainingData};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_bundle() -> ModelBundle {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![if i % 3 == 0 { 1.5 } else { -1.5 } + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let y: Vec<Label> = (0..60).map(|i| Label::from_bool(i % 3 == 0)).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let hp = HyperParams::LogReg(LogRegParams {
            penalty: Penalty::L2,
            solver: LogRegSolver::Lbfgs,
            ..LogRegParams::default()
        });
        let pipeline = refit(&TrainingData { audio: &x, side: None, labels: &y }, &hp, &CvConfig::default()).unwrap();
        ModelBundle {
            schema_version: SCHEMA_VERSION,
            cell_id: "logreg__acoustic__voice".into(),
            feature_set: FeatureSet::Acoustic,
            input_variant: InputVariant::Voice,
            algorithm: Algorithm::LogReg,
            hyperparams: hp,
            select_scope: SelectScope::Fold,
            side_layout: SideLayout::new(InputVariant::Voice, &[], false),
            audio_features: x.names().to_vec(),
            mfcc: None,
            pipeline,
            seeds: Seeds { split: 42, cv: 42, bootstrap: 42 },
            cv_mean_balanced_accuracy: 0.9,
            deviation_notes: vec!["example".into()],
        }
    }

    #[test]
    fn round_trip_predicts_identically() {
        let b = toy_bundle();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vxb");
        save_bundle(&b, &path).unwrap();
        let back = load_bundle(&path).unwrap();
        assert_eq!(back, b);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let probe = FeatureMatrix::from_rows(&(0..100).map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect::<Vec<_>>()).unwrap();
        let (s1, s2) = (b.score(&probe, None).unwrap(), back.score(&probe, None).unwrap());
        assert!(s1.iter().zip(&s2).all(|(a, c)| a.to_bits() == c.to_bits()));
    }

    #[test]
    fn tampering_is_detected() {
        let text = toy_bundle().to_text().unwrap();
        let pos = text.find("\"cv_mean_balanced_accuracy\"").unwrap();
        let mut bytes = text.into_bytes();
        bytes[pos + 1] ^= 0x01;
        let tampered = String::from_utf8(bytes).unwrap();
        assert!(matches!(ModelBundle::from_text(&tampered), Err(Error::Checksum)));
    }

    #[test]
    fn future_schema_is_refused_by_name() {
        let text = toy_bundle().to_text().unwrap().replace("schema_version: 1", "schema_version: 7");
        match ModelBundle::from_text(&text) {
            Err(e @ Error::SchemaVersion { found: 7, supported: 1 }) => {
                assert!(e.to_string().contains('7') && e.to_string().contains('1'));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(ModelBundle::from_text("hello"), Err(Error::BundleFormat(_))));
    }
}
