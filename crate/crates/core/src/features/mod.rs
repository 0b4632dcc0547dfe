//! Feature extraction: MFCC matrices, the 88-slot acoustic vector and
//! mean-pooled precomputed embeddings.

pub mod acoustic;
pub mod embedding;
pub mod mfcc;
pub mod pitch;
pub mod spectral;
pub mod table;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use acoustic::{extract_acoustic, ACOUSTIC_DIM, ACOUSTIC_SLOTS};
pub use embedding::{load_embeddings, mean_pool, read_embeddings, write_embeddings, EmbeddingMatrix, EMBEDDING_DIM};
pub use mfcc::{extract_mfcc, mfcc_target_frames, standardize_mfcc, MfccExtractor, MfccMatrix, MfccParams, N_MFCC};
pub use table::{load_feature_table, read_feature_table, save_feature_table, write_feature_table, FeatureTable};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "&'static str", try_from = "String")]
pub enum FeatureSet {
    Embedding,
    Acoustic,
    Mfcc,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Embedding, FeatureSet::Acoustic, FeatureSet::Mfcc];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Embedding => "embedding",
            FeatureSet::Acoustic => "acoustic",
            FeatureSet::Mfcc => "mfcc",
        }
    }
}

impl From<FeatureSet> for &'static str {
    fn from(v: FeatureSet) -> Self {
        v.as_str()
    }
}

impl TryFrom<String> for FeatureSet {
    type Error = Error;

    fn try_from(s: String) -> std::result::Result<Self, Error> {
        s.parse()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "embedding" | "embeddings" | "wav2vec" | "wav2vec2" => Ok(FeatureSet::Embedding),
            "acoustic" | "egemaps" => Ok(FeatureSet::Acoustic),
            "mfcc" => Ok(FeatureSet::Mfcc),
            other => Err(Error::Config(format!("unknown feature set `{other}`"))),
        }
    }
}

/// One recording's features with parallel names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
    pub names: Vec<String>,
    pub feature_set: FeatureSet,
}

impl<T> FeatureVector<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
