//! Run configuration, read from TOML. Every field has a default; relative
//! paths are resolved against the directory of the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::Algorithm;
use crate::dataset::{load_manifest, LabelMap, LabeledDataset, SymptomSchema};
use crate::error::{Error, Result};
use crate::extract::FeatureSources;
use crate::features::{load_embeddings, load_feature_table, FeatureSet, MfccParams};
use crate::model_selection::{ParamGrid, SelectScope};
use crate::preprocessing::{InputVariant, PreprocessConfig};

/// One labelled dataset and the files that describe it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Display name; defaults to the manifest file stem.
    pub name: Option<String>,
    pub manifest: PathBuf,
    /// Label map file. Without one, `LabelMap::femh()` applies.
    pub label_map: Option<PathBuf>,
    /// Symptom schema: one column name per line.
    pub symptoms: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Precomputed acoustic feature table used instead of extraction.
    pub acoustic_table: Option<PathBuf>,
    /// Root for relative `audio_path` values; defaults to the run's `audio_root`.
    pub audio_root: Option<PathBuf>,
    /// Optional held-out manifest. When set, `manifest` is the training set
    /// and no split is drawn.
    pub test_manifest: Option<PathBuf>,
}

impl DatasetConfig {
    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.manifest);
        for p in [
            &mut self.label_map,
            &mut self.symptoms,
            &mut self.embeddings,
            &mut self.acoustic_table,
            &mut self.audio_root,
            &mut self.test_manifest,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
    }

    pub fn label_map(&self) -> Result<LabelMap> {
        match &self.label_map {
            Some(p) => LabelMap::from_file(p),
            None => Ok(LabelMap::femh()),
        }
    }

    pub fn schema(&self) -> Result<Option<SymptomSchema>> {
        self.symptoms.as_deref().map(SymptomSchema::from_file).transpose()
    }

    fn load_one(&self, path: &Path) -> Result<LabeledDataset> {
        let mut ds = load_manifest(path, &self.label_map()?, self.schema()?.as_ref())?;
        if let Some(n) = &self.name {
            ds.name = n.clone();
        }
        Ok(ds)
    }

    /// The manifest rows.
    pub fn load(&self) -> Result<LabeledDataset> {
        self.load_one(&self.manifest)
    }

    /// The held-out manifest, if one is configured.
    pub fn load_test(&self) -> Result<Option<LabeledDataset>> {
        self.test_manifest.as_deref().map(|p| self.load_one(p)).transpose()
    }

    /// Audio root, embeddings and acoustic table for feature extraction.
    pub fn sources(&self, default_root: Option<&Path>) -> Result<FeatureSources> {
        let audio_root = self
            .audio_root
            .clone()
            .or_else(|| default_root.map(Path::to_path_buf))
            .or_else(|| self.manifest.parent().map(Path::to_path_buf))
            .unwrap_or_default();
        Ok(FeatureSources {
            audio_root,
            embeddings: self.embeddings.as_deref().map(load_embeddings::<f64>).transpose()?,
            acoustic_table: self.acoustic_table.as_deref().map(load_feature_table).transpose()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub audio_root: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub test_fraction: f64,
    pub folds: usize,
    pub feature_sets: Vec<FeatureSet>,
    pub algorithms: Vec<Algorithm>,
    pub variants: Vec<InputVariant>,
    pub select_scope: SelectScope,
    pub bootstrap_resamples: usize,
    pub mfcc: MfccParams,
    pub preprocess: PreprocessConfig,
    pub dataset: DatasetConfig,
    pub external: Vec<DatasetConfig>,
    pub grid: ParamGrid,
    /// TOML file holding a `[svm]`/`[mlp]`/`[logreg]` grid; replaces `grid`.
    pub grid_file: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("runs/latest"),
            audio_root: None,
            jobs: 1,
            test_fraction: 0.33,
            folds: 5,
            feature_sets: FeatureSet::ALL.to_vec(),
            algorithms: Algorithm::ALL.to_vec(),
            variants: InputVariant::ALL.to_vec(),
            select_scope: SelectScope::Fold,
            bootstrap_resamples: 1000,
            mfcc: MfccParams::default(),
            preprocess: PreprocessConfig::default(),
            dataset: DatasetConfig::default(),
            external: Vec::new(),
            grid: ParamGrid::default(),
            grid_file: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.load_grid_file()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.audio_root, &mut self.grid_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if self.out.is_relative() {
            self.out = base.join(&self.out);
        }
        self.dataset.resolve(base);
        for e in &mut self.external {
            e.resolve(base);
        }
    }

    pub fn load_grid_file(&mut self) -> Result<()> {
        if let Some(p) = &self.grid_file {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            self.grid = ParamGrid::from_toml(&text)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.bootstrap_resamples < 100 {
            return bad(format!("bootstrap_resamples must be at least 100, got {}", self.bootstrap_resamples));
        }
        if self.feature_sets.is_empty() || self.algorithms.is_empty() || self.variants.is_empty() {
            return bad("feature_sets, algorithms and variants must be non-empty".into());
        }
        if self.dataset.manifest.as_os_str().is_empty() {
            return bad("[dataset] manifest is required".into());
        }
        if self.variants.iter().any(|v| v.uses_symptoms()) && self.dataset.symptoms.is_none() {
            return bad("symptom variants need a symptom schema ([dataset] symptoms)".into());
        }
        if self.feature_sets.contains(&FeatureSet::Embedding) && self.dataset.embeddings.is_none() {
            return bad("the embedding feature set needs [dataset] embeddings".into());
        }
        self.grid.validate()
    }

    /// Every (feature set, variant, algorithm) cell in report order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &feature_set in &self.feature_sets {
            for &variant in &self.variants {
                for &algorithm in &self.algorithms {
                    out.push(CellKey {
                        feature_set,
                        variant,
                        algorithm,
                    });
                }
            }
        }
        out
    }
}

/// Identifies one trained model of the benchmark matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub feature_set: FeatureSet,
    pub variant: InputVariant,
    pub algorithm: Algorithm,
}

impl CellKey {
    /// File-system safe identifier, e.g. `mlp__mfcc__voice-demo`.
    pub fn id(&self) -> String {
        format!(
            "{}__{}__{}",
            self.algorithm.as_str(),
            self.feature_set.as_str(),
            self.variant.as_str().replace('+', "-")
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_the_full_matrix() {
        let cfg = RunConfig::default();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 36);
        let mut ids: Vec<String> = cells.iter().map(CellKey::id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 36);
        assert!(ids.contains(&"logreg__embedding__voice-demo-symptoms".to_string()));
    }

    #[test]
    fn parses_partial_toml() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 7
            algorithms = ["svm"]
            variants = ["voice", "voice+demo"]
            [dataset]
            manifest = "data/femh.csv"
            [mfcc]
            n_mels = 32
            [grid.svm]
            C = [1.0]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.algorithms, vec![Algorithm::Svm]);
        assert_eq!(cfg.mfcc.n_mels, 32);
        assert_eq!(cfg.mfcc.hop_samples, 160);
        assert_eq!(cfg.grid.svm.c, vec![1.0]);
        assert_eq!(cfg.test_fraction, 0.33);
        assert_eq!(cfg.cells().len(), 6);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("sede = 1").is_err());
        let mut cfg = RunConfig {
            test_fraction: 1.5,
            ..Default::default()
        };
        cfg.dataset.manifest = "m.csv".into();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.test_fraction = 0.33;
        cfg.dataset.embeddings = Some("e.csv".into());
        assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.contains("symptom")));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut cfg = RunConfig::from_toml("[dataset]\nmanifest = \"a/m.csv\"\n[[external]]\nmanifest = \"/abs/x.csv\"").unwrap();
        cfg.resolve_paths(Path::new("/base"));
        assert_eq!(cfg.dataset.manifest, PathBuf::from("/base/a/m.csv"));
        assert_eq!(cfg.external[0].manifest, PathBuf::from("/abs/x.csv"));
        assert_eq!(cfg.out, PathBuf::from("/base/runs/latest"));
    }
}
