//! The model matrix: every (feature set, input variant, algorithm) cell is
//! tuned by cross-validation on the training split, refitted, evaluated on the
//! held-out split and on external datasets, and saved as a bundle.
//!
//! Run directory layout:
//!
//! ```text
//! <out>/run.json                    summary of every cell
//! <out>/split/train.csv, test.csv   the manifests actually used
//! <out>/cells/<cell-id>/            bundle.vxb, cv.json, holdout.json,
//!                                   predictions.csv, fairness.json,
//!                                   external/<name>.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::label_of;
use crate::config::{CellKey, DatasetConfig, RunConfig};
use crate::dataset::{stratified_split, write_manifest, Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, BootstrapConfig, MetricReport};
use crate::extract::{compute_raw, mfcc_spec, FeatureSources, RawFeatures};
use crate::features::FeatureSet;
use crate::matrix::FeatureMatrix;
use crate::model_selection::{grid_search, refit, Balancing, CvConfig, CvResult, TrainingData};
use crate::persist::{save_bundle, MfccSpec, ModelBundle, Seeds, SCHEMA_VERSION};
use crate::preprocessing::SideLayout;
use crate::stats::{fairness_battery, FairnessReport};

/// Audio feature matrices for one dataset, keyed by feature set. A set whose
/// extraction failed holds the error message instead.
type FeatureMap = BTreeMap<FeatureSet, std::result::Result<FeatureMatrix<f64>, String>>;

/// One evaluation dataset besides the held-out split.
#[derive(Debug, Clone)]
pub struct ExternalData {
    pub name: String,
    pub dataset: LabeledDataset,
    pub features: FeatureMap,
}

/// Everything the cells share: splits and their feature matrices.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub train_features: FeatureMap,
    pub test_features: FeatureMap,
    pub mfcc: Option<MfccSpec>,
    pub external: Vec<ExternalData>,
}

fn compute_map(
    ds: &LabeledDataset,
    sources: &FeatureSources,
    sets: &[FeatureSet],
    cfg: &RunConfig,
    target_frames: Option<usize>,
) -> (FeatureMap, Option<RawFeatures>) {
    let finish = |raw: &RawFeatures, set: FeatureSet| raw.matrix(set, target_frames).map_err(|e| e.to_string());
    match compute_raw(ds, sources, sets, &cfg.mfcc) {
        Ok(raw) => {
            let map = sets.iter().map(|&s| (s, finish(&raw, s))).collect();
            (map, Some(raw))
        }
        // Retry set by set so one broken source does not sink the others.
        Err(_) => {
            let map = sets
                .iter()
                .map(|&s| {
                    let m = compute_raw(ds, sources, &[s], &cfg.mfcc)
                        .map_err(|e| e.to_string())
                        .and_then(|raw| finish(&raw, s));
                    (s, m)
                })
                .collect();
            (map, None)
        }
    }
}

/// Splits the dataset and extracts every configured feature set.
pub fn prepare(cfg: &RunConfig) -> Result<PreparedData> {
    let full = cfg.dataset.load()?;
    let (train, test) = match cfg.dataset.load_test()? {
        Some(test) => (full, test),
        None => stratified_split(&full, cfg.test_fraction, cfg.seed)?,
    };
    log::info!(
        "{}: {} training rows ({} malignant), {} held-out rows ({} malignant)",
        train.name,
        train.len(),
        train.count(Label::Malignant),
        test.len(),
        test.count(Label::Malignant)
    );
    let sources = cfg.dataset.sources(cfg.audio_root.as_deref())?;
    let sets = &cfg.feature_sets;

    // MFCC target length comes from the training recordings alone.
    let (mut train_features, train_raw) = compute_map(&train, &sources, sets, cfg, None);
    let mut mfcc = None;
    if sets.contains(&FeatureSet::Mfcc) {
        let raw = match train_raw {
            Some(r) => Ok(r),
            None => compute_raw(&train, &sources, &[FeatureSet::Mfcc], &cfg.mfcc),
        };
        let entry = raw.and_then(|r| {
            let spec = mfcc_spec(&r, &cfg.mfcc)?
                .ok_or_else(|| Error::Config("MFCC matrices were not computed".into()))?;
            let m = r.matrix(FeatureSet::Mfcc, Some(spec.target_frames));
            mfcc = Some(spec);
            m
        });
        train_features.insert(FeatureSet::Mfcc, entry.map_err(|e| e.to_string()));
    }
    let target = mfcc.as_ref().map(|m: &MfccSpec| m.target_frames);
    let (test_features, _) = compute_map(&test, &sources, sets, cfg, target);

    let external = cfg
        .external
        .iter()
        .map(|ext| load_external(ext, cfg, target))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedData {
        train,
        test,
        train_features,
        test_features,
        mfcc,
        external,
    })
}

fn load_external(ext: &DatasetConfig, cfg: &RunConfig, target: Option<usize>) -> Result<ExternalData> {
    let dataset = ext.load()?;
    let sources = ext.sources(cfg.audio_root.as_deref())?;
    let (features, _) = compute_map(&dataset, &sources, &cfg.feature_sets, cfg, target);
    Ok(ExternalData {
        name: dataset.name.clone(),
        dataset,
        features,
    })
}

/// Result of evaluating one cell on one external dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalOutcome {
    Evaluated(MetricReport),
    Skipped { reason: String },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub id: String,
    pub key: CellKey,
    pub status: CellStatus,
    pub error: Option<String>,
    pub hyperparams: Option<String>,
    pub cv_mean_balanced_accuracy: Option<f64>,
    pub holdout: Option<MetricReport>,
    pub fairness: Option<FairnessReport>,
    pub external: BTreeMap<String, ExternalOutcome>,
    pub deviation_notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub n_train: usize,
    pub n_train_malignant: usize,
    pub n_test: usize,
    pub n_test_malignant: usize,
    pub mfcc_target_frames: Option<usize>,
    pub cells: Vec<CellOutcome>,
}

impl RunSummary {
    pub fn n_failed(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed).count()
    }

    pub fn cell(&self, key: &CellKey) -> Option<&CellOutcome> {
        self.cells.iter().find(|c| &c.key == key)
    }

    pub fn load(out: &Path) -> Result<Self> {
        let p = out.join("run.json");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn seeds_of(cfg: &RunConfig) -> Seeds {
    Seeds {
        split: cfg.seed,
        cv: cfg.seed,
        bootstrap: cfg.seed,
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Side block for `ds` under `layout`; `None` for voice-only cells.
fn side_block(layout: &SideLayout, ds: &LabeledDataset) -> Option<FeatureMatrix<f64>> {
    (!layout.is_empty()).then(|| layout.extract(&ds.records))
}

/// Everything a finished cell produced, before it is written out.
struct CellArtifacts {
    outcome: CellOutcome,
    bundle: ModelBundle,
    cv: CvResult,
    scores: Vec<f64>,
}

fn feature(map: &FeatureMap, set: FeatureSet) -> Result<&FeatureMatrix<f64>> {
    match map.get(&set) {
        Some(Ok(m)) => Ok(m),
        Some(Err(e)) => Err(Error::InvalidInput(format!("{set} features unavailable: {e}"))),
        None => Err(Error::Config(format!("{set} features were not requested"))),
    }
}

fn run_cell_inner(key: CellKey, data: &PreparedData, cfg: &RunConfig) -> Result<CellArtifacts> {
    let id = key.id();
    let layout = SideLayout::new(key.variant, &data.train.symptom_columns, data.train.has_lifestyle);
    if key.variant.uses_symptoms() && data.train.symptom_columns.is_empty() {
        return Err(Error::Config("symptom variant but the training manifest declares no symptom columns".into()));
    }
    let audio = feature(&data.train_features, key.feature_set)?;
    let side = side_block(&layout, &data.train);
    let labels = data.train.labels();
    let train = TrainingData {
        audio,
        side: side.as_ref(),
        labels: &labels,
    };
    let cv_cfg = CvConfig {
        k: cfg.folds,
        seed: cfg.seed,
        select_scope: cfg.select_scope,
        preprocess: cfg.preprocess.clone(),
    };
    let cells = cfg.grid.cells(key.algorithm);
    log::info!("{id}: {} grid cells x {} folds", cells.len(), cfg.folds);
    let cv = grid_search(&train, &cells, &cv_cfg)?;
    let best = cv.best();
    let cv_mean = best.mean.ok_or_else(|| {
        Error::InvalidInput(format!("{id}: every grid cell failed; first error: {}", best.error.clone().unwrap_or_default()))
    })?;
    let pipeline = refit(&train, &best.params, &cv_cfg)?;

    let mut notes = Vec::new();
    if cv.balancing == Balancing::Smote {
        notes.push("class imbalance handled by SMOTE on the training rows".to_string());
    }
    if !cv.flagged_folds.is_empty() {
        notes.push(format!("validation folds {:?} held a single class", cv.flagged_folds));
    }
    let failed_cells = cv.cells.iter().filter(|c| c.error.is_some()).count();
    if failed_cells > 0 {
        notes.push(format!("{failed_cells} grid cell(s) failed during cross-validation"));
    }

    let bcfg = BootstrapConfig {
        n_resamples: cfg.bootstrap_resamples,
        seed: cfg.seed,
        ..Default::default()
    };
    let test_audio = feature(&data.test_features, key.feature_set)?;
    let test_side = side_block(&layout, &data.test);
    let scores = pipeline.score(test_audio, test_side.as_ref())?;
    let truth = data.test.labels();
    let holdout = evaluate(&truth, &scores, &bcfg)?;
    let predicted: Vec<Label> = scores.iter().map(|&s| label_of(s)).collect();
    let fairness = fairness_battery(&data.test.records, &predicted)?;

    let mut external = BTreeMap::new();
    for ext in &data.external {
        let outcome = (|| -> Result<ExternalOutcome> {
            if let Some(missing) = layout.symptom_columns.iter().find(|c| !ext.dataset.symptom_columns.contains(c)) {
                return Ok(ExternalOutcome::Skipped {
                    reason: format!("{} has no symptom column `{missing}`", ext.name),
                });
            }
            if layout.lifestyle && !ext.dataset.has_lifestyle {
                return Ok(ExternalOutcome::Skipped {
                    reason: format!("{} has no smoking/drinking columns", ext.name),
                });
            }
            let a = match ext.features.get(&key.feature_set) {
                Some(Ok(m)) => m,
                Some(Err(e)) => {
                    return Ok(ExternalOutcome::Skipped {
                        reason: format!("{} features unavailable: {e}", key.feature_set),
                    })
                }
                None => {
                    return Ok(ExternalOutcome::Skipped {
                        reason: format!("{} features not computed", key.feature_set),
                    })
                }
            };
            let s = side_block(&layout, &ext.dataset);
            let sc = pipeline.score(a, s.as_ref())?;
            Ok(ExternalOutcome::Evaluated(evaluate(&ext.dataset.labels(), &sc, &bcfg)?))
        })()
        .unwrap_or_else(|e| ExternalOutcome::Failed { error: e.to_string() });
        external.insert(ext.name.clone(), outcome);
    }

    let bundle = ModelBundle {
        schema_version: SCHEMA_VERSION,
        cell_id: id.clone(),
        feature_set: key.feature_set,
        input_variant: key.variant,
        algorithm: key.algorithm,
        hyperparams: best.params.clone(),
        select_scope: cfg.select_scope,
        side_layout: layout,
        audio_features: audio.names().to_vec(),
        mfcc: (key.feature_set == FeatureSet::Mfcc).then(|| data.mfcc.clone()).flatten(),
        pipeline,
        seeds: seeds_of(cfg),
        cv_mean_balanced_accuracy: cv_mean,
        deviation_notes: notes.clone(),
    };
    Ok(CellArtifacts {
        outcome: CellOutcome {
            id,
            key,
            status: CellStatus::Ok,
            error: None,
            hyperparams: Some(best.params.describe()),
            cv_mean_balanced_accuracy: Some(cv_mean),
            holdout: Some(holdout),
            fairness: Some(fairness),
            external,
            deviation_notes: notes,
        },
        bundle,
        cv,
        scores,
    })
}

fn write_cell(dir: &Path, art: &CellArtifacts, test: &LabeledDataset) -> Result<()> {
    save_bundle(&art.bundle, &dir.join("bundle.vxb"))?;
    write_json(&dir.join("cv.json"), &art.cv)?;
    if let Some(h) = &art.outcome.holdout {
        write_json(&dir.join("holdout.json"), h)?;
    }
    if let Some(f) = &art.outcome.fairness {
        write_json(&dir.join("fairness.json"), f)?;
    }
    if !art.outcome.external.is_empty() {
        let ext = dir.join("external");
        create_dir(&ext)?;
        for (name, o) in &art.outcome.external {
            write_json(&ext.join(format!("{name}.json")), o)?;
        }
    }
    let mut w = csv::Writer::from_path(dir.join("predictions.csv"))?;
    w.write_record(["id", "label", "score", "predicted"])?;
    for (r, s) in test.records.iter().zip(&art.scores) {
        w.write_record([r.id.as_str(), &r.label.to_string(), &format!("{s:e}"), &label_of(*s).to_string()])?;
    }
    w.flush().map_err(|e| Error::io(dir.join("predictions.csv"), e))?;
    Ok(())
}

/// Runs one cell and publishes its directory atomically. Failures are
/// captured in the outcome rather than returned.
pub fn run_cell(key: CellKey, data: &PreparedData, cfg: &RunConfig) -> CellOutcome {
    let id = key.id();
    let cells_dir = cfg.out.join("cells");
    let result = run_cell_inner(key, data, cfg).and_then(|art| {
        let tmp = cells_dir.join(format!(".tmp-{id}"));
        let _ = std::fs::remove_dir_all(&tmp);
        create_dir(&tmp)?;
        write_cell(&tmp, &art, &data.test)?;
        let dest = cells_dir.join(&id);
        if dest.exists() {
            std::fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
        }
        std::fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))?;
        Ok(art.outcome)
    });
    match result {
        Ok(o) => {
            log::info!("{id}: done");
            o
        }
        Err(e) => {
            log::error!("{id}: {e}");
            CellOutcome {
                id,
                key,
                status: CellStatus::Failed,
                error: Some(e.to_string()),
                hyperparams: None,
                cv_mean_balanced_accuracy: None,
                holdout: None,
                fairness: None,
                external: BTreeMap::new(),
                deviation_notes: Vec::new(),
            }
        }
    }
}

/// Thread pool honouring `jobs` (0 means every core).
pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Copy of `ds` whose `audio_path` values no longer depend on an audio root.
pub fn with_resolved_audio(ds: &LabeledDataset, audio_root: &Path) -> LabeledDataset {
    let mut out = ds.clone();
    for r in &mut out.records {
        let p = crate::extract::audio_path(audio_root, r);
        let p = std::fs::canonicalize(&p).unwrap_or(p);
        r.audio_path = p.to_string_lossy().into_owned();
    }
    out
}

fn write_split(out: &Path, data: &PreparedData, audio_root: &Path) -> Result<()> {
    let dir = out.join("split");
    create_dir(&dir)?;
    for (name, ds) in [("train.csv", &data.train), ("test.csv", &data.test)] {
        let p = dir.join(name);
        let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        write_manifest(&with_resolved_audio(ds, audio_root), f)?;
    }
    Ok(())
}

/// Runs every cell of the configured matrix and writes `run.json`.
///
/// Cell failures do not abort the run; check [`RunSummary::n_failed`].
pub fn run_benchmark(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    create_dir(&cfg.out.join("cells"))?;
    let pool = thread_pool(cfg.jobs)?;
    pool.install(|| {
        let data = prepare(cfg)?;
        let root = cfg.dataset.sources(cfg.audio_root.as_deref())?.audio_root;
        write_split(&cfg.out, &data, &root)?;
        let cells: Vec<CellOutcome> = cfg.cells().into_par_iter().map(|k| run_cell(k, &data, cfg)).collect();
        let summary = RunSummary {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            seeds: seeds_of(cfg),
            n_train: data.train.len(),
            n_train_malignant: data.train.count(Label::Malignant),
            n_test: data.test.len(),
            n_test_malignant: data.test.count(Label::Malignant),
            mfcc_target_frames: data.mfcc.as_ref().map(|m| m.target_frames),
            cells,
        };
        write_json(&cfg.out.join("run.json"), &summary)?;
        Ok(summary)
    })
}

/// Path of a cell's bundle inside a run directory.
pub fn bundle_path(out: &Path, key: &CellKey) -> PathBuf {
    out.join("cells").join(key.id()).join("bundle.vxb")
}

/// Scores every record of `ds` with a saved bundle.
pub fn score_dataset(bundle: &ModelBundle, ds: &LabeledDataset, sources: &FeatureSources) -> Result<Vec<f64>> {
    let params = bundle.mfcc.as_ref().map(|m| m.params.clone()).unwrap_or_default();
    let raw = compute_raw(ds, sources, &[bundle.feature_set], &params)?;
    let audio = raw.matrix(bundle.feature_set, bundle.mfcc.as_ref().map(|m| m.target_frames))?;
    if audio.ncols() != bundle.audio_features.len() {
        return Err(Error::DimensionMismatch {
            expected: bundle.audio_features.len(),
            got: audio.ncols(),
        });
    }
    let side = side_block(&bundle.side_layout, ds);
    bundle.score(&audio, side.as_ref())
}
