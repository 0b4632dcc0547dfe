//! Per-file inference latency of saved bundles.
//!
//! Every file is processed once as a warm-up, then `repeats` more times; the
//! per-file figure is the median of those repeats. Timing runs on a single
//! worker thread and refuses to start while another timing run is active in
//! the same process.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::PatientRecord;
use crate::error::{Error, Result};
use crate::evaluation::percentile;
use crate::extract::{load_audio, recording_features};
use crate::features::{mean_pool, read_embeddings, EmbeddingMatrix, FeatureSet};
use crate::matrix::FeatureMatrix;
use crate::persist::ModelBundle;

static BUSY: AtomicBool = AtomicBool::new(false);

/// Held for the duration of a timing run.
#[derive(Debug)]
pub struct TimingGuard(());

impl TimingGuard {
    pub fn acquire() -> Result<Self> {
        BUSY.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map(|_| TimingGuard(()))
            .map_err(|_| Error::TimingBusy)
    }
}

impl Drop for TimingGuard {
    fn drop(&mut self) {
        BUSY.store(false, Ordering::Release);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Decode, resample, features, preprocessing and prediction.
    EndToEnd,
    /// Decode, resample and feature computation.
    FeatureExtraction,
    /// Parsing and mean-pooling a precomputed embedding (embedding models only).
    LoadPool,
    /// The fitted classifier alone, on an already preprocessed row.
    PredictOnly,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::EndToEnd => "end_to_end",
            Stage::FeatureExtraction => "feature_extraction",
            Stage::LoadPool => "load_pool",
            Stage::PredictOnly => "predict_only",
        }
    }
}

/// One file to time.
#[derive(Debug, Clone)]
pub struct TimingInput {
    pub file_id: String,
    pub audio: PathBuf,
    /// Needed when the model takes demographic or symptom inputs.
    pub record: Option<PatientRecord>,
    /// Embedding text block for this file, in the embedding file format.
    pub embedding_text: Option<String>,
}

/// Embedding file text holding only `id`.
pub fn embedding_text(id: &str, m: &EmbeddingMatrix<f64>) -> String {
    let mut s = format!("id,dim={}\n", m.dim());
    for frame in m.frames() {
        s.push_str(id);
        for v in frame {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileTiming {
    pub file_id: String,
    /// Raw seconds per repeat, warm-up excluded.
    pub raw: BTreeMap<Stage, Vec<f64>>,
    pub median: BTreeMap<Stage, f64>,
    pub score: f64,
    /// Whether every repeat produced a bit-identical score.
    pub stable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub min: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

impl StageSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            median: percentile(&v, 0.5),
            p95: percentile(&v, 0.95),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub model_id: String,
    pub environment: String,
    pub repeats: usize,
    pub files: Vec<FileTiming>,
    /// Files that could not be processed, with the reason.
    pub failures: Vec<(String, String)>,
    pub summary: BTreeMap<Stage, StageSummary>,
}

impl TimingReport {
    /// `model_id,file_id,stage,seconds` rows (per-file medians) followed by
    /// a commented summary block.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model_id,file_id,stage,seconds\n");
        for f in &self.files {
            for (stage, v) in &f.median {
                let _ = writeln!(s, "{},{},{},{v:.9}", self.model_id, f.file_id, stage.as_str());
            }
        }
        let _ = writeln!(s, "# environment: {}", self.environment);
        let _ = writeln!(s, "# repeats: {} (plus one warm-up)", self.repeats);
        for (stage, x) in &self.summary {
            let _ = writeln!(
                s,
                "# {}: min {:.6} median {:.6} p95 {:.6} max {:.6}",
                stage.as_str(),
                x.min,
                x.median,
                x.p95,
                x.max
            );
        }
        for (id, why) in &self.failures {
            let _ = writeln!(s, "# failed {id}: {why}");
        }
        s
    }
}

/// CPU model and core count, for reading timings in context.
pub fn environment_note() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|t| {
            t.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{cpu}; {cores} logical core(s) available; timed on 1 thread")
}

struct OneRun {
    stages: BTreeMap<Stage, f64>,
    score: f64,
}

fn run_once(bundle: &ModelBundle, input: &TimingInput) -> Result<OneRun> {
    let mut stages = BTreeMap::new();
    let start = Instant::now();
    let rec = load_audio(&input.audio)?;
    let features = match bundle.feature_set {
        FeatureSet::Embedding => {
            let text = input
                .embedding_text
                .as_deref()
                .ok_or_else(|| Error::InvalidInput(format!("{}: no embedding for this file", input.file_id)))?;
            let t = Instant::now();
            let map = read_embeddings::<f64, _>(text.as_bytes())?;
            let m = map
                .get(&input.file_id)
                .ok_or_else(|| Error::InvalidInput(format!("{}: embedding block has another id", input.file_id)))?;
            let v = mean_pool(m).values;
            stages.insert(Stage::LoadPool, t.elapsed().as_secs_f64());
            v
        }
        set => recording_features(set, &rec, bundle.mfcc.as_ref())?,
    };
    stages.insert(Stage::FeatureExtraction, start.elapsed().as_secs_f64());
    let audio = FeatureMatrix::from_named_rows(bundle.audio_features.clone(), &[features])?;
    let side = if bundle.side_layout.is_empty() {
        None
    } else {
        let r = input.record.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!("{}: model needs demographic/symptom inputs", input.file_id))
        })?;
        Some(bundle.side_layout.extract::<f64>(std::slice::from_ref(r)))
    };
    let x = bundle.pipeline.transform(&audio, side.as_ref())?;
    let t = Instant::now();
    let score = bundle.pipeline.model.score(&x)?[0];
    stages.insert(Stage::PredictOnly, t.elapsed().as_secs_f64());
    stages.insert(Stage::EndToEnd, start.elapsed().as_secs_f64());
    Ok(OneRun { stages, score })
}

/// Times `bundle` on every input. Per-file failures are recorded, not fatal.
pub fn time_bundle(bundle: &ModelBundle, inputs: &[TimingInput], repeats: usize) -> Result<TimingReport> {
    if repeats == 0 {
        return Err(Error::Config("timing needs at least one repeat".into()));
    }
    let _guard = TimingGuard::acquire()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut files = Vec::new();
        let mut failures = Vec::new();
        for input in inputs {
            let result = (|| -> Result<FileTiming> {
                let warm = run_once(bundle, input)?;
                let mut raw: BTreeMap<Stage, Vec<f64>> = BTreeMap::new();
                let mut stable = true;
                for _ in 0..repeats {
                    let r = run_once(bundle, input)?;
                    stable &= r.score.to_bits() == warm.score.to_bits();
                    for (s, v) in r.stages {
                        raw.entry(s).or_default().push(v);
                    }
                }
                let median = raw.iter().map(|(s, v)| (*s, StageSummary::of(v).map_or(0.0, |x| x.median))).collect();
                Ok(FileTiming {
                    file_id: input.file_id.clone(),
                    raw,
                    median,
                    score: warm.score,
                    stable,
                })
            })();
            match result {
                Ok(f) => files.push(f),
                Err(e) => failures.push((input.file_id.clone(), e.to_string())),
            }
        }
        let mut per_stage: BTreeMap<Stage, Vec<f64>> = BTreeMap::new();
        for f in &files {
            for (s, v) in &f.median {
                per_stage.entry(*s).or_default().push(*v);
            }
        }
        let summary = per_stage
            .iter()
            .filter_map(|(s, v)| StageSummary::of(v).map(|x| (*s, x)))
            .collect();
        Ok(TimingReport {
            model_id: bundle.cell_id.clone(),
            environment: environment_note(),
            repeats,
            files,
            failures,
            summary,
        })
    })
}

/// Timing inputs for the records of a manifest.
pub fn inputs_for(
    records: &[PatientRecord],
    audio_root: &Path,
    embeddings: Option<&BTreeMap<String, EmbeddingMatrix<f64>>>,
) -> Vec<TimingInput> {
    records
        .iter()
        .map(|r| TimingInput {
            file_id: r.id.clone(),
            audio: crate::extract::audio_path(audio_root, r),
            record: Some(r.clone()),
            embedding_text: embeddings.and_then(|e| e.get(&r.id)).map(|m| embedding_text(&r.id, m)),
        })
        .collect()
}
