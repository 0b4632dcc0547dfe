//! Stratified k-fold cross-validated grid search.
//!
//! Every preprocessing state (imputer, scaler, selector, SMOTE) is fitted on
//! the training folds only and then applied to the held-out fold.

pub mod grid;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use grid::{LogRegGrid, MlpGrid, ParamGrid, SvmGrid};

use crate::classifiers::{fit, Algorithm, FittedModel, HyperParams};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::evaluation::confusion;
use crate::matrix::FeatureMatrix;
use crate::preprocessing::{compute_class_weights, smote_oversample, ClassWeights, PreprocessConfig, Preprocessor};
use crate::scalar::Scalar;

/// Fold index (`0..k`) for every sample.
///
/// Each class is shuffled on its own and dealt round-robin, continuing from
/// where the previous class stopped so fold sizes also stay within one.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![usize::MAX; labels.len()];
    let mut next = 0;
    for class in [Label::Benign, Label::Malignant] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::Stratification(format!(
                "class {class} has {} member(s), fewer than {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(fold)
}

/// Whether the feature selector is refitted inside every fold or fitted once
/// on the whole training set before cross-validation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectScope {
    #[default]
    Fold,
    Global,
}

impl fmt::Display for SelectScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectScope::Fold => "fold",
            SelectScope::Global => "global",
        })
    }
}

impl FromStr for SelectScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fold" => Ok(SelectScope::Fold),
            "global" => Ok(SelectScope::Global),
            other => Err(Error::Config(format!("unknown select scope `{other}` (fold|global)"))),
        }
    }
}

/// How class imbalance is handled for an algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balancing {
    ClassWeights,
    Smote,
}

impl Balancing {
    /// The MLP has no per-sample loss weights in common toolkits, so it is
    /// given SMOTE-augmented training data instead.
    pub fn for_algorithm(a: Algorithm) -> Self {
        match a {
            Algorithm::Mlp => Balancing::Smote,
            Algorithm::Svm | Algorithm::LogReg => Balancing::ClassWeights,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub select_scope: SelectScope,
    pub preprocess: PreprocessConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 42,
            select_scope: SelectScope::Fold,
            preprocess: PreprocessConfig::default(),
        }
    }
}

/// Training rows: the audio feature block, the optional demographic/symptom
/// block, and labels.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a, T> {
    pub audio: &'a FeatureMatrix<T>,
    pub side: Option<&'a FeatureMatrix<T>>,
    pub labels: &'a [Label],
}

impl<'a, T: Scalar> TrainingData<'a, T> {
    fn check(&self) -> Result<()> {
        let n = self.labels.len();
        if self.audio.nrows() != n || self.side.is_some_and(|s| s.nrows() != n) {
            return Err(Error::InvalidInput("feature blocks and labels differ in length".into()));
        }
        Ok(())
    }

    fn subset(&self, rows: &[usize]) -> (FeatureMatrix<T>, Option<FeatureMatrix<T>>, Vec<Label>) {
        (
            self.audio.select_rows(rows),
            self.side.map(|s| s.select_rows(rows)),
            rows.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Preprocessed training set ready for a classifier.
struct Prepared<T> {
    x: FeatureMatrix<T>,
    y: Vec<Label>,
    weights: ClassWeights,
}

fn balance<T: Scalar>(x: FeatureMatrix<T>, y: Vec<Label>, how: Balancing, cfg: &CvConfig, seed: u64) -> Result<Prepared<T>> {
    Ok(match how {
        Balancing::ClassWeights => {
            let weights = compute_class_weights(&y)?;
            Prepared { x, y, weights }
        }
        Balancing::Smote => {
            let (x, y) = smote_oversample(&x, &y, cfg.preprocess.smote_k, seed)?;
            Prepared {
                x,
                y,
                weights: ClassWeights::UNIFORM,
            }
        }
    })
}

fn global_selector<T: Scalar>(data: &TrainingData<T>, cfg: &CvConfig) -> Result<Option<crate::preprocessing::SelectorState>> {
    Ok(match cfg.select_scope {
        SelectScope::Fold => None,
        SelectScope::Global => Some(Preprocessor::fit(data.audio, data.side, data.labels, &cfg.preprocess, None)?.selector),
    })
}

/// Preprocessing states fitted on the training part of each fold.
pub fn fold_preprocessors<T: Scalar>(data: &TrainingData<T>, folds: &[usize], cfg: &CvConfig) -> Result<Vec<Preprocessor<T>>> {
    data.check()?;
    let fixed = global_selector(data, cfg)?;
    (0..cfg.k)
        .map(|f| {
            let train: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
            let (a, s, y) = data.subset(&train);
            Preprocessor::fit(&a, s.as_ref(), &y, &cfg.preprocess, fixed.as_ref())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub params: HyperParams,
    /// Balanced accuracy per validation fold, in fold order.
    pub fold_scores: Vec<f64>,
    pub mean: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub algorithm: Algorithm,
    pub k: usize,
    pub seed: u64,
    pub select_scope: SelectScope,
    pub balancing: Balancing,
    pub cells: Vec<CellResult>,
    pub winner: usize,
    /// Folds whose validation part held a single class; the absent class
    /// counted as recall 0 there.
    pub flagged_folds: Vec<usize>,
}

impl CvResult {
    pub fn best(&self) -> &CellResult {
        &self.cells[self.winner]
    }
}

/// Evaluates every cell on every fold and picks the cell with the highest
/// mean balanced accuracy (first enumerated wins ties).
pub fn grid_search<T: Scalar>(data: &TrainingData<T>, cells: &[HyperParams], cfg: &CvConfig) -> Result<CvResult> {
    data.check()?;
    let algorithm = match cells.first() {
        Some(c) => c.algorithm(),
        None => return Err(Error::Config("empty parameter grid".into())),
    };
    if cells.iter().any(|c| c.algorithm() != algorithm) {
        return Err(Error::Config("a grid search covers one algorithm at a time".into()));
    }
    let balancing = Balancing::for_algorithm(algorithm);
    let folds = stratified_kfold(data.labels, cfg.k, cfg.seed)?;
    let fixed = global_selector(data, cfg)?;

    let mut prepared = Vec::with_capacity(cfg.k);
    let mut flagged_folds = Vec::new();
    for f in 0..cfg.k {
        let train: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
        let val: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
        let (a, s, y) = data.subset(&train);
        let pre = Preprocessor::fit(&a, s.as_ref(), &y, &cfg.preprocess, fixed.as_ref())?;
        let x = pre.transform(&a, s.as_ref())?;
        let train_set = balance(x, y, balancing, cfg, cfg.seed.wrapping_add(f as u64))?;
        let (va, vs, vy) = data.subset(&val);
        let vx = pre.transform(&va, vs.as_ref())?;
        let classes = vy.iter().filter(|l| l.is_malignant()).count();
        if classes == 0 || classes == vy.len() {
            flagged_folds.push(f);
        }
        prepared.push((train_set, vx, vy));
    }

    let tasks: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..cfg.k).map(move |f| (c, f))).collect();
    let scores: Vec<Result<f64>> = tasks
        .par_iter()
        .map(|&(c, f)| {
            let (train, vx, vy) = &prepared[f];
            let model = fit(&train.x, &train.y, &cells[c], &train.weights, cfg.seed)?;
            let pred = model.predict(vx)?;
            Ok(confusion(vy, &pred)?.lenient_balanced_accuracy())
        })
        .collect();

    let mut results = Vec::with_capacity(cells.len());
    let mut it = scores.into_iter();
    for params in cells {
        let mut fold_scores = Vec::with_capacity(cfg.k);
        let mut error = None;
        for r in it.by_ref().take(cfg.k) {
            match r {
                Ok(s) => fold_scores.push(s),
                Err(e) => {
                    error.get_or_insert_with(|| e.to_string());
                }
            }
        }
        let mean = error.is_none().then(|| fold_scores.iter().sum::<f64>() / cfg.k as f64);
        if let Some(e) = &error {
            log::warn!("cell {} failed: {e}", params.describe());
        }
        results.push(CellResult {
            params: params.clone(),
            fold_scores,
            mean,
            error,
        });
    }
    let mut winner: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if let Some(m) = r.mean {
            if winner.is_none_or(|w| m > results[w].mean.unwrap_or(f64::NEG_INFINITY)) {
                winner = Some(i);
            }
        }
    }
    let winner = winner.ok_or_else(|| Error::InvalidInput(format!("every {algorithm} grid cell failed")))?;
    Ok(CvResult {
        algorithm,
        k: cfg.k,
        seed: cfg.seed,
        select_scope: cfg.select_scope,
        balancing,
        cells: results,
        winner,
        flagged_folds,
    })
}

/// Preprocessing plus classifier, fitted on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FittedPipeline<T> {
    pub preprocessor: Preprocessor<T>,
    pub model: FittedModel<T>,
}

impl<T: Scalar> FittedPipeline<T> {
    pub fn transform(&self, audio: &FeatureMatrix<T>, side: Option<&FeatureMatrix<T>>) -> Result<FeatureMatrix<T>> {
        self.preprocessor.transform(audio, side)
    }

    pub fn score(&self, audio: &FeatureMatrix<T>, side: Option<&FeatureMatrix<T>>) -> Result<Vec<T>> {
        self.model.score(&self.transform(audio, side)?)
    }

    pub fn predict(&self, audio: &FeatureMatrix<T>, side: Option<&FeatureMatrix<T>>) -> Result<Vec<Label>> {
        self.model.predict(&self.transform(audio, side)?)
    }
}

/// Refits preprocessing and the given cell on the whole training set.
pub fn refit<T: Scalar>(data: &TrainingData<T>, hp: &HyperParams, cfg: &CvConfig) -> Result<FittedPipeline<T>> {
    data.check()?;
    let preprocessor = Preprocessor::fit(data.audio, data.side, data.labels, &cfg.preprocess, None)?;
    let x = preprocessor.transform(data.audio, data.side)?;
    let set = balance(x, data.labels.to_vec(), Balancing::for_algorithm(hp.algorithm()), cfg, cfg.seed)?;
    let model = fit(&set.x, &set.y, hp, &set.weights, cfg.seed)?;
    Ok(FittedPipeline { preprocessor, model })
}
