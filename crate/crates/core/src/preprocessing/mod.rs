//! Training-fitted preprocessing: imputation, z-scoring, tree-based feature
//! selection, side-information assembly, class weights and SMOTE.

mod impute;
mod scale;
mod smote;
mod tree;
mod weights;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use impute::{fit_apply_impute, ImputeStrategy, ImputerState};
pub use scale::{fit_apply_zscore, ScalerState};
pub use smote::{smote_oversample, DEFAULT_SMOTE_K};
pub use tree::{fit_tree_selector, tree_importances, SelectorState, TreeParams};
pub use weights::{compute_class_weights, ClassWeights};

use crate::dataset::{Label, PatientRecord};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Which non-audio inputs accompany the audio features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "&'static str", try_from = "String")]
pub enum InputVariant {
    Voice,
    VoiceDemo,
    VoiceSymptoms,
    VoiceDemoSymptoms,
}

impl InputVariant {
    pub const ALL: [InputVariant; 4] = [
        InputVariant::Voice,
        InputVariant::VoiceDemo,
        InputVariant::VoiceSymptoms,
        InputVariant::VoiceDemoSymptoms,
    ];

    pub fn uses_demographics(self) -> bool {
        matches!(self, InputVariant::VoiceDemo | InputVariant::VoiceDemoSymptoms)
    }

    pub fn uses_symptoms(self) -> bool {
        matches!(self, InputVariant::VoiceSymptoms | InputVariant::VoiceDemoSymptoms)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InputVariant::Voice => "voice",
            InputVariant::VoiceDemo => "voice+demo",
            InputVariant::VoiceSymptoms => "voice+symptoms",
            InputVariant::VoiceDemoSymptoms => "voice+demo+symptoms",
        }
    }
}

impl From<InputVariant> for &'static str {
    fn from(v: InputVariant) -> Self {
        v.as_str()
    }
}

impl TryFrom<String> for InputVariant {
    type Error = Error;

    fn try_from(s: String) -> std::result::Result<Self, Error> {
        s.parse()
    }
}

impl fmt::Display for InputVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.trim().to_ascii_lowercase().replace(['_', ' ', '-'], "+");
        match norm.as_str() {
            "voice" => Ok(InputVariant::Voice),
            "voice+demo" | "voice+demographics" => Ok(InputVariant::VoiceDemo),
            "voice+symptoms" => Ok(InputVariant::VoiceSymptoms),
            "voice+demo+symptoms" | "voice+demographics+symptoms" => Ok(InputVariant::VoiceDemoSymptoms),
            _ => Err(Error::Config(format!("unknown input variant `{s}`"))),
        }
    }
}

/// Column layout of the demographic/symptom block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideLayout {
    pub demographics: bool,
    pub symptom_columns: Vec<String>,
    pub lifestyle: bool,
}

impl SideLayout {
    pub fn new(variant: InputVariant, symptom_columns: &[String], lifestyle: bool) -> Self {
        let sym = variant.uses_symptoms();
        Self {
            demographics: variant.uses_demographics(),
            symptom_columns: if sym { symptom_columns.to_vec() } else { Vec::new() },
            lifestyle: sym && lifestyle,
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut n = Vec::new();
        if self.demographics {
            n.push("age".to_string());
            n.push("sex".to_string());
        }
        n.extend(self.symptom_columns.iter().cloned());
        if self.lifestyle {
            n.push(crate::dataset::PACKS_COLUMN.to_string());
            n.push(crate::dataset::DRINKS_COLUMN.to_string());
        }
        n
    }

    pub fn is_empty(&self) -> bool {
        self.names().is_empty()
    }

    /// Side features for `records`; missing symptom values are NaN.
    /// Records lacking a declared symptom column get NaN for it too.
    pub fn extract<T: Scalar>(&self, records: &[PatientRecord]) -> FeatureMatrix<T> {
        let names = self.names();
        let mut data = Vec::with_capacity(records.len() * names.len());
        let opt = |v: Option<f64>| v.map(T::lit).unwrap_or_else(T::missing);
        for r in records {
            if self.demographics {
                data.push(T::lit(r.age as f64));
                data.push(T::lit(r.sex.encode()));
            }
            for c in &self.symptom_columns {
                data.push(opt(r.symptoms.get(c).copied().flatten()));
            }
            if self.lifestyle {
                data.push(opt(r.packs_per_day));
                data.push(opt(r.drinks_per_day));
            }
        }
        FeatureMatrix::new(records.len(), names, data).expect("side layout shape")
    }
}

/// Concatenates the audio block and the (possibly absent) side block.
pub fn assemble_input<T: Scalar>(x1: &FeatureMatrix<T>, x2: Option<&FeatureMatrix<T>>) -> Result<FeatureMatrix<T>> {
    match x2 {
        Some(s) if s.ncols() > 0 => x1.hstack(s),
        _ => Ok(x1.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub audio_impute: ImputeStrategy,
    pub side_impute: ImputeStrategy,
    pub tree: TreeParams,
    /// Disable to pass every audio feature through.
    pub select_features: bool,
    pub smote_k: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            audio_impute: ImputeStrategy::Mean,
            side_impute: ImputeStrategy::Zero,
            tree: TreeParams::default(),
            select_features: true,
            smote_k: DEFAULT_SMOTE_K,
        }
    }
}

/// Fitted preprocessing for one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Preprocessor<T> {
    pub audio_imputer: ImputerState<T>,
    pub audio_scaler: ScalerState<T>,
    pub selector: SelectorState,
    pub side_imputer: Option<ImputerState<T>>,
    pub side_scaler: Option<ScalerState<T>>,
}

impl<T: Scalar> Preprocessor<T> {
    /// Fits every state on the given training rows. A `fixed_selector` (fitted
    /// elsewhere) replaces the per-call tree fit.
    pub fn fit(
        audio: &FeatureMatrix<T>,
        side: Option<&FeatureMatrix<T>>,
        labels: &[Label],
        cfg: &PreprocessConfig,
        fixed_selector: Option<&SelectorState>,
    ) -> Result<Self> {
        let audio_imputer = ImputerState::fit(audio, cfg.audio_impute)?;
        let imputed = audio_imputer.apply(audio)?;
        let audio_scaler = ScalerState::fit(&imputed);
        let scaled = audio_scaler.apply(&imputed)?;
        let selector = match fixed_selector {
            Some(s) => s.clone(),
            None if cfg.select_features => fit_tree_selector(&scaled, labels, cfg.tree)?,
            None => SelectorState::identity(scaled.ncols()),
        };
        let (side_imputer, side_scaler) = match side {
            Some(s) if s.ncols() > 0 => {
                let imp = ImputerState::fit(s, cfg.side_impute)?;
                let sc = ScalerState::fit(&imp.apply(s)?);
                (Some(imp), Some(sc))
            }
            _ => (None, None),
        };
        Ok(Self {
            audio_imputer,
            audio_scaler,
            selector,
            side_imputer,
            side_scaler,
        })
    }

    pub fn transform(&self, audio: &FeatureMatrix<T>, side: Option<&FeatureMatrix<T>>) -> Result<FeatureMatrix<T>> {
        let a = self.selector.apply(&self.audio_scaler.apply(&self.audio_imputer.apply(audio)?)?)?;
        match (&self.side_imputer, &self.side_scaler, side) {
            (Some(imp), Some(sc), Some(s)) => {
                let s = sc.apply(&imp.apply(s)?)?;
                assemble_input(&a, Some(&s))
            }
            (None, None, s) if s.is_none_or(|m| m.ncols() == 0) => Ok(a),
            (Some(_), _, None) => Err(Error::InvalidInput(
                "this preprocessor was fitted with demographic/symptom inputs but none were given".into(),
            )),
            _ => Err(Error::InvalidInput(
                "demographic/symptom inputs given to a voice-only preprocessor".into(),
            )),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.selector.selected.len() + self.side_scaler.as_ref().map_or(0, |s| s.n_features())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sex;
    use std::collections::BTreeMap;

    fn record(i: usize, label: Label) -> PatientRecord {
        let mut symptoms = BTreeMap::new();
        symptoms.insert("hoarse".to_string(), if i % 3 == 0 { None } else { Some(1.0) });
        PatientRecord {
            id: format!("p{i}"),
            audio_path: String::new(),
            pathology: String::new(),
            label,
            sex: if i % 2 == 0 { Sex::Male } else { Sex::Female },
            age: 30 + i as u32,
            symptoms,
            packs_per_day: None,
            drinks_per_day: Some(2.0),
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in InputVariant::ALL {
            assert_eq!(v.as_str().parse::<InputVariant>().unwrap(), v);
        }
        assert!("audio".parse::<InputVariant>().is_err());
    }

    #[test]
    fn side_layout_columns() {
        let cols = vec!["hoarse".to_string()];
        let recs = vec![record(0, Label::Benign), record(1, Label::Malignant)];
        let m: FeatureMatrix<f64> = SideLayout::new(InputVariant::VoiceDemoSymptoms, &cols, true).extract(&recs);
        assert_eq!(m.names(), &["age", "sex", "hoarse", "packs_per_day", "drinks_per_day"]);
        assert_eq!(m.row(0)[..2], [30.0, 1.0]);
        assert!(m.get(0, 2).is_nan() && m.get(0, 3).is_nan());
        assert_eq!(m.row(1)[1], 0.0);
        assert!(SideLayout::new(InputVariant::Voice, &cols, true).is_empty());
        let demo: FeatureMatrix<f64> = SideLayout::new(InputVariant::VoiceDemo, &cols, true).extract(&recs);
        assert_eq!(demo.ncols(), 2);
    }

    #[test]
    fn assembled_lengths() {
        let a = FeatureMatrix::<f64>::zeros(3, 88);
        let b = FeatureMatrix::<f64>::zeros(3, 25);
        assert_eq!(assemble_input(&a, Some(&b)).unwrap().ncols(), 113);
        assert_eq!(assemble_input(&a, None).unwrap(), a);
        let e = FeatureMatrix::<f64>::zeros(3, 512);
        assert_eq!(assemble_input(&e, Some(&FeatureMatrix::zeros(3, 2))).unwrap().ncols(), 514);
    }

    #[test]
    fn pipeline_fit_transform() {
        let labels: Vec<Label> = (0..40).map(|i| Label::from_bool(i % 4 == 0)).collect();
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![if i % 4 == 0 { 3.0 } else { 0.0 } + (i % 5) as f64 * 0.01, if i == 7 { f64::NAN } else { i as f64 }])
            .collect();
        let audio = FeatureMatrix::from_rows(&rows).unwrap();
        let recs: Vec<PatientRecord> = labels.iter().enumerate().map(|(i, &l)| record(i, l)).collect();
        let side: FeatureMatrix<f64> =
            SideLayout::new(InputVariant::VoiceDemoSymptoms, &["hoarse".into()], true).extract(&recs);
        let p = Preprocessor::fit(&audio, Some(&side), &labels, &PreprocessConfig::default(), None).unwrap();
        let x = p.transform(&audio, Some(&side)).unwrap();
        assert_eq!(x.ncols(), p.output_dim());
        assert!(x.all_finite());
        assert_eq!(p.selector.selected, vec![0]);
        assert!(p.transform(&audio, None).is_err());
    }
}
