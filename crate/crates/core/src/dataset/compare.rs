use serde::{Deserialize, Serialize};

use super::{Label, LabeledDataset, Sex};
use crate::stats::{fisher_exact, mann_whitney_u, ContingencyTable2x2, TestResult};

/// A statistic that may be unavailable for the given data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Computed<T> {
    Value(T),
    NotComputable { reason: String },
}

impl<T> Computed<T> {
    pub fn not(reason: impl Into<String>) -> Self {
        Computed::NotComputable {
            reason: reason.into(),
        }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Computed::Value(v) => Some(v),
            Computed::NotComputable { .. } => None,
        }
    }
}

impl Computed<TestResult> {
    pub fn p_value(&self) -> Option<f64> {
        self.value().map(|t| t.p_value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassComparison {
    pub label: Label,
    /// Mann-Whitney U on ages, dataset a vs dataset b.
    pub age: Computed<TestResult>,
    /// Fisher exact on {dataset} x {male, female}.
    pub gender: Computed<TestResult>,
    pub gender_table: ContingencyTable2x2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dataset_a: String,
    pub dataset_b: String,
    pub classes: Vec<ClassComparison>,
    /// Within-dataset Mann-Whitney U on recording durations, benign vs malignant.
    pub duration_a: Computed<TestResult>,
    pub duration_b: Computed<TestResult>,
    pub prevalence_a: f64,
    pub prevalence_b: f64,
}

impl ComparisonReport {
    pub fn class(&self, label: Label) -> &ClassComparison {
        self.classes
            .iter()
            .find(|c| c.label == label)
            .expect("both classes are always reported")
    }
}

fn ages(ds: &LabeledDataset, label: Label) -> Vec<f64> {
    ds.records
        .iter()
        .filter(|r| r.label == label)
        .map(|r| r.age as f64)
        .collect()
}

fn sex_counts(ds: &LabeledDataset, label: Label) -> (u64, u64) {
    let mut m = 0;
    let mut f = 0;
    for r in ds.records.iter().filter(|r| r.label == label) {
        match r.sex {
            Sex::Male => m += 1,
            Sex::Female => f += 1,
        }
    }
    (m, f)
}

fn duration_test(ds: &LabeledDataset, durations: Option<&[f64]>) -> Computed<TestResult> {
    let Some(d) = durations else {
        return Computed::not("recording durations unavailable");
    };
    if d.len() != ds.len() {
        return Computed::not(format!(
            "{} durations supplied for {} records",
            d.len(),
            ds.len()
        ));
    }
    let (mut ben, mut mal) = (Vec::new(), Vec::new());
    for (r, &v) in ds.records.iter().zip(d) {
        if r.label.is_malignant() {
            mal.push(v);
        } else {
            ben.push(v);
        }
    }
    if ben.is_empty() || mal.is_empty() {
        return Computed::not(format!("{}: a class has no recordings", ds.name));
    }
    match mann_whitney_u(&ben, &mal) {
        Ok(t) => Computed::Value(t),
        Err(e) => Computed::not(e.to_string()),
    }
}

/// Compares two labelled datasets class by class.
///
/// `durations_*`, when given, hold one recording duration (seconds) per record.
pub fn compare_datasets(
    a: &LabeledDataset,
    b: &LabeledDataset,
    durations_a: Option<&[f64]>,
    durations_b: Option<&[f64]>,
) -> ComparisonReport {
    let classes = [Label::Benign, Label::Malignant]
        .into_iter()
        .map(|label| {
            let (xa, xb) = (ages(a, label), ages(b, label));
            let age = if xa.is_empty() || xb.is_empty() {
                Computed::not(format!("class {label} is empty in one dataset"))
            } else {
                match mann_whitney_u(&xa, &xb) {
                    Ok(t) => Computed::Value(t),
                    Err(e) => Computed::not(e.to_string()),
                }
            };
            let (ma, fa) = sex_counts(a, label);
            let (mb, fb) = sex_counts(b, label);
            let table = ContingencyTable2x2::new(ma, fa, mb, fb);
            let gender = if ma + fa == 0 || mb + fb == 0 {
                Computed::not(format!("class {label} is empty in one dataset"))
            } else {
                Computed::Value(fisher_exact(table))
            };
            ClassComparison {
                label,
                age,
                gender,
                gender_table: table,
            }
        })
        .collect();
    ComparisonReport {
        dataset_a: a.name.clone(),
        dataset_b: b.name.clone(),
        classes,
        duration_a: duration_test(a, durations_a),
        duration_b: duration_test(b, durations_b),
        prevalence_a: a.prevalence(),
        prevalence_b: b.prevalence(),
    }
}
