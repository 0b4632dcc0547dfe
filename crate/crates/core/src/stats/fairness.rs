//! Association between classifier correctness and patient sex / age.

use serde::{Deserialize, Serialize};

use super::{fisher_exact, t_test, ContingencyTable2x2, TestResult};
use crate::dataset::{Computed, Label, PatientRecord, Sex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeGroupSummary {
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
}

impl AgeGroupSummary {
    fn of(ages: &[f64]) -> Self {
        let n = ages.len();
        if n == 0 {
            return Self {
                n,
                mean: None,
                std: None,
                min: None,
                median: None,
                max: None,
            };
        }
        let mut s = ages.to_vec();
        s.sort_by(f64::total_cmp);
        let mean = s.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            (s.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        Self {
            n,
            mean: Some(mean),
            std,
            min: Some(s[0]),
            median: Some(median),
            max: Some(s[n - 1]),
        }
    }
}

/// Per-group tabulation for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplementaryRow {
    pub sex: Sex,
    pub label: Label,
    pub correct: usize,
    pub incorrect: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    /// Rows: Male, Female. Columns: correct, incorrect.
    pub gender_table: ContingencyTable2x2,
    pub gender: Computed<TestResult>,
    /// Welch t-test on ages, correct vs incorrect.
    pub age: Computed<TestResult>,
    pub ages_correct: AgeGroupSummary,
    pub ages_incorrect: AgeGroupSummary,
    pub supplementary: Vec<SupplementaryRow>,
}

/// Fisher exact test on sex x correctness and Welch t-test on the ages of
/// correctly vs incorrectly classified patients.
pub fn fairness_battery(rows: &[PatientRecord], predicted: &[Label]) -> Result<FairnessReport> {
    if rows.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} rows",
            predicted.len(),
            rows.len()
        )));
    }
    let mut table = ContingencyTable2x2::new(0, 0, 0, 0);
    let mut ages_ok = Vec::new();
    let mut ages_bad = Vec::new();
    let mut supp: Vec<SupplementaryRow> = [Sex::Male, Sex::Female]
        .into_iter()
        .flat_map(|sex| {
            [Label::Benign, Label::Malignant].map(|label| SupplementaryRow {
                sex,
                label,
                correct: 0,
                incorrect: 0,
            })
        })
        .collect();
    for (r, &p) in rows.iter().zip(predicted) {
        let ok = r.label == p;
        match (r.sex, ok) {
            (Sex::Male, true) => table.a += 1,
            (Sex::Male, false) => table.b += 1,
            (Sex::Female, true) => table.c += 1,
            (Sex::Female, false) => table.d += 1,
        }
        if ok {
            ages_ok.push(r.age as f64);
        } else {
            ages_bad.push(r.age as f64);
        }
        let s = supp
            .iter_mut()
            .find(|s| s.sex == r.sex && s.label == r.label)
            .expect("all groups enumerated");
        if ok {
            s.correct += 1;
        } else {
            s.incorrect += 1;
        }
    }

    let (gender, age) = if ages_bad.is_empty() || ages_ok.is_empty() {
        let why = if ages_bad.is_empty() {
            "all predictions are correct; there is no incorrect group to compare"
        } else {
            "all predictions are incorrect; there is no correct group to compare"
        };
        (Computed::not(why), Computed::not(why))
    } else {
        let age = if ages_ok.len() < 2 || ages_bad.len() < 2 {
            Computed::not("a correctness group has fewer than 2 patients")
        } else {
            match t_test(&ages_ok, &ages_bad) {
                Ok(t) => Computed::Value(t),
                Err(e) => Computed::not(e.to_string()),
            }
        };
        (Computed::Value(fisher_exact(table)), age)
    };

    Ok(FairnessReport {
        gender_table: table,
        gender,
        age,
        ages_correct: AgeGroupSummary::of(&ages_ok),
        ages_incorrect: AgeGroupSummary::of(&ages_bad),
        supplementary: supp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn patient(i: usize, sex: Sex, age: u32, label: Label) -> PatientRecord {
        PatientRecord {
            id: format!("p{i}"),
            audio_path: String::new(),
            pathology: String::new(),
            label,
            sex,
            age,
            symptoms: BTreeMap::new(),
            packs_per_day: None,
            drinks_per_day: None,
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn wrong_on_every_male() {
        let mut rows = Vec::new();
        let mut pred = Vec::new();
        for i in 0..10 {
            rows.push(patient(i, Sex::Male, 40 + i as u32, Label::Benign));
            pred.push(Label::Malignant);
        }
        for i in 10..20 {
            rows.push(patient(i, Sex::Female, 30 + i as u32, Label::Benign));
            pred.push(Label::Benign);
        }
        let r = fairness_battery(&rows, &pred).unwrap();
        assert_eq!(r.gender_table, ContingencyTable2x2::from_rows([[0, 10], [10, 0]]));
        let p = r.gender.p_value().unwrap();
        assert!((p - 1.0825e-5).abs() < 1e-8, "p = {p}");
        assert!(r.age.p_value().is_some());
        assert_eq!(r.ages_incorrect.n, 10);
    }

    #[test]
    fn all_correct_is_not_computable() {
        let rows: Vec<_> = (0..6)
            .map(|i| patient(i, if i % 2 == 0 { Sex::Male } else { Sex::Female }, 50, Label::Benign))
            .collect();
        let r = fairness_battery(&rows, &[Label::Benign; 6]).unwrap();
        assert!(r.gender.value().is_none());
        assert!(r.age.value().is_none());
    }

    #[test]
    fn length_mismatch() {
        let rows = vec![patient(0, Sex::Male, 50, Label::Benign)];
        assert!(fairness_battery(&rows, &[]).is_err());
    }
}
