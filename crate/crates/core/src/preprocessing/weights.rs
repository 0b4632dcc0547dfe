use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

/// Per-class loss multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub benign: f64,
    pub malignant: f64,
}

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights {
        benign: 1.0,
        malignant: 1.0,
    };

    pub fn of(&self, label: Label) -> f64 {
        match label {
            Label::Benign => self.benign,
            Label::Malignant => self.malignant,
        }
    }
}

/// Balanced weights `N / (2 * N_c)`.
pub fn compute_class_weights(labels: &[Label]) -> Result<ClassWeights> {
    let n = labels.len() as f64;
    let m = labels.iter().filter(|l| l.is_malignant()).count() as f64;
    let b = n - m;
    if m == 0.0 || b == 0.0 {
        return Err(Error::SingleClass("class weights need both classes".into()));
    }
    Ok(ClassWeights {
        benign: n / (2.0 * b),
        malignant: n / (2.0 * m),
    })
}
