//! Hypothesis tests for dataset comparison and fairness analysis. All tests are two-sided.

mod fairness;
mod fisher;
mod mwu;
pub mod special;
mod ttest;

use serde::{Deserialize, Serialize};

pub use fairness::{fairness_battery, AgeGroupSummary, FairnessReport, SupplementaryRow};
pub use fisher::{fisher_exact, ContingencyTable2x2};
pub use mwu::{mann_whitney_u, EXACT_MAX_N};
pub use ttest::t_test;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    #[serde(with = "crate::codec::lenient")]
    pub statistic: f64,
    #[serde(with = "crate::codec::lenient")]
    pub p_value: f64,
    pub sidedness: String,
    /// Degrees of freedom, for t-tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    /// True when the p-value came from an exact null distribution.
    #[serde(default)]
    pub exact: bool,
    /// Set when the statistic is infinite (zero variance with unequal means).
    #[serde(default)]
    pub degenerate: bool,
}

impl TestResult {
    pub(crate) fn new(name: &str, statistic: f64, p_value: f64) -> Self {
        Self {
            test_name: name.to_string(),
            statistic,
            p_value,
            sidedness: "two-sided".to_string(),
            df: None,
            exact: name == "fisher_exact",
            degenerate: false,
        }
    }
}
