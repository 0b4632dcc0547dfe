use serde::{Deserialize, Serialize};

use super::special::ln_factorial;
use super::TestResult;

/// 2x2 table: rows are groups, columns are outcomes.
///
/// ```text
///        outcome0  outcome1
/// row0      a         b
/// row1      c         d
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    pub fn from_rows(rows: [[u64; 2]; 2]) -> Self {
        Self::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    /// Sample odds ratio (ad / bc); infinite or NaN for zero cells.
    pub fn odds_ratio(&self) -> f64 {
        (self.a as f64 * self.d as f64) / (self.b as f64 * self.c as f64)
    }
}

/// Relative slack used when comparing table probabilities against the observed one.
const REL_SLACK: f64 = 1e-12;

/// Two-sided Fisher exact test: sums the hypergeometric probabilities of every
/// table with the observed margins that is no more likely than the observed table.
pub fn fisher_exact(t: ContingencyTable2x2) -> TestResult {
    let row0 = t.a + t.b;
    let row1 = t.c + t.d;
    let col0 = t.a + t.c;
    let n = t.total();
    let statistic = t.odds_ratio();
    if n == 0 || row0 == 0 || row1 == 0 || col0 == 0 || col0 == n {
        return TestResult::new("fisher_exact", statistic, 1.0);
    }
    // log P(a) = ln C(row0,a) + ln C(row1,col0-a) - ln C(n,col0)
    let ln_norm = ln_factorial(row0) + ln_factorial(row1) + ln_factorial(col0) + ln_factorial(n - col0)
        - ln_factorial(n);
    let ln_p = |a: u64| -> f64 {
        let b = row0 - a;
        let c = col0 - a;
        let d = row1 - c;
        ln_norm - ln_factorial(a) - ln_factorial(b) - ln_factorial(c) - ln_factorial(d)
    };
    let lo = col0.saturating_sub(row1);
    let hi = row0.min(col0);
    let obs = ln_p(t.a);
    let threshold = obs + REL_SLACK.ln_1p();
    let (mut inside, mut outside) = (0.0, 0.0);
    for a in lo..=hi {
        let lp = ln_p(a);
        if lp <= threshold {
            inside += lp.exp();
        } else {
            outside += lp.exp();
        }
    }
    // normalising by the full mass removes accumulated rounding in the log-factorials
    let p = inside / (inside + outside);
    TestResult::new("fisher_exact", statistic, p.clamp(0.0, 1.0))
}
