//! Decision-tree feature selection.
//!
//! A CART classification tree (Gini impurity) is grown on the audio block.
//! Importance of a feature is the total weighted impurity decrease of the
//! splits that use it, normalised to sum to one. Features with importance
//! above the mean are kept; if none qualify the single best one is kept.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Recorded for reproducibility. The tree itself scans every feature and
    /// breaks ties by lowest index, so no randomness is consumed.
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 10,
            min_samples_leaf: 5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorState {
    pub selected: Vec<usize>,
    pub importances: Vec<f64>,
    pub threshold: f64,
    pub n_features: usize,
    pub params: TreeParams,
}

impl SelectorState {
    /// Keeps every column; used when selection is disabled.
    pub fn identity(n_features: usize) -> Self {
        Self {
            selected: (0..n_features).collect(),
            importances: vec![1.0 / n_features.max(1) as f64; n_features],
            threshold: 0.0,
            n_features,
            params: TreeParams::default(),
        }
    }

    pub fn apply<T: Scalar>(&self, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        Ok(x.select_columns(&self.selected))
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Grower<'a> {
    cols: Vec<Vec<f64>>,
    y: &'a [bool],
    params: TreeParams,
    importance: Vec<f64>,
    n_total: f64,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        if depth >= self.params.max_depth || n < 2 * self.params.min_samples_leaf || pos == 0 || pos == n {
            return;
        }
        let parent = gini(pos, n);
        let leaf = self.params.min_samples_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for (j, col) in self.cols.iter().enumerate() {
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            let mut left_pos = 0;
            for k in 1..n {
                if self.y[order[k - 1]] {
                    left_pos += 1;
                }
                let (lo, hi) = (col[order[k - 1]], col[order[k]]);
                if k < leaf || n - k < leaf || hi <= lo {
                    continue;
                }
                let child = (k as f64 * gini(left_pos, k) + (n - k) as f64 * gini(pos - left_pos, n - k)) / n as f64;
                let gain = parent - child;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, j, lo + (hi - lo) / 2.0));
                }
            }
        }
        let Some((gain, j, thr)) = best else { return };
        self.importance[j] += n as f64 / self.n_total * gain;
        let col = &self.cols[j];
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| col[i] <= thr);
        self.grow(&mut left, depth + 1);
        self.grow(&mut right, depth + 1);
    }
}

/// Raw (unnormalised) impurity-decrease importances of a fitted tree.
pub fn tree_importances<T: Scalar>(x: &FeatureMatrix<T>, labels: &[Label], params: TreeParams) -> Result<Vec<f64>> {
    if x.nrows() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    let y: Vec<bool> = labels.iter().map(|l| l.is_malignant()).collect();
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::SingleClass("tree selector needs both classes in the training rows".into()));
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidInput("tree selector needs at least one feature".into()));
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("tree selector input".into()));
    }
    let mut g = Grower {
        cols: (0..x.ncols()).map(|j| x.column(j).into_iter().map(|v| v.as_f64()).collect()).collect(),
        y: &y,
        params,
        importance: vec![0.0; x.ncols()],
        n_total: y.len() as f64,
    };
    let mut idx: Vec<usize> = (0..y.len()).collect();
    g.grow(&mut idx, 0);
    Ok(g.importance)
}

pub fn fit_tree_selector<T: Scalar>(x: &FeatureMatrix<T>, labels: &[Label], params: TreeParams) -> Result<SelectorState> {
    let raw = tree_importances(x, labels, params)?;
    let d = raw.len();
    let total: f64 = raw.iter().sum();
    let importances: Vec<f64> = if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / d as f64; d]
    };
    let threshold = importances.iter().sum::<f64>() / d as f64;
    let mut selected: Vec<usize> = (0..d).filter(|&j| importances[j] > threshold).collect();
    if selected.is_empty() {
        let best = (0..d).fold(0, |b, j| if importances[j] > importances[b] { j } else { b });
        selected.push(best);
    }
    Ok(SelectorState {
        selected,
        importances,
        threshold,
        n_features: d,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(v: &[u8]) -> Vec<Label> {
        v.iter().map(|&b| Label::from_bool(b == 1)).collect()
    }

    #[test]
    fn picks_the_informative_feature() {
        let y: Vec<u8> = (0..40).map(|i| (i >= 20) as u8).collect();
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![if i >= 20 { 1.0 } else { 0.0 }, 3.0]).collect();
        let s = fit_tree_selector(&FeatureMatrix::from_rows(&rows).unwrap(), &labels(&y), TreeParams::default()).unwrap();
        assert_eq!(s.selected, vec![0]);
        assert!((s.importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn copies_break_ties_by_lowest_index() {
        let y: Vec<u8> = (0..30).map(|i| (i % 3 == 0) as u8).collect();
        let rows: Vec<Vec<f64>> = y.iter().map(|&b| vec![b as f64 * 2.0 - 1.0; 4]).collect();
        let s = fit_tree_selector(&FeatureMatrix::from_rows(&rows).unwrap(), &labels(&y), TreeParams::default()).unwrap();
        assert_eq!(s.selected, vec![0]);
    }

    #[test]
    fn random_labels_never_empty_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<u8> = (0..60).map(|_| rng.gen_range(0..2)).collect();
        let rows: Vec<Vec<f64>> = (0..60).map(|_| (0..6).map(|_| rng.gen::<f64>()).collect()).collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let params = TreeParams {
            max_depth: 2,
            ..TreeParams::default()
        };
        let a = fit_tree_selector(&m, &labels(&y), params).unwrap();
        let b = fit_tree_selector(&m, &labels(&y), params).unwrap();
        assert!(!a.selected.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn unsplittable_data_falls_back_to_first_feature() {
        let rows = vec![vec![1.0, 1.0]; 12];
        let y: Vec<u8> = (0..12).map(|i| (i % 2) as u8).collect();
        let s = fit_tree_selector(&FeatureMatrix::from_rows(&rows).unwrap(), &labels(&y), TreeParams::default()).unwrap();
        assert_eq!(s.selected, vec![0]);
    }

    #[test]
    fn single_class_is_an_error() {
        let rows = vec![vec![1.0]; 10];
        assert!(matches!(
            fit_tree_selector(&FeatureMatrix::from_rows(&rows).unwrap(), &labels(&[0; 10]), TreeParams::default()),
            Err(Error::SingleClass(_))
        ));
    }
}
