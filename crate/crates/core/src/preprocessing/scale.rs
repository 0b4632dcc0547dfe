//! Z-score scaling with the population (divide-by-N) standard deviation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Relative spread below which a column counts as constant.
const CONSTANT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScalerState<T> {
    #[serde(with = "crate::codec::block")]
    pub mean: Vec<T>,
    /// Divisor per feature; constant columns store 1.
    #[serde(with = "crate::codec::block")]
    pub std: Vec<T>,
}

impl<T: Scalar> ScalerState<T> {
    pub fn fit(train: &FeatureMatrix<T>) -> Self {
        let n = train.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(train.ncols());
        let mut std = Vec::with_capacity(train.ncols());
        for j in 0..train.ncols() {
            let m = train.rows_iter().map(|r| r[j].as_f64()).sum::<f64>() / n;
            let var = train.rows_iter().map(|r| (r[j].as_f64() - m).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(T::lit(m));
            std.push(T::lit(if s <= CONSTANT_TOLERANCE * m.abs().max(1.0) { 1.0 } else { s }));
        }
        Self { mean, std }
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        let mut out = x.clone();
        let cols = out.ncols();
        for (k, v) in out.as_mut_slice().iter_mut().enumerate() {
            let j = k % cols;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        Ok(out)
    }
}

pub fn fit_apply_zscore<T: Scalar>(
    train: &FeatureMatrix<T>,
    apply_to: &FeatureMatrix<T>,
) -> Result<(ScalerState<T>, FeatureMatrix<T>)> {
    let s = ScalerState::fit(train);
    let out = s.apply(apply_to)?;
    Ok((s, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> FeatureMatrix<f64> {
        FeatureMatrix::from_rows(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn population_convention() {
        let m = col(&[1.0, 2.0, 3.0]);
        let (s, out) = fit_apply_zscore(&m, &m).unwrap();
        let c = out.column(0);
        assert_abs_diff_eq!(c[0], -1.224744871391589, epsilon = 1e-12);
        assert_eq!(c[1], 0.0);
        assert_abs_diff_eq!(c[2], 1.224744871391589, epsilon = 1e-12);
        let t = s.apply(&col(&[4.0])).unwrap();
        assert_abs_diff_eq!(t.get(0, 0), 2.449489742783178, epsilon = 1e-12);
    }

    #[test]
    fn constant_column_to_zero() {
        let m = col(&[5.0, 5.0, 5.0]);
        let (_, out) = fit_apply_zscore(&m, &m).unwrap();
        assert_eq!(out.column(0), vec![0.0; 3]);
    }

    proptest! {
        #[test]
        fn standardised_training_columns(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..40)
        ) {
            let m = FeatureMatrix::from_rows(&rows).unwrap();
            let (_, out) = fit_apply_zscore(&m, &m).unwrap();
            for j in 0..3 {
                let c = out.column(j);
                let n = c.len() as f64;
                let mean = c.iter().sum::<f64>() / n;
                let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((sd - 1.0).abs() < 1e-9 || c.iter().all(|v| v.abs() < 1e-9));
            }
        }
    }
}
