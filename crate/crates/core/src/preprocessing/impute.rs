//! Missing-value imputation fitted on training rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputeStrategy {
    Mean,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ImputerState<T> {
    pub strategy: ImputeStrategy,
    /// Training means per feature; empty for [`ImputeStrategy::Zero`].
    #[serde(with = "crate::codec::block")]
    pub fill: Vec<T>,
    pub n_features: usize,
}

impl<T: Scalar> ImputerState<T> {
    pub fn fit(train: &FeatureMatrix<T>, strategy: ImputeStrategy) -> Result<Self> {
        let fill = match strategy {
            ImputeStrategy::Zero => Vec::new(),
            ImputeStrategy::Mean => (0..train.ncols())
                .map(|j| {
                    let mut sum = 0.0;
                    let mut n = 0usize;
                    for row in train.rows_iter() {
                        if !row[j].is_missing() {
                            sum += row[j].as_f64();
                            n += 1;
                        }
                    }
                    if n == 0 {
                        Err(Error::AllMissing(train.names()[j].clone()))
                    } else {
                        Ok(T::lit(sum / n as f64))
                    }
                })
                .collect::<Result<_>>()?,
        };
        Ok(Self {
            strategy,
            fill,
            n_features: train.ncols(),
        })
    }

    pub fn apply(&self, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        let mut out = x.clone();
        let cols = out.ncols();
        for (k, v) in out.as_mut_slice().iter_mut().enumerate() {
            if v.is_missing() {
                *v = match self.strategy {
                    ImputeStrategy::Zero => T::zero(),
                    ImputeStrategy::Mean => self.fill[k % cols],
                };
            }
        }
        Ok(out)
    }
}

pub fn fit_apply_impute<T: Scalar>(
    train: &FeatureMatrix<T>,
    apply_to: &FeatureMatrix<T>,
    strategy: ImputeStrategy,
) -> Result<(ImputerState<T>, FeatureMatrix<T>)> {
    let state = ImputerState::fit(train, strategy)?;
    let out = state.apply(apply_to)?;
    Ok((state, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> FeatureMatrix<f64> {
        FeatureMatrix::from_rows(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn mean_fill() {
        let m = col(&[1.0, f64::NAN, 3.0]);
        let (_, out) = fit_apply_impute(&m, &m, ImputeStrategy::Mean).unwrap();
        assert_eq!(out.column(0), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_fill() {
        let m = col(&[f64::NAN, 2.0]);
        let (state, out) = fit_apply_impute(&m, &m, ImputeStrategy::Zero).unwrap();
        assert_eq!(out.column(0), vec![0.0, 2.0]);
        assert!(state.fill.is_empty());
    }

    #[test]
    fn complete_matrix_unchanged() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 7.0]]).unwrap();
        let (_, out) = fit_apply_impute(&m, &m, ImputeStrategy::Mean).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn all_missing_names_feature() {
        let m = FeatureMatrix::from_named_rows(vec!["ok".into(), "jitter".into()], &[vec![1.0, f64::NAN]]).unwrap();
        let err = ImputerState::fit(&m, ImputeStrategy::Mean).unwrap_err();
        assert!(err.to_string().contains("jitter"));
    }

    #[test]
    fn fill_comes_from_training_rows_only() {
        let train = col(&[2.0, 4.0]);
        let test = col(&[f64::NAN, 100.0]);
        let (_, out) = fit_apply_impute(&train, &test, ImputeStrategy::Mean).unwrap();
        assert_eq!(out.column(0), vec![3.0, 100.0]);
    }
}
