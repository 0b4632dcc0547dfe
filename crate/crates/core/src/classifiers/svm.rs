//! Soft-margin kernel SVM trained by SMO with second-order working-set
//! selection on a precomputed kernel matrix.
//!
//! Kernels: linear `<x,z>`, polynomial `(g<x,z>)^d`, rbf `exp(-g|x-z|^2)`,
//! sigmoid `tanh(g<x,z>)`. The additive constant is zero. The box bound of
//! sample `i` is `C` times its class weight.

use serde::{Deserialize, Serialize};

use super::{check_training, Gamma, Kernel, SvmParams, TrainingMeta};
use crate::dataset::Label;
use crate::error::Result;
use crate::matrix::FeatureMatrix;
use crate::preprocessing::ClassWeights;
use crate::scalar::Scalar;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SvmModel<T> {
    pub kernel: Kernel,
    pub gamma: f64,
    pub degree: u32,
    pub n_features: usize,
    /// Support vectors, row-major `n_support x n_features`.
    #[serde(with = "crate::codec::block")]
    pub support: Vec<T>,
    /// `alpha_i y_i` per support vector.
    #[serde(with = "crate::codec::block")]
    pub dual_coef: Vec<T>,
    #[serde(with = "crate::codec::real")]
    pub rho: T,
    pub meta: TrainingMeta,
}

fn kernel_value<T: Scalar>(kernel: Kernel, gamma: T, degree: u32, a: &[T], b: &[T]) -> T {
    match kernel {
        Kernel::Rbf => {
            let d2 = a.iter().zip(b).fold(T::zero(), |acc, (&p, &q)| acc + (p - q) * (p - q));
            (-gamma * d2).exp()
        }
        _ => {
            let dot = a.iter().zip(b).fold(T::zero(), |acc, (&p, &q)| acc + p * q);
            match kernel {
                Kernel::Linear => dot,
                Kernel::Polynomial => (gamma * dot).powi(degree as i32),
                Kernel::Sigmoid => (gamma * dot).tanh(),
                Kernel::Rbf => unreachable!(),
            }
        }
    }
}

impl<T: Scalar> SvmModel<T> {
    pub fn n_support(&self) -> usize {
        self.dual_coef.len()
    }

    pub fn support_vector(&self, k: usize) -> &[T] {
        &self.support[k * self.n_features..(k + 1) * self.n_features]
    }

    pub fn decision(&self, x: &[T]) -> T {
        let g = T::lit(self.gamma);
        (0..self.n_support()).fold(-self.rho, |acc, k| {
            acc + self.dual_coef[k] * kernel_value(self.kernel, g, self.degree, self.support_vector(k), x)
        })
    }
}

/// Resolves `scale` / `auto` against the training matrix.
pub fn resolve_gamma<T: Scalar>(gamma: Gamma, x: &FeatureMatrix<T>) -> f64 {
    let d = x.ncols() as f64;
    match gamma {
        Gamma::Value(g) => g,
        Gamma::Auto => 1.0 / d,
        Gamma::Scale => {
            let v = x.as_slice();
            let n = v.len() as f64;
            let mean = v.iter().map(|a| a.as_f64()).sum::<f64>() / n;
            let var = v.iter().map(|a| (a.as_f64() - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                1.0 / (d * var)
            } else {
                1.0
            }
        }
    }
}

/// Dual solution on the training set, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub upper: Vec<f64>,
    pub y: Vec<f64>,
    pub gradient: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SmoSolution {
    /// `max_{I_up} -y G - min_{I_low} -y G`; zero or negative means the KKT
    /// conditions hold exactly.
    pub fn kkt_gap(&self) -> f64 {
        let mut up = f64::NEG_INFINITY;
        let mut low = f64::INFINITY;
        for t in 0..self.alpha.len() {
            let v = -self.y[t] * self.gradient[t];
            let in_up = (self.y[t] > 0.0 && self.alpha[t] < self.upper[t]) || (self.y[t] < 0.0 && self.alpha[t] > 0.0);
            let in_low = (self.y[t] > 0.0 && self.alpha[t] > 0.0) || (self.y[t] < 0.0 && self.alpha[t] < self.upper[t]);
            if in_up {
                up = up.max(v);
            }
            if in_low {
                low = low.min(v);
            }
        }
        up - low
    }

    pub fn equality_residual(&self) -> f64 {
        self.alpha.iter().zip(&self.y).map(|(a, y)| a * y).sum::<f64>()
    }
}

/// Runs SMO on a precomputed kernel (row-major `n x n`, in f64).
pub fn smo(k: &[f64], y: &[f64], upper: &[f64], tol: f64, max_iter: usize) -> SmoSolution {
    let n = y.len();
    let kk = |i: usize, j: usize| k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // first index: maximal violating -y G over I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if y[t] > 0.0 {
                if alpha[t] < upper[t] && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i = t;
                }
            } else if alpha[t] > 0.0 && grad[t] >= gmax {
                gmax = grad[t];
                i = t;
            }
        }
        // second index: largest guaranteed objective decrease over I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            let (in_low, v) = if y[t] > 0.0 {
                (alpha[t] > 0.0, grad[t])
            } else {
                (alpha[t] < upper[t], -grad[t])
            };
            if !in_low {
                continue;
            }
            gmax2 = gmax2.max(v);
            if i == usize::MAX {
                continue;
            }
            let diff = gmax + v;
            if diff > 0.0 {
                let mut quad = kk(i, i) + kk(t, t) - 2.0 * kk(i, t);
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -(diff * diff) / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < tol || i == usize::MAX || j == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;
        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * kk(i, j);
        if y[i] != y[j] {
            let mut quad = kk(i, i) + kk(j, j) + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let mut quad = kk(i, i) + kk(j, j) - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * kk(t, i) * di + y[j] * kk(t, j) * dj);
        }
    }
    // bias from free vectors, else midpoint of the feasible interval
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < upper[t] {
            free_sum += yg;
            n_free += 1;
        } else if (alpha[t] >= upper[t]) == (y[t] < 0.0) {
            // at upper bound with y = -1 or at zero with y = +1
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if n_free > 0 {
        free_sum / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    SmoSolution {
        alpha,
        upper: upper.to_vec(),
        y: y.to_vec(),
        gradient: grad,
        rho,
        iterations,
        converged,
    }
}

/// Kernel matrix of the training rows, in f64.
pub fn kernel_matrix<T: Scalar>(x: &FeatureMatrix<T>, kernel: Kernel, gamma: f64, degree: u32) -> Vec<f64> {
    let n = x.nrows();
    let g = T::lit(gamma);
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel_value(kernel, g, degree, x.row(i), x.row(j)).as_f64();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Fits and also returns the raw dual solution.
pub fn fit_svm_with_solution<T: Scalar>(
    x: &FeatureMatrix<T>,
    labels: &[Label],
    params: &SvmParams,
    weights: &ClassWeights,
) -> Result<(SvmModel<T>, SmoSolution)> {
    check_training(x, labels)?;
    let gamma = resolve_gamma(params.gamma, x);
    let k = kernel_matrix(x, params.kernel, gamma, params.degree);
    let y: Vec<f64> = labels.iter().map(|l| if l.is_malignant() { 1.0 } else { -1.0 }).collect();
    let upper: Vec<f64> = labels.iter().map(|&l| params.c * weights.of(l)).collect();
    let max_iter = if params.max_iter == 0 {
        (100 * x.nrows()).max(100_000)
    } else {
        params.max_iter
    };
    let sol = smo(&k, &y, &upper, params.tolerance, max_iter);
    if !sol.converged {
        log::warn!(
            "SMO stopped at the iteration cap ({max_iter}) for kernel {} C={}",
            params.kernel,
            params.c
        );
    }
    let sv: Vec<usize> = (0..x.nrows()).filter(|&i| sol.alpha[i] > 0.0).collect();
    let mut support = Vec::with_capacity(sv.len() * x.ncols());
    for &i in &sv {
        support.extend_from_slice(x.row(i));
    }
    let model = SvmModel {
        kernel: params.kernel,
        gamma,
        degree: params.degree,
        n_features: x.ncols(),
        support,
        dual_coef: sv.iter().map(|&i| T::lit(sol.alpha[i] * y[i])).collect(),
        rho: T::lit(sol.rho),
        meta: TrainingMeta {
            seed: 0,
            iterations: sol.iterations,
            converged: sol.converged,
        },
    };
    Ok((model, sol))
}

pub fn fit_svm<T: Scalar>(
    x: &FeatureMatrix<T>,
    labels: &[Label],
    params: &SvmParams,
    weights: &ClassWeights,
) -> Result<SvmModel<T>> {
    Ok(fit_svm_with_solution(x, labels, params, weights)?.0)
}
