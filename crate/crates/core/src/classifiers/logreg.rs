//! Class-weighted logistic regression.
//!
//! Minimises `(1/n) sum_i s_i l_i + lambda * P(w)` with `lambda = 1 / (n C)`,
//! which has the same minimiser as `C sum_i s_i l_i + P(w)`. `P` is
//! `||w||^2 / 2` (l2), `||w||_1` (l1) or `(1 - r)||w||^2 / 2 + r ||w||_1`
//! (elastic net with ratio `r`). The intercept is never penalised.
//!
//! Newton-family solver names use a damped Newton method (l2/none only).
//! The others use FISTA: accelerated proximal gradient with soft-thresholding
//! and gradient-based momentum restart.

use serde::{Deserialize, Serialize};

use super::{check_training, LogRegParams, Penalty, TrainingMeta};
use crate::dataset::Label;
use crate::error::Result;
use crate::matrix::FeatureMatrix;
use crate::preprocessing::ClassWeights;
use crate::scalar::Scalar;

/// Above this many features the Newton path falls back to FISTA.
const NEWTON_MAX_FEATURES: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LogRegModel<T> {
    #[serde(with = "crate::codec::block")]
    pub weights: Vec<T>,
    #[serde(with = "crate::codec::real")]
    pub intercept: T,
    pub meta: TrainingMeta,
}

impl<T: Scalar> LogRegModel<T> {
    pub fn decision(&self, x: &[T]) -> T {
        x.iter().zip(&self.weights).fold(self.intercept, |acc, (&a, &w)| acc + a * w)
    }
}

fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

struct Problem<'a, T> {
    x: &'a FeatureMatrix<T>,
    y: Vec<T>,
    s: Vec<T>,
    inv_n: T,
    /// l2 coefficient of the smooth part and l1 coefficient of the prox part.
    l2: T,
    l1: T,
}

impl<T: Scalar> Problem<'_, T> {
    fn d(&self) -> usize {
        self.x.ncols()
    }

    fn margins(&self, theta: &[T]) -> Vec<T> {
        let d = self.d();
        self.x
            .rows_iter()
            .map(|r| r.iter().zip(&theta[..d]).fold(theta[d], |acc, (&a, &w)| acc + a * w))
            .collect()
    }

    /// Smooth objective and its gradient.
    fn smooth(&self, theta: &[T]) -> (T, Vec<T>) {
        let d = self.d();
        let z = self.margins(theta);
        let mut grad = vec![T::zero(); d + 1];
        let mut loss = T::zero();
        for (i, r) in self.x.rows_iter().enumerate() {
            loss += self.s[i] * (softplus(z[i]) - self.y[i] * z[i]);
            let g = self.s[i] * (sigmoid(z[i]) - self.y[i]);
            for (gj, &xj) in grad[..d].iter_mut().zip(r) {
                *gj += g * xj;
            }
            grad[d] += g;
        }
        let half = T::lit(0.5);
        let mut reg = T::zero();
        for j in 0..d {
            grad[j] = grad[j] * self.inv_n + self.l2 * theta[j];
            reg += theta[j] * theta[j];
        }
        grad[d] *= self.inv_n;
        (loss * self.inv_n + half * self.l2 * reg, grad)
    }

    fn objective(&self, theta: &[T]) -> T {
        let l1: T = theta[..self.d()].iter().map(|w| w.abs()).sum();
        self.smooth(theta).0 + self.l1 * l1
    }

    /// Upper bound on the Lipschitz constant of the smooth gradient.
    fn lipschitz(&self) -> T {
        let d = self.d();
        let mut v = vec![T::one(); d + 1];
        let mut lam = T::zero();
        for _ in 0..100 {
            let mut out = vec![T::zero(); d + 1];
            for (i, r) in self.x.rows_iter().enumerate() {
                let dot = r.iter().zip(&v).fold(v[d], |acc, (&a, &b)| acc + a * b) * self.s[i];
                for (o, &xj) in out[..d].iter_mut().zip(r) {
                    *o += dot * xj;
                }
                out[d] += dot;
            }
            let norm = out.iter().map(|o| *o * *o).sum::<T>().sqrt();
            if norm == T::zero() {
                break;
            }
            lam = norm / v.iter().map(|o| *o * *o).sum::<T>().sqrt();
            v = out.into_iter().map(|o| o / norm).collect();
        }
        (T::lit(0.25) * lam * self.inv_n * T::lit(1.05) + self.l2).max(T::lit(1e-12))
    }
}

fn soft_threshold<T: Scalar>(v: T, t: T) -> T {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        T::zero()
    }
}

fn fista<T: Scalar>(p: &Problem<'_, T>, max_iter: usize, tol: f64) -> (Vec<T>, usize, bool) {
    let d = p.d();
    let big_l = p.lipschitz();
    let step = T::one() / big_l;
    let mut theta = vec![T::zero(); d + 1];
    let mut yk = theta.clone();
    let mut t = T::one();
    for it in 1..=max_iter {
        let (_, g) = p.smooth(&yk);
        let mut next: Vec<T> = yk.iter().zip(&g).map(|(&a, &b)| a - step * b).collect();
        for v in next[..d].iter_mut() {
            *v = soft_threshold(*v, step * p.l1);
        }
        let mapping: T = next.iter().zip(&yk).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt() * big_l;
        if mapping.as_f64() < tol {
            return (next, it, true);
        }
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / T::lit(2.0);
        // restart momentum when it points uphill
        let uphill: T = yk
            .iter()
            .zip(&next)
            .zip(&theta)
            .map(|((&y, &n), &o)| (y - n) * (n - o))
            .sum();
        if uphill > T::zero() {
            t = T::one();
            yk = next.clone();
        } else {
            let mom = (t - T::one()) / t_next;
            yk = next.iter().zip(&theta).map(|(&n, &o)| n + mom * (n - o)).collect();
            t = t_next;
        }
        theta = next;
    }
    (theta, max_iter, false)
}

/// Cholesky solve of `a x = b` for symmetric positive definite `a` (row-major).
fn cholesky_solve<T: Scalar>(a: &[T], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= T::zero() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] = z[i] - l[i * n + k] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] = z[i] - l[k * n + i] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    Some(z)
}

fn newton<T: Scalar>(p: &Problem<'_, T>, max_iter: usize, tol: f64) -> (Vec<T>, usize, bool) {
    let d = p.d();
    let m = d + 1;
    let mut theta = vec![T::zero(); m];
    let (mut f, mut g) = p.smooth(&theta);
    for it in 1..=max_iter {
        let gnorm = g.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if gnorm.as_f64() < tol {
            return (theta, it - 1, true);
        }
        let z = p.margins(&theta);
        let mut h = vec![T::zero(); m * m];
        let mut row = vec![T::one(); m];
        for (i, r) in p.x.rows_iter().enumerate() {
            row[..d].copy_from_slice(r);
            let pi = sigmoid(z[i]);
            let w = p.s[i] * pi * (T::one() - pi) * p.inv_n;
            if w == T::zero() {
                continue;
            }
            for a in 0..m {
                let wa = w * row[a];
                for b in 0..=a {
                    h[a * m + b] += wa * row[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                h[b * m + a] = h[a * m + b];
            }
            h[a * m + a] += if a < d { p.l2 } else { T::zero() } + T::lit(1e-10);
        }
        let Some(dir) = cholesky_solve(&h, &g) else {
            return (theta, it, false);
        };
        let slope: T = dir.iter().zip(&g).map(|(&a, &b)| a * b).sum();
        let mut step = T::one();
        loop {
            let cand: Vec<T> = theta.iter().zip(&dir).map(|(&t, &dv)| t - step * dv).collect();
            let (fc, gc) = p.smooth(&cand);
            if fc <= f - T::lit(1e-4) * step * slope || step < T::lit(1e-10) {
                theta = cand;
                f = fc;
                g = gc;
                break;
            }
            step *= T::lit(0.5);
        }
    }
    let gnorm = g.iter().map(|v| *v * *v).sum::<T>().sqrt();
    (theta, max_iter, gnorm.as_f64() < tol)
}

pub fn fit_logreg<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[Label],
    params: &LogRegParams,
    weights: &ClassWeights,
) -> Result<LogRegModel<T>> {
    check_training(x, y)?;
    let n = x.nrows() as f64;
    let lambda = match params.penalty {
        Penalty::None => 0.0,
        _ => 1.0 / (n * params.c),
    };
    let ratio = match params.penalty {
        Penalty::L1 => 1.0,
        Penalty::L2 | Penalty::None => 0.0,
        Penalty::ElasticNet => params.l1_ratio,
    };
    let p = Problem {
        x,
        y: y.iter().map(|l| T::lit(l.as_index() as f64)).collect(),
        s: y.iter().map(|&l| T::lit(weights.of(l))).collect(),
        inv_n: T::lit(1.0 / n),
        l2: T::lit(lambda * (1.0 - ratio)),
        l1: T::lit(lambda * ratio),
    };
    let use_newton = params.solver.uses_newton() && ratio == 0.0 && x.ncols() <= NEWTON_MAX_FEATURES;
    let (theta, iterations, converged) = if use_newton {
        newton(&p, params.max_iter, params.tolerance)
    } else {
        fista(&p, params.max_iter, params.tolerance)
    };
    let d = x.ncols();
    log::debug!(
        "logreg {} penalty={} C={} finished after {iterations} iterations (converged: {converged}), objective {}",
        params.solver,
        params.penalty,
        params.c,
        p.objective(&theta)
    );
    Ok(LogRegModel {
        weights: theta[..d].to_vec(),
        intercept: theta[d],
        meta: TrainingMeta {
            seed: 0,
            iterations,
            converged,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::LogRegSolver;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(penalty: Penalty, c: f64, solver: LogRegSolver, max_iter: usize) -> LogRegParams {
        LogRegParams {
            penalty,
            c,
            solver,
            max_iter,
            ..LogRegParams::default()
        }
    }

    fn noisy_line(n: usize, seed: u64) -> (FeatureMatrix<f64>, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            rows.push(vec![if pos { 2.0 } else { -2.0 } + rng.gen_range(-2.5..2.5), rng.gen_range(-1.0..1.0)]);
            y.push(Label::from_bool(pos));
        }
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn symmetric_data_zero_intercept() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..10 {
            rows.push(vec![-1.0]);
            y.push(Label::Benign);
            rows.push(vec![1.0]);
            y.push(Label::Malignant);
        }
        let x: FeatureMatrix<f64> = FeatureMatrix::from_rows(&rows).unwrap();
        for solver in [LogRegSolver::Lbfgs, LogRegSolver::Saga] {
            let m = fit_logreg(&x, &y, &params(Penalty::L2, 1.0, solver, 100), &ClassWeights::UNIFORM).unwrap();
            assert!(m.intercept.abs() < 1e-3, "{solver}: {}", m.intercept);
            assert!(m.weights[0] > 0.0);
        }
    }

    #[test]
    fn strong_l1_zeroes_noise_exactly() {
        let (x, y) = noisy_line(200, 4);
        let m = fit_logreg(&x, &y, &params(Penalty::L1, 0.01, LogRegSolver::Liblinear, 500), &ClassWeights::UNIFORM).unwrap();
        assert_eq!(m.weights[1], 0.0);
        assert!(m.weights[0] > 0.0, "{:?}", m.weights);
    }

    #[test]
    fn unpenalised_separable_hits_iteration_cap() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 - 9.5]).collect();
        let y: Vec<Label> = (0..20).map(|i| Label::from_bool(i >= 10)).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let m = fit_logreg(&x, &y, &params(Penalty::None, 1.0, LogRegSolver::Saga, 100), &ClassWeights::UNIFORM).unwrap();
        assert!(!m.meta.converged);
        assert_eq!(m.meta.iterations, 100);
        let acc = x.rows_iter().zip(&y).filter(|(r, l)| super::super::label_of(m.decision(r)) == **l).count();
        assert_eq!(acc, 20);
    }

    #[test]
    fn l2_path_approaches_unpenalised_solution() {
        let (x, y) = noisy_line(120, 8);
        let free = fit_logreg(&x, &y, &params(Penalty::None, 1.0, LogRegSolver::NewtonCg, 100), &ClassWeights::UNIFORM).unwrap();
        assert!(free.meta.converged);
        let dist = |c: f64| {
            let m = fit_logreg(&x, &y, &params(Penalty::L2, c, LogRegSolver::NewtonCg, 100), &ClassWeights::UNIFORM).unwrap();
            m.weights
                .iter()
                .chain(std::iter::once(&m.intercept))
                .zip(free.weights.iter().chain(std::iter::once(&free.intercept)))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let (d1, d2, d3) = (dist(0.01), dist(1.0), dist(100.0));
        assert!(d1 > d2 && d2 > d3, "{d1} {d2} {d3}");
    }

    #[test]
    fn solvers_agree_on_l2() {
        let (x, y) = noisy_line(100, 2);
        let w = compute(&x, &y, LogRegSolver::Lbfgs);
        let v = compute(&x, &y, LogRegSolver::Saga);
        for (a, b) in w.iter().zip(&v) {
            assert!((a - b).abs() < 1e-4, "{w:?} vs {v:?}");
        }
    }

    fn compute(x: &FeatureMatrix<f64>, y: &[Label], solver: LogRegSolver) -> Vec<f64> {
        let m = fit_logreg(x, y, &params(Penalty::L2, 1.0, solver, 5000), &ClassWeights::UNIFORM).unwrap();
        let mut v = m.weights.clone();
        v.push(m.intercept);
        v
    }

    #[test]
    fn deterministic_bits() {
        let (x, y) = noisy_line(80, 5);
        let p = params(Penalty::ElasticNet, 0.1, LogRegSolver::Saga, 200);
        let a = fit_logreg(&x, &y, &p, &ClassWeights::UNIFORM).unwrap();
        let b = fit_logreg(&x, &y, &p, &ClassWeights::UNIFORM).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_finite() {
        let x = FeatureMatrix::from_rows(&[vec![f64::NAN], vec![1.0]]).unwrap();
        assert!(fit_logreg(&x, &[Label::Benign, Label::Malignant], &LogRegParams::default(), &ClassWeights::UNIFORM).is_err());
    }
}
