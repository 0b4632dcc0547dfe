//! Feed-forward network with a sigmoid output unit and cross-entropy loss.
//!
//! Parameters live in one flat vector laid out layer by layer as
//! `[W_0, b_0, W_1, b_1, ...]`, each `W_l` row-major `out x in`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_training, Activation, LearningRate, MlpInit, MlpParams, MlpSolver, TrainingMeta};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::preprocessing::ClassWeights;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MlpNetwork<T> {
    /// Layer widths including input and the single output unit.
    pub sizes: Vec<usize>,
    pub activation: Activation,
    #[serde(with = "crate::codec::block")]
    pub params: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MlpModel<T> {
    pub network: MlpNetwork<T>,
    pub meta: TrainingMeta,
}

fn activate<T: Scalar>(a: Activation, z: T) -> T {
    match a {
        Activation::Relu => z.max(T::zero()),
        Activation::Tanh => z.tanh(),
    }
}

/// Derivative expressed through the activation output `h` (and input `z` for relu).
fn activate_grad<T: Scalar>(a: Activation, z: T, h: T) -> T {
    match a {
        Activation::Relu => {
            if z > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        Activation::Tanh => T::one() - h * h,
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

impl<T: Scalar> MlpNetwork<T> {
    fn layout(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: Vec<usize>, activation: Activation) -> Self {
        let n = Self::layout(&sizes);
        Self {
            sizes,
            activation,
            params: vec![T::zero(); n],
        }
    }

    /// Uniform Glorot initialisation of weights and biases,
    /// bound `sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(sizes: Vec<usize>, activation: Activation, rng: &mut impl Rng) -> Self {
        let mut params = Vec::with_capacity(Self::layout(&sizes));
        for w in sizes.windows(2) {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(T::lit(rng.gen_range(-bound..bound)));
            }
        }
        Self {
            sizes,
            activation,
            params,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn offsets(&self, l: usize) -> (usize, usize) {
        let w = Self::layout(&self.sizes[..=l]);
        (w, w + self.sizes[l] * self.sizes[l + 1])
    }

    /// Pre-activations and activations of every layer for a batch.
    /// `acts[0]` is the input; `pre[l]` feeds `acts[l + 1]`.
    fn forward(&self, x: &[&[T]]) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
        let b = x.len();
        let mut acts: Vec<Vec<T>> = vec![x.iter().flat_map(|r| r.iter().copied()).collect()];
        let mut pre = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let (wo, bo) = self.offsets(l);
            let w = &self.params[wo..wo + fan_in * fan_out];
            let bias = &self.params[bo..bo + fan_out];
            let input = &acts[l];
            let mut z = vec![T::zero(); b * fan_out];
            for r in 0..b {
                let xi = &input[r * fan_in..(r + 1) * fan_in];
                for o in 0..fan_out {
                    let wr = &w[o * fan_in..(o + 1) * fan_in];
                    z[r * fan_out + o] = bias[o] + dot(xi, wr);
                }
            }
            let last = l + 1 == self.n_layers();
            let h = if last {
                z.clone()
            } else {
                z.iter().map(|&v| activate(self.activation, v)).collect()
            };
            pre.push(z);
            acts.push(h);
        }
        (pre, acts)
    }

    pub fn logits(&self, x: &FeatureMatrix<T>) -> Vec<T> {
        let rows: Vec<&[T]> = x.rows_iter().collect();
        self.forward(&rows).1.pop().unwrap_or_default()
    }

    /// Activations of the first hidden layer, one vector per row.
    pub fn hidden_activations(&self, x: &FeatureMatrix<T>) -> Vec<Vec<T>> {
        let rows: Vec<&[T]> = x.rows_iter().collect();
        let (_, acts) = self.forward(&rows);
        acts[1].chunks(self.sizes[1]).map(<[T]>::to_vec).collect()
    }

    /// The objective of [`Self::loss_and_gradient`] without the gradient.
    pub fn loss(&self, x: &[&[T]], y: &[T], s: &[T], alpha: T) -> T {
        let inv_n = T::one() / T::from_usize_lossy(x.len());
        let (_, acts) = self.forward(x);
        let data = acts[self.n_layers()]
            .iter()
            .zip(y.iter().zip(s))
            .fold(T::zero(), |acc, (&z, (&yi, &si))| acc + si * (softplus(z) - yi * z));
        let mut sq = T::zero();
        for l in 0..self.n_layers() {
            let (wo, bo) = self.offsets(l);
            sq += self.params[wo..bo].iter().fold(T::zero(), |a, &w| a + w * w);
        }
        data * inv_n + T::lit(0.5) * alpha * inv_n * sq
    }

    /// Mean weighted cross-entropy plus `alpha / (2 n) * sum W^2`, and its
    /// gradient with respect to the flat parameter vector.
    pub fn loss_and_gradient(&self, x: &[&[T]], y: &[T], s: &[T], alpha: T) -> (T, Vec<T>) {
        let b = x.len();
        let inv_n = T::one() / T::from_usize_lossy(b);
        let (pre, acts) = self.forward(x);
        let logits = &acts[self.n_layers()];
        let mut loss = T::zero();
        let mut delta: Vec<T> = (0..b)
            .map(|i| {
                loss += s[i] * (softplus(logits[i]) - y[i] * logits[i]);
                s[i] * (sigmoid(logits[i]) - y[i]) * inv_n
            })
            .collect();
        loss *= inv_n;
        let mut grad = vec![T::zero(); self.params.len()];
        let mut sq = T::zero();
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let (wo, bo) = self.offsets(l);
            let input = &acts[l];
            for o in 0..fan_out {
                let gw = &mut grad[wo + o * fan_in..wo + (o + 1) * fan_in];
                for r in 0..b {
                    let d = delta[r * fan_out + o];
                    if d != T::zero() {
                        for (g, &a) in gw.iter_mut().zip(&input[r * fan_in..(r + 1) * fan_in]) {
                            *g += d * a;
                        }
                    }
                }
                grad[bo + o] = (0..b).map(|r| delta[r * fan_out + o]).sum();
            }
            for k in wo..wo + fan_in * fan_out {
                let w = self.params[k];
                sq += w * w;
                grad[k] += alpha * inv_n * w;
            }
            if l > 0 {
                let w = &self.params[wo..wo + fan_in * fan_out];
                let mut next = vec![T::zero(); b * fan_in];
                for r in 0..b {
                    for o in 0..fan_out {
                        let d = delta[r * fan_out + o];
                        if d == T::zero() {
                            continue;
                        }
                        for (k, &wk) in w[o * fan_in..(o + 1) * fan_in].iter().enumerate() {
                            next[r * fan_in + k] += d * wk;
                        }
                    }
                    for k in 0..fan_in {
                        let idx = r * fan_in + k;
                        next[idx] *= activate_grad(self.activation, pre[l - 1][idx], input[idx]);
                    }
                }
                delta = next;
            }
        }
        (loss + T::lit(0.5) * alpha * inv_n * sq, grad)
    }
}

/// Dot product with four independent partial sums so the compiler can
/// vectorise it; the summation order is fixed, so results are reproducible.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

enum Optimizer<T> {
    Adam { m: Vec<T>, v: Vec<T>, t: i32 },
    Sgd { velocity: Vec<T> },
}

impl<T: Scalar> Optimizer<T> {
    fn new(solver: MlpSolver, n: usize) -> Self {
        match solver {
            MlpSolver::Sgd => Optimizer::Sgd {
                velocity: vec![T::zero(); n],
            },
            _ => Optimizer::Adam {
                m: vec![T::zero(); n],
                v: vec![T::zero(); n],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        match self {
            Optimizer::Adam { m, v, t } => {
                let (b1, b2, eps) = (0.9, 0.999, 1e-8);
                *t += 1;
                let lr_t = T::lit(lr * (1.0 - f64::powi(b2, *t)).sqrt() / (1.0 - f64::powi(b1, *t)));
                for k in 0..params.len() {
                    m[k] = T::lit(b1) * m[k] + T::lit(1.0 - b1) * grad[k];
                    v[k] = T::lit(b2) * v[k] + T::lit(1.0 - b2) * grad[k] * grad[k];
                    params[k] -= lr_t * m[k] / (v[k].sqrt() + T::lit(eps));
                }
            }
            Optimizer::Sgd { velocity } => {
                let mom = T::lit(0.9);
                let lr = T::lit(lr);
                for k in 0..params.len() {
                    velocity[k] = mom * velocity[k] - lr * grad[k];
                    params[k] += mom * velocity[k] - lr * grad[k];
                }
            }
        }
    }
}

/// Stratified hold-out of roughly `fraction` of each class.
fn validation_split(y: &[Label], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [Label::Benign, Label::Malignant] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(rng);
        let k = ((idx.len() as f64 * fraction).round() as usize).min(idx.len().saturating_sub(1));
        val.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

pub fn fit_mlp<T: Scalar>(
    x: &FeatureMatrix<T>,
    labels: &[Label],
    params: &MlpParams,
    weights: &ClassWeights,
    seed: u64,
) -> Result<MlpModel<T>> {
    check_training(x, labels)?;
    if params.solver == MlpSolver::Lbfgs {
        return Err(Error::Config("the MLP lbfgs solver is not implemented".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![x.ncols()];
    sizes.extend_from_slice(&params.hidden_layer_sizes);
    sizes.push(1);
    let mut net = match params.init {
        MlpInit::Glorot => MlpNetwork::glorot(sizes, params.activation, &mut rng),
        MlpInit::Zeros => MlpNetwork::zeros(sizes, params.activation),
    };
    let y: Vec<T> = labels.iter().map(|l| T::lit(l.as_index() as f64)).collect();
    let s: Vec<T> = labels.iter().map(|&l| T::lit(weights.of(l))).collect();
    let use_val = params.early_stopping && x.nrows() >= 20;
    let (mut train_idx, val_idx) = if use_val {
        validation_split(labels, params.validation_fraction, &mut rng)
    } else {
        ((0..x.nrows()).collect(), Vec::new())
    };
    let val_rows: Vec<&[T]> = val_idx.iter().map(|&i| x.row(i)).collect();
    let val_y: Vec<T> = val_idx.iter().map(|&i| y[i]).collect();
    let val_s: Vec<T> = val_idx.iter().map(|&i| s[i]).collect();
    let alpha = T::lit(params.alpha);
    let batch = params.batch_size.clamp(1, train_idx.len());
    let mut opt = Optimizer::new(params.solver, net.params.len());
    let mut lr = params.learning_rate_init;
    let mut best = f64::INFINITY;
    let mut best_params = net.params.clone();
    let mut stall = 0usize;
    let mut samples_seen = 0usize;
    let mut epochs = 0usize;
    let mut converged = false;

    for epoch in 0..params.max_epochs {
        epochs = epoch + 1;
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in train_idx.chunks(batch) {
            let rows: Vec<&[T]> = chunk.iter().map(|&i| x.row(i)).collect();
            let by: Vec<T> = chunk.iter().map(|&i| y[i]).collect();
            let bs: Vec<T> = chunk.iter().map(|&i| s[i]).collect();
            let (loss, grad) = net.loss_and_gradient(&rows, &by, &bs, alpha);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch: epochs });
            }
            epoch_loss += loss.as_f64() * chunk.len() as f64;
            opt.step(&mut net.params, &grad, lr);
        }
        samples_seen += train_idx.len();
        epoch_loss /= train_idx.len() as f64;
        let monitored = if use_val {
            net.loss(&val_rows, &val_y, &val_s, alpha).as_f64()
        } else {
            epoch_loss
        };
        if !monitored.is_finite() {
            return Err(Error::Diverged { epoch: epochs });
        }
        if params.solver == MlpSolver::Sgd && params.learning_rate == LearningRate::InvScaling {
            lr = params.learning_rate_init / ((samples_seen + 1) as f64).sqrt();
        }
        if monitored < best - params.tolerance {
            best = monitored;
            best_params.clone_from(&net.params);
            stall = 0;
        } else {
            if monitored < best {
                best = monitored;
                best_params.clone_from(&net.params);
            }
            stall += 1;
        }
        if stall >= params.patience {
            if params.solver == MlpSolver::Sgd && params.learning_rate == LearningRate::Adaptive && lr > 1e-6 {
                lr /= 5.0;
                stall = 0;
            } else {
                converged = true;
                break;
            }
        }
    }
    if use_val {
        net.params = best_params;
    }
    Ok(MlpModel {
        network: net,
        meta: TrainingMeta {
            seed,
            iterations: epochs,
            converged,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::label_of;

    fn flat_rows(x: &FeatureMatrix<f64>) -> Vec<&[f64]> {
        x.rows_iter().collect()
    }

    fn gradient_error(act: Activation, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net: MlpNetwork<f64> = MlpNetwork::glorot(vec![2, 3, 1], act, &mut rng);
        let x = loop {
            let rows: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
            let m = FeatureMatrix::from_rows(&rows).unwrap();
            let (pre, _) = net.forward(&flat_rows(&m));
            if act == Activation::Tanh || pre[0].iter().all(|z| z.abs() > 1e-3) {
                break m;
            }
        };
        let y: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
        let s = vec![1.0; 8];
        let rows = flat_rows(&x);
        let (_, g) = net.loss_and_gradient(&rows, &y, &s, 1e-4);
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..net.params.len() {
            let mut p = net.clone();
            p.params[k] += eps;
            let up = p.loss_and_gradient(&rows, &y, &s, 1e-4).0;
            p.params[k] -= 2.0 * eps;
            let down = p.loss_and_gradient(&rows, &y, &s, 1e-4).0;
            let num = (up - down) / (2.0 * eps);
            worst = worst.max((num - g[k]).abs() / num.abs().max(g[k].abs()).max(1e-6));
        }
        worst
    }

    #[test]
    fn loss_without_gradient_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net: MlpNetwork<f64> = MlpNetwork::glorot(vec![7, 5, 3, 1], Activation::Relu, &mut rng);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..7).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let x: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let y: Vec<f64> = (0..30).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let s: Vec<f64> = (0..30).map(|i| 1.0 + (i % 2) as f64).collect();
        let (full, _) = net.loss_and_gradient(&x, &y, &s, 0.3);
        assert!((net.loss(&x, &y, &s, 0.3) - full).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..10 {
            for act in [Activation::Tanh, Activation::Relu] {
                let e = gradient_error(act, seed);
                assert!(e < 1e-4, "{act} seed {seed}: {e}");
            }
        }
    }

    #[test]
    fn zero_init_keeps_hidden_units_identical() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, -1.0], vec![-1.0, 1.0], vec![0.5, 0.5], vec![-0.5, -0.5]];
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let y = vec![Label::Malignant, Label::Benign, Label::Malignant, Label::Benign];
        let p = MlpParams {
            hidden_layer_sizes: vec![4],
            activation: Activation::Tanh,
            max_epochs: 1,
            init: MlpInit::Zeros,
            ..MlpParams::default()
        };
        let m = fit_mlp(&x, &y, &p, &ClassWeights::UNIFORM, 1).unwrap();
        for h in m.network.hidden_activations(&x) {
            assert!(h.iter().all(|&v| v == h[0]), "{h:?}");
        }
    }

    fn two_moons(n: usize, seed: u64) -> (FeatureMatrix<f64>, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let t = rng.gen_range(0.0..std::f64::consts::PI);
            let (px, py, lab) = if i % 2 == 0 {
                (t.cos(), t.sin(), false)
            } else {
                (1.0 - t.cos(), 0.5 - t.sin(), true)
            };
            rows.push(vec![px + rng.gen_range(-0.1..0.1), py + rng.gen_range(-0.1..0.1)]);
            y.push(Label::from_bool(lab));
        }
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn learns_two_moons() {
        let (x, y) = two_moons(200, 0);
        let p = MlpParams {
            hidden_layer_sizes: vec![50],
            activation: Activation::Relu,
            solver: MlpSolver::Adam,
            learning_rate_init: 0.01,
            max_epochs: 400,
            early_stopping: false,
            ..MlpParams::default()
        };
        let m = fit_mlp(&x, &y, &p, &ClassWeights::UNIFORM, 42).unwrap();
        let acc = m
            .network
            .logits(&x)
            .into_iter()
            .zip(&y)
            .filter(|(s, l)| label_of(*s) == **l)
            .count() as f64
            / 200.0;
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn same_seed_same_bits() {
        let (x, y) = two_moons(60, 3);
        let p = MlpParams {
            hidden_layer_sizes: vec![8, 4],
            solver: MlpSolver::Sgd,
            learning_rate: LearningRate::Adaptive,
            max_epochs: 30,
            ..MlpParams::default()
        };
        let a = fit_mlp(&x, &y, &p, &ClassWeights::UNIFORM, 9).unwrap();
        let b = fit_mlp(&x, &y, &p, &ClassWeights::UNIFORM, 9).unwrap();
        assert_eq!(a, b);
        let c = fit_mlp(&x, &y, &p, &ClassWeights::UNIFORM, 10).unwrap();
        assert_ne!(a.network.params, c.network.params);
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = two_moons(40, 1);
        let big = x.map(|v| v * 1e200);
        let p = MlpParams {
            hidden_layer_sizes: vec![4],
            learning_rate_init: 1e10,
            solver: MlpSolver::Sgd,
            early_stopping: false,
            ..MlpParams::default()
        };
        assert!(matches!(fit_mlp(&big, &y, &p, &ClassWeights::UNIFORM, 0), Err(Error::Diverged { .. })));
    }
}
