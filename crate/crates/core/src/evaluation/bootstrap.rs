use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{all_metrics, Metric};
use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub seed: u64,
    /// Draws attempted per resample before it is skipped for lacking a class.
    pub max_attempts: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_resamples: 1000,
            seed: 42,
            max_attempts: 10,
        }
    }
}

/// Per-metric resampled values in [`Metric::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSamples {
    pub values: [Vec<f64>; 4],
    pub skipped: usize,
    /// Extra draws made because a resample lacked a class.
    pub redraws: usize,
}

/// Quantile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Resamples rows with replacement. Resample `i` draws from its own stream
/// seeded with `seed + i`, so the result does not depend on scheduling.
pub fn bootstrap_distribution(
    truth: &[Label],
    pred: &[Label],
    scores: &[f64],
    cfg: &BootstrapConfig,
) -> Result<BootstrapSamples> {
    if cfg.n_resamples < 100 {
        return Err(Error::InvalidInput(format!(
            "at least 100 bootstrap resamples are required, got {}",
            cfg.n_resamples
        )));
    }
    if truth.len() != pred.len() || truth.len() != scores.len() || truth.is_empty() {
        return Err(Error::InvalidInput("bootstrap inputs must be non-empty and of equal length".into()));
    }
    let n = truth.len();
    let draws: Vec<(Option<[f64; 4]>, usize)> = (0..cfg.n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let mut t = Vec::with_capacity(n);
            let mut p = Vec::with_capacity(n);
            let mut s = Vec::with_capacity(n);
            for attempt in 0..cfg.max_attempts.max(1) {
                t.clear();
                p.clear();
                s.clear();
                for _ in 0..n {
                    let k = rng.gen_range(0..n);
                    t.push(truth[k]);
                    p.push(pred[k]);
                    s.push(scores[k]);
                }
                if let Ok(v) = all_metrics(&t, &p, &s) {
                    return (Some(v), attempt);
                }
            }
            (None, cfg.max_attempts.max(1))
        })
        .collect();
    let mut values: [Vec<f64>; 4] = Default::default();
    let mut skipped = 0;
    let mut redraws = 0;
    for (v, extra) in draws {
        redraws += extra;
        match v {
            Some(v) => {
                for (slot, x) in values.iter_mut().zip(v) {
                    slot.push(x);
                }
            }
            None => skipped += 1,
        }
    }
    if values[0].len() < 10 {
        return Err(Error::Bootstrap { valid: values[0].len() });
    }
    Ok(BootstrapSamples {
        values,
        skipped,
        redraws,
    })
}

/// 95% percentile interval for one metric.
pub fn bootstrap_ci(
    truth: &[Label],
    pred: &[Label],
    scores: &[f64],
    metric: Metric,
    cfg: &BootstrapConfig,
) -> Result<(f64, f64)> {
    let s = bootstrap_distribution(truth, pred, scores, cfg)?;
    let v = &s.values[metric.index()];
    Ok((percentile(v, 0.025), percentile(v, 0.975)))
}
