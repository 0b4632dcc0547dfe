//! Synthetic minority oversampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

pub const DEFAULT_SMOTE_K: usize = 5;

/// `k` nearest minority neighbours of every minority row (Euclidean, ties by index).
fn neighbours<T: Scalar>(x: &FeatureMatrix<T>, members: &[usize], k: usize) -> Vec<Vec<usize>> {
    members
        .iter()
        .map(|&i| {
            let mut d: Vec<(f64, usize)> = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    let dist = x
                        .row(i)
                        .iter()
                        .zip(x.row(j))
                        .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
                        .sum::<f64>();
                    (dist, j)
                })
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Appends synthetic minority rows until both classes have the majority count.
/// Original rows come first, unchanged and in order.
pub fn smote_oversample<T: Scalar>(
    x: &FeatureMatrix<T>,
    labels: &[Label],
    k: usize,
    seed: u64,
) -> Result<(FeatureMatrix<T>, Vec<Label>)> {
    if x.nrows() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    let mal: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_malignant()).collect();
    let ben: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_malignant()).collect();
    let (minority, majority_n, minority_label) = if mal.len() <= ben.len() {
        (mal, ben.len(), Label::Malignant)
    } else {
        (ben, mal.len(), Label::Benign)
    };
    let need = majority_n - minority.len();
    if need == 0 {
        return Ok((x.clone(), labels.to_vec()));
    }
    if minority.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "SMOTE needs at least 2 minority rows, found {}",
            minority.len()
        )));
    }
    let k_eff = if k + 1 > minority.len() {
        log::warn!("SMOTE k = {k} exceeds minority size - 1; using {}", minority.len() - 1);
        minority.len() - 1
    } else {
        k.max(1)
    };
    let nn = neighbours(x, &minority, k_eff);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = x.ncols();
    let mut synth = Vec::with_capacity(need * d);
    for _ in 0..need {
        let a = rng.gen_range(0..minority.len());
        let b = nn[a][rng.gen_range(0..nn[a].len())];
        let lambda: f64 = rng.gen();
        let (ra, rb) = (x.row(minority[a]), x.row(b));
        synth.extend(ra.iter().zip(rb).map(|(&p, &q)| p + T::lit(lambda) * (q - p)));
    }
    let extra = FeatureMatrix::new(need, x.names().to_vec(), synth)?;
    let mut y = labels.to_vec();
    y.extend(std::iter::repeat_n(minority_label, need));
    Ok((x.vstack(&extra)?, y))
}
