use super::special::normal_sf;
use super::TestResult;
use crate::error::{Error, Result};

/// Largest combined sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 12;

/// Two-sided Mann-Whitney U test. The statistic is U for `x`.
///
/// Uses the exact null distribution when the combined size is at most
/// [`EXACT_MAX_N`] and there are no ties; otherwise the normal approximation
/// with tie and continuity corrections.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidInput("Mann-Whitney U needs non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("Mann-Whitney sample".into()));
    }
    let nx = x.len();
    let ny = y.len();
    let n = nx + ny;
    let mut pooled: Vec<(f64, bool)> = x
        .iter()
        .map(|&v| (v, true))
        .chain(y.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    // midranks and tie groups
    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut has_ties = false;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i) as f64;
        if j - i > 1 {
            has_ties = true;
            tie_term += t * t * t - t;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        rank_sum_x += pooled[i..j].iter().filter(|p| p.1).count() as f64 * midrank;
        i = j;
    }
    let u = rank_sum_x - (nx * (nx + 1)) as f64 / 2.0;

    if n <= EXACT_MAX_N && !has_ties {
        let counts = u_distribution(nx, ny);
        let total: f64 = counts.iter().sum();
        let k = u.round() as usize;
        let cdf: f64 = counts[..=k].iter().sum::<f64>() / total;
        let sf: f64 = counts[k..].iter().sum::<f64>() / total;
        let mut r = TestResult::new("mann_whitney_u", u, (2.0 * cdf.min(sf)).min(1.0));
        r.exact = true;
        return Ok(r);
    }

    let (nxf, nyf, nf) = (nx as f64, ny as f64, n as f64);
    let mu = nxf * nyf / 2.0;
    let var = nxf * nyf / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(TestResult::new("mann_whitney_u", u, 1.0));
    }
    let z = ((u - mu).abs() - 0.5) / var.sqrt();
    let p = (2.0 * normal_sf(z)).clamp(0.0, 1.0);
    Ok(TestResult::new("mann_whitney_u", u, p))
}

/// Number of orderings giving each value of U, for U = 0..=nx*ny.
fn u_distribution(nx: usize, ny: usize) -> Vec<f64> {
    // f[m][n] as a vector over u; built with f(m,n,u) = f(m-1,n,u-n) + f(m,n-1,u)
    let max_u = nx * ny;
    let mut table: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); ny + 1]; nx + 1];
    for m in 0..=nx {
        for k in 0..=ny {
            let mut dist = vec![0.0; m * k + 1];
            if m == 0 || k == 0 {
                dist[0] = 1.0;
            } else {
                for (u, slot) in dist.iter_mut().enumerate() {
                    let mut v = 0.0;
                    if u >= k {
                        v += table[m - 1][k].get(u - k).copied().unwrap_or(0.0);
                    }
                    v += table[m][k - 1].get(u).copied().unwrap_or(0.0);
                    *slot = v;
                }
            }
            table[m][k] = dist;
        }
    }
    let out = std::mem::take(&mut table[nx][ny]);
    debug_assert_eq!(out.len(), max_u + 1);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tiny_exact_case() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.exact);
        assert_relative_eq!(r.p_value, 2.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn identical_samples_give_unit_p() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(r.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn all_tied_gives_unit_p() {
        let r = mann_whitney_u(&[5.0; 20], &[5.0; 20]).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn separated_large_samples() {
        let a = vec![30.0; 20];
        let b = vec![70.0; 20];
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!(r.p_value < 1e-3, "p = {}", r.p_value);
    }

    #[test]
    fn distribution_sums_to_binomial() {
        let d = u_distribution(5, 7);
        assert_eq!(d.iter().sum::<f64>(), 792.0);
        // symmetric about nx*ny/2
        for u in 0..d.len() {
            assert_eq!(d[u], d[d.len() - 1 - u]);
        }
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }
}
