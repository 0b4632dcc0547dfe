use super::special::student_t_two_sided;
use super::TestResult;
use crate::error::{Error, Result};

/// Welch's unequal-variance two-sample t-test, two-sided.
///
/// Zero variance in both samples yields p = 1 for equal means; for different
/// means the statistic is infinite, p = 0, and the result is flagged degenerate.
pub fn t_test(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "t-test needs at least 2 observations per sample (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-test sample".into()));
    }
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    let nx = x.len() as f64;
    let ny = y.len() as f64;
    let sx = vx / nx;
    let sy = vy / ny;
    let se2 = sx + sy;
    if se2 == 0.0 {
        let mut r = if mx == my {
            TestResult::new("welch_t", 0.0, 1.0)
        } else {
            TestResult::new("welch_t", (mx - my).signum() * f64::INFINITY, 0.0)
        };
        r.degenerate = mx != my;
        r.df = Some(nx + ny - 2.0);
        return Ok(r);
    }
    let t = (mx - my) / se2.sqrt();
    let df = se2 * se2 / (sx * sx / (nx - 1.0) + sy * sy / (ny - 1.0));
    let mut r = TestResult::new("welch_t", t, student_t_two_sided(t, df));
    r.df = Some(df);
    Ok(r)
}

/// Mean and unbiased (n - 1) variance.
fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    (m, ss / (n - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_example() {
        let r = t_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_relative_eq!(r.statistic, -3.674_234_614_174_767, max_relative = 1e-12);
        assert_relative_eq!(r.df.unwrap(), 4.0, epsilon = 1e-12);
        assert!((r.p_value - 0.0213).abs() < 5e-4, "p = {}", r.p_value);
        // closed form for df = 4: p = 1 - I(...) ; cross-checked value
        assert_relative_eq!(r.p_value, 0.021_311_641_128_756_5, max_relative = 1e-8);
    }

    #[test]
    fn permutation_cross_check() {
        // Exact permutation p-value for |mean difference| over all C(6,3) splits.
        let all = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut extreme = 0;
        let mut total = 0;
        for mask in 0u32..64 {
            if mask.count_ones() != 3 {
                continue;
            }
            let a: Vec<f64> = (0..6).filter(|i| mask >> i & 1 == 1).map(|i| all[i]).collect();
            let b: Vec<f64> = (0..6).filter(|i| mask >> i & 1 == 0).map(|i| all[i]).collect();
            let d = (a.iter().sum::<f64>() - b.iter().sum::<f64>()).abs();
            total += 1;
            if d >= 9.0 - 1e-12 {
                extreme += 1;
            }
        }
        // 2/20 = 0.1; the t-test p is smaller but of the same order
        let perm = extreme as f64 / total as f64;
        let t = t_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!(t.p_value < perm && t.p_value > perm / 10.0);
    }

    #[test]
    fn identical_samples() {
        let r = t_test(&[1.0, 5.0, 2.0], &[1.0, 5.0, 2.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_relative_eq!(r.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_variance_cases() {
        let same = t_test(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(same.p_value, 1.0);
        assert!(!same.degenerate);
        let diff = t_test(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert_eq!(diff.p_value, 0.0);
        assert!(diff.degenerate);
    }

    #[test]
    fn p_decreases_with_shift() {
        let x = [1.0, 2.5, 3.1, 0.4, 2.2, 1.7];
        let mut last = 1.1;
        for k in 0..8 {
            let d = 0.3 * k as f64;
            let y: Vec<f64> = x.iter().map(|v| v + d).collect();
            let p = t_test(&x, &y).unwrap().p_value;
            assert!(p < last || (k == 0 && p <= last));
            last = p;
        }
    }

    #[test]
    fn too_few_observations() {
        assert!(t_test(&[1.0], &[1.0, 2.0]).is_err());
    }
}
