//! Paired significance testing across per-query metric values.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedTTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub degrees_of_freedom: usize,
    /// `p < alpha / comparisons`.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired observations, got {0}")]
    TooFew(usize),
    #[error("comparison count must be at least 1")]
    NoComparisons,
    #[error("alpha {0} outside (0, 1)")]
    BadAlpha(f64),
}

/// Two-sided paired t-test of `a` against `b` with a Bonferroni-corrected
/// significance level `alpha / comparisons`.
///
/// Identical samples give `t = 0, p = 1`. Constant non-zero differences have
/// zero variance; they give an infinite `t` and `p = 0`.
pub fn paired_ttest_bonferroni(
    a: &[f64],
    b: &[f64],
    comparisons: usize,
    alpha: f64,
) -> Result<PairedTTest, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFew(n));
    }
    if comparisons == 0 {
        return Err(StatsError::NoComparisons);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::BadAlpha(alpha));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    let (t, p) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        }
    } else {
        let t = mean * (n as f64).sqrt() / var.sqrt();
        let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
        (t, (2.0 * dist.sf(t.abs())).min(1.0))
    };
    Ok(PairedTTest {
        t,
        p,
        degrees_of_freedom: df,
        significant: p < alpha / comparisons as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [0.1, 0.5, 0.3];
        let r = paired_ttest_bonferroni(&a, &a, 1, 0.05).unwrap();
        assert_eq!((r.t, r.p, r.significant), (0.0, 1.0, false));
    }

    #[test]
    fn constant_shift_is_significant() {
        let a = [0.2, 0.4, 0.6, 0.8, 1.0];
        let b: Vec<f64> = a.iter().map(|x| x - 0.1).collect();
        let r = paired_ttest_bonferroni(&a, &b, 3, 0.05).unwrap();
        assert!(r.p < 1e-12 && r.significant);
    }

    #[test]
    fn input_errors() {
        assert_eq!(
            paired_ttest_bonferroni(&[1.0], &[1.0], 1, 0.05),
            Err(StatsError::TooFew(1))
        );
        assert!(paired_ttest_bonferroni(&[1.0, 2.0], &[1.0], 1, 0.05).is_err());
        assert!(paired_ttest_bonferroni(&[1.0, 2.0], &[1.0, 3.0], 0, 0.05).is_err());
    }

    #[test]
    fn bonferroni_divides_alpha() {
        let a = [0.31, 0.52, 0.44, 0.61, 0.29, 0.47, 0.55, 0.38];
        let b = [0.28, 0.47, 0.45, 0.52, 0.27, 0.41, 0.50, 0.36];
        let one = paired_ttest_bonferroni(&a, &b, 1, 0.05).unwrap();
        let many = paired_ttest_bonferroni(&a, &b, 1000, 0.05).unwrap();
        assert_eq!(one.p, many.p);
        assert!(one.significant && !many.significant);
    }
}
