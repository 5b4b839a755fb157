//! Friedman rank test and two-sample t-tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use super::metrics::average_ranks;
use crate::error::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom of the reference distribution.
    pub df: f64,
}

/// Friedman test. `scores[i][j]` is treatment `i` (a model) on block `j` (a
/// dataset). Treatments are ranked within each block with average ranks for
/// ties, and the statistic carries the usual tie correction.
pub fn friedman_test(scores: &[Vec<f64>]) -> Result<TestResult, EvalError> {
    let k = scores.len();
    if k < 3 {
        return Err(EvalError::Usage(format!(
            "Friedman test needs at least 3 treatments, got {k}"
        )));
    }
    let n = scores[0].len();
    if n < 2 {
        return Err(EvalError::Usage(format!(
            "Friedman test needs at least 2 blocks, got {n}"
        )));
    }
    if scores.iter().any(|r| r.len() != n) {
        return Err(EvalError::Usage(
            "every treatment needs a score per block".into(),
        ));
    }
    if scores.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EvalError::Data("scores must be finite".into()));
    }
    let mut rank_sums = vec![0.0; k];
    let mut ties = 0.0;
    for j in 0..n {
        let block: Vec<f64> = scores.iter().map(|r| r[j]).collect();
        let ranks = average_ranks(&block);
        for (s, r) in rank_sums.iter_mut().zip(&ranks) {
            *s += r;
        }
        let mut sorted = block.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < k {
            let mut t = 1;
            while i + t < k && sorted[i + t] == sorted[i] {
                t += 1;
            }
            ties += (t * t * t - t) as f64;
            i += t;
        }
    }
    let (kf, nf) = (k as f64, n as f64);
    let df = kf - 1.0;
    let correction = 1.0 - ties / (nf * kf * (kf * kf - 1.0));
    if correction <= 0.0 {
        // every block fully tied: no evidence of any difference
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            df,
        });
    }
    let ssum: f64 = rank_sums.iter().map(|r| r * r).sum();
    let raw = 12.0 / (nf * kf * (kf + 1.0)) * ssum - 3.0 * nf * (kf + 1.0);
    let statistic = (raw / correction).max(0.0);
    let chi = ChiSquared::new(df).map_err(|e| EvalError::Data(e.to_string()))?;
    Ok(TestResult {
        statistic,
        p_value: chi.sf(statistic),
        df,
    })
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var)
}

fn check_samples(a: &[f64], b: &[f64]) -> Result<(), EvalError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EvalError::Usage(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(EvalError::Data("samples must be finite".into()));
    }
    Ok(())
}

fn t_result(diff: f64, se2: f64, df: f64) -> Result<TestResult, EvalError> {
    if se2 == 0.0 {
        let (statistic, p_value) = if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        };
        return Ok(TestResult {
            statistic,
            p_value,
            df,
        });
    }
    let t = diff / se2.sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| EvalError::Data(e.to_string()))?;
    Ok(TestResult {
        statistic: t,
        p_value: (2.0 * dist.sf(t.abs())).min(1.0),
        df,
    })
}

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
/// freedom; two-sided.
pub fn two_sample_ttest(a: &[f64], b: &[f64]) -> Result<TestResult, EvalError> {
    check_samples(a, b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (qa, qb) = (va / na, vb / nb);
    let se2 = qa + qb;
    let df = if se2 == 0.0 {
        na + nb - 2.0
    } else {
        se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0))
    };
    t_result(ma - mb, se2, df)
}

/// Student's two-sample t-test with pooled variance; two-sided.
pub fn student_ttest(a: &[f64], b: &[f64]) -> Result<TestResult, EvalError> {
    check_samples(a, b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    t_result(ma - mb, pooled * (1.0 / na + 1.0 / nb), df)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_treatments() {
        let r = friedman_test(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn too_few_groups() {
        assert!(friedman_test(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(friedman_test(&[vec![1.0], vec![2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn ttest_identical_and_symmetric() {
        let a = [1.0, 2.0, 3.5];
        let r = two_sample_ttest(&a, &a).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let b = [0.5, 0.7, 0.1, 0.2];
        let ab = two_sample_ttest(&a, &b).unwrap();
        let ba = two_sample_ttest(&b, &a).unwrap();
        assert_eq!(ab.statistic, -ba.statistic);
        assert_eq!(ab.p_value, ba.p_value);
        let c = [2.0, 2.0];
        assert_eq!(two_sample_ttest(&c, &c).unwrap().p_value, 1.0);
    }
}
