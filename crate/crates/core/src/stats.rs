//! Kolmogorov–Smirnov tests and moment confidence intervals.

use serde::Serialize;
use statrs::function::erf::erfc_inv;

use crate::error::{invalid, Error, Result};

/// Minimum sample size accepted by the KS routines.
pub const MIN_KS_SAMPLES: usize = 100;

/// Outcome of a hypothesis test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        })
    }
}

/// A test statistic together with its decision rule.
///
/// `verdict` is `Pass` exactly when `statistic < critical`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub label: String,
    pub statistic: f64,
    pub n: usize,
    pub n2: Option<usize>,
    pub alpha: f64,
    pub critical: f64,
    pub verdict: Verdict,
}

impl TestReport {
    /// A report for a statistic compared against a threshold.
    pub fn threshold(label: impl Into<String>, statistic: f64, critical: f64, n: usize, alpha: f64) -> Self {
        Self {
            label: label.into(),
            statistic,
            n,
            n2: None,
            alpha,
            critical,
            verdict: Verdict::from_bool(statistic < critical),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Asymptotic Kolmogorov critical constant `c(alpha)`.
pub fn kolmogorov_constant(alpha: f64) -> Result<f64> {
    if alpha == 0.01 {
        Ok(1.628)
    } else if alpha == 0.05 {
        Ok(1.358)
    } else {
        Err(invalid(format!("alpha must be 0.05 or 0.01, got {alpha}")))
    }
}

fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|x| x.is_nan()) {
        return Err(invalid("samples contain NaN"));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample KS test of `samples` against `cdf`.
pub fn ks_one_sample<F>(samples: &[f64], cdf: F, alpha: f64) -> Result<TestReport>
where
    F: Fn(f64) -> f64,
{
    let c = kolmogorov_constant(alpha)?;
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_KS_SAMPLES,
            got: samples.len(),
        });
    }
    let sorted = sorted_finite(samples)?;
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let below = i as f64 / n;
        let above = (i + 1) as f64 / n;
        d = d.max((f - below).abs()).max((above - f).abs());
    }
    Ok(TestReport::threshold("ks_one_sample", d, c / n.sqrt(), sorted.len(), alpha))
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<TestReport> {
    let c = kolmogorov_constant(alpha)?;
    let smaller = a.len().min(b.len());
    if smaller < MIN_KS_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_KS_SAMPLES,
            got: smaller,
        });
    }
    let (x, y) = (sorted_finite(a)?, sorted_finite(b)?);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let critical = c * ((n1 + n2) / (n1 * n2)).sqrt();
    let mut report = TestReport::threshold("ks_two_sample", d, critical, x.len(), alpha);
    report.n2 = Some(y.len());
    Ok(report)
}

/// Two-sided standard normal quantile `z` with `P(|Z| > z) = alpha`.
pub fn normal_two_sided_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(std::f64::consts::SQRT_2 * erfc_inv(alpha))
}

/// Estimate with a symmetric confidence half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub estimate: f64,
    pub half_width: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.estimate).abs() <= self.half_width
    }

    pub fn lo(&self) -> f64 {
        self.estimate - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.estimate + self.half_width
    }
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

/// Mean of `samples^order` with a normal-approximation confidence interval.
pub fn moment_ci(samples: &[f64], order: u32, alpha: f64) -> Result<Interval> {
    if !(order == 1 || order == 2) {
        return Err(invalid(format!("moment order must be 1 or 2, got {order}")));
    }
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let z = normal_two_sided_quantile(alpha)?;
    let powered: Vec<f64> = samples.iter().map(|x| x.powi(order as i32)).collect();
    let (mean, var) = mean_var(&powered);
    if !var.is_finite() {
        return Err(invalid("empirical variance is not finite"));
    }
    Ok(Interval {
        estimate: mean,
        half_width: z * (var / samples.len() as f64).sqrt(),
    })
}

/// Ratio of the means of paired samples, `mean(num) / mean(den)`, with a
/// delta-method confidence interval.
pub fn ratio_of_means_ci(num: &[f64], den: &[f64], alpha: f64) -> Result<Interval> {
    if num.len() != den.len() {
        return Err(Error::DimensionMismatch {
            expected: num.len(),
            got: den.len(),
        });
    }
    if num.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: num.len(),
        });
    }
    let z = normal_two_sided_quantile(alpha)?;
    let n = num.len() as f64;
    let (mx, _) = mean_var(num);
    let (my, _) = mean_var(den);
    if my == 0.0 {
        return Err(invalid("denominator mean is zero"));
    }
    let ratio = mx / my;
    // Linearised residuals x - r y carry the first-order variance of the ratio.
    let resid: Vec<f64> = num.iter().zip(den).map(|(x, y)| x - ratio * y).collect();
    let (_, var) = mean_var(&resid);
    Ok(Interval {
        estimate: ratio,
        half_width: z * (var / n).sqrt() / my.abs(),
    })
}

/// Pearson correlation of paired samples.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (ma, _) = mean_var(&a[..n]);
    let (mb, _) = mean_var(&b[..n]);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Correlation confidence half-width under the null of independence.
pub fn correlation_null_half_width(n: usize, alpha: f64) -> Result<f64> {
    Ok(normal_two_sided_quantile(alpha)? / (n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::new_stream;

    #[test]
    fn degenerate_sample_fails() {
        let r = ks_one_sample(&[0.5; 200], |x| x.clamp(0.0, 1.0), 0.01).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-12);
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn empty_and_small_inputs_error() {
        assert!(ks_one_sample(&[], |x| x, 0.01).is_err());
        assert!(ks_one_sample(&[0.1; 99], |x| x, 0.01).is_err());
        assert!(ks_two_sample(&[0.1; 100], &[0.2; 50], 0.01).is_err());
        assert!(ks_one_sample(&[0.1; 200], |x| x, 0.10).is_err());
    }

    #[test]
    fn critical_values() {
        let u: Vec<f64> = (0..10_000).map(|i| (i as f64 + 0.5) / 1e4).collect();
        let r = ks_one_sample(&u, |x| x, 0.01).unwrap();
        assert!((r.critical - 0.01628).abs() < 1e-12);
        assert!(r.statistic <= 0.5e-4 + 1e-12);
    }

    #[test]
    fn uniforms_pass() {
        let mut s = new_stream(3, 0);
        let u: Vec<f64> = (0..10_000).map(|_| s.uniform()).collect();
        let r = ks_one_sample(&u, |x| x.clamp(0.0, 1.0), 0.01).unwrap();
        assert!(r.statistic < 0.0163, "{r:?}");
    }

    #[test]
    fn identical_two_sample_is_zero() {
        let mut s = new_stream(4, 0);
        let a: Vec<f64> = (0..500).map(|_| s.normal()).collect();
        let r = ks_two_sample(&a, &a, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.passed());
    }

    #[test]
    fn two_sample_handles_ties() {
        let a = vec![1.0; 150];
        let mut b = vec![1.0; 100];
        b.extend(vec![2.0; 100]);
        let r = ks_two_sample(&a, &b, 0.05).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-12);
    }

    #[test]
    fn moment_ci_rules() {
        let c = moment_ci(&[2.0; 10], 1, 0.05).unwrap();
        assert_eq!(c.estimate, 2.0);
        assert_eq!(c.half_width, 0.0);
        assert!(moment_ci(&[1.0, 2.0], 3, 0.05).is_err());
        assert!(moment_ci(&[1.0], 1, 0.05).is_err());
        let c2 = moment_ci(&[1.0, 3.0], 2, 0.05).unwrap();
        assert_eq!(c2.estimate, 5.0);
    }

    #[test]
    fn normal_quantiles() {
        assert!((normal_two_sided_quantile(0.05).unwrap() - 1.959964).abs() < 1e-6);
        assert!((normal_two_sided_quantile(0.01).unwrap() - 2.575829).abs() < 1e-6);
    }
}
