//! Summary statistics and the repeat-until-stable rule for benchmarks.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two
/// values.
pub fn stddev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Two-sided Student-t confidence interval for the mean.
pub fn confidence_interval(xs: &[f64], level: f64) -> (f64, f64) {
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, m);
    }
    let dof = (xs.len() - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + level / 2.0);
    let half = t * stddev(xs) / (xs.len() as f64).sqrt();
    (m - half, m + half)
}

/// How many times a measurement is repeated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunPolicy {
    pub min_runs: usize,
    pub max_runs: usize,
    /// Stop once stddev is within this fraction of the mean.
    pub rel_stddev: f64,
    /// Confidence level reported when the stddev rule never holds.
    pub fallback_level: f64,
}

impl RunPolicy {
    /// 10 to 100 runs, for ping-pong measurements.
    pub const PINGPONG: Self = Self { min_runs: 10, max_runs: 100, rel_stddev: 0.05, fallback_level: 0.99 };
    /// At least 5 runs, for encryption measurements.
    pub const ENCRYPTION: Self = Self { min_runs: 5, max_runs: 100, rel_stddev: 0.05, fallback_level: 0.99 };

    pub fn fixed(runs: usize) -> Self {
        Self { min_runs: runs.max(1), max_runs: runs.max(1), ..Self::PINGPONG }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunStats {
    pub values: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub stddev: f64,
    /// Whether the stddev rule was met.
    pub stable: bool,
    /// Confidence interval for the mean at the policy's fallback level.
    pub ci: (f64, f64),
}

impl RunStats {
    pub fn from_values(values: Vec<f64>, policy: &RunPolicy) -> Self {
        let m = mean(&values);
        let s = stddev(&values);
        Self {
            median: median(&values),
            mean: m,
            stddev: s,
            stable: is_stable(&values, policy.rel_stddev),
            ci: confidence_interval(&values, policy.fallback_level),
            values,
        }
    }
}

fn is_stable(xs: &[f64], rel: f64) -> bool {
    stddev(xs) <= rel * mean(xs).abs()
}

/// Runs `measure` at least `min_runs` times and keeps going until the
/// stddev rule holds or `max_runs` is reached.
pub fn repeat_until_stable<E, F>(policy: &RunPolicy, mut measure: F) -> Result<RunStats, E>
where
    F: FnMut() -> Result<f64, E>,
{
    let mut values = Vec::with_capacity(policy.min_runs);
    while values.len() < policy.max_runs.max(1) {
        values.push(measure()?);
        if values.len() >= policy.min_runs && is_stable(&values, policy.rel_stddev) {
            break;
        }
    }
    if !is_stable(&values, policy.rel_stddev) {
        log::info!(
            "stddev still above {:.0}% of the mean after {} runs; reporting {:.0}% interval",
            policy.rel_stddev * 100.0,
            values.len(),
            policy.fallback_level * 100.0
        );
    }
    Ok(RunStats::from_values(values, policy))
}
