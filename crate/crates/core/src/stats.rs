//! Estimators, uncertainty intervals, verdict classification and the
//! secondary per-scenario t-tests.
//!
//! Standard deviations are sample standard deviations (divisor `n - 1`).
//! `k` below is the band multiplier (default 2); the standard
//! error of the sample mean is taken as `σ/√n` and that of the sample
//! standard deviation as `σ/√(2(n−1))`, both under a Gaussian assumption.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::{Interval, TTestTriplet, Verdict};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("malformed interval {0}")]
    MalformedInterval(Interval),
    #[error("{populations} populations but {references} reference values")]
    LengthMismatch {
        populations: usize,
        references: usize,
    },
    #[error("non-finite sample value")]
    NonFinite,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (divisor `n - 1`).
pub fn sample_std(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn check_samples(values: &[f64]) -> Result<(), StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFewSamples {
            needed: 2,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoricalEffect {
    pub ct0_bar: f64,
    pub sigma0: f64,
    pub m: usize,
    pub interval: Interval,
}

/// Mean of the historical run over the `m` scenarios and its interval
/// `ct0_bar ∓ k·σ0/√m`.
pub fn effect_of_s0(ct0_by_scenario: &[f64], k: f64) -> Result<HistoricalEffect, StatsError> {
    check_samples(ct0_by_scenario)?;
    let m = ct0_by_scenario.len();
    let ct0_bar = mean(ct0_by_scenario);
    let sigma0 = sample_std(ct0_by_scenario);
    Ok(HistoricalEffect {
        ct0_bar,
        sigma0,
        m,
        interval: Interval::centered(ct0_bar, k * sigma0 / (m as f64).sqrt()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IidBand {
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
    pub i95: Interval,
    pub inner: Interval,
    pub outer: Interval,
}

/// Uncertainty on the band half-width `k·σ`: one standard error of the
/// mean plus `k` standard errors of the standard deviation.
pub fn band_uncertainty(sigma: f64, n: usize, k: f64) -> f64 {
    let n = n as f64;
    sigma / n.sqrt() + k * sigma / (2.0 * (n - 1.0)).sqrt()
}

/// Band `μ ∓ k·σ` of the permuted-sequence effects with its inner and outer
/// limits `μ ∓ (k·σ ∓ e(n))`. The inner half-width is floored at zero.
pub fn iid_band(ct_bars: &[f64], k: f64) -> Result<IidBand, StatsError> {
    check_samples(ct_bars)?;
    let n = ct_bars.len();
    let mu = mean(ct_bars);
    let sigma = sample_std(ct_bars);
    let half = k * sigma;
    let e = band_uncertainty(sigma, n, k);
    Ok(IidBand {
        mu,
        sigma,
        n,
        i95: Interval::centered(mu, half),
        inner: Interval::centered(mu, (half - e).max(0.0)),
        outer: Interval::centered(mu, half + e),
    })
}

/// Compares the historical interval against the uncertain i.i.d. band.
pub fn classify(ct0: Interval, inner: Interval, outer: Interval) -> Result<Verdict, StatsError> {
    for iv in [ct0, inner, outer] {
        if !iv.is_well_formed() {
            return Err(StatsError::MalformedInterval(iv));
        }
    }
    Ok(if ct0.hi < outer.lo {
        Verdict::SignificantNegative
    } else if ct0.lo > outer.hi {
        Verdict::SignificantPositive
    } else if inner.contains_interval(&ct0) {
        Verdict::NotSignificant
    } else {
        Verdict::Undecided
    })
}

/// Two-sided critical value of Student's t with `df` degrees of freedom.
pub fn t_critical(alpha: f64, df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(1.0 - alpha / 2.0)
}

/// Two-sided p-value of a t statistic.
pub fn t_two_sided_p(t: f64, df: usize) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    2.0 * dist.cdf(-t.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    NotDifferent,
    Higher,
}

/// One-sample two-sided t-test of `reference` against the mean of
/// `population`. A zero-variance population compares exactly.
pub fn one_sample_side(population: &[f64], reference: f64, alpha: f64) -> Result<Side, StatsError> {
    check_samples(population)?;
    let n = population.len();
    let m = mean(population);
    let s = sample_std(population);
    if s == 0.0 {
        return Ok(if reference < m {
            Side::Lower
        } else if reference > m {
            Side::Higher
        } else {
            Side::NotDifferent
        });
    }
    let t = (reference - m) / (s / (n as f64).sqrt());
    Ok(if t_two_sided_p(t, n - 1) >= alpha {
        Side::NotDifferent
    } else if t < 0.0 {
        Side::Lower
    } else {
        Side::Higher
    })
}

/// Counts, over scenarios, whether the historical run was significantly
/// lower than, not different from, or higher than the permuted runs on the
/// same scenario. `populations[j]` holds the permuted results on scenario `j`.
pub fn ttest_triplet(
    populations: &[Vec<f64>],
    ct0_values: &[f64],
    alpha: f64,
) -> Result<TTestTriplet, StatsError> {
    if populations.len() != ct0_values.len() {
        return Err(StatsError::LengthMismatch {
            populations: populations.len(),
            references: ct0_values.len(),
        });
    }
    let mut triplet = TTestTriplet::default();
    for (pop, &ct0) in populations.iter().zip(ct0_values) {
        match one_sample_side(pop, ct0, alpha)? {
            Side::Lower => triplet.lower += 1,
            Side::NotDifferent => triplet.nondiff += 1,
            Side::Higher => triplet.higher += 1,
        }
    }
    Ok(triplet)
}

/// `P(X ≥ k)` for `X ~ Binomial(N, p)`, by direct summation of the upper tail.
pub fn family_false_positive(num_tests: u32, threshold: u32, p: f64) -> f64 {
    assert!(
        threshold <= num_tests,
        "threshold must not exceed the number of tests"
    );
    assert!((0.0..=1.0).contains(&p), "p must be a probability");
    if threshold == 0 {
        return 1.0;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let n = num_tests;
    let q = 1.0 - p;
    let (ln_p, ln_q) = (p.ln(), q.ln());
    let mut tail = 0.0;
    for x in threshold..=n {
        let term = if n <= 1000 {
            binomial_coefficient(n, x) * p.powi(x as i32) * q.powi((n - x) as i32)
        } else {
            (statrs::function::factorial::ln_binomial(n as u64, x as u64)
                + x as f64 * ln_p
                + (n - x) as f64 * ln_q)
                .exp()
        };
        tail += term;
    }
    tail.min(1.0)
}

fn binomial_coefficient(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
