//! Model-free volatility estimators and the persistence algebra shared with
//! the GARCH family.

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::{sample_variance, TimeSeries};

/// Trading days per year for annualization; the pool clears every day.
pub const DAYS_PER_YEAR: f64 = 365.0;

/// RiskMetrics smoothing constant.
pub const RISKMETRICS_LAMBDA: f64 = 0.94;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolPath {
    pub dates: Vec<NaiveDate>,
    /// Conditional standard deviation per period.
    pub sigma: Vec<f64>,
    /// Estimator parameters, e.g. `("lambda", 0.94)`.
    pub params: Vec<(String, f64)>,
}

impl VolPath {
    pub fn variance(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s * s).collect()
    }

    pub fn to_series(&self, name: &str) -> Result<TimeSeries> {
        TimeSeries::new(name, self.dates.clone(), self.sigma.clone())
    }
}

/// Trailing-window sample standard deviation.
pub fn rolling_volatility(returns: &TimeSeries, window: usize, annualize: bool) -> Result<VolPath> {
    let r = returns.complete_values()?;
    if window < 2 {
        return Err(Error::DomainError("rolling window must be at least 2".into()));
    }
    if r.len() < window {
        return Err(Error::InsufficientData {
            needed: window,
            have: r.len(),
        });
    }
    let scale = if annualize {
        annualization_factor(window)
    } else {
        1.0
    };
    let sigma = r
        .windows(window)
        .map(|w| sample_variance(w).max(0.0).sqrt() * scale)
        .collect();
    Ok(VolPath {
        dates: returns.dates()[window - 1..].to_vec(),
        sigma,
        params: vec![
            ("window".into(), window as f64),
            ("annualized".into(), if annualize { 1.0 } else { 0.0 }),
        ],
    })
}

/// √(365/m): scales an m-day window deviation to a yearly figure.
pub fn annualization_factor(window: usize) -> f64 {
    (DAYS_PER_YEAR / window as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EwmaInit {
    FirstSquared,
    SampleVariance,
    Given(f64),
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::DomainError(format!("lambda must lie in (0,1), got {lambda}")))
    }
}

fn ewma_recursion(r: &[f64], lambda: f64, v0: f64) -> Vec<f64> {
    let mut var = Vec::with_capacity(r.len());
    let mut v = v0;
    var.push(v);
    for x in &r[..r.len() - 1] {
        v = (1.0 - lambda) * x * x + lambda * v;
        var.push(v);
    }
    var
}

/// σ_t² = (1-λ) r_{t-1}² + λ σ_{t-1}², with σ_1² set by `init`.
pub fn ewma_variance(returns: &TimeSeries, lambda: f64, init: EwmaInit) -> Result<VolPath> {
    check_lambda(lambda)?;
    let r = returns.complete_values()?;
    if r.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, have: r.len() });
    }
    let v0 = match init {
        EwmaInit::FirstSquared => r[0] * r[0],
        EwmaInit::SampleVariance => sample_variance(r),
        EwmaInit::Given(v) => {
            if !(v >= 0.0) {
                return Err(Error::DomainError(format!("initial variance {v} is negative")));
            }
            v
        }
    };
    Ok(VolPath {
        dates: returns.dates().to_vec(),
        sigma: ewma_recursion(r, lambda, v0).into_iter().map(f64::sqrt).collect(),
        params: vec![("lambda".into(), lambda)],
    })
}

/// EWMA conditional correlation. Periods where either variance is zero are
/// reported as missing (NaN).
pub fn ewma_correlation(x: &TimeSeries, y: &TimeSeries, lambda: f64) -> Result<TimeSeries> {
    check_lambda(lambda)?;
    if x.dates() != y.dates() {
        return Err(Error::AlignmentError(format!(
            "'{}' and '{}' do not share a date index",
            x.name(),
            y.name()
        )));
    }
    let xv = x.complete_values()?;
    let yv = y.complete_values()?;
    if xv.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, have: xv.len() });
    }
    let vx = ewma_recursion(xv, lambda, sample_variance(xv));
    let vy = ewma_recursion(yv, lambda, sample_variance(yv));
    let mx = crate::series::mean(xv);
    let my = crate::series::mean(yv);
    let c0 = xv.iter().zip(yv).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (xv.len() as f64 - 1.0);
    let mut c = c0;
    let mut rho = Vec::with_capacity(xv.len());
    for t in 0..xv.len() {
        if t > 0 {
            c = lambda * c + (1.0 - lambda) * xv[t - 1] * yv[t - 1];
        }
        let den = (vx[t] * vy[t]).sqrt();
        rho.push(if den > 0.0 {
            (c / den).clamp(-1.0, 1.0)
        } else {
            f64::NAN
        });
    }
    TimeSeries::new(
        format!("corr_{}_{}", x.name(), y.name()),
        x.dates().to_vec(),
        rho,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PersistenceSummary {
    pub persistence: f64,
    /// `None` when persistence ≥ 1 (no mean reversion).
    pub half_life_days: Option<f64>,
    pub unconditional_sigma: Option<f64>,
}

impl PersistenceSummary {
    /// Half-life rounded up to whole days.
    pub fn half_life_whole_days(&self) -> Option<u64> {
        self.half_life_days.map(|h| h.ceil() as u64)
    }
}

/// Persistence is taken as given; shared by every variance family.
pub fn persistence_from(intercept: f64, persistence: f64) -> PersistenceSummary {
    if persistence < 1.0 {
        PersistenceSummary {
            persistence,
            half_life_days: Some(0.5f64.ln() / persistence.ln()),
            unconditional_sigma: Some((intercept / (1.0 - persistence)).sqrt()),
        }
    } else {
        PersistenceSummary {
            persistence,
            half_life_days: None,
            unconditional_sigma: None,
        }
    }
}

/// GARCH(1,1) persistence A+G, half-life and long-run σ.
pub fn persistence_summary(k: f64, arch: f64, garch: f64) -> PersistenceSummary {
    persistence_from(k, arch + garch)
}

/// Smallest K with λ^K ≤ tolerance.
pub fn effective_window(lambda: f64, tolerance: f64) -> Result<usize> {
    check_lambda(lambda)?;
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::DomainError(format!("tolerance must lie in (0,1), got {tolerance}")));
    }
    let raw = tolerance.ln() / lambda.ln();
    // guard against ln round-off when raw is an exact integer
    let mut k = (raw - 1e-9).ceil().max(1.0) as usize;
    while lambda.powi(k as i32) > tolerance {
        k += 1;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64, sd: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| sd * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect()
    }

    fn ts(v: Vec<f64>) -> TimeSeries {
        TimeSeries::from_values("r", v)
    }

    #[test]
    fn annualized_window_values() {
        assert!((0.154 * annualization_factor(30) - 0.537).abs() < 0.001);
        assert!((0.291 * annualization_factor(30) - 1.015).abs() < 0.001);
    }

    #[test]
    fn rolling_constant_is_zero() {
        let v = rolling_volatility(&ts(vec![0.01; 40]), 30, true).unwrap();
        assert_eq!(v.sigma.len(), 11);
        assert!(v.sigma.iter().all(|s| *s == 0.0));
        assert!(matches!(
            rolling_volatility(&ts(vec![0.01; 10]), 30, false),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn rolling_mean_tracks_sigma() {
        let v = rolling_volatility(&ts(noise(100_000, 1, 0.2)), 30, false).unwrap();
        let m = v.sigma.iter().sum::<f64>() / v.sigma.len() as f64;
        // E[s] for m=30 is c4·σ with c4 ≈ 0.9914
        assert!((m / 0.2 - 1.0).abs() < 0.02, "{m}");
    }

    #[test]
    fn ewma_fixed_point_and_decay() {
        let p = ewma_variance(&ts(vec![0.1, 0.0]), 0.94, EwmaInit::Given(0.01)).unwrap();
        assert!((p.variance()[1] - 0.01).abs() < 1e-15);
        let z = ewma_variance(&ts(vec![0.0; 10]), 0.9, EwmaInit::Given(2.0)).unwrap();
        for (t, v) in z.variance().iter().enumerate() {
            assert!((v - 0.9f64.powi(t as i32) * 2.0).abs() < 1e-12);
        }
        assert!(matches!(
            ewma_variance(&ts(vec![0.0; 3]), 1.0, EwmaInit::SampleVariance),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn ewma_correlation_identities() {
        let x = ts(noise(500, 2, 1.0));
        let c = ewma_correlation(&x, &x, 0.94).unwrap();
        assert!(c.values().iter().all(|r| (r - 1.0).abs() < 1e-9));
        let neg = x.with_values(x.values().iter().map(|v| -v).collect()).unwrap();
        let c = ewma_correlation(&x, &neg, 0.94).unwrap();
        assert!(c.values().iter().all(|r| (r + 1.0).abs() < 1e-9));
    }

    #[test]
    fn ewma_correlation_independent_small() {
        let x = ts(noise(5000, 3, 1.0));
        let y = ts(noise(5000, 4, 1.0));
        // λ = 0.99 gives an effective sample near 200, sd(ρ_t) ≈ 0.07
        let c = ewma_correlation(&x, &y, 0.99).unwrap();
        let m = c.values().iter().map(|r| r.abs()).sum::<f64>() / 5000.0;
        assert!(m < 0.1, "{m}");
        assert!(c.values().iter().all(|r| (-1.0..=1.0).contains(r)));
    }

    #[test]
    fn ewma_correlation_alignment() {
        let x = ts(noise(10, 3, 1.0));
        let y = TimeSeries::new(
            "y",
            crate::series::daily_dates(chrono::NaiveDate::from_ymd_opt(2001, 1, 1).unwrap(), 10),
            noise(10, 4, 1.0),
        )
        .unwrap();
        assert!(matches!(ewma_correlation(&x, &y, 0.94), Err(Error::AlignmentError(_))));
    }

    #[test]
    fn ewma_correlation_zero_variance_missing() {
        let x = ts(vec![0.0; 5]);
        let y = ts(vec![1.0, -1.0, 1.0, -1.0, 1.0]);
        let c = ewma_correlation(&x, &y, 0.9).unwrap();
        assert!(c.values().iter().all(|r| r.is_nan()));
    }

    #[test]
    fn persistence_table() {
        let s = persistence_summary(0.0014, 0.134, 0.787);
        assert!((s.persistence - 0.921).abs() < 1e-12);
        assert!((s.unconditional_sigma.unwrap() - 0.133).abs() < 0.001);
        assert_eq!(s.half_life_whole_days(), Some(9));
        let jp = persistence_summary(0.0, 0.049, 0.935);
        assert!((jp.half_life_days.unwrap() - 43.0).abs() < 0.5);
        let es = persistence_summary(0.0, 0.18, 0.78);
        assert!((es.half_life_days.unwrap() - 17.0).abs() < 0.5);
        let np = persistence_summary(0.0, 0.41, 0.59);
        assert_eq!(np.half_life_days, None);
        assert_eq!(np.unconditional_sigma, None);
    }

    #[test]
    fn effective_window_values() {
        assert_eq!(effective_window(0.5, 0.25).unwrap(), 2);
        assert_eq!(effective_window(0.94, 0.01).unwrap(), 75);
        assert_eq!(effective_window(0.9, 0.001).unwrap(), 66);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ewma_scale_equivariant(seed in 0u64..500, c in 0.01f64..100.0, lambda in 0.5f64..0.99) {
                let r = noise(100, seed, 1.0);
                let a = ewma_variance(&ts(r.clone()), lambda, EwmaInit::SampleVariance).unwrap().variance();
                let b = ewma_variance(&ts(r.iter().map(|x| c * x).collect()), lambda, EwmaInit::SampleVariance)
                    .unwrap()
                    .variance();
                for (u, v) in a.iter().zip(&b) {
                    prop_assert!((v - c * c * u).abs() <= 1e-10 * c * c * u.max(1e-12));
                }
            }

            #[test]
            fn correlation_in_unit_interval(s1 in 0u64..500, s2 in 0u64..500, lambda in 0.5f64..0.99) {
                let x = ts(noise(200, s1, 1.0));
                let y = ts(noise(200, s2 + 1000, 3.0));
                let c = ewma_correlation(&x, &y, lambda).unwrap();
                prop_assert!(c.values().iter().all(|r| (-1.0..=1.0).contains(r)));
            }
        }
    }
}
