//! Date-indexed series, transforms, summary statistics and correlograms.

use chrono::{Duration, NaiveDate};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Daily observations. Missing entries are stored as NaN and must be
/// imputed before any estimator sees the series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    name: String,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

/// Anchor for series built without an explicit calendar.
pub fn synthetic_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

pub fn daily_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    (0..n).map(|i| start + Duration::days(i as i64)).collect()
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.is_empty() {
            return Err(Error::InvalidSeries("series must have at least one observation".into()));
        }
        if dates.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if let Some(i) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries(format!(
                "dates not strictly increasing at index {}",
                i + 1
            )));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::InvalidSeries("infinite value".into()));
        }
        Ok(Self {
            name: name.into(),
            dates,
            values,
        })
    }

    /// Series on consecutive days starting 2000-01-01.
    pub fn from_values(name: impl Into<String>, values: Vec<f64>) -> Self {
        let dates = daily_dates(synthetic_start(), values.len());
        Self {
            name: name.into(),
            dates,
            values,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Raw values, NaN where missing.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }

    /// Values of a complete series.
    pub fn complete_values(&self) -> Result<&[f64]> {
        if self.is_complete() {
            Ok(&self.values)
        } else {
            Err(Error::MissingValues)
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Same dates, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.name.clone(), self.dates.clone(), values)
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::RangeError(format!(
                "slice {start}..{end} of series with {} observations",
                self.len()
            )));
        }
        Self::new(
            self.name.clone(),
            self.dates[start..end].to_vec(),
            self.values[start..end].to_vec(),
        )
    }

    pub fn position(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Restrict this series to `dates`, which must all be present.
    pub fn align_to(&self, dates: &[NaiveDate]) -> Result<Self> {
        let mut values = Vec::with_capacity(dates.len());
        for d in dates {
            let i = self.position(*d).ok_or_else(|| {
                Error::AlignmentError(format!("series '{}' has no observation on {d}", self.name))
            })?;
            values.push(self.values[i]);
        }
        Self::new(self.name.clone(), dates.to_vec(), values)
    }
}

/// Fill interior missing runs of length ≤ `max_gap` by linear interpolation.
pub fn impute_missing(s: &TimeSeries, max_gap: usize) -> Result<TimeSeries> {
    if max_gap == 0 {
        return Err(Error::DomainError("max_gap must be positive".into()));
    }
    let v = s.values();
    let n = v.len();
    if v[0].is_nan() || v[n - 1].is_nan() {
        return Err(Error::EndpointMissing);
    }
    let mut out = v.to_vec();
    let mut i = 1;
    while i < n {
        if !v[i].is_nan() {
            i += 1;
            continue;
        }
        let start = i;
        while v[i].is_nan() {
            i += 1;
        }
        let len = i - start;
        if len > max_gap {
            return Err(Error::GapTooLarge { start, len, max_gap });
        }
        let lo = v[start - 1];
        let hi = v[i];
        let span = (len + 1) as f64;
        for (k, slot) in out[start..i].iter_mut().enumerate() {
            let w = (k + 1) as f64 / span;
            *slot = lo + w * (hi - lo);
        }
    }
    s.with_values(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Log,
    Diff,
    LogReturn,
    /// Exponential moving average with smoothing factor 2/(span+1).
    EwmaSmooth { span: usize },
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(Transform::Log),
            "diff" => Ok(Transform::Diff),
            "logret" | "log_return" => Ok(Transform::LogReturn),
            other => {
                if let Some(span) = other.strip_prefix("ewma") {
                    let span = span.trim_start_matches(['_', ':', '(']).trim_end_matches(')');
                    let span: usize = span
                        .parse()
                        .map_err(|_| Error::Config(format!("bad ewma span in '{other}'")))?;
                    if span == 0 {
                        return Err(Error::Config("ewma span must be positive".into()));
                    }
                    return Ok(Transform::EwmaSmooth { span });
                }
                Err(Error::Config(format!("unknown transform '{other}'")))
            }
        }
    }
}

pub fn transform(s: &TimeSeries, kind: Transform) -> Result<TimeSeries> {
    let v = s.complete_values()?;
    let n = v.len();
    let logs = || -> Result<Vec<f64>> {
        if let Some(bad) = v.iter().find(|x| **x <= 0.0) {
            return Err(Error::DomainError(format!("log of non-positive value {bad}")));
        }
        Ok(v.iter().map(|x| x.ln()).collect())
    };
    let need_two = || {
        if n < 2 {
            Err(Error::InsufficientData { needed: 2, have: n })
        } else {
            Ok(())
        }
    };
    match kind {
        Transform::Log => s.with_values(logs()?),
        Transform::Diff => {
            need_two()?;
            let d = v.windows(2).map(|w| w[1] - w[0]).collect();
            TimeSeries::new(s.name(), s.dates()[1..].to_vec(), d)
        }
        Transform::LogReturn => {
            need_two()?;
            let l = logs()?;
            let d = l.windows(2).map(|w| w[1] - w[0]).collect();
            TimeSeries::new(s.name(), s.dates()[1..].to_vec(), d)
        }
        Transform::EwmaSmooth { span } => {
            let alpha = 2.0 / (span as f64 + 1.0);
            let mut out = Vec::with_capacity(n);
            let mut level = v[0];
            out.push(level);
            for x in &v[1..] {
                level = alpha * x + (1.0 - alpha) * level;
                out.push(level);
            }
            s.with_values(out)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub cv: f64,
    pub skewness: f64,
    /// Raw (not excess) kurtosis.
    pub kurtosis: f64,
    pub iqr: f64,
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Central moments m2, m3, m4 with divisor n.
pub(crate) fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let m = mean(x);
    let n = x.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// Sample variance with divisor n-1.
pub(crate) fn sample_variance(x: &[f64]) -> f64 {
    if x.iter().all(|v| *v == x[0]) {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

pub fn summary_stats(s: &TimeSeries) -> Result<SummaryStats> {
    let x = s.complete_values()?;
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, have: n });
    }
    let (m2, m3, m4) = central_moments(x);
    if m2 <= 0.0 {
        return Err(Error::ConstantSeries);
    }
    let sorted = sorted_copy(x);
    let mean = mean(x);
    let std = sample_variance(x).sqrt();
    Ok(SummaryStats {
        n,
        min: sorted[0],
        max: sorted[n - 1],
        mean,
        median: quantile_sorted(&sorted, 0.5),
        std,
        cv: std / mean,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2),
        iqr: quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelogramEntry {
    pub lag: usize,
    pub acf: f64,
    pub pacf: f64,
}

/// Sample autocorrelations ρ_1..ρ_max_lag with the single global denominator.
pub(crate) fn autocorrelations(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if max_lag == 0 || max_lag >= n {
        return Err(Error::InsufficientData {
            needed: max_lag + 1,
            have: n,
        });
    }
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::ConstantSeries);
    }
    Ok((1..=max_lag)
        .map(|k| {
            let num: f64 = d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum();
            (num / denom).clamp(-1.0, 1.0)
        })
        .collect())
}

/// Durbin-Levinson recursion from autocorrelations ρ_1..ρ_K.
pub(crate) fn durbin_levinson(rho: &[f64]) -> Vec<f64> {
    let k_max = rho.len();
    let mut pacf = Vec::with_capacity(k_max);
    let mut phi: Vec<f64> = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let phi_kk = if k == 1 {
            rho[0]
        } else {
            let num = rho[k - 1] - (1..k).map(|j| phi[j - 1] * rho[k - j - 1]).sum::<f64>();
            let den = 1.0 - (1..k).map(|j| phi[j - 1] * rho[j - 1]).sum::<f64>();
            if den.abs() < f64::EPSILON {
                0.0
            } else {
                num / den
            }
        };
        let prev = phi.clone();
        phi.clear();
        for j in 1..k {
            phi.push(prev[j - 1] - phi_kk * prev[k - j - 1]);
        }
        phi.push(phi_kk);
        pacf.push(phi_kk.clamp(-1.0, 1.0));
    }
    pacf
}

fn correlogram(s: &TimeSeries, max_lag: usize) -> Result<Vec<CorrelogramEntry>> {
    let rho = autocorrelations(s.complete_values()?, max_lag)?;
    let pacf = durbin_levinson(&rho);
    Ok(rho
        .iter()
        .zip(pacf)
        .enumerate()
        .map(|(i, (&acf, pacf))| CorrelogramEntry {
            lag: i + 1,
            acf,
            pacf,
        })
        .collect())
}

/// Correlogram entries for lags 1..=max_lag (both ACF and PACF filled).
pub fn acf(s: &TimeSeries, max_lag: usize) -> Result<Vec<CorrelogramEntry>> {
    correlogram(s, max_lag)
}

/// Same entries as [`acf`]; PACF via Durbin-Levinson on the sample ACF.
pub fn pacf(s: &TimeSeries, max_lag: usize) -> Result<Vec<CorrelogramEntry>> {
    correlogram(s, max_lag)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QqDist {
    Normal { mean: f64, sd: f64 },
    /// Student's t rescaled to unit variance.
    StudentT { nu: f64 },
}

/// Sorted sample against reference quantiles at plotting positions (i - 0.5)/n.
pub fn qq_points(s: &TimeSeries, dist: QqDist) -> Result<Vec<(f64, f64)>> {
    let x = s.complete_values()?;
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, have: n });
    }
    let quantile: Box<dyn Fn(f64) -> f64> = match dist {
        QqDist::Normal { mean, sd } => {
            let d = Normal::new(mean, sd)
                .map_err(|e| Error::DomainError(format!("normal reference: {e}")))?;
            Box::new(move |p| d.inverse_cdf(p))
        }
        QqDist::StudentT { nu } => {
            if nu <= 2.0 || !nu.is_finite() {
                return Err(Error::DomainError(format!(
                    "student_t reference needs nu > 2, got {nu}"
                )));
            }
            let d = StudentsT::new(0.0, 1.0, nu)
                .map_err(|e| Error::DomainError(format!("student_t reference: {e}")))?;
            let scale = ((nu - 2.0) / nu).sqrt();
            Box::new(move |p| scale * d.inverse_cdf(p))
        }
    };
    let sorted = sorted_copy(x);
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, e)| (quantile((i as f64 + 0.5) / n as f64), e))
        .collect())
}
