//! In-sample fitted values, Theil decomposition, conditional-variance
//! forecasts and intervention dummies.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::model::{initial_variance, InnovationSampler, ModelSpec, ParamVector, VarianceFamily, VarianceRecursion};
use crate::series::{mean, TimeSeries};

#[derive(Debug, Clone, Serialize)]
pub struct TheilDecomposition {
    pub theil_u: f64,
    pub mse: f64,
    pub bias_proportion: f64,
    pub variance_proportion: f64,
    pub covariance_proportion: f64,
}

#[derive(Debug, Clone)]
pub struct ForecastReport {
    pub fitted: TimeSeries,
    pub theil: TheilDecomposition,
}

fn population_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Theil's U with the bias / variance / covariance split of the MSE.
pub fn theil_decomposition(actual: &[f64], fitted: &[f64]) -> Result<TheilDecomposition> {
    if actual.len() != fitted.len() {
        return Err(Error::AlignmentError(format!(
            "{} actual values vs {} fitted",
            actual.len(),
            fitted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InsufficientData { needed: 1, have: 0 });
    }
    let n = actual.len() as f64;
    let mse = actual.iter().zip(fitted).map(|(a, f)| (f - a).powi(2)).sum::<f64>() / n;
    let rms = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if mse == 0.0 {
        return Ok(TheilDecomposition {
            theil_u: 0.0,
            mse,
            bias_proportion: 0.0,
            variance_proportion: 0.0,
            covariance_proportion: 1.0,
        });
    }
    let bias_proportion = (mean(fitted) - mean(actual)).powi(2) / mse;
    let variance_proportion = (population_std(fitted) - population_std(actual)).powi(2) / mse;
    Ok(TheilDecomposition {
        theil_u: mse.sqrt() / (rms(fitted) + rms(actual)),
        mse,
        bias_proportion,
        variance_proportion,
        covariance_proportion: 1.0 - bias_proportion - variance_proportion,
    })
}

/// Static in-sample forecast ŷ_t = y_t − ε_t over the post-conditioning sample.
pub fn in_sample_forecast(fit: &FitResult, y: &TimeSeries) -> Result<ForecastReport> {
    if !fit.converged {
        return Err(Error::DomainError("in-sample forecast needs a converged fit".into()));
    }
    let y_post = y.align_to(fit.residuals.dates())?;
    let yv = y_post.complete_values()?;
    let fitted: Vec<f64> = yv
        .iter()
        .zip(fit.residuals.complete_values()?)
        .map(|(y, e)| y - e)
        .collect();
    let theil = theil_decomposition(yv, &fitted)?;
    Ok(ForecastReport {
        fitted: y_post.with_values(fitted)?.renamed(format!("{}_fitted", y.name())),
        theil,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceForecast {
    pub origin: NaiveDate,
    pub horizon: usize,
    /// σ²_{t+h} for h = 1..=horizon.
    pub path: Vec<f64>,
    /// Long-run level; `None` when persistence ≥ 1 or for egarch.
    pub unconditional: Option<f64>,
}

/// Monte Carlo paths used for egarch multi-step forecasts.
pub const EGARCH_FORECAST_PATHS: usize = 10_000;

/// Variance forecast from the end of a residual history.
///
/// `shocks` are the post-conditioning residuals through the origin, `v0` the
/// pre-sample variance, and `vreg_term` the variance-regressor contribution
/// held at its origin value. No constraint checks are applied to `params`.
pub fn variance_forecast_path(
    params: &ParamVector,
    spec: &ModelSpec,
    shocks: &[f64],
    v0: f64,
    vreg_terms: &[f64],
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::RangeError("horizon must be positive".into()));
    }
    if vreg_terms.len() != shocks.len() + 1 {
        return Err(Error::AlignmentError("need one variance-regressor term per step plus the origin".into()));
    }
    let family = spec.variance.family;
    let mut rec = VarianceRecursion::new(params, family, spec.dist, v0);
    let mut hist_h = Vec::with_capacity(shocks.len());
    for (t, &e) in shocks.iter().enumerate() {
        let h = rec.next_variance(vreg_terms[t]);
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::VarianceNonPositive(t));
        }
        rec.push(h, e);
        hist_h.push(h);
    }
    let v_origin = *vreg_terms.last().expect("non-empty");
    let first = rec.next_variance(v_origin);
    match family {
        VarianceFamily::Garch | VarianceFamily::Gjr => {
            Ok(closed_form_path(params, &hist_h, shocks, v0, v_origin, first, horizon))
        }
        VarianceFamily::Egarch => monte_carlo_path(&rec, spec, params, v_origin, first, horizon, seed),
    }
}

fn closed_form_path(
    p: &ParamVector,
    hist_h: &[f64],
    shocks: &[f64],
    v0: f64,
    v_term: f64,
    first: f64,
    horizon: usize,
) -> Vec<f64> {
    let t = hist_h.len();
    let mut path = vec![first];
    for h in 2..=horizon {
        // index of the step being forecast, counting from the sample start
        let step = t + h - 1;
        let sigma2_at = |idx: usize| -> f64 {
            if idx >= t {
                path[idx - t]
            } else {
                hist_h[idx]
            }
        };
        let mut v = p.omega + v_term;
        for (i, g) in p.garch.iter().enumerate() {
            let lag = i + 1;
            v += g * if lag <= step { sigma2_at(step - lag) } else { v0 };
        }
        for (j, a) in p.arch.iter().enumerate() {
            let lag = j + 1;
            let l = p.leverage.get(j).copied().unwrap_or(0.0);
            v += if lag > step {
                (a + 0.5 * l) * v0
            } else if step - lag >= t {
                (a + 0.5 * l) * sigma2_at(step - lag)
            } else {
                let e = shocks[step - lag];
                (a + if e < 0.0 { l } else { 0.0 }) * e * e
            };
        }
        path.push(v);
    }
    path
}

fn monte_carlo_path(
    rec: &VarianceRecursion<'_>,
    spec: &ModelSpec,
    params: &ParamVector,
    v_term: f64,
    first: f64,
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sampler = InnovationSampler::new(spec.dist, params.nu)?;
    const CHUNK: usize = 500;
    let chunks: Vec<Vec<f64>> = (0..EGARCH_FORECAST_PATHS.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sum = vec![0.0; horizon];
            let end = ((c + 1) * CHUNK).min(EGARCH_FORECAST_PATHS);
            for path in c * CHUNK..end {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(path as u64);
                let mut r = rec.clone();
                let mut h = first;
                for slot in sum.iter_mut() {
                    *slot += h;
                    let e = h.sqrt() * sampler.draw(&mut rng);
                    r.push(h, e);
                    h = r.next_variance(v_term);
                }
            }
            sum
        })
        .collect();
    let mut total = vec![0.0; horizon];
    for c in &chunks {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    Ok(total.into_iter().map(|v| v / EGARCH_FORECAST_PATHS as f64).collect())
}

/// Long-run variance of a garch or gjr fit, when persistence < 1.
pub fn unconditional_variance(params: &ParamVector, family: VarianceFamily, v_term: f64) -> Option<f64> {
    if family == VarianceFamily::Egarch {
        return None;
    }
    let pers = params.persistence(family);
    (pers < 1.0).then(|| (params.omega + v_term) / (1.0 - pers))
}

/// Forecast σ² for `horizon` steps after `origin`, a date in the fitted sample.
pub fn forecast_variance(fit: &FitResult, origin: NaiveDate, horizon: usize, seed: u64) -> Result<VarianceForecast> {
    let dates = fit.residuals.dates();
    let idx = fit.residuals.position(origin).ok_or_else(|| {
        Error::RangeError(format!(
            "origin {origin} outside fitted sample {}..{}",
            dates.first().map(|d| d.to_string()).unwrap_or_default(),
            dates.last().map(|d| d.to_string()).unwrap_or_default()
        ))
    })?;
    let e = fit.residuals.complete_values()?;
    let v0 = initial_variance(e);
    let spec = &fit.spec;
    let vregs = spec
        .variance
        .regressors
        .iter()
        .map(|r| r.align_to(dates).and_then(|s| s.complete_values().map(<[f64]>::to_vec)))
        .collect::<Result<Vec<_>>>()?;
    let term = |t: usize| -> f64 {
        fit.params.var_beta.iter().zip(&vregs).map(|(g, v)| g * v[t]).sum()
    };
    let mut terms: Vec<f64> = (0..=idx).map(term).collect();
    terms.push(term(idx));
    let path = variance_forecast_path(&fit.params, spec, &e[..=idx], v0, &terms, horizon, seed)?;
    Ok(VarianceForecast {
        origin,
        horizon,
        path,
        unconditional: unconditional_variance(&fit.params, spec.variance.family, term(idx)),
    })
}

/// Percentage effect on the level of a log-modeled series of a dummy with
/// coefficient `beta`: 100(e^β − 1).
pub fn intervention_impact(beta: f64) -> f64 {
    100.0 * beta.exp_m1()
}

#[derive(Debug, Clone)]
pub struct StepDummy {
    pub series: TimeSeries,
    /// Set when the intervention falls after the last date.
    pub after_sample: bool,
}

/// 0 strictly before `intervention`, 1 on and after.
pub fn make_step_dummy(label: &str, dates: &[NaiveDate], intervention: NaiveDate) -> Result<StepDummy> {
    let values = dates.iter().map(|d| if *d >= intervention { 1.0 } else { 0.0 }).collect();
    Ok(StepDummy {
        series: TimeSeries::new(label, dates.to_vec(), values)?,
        after_sample: dates.last().is_none_or(|d| *d < intervention),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{fit, FitOptions};
    use crate::model::{simulate, InnovationDist, MeanSpec, VarianceSpec};
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn garch_spec(family: VarianceFamily) -> ModelSpec {
        ModelSpec::new(MeanSpec::constant_only(), VarianceSpec::new(family, 1, 1), InnovationDist::Normal)
    }

    #[test]
    fn impact_values() {
        assert!((intervention_impact(-0.3641) + 30.50).abs() < 0.05);
        assert!((intervention_impact(0.1071) - 11.30).abs() < 0.05);
        assert!((intervention_impact(-0.1517) + 14.07).abs() < 0.1);
        assert_eq!(intervention_impact(0.0), 0.0);
        // 100(e^0.1769 - 1)
        assert!((intervention_impact(0.1769) - 19.35).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn impact_monotone_and_above_linear(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(intervention_impact(lo) <= intervention_impact(hi));
            if hi >= 0.0 {
                prop_assert!(intervention_impact(hi) >= 100.0 * hi);
            }
        }

        #[test]
        fn theil_scale_invariant(seed in 0u64..500, scale in 0.1f64..50.0) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = (0..50).map(|_| rng.random_range(1.0..3.0)).collect();
            let f: Vec<f64> = y.iter().map(|v| v + rng.random_range(-0.5..0.6)).collect();
            let a = theil_decomposition(&y, &f).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
            let fs: Vec<f64> = f.iter().map(|v| v * scale).collect();
            let b = theil_decomposition(&ys, &fs).unwrap();
            prop_assert!((a.theil_u - b.theil_u).abs() < 1e-12);
            prop_assert!((a.bias_proportion - b.bias_proportion).abs() < 1e-9);
            prop_assert!((a.variance_proportion - b.variance_proportion).abs() < 1e-9);
            let sum = a.bias_proportion + a.variance_proportion + a.covariance_proportion;
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&a.theil_u));
        }
    }

    #[test]
    fn theil_trivial_cases() {
        let y = [1.0, 2.0, 4.0, 3.0];
        let t = theil_decomposition(&y, &y).unwrap();
        assert_eq!(t.theil_u, 0.0);
        assert_eq!((t.bias_proportion, t.variance_proportion, t.covariance_proportion), (0.0, 0.0, 1.0));
        let shifted: Vec<f64> = y.iter().map(|v| v + 0.7).collect();
        let t = theil_decomposition(&y, &shifted).unwrap();
        assert!((t.bias_proportion - 1.0).abs() < 1e-12);
        assert!(t.variance_proportion.abs() < 1e-12);
    }

    #[test]
    fn step_dummy() {
        let dates: Vec<NaiveDate> = (1..=5).map(|i| d(&format!("2024-01-0{i}"))).collect();
        let s = make_step_dummy("rmr", &dates, d("2024-01-03")).unwrap();
        assert_eq!(s.series.values(), &[0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(!s.after_sample);
        let s = make_step_dummy("rmr", &dates, dates[0]).unwrap();
        assert!(s.series.values().iter().all(|v| *v == 1.0));
        let gap = [d("2024-01-01"), d("2024-01-02"), d("2024-01-05"), d("2024-01-06")];
        let s = make_step_dummy("rmr", &gap, d("2024-01-03")).unwrap();
        assert_eq!(s.series.values(), &[0.0, 0.0, 1.0, 1.0]);
        let s = make_step_dummy("rmr", &dates, d("2024-02-01")).unwrap();
        assert!(s.after_sample && s.series.values().iter().all(|v| *v == 0.0));
    }

    fn path_for(p: &ParamVector, shocks: &[f64], v0: f64, horizon: usize) -> Vec<f64> {
        let terms = vec![0.0; shocks.len() + 1];
        variance_forecast_path(p, &garch_spec(VarianceFamily::Garch), shocks, v0, &terms, horizon, 0).unwrap()
    }

    #[test]
    fn geometric_decay_and_direction() {
        let p = ParamVector::garch11(0.0, 0.0014, 0.134, 0.787);
        let inf = unconditional_variance(&p, VarianceFamily::Garch, 0.0).unwrap();
        for (shock, from_below) in [(0.001, true), (0.6, false)] {
            let path = path_for(&p, &[shock], inf, 120);
            for h in 1..path.len() {
                let lhs = (path[h] - inf).abs();
                let rhs = 0.921f64.powi(h as i32) * (path[0] - inf).abs();
                assert!((lhs - rhs).abs() < 1e-12, "h={h} {lhs} {rhs}");
                assert!(lhs <= (path[h - 1] - inf).abs());
                assert_eq!(path[h] < inf, from_below);
            }
            // 85 steps out, under 0.1% of the initial gap remains
            assert!((path[84] - inf).abs() < 1e-3 * (path[0] - inf).abs());
        }
    }

    #[test]
    fn integrated_forecast_is_flat() {
        let p = ParamVector::garch11(0.0, 0.0, 0.06, 0.94);
        let path = path_for(&p, &[0.03, -0.02, 0.05], 0.0004, 30);
        assert!(path.iter().all(|v| (v - path[0]).abs() < 1e-18));
    }

    #[test]
    fn gjr_uses_half_leverage() {
        let p = ParamVector::garch11(0.0, 0.001, 0.05, 0.8).with_leverage(vec![0.1]);
        let terms = [0.0, 0.0];
        let path =
            variance_forecast_path(&p, &garch_spec(VarianceFamily::Gjr), &[-0.1], 0.01, &terms, 3, 0).unwrap();
        assert!((path[0] - (0.001 + 0.15 * 0.01 + 0.8 * 0.01)).abs() < 1e-15);
        assert!((path[1] - (0.001 + 0.9 * path[0])).abs() < 1e-15);
    }

    #[test]
    fn forecast_from_fit_and_range_error() {
        let spec = garch_spec(VarianceFamily::Garch);
        let truth = ParamVector::garch11(0.0, 0.0014, 0.134, 0.787);
        let sim = simulate(&truth, &spec, 1500, 5).unwrap();
        let f = fit(&sim.y, &spec, &FitOptions::default()).unwrap();
        let last = *f.residuals.dates().last().unwrap();
        let fc = forecast_variance(&f, last, 10, 0).unwrap();
        assert_eq!(fc.path.len(), 10);
        // one-step forecast from an in-sample origin equals the filtered variance
        let mid = f.residuals.dates()[700];
        let fc_mid = forecast_variance(&f, mid, 1, 0).unwrap();
        let filtered = f.variance.sigma[701].powi(2);
        assert!((fc_mid.path[0] - filtered).abs() < 1e-12 * filtered);
        assert!(matches!(
            forecast_variance(&f, d("1990-01-01"), 5, 0),
            Err(Error::RangeError(_))
        ));
    }

    #[test]
    fn egarch_monte_carlo_is_seeded() {
        let spec = garch_spec(VarianceFamily::Egarch);
        let mut p = ParamVector::garch11(0.0, -0.5, 0.15, 0.9);
        p.leverage = vec![-0.05];
        let shocks = [0.02, -0.05, 0.01];
        let terms = [0.0; 4];
        let a = variance_forecast_path(&p, &spec, &shocks, 0.001, &terms, 20, 9).unwrap();
        let b = variance_forecast_path(&p, &spec, &shocks, 0.001, &terms, 20, 9).unwrap();
        assert_eq!(a, b);
        // long horizon approaches E[σ²] of the stationary process, near exp(k/(1-G)) scaled up by Jensen
        let ln_level: f64 = -0.5 / (1.0 - 0.9);
        assert!(a[19] > ln_level.exp() * 0.8, "{:?}", a);
    }

    #[test]
    fn in_sample_theil_on_level_series() {
        let spec = ModelSpec::new(MeanSpec::arma(1, 0), VarianceSpec::garch11(), InnovationDist::Normal);
        let mut truth = ParamVector::garch11(0.4, 0.0014, 0.134, 0.787);
        truth.ar = vec![0.9];
        let sim = simulate(&truth, &spec, 2000, 17).unwrap();
        let f = fit(&sim.y, &spec, &FitOptions::default()).unwrap();
        let r = in_sample_forecast(&f, &sim.y).unwrap();
        assert!(r.theil.theil_u < 0.10, "{:?}", r.theil);
        assert!(r.theil.bias_proportion < 0.02, "{:?}", r.theil);
        assert_eq!(r.fitted.len(), sim.y.len() - 1);
    }
}
