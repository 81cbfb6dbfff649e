//! Maximum-likelihood fitting, standard errors, information criteria and the
//! multi-specification comparison table.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    evaluate, initial_variance, InnovationDist, ModelSpec, ParamVector, PreparedData, VarianceFamily,
};
use crate::ols::ols;
use crate::optim::{minimize, numerical_hessian, BfgsOptions};
use crate::series::{autocorrelations, mean, TimeSeries};
use crate::special::normal_two_sided_p;
use crate::stat_tests::{arch_lm, durbin_watson};
use crate::vol::{persistence_from, PersistenceSummary, VolPath};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub loglik_tolerance: f64,
    pub gradient_tolerance: f64,
    /// Relative finite-difference step for the Hessian.
    pub hessian_step: f64,
    /// Number of extra randomly perturbed starts; 0 disables restarts.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            loglik_tolerance: 1e-8,
            gradient_tolerance: 1e-5,
            hessian_step: 1e-4,
            restarts: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Criteria {
    pub aic: f64,
    pub bic: f64,
    pub hq: f64,
}

/// Per-observation AIC, Schwarz and Hannan-Quinn criteria.
pub fn information_criteria(loglik: f64, k_params: usize, n: usize) -> Criteria {
    let (k, nf) = (k_params as f64, n as f64);
    Criteria {
        aic: (-2.0 * loglik + 2.0 * k) / nf,
        bic: (-2.0 * loglik + k * nf.ln()) / nf,
        hq: (-2.0 * loglik + 2.0 * k * nf.ln().ln()) / nf,
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub params: ParamVector,
    pub names: Vec<String>,
    pub std_errors: Vec<Option<f64>>,
    pub z_stats: Vec<Option<f64>>,
    pub p_values: Vec<Option<f64>>,
    pub loglik: f64,
    pub loglik_start: f64,
    pub criteria: Criteria,
    pub n_obs: usize,
    pub n_params: usize,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub dw: f64,
    /// Post-conditioning residuals.
    pub residuals: TimeSeries,
    pub variance: VolPath,
    pub persistence: PersistenceSummary,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<(f64, Option<f64>)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.params.to_vec(&self.spec)[i], self.z_stats[i]))
    }
}

/// Maps the optimizer's unconstrained coordinates to model parameters.
struct Reparam<'a> {
    spec: &'a ModelSpec,
}

impl Reparam<'_> {
    fn to_params(&self, u: &[f64]) -> Result<ParamVector> {
        let spec = self.spec;
        let mut p = ParamVector::from_vec(spec, u)?;
        match spec.variance.family {
            VarianceFamily::Garch | VarianceFamily::Gjr => {
                p.omega = p.omega.exp();
                p.garch.iter_mut().for_each(|g| *g = g.exp());
                p.arch.iter_mut().for_each(|a| *a = a.exp());
                // L_j = exp(s_j) - A_j keeps A_j + L_j > 0
                for (l, a) in p.leverage.iter_mut().zip(&p.arch) {
                    *l = l.exp() - a;
                }
            }
            VarianceFamily::Egarch => {
                p.garch.iter_mut().for_each(|g| *g = g.tanh());
            }
        }
        if let Some(nu) = p.nu.as_mut() {
            *nu = 2.0 + nu.exp();
        }
        Ok(p)
    }

    fn to_unconstrained(&self, p: &ParamVector) -> Vec<f64> {
        let mut q = p.clone();
        let floor = 1e-8;
        match self.spec.variance.family {
            VarianceFamily::Garch | VarianceFamily::Gjr => {
                for (l, a) in q.leverage.iter_mut().zip(&p.arch) {
                    *l = (*l + a).max(floor).ln();
                }
                q.omega = q.omega.max(1e-300).ln();
                q.garch.iter_mut().for_each(|g| *g = g.max(floor).ln());
                q.arch.iter_mut().for_each(|a| *a = a.max(floor).ln());
            }
            VarianceFamily::Egarch => {
                q.garch.iter_mut().for_each(|g| *g = g.clamp(-0.999_999, 0.999_999).atanh());
            }
        }
        if let Some(nu) = q.nu.as_mut() {
            *nu = (*nu - 2.0).max(1e-6).ln();
        }
        q.to_vec(self.spec)
    }
}

/// Two-step warm start: OLS for the mean, fixed variance shape.
pub fn starting_values(y: &TimeSeries, spec: &ModelSpec) -> Result<ParamVector> {
    let data = PreparedData::new(y, spec)?;
    let s = data.conditioning;
    let n = data.y.len();
    let mean_cols = usize::from(spec.mean.include_constant) + spec.mean.ar + spec.mean.regressors.len();
    let mut constant = 0.0;
    let mut ar = vec![0.0; spec.mean.ar];
    let mut beta = vec![0.0; spec.mean.regressors.len()];
    let mut resid: Vec<f64> = data.y[s..].to_vec();
    if mean_cols > 0 {
        let x = DMatrix::from_fn(n - s, mean_cols, |r, c| {
            let t = r + s;
            let mut c = c;
            if spec.mean.include_constant {
                if c == 0 {
                    return 1.0;
                }
                c -= 1;
            }
            if c < spec.mean.ar {
                return data.y[t - 1 - c];
            }
            data.xreg[c - spec.mean.ar][t]
        });
        match ols(&data.y[s..], &x) {
            Ok(fit) => {
                let mut it = fit.coef.iter().copied();
                if spec.mean.include_constant {
                    constant = it.next().unwrap_or(0.0);
                }
                ar = (&mut it).take(spec.mean.ar).collect();
                beta = it.collect();
                resid = fit.residuals;
            }
            Err(_) => {
                if spec.mean.include_constant {
                    constant = mean(&data.y[s..]);
                    resid.iter_mut().for_each(|v| *v -= constant);
                }
            }
        }
    }
    let var = initial_variance(&resid);
    let (p_ord, q_ord) = (spec.variance.p, spec.variance.q);
    let (omega, garch, arch) = match spec.variance.family {
        VarianceFamily::Egarch => ((1.0 - 0.8) * var.ln(), 0.8, 0.1),
        _ => (0.1 * var, 0.8, 0.1),
    };
    Ok(ParamVector {
        constant,
        ar,
        ma: vec![0.0; spec.mean.ma],
        beta,
        omega,
        garch: vec![garch / p_ord as f64; p_ord],
        arch: vec![arch / q_ord as f64; q_ord],
        leverage: vec![0.0; spec.variance.n_leverage()],
        var_beta: vec![0.0; spec.variance.regressors.len()],
        nu: (spec.dist == InnovationDist::StudentT).then_some(8.0),
    })
}

pub fn fit(y: &TimeSeries, spec: &ModelSpec, options: &FitOptions) -> Result<FitResult> {
    let start = starting_values(y, spec)?;
    fit_from(y, spec, &start, options)
}

/// Fit starting from `start`, which must satisfy the family constraints.
pub fn fit_from(y: &TimeSeries, spec: &ModelSpec, start: &ParamVector, options: &FitOptions) -> Result<FitResult> {
    start.validate(spec)?;
    let data = PreparedData::new(y, spec)?;
    let k = spec.n_params();
    if data.n_eff() < 10 * k {
        return Err(Error::InsufficientData {
            needed: 10 * k + data.conditioning,
            have: data.y.len(),
        });
    }
    let rp = Reparam { spec };
    let objective = |u: &[f64]| -> f64 {
        match rp.to_params(u).and_then(|p| evaluate(&p, &data, spec)) {
            Ok(ev) => -ev.loglik,
            Err(_) => f64::INFINITY,
        }
    };
    let bfgs = BfgsOptions {
        max_iterations: options.max_iterations,
        f_tolerance: options.loglik_tolerance,
        g_tolerance: options.gradient_tolerance,
    };
    let u0 = rp.to_unconstrained(start);
    let loglik_start = -objective(&u0);
    let mut best = minimize(objective, &u0, &bfgs);
    if options.restarts > 0 {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(options.seed);
        let jitter = Normal::new(0.0, 0.5).expect("valid normal");
        for _ in 0..options.restarts {
            let u: Vec<f64> = best.x.iter().map(|v| v + jitter.sample(&mut rng)).collect();
            let r = minimize(objective, &u, &bfgs);
            if r.f < best.f {
                best = r;
            }
        }
    }
    let params = rp.to_params(&best.x)?;
    let ev = evaluate(&params, &data, spec)?;

    let theta = params.to_vec(spec);
    let natural = |v: &[f64]| -> f64 {
        match ParamVector::from_vec(spec, v).and_then(|p| evaluate(&p, &data, spec)) {
            Ok(ev) => -ev.loglik,
            Err(_) => f64::NAN,
        }
    };
    let steps: Vec<f64> = theta
        .iter()
        .map(|v| options.hessian_step * v.abs().max(1e-2))
        .collect();
    let hess = numerical_hessian(&natural, &theta, &steps);
    let std_errors = covariance_diagonal(&hess)
        .into_iter()
        .map(|v| v.filter(|v| *v > 0.0 && v.is_finite()).map(f64::sqrt))
        .collect::<Vec<_>>();
    let z_stats: Vec<Option<f64>> = theta
        .iter()
        .zip(&std_errors)
        .map(|(c, se)| se.map(|se| c / se))
        .collect();
    let p_values = z_stats.iter().map(|z| z.map(normal_two_sided_p)).collect();

    let s = data.conditioning;
    let n_obs = data.n_eff();
    let residuals = TimeSeries::new(
        format!("{}_resid", y.name()),
        data.dates[s..].to_vec(),
        ev.residuals[s..].to_vec(),
    )?;
    let (r_squared, adj_r_squared) = r_squared_pair(&data.y[s..], residuals.values(), spec.mean.n_params());
    let dw = durbin_watson(&residuals).map(|r| r.statistic).unwrap_or(f64::NAN);
    let variance = VolPath {
        dates: data.dates[s..].to_vec(),
        sigma: ev.variance.iter().map(|h| h.sqrt()).collect(),
        params: vec![("loglik".into(), ev.loglik)],
    };
    let persistence = match spec.variance.family {
        VarianceFamily::Egarch => persistence_from(f64::NAN, params.persistence(spec.variance.family))
            .without_level(),
        _ => persistence_from(
            params.omega + mean_var_regressor_term(&params, &data),
            params.persistence(spec.variance.family),
        ),
    };
    Ok(FitResult {
        spec: spec.clone(),
        names: ParamVector::names(spec),
        params,
        std_errors,
        z_stats,
        p_values,
        loglik: ev.loglik,
        loglik_start,
        criteria: information_criteria(ev.loglik, k, n_obs),
        n_obs,
        n_params: k,
        r_squared,
        adj_r_squared,
        dw,
        residuals,
        variance,
        persistence,
        converged: best.converged,
        iterations: best.iterations,
    })
}

/// Variance-regressor contribution at the end of the sample (long-run level
/// applies to the latest regime).
fn mean_var_regressor_term(p: &ParamVector, data: &PreparedData) -> f64 {
    p.var_beta
        .iter()
        .zip(&data.vreg)
        .map(|(g, v)| g * v.last().copied().unwrap_or(0.0))
        .sum()
}

impl PersistenceSummary {
    fn without_level(mut self) -> Self {
        self.unconditional_sigma = None;
        self
    }
}

/// Diagonal of the inverse of a Hessian of the negative log-likelihood.
fn covariance_diagonal(hess: &DMatrix<f64>) -> Vec<Option<f64>> {
    let n = hess.nrows();
    if hess.iter().any(|v| !v.is_finite()) {
        return vec![None; n];
    }
    if let Some(ch) = hess.clone().cholesky() {
        let inv = ch.inverse();
        return (0..n).map(|i| Some(inv[(i, i)])).collect();
    }
    match hess.clone().try_inverse() {
        Some(inv) => (0..n)
            .map(|i| {
                let v = inv[(i, i)];
                (v > 0.0).then_some(v)
            })
            .collect(),
        None => vec![None; n],
    }
}

fn r_squared_pair(y: &[f64], resid: &[f64], k_mean: usize) -> (f64, f64) {
    let ybar = mean(y);
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN };
    let n = y.len() as f64;
    let dof = n - k_mean.max(1) as f64;
    let adj = 1.0 - (1.0 - r2) * (n - 1.0) / dof;
    (r2, adj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodnessOfFit {
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub dw: f64,
}

/// R², adjusted R² and Durbin-Watson over the post-conditioning sample.
pub fn goodness_of_fit(fit: &FitResult, y: &TimeSeries) -> Result<GoodnessOfFit> {
    let y_post = y.align_to(fit.residuals.dates())?;
    goodness_from_residuals(&y_post, &fit.residuals, fit.spec.mean.n_params())
}

pub fn goodness_from_residuals(y: &TimeSeries, residuals: &TimeSeries, k_mean: usize) -> Result<GoodnessOfFit> {
    if y.dates() != residuals.dates() {
        return Err(Error::AlignmentError("residuals and target differ in dates".into()));
    }
    let yv = y.complete_values()?;
    let ybar = mean(yv);
    if yv.iter().all(|v| (v - ybar).abs() == 0.0) {
        return Err(Error::ConstantSeries);
    }
    let (r_squared, adj_r_squared) = r_squared_pair(yv, residuals.complete_values()?, k_mean);
    let dw = match durbin_watson(residuals) {
        Ok(r) => r.statistic,
        Err(Error::DegenerateResiduals) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(GoodnessOfFit {
        r_squared,
        adj_r_squared,
        dw,
    })
}

pub fn standardized_residuals(fit: &FitResult) -> Result<TimeSeries> {
    let e = fit.residuals.complete_values()?;
    let z = e
        .iter()
        .zip(&fit.variance.sigma)
        .enumerate()
        .map(|(t, (e, s))| if *s > 0.0 { Ok(e / s) } else { Err(Error::VarianceNonPositive(t)) })
        .collect::<Result<Vec<f64>>>()?;
    fit.residuals.with_values(z).map(|s| s.renamed("std_resid"))
}

/// Lags of the ARCH test in the comparison table.
pub const COMPARE_ARCH_LAGS: usize = 7;

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub index: usize,
    pub label: String,
    pub n_mean_regressors: usize,
    pub n_params: usize,
    pub converged: bool,
    pub r_squared: f64,
    pub dw: f64,
    pub aic: f64,
    pub bic: f64,
    pub hq: f64,
    pub arch_stat: f64,
    pub arch_p: f64,
    /// ARCH(7) on standardized residuals rejects at 5%.
    pub serial_correlation_remains: bool,
    pub rank: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn best(&self) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.rank == Some(1))
    }
}

fn comparison_row(index: usize, spec: &ModelSpec, result: Result<FitResult>) -> ComparisonRow {
    let mut row = ComparisonRow {
        index,
        label: spec.label(),
        n_mean_regressors: spec.mean.regressors.len(),
        n_params: spec.n_params(),
        converged: false,
        r_squared: f64::NAN,
        dw: f64::NAN,
        aic: f64::NAN,
        bic: f64::NAN,
        hq: f64::NAN,
        arch_stat: f64::NAN,
        arch_p: f64::NAN,
        serial_correlation_remains: false,
        rank: None,
        error: None,
    };
    let fit = match result {
        Ok(f) => f,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.converged = fit.converged;
    row.r_squared = fit.r_squared;
    row.dw = fit.dw;
    row.aic = fit.criteria.aic;
    row.bic = fit.criteria.bic;
    row.hq = fit.criteria.hq;
    match standardized_residuals(&fit).and_then(|z| arch_lm(&z, COMPARE_ARCH_LAGS)) {
        Ok(t) => {
            row.arch_stat = t.statistic;
            row.arch_p = t.p_value.exact().unwrap_or(f64::NAN);
            row.serial_correlation_remains = t.reject_at_5pct;
        }
        Err(e) => row.error = Some(format!("arch test: {e}")),
    }
    row
}

/// Fit every spec on a common estimation sample and rank by AIC, then BIC,
/// then fewer parameters, then listing order. Failed or non-converged fits
/// are left unranked.
pub fn compare(y: &TimeSeries, specs: &[ModelSpec], options: &FitOptions) -> Result<ComparisonTable> {
    if specs.len() < 2 {
        return Err(Error::Config("comparison needs at least two specifications".into()));
    }
    // every spec is scored on the same post-conditioning dates
    let s_max = specs.iter().map(|s| s.mean.conditioning()).max().unwrap_or(0);
    let mut rows: Vec<ComparisonRow> = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let skip = s_max - spec.mean.conditioning();
            let result = y.slice(skip.min(y.len()), y.len()).and_then(|ys| fit(&ys, spec, options));
            comparison_row(i, spec, result)
        })
        .collect();
    rank_rows(&mut rows);
    Ok(ComparisonTable { rows })
}

pub(crate) fn rank_rows(rows: &mut [ComparisonRow]) {
    let mut order: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].error.is_none() && rows[i].converged && rows[i].aic.is_finite())
        .collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&rows[a], &rows[b]);
        ra.aic
            .total_cmp(&rb.aic)
            .then(ra.bic.total_cmp(&rb.bic))
            .then(ra.n_params.cmp(&rb.n_params))
            .then(ra.index.cmp(&rb.index))
    });
    for (rank, i) in order.into_iter().enumerate() {
        rows[i].rank = Some(rank + 1);
    }
}

/// Share of lags 1..=max_lag whose squared-series ACF sits inside ±2/√n.
pub fn squared_acf_inside_band(z: &TimeSeries, max_lag: usize) -> Result<f64> {
    let v = z.complete_values()?;
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    let rho = autocorrelations(&sq, max_lag)?;
    let band = 2.0 / (v.len() as f64).sqrt();
    Ok(rho.iter().filter(|r| r.abs() < band).count() as f64 / max_lag as f64)
}

/// Design check used by the tests: gradient of the log-likelihood at `p`.
#[doc(hidden)]
pub fn loglik_gradient(y: &TimeSeries, spec: &ModelSpec, p: &ParamVector) -> Result<Vec<f64>> {
    let data = PreparedData::new(y, spec)?;
    let theta = DVector::from_vec(p.to_vec(spec));
    let f = |v: &[f64]| match ParamVector::from_vec(spec, v).and_then(|p| evaluate(&p, &data, spec)) {
        Ok(ev) => ev.loglik,
        Err(_) => f64::NAN,
    };
    Ok(crate::optim::numerical_gradient(&f, theta.as_slice(), f(theta.as_slice())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, MeanSpec, VarianceSpec};

    fn garch_t() -> ModelSpec {
        ModelSpec::new(MeanSpec::constant_only(), VarianceSpec::garch11(), InnovationDist::StudentT)
    }

    fn truth() -> ParamVector {
        ParamVector::garch11(0.0, 0.0014, 0.134, 0.787).with_nu(8.0)
    }

    #[test]
    fn criteria_table_values() {
        let c = information_criteria(2873.546, 44, 2870);
        assert!((c.aic + 1.9718).abs() < 1e-3, "{c:?}");
        assert!((c.hq + 1.9381).abs() < 1e-3, "{c:?}");
        assert!((c.bic + 1.8804).abs() < 5e-3, "{c:?}");
        let e2 = std::f64::consts::E.powi(2);
        // n is an integer count; evaluate the closed form at n = e² directly
        let hq = (2.0 * 1.0 * e2.ln().ln()) / e2;
        assert!((hq - 2.0 * 2f64.ln() / e2).abs() < 1e-15);
    }

    #[test]
    fn aic_below_bic_for_large_n() {
        for n in [10usize, 100, 5000] {
            let c = information_criteria(-123.0, 3, n);
            assert!(c.aic <= c.bic);
        }
    }

    #[test]
    fn nested_specs_with_equal_loglik_prefer_smaller() {
        let small = information_criteria(100.0, 3, 1000);
        let big = information_criteria(100.0, 5, 1000);
        assert!(small.aic < big.aic);
    }

    #[test]
    fn fit_recovers_garch_parameters() {
        let sim = simulate(&truth(), &garch_t(), 5000, 21).unwrap();
        let f = fit(&sim.y, &garch_t(), &FitOptions::default()).unwrap();
        assert!(f.converged);
        assert!((f.params.arch[0] - 0.134).abs() < 0.06, "{:?}", f.params);
        assert!((f.params.garch[0] - 0.787).abs() < 0.08, "{:?}", f.params);
        assert!(f.loglik >= f.loglik_start);
        for (z, (c, se)) in f.z_stats.iter().zip(f.params.to_vec(&f.spec).iter().zip(&f.std_errors)) {
            if let (Some(z), Some(se)) = (z, se) {
                assert!((z - c / se).abs() < 1e-12);
            }
        }
        // refit from the optimum stays put
        let again = fit_from(&sim.y, &garch_t(), &f.params, &FitOptions::default()).unwrap();
        for (a, b) in again.params.to_vec(&f.spec).iter().zip(f.params.to_vec(&f.spec)) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn standardized_residuals_have_unit_variance() {
        let sim = simulate(&truth(), &garch_t(), 4000, 3).unwrap();
        let f = fit(&sim.y, &garch_t(), &FitOptions::default()).unwrap();
        let z = standardized_residuals(&f).unwrap();
        let v = crate::series::sample_variance(z.values());
        assert!((v - 1.0).abs() < 0.05, "{v}");
        assert!(squared_acf_inside_band(&z, 20).unwrap() >= 0.9);
    }

    #[test]
    fn goodness_trivial_cases() {
        let y = TimeSeries::from_values("y", vec![1.0, 3.0, 2.0, 5.0, 4.0]);
        let zero = y.with_values(vec![0.0; 5]).unwrap();
        let g = goodness_from_residuals(&y, &zero, 1).unwrap();
        assert_eq!(g.r_squared, 1.0);
        assert!(g.dw.is_nan());
        let demeaned = y.with_values(y.values().iter().map(|v| v - 3.0).collect()).unwrap();
        let g = goodness_from_residuals(&y, &demeaned, 1).unwrap();
        assert!(g.r_squared.abs() < 1e-15);
        let flat = y.with_values(vec![2.0; 5]).unwrap();
        assert_eq!(goodness_from_residuals(&flat, &zero, 1), Err(Error::ConstantSeries));
    }

    #[test]
    fn too_little_data_for_params() {
        let y = TimeSeries::from_values("y", (0..30).map(|i| (i as f64).sin()).collect());
        assert!(matches!(
            fit(&y, &garch_t(), &FitOptions::default()),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn reparam_round_trip() {
        let spec = ModelSpec::new(
            MeanSpec::arma(1, 1),
            VarianceSpec::new(VarianceFamily::Gjr, 1, 1),
            InnovationDist::StudentT,
        );
        let mut p = ParamVector::garch11(0.1, 0.002, 0.1, 0.85).with_nu(6.0).with_leverage(vec![-0.05]);
        p.ar = vec![0.4];
        p.ma = vec![-0.2];
        let rp = Reparam { spec: &spec };
        let back = rp.to_params(&rp.to_unconstrained(&p)).unwrap();
        for (a, b) in back.to_vec(&spec).iter().zip(p.to_vec(&spec)) {
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    proptest::proptest! {
        #[test]
        fn reparam_always_feasible(u in proptest::collection::vec(-30.0f64..30.0, 7), gjr in proptest::bool::ANY) {
            let family = if gjr { VarianceFamily::Gjr } else { VarianceFamily::Garch };
            let spec = ModelSpec::new(
                MeanSpec::arma(1, 0),
                VarianceSpec::new(family, 1, 1),
                InnovationDist::StudentT,
            );
            let u = &u[..spec.n_params()];
            let p = Reparam { spec: &spec }.to_params(u).unwrap();
            proptest::prop_assert!(p.validate(&spec).is_ok(), "{:?}", p);
            proptest::prop_assert!(p.nu.unwrap() > 2.0);
        }
    }

    #[test]
    fn ranking_ties_and_failures() {
        let row = |i: usize, aic: f64, bic: f64, k: usize| ComparisonRow {
            index: i,
            label: format!("m{i}"),
            n_mean_regressors: 0,
            n_params: k,
            converged: true,
            r_squared: 0.0,
            dw: 2.0,
            aic,
            bic,
            hq: 0.0,
            arch_stat: 0.0,
            arch_p: 1.0,
            serial_correlation_remains: false,
            rank: None,
            error: None,
        };
        let mut rows = vec![row(0, -2.0, -1.9, 5), row(1, -2.0, -1.9, 4), row(2, -2.0, -1.9, 4), row(3, -3.0, 0.0, 9)];
        rows.push(ComparisonRow { error: Some("boom".into()), ..row(4, -9.0, -9.0, 1) });
        rank_rows(&mut rows);
        let ranks: Vec<Option<usize>> = rows.iter().map(|r| r.rank).collect();
        assert_eq!(ranks, vec![Some(4), Some(2), Some(3), Some(1), None]);
    }
}
