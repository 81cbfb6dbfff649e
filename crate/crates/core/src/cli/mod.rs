//! Command-line front end: argument parsing, dispatch and report emission.

mod ingest;
mod output;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{self, FitOptions, FitResult};
use crate::forecast;
use crate::model::{self, InnovationDist, MeanSpec, ModelSpec, ParamVector, VarianceFamily, VarianceSpec};
use crate::series::{self, QqDist, TimeSeries, Transform};
use crate::stat_tests::{self, TestResult, Trend};
use crate::vol::{self, EwmaInit};

pub use ingest::{ingest, Dataset};
use output::{fmt_opt, xy_csv, Outputs};

#[derive(Debug, Parser)]
#[command(name = "pricevol", version, about = "Conditional mean and volatility modeling for daily price series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Summary statistics, ACF/PACF and Q-Q data.
    Describe(DescribeArgs),
    /// Normality, unit-root, serial-correlation and ARCH tests.
    Test(TestArgs),
    /// Rolling and EWMA volatility, optional EWMA correlation.
    Vol(VolArgs),
    /// Fit one ARMAX/GARCH-family specification.
    Fit(FitArgs),
    /// Fit several specifications and rank them.
    Compare(CompareArgs),
    /// Variance forecast and in-sample Theil report.
    Forecast(ForecastArgs),
    /// Write a simulated series to CSV.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "date")]
    pub date_col: String,
    #[arg(long, default_value = "%Y-%m-%d")]
    pub date_format: String,
    #[arg(long)]
    pub target: String,
    /// Comma-separated chain applied in order: log, diff, logret, ewma<span>.
    #[arg(long, value_delimiter = ',')]
    pub transform: Vec<String>,
    /// Longest run of missing values filled by linear interpolation.
    #[arg(long, default_value_t = 3)]
    pub max_gap: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Prefix for output files; defaults to the command name.
    #[arg(long)]
    pub run: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RegressorArgs {
    #[arg(long, value_delimiter = ',')]
    pub xreg: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub vreg: Vec<String>,
    /// Step dummies as label=YYYY-MM-DD; added to the mean equation.
    #[arg(long, value_delimiter = ',')]
    pub dummy: Vec<String>,
    /// Also add the step dummies to the variance equation.
    #[arg(long)]
    pub dummy_variance: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EstimationArgs {
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Extra randomly perturbed optimizer starts.
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 0)]
    pub ar: usize,
    #[arg(long, default_value_t = 0)]
    pub ma: usize,
    /// Variance orders as P,Q.
    #[arg(long, default_value = "1,1")]
    pub garch: String,
    #[arg(long, default_value = "garch")]
    pub family: String,
    /// normal or t.
    #[arg(long, default_value = "normal")]
    pub dist: String,
    #[arg(long)]
    pub no_constant: bool,
    #[command(flatten)]
    pub regressors: RegressorArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DescribeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 20)]
    pub lags: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Lags for Ljung-Box and ARCH-LM.
    #[arg(long, default_value_t = 7)]
    pub lags: usize,
    /// ADF augmentation lags; default floor(4 (n/100)^(1/4)).
    #[arg(long)]
    pub adf_lags: Option<usize>,
    /// none, constant or constant_trend.
    #[arg(long, default_value = "constant")]
    pub trend: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VolArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    #[arg(long, default_value_t = vol::RISKMETRICS_LAMBDA)]
    pub lambda: f64,
    /// Second series for the EWMA correlation, same transform chain.
    #[arg(long)]
    pub with: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Repeatable spec as R,M,P,Q,family,dist, e.g. 1,1,1,1,gjr,t.
    #[arg(long = "spec", required = true)]
    pub specs: Vec<String>,
    #[command(flatten)]
    pub regressors: RegressorArgs,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[arg(long, default_value_t = 30)]
    pub horizon: usize,
    /// Forecast origin; defaults to the last fitted date.
    #[arg(long)]
    pub origin: Option<NaiveDate>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parameter overrides as name=value, using fit report names (c, ar(1), k, A(1), G(1), L(1), nu).
    #[arg(long = "param", value_delimiter = ',')]
    pub params: Vec<String>,
    /// Column name of the simulated series.
    #[arg(long, default_value = "y")]
    pub name: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Failure annotated with the pipeline stage that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: PathBuf,
    pub files: Vec<PathBuf>,
    /// Human-readable summary.
    pub summary: String,
    /// False when a fit did not converge.
    pub success: bool,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    run: &'a str,
    input: Option<InputInfo>,
    warnings: Vec<String>,
    result: T,
}

#[derive(Debug, Clone, Serialize)]
struct InputInfo {
    data: String,
    target: String,
    transform: Vec<String>,
    first_date: NaiveDate,
    last_date: NaiveDate,
    n_obs: usize,
    imputed: usize,
}

struct Prepared {
    target: TimeSeries,
    dataset: Dataset,
    info: InputInfo,
    transforms: Vec<Transform>,
}

fn parse_transforms(names: &[String]) -> Result<Vec<Transform>> {
    names.iter().filter(|s| !s.is_empty()).map(|s| s.parse()).collect()
}

fn check_output_dir(out: &Path) -> Result<()> {
    if out.exists() && !out.is_dir() {
        return Err(Error::Config(format!("output path {} is not a directory", out.display())));
    }
    Ok(())
}

fn apply_chain(s: &TimeSeries, max_gap: usize, chain: &[Transform]) -> Result<(TimeSeries, usize)> {
    let imputed = s.missing_count();
    let mut s = series::impute_missing(s, max_gap)?;
    for t in chain {
        s = series::transform(&s, *t)?;
    }
    Ok((s, imputed))
}

fn prepare(args: &DataArgs) -> std::result::Result<Prepared, StageError> {
    let transforms = parse_transforms(&args.transform).stage("config")?;
    let dataset = ingest(&args.data, &args.date_col, &args.date_format).stage("ingest")?;
    let raw = dataset.get(&args.target).stage("config")?;
    let (target, imputed) = apply_chain(raw, args.max_gap, &transforms).stage("transform")?;
    let info = InputInfo {
        data: args.data.display().to_string(),
        target: args.target.clone(),
        transform: args.transform.clone(),
        first_date: target.dates()[0],
        last_date: *target.dates().last().expect("non-empty"),
        n_obs: target.len(),
        imputed,
    };
    Ok(Prepared {
        target,
        dataset,
        info,
        transforms,
    })
}

fn run_name<'a>(o: &'a OutputArgs, default: &'a str) -> &'a str {
    o.run.as_deref().unwrap_or(default)
}

pub fn run(cli: &Cli) -> std::result::Result<Outcome, StageError> {
    match &cli.command {
        Command::Describe(a) => describe(a),
        Command::Test(a) => test(a),
        Command::Vol(a) => volatility(a),
        Command::Fit(a) => fit(a),
        Command::Compare(a) => compare(a),
        Command::Forecast(a) => forecast_cmd(a),
        Command::Simulate(a) => simulate(a),
    }
}

#[derive(Serialize)]
struct DescribeResult {
    summary: series::SummaryStats,
    correlogram: Vec<series::CorrelogramEntry>,
}

fn describe(a: &DescribeArgs) -> std::result::Result<Outcome, StageError> {
    check_output_dir(&a.output.out).stage("config")?;
    let p = prepare(&a.data)?;
    let run = run_name(&a.output, "describe");
    let y = &p.target;
    let summary = series::summary_stats(y).stage("describe")?;
    let correlogram = series::acf(y, a.lags).stage("describe")?;
    let qq = series::qq_points(
        y,
        QqDist::Normal {
            mean: summary.mean,
            sd: summary.std,
        },
    )
    .stage("describe")?;

    let mut out = Outputs::new(&a.output.out, run);
    out.json(&Report {
        command: "describe",
        run,
        input: Some(p.info.clone()),
        warnings: vec![],
        result: DescribeResult {
            summary,
            correlogram: correlogram.clone(),
        },
    })
    .stage("report")?;
    out.plot("series", xy_csv(("date", y.name()), y.dates().iter().zip(y.values())));
    out.plot("acf", xy_csv(("lag", "acf"), correlogram.iter().map(|e| (e.lag, e.acf))));
    out.plot("pacf", xy_csv(("lag", "pacf"), correlogram.iter().map(|e| (e.lag, e.pacf))));
    out.plot("qq", xy_csv(("theoretical", "sample"), qq.iter().map(|(t, s)| (t, s))));

    let mut text = format!(
        "{}: n={} mean={:.6} median={:.6} std={:.6} min={:.6} max={:.6}\nskewness={:.6} kurtosis={:.6} cv={:.6} iqr={:.6}\n",
        y.name(),
        summary.n,
        summary.mean,
        summary.median,
        summary.std,
        summary.min,
        summary.max,
        summary.skewness,
        summary.kurtosis,
        summary.cv,
        summary.iqr
    );
    text.push_str(&format!("{:>4} {:>10} {:>10}\n", "lag", "acf", "pacf"));
    for e in &correlogram {
        text.push_str(&format!("{:>4} {:>10.4} {:>10.4}\n", e.lag, e.acf, e.pacf));
    }
    out.finish(text, true).stage("write")
}

#[derive(Serialize)]
struct TestSuite {
    tests: Vec<TestResult>,
    skipped: Vec<String>,
}

fn default_adf_lags(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

fn test(a: &TestArgs) -> std::result::Result<Outcome, StageError> {
    check_output_dir(&a.output.out).stage("config")?;
    let trend: Trend = a.trend.parse().stage("config")?;
    let p = prepare(&a.data)?;
    let run = run_name(&a.output, "test");
    let y = &p.target;
    let adf_lags = a.adf_lags.unwrap_or_else(|| default_adf_lags(y.len()));
    let demeaned = {
        let v = y.complete_values().stage("test")?;
        let m = v.iter().sum::<f64>() / v.len() as f64;
        y.with_values(v.iter().map(|x| x - m).collect()).stage("test")?
    };

    let mut tests = Vec::new();
    let mut skipped = Vec::new();
    let mut run_one = |name: &str, r: Result<TestResult>| match r {
        Ok(t) => tests.push(t),
        Err(e) => skipped.push(format!("{name}: {e}")),
    };
    run_one("jarque_bera", stat_tests::jarque_bera(y));
    run_one("adf", stat_tests::adf_test(y, adf_lags, trend));
    run_one("phillips_perron", stat_tests::pp_test(y, trend));
    run_one(
        "ljung_box",
        stat_tests::ljung_box(y, a.lags, 0).map(|v| v.last().cloned().expect("lags > 0")),
    );
    run_one("arch_lm", stat_tests::arch_lm(&demeaned, a.lags));
    run_one("durbin_watson", stat_tests::durbin_watson(&demeaned));

    let mut text = format!("{:<16} {:>12} {:>10} {:>5} {:>7}\n", "test", "statistic", "p", "lags", "reject");
    for t in &tests {
        text.push_str(&format!(
            "{:<16} {:>12.4} {:>10} {:>5} {:>7}\n",
            t.name,
            t.statistic,
            output::fmt_p(t.p_value),
            t.lags,
            if t.reject_at_5pct { "yes" } else { "no" }
        ));
    }
    for s in &skipped {
        text.push_str(&format!("skipped {s}\n"));
    }
    let mut out = Outputs::new(&a.output.out, run);
    out.json(&Report {
        command: "test",
        run,
        input: Some(p.info.clone()),
        warnings: skipped.clone(),
        result: TestSuite { tests, skipped },
    })
    .stage("report")?;
    out.finish(text, true).stage("write")
}

#[derive(Serialize)]
struct VolResult {
    window: usize,
    lambda: f64,
    effective_window_1pct: usize,
    rolling_last: Option<f64>,
    ewma_last: Option<f64>,
    correlation_last: Option<f64>,
}

fn volatility(a: &VolArgs) -> std::result::Result<Outcome, StageError> {
    check_output_dir(&a.output.out).stage("config")?;
    if !(a.lambda > 0.0 && a.lambda < 1.0) {
        return Err(Error::Config(format!("lambda must lie in (0,1), got {}", a.lambda))).stage("config");
    }
    let p = prepare(&a.data)?;
    let run = run_name(&a.output, "vol");
    let y = &p.target;
    let other = match &a.with {
        Some(name) => {
            let raw = p.dataset.get(name).stage("config")?;
            Some(apply_chain(raw, a.data.max_gap, &p.transforms).stage("transform")?.0)
        }
        None => None,
    };
    let rolling = vol::rolling_volatility(y, a.window, true).stage("vol")?;
    let ewma = vol::ewma_variance(y, a.lambda, EwmaInit::SampleVariance).stage("vol")?;
    let corr = match &other {
        Some(o) => Some(vol::ewma_correlation(y, o, a.lambda).stage("vol")?),
        None => None,
    };
    let effective = vol::effective_window(a.lambda, 0.01).stage("vol")?;

    let mut out = Outputs::new(&a.output.out, run);
    out.json(&Report {
        command: "vol",
        run,
        input: Some(p.info.clone()),
        warnings: vec![],
        result: VolResult {
            window: a.window,
            lambda: a.lambda,
            effective_window_1pct: effective,
            rolling_last: rolling.sigma.last().copied(),
            ewma_last: ewma.sigma.last().copied(),
            correlation_last: corr.as_ref().and_then(|c| c.values().last().copied()),
        },
    })
    .stage("report")?;
    out.plot("rolling", xy_csv(("date", "rolling_sigma"), rolling.dates.iter().zip(&rolling.sigma)));
    out.plot("ewma", xy_csv(("date", "ewma_sigma"), ewma.dates.iter().zip(&ewma.sigma)));
    if let Some(c) = &corr {
        out.plot("correlation", xy_csv(("date", "ewma_correlation"), c.dates().iter().zip(c.values())));
    }
    let text = format!(
        "rolling sigma (m={}, annualized) last={}\newma sigma (lambda={}) last={}\neffective window at 1%: {} days\n",
        a.window,
        fmt_opt(rolling.sigma.last().copied()),
        a.lambda,
        fmt_opt(ewma.sigma.last().copied()),
        effective
    );
    out.finish(text, true).stage("write")
}

fn parse_orders(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [p, q] => {
            let p = p.parse().map_err(|_| Error::Config(format!("bad P in '{s}'")))?;
            let q = q.parse().map_err(|_| Error::Config(format!("bad Q in '{s}'")))?;
            Ok((p, q))
        }
        _ => Err(Error::Config(format!("expected P,Q, got '{s}'"))),
    }
}

fn parse_dist(s: &str) -> Result<InnovationDist> {
    match s {
        "t" => Ok(InnovationDist::StudentT),
        other => other.parse(),
    }
}

fn parse_dummies(entries: &[String]) -> Result<Vec<(String, NaiveDate)>> {
    entries
        .iter()
        .filter(|s| !s.is_empty())
        .map(|e| {
            let (label, date) = e
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("dummy '{e}' is not label=YYYY-MM-DD")))?;
            let date = date
                .trim()
                .parse::<NaiveDate>()
                .map_err(|err| Error::Config(format!("dummy '{e}': {err}")))?;
            Ok((label.trim().to_string(), date))
        })
        .collect()
}

/// Mean and variance regressors aligned to the target, plus warnings.
fn build_regressors(
    r: &RegressorArgs,
    p: &Prepared,
    max_gap: usize,
) -> Result<(Vec<TimeSeries>, Vec<TimeSeries>, Vec<String>)> {
    let dummies = parse_dummies(&r.dummy)?;
    let dates = p.target.dates();
    let load = |name: &String| -> Result<TimeSeries> {
        let raw = p.dataset.get(name)?;
        series::impute_missing(raw, max_gap)?.align_to(dates)
    };
    let mut xreg = r.xreg.iter().filter(|s| !s.is_empty()).map(load).collect::<Result<Vec<_>>>()?;
    let mut vreg = r.vreg.iter().filter(|s| !s.is_empty()).map(load).collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    for (label, date) in dummies {
        let d = forecast::make_step_dummy(&label, dates, date)?;
        if d.after_sample {
            warnings.push(format!("dummy {label}: intervention {date} after the last observation; all zeros"));
        }
        if r.dummy_variance {
            vreg.push(d.series.clone());
        }
        xreg.push(d.series);
    }
    Ok((xreg, vreg, warnings))
}

fn model_spec(m: &ModelArgs, xreg: Vec<TimeSeries>, vreg: Vec<TimeSeries>) -> Result<ModelSpec> {
    let (p, q) = parse_orders(&m.garch)?;
    let family: VarianceFamily = m.family.parse()?;
    let dist = parse_dist(&m.dist)?;
    let mut mean = MeanSpec::arma(m.ar, m.ma).with_regressors(xreg);
    mean.include_constant = !m.no_constant;
    let spec = ModelSpec::new(mean, VarianceSpec::new(family, p, q).with_regressors(vreg), dist);
    spec.variance.validate()?;
    Ok(spec)
}

fn fit_options(e: &EstimationArgs) -> FitOptions {
    FitOptions {
        max_iterations: e.max_iter,
        restarts: e.restarts,
        seed: e.seed,
        ..FitOptions::default()
    }
}

#[derive(Serialize)]
struct CoefficientRow {
    name: String,
    estimate: f64,
    std_error: Option<f64>,
    z: Option<f64>,
    p_value: Option<f64>,
}

#[derive(Serialize)]
struct FitSummary {
    model: String,
    family: VarianceFamily,
    dist: InnovationDist,
    converged: bool,
    iterations: usize,
    n_obs: usize,
    n_params: usize,
    loglik: f64,
    aic: f64,
    bic: f64,
    hq: f64,
    r_squared: f64,
    adj_r_squared: f64,
    durbin_watson: f64,
    persistence: f64,
    half_life_days: Option<f64>,
    half_life_whole_days: Option<u64>,
    unconditional_sigma: Option<f64>,
    coefficients: Vec<CoefficientRow>,
    std_resid_arch_lm: Option<TestResult>,
    std_resid_ljung_box: Option<TestResult>,
}

fn fit_summary(f: &FitResult) -> FitSummary {
    let values = f.params.to_vec(&f.spec);
    let coefficients = f
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| CoefficientRow {
            name: name.clone(),
            estimate: values[i],
            std_error: f.std_errors[i],
            z: f.z_stats[i],
            p_value: f.p_values[i],
        })
        .collect();
    let z = estimation::standardized_residuals(f).ok();
    FitSummary {
        model: f.spec.label(),
        family: f.spec.variance.family,
        dist: f.spec.dist,
        converged: f.converged,
        iterations: f.iterations,
        n_obs: f.n_obs,
        n_params: f.n_params,
        loglik: f.loglik,
        aic: f.criteria.aic,
        bic: f.criteria.bic,
        hq: f.criteria.hq,
        r_squared: f.r_squared,
        adj_r_squared: f.adj_r_squared,
        durbin_watson: f.dw,
        persistence: f.persistence.persistence,
        half_life_days: f.persistence.half_life_days,
        half_life_whole_days: f.persistence.half_life_whole_days(),
        unconditional_sigma: f.persistence.unconditional_sigma,
        coefficients,
        std_resid_arch_lm: z
            .as_ref()
            .and_then(|z| stat_tests::arch_lm(z, estimation::COMPARE_ARCH_LAGS).ok()),
        std_resid_ljung_box: z.as_ref().and_then(|z| {
            stat_tests::ljung_box(z, 7, 0)
                .ok()
                .and_then(|v| v.last().cloned())
        }),
    }
}

fn fit_table(s: &FitSummary) -> String {
    let mut t = format!(
        "{}  converged={} iterations={}\n{:<14} {:>14} {:>12} {:>10} {:>8}\n",
        s.model, s.converged, s.iterations, "variable", "coefficient", "std.error", "z", "prob"
    );
    for c in &s.coefficients {
        t.push_str(&format!(
            "{:<14} {:>14.6} {:>12} {:>10} {:>8}\n",
            c.name,
            c.estimate,
            fmt_opt(c.std_error),
            fmt_opt(c.z),
            fmt_opt(c.p_value)
        ));
    }
    t.push_str(&format!(
        "log likelihood {:.4}  R2 {:.6}  adj R2 {:.6}  DW {:.4}\nAIC {:.6}  BIC {:.6}  HQ {:.6}\npersistence {:.4}  half-life {}  unconditional sigma {}\n",
        s.loglik,
        s.r_squared,
        s.adj_r_squared,
        s.durbin_watson,
        s.aic,
        s.bic,
        s.hq,
        s.persistence,
        fmt_opt(s.half_life_days),
        fmt_opt(s.unconditional_sigma)
    ));
    t
}

fn fit_plots(out: &mut Outputs, f: &FitResult) {
    let r = &f.residuals;
    out.plot("residuals", xy_csv(("date", "residual"), r.dates().iter().zip(r.values())));
    out.plot("sigma", xy_csv(("date", "sigma"), f.variance.dates.iter().zip(&f.variance.sigma)));
    if let Ok(z) = estimation::standardized_residuals(f) {
        out.plot("std_residuals", xy_csv(("date", "std_residual"), z.dates().iter().zip(z.values())));
    }
}

fn fit(a: &FitArgs) -> std::result::Result<Outcome, StageError> {
    check_output_dir(&a.output.out).stage("config")?;
    let p = prepare(&a.data)?;
    let (xreg, vreg, warnings) = build_regressors(&a.model.regressors, &p, a.data.max_gap).stage("config")?;
    let spec = model_spec(&a.model, xreg, vreg).stage("config")?;
    let run = run_name(&a.output, "fit");
    let f = estimation::fit(&p.target, &spec, &fit_options(&a.estimation)).stage("fit")?;
    let summary = fit_summary(&f);
    let text = fit_table(&summary);
    let mut out = Outputs::new(&a.output.out, run);
    out.json(&Report {
        command: "fit",
        run,
        input: Some(p.info.clone()),
        warnings,
        result: summary,
    })
    .stage("report")?;
    fit_plots(&mut out, &f);
    out.finish(text, f.converged).stage("write")
}

fn parse_compare_spec(s: &str, xreg: &[TimeSeries], vreg: &[TimeSeries]) -> Result<ModelSpec> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [r, m, p, q, family, dist] = parts.as_slice() else {
        return Err(Error::Config(format!("spec '{s}' is not R,M,P,Q,family,dist")));
    };
    let num = |v: &str| -> Result<usize> { v.parse().map_err(|_| Error::Config(format!("bad order '{v}' in '{s}'"))) };
    let args = ModelArgs {
        ar: num(r)?,
        ma: num(m)?,
        garch: format!("{p},{q}"),
        family: family.to_string(),
        dist: dist.to_string(),
        no_constant: false,
        regressors: RegressorArgs {
            xreg: vec![],
            vreg: vec![],
            dummy: vec![],
            dummy_variance: false,
        },
    };
    model_spec(&args, xreg.to_vec(), vreg.to_vec())
}

fn compare(a: &CompareArgs) -> std::result::Result<Outcome, StageError> {
    check_output_dir(&a.output.out).stage("config")?;
    let p = prepare(&a.data)?;
    let (xreg, vreg, warnings) = build_regressors(&a.regressors, &p, a.data.max_gap).stage("config")?;
    let specs = a
        .specs
        .iter()
        .map(|s| parse_compare_spec(s, &xreg, &vreg))
        .collect::<Result<Vec<_>>>()
        .stage("config")?;
    let run = run_name(&a.output, "compare");
    let table = estimation::compare(&p.target, &specs, &fit_options(&a.estimation)).stage("compare")?;

    let mut text = format!(
        "{:>4} {:<26} {:>9} {:>7} {:>10} {:>10} {:>10} {:>9} {:>7} {:>8}\n",
        "rank", "model", "R2", "DW", "AIC", "BIC", "HQ", "ARCH(7)", "p", "serial"
    );
    for r in &table.rows {
        text.push_str(&format!(
            "{:>4} {:<26} {:>9.4} {:>7.3} {:>10.5} {:>10.5} {:>10.5} {:>9.3} {:>7.3} {:>8}\n",
            r.rank.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            r.label,
            r.r_squared,
            r.dw,
            r.aic,
            r.bic,
            r.hq,
            r.arch_stat,
            r.arch_p,
            if r.serial_correlation_remains { "yes" } else { "no" }
        ));
        if let Some(e) = &r.error {
            text.push_str(&format!("     error: {e}\n"));
        }
    }
    let mut out = Outputs::new(&a.output.out, run);
    out.json(&Report {
        command: "compare",
        run,
        input: Some(p.info.clone()),
        warnings,
        result: &table,
    })
    .stage("report")?;
    out.plot(
        "aic",
        xy_csv(("spec", "aic"), table.rows.iter().map(|r| (r.index + 1, r.aic))),
    );
    let ok = table.best().is_some();
    out.finish(text, ok).stage("write")
}

#[derive(Serialize)]
struct ForecastResult {
    fit: FitSummary,
    variance_forecast: forecast::VarianceForecast,
    theil: Option<forecast::TheilDecomposition>,
}

fn forecast_cmd(a: &ForecastArgs) -> std::result::Result<Outcome, StageError> {
    check_output_dir(&a.output.out).stage("config")?;
    if a.horizon == 0 {
        return Err(Error::Config("horizon must be positive".into())).stage("config");
    }
    let p = prepare(&a.data)?;
    let (xreg, vreg, mut warnings) = build_regressors(&a.model.regressors, &p, a.data.max_gap).stage("config")?;
    let spec = model_spec(&a.model, xreg, vreg).stage("config")?;
    let run = run_name(&a.output, "forecast");
    let f = estimation::fit(&p.target, &spec, &fit_options(&a.estimation)).stage("fit")?;
    let origin = a
        .origin
        .unwrap_or_else(|| *f.residuals.dates().last().expect("non-empty"));
    let vf = forecast::forecast_variance(&f, origin, a.horizon, a.estimation.seed).stage("forecast")?;
    let in_sample = match forecast::in_sample_forecast(&f, &p.target) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("in-sample forecast skipped: {e}"));
            None
        }
    };
    let mut text = fit_table(&fit_summary(&f));
    text.push_str(&format!("variance forecast from {origin}:\n{:>4} {:>14}\n", "h", "sigma2"));
    for (h, v) in vf.path.iter().enumerate() {
        text.push_str(&format!("{:>4} {:>14.8}\n", h + 1, v));
    }
    text.push_str(&format!("unconditional variance {}\n", fmt_opt(vf.unconditional)));
    if let Some(r) = &in_sample {
        text.push_str(&format!(
            "Theil U {:.4}  bias {:.4}  variance {:.4}  covariance {:.4}\n",
            r.theil.theil_u, r.theil.bias_proportion, r.theil.variance_proportion, r.theil.covariance_proportion
        ));
    }
    let mut out = Outputs::new(&a.output.out, run);
    out.json(&Report {
        command: "forecast",
        run,
        input: Some(p.info.clone()),
        warnings,
        result: ForecastResult {
            fit: fit_summary(&f),
            variance_forecast: vf.clone(),
            theil: in_sample.as_ref().map(|r| r.theil.clone()),
        },
    })
    .stage("report")?;
    out.plot(
        "variance_forecast",
        xy_csv(("h", "sigma2"), vf.path.iter().enumerate().map(|(h, v)| (h + 1, v))),
    );
    if let Some(r) = &in_sample {
        out.plot(
            "fitted",
            xy_csv(("date", "fitted"), r.fitted.dates().iter().zip(r.fitted.values())),
        );
    }
    out.finish(text, f.converged).stage("write")
}

/// Default generating parameters, overridden by `--param`.
fn default_params(spec: &ModelSpec) -> ParamVector {
    let (p, q) = (spec.variance.p, spec.variance.q);
    let egarch = spec.variance.family == VarianceFamily::Egarch;
    ParamVector {
        constant: 0.0,
        ar: vec![0.0; spec.mean.ar],
        ma: vec![0.0; spec.mean.ma],
        beta: vec![0.0; spec.mean.regressors.len()],
        omega: if egarch { -0.5 } else { 0.0014 },
        garch: vec![if egarch { 0.9 } else { 0.787 } / p as f64; p],
        arch: vec![if egarch { 0.15 } else { 0.134 } / q.max(1) as f64; q],
        leverage: vec![0.0; spec.variance.n_leverage()],
        var_beta: vec![0.0; spec.variance.regressors.len()],
        nu: (spec.dist == InnovationDist::StudentT).then_some(8.0),
    }
}

fn apply_overrides(spec: &ModelSpec, base: ParamVector, overrides: &[String]) -> Result<ParamVector> {
    let names = ParamVector::names(spec);
    let mut v = base.to_vec(spec);
    for o in overrides.iter().filter(|s| !s.is_empty()) {
        let (name, value) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("param '{o}' is not name=value")))?;
        let i = names
            .iter()
            .position(|n| n == name.trim())
            .ok_or_else(|| Error::Config(format!("unknown parameter '{name}' (have: {})", names.join(", "))))?;
        v[i] = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("param '{o}': bad number")))?;
    }
    ParamVector::from_vec(spec, &v)
}

#[derive(Serialize)]
struct SimulateResult {
    model: String,
    n: usize,
    seed: u64,
    parameters: Vec<(String, f64)>,
    file: String,
}

fn simulate(a: &SimulateArgs) -> std::result::Result<Outcome, StageError> {
    check_output_dir(&a.output.out).stage("config")?;
    let r = &a.model.regressors;
    if !(r.xreg.is_empty() && r.vreg.is_empty() && r.dummy.is_empty()) {
        return Err(Error::Config("simulate does not take regressors".into())).stage("config");
    }
    let spec = model_spec(&a.model, vec![], vec![]).stage("config")?;
    let params = apply_overrides(&spec, default_params(&spec), &a.params).stage("config")?;
    params.validate(&spec).stage("config")?;
    let run = run_name(&a.output, "simulate");
    let sim = model::simulate(&params, &spec, a.n, a.seed).stage("simulate")?;

    let mut out = Outputs::new(&a.output.out, run);
    let mut csv = format!("date,{}\n", a.name);
    for (d, v) in sim.y.dates().iter().zip(sim.y.values()) {
        csv.push_str(&format!("{d},{v}\n"));
    }
    let file = out.data_file("simulated", csv);
    let parameters: Vec<(String, f64)> = ParamVector::names(&spec)
        .into_iter()
        .zip(params.to_vec(&spec))
        .collect();
    out.json(&Report {
        command: "simulate",
        run,
        input: None,
        warnings: vec![],
        result: SimulateResult {
            model: spec.label(),
            n: a.n,
            seed: a.seed,
            parameters,
            file: file.display().to_string(),
        },
    })
    .stage("report")?;
    let text = format!("simulated {} observations of {} to {}\n", a.n, spec.label(), file.display());
    out.finish(text, true).stage("write")
}
