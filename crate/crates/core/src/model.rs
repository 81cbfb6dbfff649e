//! ARMAX conditional mean with GARCH, EGARCH or GJR conditional variance.
//!
//! Mean equation:
//!
//! ```text
//! y_t = c + Σ φ_i y_{t-i} + Σ θ_j ε_{t-j} + Σ β_k X(t,k) + ε_t
//! ```
//!
//! The first `max(R, M)` observations form the conditioning sample: their
//! residuals are set to zero and they are excluded from the likelihood.
//! The variance recursion starts on the first post-conditioning residual,
//! with pre-sample σ² and ε² both set to the initial variance `v0`.
//!
//! Variance equations (innovation ε_t = σ_t z_t):
//!
//! ```text
//! garch   σ_t² = k + Σ G_i σ²_{t-i} + Σ A_j ε²_{t-j} + Σ γ_m V(t,m)
//! gjr     σ_t² = garch + Σ L_j S_{t-j} ε²_{t-j},   S = 1 if ε < 0
//! egarch  ln σ_t² = k + Σ G_i ln σ²_{t-i} + Σ A_j (|z_{t-j}| - E|z|)
//!                 + Σ L_j z_{t-j} + Σ γ_m V(t,m)
//! ```

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::{daily_dates, sample_variance, synthetic_start, TimeSeries};
use crate::special::ln_gamma;
use crate::vol::VolPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceFamily {
    Garch,
    Egarch,
    Gjr,
}

impl VarianceFamily {
    pub fn has_leverage(self) -> bool {
        !matches!(self, VarianceFamily::Garch)
    }

    pub fn label(self) -> &'static str {
        match self {
            VarianceFamily::Garch => "garch",
            VarianceFamily::Egarch => "egarch",
            VarianceFamily::Gjr => "gjr",
        }
    }
}

impl std::str::FromStr for VarianceFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "garch" => Ok(VarianceFamily::Garch),
            "egarch" => Ok(VarianceFamily::Egarch),
            "gjr" => Ok(VarianceFamily::Gjr),
            other => Err(Error::Config(format!("unknown variance family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InnovationDist {
    Normal,
    /// Student's t standardized to unit variance; ν is estimated.
    StudentT,
}

impl std::str::FromStr for InnovationDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" | "n" => Ok(InnovationDist::Normal),
            "t" | "student_t" | "studentt" => Ok(InnovationDist::StudentT),
            other => Err(Error::Config(format!("unknown distribution '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanSpec {
    pub ar: usize,
    pub ma: usize,
    pub include_constant: bool,
    pub regressors: Vec<TimeSeries>,
}

impl MeanSpec {
    pub fn constant_only() -> Self {
        Self::arma(0, 0)
    }

    pub fn arma(ar: usize, ma: usize) -> Self {
        Self {
            ar,
            ma,
            include_constant: true,
            regressors: Vec::new(),
        }
    }

    pub fn with_regressors(mut self, regressors: Vec<TimeSeries>) -> Self {
        self.regressors = regressors;
        self
    }

    pub fn conditioning(&self) -> usize {
        self.ar.max(self.ma)
    }

    /// Parameters of the mean equation.
    pub fn n_params(&self) -> usize {
        usize::from(self.include_constant) + self.ar + self.ma + self.regressors.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSpec {
    pub family: VarianceFamily,
    /// GARCH order (lagged variances).
    pub p: usize,
    /// ARCH order (lagged shocks).
    pub q: usize,
    pub regressors: Vec<TimeSeries>,
}

impl VarianceSpec {
    pub fn new(family: VarianceFamily, p: usize, q: usize) -> Self {
        Self {
            family,
            p,
            q,
            regressors: Vec::new(),
        }
    }

    pub fn garch11() -> Self {
        Self::new(VarianceFamily::Garch, 1, 1)
    }

    pub fn with_regressors(mut self, regressors: Vec<TimeSeries>) -> Self {
        self.regressors = regressors;
        self
    }

    pub fn n_leverage(&self) -> usize {
        if self.family.has_leverage() {
            self.q
        } else {
            0
        }
    }

    pub fn n_params(&self) -> usize {
        1 + self.p + self.q + self.n_leverage() + self.regressors.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 {
            return Err(Error::SpecMismatch(format!(
                "variance orders must be at least 1, got P={} Q={}",
                self.p, self.q
            )));
        }
        Ok(())
    }
}

/// Mean, variance and distribution of one candidate model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub mean: MeanSpec,
    pub variance: VarianceSpec,
    pub dist: InnovationDist,
}

impl ModelSpec {
    pub fn new(mean: MeanSpec, variance: VarianceSpec, dist: InnovationDist) -> Self {
        Self { mean, variance, dist }
    }

    pub fn n_params(&self) -> usize {
        self.mean.n_params()
            + self.variance.n_params()
            + usize::from(self.dist == InnovationDist::StudentT)
    }

    /// Short label such as `ARMAX(1,0,2)/GJR(1,1)-t`.
    pub fn label(&self) -> String {
        let mean = if self.mean.regressors.is_empty() {
            format!("ARMA({},{})", self.mean.ar, self.mean.ma)
        } else {
            format!(
                "ARMAX({},{},{})",
                self.mean.ar,
                self.mean.ma,
                self.mean.regressors.len()
            )
        };
        let dist = match self.dist {
            InnovationDist::Normal => "n",
            InnovationDist::StudentT => "t",
        };
        format!(
            "{mean}/{}({},{})-{dist}",
            self.variance.family.label().to_uppercase(),
            self.variance.p,
            self.variance.q
        )
    }
}

/// Model coefficients in their natural parameterization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamVector {
    pub constant: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub beta: Vec<f64>,
    /// Variance intercept k (log-variance intercept for egarch).
    pub omega: f64,
    /// G_1..G_P.
    pub garch: Vec<f64>,
    /// A_1..A_Q.
    pub arch: Vec<f64>,
    /// L_1..L_Q, empty for symmetric garch.
    pub leverage: Vec<f64>,
    pub var_beta: Vec<f64>,
    pub nu: Option<f64>,
}

impl ParamVector {
    /// GARCH(1,1) with a constant mean.
    pub fn garch11(constant: f64, omega: f64, arch: f64, garch: f64) -> Self {
        Self {
            constant,
            ar: Vec::new(),
            ma: Vec::new(),
            beta: Vec::new(),
            omega,
            garch: vec![garch],
            arch: vec![arch],
            leverage: Vec::new(),
            var_beta: Vec::new(),
            nu: None,
        }
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = Some(nu);
        self
    }

    pub fn with_leverage(mut self, leverage: Vec<f64>) -> Self {
        self.leverage = leverage;
        self
    }

    /// Parameter names in flattening order.
    pub fn names(spec: &ModelSpec) -> Vec<String> {
        let mut names = Vec::with_capacity(spec.n_params());
        if spec.mean.include_constant {
            names.push("c".to_string());
        }
        names.extend((1..=spec.mean.ar).map(|i| format!("ar({i})")));
        names.extend((1..=spec.mean.ma).map(|j| format!("ma({j})")));
        names.extend(spec.mean.regressors.iter().map(|r| r.name().to_string()));
        names.push("k".to_string());
        names.extend((1..=spec.variance.p).map(|i| format!("G({i})")));
        names.extend((1..=spec.variance.q).map(|j| format!("A({j})")));
        names.extend((1..=spec.variance.n_leverage()).map(|j| format!("L({j})")));
        names.extend(spec.variance.regressors.iter().map(|r| format!("var:{}", r.name())));
        if spec.dist == InnovationDist::StudentT {
            names.push("nu".to_string());
        }
        names
    }

    pub fn to_vec(&self, spec: &ModelSpec) -> Vec<f64> {
        let mut v = Vec::with_capacity(spec.n_params());
        if spec.mean.include_constant {
            v.push(self.constant);
        }
        v.extend(&self.ar);
        v.extend(&self.ma);
        v.extend(&self.beta);
        v.push(self.omega);
        v.extend(&self.garch);
        v.extend(&self.arch);
        v.extend(&self.leverage);
        v.extend(&self.var_beta);
        if spec.dist == InnovationDist::StudentT {
            v.push(self.nu.unwrap_or(f64::NAN));
        }
        v
    }

    pub fn from_vec(spec: &ModelSpec, v: &[f64]) -> Result<Self> {
        if v.len() != spec.n_params() {
            return Err(Error::SpecMismatch(format!(
                "{} values for {} parameters",
                v.len(),
                spec.n_params()
            )));
        }
        let mut it = v.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { (&mut it).take(n).collect() };
        let constant = if spec.mean.include_constant { take(1)[0] } else { 0.0 };
        let ar = take(spec.mean.ar);
        let ma = take(spec.mean.ma);
        let beta = take(spec.mean.regressors.len());
        let omega = take(1)[0];
        let garch = take(spec.variance.p);
        let arch = take(spec.variance.q);
        let leverage = take(spec.variance.n_leverage());
        let var_beta = take(spec.variance.regressors.len());
        let nu = if spec.dist == InnovationDist::StudentT {
            Some(take(1)[0])
        } else {
            None
        };
        Ok(Self {
            constant,
            ar,
            ma,
            beta,
            omega,
            garch,
            arch,
            leverage,
            var_beta,
            nu,
        })
    }

    fn check_dims(&self, spec: &ModelSpec) -> Result<()> {
        let mismatch = |what: &str, got: usize, want: usize| {
            Err(Error::SpecMismatch(format!("{what}: {got} coefficients, spec needs {want}")))
        };
        if !spec.mean.include_constant && self.constant != 0.0 {
            return Err(Error::SpecMismatch("constant given but spec excludes it".into()));
        }
        let checks = [
            ("ar", self.ar.len(), spec.mean.ar),
            ("ma", self.ma.len(), spec.mean.ma),
            ("mean regressors", self.beta.len(), spec.mean.regressors.len()),
            ("garch", self.garch.len(), spec.variance.p),
            ("arch", self.arch.len(), spec.variance.q),
            ("leverage", self.leverage.len(), spec.variance.n_leverage()),
            ("variance regressors", self.var_beta.len(), spec.variance.regressors.len()),
        ];
        for (what, got, want) in checks {
            if got != want {
                return mismatch(what, got, want);
            }
        }
        match (spec.dist, self.nu) {
            (InnovationDist::StudentT, None) => {
                return Err(Error::SpecMismatch("student_t needs nu".into()))
            }
            (InnovationDist::Normal, Some(_)) => {
                return Err(Error::SpecMismatch("nu given for a normal model".into()))
            }
            _ => {}
        }
        Ok(())
    }

    /// Dimension and family constraints.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        spec.variance.validate()?;
        self.check_dims(spec)?;
        if let Some(nu) = self.nu {
            if !(nu > 2.0) {
                return Err(Error::DomainError(format!("nu must exceed 2, got {nu}")));
            }
        }
        match spec.variance.family {
            VarianceFamily::Garch | VarianceFamily::Gjr => {
                if !(self.omega > 0.0) {
                    return Err(Error::DomainError(format!("k must be positive, got {}", self.omega)));
                }
                if self.arch.iter().chain(&self.garch).any(|v| !(*v >= 0.0)) {
                    return Err(Error::DomainError("A and G coefficients must be nonnegative".into()));
                }
                if self
                    .arch
                    .iter()
                    .zip(&self.leverage)
                    .any(|(a, l)| !(a + l >= 0.0))
                {
                    return Err(Error::DomainError("gjr needs A + L >= 0".into()));
                }
            }
            VarianceFamily::Egarch => {
                let all = [self.omega]
                    .into_iter()
                    .chain(self.garch.iter().copied())
                    .chain(self.arch.iter().copied())
                    .chain(self.leverage.iter().copied());
                if all.into_iter().any(|v| !v.is_finite()) {
                    return Err(Error::DomainError("egarch coefficients must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Decay rate of variance shocks: A+G for garch, A+G+L/2 for gjr
    /// (symmetric innovations), ΣG for the egarch log-variance.
    pub fn persistence(&self, family: VarianceFamily) -> f64 {
        let g: f64 = self.garch.iter().sum();
        let a: f64 = self.arch.iter().sum();
        let l: f64 = self.leverage.iter().sum();
        match family {
            VarianceFamily::Garch => a + g,
            VarianceFamily::Gjr => a + g + 0.5 * l,
            VarianceFamily::Egarch => g,
        }
    }
}

/// E|z| of a unit-variance innovation.
pub fn expected_abs_z(dist: InnovationDist, nu: Option<f64>) -> f64 {
    match dist {
        InnovationDist::Normal => (2.0 / std::f64::consts::PI).sqrt(),
        InnovationDist::StudentT => {
            let nu = nu.unwrap_or(f64::INFINITY);
            if !nu.is_finite() {
                return (2.0 / std::f64::consts::PI).sqrt();
            }
            ((nu - 2.0) / std::f64::consts::PI).sqrt()
                * (ln_gamma((nu - 1.0) / 2.0) - ln_gamma(nu / 2.0)).exp()
        }
    }
}

fn check_aligned(target: &[NaiveDate], regs: &[TimeSeries], what: &str) -> Result<Vec<Vec<f64>>> {
    regs.iter()
        .map(|r| {
            let a = r.align_to(target).map_err(|e| match e {
                Error::AlignmentError(m) => Error::AlignmentError(format!("{what}: {m}")),
                other => other,
            })?;
            Ok(a.complete_values()?.to_vec())
        })
        .collect()
}

/// Data and regressors aligned once for repeated likelihood evaluation.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dates: Vec<NaiveDate>,
    pub y: Vec<f64>,
    /// Mean regressors over the full sample.
    pub xreg: Vec<Vec<f64>>,
    /// Variance regressors over the post-conditioning sample.
    pub vreg: Vec<Vec<f64>>,
    pub conditioning: usize,
}

impl PreparedData {
    pub fn new(y: &TimeSeries, spec: &ModelSpec) -> Result<Self> {
        spec.variance.validate()?;
        let values = y.complete_values()?.to_vec();
        let s = spec.mean.conditioning();
        if values.len() <= s + 1 {
            return Err(Error::InsufficientData {
                needed: s + 2,
                have: values.len(),
            });
        }
        let xreg = check_aligned(y.dates(), &spec.mean.regressors, "mean regressor")?;
        let vreg = check_aligned(&y.dates()[s..], &spec.variance.regressors, "variance regressor")?;
        Ok(Self {
            dates: y.dates().to_vec(),
            y: values,
            xreg,
            vreg,
            conditioning: s,
        })
    }

    pub fn n_eff(&self) -> usize {
        self.y.len() - self.conditioning
    }
}

/// Conditional mean of y_t given lags and regressors.
fn mean_at(p: &ParamVector, y: &[f64], eps: &[f64], xreg: &[Vec<f64>], t: usize) -> f64 {
    let mut m = p.constant;
    for (i, phi) in p.ar.iter().enumerate() {
        m += phi * y[t - 1 - i];
    }
    for (j, theta) in p.ma.iter().enumerate() {
        m += theta * eps[t - 1 - j];
    }
    for (b, x) in p.beta.iter().zip(xreg) {
        m += b * x[t];
    }
    m
}

pub(crate) fn residuals_raw(p: &ParamVector, y: &[f64], xreg: &[Vec<f64>], conditioning: usize) -> Vec<f64> {
    let mut eps = vec![0.0; y.len()];
    for t in conditioning..y.len() {
        eps[t] = y[t] - mean_at(p, y, &eps, xreg, t);
    }
    eps
}

/// Conditional variance stepper shared by filtering, simulation and
/// forecasting so all three use identical arithmetic.
#[derive(Debug, Clone)]
pub(crate) struct VarianceRecursion<'a> {
    p: &'a ParamVector,
    family: VarianceFamily,
    e_abs_z: f64,
    v0: f64,
    /// History of σ² (or ln σ²) and shocks, most recent last.
    h: Vec<f64>,
    e: Vec<f64>,
}

impl<'a> VarianceRecursion<'a> {
    pub(crate) fn new(p: &'a ParamVector, family: VarianceFamily, dist: InnovationDist, v0: f64) -> Self {
        Self {
            p,
            family,
            e_abs_z: expected_abs_z(dist, p.nu),
            v0,
            h: Vec::new(),
            e: Vec::new(),
        }
    }

    /// σ² at the next step; `vreg_term` is Σ γ_m V(t,m).
    pub(crate) fn next_variance(&self, vreg_term: f64) -> f64 {
        let p = self.p;
        let t = self.h.len();
        let lag_h = |i: usize| if i <= t { self.h[t - i] } else { self.v0 };
        match self.family {
            VarianceFamily::Garch | VarianceFamily::Gjr => {
                let mut h = p.omega;
                for (i, g) in p.garch.iter().enumerate() {
                    h += g * lag_h(i + 1);
                }
                for (j, a) in p.arch.iter().enumerate() {
                    let lag = j + 1;
                    let (e2, neg) = if lag <= t {
                        let e = self.e[t - lag];
                        (e * e, if e < 0.0 { 1.0 } else { 0.0 })
                    } else {
                        (self.v0, 0.5)
                    };
                    h += a * e2;
                    if let Some(l) = p.leverage.get(j) {
                        h += l * neg * e2;
                    }
                }
                h + vreg_term
            }
            VarianceFamily::Egarch => {
                let ln_v0 = self.v0.ln();
                let mut lh = p.omega;
                for (i, g) in p.garch.iter().enumerate() {
                    let lag = i + 1;
                    lh += g * if lag <= t { self.h[t - lag] } else { ln_v0 };
                }
                for (j, a) in p.arch.iter().enumerate() {
                    let lag = j + 1;
                    if lag <= t {
                        let z = self.e[t - lag] / (0.5 * self.h[t - lag]).exp();
                        lh += a * (z.abs() - self.e_abs_z);
                        if let Some(l) = p.leverage.get(j) {
                            lh += l * z;
                        }
                    }
                }
                (lh + vreg_term).exp()
            }
        }
    }

    /// Record σ² and the realized shock for this step.
    pub(crate) fn push(&mut self, variance: f64, shock: f64) {
        let stored = match self.family {
            VarianceFamily::Egarch => variance.ln(),
            _ => variance,
        };
        self.h.push(stored);
        self.e.push(shock);
    }
}

fn vreg_term(p: &ParamVector, vreg: &[Vec<f64>], t: usize) -> f64 {
    p.var_beta.iter().zip(vreg).map(|(g, v)| g * v[t]).sum()
}

fn check_variance(h: f64, t: usize) -> Result<()> {
    if h.is_nan() || h.is_infinite() {
        Err(Error::NonFinite)
    } else if h <= 0.0 {
        Err(Error::VarianceNonPositive(t))
    } else {
        Ok(())
    }
}

pub(crate) fn variance_raw(
    p: &ParamVector,
    e: &[f64],
    vreg: &[Vec<f64>],
    family: VarianceFamily,
    dist: InnovationDist,
    v0: f64,
) -> Result<Vec<f64>> {
    let mut rec = VarianceRecursion::new(p, family, dist, v0);
    let mut out = Vec::with_capacity(e.len());
    for (t, &shock) in e.iter().enumerate() {
        let h = rec.next_variance(vreg_term(p, vreg, t));
        check_variance(h, t)?;
        rec.push(h, shock);
        out.push(h);
    }
    Ok(out)
}

/// Initial variance used by the recursion.
pub fn initial_variance(e: &[f64]) -> f64 {
    if e.len() >= 2 {
        let v = sample_variance(e);
        if v > 0.0 {
            return v;
        }
    }
    e.iter().map(|x| x * x).sum::<f64>() / e.len().max(1) as f64
}

/// Per-observation log densities of shocks `e` with variances `h`.
pub(crate) fn log_density_sum(e: &[f64], h: &[f64], dist: InnovationDist, nu: Option<f64>) -> f64 {
    const LN_2PI: f64 = 1.837_877_066_409_345_5;
    match dist {
        InnovationDist::Normal => e
            .iter()
            .zip(h)
            .map(|(e, h)| -0.5 * (LN_2PI + h.ln() + e * e / h))
            .sum(),
        InnovationDist::StudentT => {
            let nu = nu.unwrap_or(f64::NAN);
            let c = ln_gamma(0.5 * (nu + 1.0))
                - ln_gamma(0.5 * nu)
                - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln();
            let w = 0.5 * (nu + 1.0);
            e.iter()
                .zip(h)
                .map(|(e, h)| c - 0.5 * h.ln() - w * (e * e / ((nu - 2.0) * h)).ln_1p())
                .sum()
        }
    }
}

/// Residuals, variance path and log-likelihood without constraint checks.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub residuals: Vec<f64>,
    pub variance: Vec<f64>,
    pub loglik: f64,
}

pub(crate) fn evaluate(p: &ParamVector, data: &PreparedData, spec: &ModelSpec) -> Result<Evaluation> {
    let s = data.conditioning;
    let residuals = residuals_raw(p, &data.y, &data.xreg, s);
    let e = &residuals[s..];
    let v0 = initial_variance(e);
    let variance = variance_raw(p, e, &data.vreg, spec.variance.family, spec.dist, v0)?;
    let loglik = log_density_sum(e, &variance, spec.dist, p.nu);
    if !loglik.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(Evaluation {
        residuals,
        variance,
        loglik,
    })
}

/// ε_t for the full sample; conditioning observations are zero.
pub fn mean_residuals(params: &ParamVector, y: &TimeSeries, spec: &MeanSpec) -> Result<TimeSeries> {
    let values = y.complete_values()?;
    let dims = [
        ("ar", params.ar.len(), spec.ar),
        ("ma", params.ma.len(), spec.ma),
        ("mean regressors", params.beta.len(), spec.regressors.len()),
    ];
    for (what, got, want) in dims {
        if got != want {
            return Err(Error::SpecMismatch(format!("{what}: {got} coefficients, spec needs {want}")));
        }
    }
    let s = spec.conditioning();
    if values.len() <= s {
        return Err(Error::InsufficientData {
            needed: s + 1,
            have: values.len(),
        });
    }
    let xreg = check_aligned(y.dates(), &spec.regressors, "mean regressor")?;
    y.with_values(residuals_raw(params, values, &xreg, s))
}

/// Conditional volatility over `eps` (post-conditioning residuals), with
/// σ₀² the sample variance of `eps`.
pub fn variance_path(
    params: &ParamVector,
    eps: &TimeSeries,
    spec: &VarianceSpec,
    dist: InnovationDist,
) -> Result<VolPath> {
    let v0 = initial_variance(eps.complete_values()?);
    variance_path_with_init(params, eps, spec, dist, v0)
}

pub fn variance_path_with_init(
    params: &ParamVector,
    eps: &TimeSeries,
    spec: &VarianceSpec,
    dist: InnovationDist,
    v0: f64,
) -> Result<VolPath> {
    spec.validate()?;
    let e = eps.complete_values()?;
    let dims = [
        ("garch", params.garch.len(), spec.p),
        ("arch", params.arch.len(), spec.q),
        ("leverage", params.leverage.len(), spec.n_leverage()),
        ("variance regressors", params.var_beta.len(), spec.regressors.len()),
    ];
    for (what, got, want) in dims {
        if got != want {
            return Err(Error::SpecMismatch(format!("{what}: {got} coefficients, spec needs {want}")));
        }
    }
    if !(v0 > 0.0) {
        return Err(Error::DomainError(format!("initial variance must be positive, got {v0}")));
    }
    let vreg = check_aligned(eps.dates(), &spec.regressors, "variance regressor")?;
    let h = variance_raw(params, e, &vreg, spec.family, dist, v0)?;
    Ok(VolPath {
        dates: eps.dates().to_vec(),
        sigma: h.into_iter().map(f64::sqrt).collect(),
        params: vec![
            ("k".into(), params.omega),
            ("persistence".into(), params.persistence(spec.family)),
        ],
    })
}

/// Conditional log-likelihood over the post-conditioning sample.
pub fn log_likelihood(params: &ParamVector, y: &TimeSeries, spec: &ModelSpec) -> Result<f64> {
    params.validate(spec)?;
    let data = PreparedData::new(y, spec)?;
    Ok(evaluate(params, &data, spec)?.loglik)
}

/// Output of [`simulate`].
#[derive(Debug, Clone)]
pub struct Simulation {
    pub y: TimeSeries,
    /// Generating innovations, zero over the conditioning sample.
    pub innovations: Vec<f64>,
    /// σ² over the post-conditioning sample.
    pub variance: Vec<f64>,
}

/// Draw of a unit-variance innovation.
pub(crate) struct InnovationSampler {
    kind: InnovationDist,
    t: Option<(StudentT<f64>, f64)>,
}

impl InnovationSampler {
    pub(crate) fn new(dist: InnovationDist, nu: Option<f64>) -> Result<Self> {
        let t = match dist {
            InnovationDist::Normal => None,
            InnovationDist::StudentT => {
                let nu = nu.ok_or_else(|| Error::SpecMismatch("student_t needs nu".into()))?;
                let d = StudentT::new(nu).map_err(|e| Error::DomainError(format!("student_t: {e}")))?;
                Some((d, ((nu - 2.0) / nu).sqrt()))
            }
        };
        Ok(Self { kind: dist, t })
    }

    pub(crate) fn draw<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        match (self.kind, &self.t) {
            (InnovationDist::StudentT, Some((d, scale))) => scale * d.sample(rng),
            _ => StandardNormal.sample(rng),
        }
    }
}

/// Starting variance for simulation: the stationary level where one exists.
fn simulation_start_variance(p: &ParamVector, family: VarianceFamily, v_term: f64) -> f64 {
    let g: f64 = p.garch.iter().sum();
    match family {
        VarianceFamily::Egarch => {
            if g < 1.0 {
                ((p.omega + v_term) / (1.0 - g)).exp()
            } else {
                (p.omega + v_term).exp()
            }
        }
        _ => {
            let pers = p.persistence(family);
            let level = p.omega + v_term;
            if pers < 1.0 {
                level / (1.0 - pers)
            } else if g < 1.0 {
                level / (1.0 - g)
            } else {
                level
            }
        }
    }
}

/// Simulate `n` observations. Dates come from the regressors when the spec
/// has any (their first `n` dates), otherwise consecutive days from 2000-01-01.
/// The conditioning sample is filled with the deterministic mean.
pub fn simulate(params: &ParamVector, spec: &ModelSpec, n: usize, seed: u64) -> Result<Simulation> {
    params.validate(spec)?;
    let s = spec.mean.conditioning();
    let min_n = s.max(spec.variance.p).max(spec.variance.q) + 1;
    if n < min_n {
        return Err(Error::InsufficientData { needed: min_n, have: n });
    }
    let all_regs: Vec<&TimeSeries> = spec
        .mean
        .regressors
        .iter()
        .chain(&spec.variance.regressors)
        .collect();
    let dates = match all_regs.first() {
        Some(r) => {
            if r.len() < n {
                return Err(Error::SpecMismatch(format!(
                    "regressor '{}' covers {} of {n} simulated periods",
                    r.name(),
                    r.len()
                )));
            }
            r.dates()[..n].to_vec()
        }
        None => daily_dates(synthetic_start(), n),
    };
    let xreg = check_aligned(&dates, &spec.mean.regressors, "mean regressor")?;
    let vreg = check_aligned(&dates[s..], &spec.variance.regressors, "variance regressor")?;

    let sampler = InnovationSampler::new(spec.dist, params.nu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v0 = simulation_start_variance(params, spec.variance.family, vreg_term(params, &vreg, 0));
    if !(v0 > 0.0 && v0.is_finite()) {
        return Err(Error::DomainError(format!("cannot start simulation from variance {v0}")));
    }

    let mut y = vec![0.0; n];
    let mut eps = vec![0.0; n];
    let phi_sum: f64 = params.ar.iter().sum();
    for t in 0..s {
        let level = params.constant
            + params.beta.iter().zip(&xreg).map(|(b, x)| b * x[t]).sum::<f64>();
        y[t] = if phi_sum.abs() < 1.0 { level / (1.0 - phi_sum) } else { level };
    }
    let mut rec = VarianceRecursion::new(params, spec.variance.family, spec.dist, v0);
    let mut variance = Vec::with_capacity(n - s);
    for t in s..n {
        let h = rec.next_variance(vreg_term(params, &vreg, t - s));
        check_variance(h, t - s)?;
        let e = h.sqrt() * sampler.draw(&mut rng);
        rec.push(h, e);
        variance.push(h);
        eps[t] = e;
        y[t] = mean_at(params, &y, &eps, &xreg, t) + e;
    }
    Ok(Simulation {
        y: TimeSeries::new("simulated", dates, y)?,
        innovations: eps,
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn garch_spec(dist: InnovationDist) -> ModelSpec {
        ModelSpec::new(MeanSpec::constant_only(), VarianceSpec::garch11(), dist)
    }

    fn ts(v: Vec<f64>) -> TimeSeries {
        TimeSeries::from_values("e", v)
    }

    #[test]
    fn baseline_mean_residuals() {
        let y = ts(vec![1.0, 2.0, 4.0, 5.0]);
        let p = ParamVector::garch11(3.0, 0.1, 0.1, 0.8);
        let e = mean_residuals(&p, &y, &MeanSpec::constant_only()).unwrap();
        assert_eq!(e.values(), &[-2.0, -1.0, 1.0, 2.0]);
    }

    #[test]
    fn unit_root_on_constant_has_zero_residuals() {
        let y = ts(vec![7.0; 6]);
        let mut p = ParamVector::garch11(0.0, 0.1, 0.1, 0.8);
        p.ar = vec![1.0];
        let e = mean_residuals(&p, &y, &MeanSpec::arma(1, 0)).unwrap();
        assert!(e.values()[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mean_dimension_mismatch() {
        let p = ParamVector::garch11(0.0, 0.1, 0.1, 0.8);
        assert!(matches!(
            mean_residuals(&p, &ts(vec![1.0; 5]), &MeanSpec::arma(1, 0)),
            Err(Error::SpecMismatch(_))
        ));
    }

    #[test]
    fn simulation_inverts_through_mean_residuals() {
        let mut spec = garch_spec(InnovationDist::StudentT);
        spec.mean = MeanSpec::arma(2, 1);
        let mut p = ParamVector::garch11(0.02, 0.0014, 0.134, 0.787).with_nu(8.0);
        p.ar = vec![0.5, 0.2];
        p.ma = vec![0.3];
        let sim = simulate(&p, &spec, 1000, 3).unwrap();
        let e = mean_residuals(&p, &sim.y, &spec.mean).unwrap();
        for t in spec.mean.conditioning()..1000 {
            assert!((e.values()[t] - sim.innovations[t]).abs() < 1e-10);
        }
        // reconstruct y from residuals
        let xreg: Vec<Vec<f64>> = Vec::new();
        for t in 2..1000 {
            let rebuilt = mean_at(&p, sim.y.values(), e.values(), &xreg, t) + e.values()[t];
            assert!((rebuilt - sim.y.values()[t]).abs() <= 4.0 * f64::EPSILON * sim.y.values()[t].abs().max(1.0));
        }
        // variance path on the recovered residuals matches the generator when
        // started from the same level
        let eps = ts(e.values()[2..].to_vec());
        let v0 = simulation_start_variance(&p, VarianceFamily::Garch, 0.0);
        let path = variance_path_with_init(&p, &eps, &spec.variance, spec.dist, v0).unwrap();
        for (a, b) in path.variance().iter().zip(&sim.variance) {
            assert!((a - b).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn zero_shocks_converge_to_fixed_point() {
        let p = ParamVector::garch11(0.0, 0.0014, 0.134, 0.787);
        let e = ts(vec![0.0; 400]);
        let path = variance_path_with_init(&p, &e, &VarianceSpec::garch11(), InnovationDist::Normal, 0.0177).unwrap();
        let h = path.variance();
        let fixed: f64 = 0.0014 / (1.0 - 0.787);
        assert!((fixed - 0.00657).abs() < 1e-5);
        // geometric approach with ratio G after the first step
        for t in 2..50 {
            let r = (h[t] - fixed) / (h[t - 1] - fixed);
            assert!((r - 0.787).abs() < 1e-9);
        }
        assert!((h[399] - fixed).abs() < 1e-15);
    }

    #[test]
    fn gjr_without_leverage_equals_garch() {
        let sim = simulate(&ParamVector::garch11(0.0, 0.0014, 0.134, 0.787), &garch_spec(InnovationDist::Normal), 500, 1).unwrap();
        let e = ts(sim.innovations.clone());
        let g = variance_path(&ParamVector::garch11(0.0, 0.0014, 0.134, 0.787), &e, &VarianceSpec::garch11(), InnovationDist::Normal).unwrap();
        let pj = ParamVector::garch11(0.0, 0.0014, 0.134, 0.787).with_leverage(vec![0.0]);
        let j = variance_path(&pj, &e, &VarianceSpec::new(VarianceFamily::Gjr, 1, 1), InnovationDist::Normal).unwrap();
        assert_eq!(g.sigma, j.sigma);
    }

    #[test]
    fn gjr_bad_news_adds_leverage_term() {
        let pj = ParamVector::garch11(0.0, 0.001, 0.1, 0.8).with_leverage(vec![0.25]);
        let spec = VarianceSpec::new(VarianceFamily::Gjr, 1, 1);
        let good = variance_path_with_init(&pj, &ts(vec![0.2, 0.3, 0.0]), &spec, InnovationDist::Normal, 0.01).unwrap();
        let bad = variance_path_with_init(&pj, &ts(vec![0.2, -0.3, 0.0]), &spec, InnovationDist::Normal, 0.01).unwrap();
        let diff = bad.variance()[2] - good.variance()[2];
        assert!((diff - 0.25 * 0.09).abs() < 1e-15);
    }

    #[test]
    fn egarch_abs_z_constants() {
        assert!((expected_abs_z(InnovationDist::Normal, None) - 0.797_884_560_802_865_4).abs() < 1e-15);
        // t converges to the normal constant
        let big = expected_abs_z(InnovationDist::StudentT, Some(1e7));
        assert!((big - 0.797_884_56).abs() < 1e-6);
        // nu = 3: √(1/π)·Γ(1)/Γ(1.5) = 2/π
        let three = expected_abs_z(InnovationDist::StudentT, Some(3.0));
        assert!((three - 2.0 / std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn egarch_symmetric_without_leverage() {
        let spec = VarianceSpec::new(VarianceFamily::Egarch, 1, 1);
        let mut p = ParamVector::garch11(0.0, -0.5, 0.2, 0.9);
        p.leverage = vec![0.0];
        let sim = simulate(&ParamVector::garch11(0.0, 0.001, 0.1, 0.85), &garch_spec(InnovationDist::Normal), 300, 5).unwrap();
        let e = ts(sim.innovations.clone());
        let neg = ts(sim.innovations.iter().map(|v| -v).collect());
        let a = variance_path(&p, &e, &spec, InnovationDist::Normal).unwrap();
        let b = variance_path(&p, &neg, &spec, InnovationDist::Normal).unwrap();
        assert_eq!(a.sigma, b.sigma);
    }

    #[test]
    fn variance_regressor_can_go_negative() {
        let mut p = ParamVector::garch11(0.0, 0.001, 0.1, 0.8);
        p.var_beta = vec![-1.0];
        let e = ts(vec![0.01; 5]);
        let spec = VarianceSpec::garch11().with_regressors(vec![ts(vec![1.0; 5]).renamed("d")]);
        assert!(matches!(
            variance_path(&p, &e, &spec, InnovationDist::Normal),
            Err(Error::VarianceNonPositive(0))
        ));
    }

    #[test]
    fn normal_loglik_expectation() {
        let sim = simulate(&ParamVector::garch11(0.0, 1.0, 0.0, 0.0), &garch_spec(InnovationDist::Normal), 1000, 9).unwrap();
        let e = &sim.innovations;
        let ll = log_density_sum(e, &vec![1.0; e.len()], InnovationDist::Normal, None);
        let per_obs = ll / 1000.0;
        assert!((per_obs + 1.418_938_533).abs() < 0.05, "{per_obs}");
    }

    #[test]
    fn student_t_converges_to_normal() {
        let sim = simulate(&ParamVector::garch11(0.0, 1.0, 0.0, 0.0), &garch_spec(InnovationDist::Normal), 100, 2).unwrap();
        let e = &sim.innovations;
        let h = vec![1.3; 100];
        let n = log_density_sum(e, &h, InnovationDist::Normal, None);
        let t = log_density_sum(e, &h, InnovationDist::StudentT, Some(1e6));
        assert!((n - t).abs() < 1e-3, "{}", n - t);
    }

    #[test]
    fn scale_change_shifts_loglik() {
        let e: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let h: Vec<f64> = (0..50).map(|i| 0.5 + 0.01 * i as f64).collect();
        let base = log_density_sum(&e, &h, InnovationDist::Normal, None);
        let e2: Vec<f64> = e.iter().map(|v| v * 2f64.sqrt()).collect();
        let h2: Vec<f64> = h.iter().map(|v| 2.0 * v).collect();
        let scaled = log_density_sum(&e2, &h2, InnovationDist::Normal, None);
        assert!((scaled - base + 25.0 * 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn constant_variance_simulation() {
        let p = ParamVector::garch11(0.5, 0.04, 0.0, 0.0);
        let sim = simulate(&p, &garch_spec(InnovationDist::Normal), 100_000, 4).unwrap();
        let v = sample_variance(sim.y.values());
        assert!((v / 0.04 - 1.0).abs() < 0.03);
    }

    #[test]
    fn garch_simulation_has_fat_tails() {
        let p = ParamVector::garch11(0.0, 0.0014, 0.134, 0.787);
        let sim = simulate(&p, &garch_spec(InnovationDist::Normal), 20_000, 6).unwrap();
        let k = crate::series::summary_stats(&ts(sim.innovations.clone())).unwrap().kurtosis;
        assert!(k > 3.0, "{k}");
    }

    #[test]
    fn simulation_is_deterministic() {
        let p = ParamVector::garch11(0.0, 0.0014, 0.134, 0.787).with_nu(8.0);
        let spec = garch_spec(InnovationDist::StudentT);
        let a = simulate(&p, &spec, 200, 11).unwrap();
        let b = simulate(&p, &spec, 200, 11).unwrap();
        assert_eq!(a.y, b.y);
        let c = simulate(&p, &spec, 200, 12).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn param_vector_round_trip_and_names() {
        let mut spec = ModelSpec::new(
            MeanSpec::arma(1, 1).with_regressors(vec![ts(vec![0.0; 3]).renamed("load")]),
            VarianceSpec::new(VarianceFamily::Gjr, 1, 1),
            InnovationDist::StudentT,
        );
        spec.variance.regressors = vec![ts(vec![0.0; 3]).renamed("rmr1")];
        let names = ParamVector::names(&spec);
        assert_eq!(
            names,
            ["c", "ar(1)", "ma(1)", "load", "k", "G(1)", "A(1)", "L(1)", "var:rmr1", "nu"]
        );
        let v: Vec<f64> = (0..names.len()).map(|i| i as f64 + 0.5).collect();
        let p = ParamVector::from_vec(&spec, &v).unwrap();
        assert_eq!(p.to_vec(&spec), v);
        assert_eq!(spec.label(), "ARMAX(1,1,1)/GJR(1,1)-t");
    }

    #[test]
    fn validate_constraints() {
        let spec = garch_spec(InnovationDist::Normal);
        assert!(ParamVector::garch11(0.0, 0.0, 0.1, 0.8).validate(&spec).is_err());
        assert!(ParamVector::garch11(0.0, 0.1, -0.1, 0.8).validate(&spec).is_err());
        assert!(ParamVector::garch11(0.0, 0.1, 0.1, 0.8).with_nu(5.0).validate(&spec).is_err());
        let t = garch_spec(InnovationDist::StudentT);
        assert!(ParamVector::garch11(0.0, 0.1, 0.1, 0.8).with_nu(2.0).validate(&t).is_err());
        let gjr = ModelSpec::new(MeanSpec::constant_only(), VarianceSpec::new(VarianceFamily::Gjr, 1, 1), InnovationDist::Normal);
        assert!(ParamVector::garch11(0.0, 0.1, 0.1, 0.8).with_leverage(vec![-0.2]).validate(&gjr).is_err());
        assert!(ParamVector::garch11(0.0, 0.1, 0.1, 0.8).with_leverage(vec![-0.05]).validate(&gjr).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn garch_variance_positive(seed in 0u64..1000, k in 1e-5f64..1.0, a in 0.0f64..0.5, g in 0.0f64..0.95) {
                let p = ParamVector::garch11(0.0, k, a, g);
                let e: Vec<f64> = simulate(&ParamVector::garch11(0.0, 0.01, 0.1, 0.8), &garch_spec(InnovationDist::Normal), 200, seed)
                    .unwrap()
                    .innovations;
                let path = variance_path(&p, &ts(e), &VarianceSpec::garch11(), InnovationDist::Normal).unwrap();
                prop_assert!(path.sigma.iter().all(|s| *s > 0.0));
            }
        }
    }
}
