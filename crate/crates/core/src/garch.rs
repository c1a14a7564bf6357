//! EGARCH(1,1) and GJR-GARCH(1,1) with Student-t or GED innovations.
//!
//! The EGARCH recursion is taken literally as
//! `ln σ²_t = ω + α|z_{t−1}| + γ z_{t−1} + β ln σ²_{t−1}`: `α` loads on the
//! magnitude and `γ` on the signed standardized residual. Some packages use
//! the opposite labelling, so a negative `α` with positive `γ` here matches
//! their positive-`α` negative-`γ` output.
//!
//! Both filters start from the sample variance of the residuals and include
//! the first observation's density in the likelihood.

use serde::{Deserialize, Serialize};

use crate::dist::Innovation;
use crate::error::{Error, Result};
use crate::optimizer::{self, BoxedProblem, OptResult, Settings};
use crate::stats::{self, TestStat};
use crate::timeseries::DatedSeries;

/// Largest |ln σ²| the filters accept before declaring numeric failure.
pub const LOG_VARIANCE_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Egarch,
    Gjr,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::Egarch => "eGARCH",
            Family::Gjr => "gjrGARCH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MeanSpec {
    #[default]
    Zero,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GarchSpec {
    pub family: Family,
    pub distribution: Innovation,
    #[serde(default)]
    pub mean: MeanSpec,
}

impl GarchSpec {
    pub fn new(family: Family, distribution: Innovation) -> Self {
        Self {
            family,
            distribution,
            mean: MeanSpec::Zero,
        }
    }

    /// Number of estimated parameters: ω, α, β, γ, shape (+ μ).
    pub fn n_params(&self) -> usize {
        match self.mean {
            MeanSpec::Zero => 5,
            MeanSpec::Constant => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub shape: f64,
    pub mu: f64,
}

impl GarchParams {
    pub fn validate(&self, family: Family, dist: Innovation) -> Result<()> {
        let all = [
            self.omega, self.alpha, self.beta, self.gamma, self.shape, self.mu,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite GARCH parameter".into()));
        }
        dist.validate_shape(self.shape)?;
        match family {
            Family::Egarch => {
                if self.beta.abs() >= 1.0 {
                    return Err(Error::Parameter(format!(
                        "EGARCH requires |beta| < 1, got {}",
                        self.beta
                    )));
                }
            }
            Family::Gjr => {
                if self.omega <= 0.0 {
                    return Err(Error::Parameter("GJR requires omega > 0".into()));
                }
                if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.gamma < 0.0 {
                    return Err(Error::Parameter(
                        "GJR requires alpha >= 0, beta >= 0, alpha + gamma >= 0".into(),
                    ));
                }
                if self.persistence(family) >= 1.0 {
                    return Err(Error::Parameter(format!(
                        "GJR persistence {} must be below 1",
                        self.persistence(family)
                    )));
                }
            }
        }
        Ok(())
    }

    /// β for EGARCH; α + β + γ/2 for GJR (half the leverage term under symmetric innovations).
    pub fn persistence(&self, family: Family) -> f64 {
        match family {
            Family::Egarch => self.beta,
            Family::Gjr => gjr_persistence(self.alpha, self.beta, self.gamma),
        }
    }
}

pub fn gjr_persistence(alpha: f64, beta: f64, gamma: f64) -> f64 {
    alpha + beta + 0.5 * gamma
}

/// (−2·loglik + 2k) / n.
pub fn aic_norm(loglik: f64, k: usize, n: usize) -> f64 {
    (-2.0 * loglik + 2.0 * k as f64) / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub sigma: Vec<f64>,
    pub loglik: f64,
}

fn check_inputs(returns: &[f64]) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::Input("empty return series".into()));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::Input("non-finite return".into()));
    }
    let v = stats::variance(returns);
    if !(v > 0.0) {
        return Err(Error::Degenerate(
            "returns have zero sample variance".into(),
        ));
    }
    Ok(v)
}

pub fn egarch_filter(returns: &[f64], params: &GarchParams, dist: Innovation) -> Result<Filtered> {
    params.validate(Family::Egarch, dist)?;
    let var0 = check_inputs(returns)?;
    let density = dist.log_density_parts(params.shape);
    let mut sigma: Vec<f64> = Vec::with_capacity(returns.len());
    let mut log_var = var0.ln();
    let mut loglik = 0.0;
    for (t, r) in returns.iter().enumerate() {
        if t > 0 {
            let prev = returns[t - 1] - params.mu;
            let z = prev / sigma[t - 1];
            log_var =
                params.omega + params.alpha * z.abs() + params.gamma * z + params.beta * log_var;
        }
        if !log_var.is_finite() || log_var.abs() > LOG_VARIANCE_LIMIT {
            return Err(Error::Numeric(format!("ln sigma^2 = {log_var} at t = {t}")));
        }
        let s = (0.5 * log_var).exp();
        let z = (r - params.mu) / s;
        loglik += density.eval(z) - 0.5 * log_var;
        sigma.push(s);
    }
    Ok(Filtered { sigma, loglik })
}

pub fn gjr_filter(returns: &[f64], params: &GarchParams, dist: Innovation) -> Result<Filtered> {
    params.validate(Family::Gjr, dist)?;
    let var0 = check_inputs(returns)?;
    let density = dist.log_density_parts(params.shape);
    let mut sigma: Vec<f64> = Vec::with_capacity(returns.len());
    let mut var = var0;
    let mut loglik = 0.0;
    for (t, r) in returns.iter().enumerate() {
        if t > 0 {
            let e = returns[t - 1] - params.mu;
            let leverage = if e < 0.0 { params.gamma } else { 0.0 };
            var = params.omega + (params.alpha + leverage) * e * e + params.beta * var;
        }
        if !(var > 0.0) || !var.is_finite() || var.ln().abs() > LOG_VARIANCE_LIMIT {
            return Err(Error::Numeric(format!("sigma^2 = {var} at t = {t}")));
        }
        let s = var.sqrt();
        let z = (r - params.mu) / s;
        loglik += density.eval(z) - 0.5 * var.ln();
        sigma.push(s);
    }
    Ok(Filtered { sigma, loglik })
}

pub fn filter(returns: &[f64], params: &GarchParams, spec: &GarchSpec) -> Result<Filtered> {
    match spec.family {
        Family::Egarch => egarch_filter(returns, params, spec.distribution),
        Family::Gjr => gjr_filter(returns, params, spec.distribution),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticReport {
    pub lags: usize,
    pub ljung_box_z: TestStat,
    pub ljung_box_z2: TestStat,
    pub arch_lm: TestStat,
}

#[derive(Debug, Clone)]
pub struct GarchFit {
    pub spec: GarchSpec,
    pub params: GarchParams,
    pub sigma: DatedSeries,
    pub z: DatedSeries,
    pub loglik: f64,
    pub start_loglik: f64,
    pub aic_norm: f64,
    pub persistence: f64,
    pub diagnostics: DiagnosticReport,
    pub optimization: OptResult,
    pub warnings: Vec<String>,
}

impl GarchFit {
    pub fn n(&self) -> usize {
        self.sigma.len()
    }
}

pub fn diagnostics(z: &[f64], lags: usize) -> Result<DiagnosticReport> {
    if lags == 0 || lags >= z.len() {
        return Err(Error::Input(format!(
            "diagnostic lags {lags} must be in 1..{}",
            z.len()
        )));
    }
    let sq: Vec<f64> = z.iter().map(|v| v * v).collect();
    Ok(DiagnosticReport {
        lags,
        ljung_box_z: stats::ljung_box(z, lags)?,
        ljung_box_z2: stats::ljung_box(&sq, lags)?,
        arch_lm: stats::arch_lm(z, lags)?,
    })
}

pub const MIN_OBSERVATIONS: usize = 250;
pub const DIAGNOSTIC_LAGS: usize = 10;

/// Optimizer coordinates.
/// EGARCH: [ω, α, γ, β, shape, (μ)].
/// GJR: [ω, β, a⁺/2, a⁻/2, shape, (μ)] with a⁺ = α, a⁻ = α + γ, so that
/// β + a⁺/2 + a⁻/2 = α + β + γ/2 sits inside a simplex group capped at one.
fn encode(spec: &GarchSpec, p: &GarchParams) -> Vec<f64> {
    let mut x = match spec.family {
        Family::Egarch => vec![p.omega, p.alpha, p.gamma, p.beta, p.shape],
        Family::Gjr => vec![
            p.omega,
            p.beta,
            0.5 * p.alpha,
            0.5 * (p.alpha + p.gamma),
            p.shape,
        ],
    };
    if spec.mean == MeanSpec::Constant {
        x.push(p.mu);
    }
    x
}

fn decode(spec: &GarchSpec, x: &[f64]) -> GarchParams {
    let mu = if spec.mean == MeanSpec::Constant {
        x[5]
    } else {
        0.0
    };
    match spec.family {
        Family::Egarch => GarchParams {
            omega: x[0],
            alpha: x[1],
            gamma: x[2],
            beta: x[3],
            shape: x[4],
            mu,
        },
        Family::Gjr => GarchParams {
            omega: x[0],
            beta: x[1],
            alpha: 2.0 * x[2],
            gamma: 2.0 * (x[3] - x[2]),
            shape: x[4],
            mu,
        },
    }
}

fn shape_bounds(dist: Innovation) -> (f64, f64) {
    match dist {
        Innovation::StudentT => (2.05, 200.0),
        Innovation::Ged => (0.2, 10.0),
    }
}

fn build_problem<'a>(returns: &'a [f64], spec: GarchSpec) -> Result<BoxedProblem<'a>> {
    let n = spec.n_params();
    let objective = move |x: &[f64]| -> f64 {
        let p = decode(&spec, x);
        match filter(returns, &p, &spec) {
            Ok(f) => -f.loglik,
            Err(_) => f64::INFINITY,
        }
    };
    let (slo, shi) = shape_bounds(spec.distribution);
    let (mut lower, mut upper) = match spec.family {
        Family::Egarch => (
            vec![-5.0, -3.0, -3.0, -0.9999, slo],
            vec![5.0, 3.0, 3.0, 0.9999, shi],
        ),
        Family::Gjr => (
            vec![1e-10, 0.0, 0.0, 0.0, slo],
            vec![f64::INFINITY, 1.0, 1.0, 1.0, shi],
        ),
    };
    if spec.mean == MeanSpec::Constant {
        lower.push(f64::NEG_INFINITY);
        upper.push(f64::INFINITY);
    }
    let mut problem = BoxedProblem::new(n, objective).with_bounds(lower, upper)?;
    if spec.family == Family::Gjr {
        problem = problem.with_simplex(vec![1, 2, 3], 0.9999)?;
    }
    Ok(problem)
}

/// Documented default start followed by four fixed perturbations.
pub fn default_starts(spec: &GarchSpec, returns: &[f64]) -> Vec<GarchParams> {
    let var = stats::variance(returns);
    let mu = if spec.mean == MeanSpec::Constant {
        stats::mean(returns)
    } else {
        0.0
    };
    let (shape0, shapes) = match spec.distribution {
        Innovation::StudentT => (8.0, [6.0, 12.0, 5.0, 20.0]),
        Innovation::Ged => (1.5, [1.2, 1.8, 1.0, 2.0]),
    };
    match spec.family {
        Family::Egarch => {
            let base = GarchParams {
                omega: 0.0,
                alpha: 0.05,
                gamma: 0.1,
                beta: 0.9,
                shape: shape0,
                mu,
            };
            let mut v = vec![base];
            let tweaks = [
                (0.02, 0.10, 0.05, 0.95),
                (-0.02, -0.05, 0.15, 0.80),
                (0.0, 0.0, -0.05, 0.97),
                (0.05, 0.15, 0.20, 0.70),
            ];
            for ((omega, alpha, gamma, beta), shape) in tweaks.into_iter().zip(shapes) {
                v.push(GarchParams {
                    omega,
                    alpha,
                    gamma,
                    beta,
                    shape,
                    mu,
                });
            }
            v
        }
        Family::Gjr => {
            let base = GarchParams {
                omega: 0.05 * var,
                alpha: 0.05,
                gamma: 0.05,
                beta: 0.85,
                shape: shape0,
                mu,
            };
            let mut v = vec![base];
            let tweaks = [
                (0.02, 0.03, 0.10, 0.90),
                (0.10, 0.08, 0.02, 0.80),
                (0.03, 0.02, 0.05, 0.93),
                (0.20, 0.10, 0.15, 0.70),
            ];
            for ((w, alpha, gamma, beta), shape) in tweaks.into_iter().zip(shapes) {
                v.push(GarchParams {
                    omega: w * var,
                    alpha,
                    gamma,
                    beta,
                    shape,
                    mu,
                });
            }
            v
        }
    }
}

pub fn fit_garch(returns: &DatedSeries, spec: GarchSpec) -> Result<GarchFit> {
    fit_garch_with(returns, spec, &Settings::default())
}

pub fn fit_garch_with(
    returns: &DatedSeries,
    spec: GarchSpec,
    settings: &Settings,
) -> Result<GarchFit> {
    let r = returns.values();
    if r.len() < MIN_OBSERVATIONS {
        return Err(Error::Input(format!(
            "GARCH fit needs at least {MIN_OBSERVATIONS} observations, got {}",
            r.len()
        )));
    }
    let mut warnings = Vec::new();
    if r.len() < 1000 {
        warnings.push(format!(
            "only {} observations; estimates may be unstable",
            r.len()
        ));
    }
    check_inputs(r)?;
    let problem = build_problem(r, spec)?;
    let starts: Vec<Vec<f64>> = default_starts(&spec, r)
        .iter()
        .map(|p| encode(&spec, p))
        .collect();
    let start_loglik = -problem.evaluate(&starts[0]);

    let mut best: Option<OptResult> = None;
    let mut any_converged = false;
    for s in &starts {
        let res = optimizer::minimize(&problem, s, settings)?;
        any_converged |= res.converged;
        if best.as_ref().is_none_or(|b| res.value < b.value) {
            best = Some(res);
        }
    }
    let best = best.expect("at least one start");
    if !any_converged || best.value >= optimizer::PENALTY {
        return Err(Error::NonConvergence {
            context: format!("{} {} fit", spec.family.label(), spec.distribution.label()),
            best_value: best.value,
            best_point: decode(&spec, &best.argmin).as_vec(),
        });
    }
    if !best.converged {
        warnings.push("best start hit the evaluation budget before converging".into());
    }
    let params = decode(&spec, &best.argmin);
    let filtered = filter(r, &params, &spec)?;
    let z: Vec<f64> = r
        .iter()
        .zip(&filtered.sigma)
        .map(|(x, s)| (x - params.mu) / s)
        .collect();
    let diag = diagnostics(&z, DIAGNOSTIC_LAGS)?;
    let persistence = params.persistence(spec.family);
    Ok(GarchFit {
        spec,
        params,
        sigma: returns.with_values(filtered.sigma)?,
        z: returns.with_values(z)?,
        loglik: filtered.loglik,
        start_loglik,
        aic_norm: aic_norm(filtered.loglik, spec.n_params(), r.len()),
        persistence,
        diagnostics: diag,
        optimization: best,
        warnings,
    })
}

impl GarchParams {
    pub fn as_vec(&self) -> Vec<f64> {
        vec![
            self.omega, self.alpha, self.beta, self.gamma, self.shape, self.mu,
        ]
    }
}

/// Simulate a GJR-GARCH(1,1) path with unit-variance innovations.
pub fn simulate_gjr<R: rand::Rng + ?Sized>(
    params: &GarchParams,
    dist: Innovation,
    n: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    params.validate(Family::Gjr, dist)?;
    let pers = params.persistence(Family::Gjr);
    let mut var = params.omega / (1.0 - pers);
    let mut out = Vec::with_capacity(n);
    let mut prev = 0.0f64;
    for t in 0..n + burn_in {
        if t > 0 {
            let leverage = if prev < 0.0 { params.gamma } else { 0.0 };
            var = params.omega + (params.alpha + leverage) * prev * prev + params.beta * var;
        }
        let e = var.sqrt() * dist.sample(params.shape, rng);
        if t >= burn_in {
            out.push(params.mu + e);
        }
        prev = e;
    }
    Ok(out)
}
