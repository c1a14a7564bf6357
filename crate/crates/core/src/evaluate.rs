//! Model comparison: fit summaries, Diebold–Mariano, ENC-NEW and rolling DM.
//!
//! Errors are `e = target − fitted`. Tests are called in "richer vs restricted"
//! order, so `dm_test(e_m1, e_m0, ..)` is negative when M1 has the lower loss.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irdm::aic_approx;
use crate::stats;
use crate::timeseries::DatedSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    Squared,
    Absolute,
}

impl Loss {
    pub fn apply(self, e: f64) -> f64 {
        match self {
            Loss::Squared => e * e,
            Loss::Absolute => e.abs(),
        }
    }
}

/// In-sample fitted errors or expanding-window one-step forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMode {
    #[default]
    InSample,
    Expanding,
}

impl ErrorMode {
    pub fn tag(self) -> &'static str {
        match self {
            ErrorMode::InSample => "in-sample",
            ErrorMode::Expanding => "expanding",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestName {
    Dm,
    EncNew,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub name: TestName,
    pub statistic: f64,
    pub p_value: f64,
    pub t_obs: usize,
    /// Loss differential had zero variance.
    pub zero_variance: bool,
    /// p-value is a normal approximation to a non-standard null.
    pub approx: bool,
}

pub const MIN_DM_OBS: usize = 30;

pub fn default_bandwidth(t: usize) -> usize {
    (t as f64).cbrt().floor() as usize
}

/// Errors of `fitted` against `target` on the fitted dates.
pub fn forecast_errors(target: &DatedSeries, fitted: &DatedSeries) -> Result<DatedSeries> {
    let values = fitted
        .dates()
        .iter()
        .zip(fitted.values())
        .map(|(d, f)| {
            target
                .value_at(*d)
                .map(|t| t - f)
                .ok_or_else(|| Error::Input(format!("target has no value on {d}")))
        })
        .collect::<Result<Vec<_>>>()?;
    fitted.with_values(values)
}

fn check_pair(e0: &[f64], e1: &[f64]) -> Result<()> {
    if e0.len() != e1.len() {
        return Err(Error::Input("error series differ in length".into()));
    }
    if e0.iter().chain(e1).any(|v| !v.is_finite()) {
        return Err(Error::Input(
            "error series contain non-finite values".into(),
        ));
    }
    Ok(())
}

/// Diebold–Mariano test with Bartlett-kernel Newey–West variance.
///
/// A loss differential with zero variance is flagged. If its mean is also
/// zero the statistic is 0 with p = 1; a nonzero constant differential gives
/// a statistic of ±∞ with p = 0.
pub fn dm_test(e0: &[f64], e1: &[f64], loss: Loss, bandwidth: Option<usize>) -> Result<TestResult> {
    check_pair(e0, e1)?;
    let t = e0.len();
    if t < MIN_DM_OBS {
        return Err(Error::Input(format!(
            "DM test needs at least {MIN_DM_OBS} observations, got {t}"
        )));
    }
    let d: Vec<f64> = e0
        .iter()
        .zip(e1)
        .map(|(a, b)| loss.apply(*a) - loss.apply(*b))
        .collect();
    let mean = stats::mean(&d);
    let lrv = stats::newey_west_lrv(&d, bandwidth.unwrap_or_else(|| default_bandwidth(t)));
    let scale = mean.abs().max(d.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let degenerate = !(lrv > 1e-28 * scale * scale) || d.iter().all(|v| *v == d[0]);
    if degenerate {
        let (statistic, p_value) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        };
        return Ok(TestResult {
            name: TestName::Dm,
            statistic,
            p_value,
            t_obs: t,
            zero_variance: true,
            approx: false,
        });
    }
    let statistic = mean / (lrv / t as f64).sqrt();
    Ok(TestResult {
        name: TestName::Dm,
        statistic,
        p_value: stats::normal_two_sided_p(statistic),
        t_obs: t,
        zero_variance: false,
        approx: false,
    })
}

/// ENC-NEW = T·mean(e0(e0 − e1)) / mean(e1²), with a one-sided normal p-value.
pub fn enc_new(e_restricted: &[f64], e_unrestricted: &[f64]) -> Result<TestResult> {
    check_pair(e_restricted, e_unrestricted)?;
    let t = e_restricted.len();
    if t == 0 {
        return Err(Error::Input("empty error series".into()));
    }
    let c: Vec<f64> = e_restricted
        .iter()
        .zip(e_unrestricted)
        .map(|(a, b)| a * (a - b))
        .collect();
    let mse1 = e_unrestricted.iter().map(|v| v * v).sum::<f64>() / t as f64;
    if !(mse1 > 0.0) {
        return Err(Error::Degenerate(
            "unrestricted model has zero mean squared error".into(),
        ));
    }
    let statistic = t as f64 * stats::mean(&c) / mse1;
    Ok(TestResult {
        name: TestName::EncNew,
        statistic,
        p_value: 1.0 - stats::normal_cdf(statistic),
        t_obs: t,
        zero_variance: false,
        approx: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingPoint {
    pub date: NaiveDate,
    pub statistic: f64,
    pub zero_variance: bool,
}

pub const DM_BAND: f64 = 1.96;

/// DM statistic on each trailing window, keyed by the window's end date.
pub fn rolling_dm(
    e0: &DatedSeries,
    e1: &DatedSeries,
    window: usize,
    loss: Loss,
) -> Result<Vec<RollingPoint>> {
    if e0.dates() != e1.dates() {
        return Err(Error::Input("rolling DM needs aligned error series".into()));
    }
    let t = e0.len();
    if window > t || window < MIN_DM_OBS {
        return Err(Error::Input(format!(
            "rolling window {window} must lie in {MIN_DM_OBS}..={t}"
        )));
    }
    (window..=t)
        .map(|end| {
            let r = dm_test(
                &e0.values()[end - window..end],
                &e1.values()[end - window..end],
                loss,
                None,
            )?;
            Ok(RollingPoint {
                date: e0.dates()[end - 1],
                statistic: r.statistic,
                zero_variance: r.zero_variance,
            })
        })
        .collect()
}

pub fn improvement_pct(rmse_a: f64, rmse_b: f64) -> f64 {
    100.0 * (rmse_a - rmse_b) / rmse_a
}

/// One fitted model entering the comparison.
#[derive(Debug, Clone, Copy)]
pub struct ModelSummary<'a> {
    pub name: &'a str,
    pub fitted: &'a DatedSeries,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub country: String,
    pub model: String,
    pub rmse: f64,
    pub sse: f64,
    pub n: usize,
    pub aic_approx: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Improvement {
    pub country: String,
    pub comparison: String,
    pub pct: f64,
}

pub fn compare_models(
    country: &str,
    target: &DatedSeries,
    models: &[ModelSummary<'_>],
) -> Result<(Vec<ComparisonRow>, Vec<Improvement>)> {
    let Some(first) = models.first() else {
        return Err(Error::Input("no models to compare".into()));
    };
    if models
        .iter()
        .any(|m| m.fitted.dates() != first.fitted.dates())
    {
        return Err(Error::Input(format!(
            "{country}: models were fitted on different samples"
        )));
    }
    let mut rows = Vec::new();
    for m in models {
        let e = forecast_errors(target, m.fitted)?;
        let sse: f64 = e.values().iter().map(|v| v * v).sum();
        let n = e.len();
        rows.push(ComparisonRow {
            country: country.to_string(),
            model: m.name.to_string(),
            rmse: (sse / n as f64).sqrt(),
            sse,
            n,
            aic_approx: aic_approx(sse, n, m.k),
        });
    }
    let mut improvements = Vec::new();
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            improvements.push(Improvement {
                country: country.to_string(),
                comparison: format!("{} vs {}", rows[b].model, rows[a].model),
                pct: improvement_pct(rows[a].rmse, rows[b].rmse),
            });
        }
    }
    Ok((rows, improvements))
}

/// One-step expanding-window forecast errors of the linear model `y ~ cols`.
///
/// The forecast for row `t ≥ min_train` uses coefficients estimated on rows
/// `< t`; normal equations are accumulated incrementally.
pub fn expanding_window_errors(
    columns: &[&[f64]],
    y: &[f64],
    min_train: usize,
) -> Result<Vec<f64>> {
    let k = columns.len();
    let n = y.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Input(
            "regressor lengths differ from the response".into(),
        ));
    }
    if min_train < k || min_train >= n {
        return Err(Error::Input(format!(
            "training window {min_train} must lie in {k}..{n}"
        )));
    }
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    let add = |t: usize, xtx: &mut DMatrix<f64>, xty: &mut DVector<f64>| {
        for a in 0..k {
            xty[a] += columns[a][t] * y[t];
            for b in 0..k {
                xtx[(a, b)] += columns[a][t] * columns[b][t];
            }
        }
    };
    for t in 0..min_train {
        add(t, &mut xtx, &mut xty);
    }
    let mut out = Vec::with_capacity(n - min_train);
    for t in min_train..n {
        // pseudo-inverse tolerates columns that are still constant early on
        let beta = xtx
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Numeric(e.to_string()))?
            * &xty;
        let pred: f64 = (0..k).map(|a| beta[a] * columns[a][t]).sum();
        out.push(y[t] - pred);
        add(t, &mut xtx, &mut xty);
    }
    Ok(out)
}
