//! Institutional response dynamics model.
//!
//! The latent state follows `R̂_t = ρ R̂_{t−1} + θ1 ΔP_t + θ2 ΔI_t` and enters a
//! linear volatility equation
//! `σ_t = b0 + b1 σ_{t−1} + b2 r²_{t−1} + ψ C_t + γ1 R̂_t`.
//!
//! Because `γ1 R̂` is unchanged when θ is scaled by `c` and γ1 by `1/c`, the
//! state is normalized with θ1 = 1 (θ2 = 1 when the sample has no policy
//! events). The remaining state parameters are profiled out: a grid over
//! (ρ, θ) is scored by the OLS residual sum of squares of the volatility
//! equation, and the grid winner is polished by the bounded optimizer.
//!
//! Regressions always use rows `t ≥ 1` so that the baseline, this model and
//! the network extension share one sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, OlsFit};
use crate::optimizer::{self, BoxedProblem, Settings};
use crate::shocks::ShockSet;
use crate::timeseries::DatedSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrdmStateParams {
    pub rho: f64,
    pub theta1: f64,
    pub theta2: f64,
}

impl IrdmStateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < 1.0) || !self.theta1.is_finite() || !self.theta2.is_finite() {
            return Err(Error::Parameter(format!(
                "invalid state parameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// Which state loading is pinned to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Theta1,
    Theta2,
}

/// Runs the state recursion with `r0` as the pre-sample value, so the first
/// entry is `ρ r0 + θ1 ΔP_0 + θ2 ΔI_0`.
pub fn state_filter(
    delta_p: &[f64],
    delta_i: &[f64],
    params: &IrdmStateParams,
    r0: f64,
) -> Result<Vec<f64>> {
    params.validate()?;
    if delta_p.len() != delta_i.len() {
        return Err(Error::Input(
            "policy and information shocks differ in length".into(),
        ));
    }
    let mut out = Vec::with_capacity(delta_p.len());
    let mut prev = r0;
    for (p, i) in delta_p.iter().zip(delta_i) {
        prev = params.rho * prev + params.theta1 * p + params.theta2 * i;
        out.push(prev);
    }
    Ok(out)
}

pub fn state_series(
    delta_p: &DatedSeries,
    delta_i: &DatedSeries,
    params: &IrdmStateParams,
    r0: f64,
) -> Result<DatedSeries> {
    if delta_p.dates() != delta_i.dates() {
        return Err(Error::Input("shock series are not aligned".into()));
    }
    delta_p.with_values(state_filter(
        delta_p.values(),
        delta_i.values(),
        params,
        r0,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrdmOptions {
    pub rho_grid: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub refine: bool,
    /// Half-widths of the refinement box around the grid winner.
    pub refine_rho: f64,
    pub refine_theta: f64,
    pub r0: f64,
}

impl Default for IrdmOptions {
    fn default() -> Self {
        Self {
            rho_grid: (0..20).map(|i| 0.80 + 0.01 * i as f64).collect(),
            theta_grid: (0..=20).map(|i| 0.1 * i as f64).collect(),
            refine: true,
            refine_rho: 0.02,
            refine_theta: 0.2,
            r0: 0.0,
        }
    }
}

pub(crate) const BASE_NAMES: [&str; 4] = ["intercept", "sigma_lag", "r2_lag", "crisis"];

/// Response σ_t and the baseline columns [1, σ_{t−1}, r²_{t−1}, C_t] over t ≥ 1.
pub fn base_design(
    target: &[f64],
    returns: &[f64],
    crisis: Option<&[f64]>,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = target.len();
    let y = target[1..].to_vec();
    let mut cols = vec![
        vec![1.0; n - 1],
        target[..n - 1].to_vec(),
        returns[..n - 1].iter().map(|r| r * r).collect(),
    ];
    if let Some(c) = crisis {
        cols.push(c[1..].to_vec());
    }
    (y, cols)
}

pub(crate) fn check_aligned(series: &[(&str, &DatedSeries)]) -> Result<()> {
    let (first_name, first) = series[0];
    if first.len() < 3 {
        return Err(Error::Input(format!(
            "{first_name} has fewer than 3 observations"
        )));
    }
    for (name, s) in &series[1..] {
        if s.dates() != first.dates() {
            return Err(Error::Input(format!(
                "{name} is not aligned with {first_name}"
            )));
        }
    }
    for (name, s) in series {
        if s.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("{name} contains non-finite values")));
        }
    }
    Ok(())
}

/// Result of profiling the state parameters out of an OLS volatility equation.
#[derive(Debug, Clone)]
pub(crate) struct Profiled {
    pub params: IrdmStateParams,
    pub state: Vec<f64>,
    pub ols: OlsFit,
    pub grid_sse: f64,
}

pub(crate) struct ProfileProblem<'a> {
    pub y: &'a [f64],
    /// Columns placed before the own-state column.
    pub pre: &'a [Vec<f64>],
    /// Columns placed after it.
    pub post: &'a [Vec<f64>],
    pub delta_p: &'a [f64],
    pub delta_i: &'a [f64],
    pub normalization: Normalization,
    pub r0: f64,
}

impl ProfileProblem<'_> {
    fn params(&self, rho: f64, theta: f64) -> IrdmStateParams {
        match self.normalization {
            Normalization::Theta1 => IrdmStateParams {
                rho,
                theta1: 1.0,
                theta2: theta,
            },
            Normalization::Theta2 => IrdmStateParams {
                rho,
                theta1: theta,
                theta2: 1.0,
            },
        }
    }

    fn free_theta(&self, p: &IrdmStateParams) -> f64 {
        match self.normalization {
            Normalization::Theta1 => p.theta2,
            Normalization::Theta2 => p.theta1,
        }
    }

    fn fit_at(&self, params: &IrdmStateParams) -> Result<(Vec<f64>, OlsFit)> {
        let state = state_filter(self.delta_p, self.delta_i, params, self.r0)?;
        let mut cols: Vec<&[f64]> = self.pre.iter().map(|c| c.as_slice()).collect();
        cols.push(&state[1..]);
        cols.extend(self.post.iter().map(|c| c.as_slice()));
        let ols = linalg::ols(&cols, self.y)?;
        Ok((state, ols))
    }

    fn sse_at(&self, params: &IrdmStateParams) -> f64 {
        match self.fit_at(params) {
            Ok((_, f)) => f.sse,
            Err(_) => f64::INFINITY,
        }
    }

    pub fn solve(&self, options: &IrdmOptions, warm: Option<IrdmStateParams>) -> Result<Profiled> {
        if options.rho_grid.is_empty() || options.theta_grid.is_empty() {
            return Err(Error::Input("empty profile grid".into()));
        }
        if options.rho_grid.iter().any(|r| !(r.abs() < 1.0)) {
            return Err(Error::Input(
                "profile grid for rho must lie inside (-1, 1)".into(),
            ));
        }
        let points: Vec<(f64, f64)> = options
            .rho_grid
            .iter()
            .flat_map(|&r| options.theta_grid.iter().map(move |&t| (r, t)))
            .collect();
        let scores: Vec<f64> = points
            .par_iter()
            .map(|&(r, t)| self.sse_at(&self.params(r, t)))
            .collect();
        let mut best_idx = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s < scores[best_idx] {
                best_idx = i;
            }
        }
        if !scores[best_idx].is_finite() {
            return Err(Error::Numeric(
                "profile objective is non-finite on the whole grid".into(),
            ));
        }
        let grid_sse = scores[best_idx];
        let (r_hat, t_hat) = points[best_idx];
        let mut best = self.params(r_hat, t_hat);
        let mut best_sse = grid_sse;

        if options.refine {
            let lower = vec![
                (r_hat - options.refine_rho).max(-0.999),
                t_hat - options.refine_theta,
            ];
            let upper = vec![
                (r_hat + options.refine_rho).min(0.999),
                t_hat + options.refine_theta,
            ];
            let problem = BoxedProblem::new(2, |x: &[f64]| self.sse_at(&self.params(x[0], x[1])))
                .with_bounds(lower, upper)?;
            let settings = Settings {
                max_evals: 2_000,
                initial_step: 0.5,
                ..Settings::default()
            };
            let res = optimizer::minimize(&problem, &[r_hat, t_hat], &settings)?;
            if res.value < best_sse {
                best = self.params(res.argmin[0], res.argmin[1]);
                best_sse = res.value;
            }
        }
        if let Some(w) = warm {
            let w = self.params(w.rho, self.free_theta(&w));
            let s = self.sse_at(&w);
            if s < best_sse {
                best = w;
            }
        }
        let (state, ols) = self.fit_at(&best)?;
        Ok(Profiled {
            params: best,
            state,
            ols,
            grid_sse,
        })
    }
}

pub(crate) fn normalization_for(delta_p: &[f64]) -> Normalization {
    if delta_p.iter().any(|v| *v != 0.0) {
        Normalization::Theta1
    } else {
        Normalization::Theta2
    }
}

pub(crate) fn dropped_warnings(fit: &OlsFit, names: &[&str]) -> Vec<String> {
    fit.dropped
        .iter()
        .map(|&j| {
            format!(
                "column {} is collinear with earlier regressors; coefficient set to 0",
                names[j]
            )
        })
        .collect()
}

/// n ln(SSE/n) + 2k.
pub fn aic_approx(sse: f64, n: usize, k: usize) -> f64 {
    let n_f = n as f64;
    n_f * (sse / n_f).ln() + 2.0 * k as f64
}

#[derive(Debug, Clone)]
pub struct IrdmFit {
    pub state_params: IrdmStateParams,
    pub normalization: Normalization,
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub psi: f64,
    pub gamma1: f64,
    /// Fitted σ on dates t ≥ 1.
    pub fitted: DatedSeries,
    pub state: DatedSeries,
    pub sse: f64,
    pub rmse: f64,
    pub n: usize,
    pub aic_approx: f64,
    /// Best SSE on the grid, before refinement.
    pub grid_sse: f64,
    pub ols: OlsFit,
    pub warnings: Vec<String>,
}

impl IrdmFit {
    /// Classical OLS standard errors, one per coefficient (0 for dropped columns).
    pub fn std_errors(&self) -> Vec<f64> {
        std_errors(&self.ols)
    }
}

pub(crate) fn std_errors(ols: &OlsFit) -> Vec<f64> {
    let cov = linalg::classical_cov(ols);
    let mut se = vec![0.0; ols.coef.len()];
    for (p, &j) in ols.kept.iter().enumerate() {
        se[j] = cov[(p, p)].max(0.0).sqrt();
    }
    se
}

pub(crate) fn target_warnings(target: &[f64]) -> Vec<String> {
    if target.iter().all(|v| *v == target[0]) {
        vec!["target volatility is constant; R-squared is undefined".into()]
    } else {
        Vec::new()
    }
}

pub fn fit_irdm(
    target: &DatedSeries,
    returns: &DatedSeries,
    shocks: &ShockSet,
    options: &IrdmOptions,
) -> Result<IrdmFit> {
    fit_irdm_with_state(target, returns, shocks, options, None)
}

/// As [`fit_irdm`], with `warm` evaluated as an extra candidate for the state.
pub fn fit_irdm_with_state(
    target: &DatedSeries,
    returns: &DatedSeries,
    shocks: &ShockSet,
    options: &IrdmOptions,
    warm: Option<IrdmStateParams>,
) -> Result<IrdmFit> {
    check_aligned(&[
        ("target", target),
        ("returns", returns),
        ("crisis memory", &shocks.crisis_memory),
        ("policy shocks", &shocks.delta_p),
        ("information shocks", &shocks.delta_i),
    ])?;
    let (y, pre) = base_design(
        target.values(),
        returns.values(),
        Some(shocks.crisis_memory.values()),
    );
    let normalization = normalization_for(shocks.delta_p.values());
    let problem = ProfileProblem {
        y: &y,
        pre: &pre,
        post: &[],
        delta_p: shocks.delta_p.values(),
        delta_i: shocks.delta_i.values(),
        normalization,
        r0: options.r0,
    };
    let prof = problem.solve(options, warm)?;
    let mut warnings = target_warnings(target.values());
    let names = [BASE_NAMES.as_slice(), &["state"]].concat();
    warnings.extend(dropped_warnings(&prof.ols, &names));
    let c = &prof.ols.coef;
    let n = y.len();
    Ok(IrdmFit {
        state_params: prof.params,
        normalization,
        b0: c[0],
        b1: c[1],
        b2: c[2],
        psi: c[3],
        gamma1: c[4],
        fitted: DatedSeries::new(target.dates()[1..].to_vec(), prof.ols.fitted.clone())?,
        state: target.with_values(prof.state)?,
        sse: prof.ols.sse,
        rmse: prof.ols.rmse(),
        n,
        aic_approx: aic_approx(prof.ols.sse, n, 5),
        grid_sse: prof.grid_sse,
        ols: prof.ols,
        warnings,
    })
}

/// Baseline M0: σ_t on [1, σ_{t−1}, r²_{t−1}] over t ≥ 1.
#[derive(Debug, Clone)]
pub struct BaselineFit {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub fitted: DatedSeries,
    pub sse: f64,
    pub rmse: f64,
    pub n: usize,
    pub aic_approx: f64,
    pub ols: OlsFit,
    pub warnings: Vec<String>,
}

pub fn fit_baseline(target: &DatedSeries, returns: &DatedSeries) -> Result<BaselineFit> {
    check_aligned(&[("target", target), ("returns", returns)])?;
    let (y, cols) = base_design(target.values(), returns.values(), None);
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    let ols = linalg::ols(&refs, &y)?;
    let mut warnings = target_warnings(target.values());
    warnings.extend(dropped_warnings(&ols, &BASE_NAMES));
    let n = y.len();
    Ok(BaselineFit {
        b0: ols.coef[0],
        b1: ols.coef[1],
        b2: ols.coef[2],
        fitted: DatedSeries::new(target.dates()[1..].to_vec(), ols.fitted.clone())?,
        sse: ols.sse,
        rmse: ols.rmse(),
        n,
        aic_approx: aic_approx(ols.sse, n, 3),
        ols,
        warnings,
    })
}

/// Root mean squared error of `fitted` against `target` over their common dates.
pub fn irdm_rmse(fitted: &DatedSeries, target: &DatedSeries) -> Result<f64> {
    let mut sse = 0.0;
    let mut n = 0usize;
    for (d, f) in fitted.dates().iter().zip(fitted.values()) {
        if let Some(t) = target.value_at(*d) {
            sse += (f - t) * (f - t);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Input(
            "fitted and target series share no dates".into(),
        ));
    }
    Ok((sse / n as f64).sqrt())
}
