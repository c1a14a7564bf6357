//! DCC correlations and the spillover networks built from them.
//!
//! W^C is the row-normalized absolute DCC correlation matrix, W^I a static
//! similarity matrix from governance vectors. Placebo and robustness variants
//! are produced by [`perturb_network`].

use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{self, BoxedProblem, Settings};
use crate::timeseries::{MarketId, ReturnPanel};

pub const EIGEN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DccParams {
    pub a: f64,
    pub b: f64,
    pub qbar: DMatrix<f64>,
}

impl DccParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.b >= 0.0 && self.a + self.b < 1.0) {
            return Err(Error::Parameter(format!(
                "DCC needs a, b >= 0 and a + b < 1, got ({}, {})",
                self.a, self.b
            )));
        }
        if !self.qbar.is_square() {
            return Err(Error::Parameter("Qbar must be square".into()));
        }
        Ok(())
    }
}

/// Recursion state for Q_t = (1−a−b) Q̄ + a z_{t−1} z'_{t−1} + b Q_{t−1}.
#[derive(Debug, Clone)]
pub struct DccState {
    a: f64,
    b: f64,
    intercept: DMatrix<f64>,
    q: DMatrix<f64>,
}

impl DccState {
    /// Starts at Q_0 = Q̄.
    pub fn new(params: &DccParams) -> Self {
        Self {
            a: params.a,
            b: params.b,
            intercept: &params.qbar * (1.0 - params.a - params.b),
            q: params.qbar.clone(),
        }
    }

    pub fn correlation(&self) -> DMatrix<f64> {
        to_correlation(&self.q)
    }

    /// Advance one period using the previous standardized residual vector.
    pub fn update(&mut self, z_prev: &[f64]) {
        let n = self.q.nrows();
        let mut next = &self.intercept + &self.q * self.b;
        for i in 0..n {
            for j in 0..n {
                next[(i, j)] += self.a * z_prev[i] * z_prev[j];
            }
        }
        self.q = next;
    }
}

pub fn to_correlation(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let d: Vec<f64> = (0..n).map(|i| q[(i, i)].sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            q[(i, j)] / (d[i] * d[j])
        }
    })
}

/// Correlation matrices R_1..R_T for observations `z` (rows are dates).
pub fn dcc_filter(z: &[Vec<f64>], params: &DccParams) -> Result<Vec<DMatrix<f64>>> {
    params.validate()?;
    let mut state = DccState::new(params);
    let mut out = Vec::with_capacity(z.len());
    for t in 0..z.len() {
        if t > 0 {
            state.update(&z[t - 1]);
        }
        out.push(state.correlation());
    }
    Ok(out)
}

/// Gaussian correlation quasi-likelihood −½ Σ_t [ln|R_t| + z'R_t⁻¹z − z'z].
pub fn dcc_loglik(z: &[Vec<f64>], params: &DccParams) -> Result<f64> {
    params.validate()?;
    let mut state = DccState::new(params);
    let mut ll = 0.0;
    for t in 0..z.len() {
        if t > 0 {
            state.update(&z[t - 1]);
        }
        let r = state.correlation();
        let chol = r.cholesky().ok_or_else(|| {
            Error::Numeric(format!("DCC correlation not positive definite at t = {t}"))
        })?;
        let zt = DVector::from_column_slice(&z[t]);
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let quad = zt.dot(&chol.solve(&zt));
        ll -= 0.5 * (logdet + quad - zt.dot(&zt));
    }
    Ok(ll)
}

/// Sample correlation with eigenvalues clipped at [`EIGEN_FLOOR`]; the flag
/// reports whether clipping happened.
pub fn sample_correlation(z: &[Vec<f64>]) -> Result<(DMatrix<f64>, bool)> {
    let t = z.len();
    if t < 2 {
        return Err(Error::Input(
            "need at least two observations for a correlation".into(),
        ));
    }
    let n = z[0].len();
    let means: Vec<f64> = (0..n)
        .map(|i| z.iter().map(|r| r[i]).sum::<f64>() / t as f64)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for row in z {
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] += (row[i] - means[i]) * (row[j] - means[j]);
            }
        }
    }
    if (0..n).any(|i| !(cov[(i, i)] > 0.0)) {
        return Err(Error::Degenerate(
            "a standardized-residual series has zero variance".into(),
        ));
    }
    let corr = to_correlation(&cov);
    let eig = SymmetricEigen::new(corr.clone());
    if eig.eigenvalues.iter().all(|v| *v >= EIGEN_FLOOR) {
        return Ok((corr, false));
    }
    let clipped = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok((to_correlation(&rebuilt), true))
}

#[derive(Debug, Clone)]
pub struct DccFit {
    pub markets: Vec<MarketId>,
    pub dates: Vec<NaiveDate>,
    pub params: DccParams,
    pub correlations: Vec<DMatrix<f64>>,
    pub loglik: f64,
    pub warnings: Vec<String>,
}

/// Rows are dates, columns markets in panel order.
pub fn panel_rows(z: &ReturnPanel) -> Result<(Vec<MarketId>, Vec<NaiveDate>, Vec<Vec<f64>>)> {
    let dates = z
        .common_dates()
        .ok_or_else(|| Error::Input("DCC needs an aligned panel (intersect mode)".into()))?
        .to_vec();
    let markets = z.markets();
    let cols: Vec<&[f64]> = markets.iter().map(|m| z.series[m].values()).collect();
    let rows = (0..dates.len())
        .map(|t| cols.iter().map(|c| c[t]).collect())
        .collect();
    Ok((markets, dates, rows))
}

pub fn fit_dcc(z: &ReturnPanel) -> Result<DccFit> {
    let (markets, dates, rows) = panel_rows(z)?;
    if markets.len() < 2 {
        return Err(Error::Input("DCC needs at least two markets".into()));
    }
    let (qbar, clipped) = sample_correlation(&rows)?;
    let mut warnings = Vec::new();
    if clipped {
        warnings.push(format!(
            "Qbar was not positive definite; eigenvalues clipped at {EIGEN_FLOOR}"
        ));
    }
    let res = {
        let objective = |x: &[f64]| -> f64 {
            let p = DccParams {
                a: x[0],
                b: x[1],
                qbar: qbar.clone(),
            };
            match dcc_loglik(&rows, &p) {
                Ok(v) => -v,
                Err(_) => f64::INFINITY,
            }
        };
        let problem = BoxedProblem::new(2, objective).with_simplex(vec![0, 1], 0.9999)?;
        let starts = vec![vec![0.05, 0.90], vec![0.02, 0.95], vec![0.10, 0.80]];
        optimizer::multi_start(&problem, &starts, &Settings::default())?
    };
    if !res.converged || res.value >= optimizer::PENALTY {
        return Err(Error::NonConvergence {
            context: "DCC correlation likelihood".into(),
            best_value: res.value,
            best_point: res.argmin,
        });
    }
    let params = DccParams {
        a: res.argmin[0],
        b: res.argmin[1],
        qbar,
    };
    let correlations = dcc_filter(&rows, &params)?;
    Ok(DccFit {
        markets,
        dates,
        loglik: -res.value,
        params,
        correlations,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Real,
    PlaceboPermuted,
    PlaceboShifted,
    Lag1,
    Sparsified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    Permute,
    Shift5,
    Lag1,
    Sparsify,
}

impl FromStr for PerturbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permute" => Ok(Self::Permute),
            "shift5" => Ok(Self::Shift5),
            "lag1" => Ok(Self::Lag1),
            "sparsify" => Ok(Self::Sparsify),
            other => Err(Error::Input(format!(
                "unknown network perturbation {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetworkSequence {
    pub markets: Vec<MarketId>,
    pub dates: Vec<NaiveDate>,
    /// W^C per date.
    pub wc: Vec<DMatrix<f64>>,
    /// Correlations behind `wc`, kept for sparsification.
    pub rho: Option<Vec<DMatrix<f64>>>,
    pub wi: DMatrix<f64>,
    pub variant: Variant,
    /// (date index, row) pairs with no off-diagonal mass.
    pub zero_rows: Vec<(usize, usize)>,
}

impl NetworkSequence {
    /// Time-invariant W^C (no correlations attached).
    pub fn constant(
        markets: Vec<MarketId>,
        dates: Vec<NaiveDate>,
        wc: DMatrix<f64>,
        wi: DMatrix<f64>,
    ) -> Result<Self> {
        let n = markets.len();
        if wc.shape() != (n, n) || wi.shape() != (n, n) {
            return Err(Error::Input("network matrices must be n x n".into()));
        }
        Ok(Self {
            wc: vec![wc; dates.len()],
            markets,
            dates,
            rho: None,
            wi,
            variant: Variant::Real,
            zero_rows: Vec::new(),
        })
    }

    pub fn with_similarity(mut self, wi: DMatrix<f64>) -> Result<Self> {
        let n = self.markets.len();
        if wi.shape() != (n, n) {
            return Err(Error::Input("similarity matrix must be n x n".into()));
        }
        self.wi = wi;
        Ok(self)
    }

    pub fn index_of(&self, market: &MarketId) -> Result<usize> {
        self.markets
            .iter()
            .position(|m| m == market)
            .ok_or_else(|| Error::Input(format!("market {market} absent from the network")))
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }
}

/// Row-normalizes |ρ| with a zero diagonal; returns zero rows it found.
fn normalize_abs(rho: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let n = rho.nrows();
    let mut w = DMatrix::<f64>::zeros(n, n);
    let mut zero = Vec::new();
    for i in 0..n {
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| rho[(i, j)].abs()).sum();
        if s <= f64::EPSILON {
            zero.push(i);
            continue;
        }
        for j in 0..n {
            if j != i {
                w[(i, j)] = rho[(i, j)].abs() / s;
            }
        }
    }
    (w, zero)
}

pub fn correlation_network(
    markets: Vec<MarketId>,
    dates: Vec<NaiveDate>,
    rho: Vec<DMatrix<f64>>,
) -> Result<NetworkSequence> {
    let n = markets.len();
    if rho.len() != dates.len() {
        return Err(Error::Input(
            "one correlation matrix per date is required".into(),
        ));
    }
    if rho.iter().any(|r| r.shape() != (n, n)) {
        return Err(Error::Input("correlation matrices must be n x n".into()));
    }
    let mut wc = Vec::with_capacity(rho.len());
    let mut zero_rows = Vec::new();
    for (t, r) in rho.iter().enumerate() {
        let (w, z) = normalize_abs(r);
        zero_rows.extend(z.into_iter().map(|i| (t, i)));
        wc.push(w);
    }
    Ok(NetworkSequence {
        markets,
        dates,
        wc,
        rho: Some(rho),
        wi: DMatrix::zeros(n, n),
        variant: Variant::Real,
        zero_rows,
    })
}

/// Reads `market,g1,...,gK` rows (K ≥ 1) into governance vectors keyed by market.
pub fn read_governance<R: std::io::Read>(
    reader: R,
) -> Result<std::collections::BTreeMap<MarketId, Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let dims = headers.len().saturating_sub(1);
    let expected: Vec<String> = (1..=dims).map(|k| format!("g{k}")).collect();
    if dims == 0
        || &headers[0] != "market"
        || headers
            .iter()
            .skip(1)
            .ne(expected.iter().map(|s| s.as_str()))
    {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header market,g1,...,gK, found {:?}",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = std::collections::BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let market = MarketId::new(rec[0].to_string()).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let values = (1..=dims)
            .map(|k| {
                rec[k]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("governance value {:?} is not a finite number", &rec[k]),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if out.insert(market.clone(), values).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate governance row for {market}"),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Input("governance file has no rows".into()));
    }
    Ok(out)
}

/// W^I_ij = 1/(1 + ‖g_i − g_j‖), zero diagonal.
pub fn similarity_network(governance: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = governance.len();
    if n == 0 {
        return Err(Error::Input("no governance vectors".into()));
    }
    let len = governance[0].len();
    if governance.iter().any(|g| g.len() != len) {
        return Err(Error::Input("governance vectors differ in length".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let d: f64 = governance[i]
                .iter()
                .zip(&governance[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            1.0 / (1.0 + d)
        }
    }))
}

pub fn perturb_network(
    net: &NetworkSequence,
    mode: PerturbMode,
    threshold: f64,
    seed: u64,
) -> Result<NetworkSequence> {
    let mut out = net.clone();
    match mode {
        PerturbMode::Permute => {
            let n = net.markets.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // one permutation of the off-diagonal columns per row, shared by all dates
            let perms: Vec<Vec<usize>> = (0..n)
                .map(|i| {
                    let mut cols: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                    cols.shuffle(&mut rng);
                    cols
                })
                .collect();
            for w in out.wc.iter_mut() {
                let orig = w.clone();
                for (i, perm) in perms.iter().enumerate() {
                    let src: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                    for (s, d) in src.iter().zip(perm) {
                        w[(i, *d)] = orig[(i, *s)];
                    }
                }
            }
            out.rho = None;
            out.variant = Variant::PlaceboPermuted;
        }
        PerturbMode::Shift5 => {
            const LAG: usize = 5;
            if net.dates.len() <= LAG {
                return Err(Error::Input("network too short to shift by 5 dates".into()));
            }
            let keep = net.dates.len() - LAG;
            out.dates = net.dates[LAG..].to_vec();
            out.wc = net.wc[..keep].to_vec();
            out.rho = net.rho.as_ref().map(|r| r[..keep].to_vec());
            out.zero_rows = net
                .zero_rows
                .iter()
                .filter(|(t, _)| *t < keep)
                .copied()
                .collect();
            out.variant = Variant::PlaceboShifted;
        }
        PerturbMode::Lag1 => out.variant = Variant::Lag1,
        PerturbMode::Sparsify => {
            if !(threshold >= 0.0) {
                return Err(Error::Input(format!(
                    "sparsity threshold must be non-negative, got {threshold}"
                )));
            }
            let rho = net
                .rho
                .as_ref()
                .ok_or_else(|| Error::Input("sparsify needs the underlying correlations".into()))?;
            out.wc.clear();
            out.zero_rows.clear();
            for (t, r) in rho.iter().enumerate() {
                let thresholded = r.map(|v| if v.abs() < threshold { 0.0 } else { v });
                let (w, z) = normalize_abs(&thresholded);
                out.zero_rows.extend(z.into_iter().map(|i| (t, i)));
                out.wc.push(w);
            }
            out.variant = Variant::Sparsified;
        }
    }
    Ok(out)
}
