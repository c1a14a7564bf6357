//! Synthetic multi-market panels with known truth.
//!
//! Each day and market the generator draws policy and information shocks,
//! advances the institutional state, evaluates the network volatility
//! equation and draws correlated standardized-t returns. Randomness is a
//! ChaCha8 stream per market plus one common stream, so regenerating with the
//! same seed is bit-identical.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{standard_normal, Innovation};
use crate::error::{Error, Result};
use crate::garch::{Family, GarchParams};
use crate::irdm::IrdmStateParams;
use crate::midas::{Month, MonthlySeries};
use crate::networks::{
    correlation_network, similarity_network, DccParams, DccState, NetworkSequence,
};
use crate::shocks::{self, CrisisEvent, ShockSet};
use crate::timeseries::{business_days, DatedSeries, MarketId, PricePanel, ReturnPanel};

pub const SIGMA_FLOOR: f64 = 1e-4;
pub const EXPLOSION_LIMIT: f64 = 1e6;
pub const DEFAULT_BURN_IN: usize = 250;
pub const MIN_T: usize = 500;

/// Coefficients of σ_t = b0 + b1 σ_{t−1} + b2 r²_{t−1} + ψ C_t + γ1 R_t + γ2 netR^C_t + γ3 netR^I_t + η_t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceTruth {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub psi: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketTruth {
    pub code: String,
    /// Drives returns under [`ReturnLink::GarchDriven`].
    pub garch: GarchParams,
    pub state: IrdmStateParams,
    /// Standard deviation of the state innovation.
    pub state_sd: f64,
    pub variance: VarianceTruth,
    /// Daily probability of a policy event.
    pub policy_prob: f64,
    /// Standard deviation of the volatility-equation noise η.
    pub eta_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrisisSpec {
    /// Onset as an index into the retained calendar.
    pub offset: usize,
    pub magnitude: f64,
    pub label: String,
}

/// ΔI_{i,t} = √c F_t + √(1−c) e_{i,t}, with F and e standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoShockSpec {
    pub common_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum NetworkMode {
    /// Return correlations follow a DCC recursion; W^C is built from them.
    FromDccTruth { a: f64, b: f64, qbar: Vec<Vec<f64>> },
    /// W^C fixed; returns correlated through `return_corr` (identity if absent).
    FixedMatrix {
        wc: Vec<Vec<f64>>,
        return_corr: Option<Vec<Vec<f64>>>,
    },
}

/// Scale of the return draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnLink {
    /// r_t = σ_t z_t with σ from the volatility equation.
    Coupled,
    /// r_t = s_t z_t with s from the market's GJR truth; the volatility equation
    /// is a measurement on those returns and does not feed back.
    GarchDriven,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub markets: Vec<MarketTruth>,
    pub t: usize,
    pub start: NaiveDate,
    pub burn_in: usize,
    pub crises: Vec<CrisisSpec>,
    pub lambda: f64,
    pub info: InfoShockSpec,
    /// Degrees of freedom of the standardized-t return innovations.
    pub df: f64,
    pub network: NetworkMode,
    /// Static governance vectors behind W^I, one per market.
    pub governance: Vec<Vec<f64>>,
    pub link: ReturnLink,
    pub seed: u64,
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Parameter(format!("{what} must be {n} x {n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Parameter(format!("{what} is not positive definite")))
}

pub const DEFAULT_MARKETS: [&str; 4] = ["IDN", "MYS", "PHL", "THA"];

/// Labeled synthetic governance vectors (six dimensions).
pub fn demo_governance(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            (0..6)
                .map(|k| -0.6 + 0.35 * i as f64 + 0.05 * ((i * 7 + k * 3) % 5) as f64)
                .collect()
        })
        .collect()
}

/// Constant-correlation matrix with `rho` off the diagonal.
pub fn equicorrelation(n: usize, rho: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { rho }).collect())
        .collect()
}

/// Banded correlation: neighbours more correlated than distant markets.
pub fn banded_correlation(n: usize, near: f64, far: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match i.abs_diff(j) {
                    0 => 1.0,
                    1 => near,
                    _ => far,
                })
                .collect()
        })
        .collect()
}

fn default_crises(t: usize) -> Vec<CrisisSpec> {
    [(0.15, "crisis_a"), (0.50, "crisis_b"), (0.80, "crisis_c")]
        .iter()
        .map(|(f, l)| CrisisSpec {
            offset: (f * t as f64) as usize,
            magnitude: 1.0,
            label: (*l).into(),
        })
        .collect()
}

/// GJR truth matching the typical emerging-market fit: ω=0.030, α=0.033, β=0.879, γ=0.117, df 6.4.
pub fn reference_gjr() -> GarchParams {
    GarchParams {
        omega: 0.030,
        alpha: 0.033,
        beta: 0.879,
        gamma: 0.117,
        shape: 6.4,
        mu: 0.0,
    }
}

impl ScenarioConfig {
    /// IRDM calibration (b0=0.080, b1=0.886, b2=0.019, ψ=0.006, γ1=0.010) with a
    /// noise-free state, coupled returns and no spillovers.
    pub fn irdm_calibrated(n_markets: usize, t: usize, seed: u64) -> Self {
        let variance = VarianceTruth {
            b0: 0.080,
            b1: 0.886,
            b2: 0.019,
            psi: 0.006,
            gamma1: 0.010,
            gamma2: 0.0,
            gamma3: 0.0,
        };
        let markets = (0..n_markets)
            .map(|i| MarketTruth {
                code: market_code(i),
                garch: reference_gjr(),
                state: IrdmStateParams {
                    rho: 0.9,
                    theta1: 1.0,
                    theta2: 0.6,
                },
                state_sd: 0.0,
                variance,
                policy_prob: 0.04,
                eta_sd: 0.064,
            })
            .collect();
        Self {
            markets,
            t,
            start: NaiveDate::from_ymd_opt(2010, 1, 4).expect("static date"),
            burn_in: DEFAULT_BURN_IN,
            crises: default_crises(t),
            lambda: shocks::DEFAULT_LAMBDA,
            info: InfoShockSpec { common_weight: 0.3 },
            df: 6.4,
            network: NetworkMode::FixedMatrix {
                wc: uniform_weights(n_markets),
                return_corr: None,
            },
            governance: demo_governance(n_markets),
            link: ReturnLink::Coupled,
            seed,
        }
    }

    /// Network calibration (b0=.085, b1=.912, b2=.104, ψ=.031, γ1=.128, γ2=.072,
    /// γ3=.011) with DCC(0.05, 0.90) correlations. Returns are GJR-driven: the
    /// coupled link has no stationary mean at these coefficients.
    pub fn nirdm_calibrated(n_markets: usize, t: usize, seed: u64) -> Self {
        let variance = VarianceTruth {
            b0: 0.085,
            b1: 0.912,
            b2: 0.104,
            psi: 0.031,
            gamma1: 0.128,
            gamma2: 0.072,
            gamma3: 0.011,
        };
        let mut cfg = Self::irdm_calibrated(n_markets, t, seed);
        for m in &mut cfg.markets {
            m.variance = variance;
        }
        cfg.network = NetworkMode::FromDccTruth {
            a: 0.05,
            b: 0.90,
            qbar: banded_correlation(n_markets, 0.5, 0.2),
        };
        cfg.link = ReturnLink::GarchDriven;
        cfg
    }

    /// Pipeline scenario with every channel active. Returns are GJR-driven so
    /// heavy-tailed draws cannot push the level equation past its unstable
    /// upper fixed point.
    pub fn demo(n_markets: usize, t: usize, seed: u64) -> Self {
        let mut cfg = Self::irdm_calibrated(n_markets, t, seed);
        for (i, m) in cfg.markets.iter_mut().enumerate() {
            m.variance.gamma2 = 0.03;
            m.variance.gamma3 = 0.01;
            m.variance.psi = 0.05;
            m.variance.gamma1 = 0.01 + 0.002 * i as f64;
            m.state_sd = 0.05;
        }
        cfg.network = NetworkMode::FromDccTruth {
            a: 0.05,
            b: 0.90,
            qbar: banded_correlation(n_markets, 0.5, 0.2),
        };
        cfg.link = ReturnLink::GarchDriven;
        cfg
    }

    pub fn n_markets(&self) -> usize {
        self.markets.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_markets();
        if n == 0 {
            return Err(Error::Parameter("scenario has no markets".into()));
        }
        if self.t < MIN_T {
            return Err(Error::Parameter(format!(
                "T must be at least {MIN_T}, got {}",
                self.t
            )));
        }
        if self.governance.len() != n {
            return Err(Error::Parameter(
                "one governance vector per market is required".into(),
            ));
        }
        if !(self.df > 2.0) {
            return Err(Error::Parameter(format!(
                "innovation df must exceed 2, got {}",
                self.df
            )));
        }
        if !(0.0..=1.0).contains(&self.info.common_weight) {
            return Err(Error::Parameter(
                "information common weight must lie in [0, 1]".into(),
            ));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Parameter("crisis decay must be positive".into()));
        }
        if let Some(c) = self
            .crises
            .iter()
            .find(|c| c.offset >= self.t || !(c.magnitude > 0.0))
        {
            return Err(Error::Parameter(format!(
                "crisis {} lies outside the sample or has non-positive magnitude",
                c.label
            )));
        }
        let mut codes: Vec<&str> = self.markets.iter().map(|m| m.code.as_str()).collect();
        codes.sort_unstable();
        codes.dedup();
        if codes.len() != n {
            return Err(Error::Parameter("market codes must be unique".into()));
        }
        for m in &self.markets {
            MarketId::new(m.code.clone())?;
            m.state.validate()?;
            let v = &m.variance;
            if !(v.b1.abs() < 1.0) {
                return Err(Error::Parameter(format!(
                    "{}: |b1| must be below 1, got {}",
                    m.code, v.b1
                )));
            }
            if !(0.0..=1.0).contains(&m.policy_prob) || !(m.eta_sd >= 0.0) || !(m.state_sd >= 0.0) {
                return Err(Error::Parameter(format!(
                    "{}: invalid shock or noise settings",
                    m.code
                )));
            }
            if self.link == ReturnLink::GarchDriven {
                m.garch.validate(Family::Gjr, Innovation::StudentT)?;
            }
        }
        match &self.network {
            NetworkMode::FromDccTruth { a, b, qbar } => {
                DccParams {
                    a: *a,
                    b: *b,
                    qbar: matrix(qbar, n, "qbar")?,
                }
                .validate()?;
                cholesky(&matrix(qbar, n, "qbar")?, "qbar")?;
            }
            NetworkMode::FixedMatrix { wc, return_corr } => {
                matrix(wc, n, "wc")?;
                if let Some(c) = return_corr {
                    cholesky(&matrix(c, n, "return_corr")?, "return_corr")?;
                }
            }
        }
        Ok(())
    }
}

fn market_code(i: usize) -> String {
    DEFAULT_MARKETS
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("M{:02}", i + 1))
}

/// Equal weights on every other market.
pub fn uniform_weights(n: usize) -> Vec<Vec<f64>> {
    let w = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { w }).collect())
        .collect()
}

/// True paths for one market on the retained calendar.
#[derive(Debug, Clone)]
pub struct MarketPath {
    /// σ from the volatility equation.
    pub sigma: DatedSeries,
    /// GJR scale under the GARCH-driven link.
    pub garch_sigma: Option<DatedSeries>,
    pub state: DatedSeries,
    pub delta_p: DatedSeries,
    pub delta_i: DatedSeries,
    pub net_c: DatedSeries,
    pub net_i: DatedSeries,
    /// Retained days on which σ was truncated at the floor.
    pub floor_hits: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub returns: ReturnPanel,
    pub paths: BTreeMap<MarketId, MarketPath>,
    pub crisis_memory: DatedSeries,
    pub crisis_events: Vec<CrisisEvent>,
    /// True W^C sequence (with its correlations) and W^I.
    pub network: NetworkSequence,
    pub config: ScenarioConfig,
}

impl SyntheticPanel {
    pub fn markets(&self) -> Vec<MarketId> {
        self.returns.markets()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.network.dates
    }

    fn path(&self, market: &MarketId) -> Result<&MarketPath> {
        self.paths
            .get(market)
            .ok_or_else(|| Error::Input(format!("unknown market {market}")))
    }

    /// True shocks with the true variance as the RV slot (κ = 1).
    pub fn shock_set(&self, market: &MarketId) -> Result<ShockSet> {
        let p = self.path(market)?;
        let rv = p
            .sigma
            .with_values(p.sigma.values().iter().map(|s| s * s).collect())?;
        Ok(ShockSet {
            delta_p: p.delta_p.clone(),
            delta_i: p.delta_i.clone(),
            crisis_memory: self.crisis_memory.clone(),
            rv,
            lambda: self.config.lambda,
            kappa: 1.0,
        })
    }

    pub fn true_states(&self) -> BTreeMap<MarketId, DatedSeries> {
        self.paths
            .iter()
            .map(|(m, p)| (m.clone(), p.state.clone()))
            .collect()
    }

    /// Prices rebuilt from percent log returns, P_0 = 100 on the day before the first return.
    pub fn prices(&self) -> Result<PricePanel> {
        let first = self.dates()[0];
        let day0 = business_days_before(first);
        let mut series = BTreeMap::new();
        for (m, r) in &self.returns.series {
            let mut dates = vec![day0];
            dates.extend_from_slice(r.dates());
            let mut p = 100.0f64;
            let mut values = vec![p];
            for x in r.values() {
                p *= (x / 100.0).exp();
                values.push(p);
            }
            series.insert(m.clone(), DatedSeries::new(dates, values)?);
        }
        Ok(PricePanel { series })
    }

    /// Event rows: one policy row per event day and one crisis row (market `ALL`) per onset.
    pub fn event_rows(&self) -> Vec<shocks::EventRow> {
        let mut rows = Vec::new();
        for (m, p) in &self.paths {
            for (d, v) in p.delta_p.dates().iter().zip(p.delta_p.values()) {
                if *v != 0.0 {
                    rows.push(shocks::EventRow {
                        date: *d,
                        market: m.to_string(),
                        kind: shocks::EventKind::Policy,
                        magnitude: 1.0,
                    });
                }
            }
        }
        for c in &self.crisis_events {
            rows.push(shocks::EventRow {
                date: c.onset,
                market: "ALL".into(),
                kind: shocks::EventKind::Crisis,
                magnitude: c.magnitude,
            });
        }
        rows.sort_by(|a, b| (a.date, &a.market).cmp(&(b.date, &b.market)));
        rows
    }
}

fn business_days_before(d: NaiveDate) -> NaiveDate {
    let mut p = d.pred_opt().expect("date in range");
    while chrono::Datelike::weekday(&p).number_from_monday() > 5 {
        p = p.pred_opt().expect("date in range");
    }
    p
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn explosion(cfg: &ScenarioConfig, market: &MarketTruth, t: usize, value: f64) -> Error {
    let param = if cfg.link == ReturnLink::Coupled && market.variance.b2 > 0.0 {
        "b2"
    } else {
        "b1"
    };
    Error::Generation(format!(
        "{}: sigma reached {value} at step {t}; explosive configuration, check {param} = {}",
        market.code,
        if param == "b2" {
            market.variance.b2
        } else {
            market.variance.b1
        }
    ))
}

pub fn simulate(config: &ScenarioConfig) -> Result<SyntheticPanel> {
    config.validate()?;
    let n = config.n_markets();
    let total = config.burn_in + config.t;
    let dates = business_days(config.start, config.t);
    let crisis_events: Vec<CrisisEvent> = config
        .crises
        .iter()
        .map(|c| CrisisEvent::new(dates[c.offset], c.magnitude, c.label.clone()))
        .collect::<Result<_>>()?;
    let (crisis, _) = shocks::crisis_memory(&crisis_events, config.lambda, &dates)?;
    let wi = similarity_network(&config.governance)?;

    let mut common = stream(config.seed, 0);
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| stream(config.seed, i as u64 + 1)).collect();

    let (mut dcc, fixed_w, fixed_chol) = match &config.network {
        NetworkMode::FromDccTruth { a, b, qbar } => (
            Some(DccState::new(&DccParams {
                a: *a,
                b: *b,
                qbar: matrix(qbar, n, "qbar")?,
            })),
            None,
            None,
        ),
        NetworkMode::FixedMatrix { wc, return_corr } => {
            let corr = match return_corr {
                Some(c) => matrix(c, n, "return_corr")?,
                None => DMatrix::identity(n, n),
            };
            (
                None,
                Some(matrix(wc, n, "wc")?),
                Some((cholesky(&corr, "return_corr")?, corr)),
            )
        }
    };

    let sqrt_c = config.info.common_weight.sqrt();
    let sqrt_idio = (1.0 - config.info.common_weight).sqrt();
    let mut state = vec![0.0f64; n];
    let mut sigma: Vec<f64> = config
        .markets
        .iter()
        .map(|m| (m.variance.b0 / (1.0 - m.variance.b1)).max(SIGMA_FLOOR))
        .collect();
    let mut garch_var: Vec<f64> = config
        .markets
        .iter()
        .map(|m| m.garch.omega / (1.0 - m.garch.persistence(Family::Gjr)))
        .collect();
    let mut r_prev = vec![0.0f64; n];

    let keep = config.t;
    let mut out_r = vec![Vec::with_capacity(keep); n];
    let mut out_sigma = vec![Vec::with_capacity(keep); n];
    let mut out_gsig = vec![Vec::with_capacity(keep); n];
    let mut out_state = vec![Vec::with_capacity(keep); n];
    let mut out_dp = vec![Vec::with_capacity(keep); n];
    let mut out_di = vec![Vec::with_capacity(keep); n];
    let mut out_nc = vec![Vec::with_capacity(keep); n];
    let mut out_ni = vec![Vec::with_capacity(keep); n];
    let mut floor_hits = vec![0usize; n];
    let mut rho_seq = Vec::with_capacity(keep);

    for step in 0..total {
        let keepit = step >= config.burn_in;
        let c_t = if keepit {
            crisis.values()[step - config.burn_in]
        } else {
            0.0
        };
        let f = standard_normal(&mut common);
        let prev_state = state.clone();
        let mut dp = vec![0.0; n];
        let mut di = vec![0.0; n];
        for (i, m) in config.markets.iter().enumerate() {
            let rng = &mut rngs[i];
            dp[i] = if rng.random::<f64>() < m.policy_prob {
                1.0
            } else {
                0.0
            };
            di[i] = sqrt_c * f + sqrt_idio * standard_normal(rng);
            let u = if m.state_sd > 0.0 {
                m.state_sd * standard_normal(rng)
            } else {
                0.0
            };
            state[i] = m.state.rho * state[i] + m.state.theta1 * dp[i] + m.state.theta2 * di[i] + u;
        }

        let (corr, chol, w) = match (&dcc, &fixed_w, &fixed_chol) {
            (Some(d), _, _) => {
                let corr = d.correlation();
                let chol = cholesky(&corr, "DCC correlation")?;
                let w = normalize_abs(&corr);
                (corr, chol, w)
            }
            (None, Some(w), Some((chol, corr))) => (corr.clone(), chol.clone(), w.clone()),
            _ => unreachable!("network mode resolved above"),
        };

        let mut innov = vec![0.0; n];
        for (i, m) in config.markets.iter().enumerate() {
            let v = &m.variance;
            let net_c: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| w[(i, j)] * state[j])
                .sum();
            let net_i: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| wi[(i, j)] * prev_state[j])
                .sum();
            let eta = if m.eta_sd > 0.0 {
                m.eta_sd * standard_normal(&mut rngs[i])
            } else {
                0.0
            };
            let raw = v.b0
                + v.b1 * sigma[i]
                + v.b2 * r_prev[i] * r_prev[i]
                + v.psi * c_t
                + v.gamma1 * state[i]
                + v.gamma2 * net_c
                + v.gamma3 * net_i
                + eta;
            if !raw.is_finite() || raw > EXPLOSION_LIMIT {
                return Err(explosion(config, m, step, raw));
            }
            if raw < SIGMA_FLOOR && keepit {
                floor_hits[i] += 1;
            }
            sigma[i] = raw.max(SIGMA_FLOOR);
            innov[i] = Innovation::StudentT.sample(config.df, &mut rngs[i]);
            if keepit {
                out_nc[i].push(net_c);
                out_ni[i].push(net_i);
            }
        }
        let z = &chol * nalgebra::DVector::from_vec(innov);
        for (i, m) in config.markets.iter().enumerate() {
            let scale = match config.link {
                ReturnLink::Coupled => sigma[i],
                ReturnLink::GarchDriven => {
                    if step > 0 {
                        let g = &m.garch;
                        let e = r_prev[i] - g.mu;
                        let lev = if e < 0.0 { g.gamma } else { 0.0 };
                        garch_var[i] = g.omega + (g.alpha + lev) * e * e + g.beta * garch_var[i];
                    }
                    garch_var[i].sqrt()
                }
            };
            let r = match config.link {
                ReturnLink::Coupled => scale * z[i],
                ReturnLink::GarchDriven => m.garch.mu + scale * z[i],
            };
            if !r.is_finite() {
                return Err(explosion(config, m, step, r));
            }
            r_prev[i] = r;
            if keepit {
                out_r[i].push(r);
                out_sigma[i].push(sigma[i]);
                out_gsig[i].push(scale);
                out_state[i].push(state[i]);
                out_dp[i].push(dp[i]);
                out_di[i].push(di[i]);
            }
        }
        if keepit {
            rho_seq.push(corr);
        }
        if let Some(d) = dcc.as_mut() {
            d.update(z.as_slice());
        }
    }

    let market_ids: Vec<MarketId> = config
        .markets
        .iter()
        .map(|m| MarketId::new(m.code.clone()))
        .collect::<Result<_>>()?;
    let mut returns = BTreeMap::new();
    let mut paths = BTreeMap::new();
    for (i, id) in market_ids.iter().enumerate() {
        let mk = |v: &Vec<f64>| DatedSeries::new(dates.clone(), v.clone());
        returns.insert(id.clone(), mk(&out_r[i])?);
        paths.insert(
            id.clone(),
            MarketPath {
                sigma: mk(&out_sigma[i])?,
                garch_sigma: match config.link {
                    ReturnLink::GarchDriven => Some(mk(&out_gsig[i])?),
                    ReturnLink::Coupled => None,
                },
                state: mk(&out_state[i])?,
                delta_p: mk(&out_dp[i])?,
                delta_i: mk(&out_di[i])?,
                net_c: mk(&out_nc[i])?,
                net_i: mk(&out_ni[i])?,
                floor_hits: floor_hits[i],
            },
        );
    }

    let network = match &config.network {
        NetworkMode::FromDccTruth { .. } => {
            correlation_network(market_ids.clone(), dates.clone(), rho_seq)?
        }
        NetworkMode::FixedMatrix { wc, .. } => NetworkSequence::constant(
            market_ids.clone(),
            dates.clone(),
            matrix(wc, n, "wc")?,
            DMatrix::zeros(n, n),
        )?,
    }
    .with_similarity(wi)?;

    Ok(SyntheticPanel {
        returns: ReturnPanel { series: returns },
        paths,
        crisis_memory: crisis,
        crisis_events,
        network,
        config: config.clone(),
    })
}

fn normalize_abs(rho: &DMatrix<f64>) -> DMatrix<f64> {
    let n = rho.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 0.0;
        }
        let s: f64 = (0..n).filter(|&k| k != i).map(|k| rho[(i, k)].abs()).sum();
        if s > 0.0 {
            rho[(i, j)].abs() / s
        } else {
            0.0
        }
    })
}

/// Standardized residual rows from a DCC(a, b) process with standardized-t marginals.
pub fn simulate_dcc_z(params: &DccParams, t: usize, df: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    let n = params.qbar.nrows();
    let mut rng = stream(seed, 0);
    let mut state = DccState::new(params);
    let mut out = Vec::with_capacity(t);
    for _ in 0..t {
        let corr = state.correlation();
        let chol = cholesky(&corr, "DCC correlation")?;
        let u = nalgebra::DVector::from_fn(n, |_, _| Innovation::StudentT.sample(df, &mut rng));
        let z: Vec<f64> = (&chol * u).iter().copied().collect();
        state.update(&z);
        out.push(z);
    }
    Ok(out)
}

/// Monthly log-AR(1) uncertainty index per market, level near 100.
pub fn synthetic_epu(
    markets: &[MarketId],
    first: Month,
    last: Month,
    seed: u64,
) -> BTreeMap<String, MonthlySeries> {
    let mut out = BTreeMap::new();
    for (i, m) in markets.iter().enumerate() {
        let mut rng = stream(seed ^ 0x4550_5500, i as u64 + 1);
        let mut x = 0.0f64;
        let mut series = MonthlySeries::new();
        let months: Vec<Month> = (0..)
            .map(|k| last.back(k))
            .take_while(|m| *m >= first)
            .collect();
        for month in months.into_iter().rev() {
            x = 0.8 * x + 0.25 * standard_normal(&mut rng);
            series.insert(month, 100.0 * x.exp());
        }
        out.insert(m.to_string(), series);
    }
    out
}

pub fn write_prices<W: Write>(prices: &PricePanel, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["date", "market", "price"])?;
    let mut rows: Vec<(NaiveDate, &MarketId, f64)> = Vec::new();
    for (m, s) in &prices.series {
        rows.extend(s.dates().iter().zip(s.values()).map(|(d, v)| (*d, m, *v)));
    }
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    for (d, m, v) in rows {
        wr.write_record([d.to_string(), m.to_string(), v.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_events<W: Write>(rows: &[shocks::EventRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["date", "market", "type", "magnitude"])?;
    for r in rows {
        let kind = match r.kind {
            shocks::EventKind::Policy => "policy",
            shocks::EventKind::Crisis => "crisis",
        };
        wr.write_record([
            r.date.to_string(),
            r.market.clone(),
            kind.to_string(),
            r.magnitude.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_epu<W: Write>(epu: &BTreeMap<String, MonthlySeries>, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["month", "market", "epu"])?;
    for (m, s) in epu {
        for (month, v) in s {
            wr.write_record([month.to_string(), m.clone(), v.to_string()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn write_governance<W: Write>(
    markets: &[MarketId],
    governance: &[Vec<f64>],
    w: W,
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let dims = governance.first().map_or(0, |g| g.len());
    let mut header = vec!["market".to_string()];
    header.extend((1..=dims).map(|k| format!("g{k}")));
    wr.write_record(&header)?;
    for (m, g) in markets.iter().zip(governance) {
        let mut rec = vec![m.to_string()];
        rec.extend(g.iter().map(|v| v.to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
