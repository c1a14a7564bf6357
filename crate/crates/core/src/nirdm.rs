//! Network-integrated IRDM: the IRDM equation plus correlation and
//! similarity spillovers from foreign institutional states,
//! `γ2 Σ_j W^C_{ij,t} R̂_{j,t} + γ3 Σ_j W^I_{ij} R̂_{j,t−1}`.
//!
//! Foreign states enter as fixed inputs (typically the per-market IRDM fits);
//! the own state is profiled exactly as in [`crate::irdm`].

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::irdm::{self, IrdmOptions, IrdmStateParams, Normalization, ProfileProblem, BASE_NAMES};
use crate::linalg::{self, OlsFit};
use crate::networks::{NetworkSequence, Variant};
use crate::shocks::ShockSet;
use crate::stats;
use crate::timeseries::{DatedSeries, MarketId};

#[derive(Debug, Clone)]
pub struct SpilloverTerms {
    /// Σ_j W^C_{ij,t} R̂_{j,t}; for the lag-1 variant W_{t−1} R̂_{t−1}, starting at the second date.
    pub net_c: DatedSeries,
    /// Σ_j W^I_{ij} R̂_{j,t−1}, starting at the second date.
    pub net_i: DatedSeries,
}

pub fn spillover_terms(
    states: &BTreeMap<MarketId, DatedSeries>,
    net: &NetworkSequence,
    market: &MarketId,
) -> Result<SpilloverTerms> {
    let i = net.index_of(market)?;
    let n = net.markets.len();
    let t_len = net.dates.len();
    if t_len < 2 {
        return Err(Error::Input("network needs at least two dates".into()));
    }
    let mut foreign: Vec<(usize, &[f64])> = Vec::new();
    for (j, m) in net.markets.iter().enumerate() {
        let s = states
            .get(m)
            .ok_or_else(|| Error::Input(format!("no institutional state supplied for {m}")))?;
        if s.dates() != net.dates.as_slice() {
            return Err(Error::Input(format!(
                "state for {m} does not share the network dates"
            )));
        }
        if j != i {
            foreign.push((j, s.values()));
        }
    }
    let weighted = |w: &nalgebra::DMatrix<f64>, t: usize| -> f64 {
        foreign.iter().map(|(j, s)| w[(i, *j)] * s[t]).sum()
    };
    debug_assert!(net.wc.iter().all(|w| w.nrows() == n));
    let (c_dates, c_vals): (Vec<NaiveDate>, Vec<f64>) = if net.variant == Variant::Lag1 {
        (
            net.dates[1..].to_vec(),
            (1..t_len)
                .map(|t| weighted(&net.wc[t - 1], t - 1))
                .collect(),
        )
    } else {
        (
            net.dates.clone(),
            (0..t_len).map(|t| weighted(&net.wc[t], t)).collect(),
        )
    };
    let i_vals = (1..t_len).map(|t| weighted(&net.wi, t - 1)).collect();
    Ok(SpilloverTerms {
        net_c: DatedSeries::new(c_dates, c_vals)?,
        net_i: DatedSeries::new(net.dates[1..].to_vec(), i_vals)?,
    })
}

#[derive(Debug, Clone)]
pub struct NirdmFit {
    pub market: MarketId,
    pub variant: Variant,
    pub state_params: IrdmStateParams,
    pub normalization: Normalization,
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub psi: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub fitted: DatedSeries,
    pub state: DatedSeries,
    pub spillovers: SpilloverTerms,
    pub sse: f64,
    pub rmse: f64,
    pub n: usize,
    pub aic_approx: f64,
    pub ols: OlsFit,
    pub warnings: Vec<String>,
}

impl NirdmFit {
    pub fn std_errors(&self) -> Vec<f64> {
        irdm::std_errors(&self.ols)
    }
}

/// Values of `s` on `dates[1..]`.
fn after_first(s: &DatedSeries, dates: &[NaiveDate]) -> Result<Vec<f64>> {
    dates[1..]
        .iter()
        .map(|d| {
            s.value_at(*d)
                .ok_or_else(|| Error::Input(format!("spillover series missing {d}")))
        })
        .collect()
}

/// Fits the network equation for `market`. `warm` (usually the market's IRDM
/// state) is scored as an extra profile candidate and adopted only if it
/// lowers the SSE, which makes SSE(N-IRDM) ≤ SSE(IRDM) exact.
#[allow(clippy::too_many_arguments)]
pub fn fit_nirdm(
    target: &DatedSeries,
    returns: &DatedSeries,
    shocks: &ShockSet,
    states: &BTreeMap<MarketId, DatedSeries>,
    net: &NetworkSequence,
    market: &MarketId,
    options: &IrdmOptions,
    warm: Option<IrdmStateParams>,
) -> Result<NirdmFit> {
    irdm::check_aligned(&[
        ("target", target),
        ("returns", returns),
        ("crisis memory", &shocks.crisis_memory),
        ("policy shocks", &shocks.delta_p),
        ("information shocks", &shocks.delta_i),
    ])?;
    if target.dates() != net.dates.as_slice() {
        return Err(Error::Input("target and network dates differ".into()));
    }
    let spill = spillover_terms(states, net, market)?;
    let dates = target.dates();
    let post = vec![
        after_first(&spill.net_c, dates)?,
        after_first(&spill.net_i, dates)?,
    ];
    let (y, pre) = irdm::base_design(
        target.values(),
        returns.values(),
        Some(shocks.crisis_memory.values()),
    );
    let normalization = irdm::normalization_for(shocks.delta_p.values());
    let problem = ProfileProblem {
        y: &y,
        pre: &pre,
        post: &post,
        delta_p: shocks.delta_p.values(),
        delta_i: shocks.delta_i.values(),
        normalization,
        r0: options.r0,
    };
    let prof = problem.solve(options, warm)?;
    let mut warnings = irdm::target_warnings(target.values());
    let names = [BASE_NAMES.as_slice(), &["state", "netR_C", "netR_I"]].concat();
    warnings.extend(irdm::dropped_warnings(&prof.ols, &names));
    let c = &prof.ols.coef;
    let n = y.len();
    Ok(NirdmFit {
        market: market.clone(),
        variant: net.variant,
        state_params: prof.params,
        normalization,
        b0: c[0],
        b1: c[1],
        b2: c[2],
        psi: c[3],
        gamma1: c[4],
        gamma2: c[5],
        gamma3: c[6],
        fitted: DatedSeries::new(dates[1..].to_vec(), prof.ols.fitted.clone())?,
        state: target.with_values(prof.state)?,
        spillovers: spill,
        sse: prof.ols.sse,
        rmse: prof.ols.rmse(),
        n,
        aic_approx: irdm::aic_approx(prof.ols.sse, n, 7),
        ols: prof.ols,
        warnings,
    })
}

/// Per-market inputs to the pooled placebo regression.
#[derive(Debug, Clone, Copy)]
pub struct PlaceboInput<'a> {
    pub target: &'a DatedSeries,
    pub returns: &'a DatedSeries,
    pub crisis: &'a DatedSeries,
    pub state: &'a DatedSeries,
    /// Spillover regressor; its dates define the market's rows.
    pub net_c: &'a DatedSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceboRow {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub model: String,
    pub n: usize,
}

pub const REAL_LABEL: &str = "Real network";

pub fn variant_label(v: Variant) -> &'static str {
    match v {
        Variant::Real => REAL_LABEL,
        Variant::PlaceboPermuted => "Placebo permuted network",
        Variant::PlaceboShifted => "Placebo shifted network",
        Variant::Lag1 => "Lag1 network",
        Variant::Sparsified => "Sparsified network",
    }
}

const PLACEBO_NAMES: [&str; 6] = [
    "intercept",
    "sigma_lag",
    "r2_lag",
    "crisis",
    "state",
    "netR_C",
];

/// Pooled OLS of σ on [1, σ_{t−1}, r²_{t−1}, C_t, R̂_t, netR_C] for one variant.
pub fn placebo_fit(label: &str, inputs: &[PlaceboInput<'_>]) -> Result<PlaceboRow> {
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 6];
    let mut y = Vec::new();
    for inp in inputs {
        if inp.target.dates() != inp.returns.dates()
            || inp.target.dates() != inp.crisis.dates()
            || inp.target.dates() != inp.state.dates()
        {
            return Err(Error::Input("placebo inputs are not aligned".into()));
        }
        let dates = inp.target.dates();
        let index: BTreeMap<NaiveDate, usize> =
            dates.iter().enumerate().map(|(k, d)| (*d, k)).collect();
        for (d, w) in inp.net_c.dates().iter().zip(inp.net_c.values()) {
            let Some(&p) = index.get(d) else { continue };
            if p == 0 {
                continue;
            }
            y.push(inp.target.values()[p]);
            cols[0].push(1.0);
            cols[1].push(inp.target.values()[p - 1]);
            cols[2].push(inp.returns.values()[p - 1].powi(2));
            cols[3].push(inp.crisis.values()[p]);
            cols[4].push(inp.state.values()[p]);
            cols[5].push(*w);
        }
    }
    if y.len() <= PLACEBO_NAMES.len() {
        return Err(Error::Input(format!(
            "placebo regression {label} has too few rows"
        )));
    }
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    let ols = linalg::ols(&refs, &y)?;
    if !ols.dropped.is_empty() {
        return Err(Error::RankDeficient(
            ols.dropped
                .iter()
                .map(|&j| PLACEBO_NAMES[j].to_string())
                .collect(),
        ));
    }
    let cov = linalg::hc1_cov(&ols, &refs);
    let p = ols.kept_position(5).expect("netR_C kept");
    let se = cov[(p, p)].max(0.0).sqrt();
    let est = ols.coef[5];
    let stat = est / se;
    Ok(PlaceboRow {
        term: "netR_C".into(),
        estimate: est,
        std_error: se,
        statistic: stat,
        p_value: stats::normal_two_sided_p(stat),
        model: label.to_string(),
        n: ols.n,
    })
}

/// One row per variant; requires at least two variants including the real network.
pub fn placebo_regression(variants: &[(String, Vec<PlaceboInput<'_>>)]) -> Result<Vec<PlaceboRow>> {
    if variants.len() < 2 || !variants.iter().any(|(l, _)| l == REAL_LABEL) {
        return Err(Error::Input(
            "placebo regression needs the real network and at least one other variant".into(),
        ));
    }
    variants
        .iter()
        .map(|(label, inputs)| placebo_fit(label, inputs))
        .collect()
}

/// Restricts a series to the given dates (used to align with shifted networks).
pub fn restrict(series: &DatedSeries, dates: &[NaiveDate]) -> DatedSeries {
    let keep: BTreeSet<NaiveDate> = dates.iter().copied().collect();
    series.restrict_to(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{correlation_network, NetworkSequence};
    use crate::timeseries::business_days;
    use nalgebra::DMatrix;

    fn ids(n: usize) -> Vec<MarketId> {
        ["AAA", "BBB", "CCC"][..n]
            .iter()
            .map(|s| MarketId::new(*s).unwrap())
            .collect()
    }

    fn dates(n: usize) -> Vec<NaiveDate> {
        business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), n)
    }

    fn states(vals: &[Vec<f64>], d: &[NaiveDate]) -> BTreeMap<MarketId, DatedSeries> {
        ids(vals.len())
            .into_iter()
            .zip(vals)
            .map(|(m, v)| (m, DatedSeries::new(d.to_vec(), v.clone()).unwrap()))
            .collect()
    }

    #[test]
    fn spillover_examples() {
        let d = dates(4);
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let net = correlation_network(ids(2), d.clone(), vec![r; 4]).unwrap();
        let s = states(&[vec![9.0; 4], vec![0.5; 4]], &d);
        let sp = spillover_terms(&s, &net, &ids(2)[0]).unwrap();
        assert!(sp.net_c.values().iter().all(|v| (*v - 0.5).abs() < 1e-15));
        assert_eq!(sp.net_i.len(), 3);

        let w = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.5, 0.5, 0.0, 0.5, 0.5, 0.5, 0.0]);
        let net = NetworkSequence::constant(ids(3), d.clone(), w.clone(), w).unwrap();
        let s = states(&[vec![7.0; 4], vec![0.2; 4], vec![0.4; 4]], &d);
        let sp = spillover_terms(&s, &net, &ids(3)[0]).unwrap();
        assert!(sp.net_c.values().iter().all(|v| (*v - 0.3).abs() < 1e-15));
        assert!(sp.net_i.values().iter().all(|v| (*v - 0.3).abs() < 1e-15));

        let zero = states(&[vec![1.0; 4], vec![0.0; 4], vec![0.0; 4]], &d);
        let sp = spillover_terms(&zero, &net, &ids(3)[0]).unwrap();
        assert!(sp
            .net_c
            .values()
            .iter()
            .chain(sp.net_i.values())
            .all(|v| *v == 0.0));
        assert!(spillover_terms(&zero, &net, &MarketId::new("ZZZ").unwrap()).is_err());
    }

    #[test]
    fn spillovers_are_linear_in_foreign_states() {
        let d = dates(6);
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 0.3, 0.7, 0.5, 0.0, 0.5, 0.9, 0.1, 0.0]);
        let net = NetworkSequence::constant(ids(3), d.clone(), w.clone(), w.transpose()).unwrap();
        let a = vec![
            vec![0.0; 6],
            vec![1.0, 2.0, 0.5, -1.0, 0.0, 3.0],
            vec![0.2, 0.1, 0.0, 0.3, 0.2, 0.1],
        ];
        let b = vec![
            vec![0.0; 6],
            vec![0.5, -0.5, 1.0, 0.0, 2.0, 1.0],
            vec![1.0, 1.0, 2.0, 0.0, 0.2, 0.4],
        ];
        let comb: Vec<Vec<f64>> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| 2.0 * p - 3.0 * q).collect())
            .collect();
        let m = &ids(3)[0];
        let sa = spillover_terms(&states(&a, &d), &net, m).unwrap();
        let sb = spillover_terms(&states(&b, &d), &net, m).unwrap();
        let sc = spillover_terms(&states(&comb, &d), &net, m).unwrap();
        for t in 0..6 {
            let lin = 2.0 * sa.net_c.values()[t] - 3.0 * sb.net_c.values()[t];
            assert!((sc.net_c.values()[t] - lin).abs() < 1e-12);
        }
    }

    #[test]
    fn lag1_uses_previous_date() {
        let d = dates(3);
        let r0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let mut net = correlation_network(ids(2), d.clone(), vec![r0; 3]).unwrap();
        net.variant = Variant::Lag1;
        let s = states(&[vec![0.0; 3], vec![1.0, 2.0, 3.0]], &d);
        let sp = spillover_terms(&s, &net, &ids(2)[0]).unwrap();
        assert_eq!(sp.net_c.values(), &[1.0, 2.0]);
        assert_eq!(sp.net_c.dates(), &d[1..]);
    }
}
