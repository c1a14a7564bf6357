//! Pooled interaction regression with country fixed effects.
//!
//! `σ = α_i + β1 ΔP + β2 ΔI + β3 L + β4 ΔP·L + β5 ΔI·L + u`, with standard
//! errors clustered by country (CR1) and wild cluster bootstrap p-values as a
//! small-G robustness check.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, OlsFit};
use crate::stats;
use crate::timeseries::MarketId;

/// Below this many clusters the CR1 covariance is flagged as unreliable.
pub const FEW_CLUSTERS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub country: MarketId,
    pub date: NaiveDate,
    pub sigma: f64,
    pub delta_p: f64,
    pub delta_i: f64,
    pub l: f64,
}

#[derive(Debug, Clone)]
pub struct PanelFit {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
    pub n_clusters: usize,
    pub countries: Vec<MarketId>,
    pub warnings: Vec<String>,
}

impl PanelFit {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.coef[i])
    }
}

struct Design {
    names: Vec<String>,
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    clusters: Vec<Vec<usize>>,
    countries: Vec<MarketId>,
}

fn design(rows: &[PanelRow]) -> Result<Design> {
    if rows.len() < 100 {
        return Err(Error::Input(format!(
            "panel needs at least 100 rows, got {}",
            rows.len()
        )));
    }
    if rows.iter().any(|r| {
        ![r.sigma, r.delta_p, r.delta_i, r.l]
            .iter()
            .all(|v| v.is_finite())
    }) {
        return Err(Error::Input("panel rows must be finite".into()));
    }
    let mut by_country: BTreeMap<&MarketId, Vec<usize>> = BTreeMap::new();
    for (k, r) in rows.iter().enumerate() {
        by_country.entry(&r.country).or_default().push(k);
    }
    if by_country.len() < 2 {
        return Err(Error::Input("panel needs at least two countries".into()));
    }
    let countries: Vec<MarketId> = by_country.keys().map(|c| (*c).clone()).collect();
    let mut names: Vec<String> = ["intercept", "deltaP", "deltaI", "L"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut cols = vec![
        vec![1.0; rows.len()],
        rows.iter().map(|r| r.delta_p).collect(),
        rows.iter().map(|r| r.delta_i).collect(),
        rows.iter().map(|r| r.l).collect(),
    ];
    for c in &countries[1..] {
        names.push(format!("fe_{c}"));
        cols.push(
            rows.iter()
                .map(|r| if &r.country == c { 1.0 } else { 0.0 })
                .collect(),
        );
    }
    names.push("deltaP:L".into());
    cols.push(rows.iter().map(|r| r.delta_p * r.l).collect());
    names.push("deltaI:L".into());
    cols.push(rows.iter().map(|r| r.delta_i * r.l).collect());
    Ok(Design {
        names,
        cols,
        y: rows.iter().map(|r| r.sigma).collect(),
        clusters: by_country.into_values().collect(),
        countries,
    })
}

fn estimate(d: &Design, y: &[f64]) -> Result<(OlsFit, DMatrix<f64>)> {
    let refs: Vec<&[f64]> = d.cols.iter().map(|c| c.as_slice()).collect();
    let ols = linalg::ols(&refs, y)?;
    if !ols.dropped.is_empty() {
        return Err(Error::RankDeficient(
            ols.dropped.iter().map(|&j| d.names[j].clone()).collect(),
        ));
    }
    let cov = linalg::cluster_cov(&ols, &refs, &d.clusters, true);
    Ok((ols, cov))
}

pub fn fit_panel(rows: &[PanelRow]) -> Result<PanelFit> {
    let d = design(rows)?;
    let (ols, cov) = estimate(&d, &d.y)?;
    let k = d.names.len();
    let se: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let t: Vec<f64> = (0..k).map(|j| ols.coef[j] / se[j]).collect();
    let p = t.iter().map(|v| stats::normal_two_sided_p(*v)).collect();
    let mut warnings = Vec::new();
    if d.clusters.len() < FEW_CLUSTERS {
        warnings.push(format!(
            "only {} clusters; clustered standard errors are unreliable, see the wild bootstrap p-values",
            d.clusters.len()
        ));
    }
    Ok(PanelFit {
        names: d.names,
        coef: ols.coef,
        se,
        t,
        p,
        cov,
        n: rows.len(),
        n_clusters: d.clusters.len(),
        countries: d.countries,
        warnings,
    })
}

/// Wild cluster bootstrap p-values (unrestricted residuals, Rademacher
/// weights per cluster). Draw `b` uses ChaCha stream `b` of `seed`, so results
/// do not depend on thread scheduling.
pub fn wild_cluster_bootstrap(
    rows: &[PanelRow],
    fit: &PanelFit,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if draws == 0 {
        return Err(Error::Input("bootstrap needs at least one draw".into()));
    }
    let d = design(rows)?;
    let (ols, _) = estimate(&d, &d.y)?;
    let k = d.names.len();
    let exceed: Vec<Vec<bool>> = (0..draws)
        .into_par_iter()
        .map(|b| -> Result<Vec<bool>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut y = ols.fitted.clone();
            for idx in &d.clusters {
                let v = if rng.random::<bool>() { 1.0 } else { -1.0 };
                for &i in idx {
                    y[i] += v * ols.residuals[i];
                }
            }
            let (bo, bc) = estimate(&d, &y)?;
            Ok((0..k)
                .map(|j| {
                    let se = bc[(j, j)].max(0.0).sqrt();
                    let tb = (bo.coef[j] - fit.coef[j]) / se;
                    tb.abs() >= fit.t[j].abs()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..k)
        .map(|j| exceed.iter().filter(|e| e[j]).count() as f64 / draws as f64)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalPoint {
    pub l: f64,
    pub effect: f64,
    pub se: f64,
}

impl MarginalPoint {
    pub fn band(&self) -> (f64, f64) {
        (self.effect - 1.96 * self.se, self.effect + 1.96 * self.se)
    }
}

/// β1 + β4 L with delta-method standard errors from the clustered covariance.
pub fn marginal_effect_policy(fit: &PanelFit, grid: &[f64]) -> Result<Vec<MarginalPoint>> {
    let (i1, i4) = match (fit.index("deltaP"), fit.index("deltaP:L")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Input("fit lacks deltaP or deltaP:L".into())),
    };
    let (b1, b4) = (fit.coef[i1], fit.coef[i4]);
    let (v11, v44, v14) = (fit.cov[(i1, i1)], fit.cov[(i4, i4)], fit.cov[(i1, i4)]);
    Ok(grid
        .iter()
        .map(|&l| MarginalPoint {
            l,
            effect: b1 + b4 * l,
            se: (v11 + l * l * v44 + 2.0 * l * v14).max(0.0).sqrt(),
        })
        .collect())
}
