//! MIDAS mapping of monthly policy uncertainty into a daily institutional index.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::timeseries::{csv_reader, parse_f64, record_line, DatedSeries, MarketId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Domain(format!("month {month} out of range")));
        }
        Ok(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + self.month as i64 - 1
    }

    fn from_ordinal(o: i64) -> Self {
        Self {
            year: o.div_euclid(12) as i32,
            month: (o.rem_euclid(12) + 1) as u32,
        }
    }

    /// The month `k` months earlier.
    pub fn back(self, k: usize) -> Self {
        Self::from_ordinal(self.ordinal() - k as i64)
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }

    pub fn parse(text: &str) -> Option<Self> {
        let (y, m) = text.trim().split_once('-')?;
        Self::new(y.parse().ok()?, m.parse().ok()?).ok()
    }
}

impl std::fmt::Display for Month {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

pub type MonthlySeries = BTreeMap<Month, f64>;

/// Reads `month,market,epu`. Rows with market `ALL` are returned under that key.
pub fn read_epu<R: Read>(reader: R) -> Result<BTreeMap<String, MonthlySeries>> {
    let mut rdr = csv_reader(reader, &["month", "market", "epu"])?;
    let mut out: BTreeMap<String, MonthlySeries> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec);
        let month = Month::parse(&rec[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("month must be YYYY-MM, got {:?}", &rec[0]),
        })?;
        let market = rec[1].trim().to_string();
        let v = parse_f64(&rec[2], line, "epu")?;
        if out
            .entry(market.clone())
            .or_default()
            .insert(month, v)
            .is_some()
        {
            return Err(Error::Parse {
                line,
                message: format!("duplicate EPU row for {market} {month}"),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Input("EPU file has no rows".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    #[default]
    ExpAlmon,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MidasConfig {
    pub n_lags: usize,
    pub scheme: WeightScheme,
    pub theta: [f64; 2],
    pub standardize: bool,
}

impl Default for MidasConfig {
    fn default() -> Self {
        Self {
            n_lags: 12,
            scheme: WeightScheme::ExpAlmon,
            theta: [-0.1, 0.0],
            standardize: true,
        }
    }
}

/// Lag weights w_1..w_K, non-negative and summing to one.
///
/// Exponential Almon: w_k ∝ exp(θ1 k + θ2 k²). Beta: w_k ∝ x^{θ1−1}(1−x)^{θ2−1}
/// at x = k/(K+1), which needs θ1, θ2 > 0.
pub fn midas_weights(config: &MidasConfig) -> Result<Vec<f64>> {
    let k = config.n_lags;
    if k == 0 {
        return Err(Error::Input("MIDAS needs at least one lag".into()));
    }
    let [t1, t2] = config.theta;
    if !t1.is_finite() || !t2.is_finite() {
        return Err(Error::Input("non-finite MIDAS theta".into()));
    }
    let log_w: Vec<f64> = match config.scheme {
        WeightScheme::ExpAlmon => (1..=k)
            .map(|j| t1 * j as f64 + t2 * (j * j) as f64)
            .collect(),
        WeightScheme::Beta => {
            if !(t1 > 0.0 && t2 > 0.0) {
                return Err(Error::Input(
                    "beta MIDAS weights need positive theta".into(),
                ));
            }
            (1..=k)
                .map(|j| {
                    let x = j as f64 / (k + 1) as f64;
                    (t1 - 1.0) * x.ln() + (t2 - 1.0) * (1.0 - x).ln()
                })
                .collect()
        }
    };
    if log_w.iter().any(|e| !e.is_finite() || e.abs() > 700.0) {
        return Err(Error::Input("MIDAS weight exponent overflows".into()));
    }
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_w.iter().map(|e| (e - m).exp()).collect();
    let s: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / s).collect())
}

#[derive(Debug, Clone)]
pub struct IndexSeries {
    pub values: DatedSeries,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct InstitutionalIndex {
    pub series: BTreeMap<MarketId, DatedSeries>,
    pub config: MidasConfig,
}

/// L_t = −Σ_k w_k EPU(month(t) − k + 1), optionally standardized.
pub fn build_index(
    epu: &MonthlySeries,
    calendar: &[NaiveDate],
    config: &MidasConfig,
) -> Result<IndexSeries> {
    let w = midas_weights(config)?;
    let mut warnings = Vec::new();
    let mut months_cache: BTreeMap<Month, f64> = BTreeMap::new();
    let mut raw = Vec::with_capacity(calendar.len());
    for &d in calendar {
        let m = Month::of(d);
        let v = match months_cache.get(&m) {
            Some(v) => *v,
            None => {
                let mut acc = 0.0;
                for (k, wk) in w.iter().enumerate() {
                    let lag = m.back(k);
                    let Some(e) = epu.get(&lag) else {
                        return Err(Error::Input(format!(
                            "EPU history missing {lag} for {d}; earliest feasible date {}",
                            earliest_feasible(epu, w.len())
                        )));
                    };
                    acc -= wk * e;
                }
                months_cache.insert(m, acc);
                acc
            }
        };
        raw.push(v);
    }
    if config.standardize && raw.len() > 1 {
        let sd = stats::sample_sd(&raw);
        if sd > 0.0 && sd.is_finite() {
            let mean = stats::mean(&raw);
            raw.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        } else {
            warnings.push("index has zero variance; standardization skipped".into());
        }
    }
    Ok(IndexSeries {
        values: DatedSeries::new(calendar.to_vec(), raw)?,
        warnings,
    })
}

fn earliest_feasible(epu: &MonthlySeries, k: usize) -> String {
    // first month whose K-month history is fully present
    for &m in epu.keys() {
        if (0..k).all(|j| epu.contains_key(&m.back(j))) {
            return m.first_day().to_string();
        }
    }
    "none (insufficient EPU history)".into()
}

/// Piecewise-constant daily series holding each month's value; for plotting.
pub fn step_interpolate(monthly: &MonthlySeries, calendar: &[NaiveDate]) -> Result<DatedSeries> {
    let values = calendar
        .iter()
        .map(|d| {
            monthly
                .range(..=Month::of(*d))
                .next_back()
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Input(format!("no monthly value on or before {d}")))
        })
        .collect::<Result<Vec<_>>>()?;
    DatedSeries::new(calendar.to_vec(), values)
}
