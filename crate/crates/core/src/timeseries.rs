//! Price ingestion, log returns, calendar alignment and trailing rolling statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Short market code such as `IDN`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MarketId(String);

impl MarketId {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        let trimmed = code.trim();
        if trimmed.is_empty() {
            return Err(Error::Input("market code must be non-empty".into()));
        }
        if trimmed.chars().any(|c| c.is_whitespace() || c == ',') {
            return Err(Error::Input(format!("invalid market code {trimmed:?}")));
        }
        Ok(Self(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MarketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for MarketId {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<MarketId> for String {
    fn from(value: MarketId) -> Self {
        value.0
    }
}

/// Values observed on strictly increasing dates.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl DatedSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Input(format!(
                "{} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Input(format!(
                "dates not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { dates, values })
    }

    pub fn empty() -> Self {
        Self {
            dates: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.dates.first().copied()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    /// Same dates, values replaced. Lengths must match.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.dates.clone(), values)
    }

    /// Keep only the given dates (which must be a subset, in order).
    pub fn restrict_to(&self, keep: &BTreeSet<NaiveDate>) -> Self {
        let (dates, values) = self
            .dates
            .iter()
            .zip(&self.values)
            .filter(|(d, _)| keep.contains(d))
            .map(|(d, v)| (*d, *v))
            .unzip();
        Self { dates, values }
    }

    pub fn value_at(&self, date: NaiveDate) -> Option<f64> {
        self.dates
            .binary_search(&date)
            .ok()
            .map(|idx| self.values[idx])
    }

    /// Drop the first `n` observations.
    pub fn skip(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            dates: self.dates[n..].to_vec(),
            values: self.values[n..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Raw,
    #[default]
    Percent,
}

impl Scale {
    pub fn factor(self) -> f64 {
        match self {
            Scale::Raw => 1.0,
            Scale::Percent => 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AlignMode {
    #[default]
    Intersect,
    PerMarket,
}

/// Price levels per market, each sorted by date.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PricePanel {
    pub series: BTreeMap<MarketId, DatedSeries>,
}

/// Log returns per market. After intersect alignment every series shares one date vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReturnPanel {
    pub series: BTreeMap<MarketId, DatedSeries>,
}

impl ReturnPanel {
    pub fn markets(&self) -> Vec<MarketId> {
        self.series.keys().cloned().collect()
    }

    pub fn get(&self, market: &MarketId) -> Option<&DatedSeries> {
        self.series.get(market)
    }

    pub fn is_aligned(&self) -> bool {
        let mut it = self.series.values();
        match it.next() {
            None => true,
            Some(first) => it.all(|s| s.dates() == first.dates()),
        }
    }

    /// Common date vector, if the panel is aligned.
    pub fn common_dates(&self) -> Option<&[NaiveDate]> {
        if !self.is_aligned() {
            return None;
        }
        self.series.values().next().map(|s| s.dates())
    }

    /// First and last date across all markets.
    pub fn span(&self) -> Option<(NaiveDate, NaiveDate)> {
        let first = self.series.values().filter_map(|s| s.first_date()).min()?;
        let last = self.series.values().filter_map(|s| s.last_date()).max()?;
        Some((first, last))
    }

    pub fn select(&self, markets: &[MarketId]) -> Result<Self> {
        let mut series = BTreeMap::new();
        for m in markets {
            let s = self
                .series
                .get(m)
                .ok_or_else(|| Error::Input(format!("market {m} not in panel")))?;
            series.insert(m.clone(), s.clone());
        }
        Ok(Self { series })
    }
}

pub(crate) fn parse_date(field: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field.trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
        line,
        message: format!("bad date {field:?}: {e}"),
    })
}

pub(crate) fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {what} {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite {what} {field:?}"),
        });
    }
    Ok(v)
}

/// Open a CSV with the exact expected header; returns the reader positioned at the first record.
pub(crate) fn csv_reader<R: Read>(reader: R, expected: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Input("empty file".into()));
    }
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                got.join(",")
            ),
        });
    }
    Ok(rdr)
}

pub(crate) fn record_line(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

/// Read a `date,market,price` CSV.
pub fn read_prices<R: Read>(reader: R) -> Result<PricePanel> {
    let mut rdr = csv_reader(reader, &["date", "market", "price"])?;
    let mut rows: BTreeMap<MarketId, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut count = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec);
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let date = parse_date(&rec[0], line)?;
        let market = MarketId::new(&rec[1]).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let price = parse_f64(&rec[2], line, "price")?;
        if price <= 0.0 {
            return Err(Error::Domain(format!(
                "line {line}: non-positive price {price} for {market} on {date}"
            )));
        }
        let per_market = rows.entry(market.clone()).or_default();
        if per_market.insert(date, price).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate row for ({date}, {market})"),
            });
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Input("price file has no data rows".into()));
    }
    let series = rows
        .into_iter()
        .map(|(m, obs)| {
            let (dates, values): (Vec<_>, Vec<_>) = obs.into_iter().unzip();
            Ok((m, DatedSeries::new(dates, values)?))
        })
        .collect::<Result<_>>()?;
    Ok(PricePanel { series })
}

pub fn load_prices(path: impl AsRef<Path>) -> Result<PricePanel> {
    let file = std::fs::File::open(path.as_ref())?;
    read_prices(std::io::BufReader::new(file))
}

pub fn to_log_returns(prices: &PricePanel, scale: Scale) -> Result<ReturnPanel> {
    let factor = scale.factor();
    let mut series = BTreeMap::new();
    for (market, s) in &prices.series {
        if s.len() < 2 {
            return Err(Error::Input(format!(
                "{market}: need at least 2 prices, found {}",
                s.len()
            )));
        }
        let values = s
            .values()
            .windows(2)
            .map(|w| factor * (w[1].ln() - w[0].ln()))
            .collect();
        series.insert(
            market.clone(),
            DatedSeries::new(s.dates()[1..].to_vec(), values)?,
        );
    }
    Ok(ReturnPanel { series })
}

pub fn align_panel(panel: &ReturnPanel, mode: AlignMode) -> Result<ReturnPanel> {
    if panel.series.len() < 2 {
        return Err(Error::Input(format!(
            "alignment needs at least 2 markets, found {}",
            panel.series.len()
        )));
    }
    match mode {
        AlignMode::PerMarket => Ok(panel.clone()),
        AlignMode::Intersect => {
            let mut iter = panel.series.values();
            let mut common: BTreeSet<NaiveDate> = iter
                .next()
                .map(|s| s.dates().iter().copied().collect())
                .unwrap_or_default();
            for s in iter {
                let other: BTreeSet<NaiveDate> = s.dates().iter().copied().collect();
                common = common.intersection(&other).copied().collect();
            }
            if common.is_empty() {
                return Err(Error::Input(
                    "date intersection across markets is empty".into(),
                ));
            }
            let series = panel
                .series
                .iter()
                .map(|(m, s)| (m.clone(), s.restrict_to(&common)))
                .collect();
            Ok(ReturnPanel { series })
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation around the median (unscaled).
pub fn mad(values: &[f64]) -> f64 {
    let med = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    median(&dev)
}

/// Trailing median and MAD over the `window` observations ending at t−1.
///
/// The first `window` dates have no complete past window and are omitted, so
/// both outputs start at the date with index `window`.
pub fn rolling_median_mad(
    series: &DatedSeries,
    window: usize,
) -> Result<(DatedSeries, DatedSeries)> {
    if window < 2 {
        return Err(Error::Input(format!(
            "window must be at least 2, got {window}"
        )));
    }
    if window > series.len() {
        return Err(Error::Input(format!(
            "window {window} exceeds series length {}",
            series.len()
        )));
    }
    let v = series.values();
    let mut med = Vec::with_capacity(v.len() - window);
    let mut dev = Vec::with_capacity(v.len() - window);
    for t in window..v.len() {
        let past = &v[t - window..t];
        med.push(median(past));
        dev.push(mad(past));
    }
    let dates = series.dates()[window..].to_vec();
    Ok((
        DatedSeries::new(dates.clone(), med)?,
        DatedSeries::new(dates, dev)?,
    ))
}

/// Monday–Friday trading calendar of length `n` starting on or after `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    use chrono::{Datelike, Weekday};
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}
