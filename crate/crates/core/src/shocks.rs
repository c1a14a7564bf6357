//! Policy and information shocks, crisis memory and the realized-volatility proxy.

use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{self, csv_reader, parse_date, parse_f64, record_line, DatedSeries};

/// Floor on the rolling MAD used to scale information shocks.
pub const MAD_FLOOR: f64 = 1e-8;
pub const DEFAULT_LAMBDA: f64 = 0.02;
pub const DEFAULT_INFO_WINDOW: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Policy,
    Crisis,
}

/// One row of the events file. `market` is a market code or `ALL`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub date: NaiveDate,
    pub market: String,
    pub kind: EventKind,
    pub magnitude: f64,
}

impl EventRow {
    pub fn applies_to(&self, market: &str) -> bool {
        self.market == "ALL" || self.market == market
    }
}

pub fn read_events<R: Read>(reader: R) -> Result<Vec<EventRow>> {
    let mut rdr = csv_reader(reader, &["date", "market", "type", "magnitude"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec);
        let date = parse_date(&rec[0], line)?;
        let market = rec[1].trim().to_string();
        if market.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty market field".into(),
            });
        }
        let kind = match rec[2].trim() {
            "policy" => EventKind::Policy,
            "crisis" => EventKind::Crisis,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("event type must be policy or crisis, got {other:?}"),
                })
            }
        };
        let magnitude = if rec[3].trim().is_empty() {
            1.0
        } else {
            parse_f64(&rec[3], line, "magnitude")?
        };
        out.push(EventRow {
            date,
            market,
            kind,
            magnitude,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrisisEvent {
    pub onset: NaiveDate,
    pub magnitude: f64,
    pub label: String,
}

impl CrisisEvent {
    pub fn new(onset: NaiveDate, magnitude: f64, label: impl Into<String>) -> Result<Self> {
        if !(magnitude > 0.0) || !magnitude.is_finite() {
            return Err(Error::Parameter(format!(
                "crisis magnitude must be positive, got {magnitude}"
            )));
        }
        Ok(Self {
            onset,
            magnitude,
            label: label.into(),
        })
    }
}

/// Placeholder episode dates (taper tantrum, COVID, 2022 tightening), δ = 1.
pub fn default_crisis_events() -> Vec<CrisisEvent> {
    [
        ("2013-05-22", "taper"),
        ("2020-02-24", "covid"),
        ("2022-03-16", "tightening"),
    ]
    .iter()
    .map(|(d, l)| CrisisEvent {
        onset: NaiveDate::parse_from_str(d, "%Y-%m-%d").expect("static date"),
        magnitude: 1.0,
        label: (*l).to_string(),
    })
    .collect()
}

#[derive(Debug, Clone)]
pub struct ShockSet {
    pub delta_p: DatedSeries,
    pub delta_i: DatedSeries,
    pub crisis_memory: DatedSeries,
    pub rv: DatedSeries,
    pub lambda: f64,
    pub kappa: f64,
}

/// Index of the first calendar date on or after `d`, if `d` lies in the span.
fn map_to_trading_day(calendar: &[NaiveDate], d: NaiveDate) -> Option<usize> {
    let (first, last) = (*calendar.first()?, *calendar.last()?);
    if d < first || d > last {
        return None;
    }
    Some(calendar.partition_point(|c| *c < d))
}

fn check_calendar(calendar: &[NaiveDate]) -> Result<()> {
    if calendar.is_empty() {
        return Err(Error::Input("empty calendar".into()));
    }
    if calendar.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input(
            "calendar dates must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Event-day indicator. Returns the series and warnings for dropped events.
pub fn policy_shocks(
    events: &[NaiveDate],
    calendar: &[NaiveDate],
    half_width: usize,
) -> Result<(DatedSeries, Vec<String>)> {
    check_calendar(calendar)?;
    let mut values = vec![0.0; calendar.len()];
    let mut warnings = Vec::new();
    for &d in events {
        match map_to_trading_day(calendar, d) {
            Some(i) => {
                let lo = i.saturating_sub(half_width);
                let hi = (i + half_width).min(calendar.len() - 1);
                values[lo..=hi].iter_mut().for_each(|v| *v = 1.0);
            }
            None => warnings.push(format!("policy event {d} outside the sample span; dropped")),
        }
    }
    Ok((DatedSeries::new(calendar.to_vec(), values)?, warnings))
}

/// Absolute-return deviation from the trailing median, scaled by the trailing MAD.
pub fn information_shocks(returns: &DatedSeries, window: usize) -> Result<DatedSeries> {
    if returns.len() <= window {
        return Err(Error::Input(format!(
            "information shocks need more than {window} observations, got {}",
            returns.len()
        )));
    }
    let abs = returns.with_values(returns.values().iter().map(|r| r.abs()).collect())?;
    let (med, mad) = timeseries::rolling_median_mad(&abs, window)?;
    let mut values = vec![0.0; window];
    for (k, a) in abs.values()[window..].iter().enumerate() {
        values.push((a - med.values()[k]) / mad.values()[k].max(MAD_FLOOR));
    }
    returns.with_values(values)
}

/// C_t = Σ_k δ_k exp(−λ (t − T_k)) 1(t ≥ T_k), time in trading days.
pub fn crisis_memory(
    events: &[CrisisEvent],
    lambda: f64,
    calendar: &[NaiveDate],
) -> Result<(DatedSeries, Vec<String>)> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Input(format!(
            "decay rate must be positive, got {lambda}"
        )));
    }
    check_calendar(calendar)?;
    let mut values = vec![0.0; calendar.len()];
    let mut warnings = Vec::new();
    for ev in events {
        if !(ev.magnitude > 0.0) {
            return Err(Error::Parameter(format!(
                "crisis {} has non-positive magnitude",
                ev.label
            )));
        }
        let Some(onset) = map_to_trading_day(calendar, ev.onset) else {
            warnings.push(format!(
                "crisis {} ({}) outside the sample span; dropped",
                ev.label, ev.onset
            ));
            continue;
        };
        for (t, v) in values.iter_mut().enumerate().skip(onset) {
            *v += ev.magnitude * (-lambda * (t - onset) as f64).exp();
        }
    }
    Ok((DatedSeries::new(calendar.to_vec(), values)?, warnings))
}

/// RV_t = κ σ̂²_t |r_t| with κ the least-squares fit of the proxy to r².
pub fn rv_proxy(returns: &DatedSeries, baseline_sigma: &DatedSeries) -> Result<(DatedSeries, f64)> {
    if returns.dates() != baseline_sigma.dates() {
        return Err(Error::Input(
            "returns and baseline sigma must share dates".into(),
        ));
    }
    let r = returns.values();
    let s = baseline_sigma.values();
    let x: Vec<f64> = r.iter().zip(s).map(|(r, s)| s * s * r.abs()).collect();
    let num: f64 = x.iter().zip(r).map(|(x, r)| x * r * r).sum();
    let den: f64 = x.iter().map(|x| x * x).sum();
    if !(den > 0.0) {
        return Err(Error::Degenerate(
            "all returns are zero; RV scaling undefined".into(),
        ));
    }
    let kappa = num / den;
    let rv = x.iter().map(|x| kappa * x).collect();
    Ok((returns.with_values(rv)?, kappa))
}

/// Volatility-scale regression target √RV.
pub fn rv_target(rv: &DatedSeries) -> Result<DatedSeries> {
    rv.with_values(rv.values().iter().map(|v| v.max(0.0).sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn cal(n: usize) -> Vec<NaiveDate> {
        timeseries::business_days(d(2021, 1, 4), n)
    }

    #[test]
    fn policy_indicator_rules() {
        let c = cal(20);
        let (s, w) = policy_shocks(&[], &c, 0).unwrap();
        assert!(s.values().iter().all(|v| *v == 0.0) && w.is_empty());
        let (s, _) = policy_shocks(&[c[3]], &c, 0).unwrap();
        assert_eq!(s.values().iter().sum::<f64>(), 1.0);
        // 2021-01-09 is a Saturday
        let (s, _) = policy_shocks(&[d(2021, 1, 9)], &c, 0).unwrap();
        assert_eq!(s.value_at(d(2021, 1, 11)), Some(1.0));
        let (s, _) = policy_shocks(&[c[5]], &c, 2).unwrap();
        assert_eq!(s.values().iter().sum::<f64>(), 5.0);
        let (_, w) = policy_shocks(&[d(2030, 1, 1)], &c, 0).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn information_shock_formula() {
        // history |r| = {0.5, 1, 1.5}: median 1, MAD 0.5
        let c = cal(4);
        let r = DatedSeries::new(c, vec![0.5, -1.0, 1.5, -2.0]).unwrap();
        let s = information_shocks(&r, 3).unwrap();
        assert_eq!(&s.values()[..3], &[0.0, 0.0, 0.0]);
        assert!((s.values()[3] - 2.0).abs() < 1e-12);
        let r = DatedSeries::new(cal(4), vec![0.5, -1.0, 1.5, 1.0]).unwrap();
        assert_eq!(information_shocks(&r, 3).unwrap().values()[3], 0.0);
        let r = DatedSeries::new(cal(4), vec![1.0, 1.0, 1.0, 1.5]).unwrap();
        let v = information_shocks(&r, 3).unwrap().values()[3];
        assert!(v.is_finite() && (v - 0.5 / MAD_FLOOR).abs() < 1e-3);
    }

    #[test]
    fn crisis_memory_closed_forms() {
        let c = cal(120);
        let ev = CrisisEvent::new(c[10], 1.0, "a").unwrap();
        let (m, _) = crisis_memory(std::slice::from_ref(&ev), 0.02, &c).unwrap();
        assert_eq!(m.values()[10], 1.0);
        assert!((m.values()[60] - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(m.values()[9], 0.0);

        let ev2 = CrisisEvent::new(c[30], 0.5, "b").unwrap();
        let (both, _) = crisis_memory(&[ev.clone(), ev2.clone()], 0.02, &c).unwrap();
        let (one, _) = crisis_memory(&[ev2], 0.02, &c).unwrap();
        let (zero, _) = crisis_memory(&[ev], 0.02, &c).unwrap();
        for t in 0..c.len() {
            assert!((both.values()[t] - one.values()[t] - zero.values()[t]).abs() < 1e-15);
        }
        assert!(crisis_memory(&[], 0.0, &c).is_err());
    }

    #[test]
    fn rv_kappa_matches_grid_oracle() {
        let c = cal(6);
        let r = DatedSeries::new(c.clone(), vec![0.4, -1.2, 0.7, 2.1, -0.3, 0.9]).unwrap();
        let s = DatedSeries::new(c, vec![0.8, 1.1, 1.3, 0.9, 1.6, 1.0]).unwrap();
        let (rv, kappa) = rv_proxy(&r, &s).unwrap();
        let loss = |k: f64| -> f64 {
            r.values()
                .iter()
                .zip(s.values())
                .map(|(r, s)| (r * r - s * s * k * r.abs()).powi(2))
                .sum()
        };
        // coarse-to-fine 1-D grid search
        let (mut lo, mut hi) = (0.0, 10.0);
        let mut best = 0.0;
        for _ in 0..8 {
            let step = (hi - lo) / 1000.0;
            best = (0..=1000).map(|i| lo + i as f64 * step).fold(lo, |b, k| {
                if loss(k) < loss(b) {
                    k
                } else {
                    b
                }
            });
            lo = best - step;
            hi = best + step;
        }
        assert!(((kappa - best) / kappa).abs() < 1e-6);
        assert!(rv.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn rv_zero_returns() {
        let c = cal(4);
        let s = DatedSeries::new(c.clone(), vec![1.0; 4]).unwrap();
        let r = DatedSeries::new(c.clone(), vec![0.0, 0.0, 2.0, 0.0]).unwrap();
        let (rv, k) = rv_proxy(&r, &s).unwrap();
        assert!(k.is_finite());
        assert_eq!(rv.values()[0], 0.0);
        let z = DatedSeries::new(c, vec![0.0; 4]).unwrap();
        assert!(matches!(rv_proxy(&z, &s), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rv_homogeneity() {
        let c = cal(5);
        let r = DatedSeries::new(c.clone(), vec![0.4, -1.2, 0.7, 2.1, -0.3]).unwrap();
        let s = DatedSeries::new(c.clone(), vec![0.8, 1.1, 1.3, 0.9, 1.6]).unwrap();
        let r2 = r
            .with_values(r.values().iter().map(|v| 2.0 * v).collect())
            .unwrap();
        let s2 = s
            .with_values(s.values().iter().map(|v| 2.0 * v).collect())
            .unwrap();
        let (a, ka) = rv_proxy(&r, &s).unwrap();
        let (b, kb) = rv_proxy(&r2, &s2).unwrap();
        // κ scales by 2^{-1}, the proxy by 2^2 like r²
        assert!((kb - ka / 2.0).abs() < 1e-12);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((y - 4.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn events_csv() {
        let text = "date,market,type,magnitude\n2021-01-05,ALL,crisis,1\n2021-01-06,IDN,policy,\n";
        let ev = read_events(text.as_bytes()).unwrap();
        assert_eq!(ev.len(), 2);
        assert!(ev[0].applies_to("KOR"));
        assert_eq!(ev[1].magnitude, 1.0);
        assert!(
            read_events("date,market,type,magnitude\n2021-01-05,X,other,1\n".as_bytes()).is_err()
        );
    }

    proptest! {
        #[test]
        fn info_shocks_sign_invariant(v in proptest::collection::vec(-5.0f64..5.0, 30..60), flips in proptest::collection::vec(any::<bool>(), 60)) {
            let c = cal(v.len());
            let a = DatedSeries::new(c.clone(), v.clone()).unwrap();
            let flipped: Vec<f64> = v.iter().zip(&flips).map(|(x, f)| if *f { -x } else { *x }).collect();
            let b = DatedSeries::new(c, flipped).unwrap();
            let (sa, sb) = (information_shocks(&a, 20).unwrap(), information_shocks(&b, 20).unwrap());
            prop_assert_eq!(sa.values(), sb.values());
        }

        #[test]
        fn crisis_memory_decays_between_onsets(lambda in 0.001f64..0.5, onset in 0usize..50, mag in 0.1f64..3.0) {
            let c = cal(80);
            let ev = CrisisEvent::new(c[onset], mag, "x").unwrap();
            let (m, _) = crisis_memory(&[ev], lambda, &c).unwrap();
            let v = m.values();
            prop_assert!((v[onset] - mag).abs() < 1e-12);
            for t in onset + 1..v.len() {
                prop_assert!(v[t] <= v[t - 1] && v[t] >= 0.0);
            }
        }
    }
}
