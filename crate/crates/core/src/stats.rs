//! Small statistical helpers shared across modules.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance (divisor n).
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (divisor n − 1).
pub fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Two-sided standard-normal p-value.
pub fn normal_two_sided_p(stat: f64) -> f64 {
    if stat.is_infinite() {
        return 0.0;
    }
    (2.0 * (1.0 - normal_cdf(stat.abs()))).clamp(0.0, 1.0)
}

/// Upper-tail chi-square p-value.
pub fn chi2_sf(stat: f64, dof: usize) -> f64 {
    let chi = ChiSquared::new(dof as f64).expect("positive dof");
    (1.0 - chi.cdf(stat)).clamp(0.0, 1.0)
}

/// Sample autocorrelations at lags 1..=lags.
pub fn autocorrelations(x: &[f64], lags: usize) -> Vec<f64> {
    let m = mean(x);
    let c0: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (1..=lags)
        .map(|k| {
            x[k..]
                .iter()
                .zip(x)
                .map(|(a, b)| (a - m) * (b - m))
                .sum::<f64>()
                / c0
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestStat {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
}

pub fn ljung_box(x: &[f64], lags: usize) -> Result<TestStat> {
    let n = x.len();
    if lags == 0 || lags >= n {
        return Err(Error::Input(format!("lags must be in 1..{n}, got {lags}")));
    }
    if variance(x) == 0.0 {
        return Err(Error::Degenerate(
            "Ljung-Box on zero-variance series".into(),
        ));
    }
    let rho = autocorrelations(x, lags);
    let nf = n as f64;
    let q = nf
        * (nf + 2.0)
        * rho
            .iter()
            .enumerate()
            .map(|(i, r)| r * r / (nf - (i + 1) as f64))
            .sum::<f64>();
    Ok(TestStat {
        statistic: q,
        p_value: chi2_sf(q, lags),
        dof: lags,
    })
}

/// Engle's ARCH-LM: regress z² on a constant and its own `lags` lags; LM = T·R².
pub fn arch_lm(z: &[f64], lags: usize) -> Result<TestStat> {
    let n = z.len();
    if lags == 0 || lags >= n {
        return Err(Error::Input(format!("lags must be in 1..{n}, got {lags}")));
    }
    let sq: Vec<f64> = z.iter().map(|v| v * v).collect();
    if variance(&sq) == 0.0 {
        return Err(Error::Degenerate("ARCH-LM on zero-variance squares".into()));
    }
    let y = &sq[lags..];
    let t = y.len();
    let ones = vec![1.0; t];
    let lagged: Vec<Vec<f64>> = (1..=lags).map(|k| sq[lags - k..n - k].to_vec()).collect();
    let mut cols: Vec<&[f64]> = vec![&ones];
    cols.extend(lagged.iter().map(|c| c.as_slice()));
    let fit = linalg::ols(&cols, y)?;
    let ym = mean(y);
    let sst: f64 = y.iter().map(|v| (v - ym) * (v - ym)).sum();
    let r2 = 1.0 - fit.sse / sst;
    let lm = t as f64 * r2;
    Ok(TestStat {
        statistic: lm,
        p_value: chi2_sf(lm, lags),
        dof: lags,
    })
}

/// Newey–West long-run variance with Bartlett weights.
pub fn newey_west_lrv(d: &[f64], bandwidth: usize) -> f64 {
    let n = d.len();
    let m = mean(d);
    let dev: Vec<f64> = d.iter().map(|v| v - m).collect();
    let gamma =
        |k: usize| -> f64 { dev[k..].iter().zip(&dev).map(|(a, b)| a * b).sum::<f64>() / n as f64 };
    let mut lrv = gamma(0);
    for k in 1..=bandwidth.min(n.saturating_sub(1)) {
        let w = 1.0 - k as f64 / (bandwidth as f64 + 1.0);
        lrv += 2.0 * w * gamma(k);
    }
    lrv
}

pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ljung_box_hand_computed() {
        let x = [1.0, -1.0, 2.0, 0.0, -2.0, 1.0];
        // mean 1/6; brute-force autocorrelation at lag 1
        let m = 1.0 / 6.0;
        let c0: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
        let c1: f64 = (1..6).map(|t| (x[t] - m) * (x[t - 1] - m)).sum();
        let r1 = c1 / c0;
        let q = 6.0 * 8.0 * r1 * r1 / 5.0;
        let lb = ljung_box(&x, 1).unwrap();
        assert!((lb.statistic - q).abs() < 1e-12);
        assert!(ljung_box(&x, 6).is_err());
        assert!(ljung_box(&[2.0; 10], 2).is_err());
    }

    #[test]
    fn nw_bandwidth_zero_is_variance() {
        let d = [1.0, 3.0, -2.0, 0.5];
        assert!((newey_west_lrv(&d, 0) - variance(&d)).abs() < 1e-15);
    }

    #[test]
    fn chi2_and_normal_tails() {
        assert!((chi2_sf(3.841458820694124, 1) - 0.05).abs() < 1e-9);
        assert!((normal_two_sided_p(1.959963984540054) - 0.05).abs() < 1e-9);
        assert_eq!(normal_two_sided_p(0.0), 1.0);
    }
}
