//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Tolerances are fixed constants below.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use irdm_cli::config::{ScenarioName, SimulateOptions, ALL_STAGES};
use irdm_cli::{pipeline, simulate};
use irdm_core::dist::{self, Innovation};
use irdm_core::evaluate::{self, Loss};
use irdm_core::garch::{self, Family, GarchParams, GarchSpec};
use irdm_core::irdm::{self, IrdmOptions};
use irdm_core::midas::{self, MidasConfig, WeightScheme};
use irdm_core::networks::{self, DccParams, PerturbMode};
use irdm_core::nirdm::{self, PlaceboInput};
use irdm_core::shocks::{self, CrisisEvent};
use irdm_core::simgen::{self, ScenarioConfig, SyntheticPanel};
use irdm_core::timeseries::business_days;
use irdm_core::{DatedSeries, MarketId, ReturnPanel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 4).unwrap()
}

fn within_time(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

// ---------------------------------------------------------------- 1

fn std_t_logpdf(z: f64, nu: f64) -> f64 {
    ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln()
        - 0.5 * (nu + 1.0) * (1.0 + z * z / (nu - 2.0)).ln()
}

fn ged_logpdf(z: f64, nu: f64) -> f64 {
    let lambda =
        (2f64.powf(-2.0 / nu) * ln_gamma(1.0 / nu).exp() / ln_gamma(3.0 / nu).exp()).sqrt();
    nu.ln()
        - 0.5 * (z / lambda).abs().powf(nu)
        - (lambda * 2f64.powf(1.0 + 1.0 / nu) * ln_gamma(1.0 / nu).exp()).ln()
}

fn logpdf(dist: Innovation, z: f64, shape: f64) -> f64 {
    match dist {
        Innovation::StudentT => std_t_logpdf(z, shape),
        Innovation::Ged => ged_logpdf(z, shape),
    }
}

fn moment_variance(r: &[f64; 5]) -> f64 {
    let m = r.iter().sum::<f64>() / 5.0;
    r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 5.0
}

/// Five EGARCH steps written out one by one.
fn egarch_by_hand(r: &[f64; 5], p: &GarchParams, dist: Innovation) -> ([f64; 5], f64) {
    let e = r.map(|x| x - p.mu);
    let h1 = moment_variance(r).ln();
    let s1 = (0.5 * h1).exp();
    let z1 = e[0] / s1;
    let h2 = p.omega + p.alpha * z1.abs() + p.gamma * z1 + p.beta * h1;
    let s2 = (0.5 * h2).exp();
    let z2 = e[1] / s2;
    let h3 = p.omega + p.alpha * z2.abs() + p.gamma * z2 + p.beta * h2;
    let s3 = (0.5 * h3).exp();
    let z3 = e[2] / s3;
    let h4 = p.omega + p.alpha * z3.abs() + p.gamma * z3 + p.beta * h3;
    let s4 = (0.5 * h4).exp();
    let z4 = e[3] / s4;
    let h5 = p.omega + p.alpha * z4.abs() + p.gamma * z4 + p.beta * h4;
    let s5 = (0.5 * h5).exp();
    let z5 = e[4] / s5;
    let ll = [(z1, s1), (z2, s2), (z3, s3), (z4, s4), (z5, s5)]
        .iter()
        .map(|(z, s)| logpdf(dist, *z, p.shape) - s.ln())
        .sum();
    ([s1, s2, s3, s4, s5], ll)
}

/// Five GJR steps written out one by one.
fn gjr_by_hand(r: &[f64; 5], p: &GarchParams, dist: Innovation) -> ([f64; 5], f64) {
    let e = r.map(|x| x - p.mu);
    let lev = |x: f64| if x < 0.0 { p.gamma } else { 0.0 };
    let v1 = moment_variance(r);
    let v2 = p.omega + (p.alpha + lev(e[0])) * e[0] * e[0] + p.beta * v1;
    let v3 = p.omega + (p.alpha + lev(e[1])) * e[1] * e[1] + p.beta * v2;
    let v4 = p.omega + (p.alpha + lev(e[2])) * e[2] * e[2] + p.beta * v3;
    let v5 = p.omega + (p.alpha + lev(e[3])) * e[3] * e[3] + p.beta * v4;
    let s = [v1.sqrt(), v2.sqrt(), v3.sqrt(), v4.sqrt(), v5.sqrt()];
    let ll = (0..5)
        .map(|t| logpdf(dist, e[t] / s[t], p.shape) - s[t].ln())
        .sum();
    (s, ll)
}

fn c01() -> Outcome {
    let t0 = Instant::now();
    let cases: [(Family, Innovation, GarchParams, [f64; 5]); 3] = [
        (
            Family::Egarch,
            Innovation::StudentT,
            GarchParams {
                omega: -0.05,
                alpha: 0.15,
                beta: 0.95,
                gamma: -0.08,
                shape: 6.0,
                mu: 0.0,
            },
            [0.5, -1.2, 0.3, 2.1, -0.7],
        ),
        (
            Family::Gjr,
            Innovation::StudentT,
            GarchParams {
                omega: 0.030,
                alpha: 0.033,
                beta: 0.879,
                gamma: 0.117,
                shape: 6.4,
                mu: 0.0,
            },
            [-0.9, 0.4, 1.6, -2.2, 0.1],
        ),
        (
            Family::Gjr,
            Innovation::Ged,
            GarchParams {
                omega: 0.02,
                alpha: 0.05,
                beta: 0.9,
                gamma: 0.08,
                shape: 1.4,
                mu: 0.05,
            },
            [1.1, -0.3, -1.4, 0.8, 0.2],
        ),
    ];
    let mut worst = 0.0f64;
    for (family, dist, p, r) in cases {
        let (sig, ll) = match family {
            Family::Egarch => egarch_by_hand(&r, &p, dist),
            Family::Gjr => gjr_by_hand(&r, &p, dist),
        };
        let f = garch::filter(&r, &p, &GarchSpec::new(family, dist)).expect("filter runs");
        for t in 0..5 {
            worst = worst.max((f.sigma[t] - sig[t]).abs());
        }
        worst = worst.max((f.loglik - ll).abs());
    }
    let el = t0.elapsed();
    outcome(
        worst <= 1e-10 && within_time(el, Duration::from_secs(1)),
        format!(
            "max |filter - hand recursion| = {worst:.2e} (tol 1e-10), {:.3}s (< 1s)",
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn c02() -> Outcome {
    let t0 = Instant::now();
    let truth = simgen::reference_gjr();
    let n = 3613;
    let fits: Vec<(f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = garch::simulate_gjr(&truth, Innovation::StudentT, n, 500, &mut rng)
                .expect("simulate");
            let s = DatedSeries::new(business_days(start(), n), r).expect("series");
            let f = garch::fit_garch(&s, GarchSpec::new(Family::Gjr, Innovation::StudentT))
                .expect("fit");
            (
                (f.params.beta - truth.beta).abs(),
                (f.params.gamma - truth.gamma).abs(),
            )
        })
        .collect();
    let mb = median(fits.iter().map(|f| f.0).collect());
    let mg = median(fits.iter().map(|f| f.1).collect());
    let el = t0.elapsed();
    outcome(
        mb <= 0.05 && mg <= 0.05 && within_time(el, Duration::from_secs(120)),
        format!(
            "median |beta err| = {mb:.4}, median |gamma err| = {mg:.4} (tol 0.05), {:.1}s (< 120s)",
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 3

fn c03() -> Outcome {
    let aic = garch::aic_norm(-4646.430, 5, 3613);
    let pers = garch::gjr_persistence(0.033, 0.879, 0.117);
    let aa = irdm::aic_approx(15.982, 3613, 5);
    let ok = (aic - 2.574).abs() <= 0.001
        && (pers - 0.970).abs() <= 0.001
        && (aa + 19575.45).abs() <= 0.5;
    outcome(
        ok,
        format!(
            "aic_norm = {aic:.5} (2.574 +/- 0.001), persistence = {pers:.4} (0.970 +/- 0.001), aic_approx = {aa:.3} (-19575.45 +/- 0.5)"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn c04() -> Outcome {
    let cal = business_days(start(), 60);
    let ev = CrisisEvent::new(cal[0], 1.0, "onset").unwrap();
    let (c, _) = shocks::crisis_memory(&[ev], 0.02, &cal).unwrap();
    let err = (c.values()[50] - (-1f64).exp()).abs();
    outcome(
        err <= 1e-12,
        format!("|C(50) - e^-1| = {err:.2e} (tol 1e-12)"),
    )
}

// ---------------------------------------------------------------- 5

fn c05() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_sum = 0.0f64;
    let mut negative = 0;
    for k in 0..100 {
        let cfg = if k % 2 == 0 {
            MidasConfig {
                theta: [rng.random_range(-1.0..1.0), rng.random_range(-0.1..0.1)],
                ..MidasConfig::default()
            }
        } else {
            MidasConfig {
                scheme: WeightScheme::Beta,
                theta: [rng.random_range(0.2..5.0), rng.random_range(0.2..5.0)],
                ..MidasConfig::default()
            }
        };
        let w = midas::midas_weights(&cfg).unwrap();
        negative += w.iter().filter(|x| **x < 0.0).count();
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
    }
    let flat = midas::midas_weights(&MidasConfig {
        theta: [0.0, 0.0],
        ..MidasConfig::default()
    })
    .unwrap();
    let k = flat.len() as f64;
    let flat_err = flat.iter().map(|x| (x - 1.0 / k).abs()).fold(0.0, f64::max);
    outcome(
        negative == 0 && worst_sum <= 1e-12 && flat_err <= 1e-12,
        format!(
            "negative weights {negative}, max |sum - 1| = {worst_sum:.2e} (tol 1e-12), max |w - 1/K| at theta=0 = {flat_err:.2e}"
        ),
    )
}

// ---------------------------------------------------------------- 6 and 11

struct IrdmRun {
    errors: [f64; 5],
    nested: bool,
    enc: f64,
}

fn irdm_runs() -> Vec<IrdmRun> {
    let truth = [0.080, 0.886, 0.019, 0.006, 0.010];
    (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let p = simgen::simulate(&ScenarioConfig::irdm_calibrated(1, 3613, seed))
                .expect("simulate");
            let m = p.markets()[0].clone();
            let (target, r) = (&p.paths[&m].sigma, &p.returns.series[&m]);
            let f = irdm::fit_irdm(
                target,
                r,
                &p.shock_set(&m).unwrap(),
                &IrdmOptions::default(),
            )
            .expect("M1");
            let b = irdm::fit_baseline(target, r).expect("M0");
            let est = [f.b0, f.b1, f.b2, f.psi, f.gamma1];
            let e0 = evaluate::forecast_errors(target, &b.fitted).unwrap();
            let e1 = evaluate::forecast_errors(target, &f.fitted).unwrap();
            IrdmRun {
                errors: std::array::from_fn(|k| (est[k] - truth[k]).abs()),
                nested: f.sse <= b.sse,
                enc: evaluate::enc_new(e0.values(), e1.values())
                    .unwrap()
                    .statistic,
            }
        })
        .collect()
}

fn c06(runs: &[IrdmRun], elapsed: Duration) -> Outcome {
    let med: Vec<f64> = (0..5)
        .map(|k| median(runs.iter().map(|r| r.errors[k]).collect()))
        .collect();
    let nested = runs.iter().filter(|r| r.nested).count();
    let ok = med.iter().all(|e| *e <= 0.02)
        && nested == runs.len()
        && within_time(elapsed, Duration::from_secs(120));
    outcome(
        ok,
        format!(
            "median |err| b0 {:.4} b1 {:.4} b2 {:.4} psi {:.4} gamma1 {:.4} (tol 0.02); SSE(M1) <= SSE(M0) on {nested}/{}; {:.1}s (< 120s)",
            med[0],
            med[1],
            med[2],
            med[3],
            med[4],
            runs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn c11(runs: &[IrdmRun]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let e: Vec<f64> = (0..500).map(|_| dist::standard_normal(&mut rng)).collect();
    let same = evaluate::enc_new(&e, &e).unwrap().statistic;
    let med = median(runs.iter().map(|r| r.enc).collect());
    let order = med.log10().round();
    outcome(
        same == 0.0 && order == 2.0,
        format!("enc_new(e, e) = {same}; median synthetic ENC-NEW = {med:.1}, order 10^{order} (want 10^2)"),
    )
}

// ---------------------------------------------------------------- 7

fn c07() -> Outcome {
    let rows: Vec<(f64, bool)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let p = simgen::simulate(&ScenarioConfig::nirdm_calibrated(4, 3613, seed))
                .expect("simulate");
            let opts = IrdmOptions::default();
            let mut m1 = BTreeMap::new();
            for m in p.markets() {
                let f = irdm::fit_irdm(
                    &p.paths[&m].sigma,
                    &p.returns.series[&m],
                    &p.shock_set(&m).unwrap(),
                    &opts,
                )
                .expect("M1");
                m1.insert(m, f);
            }
            let states: BTreeMap<MarketId, DatedSeries> = m1
                .iter()
                .map(|(m, f)| (m.clone(), f.state.clone()))
                .collect();
            let mut nested = true;
            let mut g2_err = f64::NAN;
            for (k, m) in p.markets().iter().enumerate() {
                let (target, r) = (&p.paths[m].sigma, &p.returns.series[m]);
                let sh = p.shock_set(m).unwrap();
                let b = irdm::fit_baseline(target, r).expect("M0");
                let f2 = nirdm::fit_nirdm(
                    target,
                    r,
                    &sh,
                    &states,
                    &p.network,
                    m,
                    &opts,
                    Some(m1[m].state_params),
                )
                .expect("M2");
                nested &= f2.sse <= m1[m].sse && m1[m].sse <= b.sse;
                if k == 0 {
                    g2_err = (f2.gamma2 - 0.072).abs();
                }
            }
            (g2_err, nested)
        })
        .collect();
    let med = median(rows.iter().map(|r| r.0).collect());
    let nested = rows.iter().filter(|r| r.1).count();
    outcome(
        med <= 0.02 && nested == rows.len(),
        format!(
            "median |gamma2 err| = {med:.4} (tol 0.02); SSE(M2) <= SSE(M1) <= SSE(M0) on {nested}/{} seeds (all markets)",
            rows.len()
        ),
    )
}

// ---------------------------------------------------------------- 8

fn c08() -> Outcome {
    let n = 5;
    let qbar = DMatrix::from_row_slice(n, n, &simgen::banded_correlation(n, 0.5, 0.2).concat());
    let params = DccParams {
        a: 0.05,
        b: 0.9,
        qbar,
    };
    let z = simgen::simulate_dcc_z(&params, 300, 8.0, 8).unwrap();
    let rho = networks::dcc_filter(&z, &params).unwrap();
    let markets: Vec<MarketId> = (0..n)
        .map(|i| MarketId::new(format!("M{i}")).unwrap())
        .collect();
    let net = networks::correlation_network(markets, business_days(start(), 300), rho).unwrap();
    let row_err = net
        .wc
        .iter()
        .flat_map(|w| (0..n).map(move |i| (w.row(i).sum() - 1.0).abs()))
        .fold(0.0, f64::max);

    let sorted_rows = |w: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let mut r: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).collect();
                r.sort_by(|a, b| a.partial_cmp(b).unwrap());
                r
            })
            .collect()
    };
    let perm = networks::perturb_network(&net, PerturbMode::Permute, 0.0, 3).unwrap();
    let multisets = net
        .wc
        .iter()
        .zip(&perm.wc)
        .all(|(a, b)| sorted_rows(a) == sorted_rows(b));
    let moved = net.wc.iter().zip(&perm.wc).any(|(a, b)| a != b);

    let sparse = networks::perturb_network(&net, PerturbMode::Sparsify, 0.0, 0).unwrap();
    let identity = sparse.wc == net.wc;

    let wi = networks::similarity_network(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
    let sixth = wi[(0, 1)] == 1.0 / 6.0 && wi[(1, 0)] == 1.0 / 6.0;
    outcome(
        row_err <= 1e-12 && multisets && moved && identity && sixth,
        format!(
            "max |row sum - 1| = {row_err:.2e} (tol 1e-12); permuted row multisets equal: {multisets}; sparsify(0) identity: {identity}; W^I(3-4-5) = {}",
            wi[(0, 1)]
        ),
    )
}

// ---------------------------------------------------------------- 9

fn c09() -> Outcome {
    let n = 4;
    let dates = business_days(start(), 3000);
    let errs: Vec<f64> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let qbar = DMatrix::from_row_slice(n, n, &simgen::equicorrelation(n, 0.4).concat());
            let z = simgen::simulate_dcc_z(
                &DccParams {
                    a: 0.05,
                    b: 0.90,
                    qbar,
                },
                3000,
                8.0,
                seed,
            )
            .unwrap();
            let series = (0..n)
                .map(|k| {
                    (
                        MarketId::new(format!("M{k}")).unwrap(),
                        DatedSeries::new(dates.clone(), z.iter().map(|r| r[k]).collect()).unwrap(),
                    )
                })
                .collect();
            let f = networks::fit_dcc(&ReturnPanel { series }).expect("dcc");
            (f.params.a + f.params.b - 0.95).abs()
        })
        .collect();
    let med = median(errs);
    outcome(
        med <= 0.05,
        format!("median |(a+b) - 0.95| = {med:.4} (tol 0.05)"),
    )
}

// ---------------------------------------------------------------- 10

fn c10() -> Outcome {
    let t0 = Instant::now();
    let t = 500;
    let mut rejections = 0;
    let mut antisymmetric = true;
    for rep in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + rep);
        let e0: Vec<f64> = (0..t).map(|_| dist::standard_normal(&mut rng)).collect();
        let e1: Vec<f64> = (0..t).map(|_| dist::standard_normal(&mut rng)).collect();
        let a = evaluate::dm_test(&e0, &e1, Loss::Squared, None).unwrap();
        let b = evaluate::dm_test(&e1, &e0, Loss::Squared, None).unwrap();
        antisymmetric &= a.statistic == -b.statistic;
        if a.p_value < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / 1000.0;

    let mut negative = 0;
    for rep in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + rep);
        let common: Vec<f64> = (0..t).map(|_| dist::standard_normal(&mut rng)).collect();
        let extra: Vec<f64> = (0..t)
            .map(|_| 0.8 * dist::standard_normal(&mut rng))
            .collect();
        let restricted: Vec<f64> = common.iter().zip(&extra).map(|(c, x)| c + x).collect();
        if evaluate::dm_test(&common, &restricted, Loss::Squared, None)
            .unwrap()
            .statistic
            < 0.0
        {
            negative += 1;
        }
    }
    let el = t0.elapsed();
    outcome(
        (0.03..=0.07).contains(&rate) && antisymmetric && negative == 20 && within_time(el, Duration::from_secs(60)),
        format!(
            "null rejection rate {:.1}% (3%..7%); swap antisymmetry exact: {antisymmetric}; richer-better statistics negative {negative}/20; {:.1}s (< 60s)",
            100.0 * rate,
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 12

fn placebo_inputs<'a>(p: &'a SyntheticPanel, net_c: &'a [DatedSeries]) -> Vec<PlaceboInput<'a>> {
    p.markets()
        .iter()
        .zip(net_c)
        .map(|(m, net_c)| PlaceboInput {
            target: &p.paths[m].sigma,
            returns: &p.returns.series[m],
            crisis: &p.crisis_memory,
            state: &p.paths[m].state,
            net_c,
        })
        .collect()
}

fn c12() -> Outcome {
    let rows: Vec<(bool, bool, bool)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let mut cfg = ScenarioConfig::demo(4, 2000, seed);
            cfg.info.common_weight = 0.6;
            let p = simgen::simulate(&cfg).expect("simulate");
            let states = p.true_states();
            let perm =
                networks::perturb_network(&p.network, PerturbMode::Permute, 0.0, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let (mut real, mut permuted, mut noise) = (Vec::new(), Vec::new(), Vec::new());
            for m in p.markets() {
                real.push(
                    nirdm::spillover_terms(&states, &p.network, &m)
                        .unwrap()
                        .net_c,
                );
                permuted.push(nirdm::spillover_terms(&states, &perm, &m).unwrap().net_c);
                let v = (0..p.dates().len())
                    .map(|_| dist::standard_normal(&mut rng))
                    .collect();
                noise.push(DatedSeries::new(p.dates().to_vec(), v).unwrap());
            }
            let out = nirdm::placebo_regression(&[
                (nirdm::REAL_LABEL.to_string(), placebo_inputs(&p, &real)),
                ("permuted".into(), placebo_inputs(&p, &permuted)),
                ("noise".into(), placebo_inputs(&p, &noise)),
            ])
            .expect("placebo");
            (
                out[0].estimate >= out[1].estimate,
                out[0].p_value < 0.05 && out[1].p_value < 0.05,
                out[2].p_value >= 0.05,
            )
        })
        .collect();
    let ge = rows.iter().filter(|r| r.0).count();
    let both = rows.iter().filter(|r| r.1).count();
    let quiet = rows.iter().filter(|r| r.2).count();
    outcome(
        ge >= 14 && both >= 14 && quiet >= 18,
        format!(
            "real >= permuted {ge}/20 and both significant {both}/20 (need >= 70%); noise insignificant {quiet}/20 (need >= 90%)"
        ),
    )
}

// ---------------------------------------------------------------- 13, 14, 15

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).expect("csv exists");
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            headers
                .iter()
                .zip(r.unwrap().iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

const TABLE_FILES: [&str; 7] = [
    "table1_baseline_garch.csv",
    "table2_irdm.csv",
    "table3_panel.csv",
    "table4_nirdm.csv",
    "table5_model_compare.csv",
    "table6_dm_enc.csv",
    "table7_placebo.csv",
];

struct PipelineRuns {
    first: Result<Duration, String>,
    second: Result<Duration, String>,
    dir: tempfile::TempDir,
}

fn pipeline_runs() -> PipelineRuns {
    let dir = tempfile::tempdir().unwrap();
    let opts = SimulateOptions {
        scenario: ScenarioName::Demo,
        n_markets: 4,
        t: 2000,
    };
    let run = |sub: &str| -> Result<Duration, String> {
        let bundle = dir.path().join("bundle");
        let t0 = Instant::now();
        let mut cfg = simulate::write_bundle(&opts, 42, &bundle).map_err(|e| e.to_string())?;
        cfg.out_dir = dir.path().join(sub);
        pipeline::run(&cfg, &ALL_STAGES).map_err(|e| e.to_string())?;
        Ok(t0.elapsed())
    };
    let first = run("run1");
    let second = run("run2");
    PipelineRuns { first, second, dir }
}

fn c13(runs: &PipelineRuns) -> Outcome {
    if let Err(e) = &runs.first {
        return outcome(false, format!("pipeline failed: {e}"));
    }
    let rows = read_csv(&runs.dir.path().join("run1/tableA3_sparsity.csv"));
    let worst = rows
        .iter()
        .map(|r| r["drmse_pct"].parse::<f64>().unwrap().abs())
        .fold(0.0, f64::max);
    let thresholds: std::collections::BTreeSet<String> =
        rows.iter().map(|r| r["threshold"].clone()).collect();
    outcome(
        !rows.is_empty() && worst < 0.5 && thresholds.len() == 2,
        format!("max |dRMSE| = {worst:.4}% (< 0.5%) over thresholds {thresholds:?}"),
    )
}

fn c14(runs: &PipelineRuns) -> Outcome {
    if let (Err(e), _) | (_, Err(e)) = (&runs.first, &runs.second) {
        return outcome(false, format!("pipeline failed: {e}"));
    }
    let mut names: Vec<String> = std::fs::read_dir(runs.dir.path().join("run1"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| {
            let a = std::fs::read(runs.dir.path().join("run1").join(n)).unwrap();
            let b = std::fs::read(runs.dir.path().join("run2").join(n)).ok();
            b.as_deref() != Some(a.as_slice())
        })
        .collect();
    outcome(
        differing.is_empty() && !names.is_empty(),
        format!(
            "{} CSV files compared, {} differ {differing:?}",
            names.len(),
            differing.len()
        ),
    )
}

fn c15(runs: &PipelineRuns) -> Outcome {
    let el = match &runs.first {
        Ok(d) => *d,
        Err(e) => return outcome(false, format!("pipeline failed: {e}")),
    };
    let missing: Vec<&str> = TABLE_FILES
        .iter()
        .copied()
        .filter(|f| !runs.dir.path().join("run1").join(f).is_file())
        .collect();
    outcome(
        missing.is_empty() && within_time(el, Duration::from_secs(300)),
        format!(
            "4 markets x 2000 days in {:.1}s (< 300s); missing table files {missing:?}",
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- driver

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

fn main() {
    // `cargo test` passes harness flags such as --list or a filter; they select nothing here
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |id: u32, name: &'static str, o: Outcome| {
        println!(
            "[{}] criterion {id:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o));
    };
    record(1, "likelihood oracle equivalence", guarded(c01));
    record(2, "GARCH parameter recovery", guarded(c02));
    record(3, "convention reconstruction", guarded(c03));
    record(4, "crisis memory closed form", guarded(c04));
    record(5, "MIDAS weights", guarded(c05));

    let t0 = Instant::now();
    let irdm = catch_unwind(irdm_runs);
    let irdm_elapsed = t0.elapsed();
    match &irdm {
        Ok(runs) => record(6, "IRDM recovery", guarded(|| c06(runs, irdm_elapsed))),
        Err(_) => record(6, "IRDM recovery", outcome(false, "recovery runs panicked")),
    }
    record(7, "N-IRDM recovery and nesting", guarded(c07));
    record(8, "network algebra", guarded(c08));
    record(9, "DCC recovery", guarded(c09));
    record(10, "DM size and sign", guarded(c10));
    match &irdm {
        Ok(runs) => record(11, "ENC-NEW", guarded(|| c11(runs))),
        Err(_) => record(11, "ENC-NEW", outcome(false, "recovery runs panicked")),
    }
    record(12, "placebo machinery", guarded(c12));

    let runs = pipeline_runs();
    record(13, "sparsity robustness", guarded(|| c13(&runs)));
    record(14, "pipeline determinism", guarded(|| c14(&runs)));
    record(15, "end-to-end smoke", guarded(|| c15(&runs)));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
