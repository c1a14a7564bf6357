use std::collections::BTreeMap;

use chrono::NaiveDate;
use irdm_core::dist;
use irdm_core::irdm::{self, IrdmOptions};
use irdm_core::nirdm;
use irdm_core::panel::{self, PanelRow};
use irdm_core::simgen::{self, ScenarioConfig};
use irdm_core::timeseries::business_days;
use irdm_core::{DatedSeries, MarketId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn irdm_single_seed_close_to_truth() {
    let p = simgen::simulate(&ScenarioConfig::irdm_calibrated(1, 3000, 11)).unwrap();
    let m = p.markets()[0].clone();
    let f = irdm::fit_irdm(
        &p.paths[&m].sigma,
        &p.returns.series[&m],
        &p.shock_set(&m).unwrap(),
        &IrdmOptions::default(),
    )
    .unwrap();
    for (est, truth) in [(f.b1, 0.886), (f.b2, 0.019), (f.gamma1, 0.010)] {
        assert!((est - truth).abs() < 0.03, "{est} vs {truth}");
    }
    assert!((f.state_params.rho - 0.9).abs() < 0.05);
}

#[test]
fn network_model_nests_on_estimated_states() {
    let p = simgen::simulate(&ScenarioConfig::demo(3, 1500, 4)).unwrap();
    let opts = IrdmOptions::default();
    let mut fits = BTreeMap::new();
    for m in p.markets() {
        let f = irdm::fit_irdm(
            &p.paths[&m].sigma,
            &p.returns.series[&m],
            &p.shock_set(&m).unwrap(),
            &opts,
        )
        .unwrap();
        fits.insert(m, f);
    }
    let states: BTreeMap<MarketId, DatedSeries> = fits
        .iter()
        .map(|(m, f)| (m.clone(), f.state.clone()))
        .collect();
    for m in p.markets() {
        let f2 = nirdm::fit_nirdm(
            &p.paths[&m].sigma,
            &p.returns.series[&m],
            &p.shock_set(&m).unwrap(),
            &states,
            &p.network,
            &m,
            &opts,
            Some(fits[&m].state_params),
        )
        .unwrap();
        assert!(f2.sse <= fits[&m].sse);
    }
}

#[test]
fn panel_interaction_coefficients_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dates = business_days(NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(), 800);
    let mut rows = Vec::new();
    for (c, code) in ["AAA", "BBB", "CCC", "DDD", "EEE", "FFF"]
        .iter()
        .enumerate()
    {
        let country = MarketId::new(*code).unwrap();
        for d in &dates {
            let dp = if rng.random::<f64>() < 0.05 { 1.0 } else { 0.0 };
            let di = dist::standard_normal(&mut rng);
            let l = dist::standard_normal(&mut rng);
            let sigma = 1.0 + 0.1 * c as f64 + 0.2 * dp + 0.3 * di - 0.1 * l + 0.15 * dp * l
                - 0.05 * di * l
                + 0.2 * dist::standard_normal(&mut rng);
            rows.push(PanelRow {
                country: country.clone(),
                date: *d,
                sigma,
                delta_p: dp,
                delta_i: di,
                l,
            });
        }
    }
    let fit = panel::fit_panel(&rows).unwrap();
    for (name, truth) in [
        ("deltaP", 0.2),
        ("deltaI", 0.3),
        ("L", -0.1),
        ("deltaP:L", 0.15),
        ("deltaI:L", -0.05),
    ] {
        let k = fit.index(name).unwrap();
        assert!(
            (fit.coef[k] - truth).abs() < 4.0 * fit.se[k].max(0.005),
            "{name}: {} vs {truth}",
            fit.coef[k]
        );
    }
}
