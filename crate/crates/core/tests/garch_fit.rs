use chrono::NaiveDate;
use irdm_core::dist::Innovation;
use irdm_core::garch::{self, Family, GarchParams, GarchSpec};
use irdm_core::timeseries::business_days;
use irdm_core::DatedSeries;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn truth() -> GarchParams {
    GarchParams {
        omega: 0.030,
        alpha: 0.033,
        beta: 0.879,
        gamma: 0.117,
        shape: 6.4,
        mu: 0.0,
    }
}

fn simulated(seed: u64, n: usize) -> DatedSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = garch::simulate_gjr(&truth(), Innovation::StudentT, n, 500, &mut rng).unwrap();
    DatedSeries::new(
        business_days(NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(), n),
        r,
    )
    .unwrap()
}

#[test]
fn gjr_fit_recovers_single_seed() {
    let s = simulated(1, 3613);
    let t0 = std::time::Instant::now();
    let fit = garch::fit_garch(&s, GarchSpec::new(Family::Gjr, Innovation::StudentT)).unwrap();
    eprintln!(
        "{:?} in {:?}, evals {}",
        fit.params,
        t0.elapsed(),
        fit.optimization.evaluations
    );
    assert!((fit.params.beta - 0.879).abs() < 0.08);
    assert!(fit.loglik >= fit.start_loglik);
    assert!(fit.persistence < 1.0);
}

#[test]
fn egarch_fit_on_gjr_data() {
    let s = simulated(2, 3000);
    let fit = garch::fit_garch(&s, GarchSpec::new(Family::Egarch, Innovation::StudentT)).unwrap();
    eprintln!("{:?}", fit.params);
    assert!(fit.loglik >= fit.start_loglik);
    assert!(fit.params.beta > 0.8 && fit.params.beta < 1.0);
    // leverage loads on the signed term with a negative sign
    assert!(fit.params.gamma < 0.0);
}

#[test]
fn student_t_and_ged_agree_on_signs() {
    let s = simulated(3, 3000);
    let t = garch::fit_garch(&s, GarchSpec::new(Family::Gjr, Innovation::StudentT)).unwrap();
    let g = garch::fit_garch(&s, GarchSpec::new(Family::Gjr, Innovation::Ged)).unwrap();
    eprintln!(
        "loglik t {} ged {} (diff per obs {})",
        t.loglik,
        g.loglik,
        (t.loglik - g.loglik) / 3000.0
    );
    assert!(((t.loglik - g.loglik) / 3000.0).abs() < 0.05);
    for (a, b) in [
        (t.params.alpha, g.params.alpha),
        (t.params.beta, g.params.beta),
        (t.params.gamma, g.params.gamma),
    ] {
        assert_eq!(a.signum(), b.signum());
    }
}
