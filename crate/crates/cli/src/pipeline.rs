//! Stage implementations. Each stage reads the products of earlier stages from
//! [`Data`], writes its CSVs, and records warnings in the manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::time::Instant;

use chrono::NaiveDate;
use irdm_core::evaluate::{self, ErrorMode, ModelSummary};
use irdm_core::garch::{self, GarchFit, GarchSpec};
use irdm_core::irdm::{self, BaselineFit, IrdmFit, IrdmOptions};
use irdm_core::midas;
use irdm_core::networks::{self, NetworkSequence, PerturbMode};
use irdm_core::nirdm::{self, NirdmFit, PlaceboInput};
use irdm_core::panel::{self, PanelRow};
use irdm_core::shocks::{self, CrisisEvent, EventKind, EventRow, ShockSet};
use irdm_core::timeseries::{self, AlignMode, DatedSeries, MarketId, ReturnPanel};
use rayon::prelude::*;

use crate::config::{RunConfig, Stage};
use crate::output::{num, RunManifest, StageRecord, Writer};
use crate::CliError;

type CoreResult<T> = irdm_core::Result<T>;

struct MarketShocks {
    delta_p: DatedSeries,
    delta_i: DatedSeries,
    crisis: DatedSeries,
}

#[derive(Default)]
struct Data {
    returns: ReturnPanel,
    markets: Vec<MarketId>,
    crisis_events: Vec<CrisisEvent>,
    shocks: BTreeMap<MarketId, MarketShocks>,
    index: BTreeMap<MarketId, DatedSeries>,
    sigma_fit: BTreeMap<MarketId, GarchFit>,
    target: BTreeMap<MarketId, DatedSeries>,
    shock_sets: BTreeMap<MarketId, ShockSet>,
    m0: BTreeMap<MarketId, BaselineFit>,
    m1: BTreeMap<MarketId, IrdmFit>,
    m2: BTreeMap<MarketId, NirdmFit>,
    network: Option<NetworkSequence>,
}

impl Data {
    fn returns_of(&self, m: &MarketId) -> &DatedSeries {
        &self.returns.series[m]
    }
}

/// Runs `stages` in order, writing outputs and the manifest into the output directory.
pub fn run(cfg: &RunConfig, stages: &[Stage]) -> Result<RunManifest, CliError> {
    let mut cfg = cfg.clone();
    cfg.stages = stages.to_vec();
    cfg.validate()?;
    let mut writer = Writer::new(&cfg.out_dir)?;
    let mut manifest = RunManifest::new(cfg.clone());
    let mut data = Data::default();
    for &stage in stages {
        let start = Instant::now();
        let before = writer.files.len();
        let mut warnings = Vec::new();
        let result = run_stage(stage, &cfg, &mut data, &mut writer, &mut warnings);
        manifest.warnings.extend(
            warnings
                .into_iter()
                .map(|w| format!("[{}] {w}", stage.name())),
        );
        manifest.stages.push(StageRecord {
            name: stage.name().to_string(),
            seconds: start.elapsed().as_secs_f64(),
            outputs: writer.files[before..]
                .iter()
                .map(|f| f.file.clone())
                .collect(),
        });
        manifest.outputs = writer.files.clone();
        if let Err(e) = result {
            manifest.stages.pop();
            manifest.failed_stage = Some(stage.name().to_string());
            manifest.error = Some(e.to_string());
            writer.write_manifest(&manifest)?;
            return Err(match e {
                StageError::Core(source) => CliError::Stage {
                    stage: stage.name().to_string(),
                    source,
                },
                StageError::Io(e) => CliError::Io(e),
            });
        }
    }
    if stages.contains(&Stage::Nirdm) {
        manifest.notes.push(
            "table4_nirdm.csv aic is n ln(SSE/n) + 2k with k = 7, the convention of table5_model_compare.csv; \
             it is not the likelihood scale of the GARCH aic column"
                .into(),
        );
    }
    manifest.completed = true;
    writer.write_manifest(&manifest)?;
    Ok(manifest)
}

#[derive(Debug)]
enum StageError {
    Core(irdm_core::Error),
    Io(std::io::Error),
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageError::Core(e) => e.fmt(f),
            StageError::Io(e) => e.fmt(f),
        }
    }
}

impl From<irdm_core::Error> for StageError {
    fn from(e: irdm_core::Error) -> Self {
        StageError::Core(e)
    }
}

impl From<std::io::Error> for StageError {
    fn from(e: std::io::Error) -> Self {
        StageError::Io(e)
    }
}

type StageResult = Result<(), StageError>;

fn run_stage(
    stage: Stage,
    cfg: &RunConfig,
    d: &mut Data,
    w: &mut Writer,
    warn: &mut Vec<String>,
) -> StageResult {
    match stage {
        Stage::Ingest => ingest(cfg, d, w, warn),
        Stage::Shocks => build_shocks(cfg, d, w, warn),
        Stage::Baseline => baseline(cfg, d, w, warn),
        Stage::Irdm => fit_irdm(cfg, d, w, warn),
        Stage::Networks => build_networks(cfg, d, w, warn),
        Stage::Nirdm => fit_nirdm(cfg, d, w, warn),
        Stage::Panel => fit_panel(cfg, d, w, warn),
        Stage::Evaluate => evaluate_models(cfg, d, w, warn),
        Stage::Robustness => robustness(cfg, d, w, warn),
    }
}

fn open(path: &Option<std::path::PathBuf>) -> CoreResult<Option<File>> {
    path.as_ref()
        .map(File::open)
        .transpose()
        .map_err(irdm_core::Error::from)
}

fn dated_rows<'a>(
    series: impl IntoIterator<Item = (&'a MarketId, &'a DatedSeries)>,
) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (m, s) in series {
        for (dt, v) in s.dates().iter().zip(s.values()) {
            rows.push(vec![dt.to_string(), m.to_string(), num(*v)]);
        }
    }
    rows
}

fn ingest(cfg: &RunConfig, d: &mut Data, w: &mut Writer, warn: &mut Vec<String>) -> StageResult {
    let path = cfg.inputs.prices.as_ref().expect("validated");
    let prices = timeseries::load_prices(path)?;
    let returns = timeseries::to_log_returns(&prices, cfg.ingest.scale)?;
    let returns = if cfg.markets.is_empty() {
        returns
    } else {
        let ids = cfg
            .markets
            .iter()
            .map(|m| MarketId::new(m.clone()))
            .collect::<CoreResult<Vec<_>>>()?;
        returns.select(&ids)?
    };
    let returns = if returns.series.len() >= 2 && cfg.ingest.align == AlignMode::Intersect {
        let before: usize = returns.series.values().map(|s| s.len()).max().unwrap_or(0);
        let aligned = timeseries::align_panel(&returns, AlignMode::Intersect)?;
        let after = aligned.common_dates().map_or(0, |c| c.len());
        if after < before {
            warn.push(format!(
                "intersect alignment kept {after} of up to {before} dates"
            ));
        }
        aligned
    } else {
        returns
    };
    d.markets = returns.markets();
    let rows = dated_rows(returns.series.iter());
    w.csv("returns.csv", &["date", "market", "return"], &rows)?;
    d.returns = returns;
    Ok(())
}

fn crisis_from_events(events: &[EventRow], warn: &mut Vec<String>) -> CoreResult<Vec<CrisisEvent>> {
    let mut out: Vec<CrisisEvent> = Vec::new();
    for e in events.iter().filter(|e| e.kind == EventKind::Crisis) {
        if out.iter().any(|c| c.onset == e.date) {
            continue;
        }
        out.push(CrisisEvent::new(
            e.date,
            e.magnitude,
            format!("crisis_{}", e.date),
        )?);
    }
    if out.is_empty() {
        warn.push("no crisis events supplied; using the placeholder crisis dates".into());
        out = shocks::default_crisis_events();
    }
    Ok(out)
}

fn build_shocks(
    cfg: &RunConfig,
    d: &mut Data,
    w: &mut Writer,
    warn: &mut Vec<String>,
) -> StageResult {
    let events = match open(&cfg.inputs.events)? {
        Some(f) => shocks::read_events(f)?,
        None => {
            warn.push("no events file; policy shocks are zero".into());
            Vec::new()
        }
    };
    d.crisis_events = crisis_from_events(&events, warn)?;
    let mut rows = Vec::new();
    for m in &d.markets {
        let r = d.returns_of(m);
        let calendar = r.dates();
        let policy: Vec<NaiveDate> = events
            .iter()
            .filter(|e| e.kind == EventKind::Policy && e.applies_to(m.as_str()))
            .map(|e| e.date)
            .collect();
        let (delta_p, w1) = shocks::policy_shocks(&policy, calendar, cfg.shocks.policy_half_width)?;
        let delta_i = shocks::information_shocks(r, cfg.shocks.info_window)?;
        let (crisis, w2) = shocks::crisis_memory(&d.crisis_events, cfg.shocks.lambda, calendar)?;
        warn.extend(w1.into_iter().chain(w2).map(|x| format!("{m}: {x}")));
        for k in 0..calendar.len() {
            rows.push(vec![
                calendar[k].to_string(),
                m.to_string(),
                num(delta_p.values()[k]),
                num(delta_i.values()[k]),
                num(crisis.values()[k]),
            ]);
        }
        d.shocks.insert(
            m.clone(),
            MarketShocks {
                delta_p,
                delta_i,
                crisis,
            },
        );
    }
    w.csv(
        "shocks.csv",
        &["date", "market", "delta_p", "delta_i", "crisis_memory"],
        &rows,
    )?;

    if let Some(f) = open(&cfg.inputs.epu)? {
        let epu = midas::read_epu(f)?;
        for m in &d.markets {
            let series = epu
                .get(m.as_str())
                .ok_or_else(|| irdm_core::Error::Input(format!("EPU file has no rows for {m}")))?;
            let idx = midas::build_index(series, d.returns_of(m).dates(), &cfg.midas)?;
            warn.extend(idx.warnings.into_iter().map(|x| format!("{m}: {x}")));
            d.index.insert(m.clone(), idx.values);
        }
        let rows = dated_rows(d.index.iter());
        w.csv("midas_index.csv", &["date", "market", "L"], &rows)?;
    }
    Ok(())
}

fn baseline(cfg: &RunConfig, d: &mut Data, w: &mut Writer, warn: &mut Vec<String>) -> StageResult {
    let specs: Vec<GarchSpec> = cfg
        .baseline
        .families
        .iter()
        .flat_map(|f| {
            cfg.baseline
                .distributions
                .iter()
                .map(move |di| GarchSpec::new((*f).into(), (*di).into()))
        })
        .collect();
    let sigma_spec = GarchSpec::new(
        cfg.baseline.sigma_family.into(),
        cfg.baseline.sigma_dist.into(),
    );
    let jobs: Vec<(MarketId, GarchSpec)> = d
        .markets
        .iter()
        .flat_map(|m| specs.iter().map(move |s| (m.clone(), *s)))
        .collect();
    let fits: Vec<CoreResult<GarchFit>> = jobs
        .par_iter()
        .map(|(m, s)| garch::fit_garch(d.returns_of(m), *s))
        .collect();

    let mut table = Vec::new();
    let mut diag = Vec::new();
    for ((m, spec), fit) in jobs.iter().zip(fits) {
        let fit = match fit {
            Ok(f) => f,
            Err(e) if *spec != sigma_spec => {
                warn.push(format!(
                    "{m} {} {}: {e}; specification skipped",
                    spec.family.label(),
                    spec.distribution.label()
                ));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        warn.extend(
            fit.warnings
                .iter()
                .map(|x| format!("{m} {}: {x}", spec.family.label())),
        );
        let p = &fit.params;
        table.push(vec![
            m.to_string(),
            spec.family.label().to_string(),
            spec.distribution.label().to_string(),
            num(p.omega),
            num(p.alpha),
            num(p.beta),
            num(p.gamma),
            num(p.shape),
            num(fit.persistence),
            num(fit.loglik),
            num(fit.aic_norm),
        ]);
        let g = &fit.diagnostics;
        diag.push(vec![
            m.to_string(),
            spec.family.label().to_string(),
            spec.distribution.label().to_string(),
            g.lags.to_string(),
            num(g.ljung_box_z.statistic),
            num(g.ljung_box_z.p_value),
            num(g.ljung_box_z2.statistic),
            num(g.ljung_box_z2.p_value),
            num(g.arch_lm.statistic),
            num(g.arch_lm.p_value),
        ]);
        if *spec == sigma_spec {
            d.sigma_fit.insert(m.clone(), fit);
        }
    }
    w.csv(
        "table1_baseline_garch.csv",
        &[
            "country",
            "model",
            "dist",
            "omega",
            "alpha",
            "beta",
            "gamma",
            "shape",
            "persistence",
            "loglik",
            "aic",
        ],
        &table,
    )?;
    w.csv(
        "baseline_diagnostics.csv",
        &[
            "country",
            "model",
            "dist",
            "lags",
            "lb_z",
            "lb_z_p",
            "lb_z2",
            "lb_z2_p",
            "arch_lm",
            "arch_lm_p",
        ],
        &diag,
    )?;

    let mut rv_rows = Vec::new();
    let mut kappa_rows = Vec::new();
    for m in &d.markets {
        let fit = &d.sigma_fit[m];
        let (rv, kappa) = shocks::rv_proxy(d.returns_of(m), &fit.sigma)?;
        let target = shocks::rv_target(&rv)?;
        for k in 0..rv.len() {
            rv_rows.push(vec![
                rv.dates()[k].to_string(),
                m.to_string(),
                num(fit.sigma.values()[k]),
                num(rv.values()[k]),
                num(target.values()[k]),
            ]);
        }
        kappa_rows.push(vec![m.to_string(), num(kappa)]);
        d.target.insert(m.clone(), target);
        d.shock_sets.insert(
            m.clone(),
            ShockSet {
                delta_p: DatedSeries::empty(),
                delta_i: DatedSeries::empty(),
                crisis_memory: DatedSeries::empty(),
                rv,
                lambda: cfg.shocks.lambda,
                kappa,
            },
        );
    }
    w.csv(
        "baseline_sigma.csv",
        &["date", "market", "sigma", "rv", "target"],
        &rv_rows,
    )?;
    w.csv("rv_kappa.csv", &["market", "kappa"], &kappa_rows)?;
    Ok(())
}

fn irdm_options(cfg: &RunConfig) -> IrdmOptions {
    IrdmOptions {
        refine: cfg.irdm.refine,
        r0: cfg.irdm.r0,
        ..IrdmOptions::default()
    }
}

fn fit_irdm(cfg: &RunConfig, d: &mut Data, w: &mut Writer, warn: &mut Vec<String>) -> StageResult {
    for m in &d.markets {
        let sh = &d.shocks[m];
        let set = d.shock_sets.get_mut(m).expect("baseline stage ran");
        set.delta_p = sh.delta_p.clone();
        set.delta_i = sh.delta_i.clone();
        set.crisis_memory = sh.crisis.clone();
    }
    let options = irdm_options(cfg);
    let fits: Vec<CoreResult<(BaselineFit, IrdmFit)>> = d
        .markets
        .par_iter()
        .map(|m| {
            let (t, r) = (&d.target[m], d.returns_of(m));
            Ok((
                irdm::fit_baseline(t, r)?,
                irdm::fit_irdm(t, r, &d.shock_sets[m], &options)?,
            ))
        })
        .collect();
    let mut table = Vec::new();
    let mut m0_rows = Vec::new();
    let mut params = Vec::new();
    let mut fitted = Vec::new();
    let mut states = Vec::new();
    for (m, res) in d.markets.iter().zip(fits) {
        let (b, f) = res?;
        warn.extend(
            b.warnings
                .iter()
                .chain(&f.warnings)
                .map(|x| format!("{m}: {x}")),
        );
        table.push(vec![
            m.to_string(),
            num(f.b0),
            num(f.b1),
            num(f.b2),
            num(f.psi),
            num(f.gamma1),
            num(f.rmse),
        ]);
        m0_rows.push(vec![
            m.to_string(),
            num(b.b0),
            num(b.b1),
            num(b.b2),
            num(b.rmse),
            num(b.sse),
            b.n.to_string(),
            num(b.aic_approx),
        ]);
        let sp = &f.state_params;
        params.push(vec![
            m.to_string(),
            num(sp.rho),
            num(sp.theta1),
            num(sp.theta2),
            format!("{:?}", f.normalization).to_lowercase(),
            num(f.sse),
            f.n.to_string(),
            num(f.aic_approx),
        ]);
        let target = &d.target[m];
        for (dt, v) in f.fitted.dates().iter().zip(f.fitted.values()) {
            fitted.push(vec![
                dt.to_string(),
                m.to_string(),
                num(target.value_at(*dt).unwrap_or(f64::NAN)),
                num(*v),
            ]);
        }
        states.extend(dated_rows([(m, &f.state)]));
        d.m0.insert(m.clone(), b);
        d.m1.insert(m.clone(), f);
    }
    w.csv(
        "table2_irdm.csv",
        &["country", "b0", "b1", "b2", "psi", "gamma1", "rmse"],
        &table,
    )?;
    w.csv(
        "m0_baseline_regression.csv",
        &[
            "country",
            "b0",
            "b1",
            "b2",
            "rmse",
            "sse",
            "n",
            "aic_approx",
        ],
        &m0_rows,
    )?;
    w.csv(
        "irdm_state_params.csv",
        &[
            "country",
            "rho",
            "theta1",
            "theta2",
            "normalization",
            "sse",
            "n",
            "aic_approx",
        ],
        &params,
    )?;
    w.csv(
        "irdm_fitted_sigma.csv",
        &["date", "market", "target", "fitted"],
        &fitted,
    )?;
    w.csv("irdm_state.csv", &["date", "market", "state"], &states)?;
    Ok(())
}

fn build_networks(
    cfg: &RunConfig,
    d: &mut Data,
    w: &mut Writer,
    warn: &mut Vec<String>,
) -> StageResult {
    let z = ReturnPanel {
        series: d
            .sigma_fit
            .iter()
            .map(|(m, f)| (m.clone(), f.z.clone()))
            .collect(),
    };
    let dcc = networks::fit_dcc(&z)?;
    warn.extend(dcc.warnings.iter().cloned());
    let governance = networks::read_governance(File::open(
        cfg.inputs.governance.as_ref().expect("validated"),
    )?)?;
    let vectors = dcc
        .markets
        .iter()
        .map(|m| {
            governance.get(m).cloned().ok_or_else(|| {
                irdm_core::Error::Input(format!("governance file has no row for {m}"))
            })
        })
        .collect::<CoreResult<Vec<_>>>()?;
    let wi = networks::similarity_network(&vectors)?;
    let net = networks::correlation_network(
        dcc.markets.clone(),
        dcc.dates.clone(),
        dcc.correlations.clone(),
    )?
    .with_similarity(wi)?;
    if !net.zero_rows.is_empty() {
        warn.push(format!(
            "{} network rows had no off-diagonal mass",
            net.zero_rows.len()
        ));
    }
    w.csv(
        "networks_dcc.csv",
        &["a", "b", "loglik", "n_markets", "n_dates"],
        &[vec![
            num(dcc.params.a),
            num(dcc.params.b),
            num(dcc.loglik),
            dcc.markets.len().to_string(),
            dcc.dates.len().to_string(),
        ]],
    )?;
    let n = net.markets.len();
    let mut wc_rows = Vec::new();
    for (t, wc) in net.wc.iter().enumerate() {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                wc_rows.push(vec![
                    net.dates[t].to_string(),
                    net.markets[i].to_string(),
                    net.markets[j].to_string(),
                    num(wc[(i, j)]),
                ]);
            }
        }
    }
    w.csv(
        "networks_wc.csv",
        &["date", "market", "neighbor", "weight"],
        &wc_rows,
    )?;
    let mut wi_rows = Vec::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            wi_rows.push(vec![
                net.markets[i].to_string(),
                net.markets[j].to_string(),
                num(net.wi[(i, j)]),
            ]);
        }
    }
    w.csv(
        "networks_wi.csv",
        &["market", "neighbor", "weight"],
        &wi_rows,
    )?;
    d.network = Some(net);
    Ok(())
}

fn m1_states(d: &Data) -> BTreeMap<MarketId, DatedSeries> {
    d.m1.iter()
        .map(|(m, f)| (m.clone(), f.state.clone()))
        .collect()
}

fn nirdm_fits(cfg: &RunConfig, d: &Data, net: &NetworkSequence) -> CoreResult<Vec<NirdmFit>> {
    let options = irdm_options(cfg);
    let states = m1_states(d);
    d.markets
        .par_iter()
        .map(|m| {
            nirdm::fit_nirdm(
                &d.target[m],
                d.returns_of(m),
                &d.shock_sets[m],
                &states,
                net,
                m,
                &options,
                Some(d.m1[m].state_params),
            )
        })
        .collect()
}

fn fit_nirdm(cfg: &RunConfig, d: &mut Data, w: &mut Writer, warn: &mut Vec<String>) -> StageResult {
    let net = d.network.as_ref().expect("networks stage ran");
    let fits = nirdm_fits(cfg, d, net)?;
    let mut table = Vec::new();
    let mut fitted = Vec::new();
    for f in fits {
        let m = f.market.clone();
        warn.extend(f.warnings.iter().map(|x| format!("{m}: {x}")));
        table.push(vec![
            m.to_string(),
            num(f.b0),
            num(f.b1),
            num(f.b2),
            num(f.psi),
            num(f.gamma1),
            num(f.gamma2),
            num(f.gamma3),
            num(f.aic_approx),
        ]);
        let target = &d.target[&m];
        for (dt, v) in f.fitted.dates().iter().zip(f.fitted.values()) {
            fitted.push(vec![
                dt.to_string(),
                m.to_string(),
                num(target.value_at(*dt).unwrap_or(f64::NAN)),
                num(*v),
            ]);
        }
        d.m2.insert(m, f);
    }
    w.csv(
        "table4_nirdm.csv",
        &[
            "country", "b0", "b1", "b2", "psi", "gamma1", "gamma2", "gamma3", "aic",
        ],
        &table,
    )?;
    w.csv(
        "nirdm_fitted_sigma.csv",
        &["date", "market", "target", "fitted"],
        &fitted,
    )?;
    Ok(())
}

fn panel_label(name: &str) -> String {
    match name.strip_prefix("fe_") {
        Some(c) => format!("factor(country){c}"),
        None if name == "intercept" => "(Intercept)".into(),
        None => name.to_string(),
    }
}

fn fit_panel(cfg: &RunConfig, d: &mut Data, w: &mut Writer, warn: &mut Vec<String>) -> StageResult {
    let mut rows = Vec::new();
    for m in &d.markets {
        let (t, sh, l) = (&d.target[m], &d.shocks[m], &d.index[m]);
        for k in 0..t.len() {
            rows.push(PanelRow {
                country: m.clone(),
                date: t.dates()[k],
                sigma: t.values()[k],
                delta_p: sh.delta_p.values()[k],
                delta_i: sh.delta_i.values()[k],
                l: l.values()[k],
            });
        }
    }
    let fit = panel::fit_panel(&rows)?;
    warn.extend(fit.warnings.iter().cloned());
    let table: Vec<Vec<String>> = (0..fit.names.len())
        .map(|j| {
            vec![
                panel_label(&fit.names[j]),
                num(fit.coef[j]),
                num(fit.se[j]),
                num(fit.t[j]),
                num(fit.p[j]),
            ]
        })
        .collect();
    w.csv(
        "table3_panel.csv",
        &["variable", "coef", "se", "t", "p"],
        &table,
    )?;

    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            (a.min(r.l), b.max(r.l))
        });
    let k = cfg.panel.marginal_points;
    let grid: Vec<f64> = (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect();
    let curve = panel::marginal_effect_policy(&fit, &grid)?;
    let curve_rows: Vec<Vec<String>> = curve
        .iter()
        .map(|p| {
            let (a, b) = p.band();
            vec![num(p.l), num(p.effect), num(a), num(b)]
        })
        .collect();
    w.csv(
        "figure15_marginal_effect.csv",
        &["L", "effect", "se_lo", "se_hi"],
        &curve_rows,
    )?;

    if cfg.panel.bootstrap_draws > 0 {
        let p = panel::wild_cluster_bootstrap(&rows, &fit, cfg.panel.bootstrap_draws, cfg.seed)?;
        let rows: Vec<Vec<String>> = fit
            .names
            .iter()
            .zip(&p)
            .map(|(n, p)| vec![panel_label(n), num(*p)])
            .collect();
        w.csv("panel_wild_bootstrap.csv", &["variable", "p_wild"], &rows)?;
    }
    Ok(())
}

/// Errors of M0, M1 and M2 on a shared sample, in the configured mode.
fn model_errors(cfg: &RunConfig, d: &Data, m: &MarketId) -> CoreResult<[DatedSeries; 3]> {
    let target = &d.target[m];
    match cfg.evaluate.error_mode {
        ErrorMode::InSample => Ok([
            evaluate::forecast_errors(target, &d.m0[m].fitted)?,
            evaluate::forecast_errors(target, &d.m1[m].fitted)?,
            evaluate::forecast_errors(target, &d.m2[m].fitted)?,
        ]),
        ErrorMode::Expanding => {
            let (y, base) = irdm::base_design(target.values(), d.returns_of(m).values(), None);
            let crisis = &d.shock_sets[m].crisis_memory.values()[1..];
            let m1_state = &d.m1[m].state.values()[1..];
            let m2 = &d.m2[m];
            let m2_state = &m2.state.values()[1..];
            let net_c = &m2.spillovers.net_c.values()[m2.spillovers.net_c.len() - y.len()..];
            let net_i = m2.spillovers.net_i.values();
            let mut c0: Vec<&[f64]> = base.iter().map(|c| c.as_slice()).collect();
            let mut c1 = c0.clone();
            c1.extend([crisis, m1_state]);
            c0.truncate(3);
            let mut c2: Vec<&[f64]> = base.iter().map(|c| c.as_slice()).collect();
            c2.extend([crisis, m2_state, net_c, net_i]);
            let dates = target.dates()[1 + cfg.evaluate.min_train..].to_vec();
            let mk = |cols: &[&[f64]]| -> CoreResult<DatedSeries> {
                DatedSeries::new(
                    dates.clone(),
                    evaluate::expanding_window_errors(cols, &y, cfg.evaluate.min_train)?,
                )
            };
            Ok([mk(&c0)?, mk(&c1)?, mk(&c2)?])
        }
    }
}

fn evaluate_models(
    cfg: &RunConfig,
    d: &mut Data,
    w: &mut Writer,
    warn: &mut Vec<String>,
) -> StageResult {
    let mut t5 = Vec::new();
    let mut t6 = Vec::new();
    let mut f20 = Vec::new();
    let mut f21 = Vec::new();
    let loss = cfg.evaluate.loss;
    for m in &d.markets {
        let models = [
            ModelSummary {
                name: "M0",
                fitted: &d.m0[m].fitted,
                k: 3,
            },
            ModelSummary {
                name: "M1",
                fitted: &d.m1[m].fitted,
                k: 5,
            },
            ModelSummary {
                name: "M2",
                fitted: &d.m2[m].fitted,
                k: 7,
            },
        ];
        let (rows, imps) = evaluate::compare_models(m.as_str(), &d.target[m], &models)?;
        for r in rows {
            t5.push(vec![
                r.country,
                r.model,
                num(r.rmse),
                num(r.sse),
                r.n.to_string(),
                num(r.aic_approx),
            ]);
        }
        for i in imps {
            f20.push(vec![i.country, i.comparison, num(i.pct)]);
        }
        let [e0, e1, e2] = model_errors(cfg, d, m)?;
        let tests = [
            (
                "DM (M1 vs M0)",
                evaluate::dm_test(e1.values(), e0.values(), loss, None)?,
            ),
            (
                "DM (M2 vs M0)",
                evaluate::dm_test(e2.values(), e0.values(), loss, None)?,
            ),
            (
                "ENC-NEW(M1 M0)",
                evaluate::enc_new(e0.values(), e1.values())?,
            ),
            (
                "ENC-NEW(M2 M0)",
                evaluate::enc_new(e0.values(), e2.values())?,
            ),
        ];
        for (label, r) in tests {
            if r.zero_variance {
                warn.push(format!("{m} {label}: loss differential has zero variance"));
            }
            t6.push(vec![
                m.to_string(),
                label.to_string(),
                num(r.statistic),
                num(r.p_value),
                r.t_obs.to_string(),
            ]);
        }
        if e0.len() >= cfg.evaluate.rolling_window {
            for p in evaluate::rolling_dm(&e2, &e0, cfg.evaluate.rolling_window, loss)? {
                f21.push(vec![
                    m.to_string(),
                    p.date.to_string(),
                    num(p.statistic),
                    num(-evaluate::DM_BAND),
                    num(evaluate::DM_BAND),
                ]);
            }
        } else {
            warn.push(format!(
                "{m}: sample shorter than the rolling window; no rolling DM"
            ));
        }
    }
    w.csv(
        "table5_model_compare.csv",
        &["country", "model", "rmse", "sse", "n", "aic_approx"],
        &t5,
    )?;
    w.csv(
        "table6_dm_enc.csv",
        &["country", "test", "stat", "pval", "Tobs"],
        &t6,
    )?;
    w.csv(
        "figure20_rmse_improvement.csv",
        &["country", "comparison", "improvement_pct"],
        &f20,
    )?;
    w.csv(
        "figure21_rolling_dm.csv",
        &["country", "date", "stat", "lower", "upper"],
        &f21,
    )?;
    Ok(())
}

fn robustness(
    cfg: &RunConfig,
    d: &mut Data,
    w: &mut Writer,
    warn: &mut Vec<String>,
) -> StageResult {
    let net = d.network.as_ref().expect("networks stage ran");
    let states = m1_states(d);
    let variants = [
        net.clone(),
        networks::perturb_network(net, PerturbMode::Permute, 0.0, cfg.seed)?,
        networks::perturb_network(net, PerturbMode::Shift5, 0.0, cfg.seed)?,
        networks::perturb_network(net, PerturbMode::Lag1, 0.0, cfg.seed)?,
    ];
    let terms: Vec<Vec<DatedSeries>> = variants
        .iter()
        .map(|v| {
            // the shifted network starts later; states are aligned to its dates
            let aligned: BTreeMap<MarketId, DatedSeries> = states
                .iter()
                .map(|(m, s)| (m.clone(), nirdm::restrict(s, &v.dates)))
                .collect();
            d.markets
                .iter()
                .map(|m| Ok(nirdm::spillover_terms(&aligned, v, m)?.net_c))
                .collect::<CoreResult<_>>()
        })
        .collect::<CoreResult<_>>()?;
    let inputs: Vec<(String, Vec<PlaceboInput<'_>>)> = variants
        .iter()
        .zip(&terms)
        .map(|(v, t)| {
            let rows = d
                .markets
                .iter()
                .zip(t)
                .map(|(m, net_c)| PlaceboInput {
                    target: &d.target[m],
                    returns: d.returns_of(m),
                    crisis: &d.shock_sets[m].crisis_memory,
                    state: &d.m1[m].state,
                    net_c,
                })
                .collect();
            (nirdm::variant_label(v.variant).to_string(), rows)
        })
        .collect();
    let placebo = nirdm::placebo_regression(&inputs)?;
    let t7: Vec<Vec<String>> = placebo
        .iter()
        .map(|r| {
            vec![
                r.term.clone(),
                num(r.estimate),
                num(r.std_error),
                num(r.statistic),
                num(r.p_value),
                r.model.clone(),
            ]
        })
        .collect();
    w.csv(
        "table7_placebo.csv",
        &[
            "term",
            "estimate",
            "std_error",
            "statistic",
            "p_value",
            "model",
        ],
        &t7,
    )?;

    let options = irdm_options(cfg);
    let mut a2 = Vec::new();
    for &lambda in &cfg.robustness.lambdas {
        let fits: Vec<CoreResult<IrdmFit>> = d
            .markets
            .par_iter()
            .map(|m| {
                let (crisis, _) =
                    shocks::crisis_memory(&d.crisis_events, lambda, d.returns_of(m).dates())?;
                let set = ShockSet {
                    crisis_memory: crisis,
                    lambda,
                    ..d.shock_sets[m].clone()
                };
                irdm::fit_irdm(&d.target[m], d.returns_of(m), &set, &options)
            })
            .collect();
        for (m, f) in d.markets.iter().zip(fits) {
            let f = f?;
            a2.push(vec![
                m.to_string(),
                num(lambda),
                num(f.b1),
                num(f.psi),
                num(f.gamma1),
                num(f.rmse),
            ]);
        }
    }
    w.csv(
        "tableA2_lambda_sensitivity.csv",
        &["country", "lambda", "b1", "psi", "gamma1", "rmse"],
        &a2,
    )?;

    let mut a3 = Vec::new();
    for &th in &cfg.robustness.sparsity {
        let sparse = networks::perturb_network(net, PerturbMode::Sparsify, th, cfg.seed)?;
        if !sparse.zero_rows.is_empty() {
            warn.push(format!(
                "sparsity {th}: {} rows lost every neighbour",
                sparse.zero_rows.len()
            ));
        }
        for f in nirdm_fits(cfg, d, &sparse)? {
            let orig = d.m2[&f.market].rmse;
            a3.push(vec![
                f.market.to_string(),
                num(th),
                num(orig),
                num(f.rmse),
                num(100.0 * (f.rmse - orig) / orig),
            ]);
        }
    }
    w.csv(
        "tableA3_sparsity.csv",
        &[
            "country",
            "threshold",
            "rmse_orig",
            "rmse_sparse",
            "drmse_pct",
        ],
        &a3,
    )?;
    Ok(())
}
