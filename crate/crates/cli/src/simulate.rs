//! `simulate`: writes a synthetic input bundle plus a config that runs on it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use irdm_core::midas::Month;
use irdm_core::simgen::{self, ScenarioConfig, SyntheticPanel};
use serde::Serialize;

use crate::config::{Inputs, RunConfig, ScenarioName, SimulateOptions};
use crate::output::{num, Writer};
use crate::CliError;

fn stage_err(source: irdm_core::Error) -> CliError {
    CliError::Stage {
        stage: "simulate".into(),
        source,
    }
}

pub fn scenario(opts: &SimulateOptions, seed: u64) -> ScenarioConfig {
    match opts.scenario {
        ScenarioName::Demo => ScenarioConfig::demo(opts.n_markets, opts.t, seed),
        ScenarioName::IrdmCalibrated => {
            ScenarioConfig::irdm_calibrated(opts.n_markets, opts.t, seed)
        }
        ScenarioName::NirdmCalibrated => {
            ScenarioConfig::nirdm_calibrated(opts.n_markets, opts.t, seed)
        }
    }
}

#[derive(Serialize)]
struct Truth<'a> {
    scenario: &'a ScenarioConfig,
    floor_hits: BTreeMap<String, usize>,
}

/// Simulates the scenario and writes prices, events, EPU, governance, the true
/// paths and `config.toml` into `dir`. Returns the config for that bundle.
pub fn write_bundle(opts: &SimulateOptions, seed: u64, dir: &Path) -> Result<RunConfig, CliError> {
    let config = scenario(opts, seed);
    let panel = simgen::simulate(&config).map_err(stage_err)?;
    write_panel(&panel, seed, dir)?;
    let mut run = RunConfig {
        seed,
        simulate: opts.clone(),
        inputs: Inputs {
            prices: Some(PathBuf::from("prices.csv")),
            events: Some(PathBuf::from("events.csv")),
            epu: Some(PathBuf::from("epu.csv")),
            governance: Some(PathBuf::from("governance.csv")),
        },
        ..RunConfig::default()
    };
    std::fs::write(dir.join("config.toml"), run.to_toml())?;
    run = RunConfig::from_toml(&run.to_toml(), dir)?;
    Ok(run)
}

fn write_panel(panel: &SyntheticPanel, seed: u64, dir: &Path) -> Result<(), CliError> {
    let mut w = Writer::new(dir)?;
    let markets = panel.markets();
    let mut buf = Vec::new();
    simgen::write_prices(&panel.prices().map_err(stage_err)?, &mut buf).map_err(stage_err)?;
    w.write_bytes("prices.csv", &buf)?;
    buf.clear();
    simgen::write_events(&panel.event_rows(), &mut buf).map_err(stage_err)?;
    w.write_bytes("events.csv", &buf)?;
    buf.clear();
    let dates = panel.dates();
    let first = Month::of(dates[0]).back(24);
    let last = Month::of(*dates.last().expect("non-empty sample"));
    simgen::write_epu(
        &simgen::synthetic_epu(&markets, first, last, seed),
        &mut buf,
    )
    .map_err(stage_err)?;
    w.write_bytes("epu.csv", &buf)?;
    buf.clear();
    simgen::write_governance(&markets, &panel.config.governance, &mut buf).map_err(stage_err)?;
    w.write_bytes("governance.csv", &buf)?;

    let truth = Truth {
        scenario: &panel.config,
        floor_hits: panel
            .paths
            .iter()
            .map(|(m, p)| (m.to_string(), p.floor_hits))
            .collect(),
    };
    w.write_bytes(
        "truth.json",
        &serde_json::to_vec_pretty(&truth).map_err(std::io::Error::from)?,
    )?;

    let mut rows = Vec::new();
    for (m, p) in &panel.paths {
        for (k, d) in dates.iter().enumerate() {
            rows.push(vec![
                d.to_string(),
                m.to_string(),
                num(p.sigma.values()[k]),
                num(p.state.values()[k]),
                num(p.delta_p.values()[k]),
                num(p.delta_i.values()[k]),
                num(p.net_c.values()[k]),
                num(panel.crisis_memory.values()[k]),
            ]);
        }
    }
    w.csv(
        "true_paths.csv",
        &[
            "date",
            "market",
            "sigma",
            "state",
            "delta_p",
            "delta_i",
            "net_c",
            "crisis_memory",
        ],
        &rows,
    )?;
    Ok(())
}
