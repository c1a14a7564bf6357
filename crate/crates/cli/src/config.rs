//! TOML run configuration and its all-at-once validation.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use irdm_core::dist::Innovation;
use irdm_core::evaluate::{ErrorMode, Loss};
use irdm_core::garch::Family;
use irdm_core::midas::{midas_weights, MidasConfig};
use irdm_core::shocks;
use irdm_core::timeseries::{AlignMode, Scale};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Shocks,
    Baseline,
    Irdm,
    Networks,
    Nirdm,
    Panel,
    Evaluate,
    Robustness,
}

pub const ALL_STAGES: [Stage; 9] = [
    Stage::Ingest,
    Stage::Shocks,
    Stage::Baseline,
    Stage::Irdm,
    Stage::Networks,
    Stage::Nirdm,
    Stage::Panel,
    Stage::Evaluate,
    Stage::Robustness,
];

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Shocks => "shocks",
            Stage::Baseline => "baseline",
            Stage::Irdm => "irdm",
            Stage::Networks => "networks",
            Stage::Nirdm => "nirdm",
            Stage::Panel => "panel",
            Stage::Evaluate => "evaluate",
            Stage::Robustness => "robustness",
        }
    }

    pub fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Shocks | Stage::Baseline => &[Stage::Ingest],
            Stage::Irdm => &[Stage::Shocks, Stage::Baseline],
            Stage::Networks => &[Stage::Baseline],
            Stage::Nirdm => &[Stage::Irdm, Stage::Networks],
            Stage::Panel => &[Stage::Shocks, Stage::Baseline],
            Stage::Evaluate | Stage::Robustness => &[Stage::Nirdm],
        }
    }

    /// `self` and everything it depends on, in pipeline order.
    pub fn closure(self) -> Vec<Stage> {
        let mut need = vec![self];
        let mut i = 0;
        while i < need.len() {
            for r in need[i].requires() {
                if !need.contains(r) {
                    need.push(*r);
                }
            }
            i += 1;
        }
        need.sort();
        need
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_STAGES
            .iter()
            .copied()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub prices: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub epu: Option<PathBuf>,
    pub governance: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    pub scale: Scale,
    pub align: AlignMode,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            scale: Scale::Percent,
            align: AlignMode::Intersect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShockOptions {
    pub lambda: f64,
    pub info_window: usize,
    pub policy_half_width: usize,
}

impl Default for ShockOptions {
    fn default() -> Self {
        Self {
            lambda: shocks::DEFAULT_LAMBDA,
            info_window: shocks::DEFAULT_INFO_WINDOW,
            policy_half_width: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Egarch,
    Gjr,
}

impl From<FamilyName> for Family {
    fn from(f: FamilyName) -> Self {
        match f {
            FamilyName::Egarch => Family::Egarch,
            FamilyName::Gjr => Family::Gjr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistName {
    Std,
    Ged,
}

impl From<DistName> for Innovation {
    fn from(d: DistName) -> Self {
        match d {
            DistName::Std => Innovation::StudentT,
            DistName::Ged => Innovation::Ged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineOptions {
    pub families: Vec<FamilyName>,
    pub distributions: Vec<DistName>,
    /// Fit whose σ̂ feeds the RV proxy and whose residuals feed the DCC step.
    pub sigma_family: FamilyName,
    pub sigma_dist: DistName,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            families: vec![FamilyName::Egarch, FamilyName::Gjr],
            distributions: vec![DistName::Std, DistName::Ged],
            sigma_family: FamilyName::Egarch,
            sigma_dist: DistName::Std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrdmSection {
    pub refine: bool,
    pub r0: f64,
}

impl Default for IrdmSection {
    fn default() -> Self {
        Self {
            refine: true,
            r0: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelOptions {
    /// Wild cluster bootstrap draws; 0 disables the bootstrap file.
    pub bootstrap_draws: usize,
    pub marginal_points: usize,
}

impl Default for PanelOptions {
    fn default() -> Self {
        Self {
            bootstrap_draws: 0,
            marginal_points: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateOptions {
    pub error_mode: ErrorMode,
    pub loss: Loss,
    pub rolling_window: usize,
    /// First training window for expanding-window errors.
    pub min_train: usize,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            error_mode: ErrorMode::InSample,
            loss: Loss::Squared,
            rolling_window: 500,
            min_train: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessOptions {
    pub lambdas: Vec<f64>,
    pub sparsity: Vec<f64>,
}

impl Default for RobustnessOptions {
    fn default() -> Self {
        Self {
            lambdas: vec![0.005, 0.01, 0.02],
            sparsity: vec![0.05, 0.10],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    #[default]
    Demo,
    IrdmCalibrated,
    NirdmCalibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateOptions {
    pub scenario: ScenarioName,
    pub n_markets: usize,
    pub t: usize,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            scenario: ScenarioName::Demo,
            n_markets: 4,
            t: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Empty means every market in the price file.
    pub markets: Vec<String>,
    pub stages: Vec<Stage>,
    pub inputs: Inputs,
    pub ingest: IngestOptions,
    pub shocks: ShockOptions,
    pub midas: MidasConfig,
    pub baseline: BaselineOptions,
    pub irdm: IrdmSection,
    pub panel: PanelOptions,
    pub evaluate: EvaluateOptions,
    pub robustness: RobustnessOptions,
    pub simulate: SimulateOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("results"),
            markets: Vec::new(),
            stages: ALL_STAGES.to_vec(),
            inputs: Inputs::default(),
            ingest: IngestOptions::default(),
            shocks: ShockOptions::default(),
            midas: MidasConfig::default(),
            baseline: BaselineOptions::default(),
            irdm: IrdmSection::default(),
            panel: PanelOptions::default(),
            evaluate: EvaluateOptions::default(),
            robustness: RobustnessOptions::default(),
            simulate: SimulateOptions::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML; relative input paths and `out_dir` resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Validation(vec![format!("config: {e}")]))?;
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut cfg.inputs.prices);
        fix(&mut cfg.inputs.events);
        fix(&mut cfg.inputs.epu);
        fix(&mut cfg.inputs.governance);
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(vec![format!("cannot read config {}: {e}", path.display())])
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn requested(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Every problem at once, so a user can fix the config in one pass.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errs = Vec::new();
        if self.stages.is_empty() {
            errs.push("no stages requested".to_string());
        }
        for (k, st) in self.stages.iter().enumerate() {
            if self.stages[..k].contains(st) {
                errs.push(format!("stage {} listed twice", st.name()));
            }
            for r in st.requires() {
                match self.stages.iter().position(|s| s == r) {
                    None => errs.push(format!("stage {} requires stage {}", st.name(), r.name())),
                    Some(p) if p > k => errs.push(format!(
                        "stage {} must come after stage {}",
                        st.name(),
                        r.name()
                    )),
                    _ => {}
                }
            }
        }
        let need_file =
            |errs: &mut Vec<String>, path: &Option<PathBuf>, what: &str, why: &str| match path {
                None => errs.push(format!("inputs.{what} is required by {why}")),
                Some(p) if !p.is_file() => errs.push(format!(
                    "inputs.{what}: file {} does not exist",
                    p.display()
                )),
                _ => {}
            };
        need_file(&mut errs, &self.inputs.prices, "prices", "every stage");
        if self.requested(Stage::Panel) {
            need_file(
                &mut errs,
                &self.inputs.epu,
                "epu",
                "the panel stage (MIDAS index)",
            );
        }
        if self.requested(Stage::Networks) {
            need_file(
                &mut errs,
                &self.inputs.governance,
                "governance",
                "the networks stage",
            );
        }
        for (p, what) in [
            (&self.inputs.events, "events"),
            (&self.inputs.epu, "epu"),
            (&self.inputs.governance, "governance"),
        ] {
            if let Some(p) = p {
                if !p.is_file()
                    && !errs
                        .iter()
                        .any(|e| e.starts_with(&format!("inputs.{what}")))
                {
                    errs.push(format!(
                        "inputs.{what}: file {} does not exist",
                        p.display()
                    ));
                }
            }
        }
        if self.ingest.align == AlignMode::PerMarket
            && self.stages.iter().any(|s| {
                matches!(
                    s,
                    Stage::Networks
                        | Stage::Nirdm
                        | Stage::Evaluate
                        | Stage::Robustness
                        | Stage::Panel
                )
            })
        {
            errs.push(
                "network, panel and evaluation stages require ingest.align = \"intersect\"".into(),
            );
        }
        if !(self.shocks.lambda > 0.0) {
            errs.push(format!(
                "shocks.lambda must be positive, got {}",
                self.shocks.lambda
            ));
        }
        if self.shocks.info_window < 2 {
            errs.push("shocks.info_window must be at least 2".into());
        }
        if let Err(e) = midas_weights(&self.midas) {
            errs.push(format!("midas: {e}"));
        }
        if self.baseline.families.is_empty() || self.baseline.distributions.is_empty() {
            errs.push("baseline.families and baseline.distributions must be non-empty".into());
        }
        if !self.baseline.families.contains(&self.baseline.sigma_family)
            || !self
                .baseline
                .distributions
                .contains(&self.baseline.sigma_dist)
        {
            errs.push(
                "baseline.sigma_family / sigma_dist must be among the fitted specifications".into(),
            );
        }
        if self.evaluate.rolling_window < irdm_core::evaluate::MIN_DM_OBS {
            errs.push(format!(
                "evaluate.rolling_window must be at least {}",
                irdm_core::evaluate::MIN_DM_OBS
            ));
        }
        if self.evaluate.min_train < 10 {
            errs.push("evaluate.min_train must be at least 10".into());
        }
        if self.panel.marginal_points < 2 {
            errs.push("panel.marginal_points must be at least 2".into());
        }
        if self.robustness.lambdas.iter().any(|l| !(*l > 0.0)) {
            errs.push("robustness.lambdas must be positive".into());
        }
        if self.robustness.sparsity.iter().any(|t| !(*t >= 0.0)) {
            errs.push("robustness.sparsity thresholds must be non-negative".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_orders_dependencies() {
        assert_eq!(
            Stage::Irdm.closure(),
            vec![Stage::Ingest, Stage::Shocks, Stage::Baseline, Stage::Irdm]
        );
        assert_eq!(Stage::Evaluate.closure().len(), 7);
        assert_eq!(Stage::Ingest.closure(), vec![Stage::Ingest]);
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml(), Path::new("")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation_lists_every_problem() {
        let text = "stages = [\"irdm\", \"shocks\", \"ingest\"]\n[shocks]\nlambda = -1.0\n[inputs]\nprices = \"/nonexistent/p.csv\"\n";
        match RunConfig::from_toml(text, Path::new(""))
            .unwrap()
            .validate()
        {
            Err(CliError::Validation(errs)) => {
                assert!(errs.iter().any(|e| e.contains("requires stage baseline")));
                assert!(errs
                    .iter()
                    .any(|e| e.contains("must come after stage ingest")));
                assert!(errs.iter().any(|e| e.contains("lambda")));
                assert!(errs.iter().any(|e| e.contains("does not exist")));
            }
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sed = 3\n", Path::new("")).is_err());
    }
}
