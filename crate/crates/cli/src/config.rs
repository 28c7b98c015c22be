//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! temperatures = [0, 0.5, 1, 2, 3.5, 6, inf]
//! shots = 2000
//!
//! [model]
//! n_sites = 3
//! J = 1.0
//! g = 1.0
//! ```

use serde::{Deserialize, Serialize};

use otoc_core::nelder_mead::NelderMeadOptions;
use otoc_core::noise::NoiseModel;
use otoc_core::protocol::{
    Evolution, OtocExperiment, Preparation, TrotterOrder, TrotterSchedule, TIME_TOL, T_EARLY, T_LATE,
};
use otoc_core::spinchain::{Temperature, TfimParams};
use otoc_core::statevector::Pauli;
use otoc_core::tfd::{reference_parameters, OptimizerConfig, TfdAnsatz, TfdLayout, TfdParameters};

use crate::error::{CliError, CliResult};

/// Scalars first: TOML needs plain values ahead of tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub temperatures: Vec<TemperatureValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(default)]
    pub pad_depth: bool,
    pub model: ModelConfig,
    #[serde(default)]
    pub preparation: PreparationConfig,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub operators: OperatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A temperature as a number (`inf` allowed) or a string such as `"inf"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemperatureValue {
    Number(f64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_sites: usize,
    #[serde(rename = "J")]
    pub coupling: f64,
    pub g: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrepMode {
    #[default]
    Exact,
    Reference,
    Optimized,
    Variational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreparationConfig {
    pub mode: PrepMode,
    /// Built-in ansatz name; ignored when `descriptor` is set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<String>,
    /// Gate-list ansatz, one gate per line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<String>,
    /// Angles in units of π for `variational`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    pub restarts: usize,
    pub max_evals: usize,
    pub diameter_tol: f64,
    pub initial_step: f64,
}

impl Default for PreparationConfig {
    fn default() -> Self {
        let nm = NelderMeadOptions::default();
        let opt = OptimizerConfig::default();
        PreparationConfig {
            mode: PrepMode::Exact,
            layout: None,
            descriptor: None,
            thetas: None,
            restarts: opt.restarts,
            max_evals: nm.max_evals,
            diameter_tol: nm.diameter_tol,
            initial_step: nm.initial_step,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolutionMode {
    #[default]
    Trotter,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub mode: EvolutionMode,
    /// Trotter step sizes in units of `1/J`.
    pub steps: Vec<f64>,
    pub order: String,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            mode: EvolutionMode::Trotter,
            steps: TrotterSchedule::default().steps().to_vec(),
            order: TrotterOrder::default().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub w_site: usize,
    pub w_pauli: String,
    pub v_site: usize,
    pub v_pauli: String,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig { w_site: 1, w_pauli: "X".into(), v_site: 1, v_pauli: "Z".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub p1: f64,
    pub p2: f64,
    pub p_readout: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let d = NoiseModel::default();
        NoiseConfig { p1: d.p1, p2: d.p2, p_readout: d.p_readout }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Any of `csv`, `dat`.
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into(), formats: vec!["csv".into(), "dat".into()] }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn parse_pauli(field: &str, s: &str) -> CliResult<Pauli> {
    let mut chars = s.trim().chars();
    match (chars.next().map(|c| c.to_ascii_uppercase()).and_then(Pauli::from_char), chars.next()) {
        (Some(p), None) if p != Pauli::I => Ok(p),
        _ => Err(config_err(format!("operators.{field} must be one of X, Y, Z, got {s:?}"))),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Checks that do not depend on the subcommand.
    fn check(&self) -> CliResult<()> {
        self.tfim()?;
        self.temperatures()?;
        self.schedule()?;
        self.order()?;
        self.noise_model()?;
        parse_pauli("w_pauli", &self.operators.w_pauli)?;
        parse_pauli("v_pauli", &self.operators.v_pauli)?;
        if self.output.formats.is_empty() {
            return Err(config_err("output.formats must name at least one format"));
        }
        if let Some(f) = self.output.formats.iter().find(|f| !matches!(f.as_str(), "csv" | "dat")) {
            return Err(config_err(format!("unknown output format {f:?} (expected csv or dat)")));
        }
        if self.preparation.restarts == 0 {
            return Err(config_err("preparation.restarts must be at least 1"));
        }
        Ok(())
    }

    pub fn tfim(&self) -> CliResult<TfimParams> {
        let m = &self.model;
        let p = TfimParams::new(m.n_sites, m.coupling, m.g)?;
        p.validate()?;
        Ok(p)
    }

    pub fn temperatures(&self) -> CliResult<Vec<Temperature>> {
        self.temperatures
            .iter()
            .map(|t| {
                match t {
                    TemperatureValue::Number(x) => Temperature::from_value(*x),
                    TemperatureValue::Text(s) => s.parse(),
                }
                .map_err(|e| config_err(format!("temperatures: {e}")))
            })
            .collect()
    }

    /// Temperatures, refusing an empty list.
    pub fn nonempty_temperatures(&self) -> CliResult<Vec<Temperature>> {
        let temps = self.temperatures()?;
        if temps.is_empty() {
            return Err(config_err("temperatures is empty; nothing to compute"));
        }
        Ok(temps)
    }

    pub fn schedule(&self) -> CliResult<TrotterSchedule> {
        TrotterSchedule::new(self.evolution.steps.clone()).map_err(|e| config_err(format!("evolution.steps: {e}")))
    }

    pub fn order(&self) -> CliResult<TrotterOrder> {
        self.evolution.order.parse().map_err(|e| config_err(format!("evolution.order: {e}")))
    }

    pub fn noise_model(&self) -> CliResult<Option<NoiseModel>> {
        self.noise
            .as_ref()
            .map(|n| NoiseModel::new(n.p1, n.p2, n.p_readout).map_err(|e| config_err(format!("noise: {e}"))))
            .transpose()
    }

    pub fn optimizer(&self, seed: u64) -> OptimizerConfig {
        let p = &self.preparation;
        OptimizerConfig {
            restarts: p.restarts,
            seed,
            simplex: NelderMeadOptions {
                initial_step: p.initial_step,
                diameter_tol: p.diameter_tol,
                max_evals: p.max_evals,
            },
        }
    }

    /// The ansatz for `temp`: the descriptor, the named layout, or the
    /// built-in choice for that temperature.
    pub fn ansatz_for(&self, temp: Temperature) -> CliResult<TfdAnsatz> {
        let n = self.model.n_sites;
        let p = &self.preparation;
        let ansatz = match (&p.descriptor, &p.layout) {
            (Some(d), _) => TfdAnsatz::from_descriptor(n, d),
            (None, Some(l)) => {
                let layout: TfdLayout = l.parse().map_err(|e| config_err(format!("preparation.layout: {e}")))?;
                TfdAnsatz::new(n, layout)
            }
            (None, None) => TfdAnsatz::for_temperature(n, temp),
        };
        ansatz.map_err(|e| config_err(format!("preparation: {e}")))
    }

    /// The experiment template shared by every temperature of a `run` or `sweep`.
    pub fn experiment(&self) -> CliResult<OtocExperiment> {
        let temps = self.nonempty_temperatures()?;
        let mut exp = OtocExperiment::new(self.tfim()?, temps[0]);
        let p = &self.preparation;
        if p.mode != PrepMode::Variational && p.thetas.is_some() {
            return Err(config_err("preparation.thetas is only used with mode = \"variational\""));
        }
        if matches!(p.mode, PrepMode::Exact | PrepMode::Reference) && (p.layout.is_some() || p.descriptor.is_some()) {
            return Err(config_err("preparation.layout/descriptor do not apply to this preparation mode"));
        }
        if p.mode == PrepMode::Optimized && (p.layout.is_some() || p.descriptor.is_some()) {
            return Err(config_err("optimized preparation always uses the built-in layout for each temperature"));
        }
        exp.prep = match p.mode {
            PrepMode::Exact => Preparation::ExactTfd,
            PrepMode::Reference => {
                for &t in &temps {
                    reference_parameters(t).map_err(|_| {
                        config_err(format!("no reference angles for temperature {t}; use mode = \"optimized\""))
                    })?;
                }
                Preparation::Reference
            }
            PrepMode::Optimized => Preparation::Optimized(self.optimizer(0)),
            PrepMode::Variational => {
                if p.layout.is_none() && p.descriptor.is_none() {
                    return Err(config_err(
                        "variational preparation needs preparation.layout or preparation.descriptor",
                    ));
                }
                let thetas =
                    p.thetas.clone().ok_or_else(|| config_err("variational preparation needs preparation.thetas"))?;
                let ansatz = self.ansatz_for(temps[0])?;
                if thetas.len() != ansatz.n_params() {
                    return Err(config_err(format!(
                        "preparation.thetas has {} values but the ansatz takes {}",
                        thetas.len(),
                        ansatz.n_params()
                    )));
                }
                let params =
                    TfdParameters::new(thetas, temps[0]).map_err(|e| config_err(format!("preparation.thetas: {e}")))?;
                Preparation::Variational { ansatz, params }
            }
        };
        let ops = &self.operators;
        exp.w_site = ops.w_site;
        exp.w_pauli = parse_pauli("w_pauli", &ops.w_pauli)?;
        exp.v_site = ops.v_site;
        exp.v_pauli = parse_pauli("v_pauli", &ops.v_pauli)?;
        exp.schedule = self.schedule()?;
        exp.order = self.order()?;
        exp.evolution = match self.evolution.mode {
            EvolutionMode::Trotter => Evolution::Trotter,
            EvolutionMode::Exact => Evolution::Exact,
        };
        exp.shots = self.shots;
        exp.noise = self.noise_model()?;
        if exp.noise.is_some() && exp.shots.is_none() {
            return Err(config_err("noise needs shots: set a shot count to sample noisy trajectories"));
        }
        exp.seed = self.seed;
        exp.pad_depth = self.pad_depth;
        exp.validate()?;
        Ok(exp)
    }

    /// The schedule must reach both times of the decay-rate finite difference.
    pub fn check_decay_times(&self) -> CliResult<()> {
        let times = self.schedule()?.times();
        for t in [T_EARLY, T_LATE] {
            if !times.iter().any(|&s| (s - t).abs() <= TIME_TOL) {
                return Err(config_err(format!(
                    "the decay rate needs t = {t}, but evolution.steps only reach {times:?}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "temperatures = [0, 0.5, inf]\n[model]\nn_sites = 3\nJ = 1.0\ng = 1.0\n";

    #[test]
    fn minimal_config_has_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.preparation.mode, PrepMode::Exact);
        assert_eq!(
            cfg.temperatures().unwrap(),
            vec![Temperature::Zero, Temperature::Finite(0.5), Temperature::Infinite]
        );
        let exp = cfg.experiment().unwrap();
        assert_eq!(exp.schedule.times().len(), 4);
        assert_eq!(exp.w_pauli, Pauli::X);
    }

    #[test]
    fn string_temperatures_and_round_trip() {
        let text = MINIMAL.replace("[0, 0.5, inf]", "[\"inf\", 2]") + "[noise]\np1 = 0.01\n";
        let cfg = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.noise.as_ref().unwrap().p2, 0.015);
        let back = RunConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_and_missing_fields() {
        let e = RunConfig::from_toml(&MINIMAL.replace("J = 1.0\n", "")).unwrap_err();
        assert!(e.to_string().contains("`J`"), "{e}");
        assert!(RunConfig::from_toml(&(MINIMAL.to_owned() + "h = 2\n")).is_err());
        assert!(RunConfig::from_toml(&MINIMAL.replace("n_sites = 3", "n_sites = 14")).is_err());
        assert!(RunConfig::from_toml(&MINIMAL.replace("0.5", "-1")).is_err());
    }

    #[test]
    fn reference_mode_needs_tabulated_temperatures() {
        let text = MINIMAL.replace("0.5", "0.7") + "[preparation]\nmode = \"reference\"\n";
        let e = RunConfig::from_toml(&text).unwrap().experiment().unwrap_err();
        assert!(e.to_string().contains("0.7"), "{e}");
    }

    #[test]
    fn decay_times_must_be_reached() {
        let text = MINIMAL.to_owned() + "[evolution]\nsteps = [0.2, 0.2]\n";
        assert!(RunConfig::from_toml(&text).unwrap().check_decay_times().is_err());
        assert!(RunConfig::from_toml(MINIMAL).unwrap().check_decay_times().is_ok());
    }

    #[test]
    fn variational_needs_matching_thetas() {
        let base = MINIMAL.to_owned() + "[preparation]\nmode = \"variational\"\nlayout = \"infinite_t\"\n";
        assert!(RunConfig::from_toml(&base).unwrap().experiment().is_err());
        let ok = base.clone() + "thetas = [0.5, 0.5]\n";
        assert!(RunConfig::from_toml(&ok).unwrap().experiment().is_ok());
        let bad = base + "thetas = [0.5]\n";
        assert!(RunConfig::from_toml(&bad).unwrap().experiment().is_err());
    }
}
