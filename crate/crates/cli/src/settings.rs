//! Flag and config-file merging, and the run configuration of `simulate`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use glv_econ::engine::ModelPreset;
use glv_econ::io::Config;
use glv_econ::params::{ConsumptionSpec, EconParams, SnapshotSchedule, WageSpec};
use glv_econ::policy::PolicySpec;

use crate::args::SimulateArgs;
use crate::CliError;

/// Config entries not yet claimed by a flag lookup.
pub struct Source {
    cfg: Config,
}

impl Source {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg = match path {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        Ok(Source { cfg })
    }

    /// The flag if given, else the file entry. The entry is consumed (and
    /// parsed) either way, so bad or unknown file keys are always reported.
    pub fn get<T>(&mut self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let file = self.cfg.take::<T>(key)?;
        Ok(flag.or(file))
    }

    pub fn finish(self) -> Result<(), CliError> {
        Ok(self.cfg.finish()?)
    }
}

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelChoice {
    Preset(ModelPreset),
    Custom,
}

impl ModelChoice {
    pub fn name(self) -> String {
        match self {
            ModelChoice::Preset(p) => p.short_name().to_string(),
            ModelChoice::Custom => "custom".into(),
        }
    }
}

impl FromStr for ModelChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("custom") {
            return Ok(ModelChoice::Custom);
        }
        s.parse::<ModelPreset>()
            .map(ModelChoice::Preset)
            .map_err(|e| format!("{e} or custom"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ConsumptionKind {
    Stochastic,
    PerAgent,
    Uniform,
}

impl FromStr for ConsumptionKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "stochastic" => Ok(ConsumptionKind::Stochastic),
            "per-agent" | "fixed" => Ok(ConsumptionKind::PerAgent),
            "uniform" => Ok(ConsumptionKind::Uniform),
            other => Err(format!("unknown consumption mode '{other}' (stochastic, per-agent, uniform)")),
        }
    }
}

/// Everything `simulate` needs after merging flags, file and defaults.
#[derive(Debug)]
pub struct SimulateConfig {
    pub model: ModelChoice,
    pub params: EconParams,
    pub n_tail: Option<usize>,
    pub histogram_bins: Option<usize>,
    pub out_dir: PathBuf,
}

impl SimulateConfig {
    pub fn resolve(a: SimulateArgs) -> Result<Self, CliError> {
        let mut src = Source::load(a.config.as_deref())?;
        let model: Option<ModelChoice> = src.get(a.model.as_deref().map(str::parse).transpose().map_err(config_err)?, "model")?;
        let seed = src.get(a.seed, "seed")?;
        let agents = src.get(a.agents, "agents")?;
        let iterations = src.get(a.iterations, "iterations")?;
        let rho = src.get(a.rho, "rho")?;
        let total_income = src.get(a.total_income, "total_income")?;
        let wage = src.get(a.wage, "wage")?;
        let wage_sd = src.get(a.wage_sd, "wage_sd")?;
        let kind: Option<ConsumptionKind> = src.get(
            a.consumption.as_deref().map(str::parse).transpose().map_err(config_err)?,
            "consumption",
        )?;
        let omega = src.get(a.omega, "omega")?;
        let omega_sd = src.get(a.omega_sd, "omega_sd")?;
        let policy: Option<String> = src.get(a.policy, "policy")?;
        let threshold = src.get(a.threshold, "threshold")?;
        let cut = src.get(a.cut, "cut")?;
        let n_tail = src.get(a.n_tail, "n_tail")?;
        let histogram_bins = src.get(a.histogram_bins, "histogram_bins")?;
        let out_dir: Option<PathBuf> = src.get(a.out_dir, "out_dir")?;
        src.finish()?;

        let model = model.ok_or_else(|| config_err("missing model (--model 1a|1b|1c|1d|custom)"))?;
        let seed = seed.ok_or_else(|| config_err("missing seed (--seed); runs are only reproducible with an explicit seed"))?;

        let mut params = match model {
            ModelChoice::Preset(p) => p.params(seed),
            ModelChoice::Custom => EconParams {
                wage: WageSpec::Constant { value: 100.0 },
                consumption: ConsumptionSpec::FixedUniform { rate: 0.2 },
                ..ModelPreset::M1A.params(seed)
            },
        };
        if let Some(n) = agents {
            params.n_agents = n;
        }
        if let Some(t) = iterations {
            params.n_iterations = t;
        }
        if let Some(r) = rho {
            params.profit_ratio = r;
        }
        params.total_income = total_income;

        if wage.is_some() || wage_sd.is_some() {
            let (m0, sd0) = match params.wage {
                WageSpec::Constant { value } => (value, 0.0),
                WageSpec::Normal { mean, sd } => (mean, sd),
            };
            let (m, sd) = (wage.unwrap_or(m0), wage_sd.unwrap_or(sd0));
            params.wage = if sd > 0.0 {
                WageSpec::Normal { mean: m, sd }
            } else {
                WageSpec::Constant { value: m }
            };
        }
        if kind.is_some() || omega.is_some() || omega_sd.is_some() {
            params.consumption = consumption(params.consumption, kind, omega, omega_sd)?;
        }

        params.policy = match policy.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("none") => {
                if threshold.is_some() || cut.is_some() {
                    return Err(config_err("threshold and cut need --policy compulsory-saving"));
                }
                None
            }
            Some("compulsory-saving") | Some("compulsory_saving") => {
                let std = PolicySpec::standard_compulsory_saving();
                Some(PolicySpec::compulsory_saving(
                    threshold.unwrap_or(std.wealth_threshold_frac),
                    cut.unwrap_or(std.consumption_cut_frac),
                ))
            }
            Some(other) => return Err(config_err(format!("unknown policy '{other}' (compulsory-saving, none)"))),
        };
        params.snapshots = SnapshotSchedule::default();
        params
            .validate()
            .map_err(|e| config_err(format!("invalid parameters: {e}")))?;

        Ok(SimulateConfig {
            model,
            params,
            n_tail,
            histogram_bins,
            out_dir: out_dir.unwrap_or_else(|| PathBuf::from(".")),
        })
    }
}

fn consumption(
    current: ConsumptionSpec,
    kind: Option<ConsumptionKind>,
    omega: Option<f64>,
    omega_sd: Option<f64>,
) -> Result<ConsumptionSpec, CliError> {
    let (k0, m0, sd0) = match current {
        ConsumptionSpec::StochasticPerStep { base, relative_sd } => (ConsumptionKind::Stochastic, base, base * relative_sd),
        ConsumptionSpec::FixedPerAgent { mean, sd } => (ConsumptionKind::PerAgent, mean, sd),
        ConsumptionSpec::FixedUniform { rate } => (ConsumptionKind::Uniform, rate, 0.0),
    };
    let kind = kind.unwrap_or(k0);
    let m = omega.unwrap_or(m0);
    // switching to uniform drops an inherited spread; an explicit one is an error
    let sd = match (kind, omega_sd) {
        (ConsumptionKind::Uniform, Some(sd)) if sd != 0.0 => {
            return Err(config_err("uniform consumption takes no omega_sd"));
        }
        (ConsumptionKind::Uniform, _) => 0.0,
        (_, Some(sd)) => sd,
        (_, None) => sd0,
    };
    Ok(match kind {
        ConsumptionKind::Stochastic => ConsumptionSpec::StochasticPerStep {
            base: m,
            relative_sd: if m != 0.0 { sd / m } else { 0.0 },
        },
        ConsumptionKind::PerAgent => ConsumptionSpec::FixedPerAgent { mean: m, sd },
        ConsumptionKind::Uniform => ConsumptionSpec::FixedUniform { rate: m },
    })
}
