//! Model constants, population state, run output and the income ratios.
//!
//! Currency is `f64` throughout. Total income per iteration `Y` is a wage
//! pool `Σe` plus a profit pool `Π`; by default `Π = Σe·ρ/(1−ρ)` so that the
//! profit ratio of every iteration is exactly `ρ`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{PolicyError, PolicySpec};
use crate::stochastic::{self, Channel, StreamKey, CONSUMPTION_FLOOR};

/// Snapshot taken this many iterations before the end, used by the
/// fixed-point check of deterministic models.
pub const FIXEDNESS_WINDOW: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("need at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("need at least 1 iteration")]
    NoIterations,
    #[error("profit ratio must lie in [0, 1], got {0}")]
    ProfitRatio(f64),
    #[error("{0} must be strictly positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("{0} must be non-negative, got {1}")]
    Negative(&'static str, f64),
    #[error("profit ratio 1 leaves no wage pool; an explicit total income is required")]
    MissingTotalIncome,
    #[error("total income {total} is below the wage pool {wages}")]
    IncomeBelowWages { total: f64, wages: f64 },
    #[error("total wealth is zero")]
    ZeroWealth,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Per-agent wage `e_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WageSpec {
    Constant { value: f64 },
    Normal { mean: f64, sd: f64 },
}

impl WageSpec {
    pub fn mean(&self) -> f64 {
        match *self {
            WageSpec::Constant { value } => value,
            WageSpec::Normal { mean, .. } => mean,
        }
    }

    /// Wage of agent `i`, drawn once. Normal wages are truncated at zero.
    pub fn draw(&self, seed: u64, agent: usize) -> f64 {
        match *self {
            WageSpec::Constant { value } => value,
            WageSpec::Normal { mean, sd } => {
                let key = StreamKey::trait_init(seed, Channel::WageTrait, agent as u64);
                stochastic::sample_truncated_normal(&key, mean, sd, 0.0)
            }
        }
    }

    /// Same distribution with every wage multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            WageSpec::Constant { value } => WageSpec::Constant {
                value: value * factor,
            },
            WageSpec::Normal { mean, sd } => WageSpec::Normal {
                mean: mean * factor,
                sd: sd * factor,
            },
        }
    }
}

/// How consumption rates `Ω` are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConsumptionSpec {
    /// Fresh draw every iteration: `Ω = base·z`, `z ~ N(1, relative_sd)`.
    StochasticPerStep { base: f64, relative_sd: f64 },
    /// One draw per agent at initialization, `Ω_i ~ N(mean, sd)`.
    FixedPerAgent { mean: f64, sd: f64 },
    /// Every agent uses the same constant rate.
    FixedUniform { rate: f64 },
}

impl ConsumptionSpec {
    pub fn mean(&self) -> f64 {
        match *self {
            ConsumptionSpec::StochasticPerStep { base, .. } => base,
            ConsumptionSpec::FixedPerAgent { mean, .. } => mean,
            ConsumptionSpec::FixedUniform { rate } => rate,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, ConsumptionSpec::StochasticPerStep { .. })
    }

    /// Propensity of agent `i` for the fixed-per-agent mode.
    pub fn draw_trait(&self, seed: u64, agent: usize) -> Option<f64> {
        match *self {
            ConsumptionSpec::FixedPerAgent { mean, sd } => {
                let key = StreamKey::trait_init(seed, Channel::ConsumptionTrait, agent as u64);
                Some(stochastic::sample_truncated_normal(
                    &key,
                    mean,
                    sd,
                    CONSUMPTION_FLOOR,
                ))
            }
            _ => None,
        }
    }

    /// Per-iteration draw for the stochastic mode.
    pub fn draw_step(&self, seed: u64, agent: usize, t: usize) -> Option<f64> {
        match *self {
            ConsumptionSpec::StochasticPerStep { base, relative_sd } => {
                let key = StreamKey::new(seed, Channel::ConsumptionDraw, agent as u64, t as u64);
                Some(stochastic::sample_truncated_normal(
                    &key,
                    base,
                    base * relative_sd,
                    CONSUMPTION_FLOOR,
                ))
            }
            _ => None,
        }
    }
}

/// Iterations at which whole wealth vectors are kept.
///
/// The midpoint, the endpoint and `T − FIXEDNESS_WINDOW` are always included.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SnapshotSchedule {
    /// Adds 1, r, r², ... up to `T`.
    pub geometric_ratio: Option<f64>,
    /// Adds every multiple of the stride in the second half of the run.
    pub stride: Option<usize>,
}

impl SnapshotSchedule {
    pub fn iterations(&self, total: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        out.insert(total / 2);
        out.insert(total);
        if total > 2 * FIXEDNESS_WINDOW {
            out.insert(total - FIXEDNESS_WINDOW);
        }
        if let Some(ratio) = self.geometric_ratio.filter(|r| *r > 1.0) {
            let mut x = 1.0f64;
            while x.round() as usize <= total {
                out.insert(x.round() as usize);
                x *= ratio;
            }
        }
        if let Some(stride) = self.stride.filter(|s| *s > 0) {
            let mut k = (total / 2).div_ceil(stride) * stride;
            while k <= total {
                out.insert(k);
                k += stride;
            }
        }
        out.remove(&0);
        out
    }
}

/// All scalar constants of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconParams {
    pub n_agents: usize,
    pub n_iterations: usize,
    pub wage: WageSpec,
    pub consumption: ConsumptionSpec,
    /// ρ: share of total income paid to capital.
    pub profit_ratio: f64,
    /// Explicit `Y`. When absent it is derived as `Σe/(1−ρ)`.
    pub total_income: Option<f64>,
    pub seed: u64,
    pub policy: Option<PolicySpec>,
    #[serde(default)]
    pub snapshots: SnapshotSchedule,
}

impl EconParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.n_agents < 2 {
            return Err(ParamError::TooFewAgents(self.n_agents));
        }
        if self.n_iterations < 1 {
            return Err(ParamError::NoIterations);
        }
        if !(0.0..=1.0).contains(&self.profit_ratio) {
            return Err(ParamError::ProfitRatio(self.profit_ratio));
        }
        let positive = |name, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(ParamError::NonPositive(name, x))
            }
        };
        let non_negative = |name, x: f64| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(ParamError::Negative(name, x))
            }
        };
        match self.wage {
            WageSpec::Constant { value } => positive("wage", value)?,
            WageSpec::Normal { mean, sd } => {
                positive("wage mean", mean)?;
                non_negative("wage sd", sd)?;
            }
        }
        match self.consumption {
            ConsumptionSpec::StochasticPerStep { base, relative_sd } => {
                positive("consumption base", base)?;
                non_negative("consumption relative sd", relative_sd)?;
            }
            ConsumptionSpec::FixedPerAgent { mean, sd } => {
                positive("consumption mean", mean)?;
                non_negative("consumption sd", sd)?;
            }
            ConsumptionSpec::FixedUniform { rate } => positive("consumption rate", rate)?,
        }
        match self.total_income {
            Some(y) => positive("total income", y)?,
            None if self.profit_ratio >= 1.0 => return Err(ParamError::MissingTotalIncome),
            None => {}
        }
        if let Some(policy) = &self.policy {
            policy.validate()?;
        }
        Ok(())
    }

    /// True when every agent receives no wage (all income is profit).
    pub fn all_capital(&self) -> bool {
        self.profit_ratio >= 1.0
    }

    /// `Y` for a population whose wages sum to `total_wages`.
    pub fn total_income_per_step(&self, total_wages: f64) -> f64 {
        match self.total_income {
            Some(y) => y,
            None => total_wages / (1.0 - self.profit_ratio),
        }
    }

    /// `Π = Y − Σe`.
    pub fn profit_pool(&self, total_wages: f64) -> f64 {
        match self.total_income {
            Some(y) => y - total_wages,
            None => total_wages * self.profit_ratio / (1.0 - self.profit_ratio),
        }
    }

    /// Relative spread of the fixed-per-agent consumption distribution.
    pub fn consumption_spread(&self) -> Option<f64> {
        match self.consumption {
            ConsumptionSpec::FixedPerAgent { mean, sd } => Some(sd / mean),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub t: usize,
    pub wealth: Vec<f64>,
    /// `e_i`, fixed at initialization.
    pub wages: Vec<f64>,
    /// `Ω_i` for the fixed-per-agent mode.
    pub consumption_propensity: Option<Vec<f64>>,
}

impl PopulationState {
    pub fn total_wealth(&self) -> f64 {
        self.wealth.iter().sum()
    }

    pub fn total_wages(&self) -> f64 {
        self.wages.iter().sum()
    }

    pub fn mean_wealth(&self) -> f64 {
        self.total_wealth() / self.wealth.len() as f64
    }
}

/// Totals for one iteration, measured before the update is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub iteration: usize,
    pub total_wealth: f64,
    pub total_consumption: f64,
    pub total_income: f64,
    /// Realized `r = Σπ/Σw`.
    pub profit_rate: f64,
    /// Agents clamped to the positivity floor during this iteration.
    pub floor_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub final_wealth: Vec<f64>,
    /// `Y_i = e_i + π_i` at the final iteration.
    pub final_income: Vec<f64>,
    pub wages: Vec<f64>,
    pub consumption_propensity: Option<Vec<f64>>,
    pub wealth_snapshots: BTreeMap<usize, Vec<f64>>,
    pub aggregate_series: Vec<AggregatePoint>,
    /// `Σw` after the last iteration.
    pub final_total_wealth: f64,
    /// True when no per-iteration randomness was involved.
    pub deterministic: bool,
}

impl RunResult {
    pub fn floor_events(&self) -> usize {
        self.aggregate_series.iter().map(|a| a.floor_events).sum()
    }

    /// Midpoint snapshot (iteration `T/2`).
    pub fn midpoint(&self) -> Option<&Vec<f64>> {
        let t = self.aggregate_series.len();
        self.wealth_snapshots.get(&(t / 2))
    }

    /// All snapshots taken at or after `from`, concatenated.
    pub fn pooled_snapshots(&self, from: usize) -> Vec<f64> {
        self.wealth_snapshots
            .range(from..)
            .flat_map(|(_, v)| v.iter().copied())
            .collect()
    }
}

/// Income ratios of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    /// Profit rate `Σπ/Σw`.
    pub profit_rate: f64,
    /// Income rate `ΣY/Σw`.
    pub income_rate: f64,
    /// Bowley ratio `Σe/ΣY`.
    pub bowley_ratio: f64,
    /// Profit ratio `Σπ/ΣY`.
    pub profit_ratio: f64,
}

impl RatioReport {
    pub fn from_totals(
        total_wealth: f64,
        total_wages: f64,
        total_profit: f64,
    ) -> Result<Self, ParamError> {
        if total_wealth == 0.0 {
            return Err(ParamError::ZeroWealth);
        }
        let total_income = total_wages + total_profit;
        let profit_ratio = if total_income > 0.0 {
            total_profit / total_income
        } else {
            0.0
        };
        Ok(RatioReport {
            profit_rate: total_profit / total_wealth,
            income_rate: total_income / total_wealth,
            // β is taken as the complement so that β + ρ = 1 holds exactly
            bowley_ratio: 1.0 - profit_ratio,
            profit_ratio,
        })
    }
}

/// Ratios realized by `state` under `params`.
pub fn derive_ratios(params: &EconParams, state: &PopulationState) -> Result<RatioReport, ParamError> {
    let wages = state.total_wages();
    RatioReport::from_totals(state.total_wealth(), wages, params.profit_pool(wages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base_params() -> EconParams {
        EconParams {
            n_agents: 100,
            n_iterations: 10,
            wage: WageSpec::Constant { value: 100.0 },
            consumption: ConsumptionSpec::FixedUniform { rate: 0.2 },
            profit_ratio: 0.5,
            total_income: None,
            seed: 1,
            policy: None,
            snapshots: SnapshotSchedule::default(),
        }
    }

    #[test]
    fn equal_split_gives_half_and_half() {
        let p = base_params();
        let state = PopulationState {
            t: 0,
            wealth: vec![1000.0; 100],
            wages: vec![100.0; 100],
            consumption_propensity: None,
        };
        let r = derive_ratios(&p, &state).unwrap();
        assert_eq!(r.bowley_ratio, 0.5);
        assert_eq!(r.profit_ratio, 0.5);
        // Y = 20000 on Σw = 100000
        assert!((r.income_rate - 0.2).abs() < 1e-15);
        assert!((r.profit_rate - 0.1).abs() < 1e-15);
    }

    #[test]
    fn all_labour_economy() {
        let r = RatioReport::from_totals(5e5, 1e5, 0.0).unwrap();
        assert_eq!(r.profit_ratio, 0.0);
        assert_eq!(r.bowley_ratio, 1.0);
        assert_eq!(r.profit_rate, 0.0);
    }

    #[test]
    fn direct_arithmetic_example() {
        // Σw = 1e6, ΣY = 3e5, Σπ = 1e5
        let r = RatioReport::from_totals(1e6, 2e5, 1e5).unwrap();
        assert!((r.profit_rate - 0.1).abs() < 1e-15);
        assert!((r.income_rate - 0.3).abs() < 1e-15);
        assert!((r.profit_ratio - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.bowley_ratio - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_wealth_rejected() {
        assert_eq!(
            RatioReport::from_totals(0.0, 1.0, 1.0),
            Err(ParamError::ZeroWealth)
        );
    }

    #[test]
    fn profit_pool_matches_ratio() {
        let mut p = base_params();
        for rho in [0.0, 0.1, 0.5, 0.8, 0.9] {
            p.profit_ratio = rho;
            let pool = p.profit_pool(1e4);
            let y = p.total_income_per_step(1e4);
            assert!((pool / y - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_catches_bad_inputs() {
        let mut p = base_params();
        assert!(p.validate().is_ok());
        p.profit_ratio = 1.0;
        assert_eq!(p.validate(), Err(ParamError::MissingTotalIncome));
        p.total_income = Some(1e4);
        assert!(p.validate().is_ok());
        p.profit_ratio = 1.5;
        assert_eq!(p.validate(), Err(ParamError::ProfitRatio(1.5)));
        let mut p = base_params();
        p.n_agents = 1;
        assert_eq!(p.validate(), Err(ParamError::TooFewAgents(1)));
        let mut p = base_params();
        p.consumption = ConsumptionSpec::FixedUniform { rate: 0.0 };
        assert!(matches!(p.validate(), Err(ParamError::NonPositive(..))));
        let mut p = base_params();
        p.policy = Some(PolicySpec::compulsory_saving(0.9, 1.2));
        assert!(matches!(p.validate(), Err(ParamError::Policy(_))));
    }

    #[test]
    fn snapshot_schedule_always_has_mid_and_end() {
        let s = SnapshotSchedule::default().iterations(10_000);
        assert_eq!(s.into_iter().collect::<Vec<_>>(), vec![5000, 9900, 10_000]);
        let s = SnapshotSchedule::default().iterations(10);
        assert_eq!(s.into_iter().collect::<Vec<_>>(), vec![5, 10]);
        let g = SnapshotSchedule {
            geometric_ratio: Some(10.0),
            stride: None,
        }
        .iterations(1000);
        assert!(g.contains(&1) && g.contains(&10) && g.contains(&100) && g.contains(&1000));
        let st = SnapshotSchedule {
            geometric_ratio: None,
            stride: Some(300),
        }
        .iterations(1000);
        assert_eq!(st.into_iter().collect::<Vec<_>>(), vec![500, 600, 900, 1000]);
    }

    proptest! {
        #[test]
        fn bowley_plus_profit_is_exactly_one(
            w in 1e-3f64..1e12, e in 0.0f64..1e9, pi in 0.0f64..1e9,
        ) {
            prop_assume!(e + pi > 0.0);
            let r = RatioReport::from_totals(w, e, pi).unwrap();
            prop_assert_eq!(r.bowley_ratio + r.profit_ratio, 1.0);
            let via_rates = r.profit_rate / r.income_rate;
            prop_assert!((via_rates - r.profit_ratio).abs() <= 1e-12 * r.profit_ratio.max(1e-300));
        }
    }
}
