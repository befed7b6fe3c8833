//! The per-agent difference equation and the preset models.
//!
//! Each iteration every agent receives its wage `e_i`, a share of the profit
//! pool proportional to its wealth, and consumes `Ω·w_i`:
//!
//! ```text
//! w' = w + e_i + Π·w/Σw − Ω_{i,t}·w
//! ```
//!
//! Agents are updated in fixed-size chunks. Chunks may run on any thread; the
//! per-chunk totals are always combined in chunk order, so results do not
//! depend on the thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics;
use crate::params::{
    AggregatePoint, ConsumptionSpec, EconParams, ParamError, PopulationState, RunResult,
    SnapshotSchedule, WageSpec, FIXEDNESS_WINDOW,
};
use crate::policy::apply_policy;

/// Clamp applied when an update would leave an agent with no wealth, as a
/// fraction of the initial mean wealth.
pub const POSITIVITY_FLOOR_FRAC: f64 = 1e-6;

/// Two-sample KS statistic below which a stochastic run counts as stationary.
pub const KS_STATIONARITY_THRESHOLD: f64 = 0.02;

/// Largest relative per-agent change over the final window for a
/// deterministic run to count as fixed.
pub const FIXEDNESS_TOLERANCE: f64 = 1e-9;

const CHUNK: usize = 2048;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("non-finite wealth for agent {agent} at iteration {iteration}")]
    NonFiniteWealth { iteration: usize, agent: usize },
    #[error("total wealth is not positive at iteration {0}")]
    ZeroWealth(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelPreset {
    /// Identical wages, stochastic consumption.
    M1A,
    /// Normally distributed wages, identical fixed consumption.
    M1B,
    /// Identical wages, normally distributed fixed consumption.
    M1C,
    /// Independent normal wages and normal fixed consumption.
    M1D,
}

impl ModelPreset {
    pub const ALL: [ModelPreset; 4] = [
        ModelPreset::M1A,
        ModelPreset::M1B,
        ModelPreset::M1C,
        ModelPreset::M1D,
    ];

    pub fn params(self, seed: u64) -> EconParams {
        let (wage, consumption) = match self {
            ModelPreset::M1A => (
                WageSpec::Constant { value: 100.0 },
                ConsumptionSpec::StochasticPerStep {
                    base: 0.30,
                    relative_sd: 1.0 / 3.0,
                },
            ),
            ModelPreset::M1B => (
                WageSpec::Normal {
                    mean: 100.0,
                    sd: 25.0,
                },
                ConsumptionSpec::FixedUniform { rate: 0.20 },
            ),
            ModelPreset::M1C => (
                WageSpec::Constant { value: 100.0 },
                ConsumptionSpec::FixedPerAgent {
                    mean: 0.20,
                    sd: 0.02,
                },
            ),
            ModelPreset::M1D => (
                WageSpec::Normal {
                    mean: 100.0,
                    sd: 10.0,
                },
                ConsumptionSpec::FixedPerAgent {
                    mean: 0.20,
                    sd: 0.02,
                },
            ),
        };
        EconParams {
            n_agents: 10_000,
            n_iterations: 10_000,
            wage,
            consumption,
            profit_ratio: 0.5,
            total_income: None,
            seed,
            policy: None,
            snapshots: SnapshotSchedule::default(),
        }
    }

    pub fn run(self, seed: u64) -> Result<RunResult, EngineError> {
        run(&self.params(seed))
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ModelPreset::M1A => "1a",
            ModelPreset::M1B => "1b",
            ModelPreset::M1C => "1c",
            ModelPreset::M1D => "1d",
        }
    }
}

impl fmt::Display for ModelPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for ModelPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().trim_start_matches('m') {
            "1a" => Ok(ModelPreset::M1A),
            "1b" => Ok(ModelPreset::M1B),
            "1c" => Ok(ModelPreset::M1C),
            "1d" => Ok(ModelPreset::M1D),
            other => Err(format!("unknown model '{other}' (expected 1a, 1b, 1c or 1d)")),
        }
    }
}

/// Totals of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepTotals {
    /// `Σw` before the update.
    pub wealth_before: f64,
    /// `Σw` after the update (and after flooring).
    pub wealth_after: f64,
    pub consumption: f64,
    pub income: f64,
    pub profit_pool: f64,
    pub floor_events: usize,
}

/// Run-constant quantities derived once from params and the initial state.
#[derive(Debug, Clone)]
struct StepContext {
    seed: u64,
    consumption: ConsumptionSpec,
    policy: Option<crate::policy::PolicySpec>,
    profit_pool: f64,
    floor: f64,
}

impl StepContext {
    fn new(params: &EconParams, state: &PopulationState) -> Result<Self, EngineError> {
        let wages = state.total_wages();
        let total_income = params.total_income_per_step(wages);
        let profit_pool = params.profit_pool(wages);
        if profit_pool < 0.0 {
            return Err(ParamError::IncomeBelowWages {
                total: total_income,
                wages,
            }
            .into());
        }
        let mean_omega = mean_consumption_rate(params, state);
        let initial_mean = total_income / state.wealth.len() as f64 / mean_omega;
        Ok(StepContext {
            seed: params.seed,
            consumption: params.consumption,
            policy: params.policy,
            profit_pool,
            floor: POSITIVITY_FLOOR_FRAC * initial_mean,
        })
    }
}

fn mean_consumption_rate(params: &EconParams, state: &PopulationState) -> f64 {
    match &state.consumption_propensity {
        Some(p) if !p.is_empty() => p.iter().sum::<f64>() / p.len() as f64,
        _ => params.consumption.mean(),
    }
}

/// Sum in fixed chunk order; the same reduction the engine uses internally.
pub fn ordered_sum(values: &[f64]) -> f64 {
    values
        .chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .fold(0.0, |acc, s| acc + s)
}

/// Builds the initial population: traits drawn, every agent at the
/// equilibrium mean wealth `Ȳ / Ω̄`.
pub fn initialize(params: &EconParams) -> Result<PopulationState, EngineError> {
    params.validate()?;
    let n = params.n_agents;
    let wages: Vec<f64> = if params.all_capital() {
        vec![0.0; n]
    } else {
        (0..n).map(|i| params.wage.draw(params.seed, i)).collect()
    };
    let consumption_propensity = match params.consumption {
        ConsumptionSpec::FixedPerAgent { .. } => Some(
            (0..n)
                .map(|i| {
                    params
                        .consumption
                        .draw_trait(params.seed, i)
                        .expect("fixed-per-agent mode")
                })
                .collect::<Vec<_>>(),
        ),
        _ => None,
    };
    let mut state = PopulationState {
        t: 0,
        wealth: Vec::new(),
        wages,
        consumption_propensity,
    };
    let total_wages = state.total_wages();
    let total_income = params.total_income_per_step(total_wages);
    if total_income < total_wages {
        return Err(ParamError::IncomeBelowWages {
            total: total_income,
            wages: total_wages,
        }
        .into());
    }
    let w0 = total_income / n as f64 / mean_consumption_rate(params, &state);
    state.wealth = vec![w0; n];
    Ok(state)
}

#[derive(Debug, Clone, Copy, Default)]
struct ChunkTotals {
    wealth: f64,
    consumption: f64,
    income: f64,
    floor_events: usize,
    non_finite: Option<usize>,
}

fn step_in_place(
    state: &mut PopulationState,
    ctx: &StepContext,
    wealth_before: f64,
) -> Result<StepTotals, EngineError> {
    let t = state.t;
    if wealth_before <= 0.0 || !wealth_before.is_finite() {
        return Err(EngineError::ZeroWealth(t));
    }
    let n = state.wealth.len();
    let mean_wealth = wealth_before / n as f64;
    let wages = &state.wages;
    let propensity = state.consumption_propensity.as_deref();

    let chunks: Vec<ChunkTotals> = state
        .wealth
        .par_chunks_mut(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let offset = ci * CHUNK;
            let mut acc = ChunkTotals::default();
            for (j, w) in chunk.iter_mut().enumerate() {
                let i = offset + j;
                let mut omega = match ctx.consumption {
                    ConsumptionSpec::StochasticPerStep { .. } => ctx
                        .consumption
                        .draw_step(ctx.seed, i, t)
                        .expect("stochastic mode"),
                    ConsumptionSpec::FixedPerAgent { .. } => propensity.expect("propensity")[i],
                    ConsumptionSpec::FixedUniform { rate } => rate,
                };
                if let Some(policy) = &ctx.policy {
                    omega = apply_policy(policy, *w, mean_wealth, omega);
                }
                let profit = ctx.profit_pool * *w / wealth_before;
                let income = wages[i] + profit;
                let consumption = omega * *w;
                let mut next = *w + income - consumption;
                if !next.is_finite() {
                    acc.non_finite.get_or_insert(i);
                    continue;
                }
                if next <= 0.0 {
                    next = ctx.floor;
                    acc.floor_events += 1;
                }
                *w = next;
                acc.wealth += next;
                acc.consumption += consumption;
                acc.income += income;
            }
            acc
        })
        .collect();

    let mut totals = StepTotals {
        wealth_before,
        profit_pool: ctx.profit_pool,
        ..StepTotals::default()
    };
    for c in &chunks {
        if let Some(agent) = c.non_finite {
            return Err(EngineError::NonFiniteWealth { iteration: t, agent });
        }
        totals.wealth_after += c.wealth;
        totals.consumption += c.consumption;
        totals.income += c.income;
        totals.floor_events += c.floor_events;
    }
    state.t += 1;
    Ok(totals)
}

/// One iteration of the difference equation applied to every agent.
///
/// The profit pool and the positivity floor are derived from `params` and
/// the state's wages and propensities, so a state produced by [`initialize`]
/// steps exactly as it would inside [`run`].
pub fn step(
    state: &PopulationState,
    params: &EconParams,
) -> Result<(PopulationState, StepTotals), EngineError> {
    let ctx = StepContext::new(params, state)?;
    let mut next = state.clone();
    let before = ordered_sum(&next.wealth);
    let totals = step_in_place(&mut next, &ctx, before)?;
    Ok((next, totals))
}

fn incomes(state: &PopulationState, profit_pool: f64, total_wealth: f64) -> Vec<f64> {
    state
        .wealth
        .iter()
        .zip(&state.wages)
        .map(|(w, e)| e + profit_pool * w / total_wealth)
        .collect()
}

/// Iterates the model `n_iterations` times from [`initialize`].
pub fn run(params: &EconParams) -> Result<RunResult, EngineError> {
    let mut state = initialize(params)?;
    let ctx = StepContext::new(params, &state)?;
    let snapshot_at = params.snapshots.iterations(params.n_iterations);
    let mut snapshots = std::collections::BTreeMap::new();
    let mut series = Vec::with_capacity(params.n_iterations);
    let mut total = ordered_sum(&state.wealth);

    for t in 0..params.n_iterations {
        let totals = step_in_place(&mut state, &ctx, total)?;
        series.push(AggregatePoint {
            iteration: t,
            total_wealth: totals.wealth_before,
            total_consumption: totals.consumption,
            total_income: totals.income,
            profit_rate: totals.profit_pool / totals.wealth_before,
            floor_events: totals.floor_events,
        });
        total = totals.wealth_after;
        if snapshot_at.contains(&state.t) {
            snapshots.insert(state.t, state.wealth.clone());
        }
    }

    Ok(RunResult {
        final_income: incomes(&state, ctx.profit_pool, total),
        final_wealth: state.wealth,
        wages: state.wages,
        consumption_propensity: state.consumption_propensity,
        wealth_snapshots: snapshots,
        aggregate_series: series,
        final_total_wealth: total,
        deterministic: !params.consumption.is_stochastic(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub converged: bool,
    /// Earliest snapshot already indistinguishable from the final state.
    pub at_iteration: Option<usize>,
    /// KS statistic between the midpoint and final wealth.
    pub ks_statistic: f64,
    /// Largest relative per-agent change over the final window
    /// (deterministic runs only).
    pub max_relative_change: Option<f64>,
}

fn max_relative_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Compares stored snapshots with the final wealth.
///
/// Stochastic runs are stationary when the midpoint and final distributions
/// agree (KS below [`KS_STATIONARITY_THRESHOLD`]). Deterministic runs must
/// additionally have stopped moving: every agent's wealth changed by less
/// than [`FIXEDNESS_TOLERANCE`] (relative) over the last
/// [`FIXEDNESS_WINDOW`] iterations.
pub fn detect_stationarity(result: &RunResult) -> StationarityReport {
    let final_w = &result.final_wealth;
    let ks = result
        .midpoint()
        .map(|m| metrics::ks_statistic(m, final_w))
        .unwrap_or(f64::NAN);
    let total = result.aggregate_series.len();

    let earlier: Vec<(&usize, &Vec<f64>)> = result
        .wealth_snapshots
        .iter()
        .filter(|(t, _)| **t < total)
        .collect();
    if earlier.is_empty() {
        return StationarityReport {
            converged: false,
            at_iteration: None,
            ks_statistic: ks,
            max_relative_change: None,
        };
    }

    let settled = |snap: &[f64]| {
        if result.deterministic {
            max_relative_change(snap, final_w) < FIXEDNESS_TOLERANCE
        } else {
            metrics::ks_statistic(snap, final_w) < KS_STATIONARITY_THRESHOLD
        }
    };

    let (fixedness, converged) = if result.deterministic {
        let window_start = total.saturating_sub(FIXEDNESS_WINDOW);
        let reference = earlier
            .iter()
            .rev()
            .find(|(t, _)| **t <= window_start)
            .or_else(|| earlier.first())
            .map(|(_, v)| v.as_slice())
            .expect("non-empty");
        let change = max_relative_change(reference, final_w);
        (Some(change), change < FIXEDNESS_TOLERANCE && ks < KS_STATIONARITY_THRESHOLD)
    } else {
        (None, ks < KS_STATIONARITY_THRESHOLD)
    };

    let at_iteration = if converged {
        earlier.iter().find(|(_, v)| settled(v)).map(|(t, _)| **t)
    } else {
        None
    };

    StationarityReport {
        converged,
        at_iteration,
        ks_statistic: ks,
        max_relative_change: fixedness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_agent(total_income: f64) -> EconParams {
        EconParams {
            n_agents: 1,
            n_iterations: 1,
            wage: WageSpec::Constant { value: 100.0 },
            consumption: ConsumptionSpec::FixedUniform { rate: 0.3 },
            profit_ratio: 0.5,
            total_income: Some(total_income),
            seed: 0,
            policy: None,
            snapshots: SnapshotSchedule::default(),
        }
    }

    fn one_agent_state(w: f64) -> PopulationState {
        PopulationState {
            t: 0,
            wealth: vec![w],
            wages: vec![100.0],
            consumption_propensity: None,
        }
    }

    #[test]
    fn single_agent_arithmetic() {
        // r = 0.1 on w = 1000 means a profit pool of 100
        let (next, totals) = step(&one_agent_state(1000.0), &single_agent(200.0)).unwrap();
        assert_eq!(next.wealth[0], 900.0);
        assert_eq!(totals.consumption, 300.0);
        assert_eq!(totals.income, 200.0);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn single_agent_fixed_point() {
        // e/(Ω − r) = 100/(0.3 − 0.1) = 500, profit pool 0.1·500 = 50
        let (next, _) = step(&one_agent_state(500.0), &single_agent(150.0)).unwrap();
        assert_eq!(next.wealth[0], 500.0);
    }

    #[test]
    fn floor_applies_when_overdrawn() {
        let mut p = single_agent(100.0);
        p.consumption = ConsumptionSpec::FixedUniform { rate: 5.0 };
        let (next, totals) = step(&one_agent_state(1000.0), &p).unwrap();
        assert_eq!(totals.floor_events, 1);
        assert!(next.wealth[0] > 0.0);
    }

    #[test]
    fn non_finite_reported_with_iteration() {
        let mut p = single_agent(f64::MAX);
        p.wage = WageSpec::Constant { value: f64::MAX };
        let mut state = one_agent_state(f64::MAX);
        state.wages = vec![f64::MAX];
        state.t = 7;
        assert!(matches!(
            step(&state, &p),
            Err(EngineError::NonFiniteWealth { iteration: 7, agent: 0 })
        ));
    }

    #[test]
    fn initial_wealth_is_equilibrium_mean() {
        let mut p = ModelPreset::M1C.params(3);
        p.n_agents = 500;
        let s = initialize(&p).unwrap();
        let omega_mean =
            s.consumption_propensity.as_ref().unwrap().iter().sum::<f64>() / 500.0;
        // Y = 2 Σe = 200 per agent
        assert!((s.wealth[0] - 200.0 / omega_mean).abs() < 1e-9);
        assert!(s.wealth.iter().all(|w| *w == s.wealth[0]));
    }

    #[test]
    fn all_capital_requires_income_and_zeroes_wages() {
        let mut p = ModelPreset::M1C.params(1);
        p.n_agents = 50;
        p.profit_ratio = 1.0;
        assert!(matches!(
            initialize(&p),
            Err(EngineError::Params(ParamError::MissingTotalIncome))
        ));
        p.total_income = Some(50.0 * 900.0);
        let s = initialize(&p).unwrap();
        assert!(s.wages.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn preset_names_parse() {
        for p in ModelPreset::ALL {
            assert_eq!(p.short_name().parse::<ModelPreset>().unwrap(), p);
        }
        assert_eq!("M1C".parse::<ModelPreset>().unwrap(), ModelPreset::M1C);
        assert!("2a".parse::<ModelPreset>().is_err());
    }

    #[test]
    fn ordered_sum_matches_plain_sum_for_integers() {
        let v: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        assert_eq!(ordered_sum(&v), 49_995_000.0);
    }

    #[test]
    fn constant_snapshots_are_trivially_stationary() {
        let v = vec![3.0; 100];
        let mut snaps = std::collections::BTreeMap::new();
        snaps.insert(5, v.clone());
        snaps.insert(10, v.clone());
        let r = RunResult {
            final_wealth: v.clone(),
            final_income: v.clone(),
            wages: v.clone(),
            consumption_propensity: None,
            wealth_snapshots: snaps,
            aggregate_series: vec![
                AggregatePoint {
                    iteration: 0,
                    total_wealth: 300.0,
                    total_consumption: 0.0,
                    total_income: 0.0,
                    profit_rate: 0.0,
                    floor_events: 0,
                };
                10
            ],
            final_total_wealth: 300.0,
            deterministic: true,
        };
        let s = detect_stationarity(&r);
        assert!(s.converged);
        assert_eq!(s.ks_statistic, 0.0);
        assert_eq!(s.at_iteration, Some(5));
    }
}
