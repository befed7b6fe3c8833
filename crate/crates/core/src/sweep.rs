//! Profit-ratio and consumption-spread grids over a base model, and the
//! regression of the wealth tail exponent on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, EngineError, ModelPreset};
use crate::metrics::{self, MetricsError};
use crate::params::{ConsumptionSpec, EconParams};

/// Largest consumption spread for which the model stays well behaved.
pub const MAX_SPREAD: f64 = 0.25;
/// Upper bound on [`tail_consistency`] for a tail to count as a power law.
pub const TAIL_CONSISTENCY_LIMIT: f64 = 1.5;
/// Profit-ratio window used by [`fit_alpha_law`].
pub const ALPHA_LAW_RHO: (f64, f64) = (0.1, 0.6);
/// At ρ = 1 there is no wage pool; the profit pool is held at this multiple
/// of the nominal wage bill (the ρ = 0.9 pool).
pub const ALL_CAPITAL_POOL_FACTOR: f64 = 9.0;

pub const CSV_HEADER: &str = "rho,v,seed_count,gini_wealth,gini_income,decile_wealth,decile_income,poverty_wealth,poverty_income,alpha_wealth,alpha_defined";

const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("cell rho={rho} v={v} replicate {replicate}: {source}")]
    Cell {
        rho: f64,
        v: f64,
        replicate: usize,
        #[source]
        source: EngineError,
    },
    #[error("cell rho={rho} v={v}: {source}")]
    Metrics {
        rho: f64,
        v: f64,
        #[source]
        source: MetricsError,
    },
    #[error("alpha law needs {needed_v} spreads with {needed_rho} defined profit ratios each in [0.1, 0.6]; found {found}")]
    InsufficientGrid {
        needed_v: usize,
        needed_rho: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: ModelPreset,
    pub rho_values: Vec<f64>,
    /// Consumption spreads (sd relative to mean). Empty keeps the base
    /// model's own spread.
    pub v_values: Vec<f64>,
    pub replicates: usize,
    /// Replicate `r` of every cell uses seed `seed + r`.
    pub seed: u64,
    pub n_agents: usize,
    pub n_iterations: usize,
    /// Hill tail size; defaults to 4% of the agents.
    pub n_tail: Option<usize>,
}

impl SweepSpec {
    /// The full grid: ρ = 0, 0.05, ..., 1 and v = 0.05, ..., 0.25.
    pub fn standard(seed: u64) -> Self {
        SweepSpec {
            base: ModelPreset::M1C,
            rho_values: (0..=20).map(|k| k as f64 * 0.05).collect(),
            v_values: (1..=5).map(|k| k as f64 * 0.05).collect(),
            replicates: 5,
            seed,
            n_agents: 10_000,
            n_iterations: 10_000,
            n_tail: None,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::InvalidSpec(m));
        if self.rho_values.is_empty() {
            return bad("no profit ratios".into());
        }
        if let Some(r) = self.rho_values.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return bad(format!("profit ratio {r} outside [0, 1]"));
        }
        if let Some(v) = self.v_values.iter().find(|v| !(**v > 0.0 && **v <= MAX_SPREAD + GRID_EPS)) {
            return bad(format!("consumption spread {v} outside (0, {MAX_SPREAD}]"));
        }
        if self.replicates == 0 {
            return bad("need at least one replicate".into());
        }
        if self.n_agents < 2 || self.n_iterations == 0 {
            return bad("need at least 2 agents and 1 iteration".into());
        }
        Ok(())
    }

    fn spreads(&self) -> Vec<Option<f64>> {
        if self.v_values.is_empty() {
            vec![None]
        } else {
            self.v_values.iter().map(|&v| Some(v)).collect()
        }
    }

    /// Engine parameters for one replicate of cell (ρ, v).
    ///
    /// The spread replaces the relative sd of whichever consumption mode the
    /// base model uses; a uniform rate becomes a per-agent normal one.
    pub fn cell_params(&self, rho: f64, v: Option<f64>, replicate: usize) -> EconParams {
        let mut p = self.base.params(self.seed.wrapping_add(replicate as u64));
        p.n_agents = self.n_agents;
        p.n_iterations = self.n_iterations;
        p.profit_ratio = rho;
        if let Some(v) = v {
            p.consumption = match p.consumption {
                ConsumptionSpec::StochasticPerStep { base, .. } => ConsumptionSpec::StochasticPerStep {
                    base,
                    relative_sd: v,
                },
                ConsumptionSpec::FixedPerAgent { mean, .. } => ConsumptionSpec::FixedPerAgent { mean, sd: v * mean },
                ConsumptionSpec::FixedUniform { rate } => ConsumptionSpec::FixedPerAgent { mean: rate, sd: v * rate },
            };
        }
        if p.all_capital() {
            p.total_income = Some(ALL_CAPITAL_POOL_FACTOR * p.wage.mean() * p.n_agents as f64);
        }
        p
    }

    /// Rounded to 12 digits so that 0.02/0.2 reports as 0.1.
    fn base_spread(&self) -> f64 {
        let p = self.base.params(self.seed);
        let v = match p.consumption {
            ConsumptionSpec::StochasticPerStep { relative_sd, .. } => relative_sd,
            ConsumptionSpec::FixedPerAgent { mean, sd } => sd / mean,
            ConsumptionSpec::FixedUniform { .. } => 0.0,
        };
        (v * 1e12).round() / 1e12
    }
}

/// Metrics of a single run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub gini_wealth: f64,
    pub gini_income: f64,
    pub decile_wealth: f64,
    pub decile_income: f64,
    pub poverty_wealth: f64,
    pub poverty_income: f64,
    pub top_share_wealth: f64,
    pub alpha_wealth: Option<f64>,
    pub alpha_income: Option<f64>,
    pub tail_consistency: Option<f64>,
}

impl ReplicateMetrics {
    pub fn compute(wealth: &[f64], income: &[f64], n_tail: usize) -> Result<Self, MetricsError> {
        let alpha_wealth = metrics::hill_alpha(wealth, n_tail).ok();
        Ok(ReplicateMetrics {
            gini_wealth: metrics::gini(wealth)?,
            gini_income: metrics::gini(income)?,
            decile_wealth: metrics::decile_ratio(wealth)?,
            decile_income: metrics::decile_ratio(income)?,
            poverty_wealth: metrics::poverty_ratio(wealth)?,
            poverty_income: metrics::poverty_ratio(income)?,
            top_share_wealth: metrics::top_share(wealth)?,
            alpha_wealth,
            alpha_income: metrics::hill_alpha(income, n_tail).ok(),
            tail_consistency: alpha_wealth.and_then(|a| tail_consistency(wealth, n_tail, a)),
        })
    }

    /// Power tail considered well defined for this run.
    pub fn tail_defined(&self, rho: f64) -> bool {
        rho > 0.0 && matches!(self.tail_consistency, Some(s) if s <= TAIL_CONSISTENCY_LIMIT)
    }
}

/// `ln(x_max/x_min)·(α − 1)/H_n` over the top `n_tail` values.
///
/// For a Pareto sample the log-span of the top n, scaled by the CCDF
/// exponent, has mean H_n (the n-th harmonic number), so the ratio sits
/// near one. When a few condensing agents run away from the rest, the span
/// is set by the outliers while α is set by the bulk of the tail, and the
/// ratio grows well past one.
pub fn tail_consistency(values: &[f64], n_tail: usize, alpha: f64) -> Option<f64> {
    let tail = metrics::upper_tail(values, n_tail).ok()?;
    let span = (tail[tail.len() - 1] / tail[0]).ln();
    let harmonic: f64 = (1..=n_tail).map(|k| 1.0 / k as f64).sum();
    Some(span * (alpha - 1.0) / harmonic)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho: f64,
    /// Consumption spread of the cell.
    pub v: f64,
    pub seed_count: usize,
    pub gini_wealth: f64,
    pub gini_income: f64,
    pub decile_wealth: f64,
    pub decile_income: f64,
    pub poverty_wealth: f64,
    pub poverty_income: f64,
    /// Mean Hill exponent of wealth, present when every replicate has a
    /// well-defined tail.
    pub alpha_wealth: Option<f64>,
    pub alpha_defined: bool,
    /// Mean Hill exponent of income regardless of tail quality.
    pub alpha_income_raw: Option<f64>,
    /// Mean Hill exponent of wealth regardless of tail quality.
    pub alpha_wealth_raw: Option<f64>,
    pub top_share_wealth: f64,
    pub replicates: Vec<ReplicateMetrics>,
}

impl SweepRow {
    pub fn from_replicates(rho: f64, v: f64, reps: Vec<ReplicateMetrics>) -> Self {
        let n = reps.len() as f64;
        let mean = |f: fn(&ReplicateMetrics) -> f64| {
            let vals: Vec<f64> = reps.iter().map(f).collect();
            if vals.iter().any(|x| x.is_infinite()) {
                f64::INFINITY
            } else {
                vals.iter().sum::<f64>() / n
            }
        };
        let mean_opt = |f: fn(&ReplicateMetrics) -> Option<f64>| {
            let vals: Option<Vec<f64>> = reps.iter().map(f).collect();
            vals.map(|v| v.iter().sum::<f64>() / n)
        };
        let alpha_defined = !reps.is_empty() && reps.iter().all(|r| r.tail_defined(rho));
        let alpha_wealth_raw = mean_opt(|r| r.alpha_wealth);
        SweepRow {
            rho,
            v,
            seed_count: reps.len(),
            gini_wealth: mean(|r| r.gini_wealth),
            gini_income: mean(|r| r.gini_income),
            decile_wealth: mean(|r| r.decile_wealth),
            decile_income: mean(|r| r.decile_income),
            poverty_wealth: mean(|r| r.poverty_wealth),
            poverty_income: mean(|r| r.poverty_income),
            alpha_wealth: if alpha_defined { alpha_wealth_raw } else { None },
            alpha_defined,
            alpha_income_raw: mean_opt(|r| r.alpha_income),
            alpha_wealth_raw,
            top_share_wealth: mean(|r| r.top_share_wealth),
            replicates: reps,
        }
    }

    pub fn csv_line(&self) -> String {
        let alpha = self.alpha_wealth.map(|a| a.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.rho,
            self.v,
            self.seed_count,
            self.gini_wealth,
            self.gini_income,
            fmt_extended(self.decile_wealth),
            fmt_extended(self.decile_income),
            self.poverty_wealth,
            self.poverty_income,
            alpha,
            self.alpha_defined
        )
    }
}

fn fmt_extended(x: f64) -> String {
    if x.is_infinite() && x > 0.0 {
        "inf".to_string()
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn row(&self, rho: f64, v: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| (r.rho - rho).abs() < GRID_EPS && (r.v - v).abs() < GRID_EPS)
    }

    pub fn v_values(&self) -> Vec<f64> {
        distinct(self.rows.iter().map(|r| r.v))
    }
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for x in values {
        if !out.iter().any(|y| (x - y).abs() < GRID_EPS) {
            out.push(x);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Runs every (ρ, v, replicate) job on the rayon pool and averages
/// replicates per cell. Rows come out sorted by (ρ, v).
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable, SweepError> {
    spec.validate()?;
    let n_tail = spec
        .n_tail
        .unwrap_or_else(|| metrics::default_tail_size(spec.n_agents))
        .max(metrics::MIN_HILL_TAIL);
    let mut rhos = spec.rho_values.clone();
    rhos.sort_by(f64::total_cmp);
    let spreads = spec.spreads();
    let mut cells = Vec::new();
    for &rho in &rhos {
        for &v in &spreads {
            cells.push((rho, v));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.replicates).map(move |r| (c, r)))
        .collect();
    let base_v = spec.base_spread();

    let results: Vec<Result<ReplicateMetrics, SweepError>> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (rho, v) = cells[c];
            let v_num = v.unwrap_or(base_v);
            let params = spec.cell_params(rho, v, r);
            let run = engine::run(&params).map_err(|source| SweepError::Cell {
                rho,
                v: v_num,
                replicate: r,
                source,
            })?;
            ReplicateMetrics::compute(&run.final_wealth, &run.final_income, n_tail)
                .map_err(|source| SweepError::Metrics { rho, v: v_num, source })
        })
        .collect();

    let mut results = results.into_iter();
    let mut rows = Vec::with_capacity(cells.len());
    for &(rho, v) in &cells {
        let reps = results
            .by_ref()
            .take(spec.replicates)
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(SweepRow::from_replicates(rho, v.unwrap_or(base_v), reps));
    }
    Ok(SweepTable { rows })
}

/// `α = c·(1 − ρ)/v^p` fitted by least squares on `ln α − ln(1 − ρ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaLaw {
    pub c: f64,
    pub p: f64,
    /// Smallest linear R² of α against ρ over the fixed-v series.
    pub r2_linear: f64,
    pub r2_by_v: Vec<(f64, f64)>,
    pub n_points: usize,
}

impl AlphaLaw {
    pub fn predict(&self, rho: f64, v: f64) -> f64 {
        self.c * (1.0 - rho) / v.powf(self.p)
    }
}

/// Two spreads are the fewest that pin down the exponent `p`.
pub const ALPHA_LAW_MIN_V: usize = 2;
pub const ALPHA_LAW_MIN_RHO: usize = 5;

pub fn fit_alpha_law(table: &SweepTable) -> Result<AlphaLaw, SweepError> {
    let (lo, hi) = ALPHA_LAW_RHO;
    let points: Vec<(f64, f64, f64)> = table
        .rows
        .iter()
        .filter(|r| r.rho >= lo - GRID_EPS && r.rho <= hi + GRID_EPS && r.v > 0.0)
        .filter_map(|r| r.alpha_wealth.map(|a| (r.rho, r.v, a)))
        .collect();
    let vs = distinct(points.iter().map(|p| p.1));
    let per_v: Vec<(f64, Vec<(f64, f64)>)> = vs
        .iter()
        .map(|&v| {
            let series = points
                .iter()
                .filter(|p| (p.1 - v).abs() < GRID_EPS)
                .map(|p| (p.0, p.2))
                .collect();
            (v, series)
        })
        .collect();
    let qualifying = per_v.iter().filter(|(_, s)| s.len() >= ALPHA_LAW_MIN_RHO).count();
    if qualifying < ALPHA_LAW_MIN_V {
        return Err(SweepError::InsufficientGrid {
            needed_v: ALPHA_LAW_MIN_V,
            needed_rho: ALPHA_LAW_MIN_RHO,
            found: qualifying,
        });
    }

    // y = ln c − p·ln v
    let xs: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.2.ln() - (1.0 - p.0).ln()).collect();
    let (intercept, slope, _) = linear_fit(&xs, &ys);

    let r2_by_v: Vec<(f64, f64)> = per_v
        .iter()
        .filter(|(_, s)| s.len() >= 3)
        .map(|(v, s)| {
            let (x, y): (Vec<f64>, Vec<f64>) = s.iter().copied().unzip();
            (*v, linear_fit(&x, &y).2)
        })
        .collect();
    let r2_linear = r2_by_v.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(AlphaLaw {
        c: intercept.exp(),
        p: -slope,
        r2_linear,
        r2_by_v,
        n_points: points.len(),
    })
}

/// Ordinary least squares `y = a + b·x`; returns (a, b, R²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (my - slope * mx, slope, r2)
}

/// The spread whose α-vs-ρ series lies closest (RMS over the common profit
/// ratios) to `target`, together with that RMS. Uses the raw Hill exponents,
/// whether or not the tail was flagged as well defined.
pub fn best_matching_v(table: &SweepTable, target: &[(f64, f64)]) -> Option<(f64, f64)> {
    table
        .v_values()
        .into_iter()
        .filter_map(|v| {
            let diffs: Vec<f64> = target
                .iter()
                .filter_map(|&(rho, a)| table.row(rho, v).and_then(|r| r.alpha_wealth_raw).map(|m| m - a))
                .collect();
            if diffs.len() < target.len() || diffs.is_empty() {
                return None;
            }
            let rms = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
            Some((v, rms))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range '{s}' must be start:stop:step"));
        }
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"));
        let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || b < a {
            return Err(format!("range '{s}' needs stop ≥ start and a positive step"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        // round away accumulated binary error so 0.1·3 prints as 0.3
        Ok((0..=n).map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12).collect())
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
            .collect()
    }
}
