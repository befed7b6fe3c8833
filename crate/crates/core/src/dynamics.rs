//! Predator-prey dynamics, the N-species GLV vector field and the stochastic
//! city-population difference equation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::ordered_sum;
use crate::stochastic::{sample_normal, Channel, StreamKey};

/// Populations above this are treated as a blow-up.
pub const DIVERGENCE_LIMIT: f64 = 1e300;
/// Clamp for city populations driven non-positive, as a fraction of the mean.
pub const CITY_FLOOR_FRAC: f64 = 1e-9;

const CHUNK: usize = 2048;
// agent indices reserved for the per-step rates shared by all cities
const SHARED_A: u64 = u64::MAX;
const SHARED_C: u64 = u64::MAX - 1;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("population of city {city} diverged at step {step}")]
    Divergence { step: usize, city: usize },
}

/// Classical predator-prey rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LvParams {
    /// Prey growth rate.
    pub a: f64,
    /// Predator death rate.
    pub c: f64,
    /// Predation rate per predator.
    pub alpha_int: f64,
    /// Predator growth per prey eaten.
    pub gamma_int: f64,
}

impl LvParams {
    pub fn new(a: f64, c: f64, alpha_int: f64, gamma_int: f64) -> Result<Self, DynamicsError> {
        let p = LvParams {
            a,
            c,
            alpha_int,
            gamma_int,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, v) in [
            ("a", self.a),
            ("c", self.c),
            ("alpha", self.alpha_int),
            ("gamma", self.gamma_int),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DynamicsError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Coexistence equilibrium (c/γ, a/α).
    pub fn fixed_point(&self) -> (f64, f64) {
        (self.c / self.gamma_int, self.a / self.alpha_int)
    }

    /// Largest step for which RK4 keeps both populations nonnegative from
    /// `(x0, y0)`: `dt·max(a, c, α·y0, γ·x0) < 0.1`.
    pub fn stable_dt(&self, (x0, y0): (f64, f64)) -> f64 {
        0.1 / self
            .a
            .max(self.c)
            .max(self.alpha_int * y0)
            .max(self.gamma_int * x0)
    }
}

pub fn lv_derivative((x, y): (f64, f64), p: &LvParams) -> (f64, f64) {
    (x * (p.a - p.alpha_int * y), y * (-p.c + p.gamma_int * x))
}

pub fn lv_step_rk4(state: (f64, f64), p: &LvParams, dt: f64) -> (f64, f64) {
    let (x, y) = state;
    let k1 = lv_derivative(state, p);
    let k2 = lv_derivative((x + 0.5 * dt * k1.0, y + 0.5 * dt * k1.1), p);
    let k3 = lv_derivative((x + 0.5 * dt * k2.0, y + 0.5 * dt * k2.1), p);
    let k4 = lv_derivative((x + dt * k3.0, y + dt * k3.1), p);
    (
        x + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Conserved quantity `γx − c·ln x + αy − a·ln y` of the closed orbits.
pub fn lv_invariant((x, y): (f64, f64), p: &LvParams) -> f64 {
    p.gamma_int * x - p.c * x.ln() + p.alpha_int * y - p.a * y.ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Integrates `steps` RK4 steps, keeping every `stride`-th state plus the last.
pub fn lv_trajectory(
    start: (f64, f64),
    p: &LvParams,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Vec<LvPoint>, DynamicsError> {
    p.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DynamicsError::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    if !(start.0 >= 0.0 && start.1 >= 0.0) {
        return Err(DynamicsError::InvalidParams("populations must be nonnegative".into()));
    }
    let stride = stride.max(1);
    let mut out = Vec::with_capacity(steps / stride + 2);
    let mut s = start;
    out.push(LvPoint {
        t: 0.0,
        x: s.0,
        y: s.1,
    });
    for i in 1..=steps {
        s = lv_step_rk4(s, p, dt);
        if i % stride == 0 || i == steps {
            out.push(LvPoint {
                t: i as f64 * dt,
                x: s.0,
                y: s.1,
            });
        }
    }
    Ok(out)
}

/// `dx_i/dt = x_i (r_i + Σ_j a_ij x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlvSystem {
    pub r: Vec<f64>,
    /// Row-major interaction matrix.
    pub interactions: Vec<Vec<f64>>,
}

impl GlvSystem {
    pub fn new(r: Vec<f64>, interactions: Vec<Vec<f64>>) -> Result<Self, DynamicsError> {
        let n = r.len();
        if n == 0 {
            return Err(DynamicsError::InvalidParams("system needs at least one species".into()));
        }
        if interactions.len() != n {
            return Err(DynamicsError::DimensionMismatch {
                expected: n,
                got: interactions.len(),
            });
        }
        for row in &interactions {
            if row.len() != n {
                return Err(DynamicsError::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DynamicsError::InvalidParams("interaction matrix must be finite".into()));
            }
        }
        Ok(GlvSystem { r, interactions })
    }

    /// The two-species system equivalent to `p`.
    pub fn from_lv(p: &LvParams) -> Self {
        GlvSystem {
            r: vec![p.a, -p.c],
            interactions: vec![vec![0.0, -p.alpha_int], vec![p.gamma_int, 0.0]],
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

pub fn glv_derivative(x: &[f64], sys: &GlvSystem) -> Result<Vec<f64>, DynamicsError> {
    if x.len() != sys.len() || sys.interactions.len() != sys.len() {
        return Err(DynamicsError::DimensionMismatch {
            expected: sys.len(),
            got: x.len(),
        });
    }
    sys.interactions
        .iter()
        .zip(&sys.r)
        .zip(x)
        .map(|((row, &r), &xi)| {
            if row.len() != x.len() {
                return Err(DynamicsError::DimensionMismatch {
                    expected: x.len(),
                    got: row.len(),
                });
            }
            let coupling: f64 = row.iter().zip(x).map(|(a, xj)| a * xj).sum();
            Ok(xi * (r + coupling))
        })
        .collect()
}

/// Normal(mean, sd) rate drawn fresh every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub mean: f64,
    pub sd: f64,
}

impl RateSpec {
    pub fn new(mean: f64, sd: f64) -> Self {
        RateSpec { mean, sd }
    }

    pub fn fixed(value: f64) -> Self {
        RateSpec { mean: value, sd: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityModelParams {
    /// Growth multiplier, drawn per city per step.
    pub lambda: RateSpec,
    /// Subsidy rate, shared by all cities within a step.
    pub a: RateSpec,
    /// Competition rate, shared by all cities within a step.
    pub c: RateSpec,
    pub n_cities: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub initial_population: f64,
    /// Steps between snapshots pooled into the stationary sample (second
    /// half of the run only). Zero keeps just the final state.
    pub sample_stride: usize,
}

impl CityModelParams {
    /// λ ~ N(1, 0.1), a ~ N(0.1, 0.01), c ~ N(0.1, 0.01) on 10⁴ cities for
    /// 10⁴ steps.
    pub fn standard(seed: u64) -> Self {
        CityModelParams {
            lambda: RateSpec::new(1.0, 0.1),
            a: RateSpec::new(0.1, 0.01),
            c: RateSpec::new(0.1, 0.01),
            n_cities: 10_000,
            n_steps: 10_000,
            seed,
            initial_population: 1.0,
            sample_stride: 500,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: String| Err(DynamicsError::InvalidParams(m));
        if self.n_cities == 0 {
            return bad("need at least one city".into());
        }
        for (name, r) in [("lambda", self.lambda), ("a", self.a), ("c", self.c)] {
            if !(r.mean.is_finite() && r.sd.is_finite() && r.sd >= 0.0) {
                return bad(format!("{name} rate must have finite mean and nonnegative sd"));
            }
            if r.mean < 0.0 {
                return bad(format!("{name} mean must be nonnegative, got {}", r.mean));
            }
        }
        if !(self.initial_population.is_finite() && self.initial_population > 0.0) {
            return bad("initial population must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CityTracePoint {
    pub t: usize,
    pub mean_pop: f64,
    pub max_pop: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityRun {
    pub final_populations: Vec<f64>,
    /// One point per step, including the initial state at t = 0.
    pub trace: Vec<CityTracePoint>,
    /// Populations divided by the concurrent mean, pooled over snapshots.
    pub stationary_sample: Vec<f64>,
    pub floor_events: u64,
}

impl CityRun {
    /// Relative change of the mean population across the last `frac` of the
    /// run: the average over its second half against the average over its
    /// first half. Averaging removes the step-to-step jitter from the shared
    /// rates.
    pub fn mean_drift(&self, frac: f64) -> f64 {
        let n = self.trace.len();
        let k = ((n as f64 * frac) as usize).clamp(2, n);
        let window = &self.trace[n - k..];
        let avg = |s: &[CityTracePoint]| s.iter().map(|p| p.mean_pop).sum::<f64>() / s.len() as f64;
        let (first, second) = window.split_at(k / 2);
        (avg(second) - avg(first)).abs() / avg(first)
    }
}

/// Iterates `w ← λ_i·w + a·w̄ − c·w̄·w` with fresh rates every step.
///
/// Populations pushed to zero or below are clamped to `CITY_FLOOR_FRAC·w̄`.
pub fn run_city_model(params: &CityModelParams) -> Result<CityRun, DynamicsError> {
    params.validate()?;
    let n = params.n_cities;
    let mut w = vec![params.initial_population; n];
    let mut trace = Vec::with_capacity(params.n_steps + 1);
    let mut sample = Vec::new();
    let mut floor_events = 0u64;
    let mut mean = params.initial_population;
    trace.push(CityTracePoint {
        t: 0,
        mean_pop: mean,
        max_pop: mean,
    });
    let half = params.n_steps / 2;

    for t in 1..=params.n_steps {
        let it = t as u64;
        let a = sample_normal(&StreamKey::new(params.seed, Channel::CityRates, SHARED_A, it), params.a.mean, params.a.sd);
        let c = sample_normal(&StreamKey::new(params.seed, Channel::CityRates, SHARED_C, it), params.c.mean, params.c.sd);
        let floor = CITY_FLOOR_FRAC * mean;
        let lambda = params.lambda;
        let seed = params.seed;
        let chunk_stats: Vec<(f64, f64, u64, Option<usize>)> = w
            .par_chunks_mut(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut sum = 0.0;
                let mut max = f64::NEG_INFINITY;
                let mut floored = 0;
                let mut diverged = None;
                for (j, wi) in chunk.iter_mut().enumerate() {
                    let i = ci * CHUNK + j;
                    let l = sample_normal(&StreamKey::new(seed, Channel::CityRates, i as u64, it), lambda.mean, lambda.sd);
                    let mut next = l * *wi + a * mean - c * mean * *wi;
                    if next <= 0.0 {
                        next = floor;
                        floored += 1;
                    }
                    if !(next <= DIVERGENCE_LIMIT) && diverged.is_none() {
                        diverged = Some(i);
                    }
                    *wi = next;
                    sum += next;
                    max = max.max(next);
                }
                (sum, max, floored, diverged)
            })
            .collect();
        if let Some(city) = chunk_stats.iter().find_map(|s| s.3) {
            return Err(DynamicsError::Divergence { step: t, city });
        }
        floor_events += chunk_stats.iter().map(|s| s.2).sum::<u64>();
        let total = chunk_stats.iter().fold(0.0, |acc, s| acc + s.0);
        mean = total / n as f64;
        if !(mean <= DIVERGENCE_LIMIT) {
            return Err(DynamicsError::Divergence { step: t, city: 0 });
        }
        let max_pop = chunk_stats.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.1));
        trace.push(CityTracePoint {
            t,
            mean_pop: mean,
            max_pop,
        });
        let snapshot = if params.sample_stride == 0 {
            t == params.n_steps
        } else {
            t > half && (t - half).is_multiple_of(params.sample_stride)
        };
        if snapshot && mean > 0.0 {
            sample.extend(w.iter().map(|v| v / mean));
        }
    }
    debug_assert!((ordered_sum(&w) / n as f64 - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    Ok(CityRun {
        final_populations: w,
        trace,
        stationary_sample: sample,
        floor_events,
    })
}
