//! General Lotka-Volterra wealth and income models.
//!
//! A population of agents earns wages, receives a share of a fixed profit
//! pool in proportion to wealth, and consumes a fraction of wealth each
//! iteration. From that single difference equation the simulator produces
//! power-tailed wealth distributions, whose inequality is measured by the
//! [`metrics`] module and fitted by [`distfit`].
//!
//! - [`params`]: model constants, population state and income ratios
//! - [`stochastic`]: counter-based random streams (scheduling-independent)
//! - [`engine`]: the per-agent update and the four preset models
//! - [`policy`]: per-iteration interventions (compulsory saving)
//! - [`metrics`]: Gini, decile ratio, poverty ratio, Hill tail exponent
//! - [`distfit`]: GLV / log-normal / Maxwell-Boltzmann densities and χ² fits
//! - [`sweep`]: profit-ratio and consumption-spread grids, α-law regression
//! - [`dynamics`]: classical Lotka-Volterra, N-species GLV, city-size model
//! - [`io`]: config files, CSV and JSON emission

pub mod distfit;
pub mod dynamics;
pub mod engine;
pub mod io;
pub mod metrics;
pub mod params;
pub mod policy;
pub mod stochastic;
pub mod sweep;

pub use engine::{run, step, ModelPreset};
pub use metrics::MetricsReport;
pub use params::{EconParams, PopulationState, RunResult};
