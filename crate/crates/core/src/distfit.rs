//! Densities and binned least-squares fits for the GLV, log-normal,
//! Maxwell-Boltzmann and Pareto-tail families.
//!
//! Fits minimise `Σ ((count − expected)/err)²` where `expected` is the total
//! count times the family's probability mass in the bin, taken from closed
//! form CDFs and renormalised to the histogram's range.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};
use statrs::function::gamma::{gamma_ur, ln_gamma};
use std::f64::consts::{PI, SQRT_2};
use thiserror::Error;

/// Default per-bin measurement error.
pub const DEFAULT_ASSUMED_ERROR: f64 = 100.0;
pub const MAX_EVALUATIONS: usize = 100_000;
pub const RESTARTS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("no values to bin")]
    EmptyInput,
    #[error("invalid binning: {0}")]
    InvalidBins(String),
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("invalid {family} parameters: {reason}")]
    InvalidParams { family: Family, reason: String },
    #[error("need at least {needed} nonempty bins, have {got}")]
    InsufficientBins { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Glv,
    LogNormal,
    MaxwellBoltzmann,
    ParetoTail,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Glv,
        Family::LogNormal,
        Family::MaxwellBoltzmann,
        Family::ParetoTail,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Glv => "glv",
            Family::LogNormal => "log-normal",
            Family::MaxwellBoltzmann => "maxwell-boltzmann",
            Family::ParetoTail => "pareto-tail",
        }
    }

    /// Parameters adjusted by [`fit`]. The GLV scale K follows from L and α.
    pub fn free_params(self) -> usize {
        match self {
            Family::Glv | Family::LogNormal => 2,
            Family::MaxwellBoltzmann | Family::ParetoTail => 1,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "glv" => Ok(Family::Glv),
            "log-normal" | "lognormal" => Ok(Family::LogNormal),
            "maxwell-boltzmann" | "maxboltz" | "mb" => Ok(Family::MaxwellBoltzmann),
            "pareto-tail" | "pareto" => Ok(Family::ParetoTail),
            other => Err(format!("unknown family '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum DistParams {
    Glv {
        #[serde(rename = "K")]
        k: f64,
        #[serde(rename = "L")]
        l: f64,
        alpha: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    MaxwellBoltzmann {
        a: f64,
    },
    ParetoTail {
        alpha: f64,
        x_min: f64,
    },
}

impl DistParams {
    /// GLV density with K set so that it integrates to one.
    pub fn glv(l: f64, alpha: f64) -> Self {
        DistParams::Glv {
            k: glv_normalizer(l, alpha),
            l,
            alpha,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            DistParams::Glv { .. } => Family::Glv,
            DistParams::LogNormal { .. } => Family::LogNormal,
            DistParams::MaxwellBoltzmann { .. } => Family::MaxwellBoltzmann,
            DistParams::ParetoTail { .. } => Family::ParetoTail,
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |reason: &str| {
            Err(FitError::InvalidParams {
                family: self.family(),
                reason: reason.to_string(),
            })
        };
        let pos = |x: f64| x.is_finite() && x > 0.0;
        match *self {
            DistParams::Glv { k, l, alpha } => {
                if !pos(k) || !pos(l) {
                    return bad("K and L must be positive");
                }
                if !(alpha.is_finite() && alpha > 1.0) {
                    return bad("alpha must exceed 1");
                }
            }
            DistParams::LogNormal { mu, sigma } => {
                if !mu.is_finite() || !pos(sigma) {
                    return bad("sigma must be positive and mu finite");
                }
            }
            DistParams::MaxwellBoltzmann { a } => {
                if !pos(a) {
                    return bad("a must be positive");
                }
            }
            DistParams::ParetoTail { alpha, x_min } => {
                if !pos(alpha) || !pos(x_min) {
                    return bad("alpha and x_min must be positive");
                }
            }
        }
        Ok(())
    }

    pub fn pdf(&self, w: f64) -> f64 {
        match *self {
            DistParams::Glv { k, l, alpha } => glv_pdf(w, k, l, alpha),
            DistParams::LogNormal { mu, sigma } => lognormal_pdf(w, mu, sigma),
            DistParams::MaxwellBoltzmann { a } => maxboltz_pdf(w, a),
            DistParams::ParetoTail { alpha, x_min } => pareto_pdf(w, alpha, x_min),
        }
    }

    /// Cumulative distribution of the normalised density. For GLV the stored
    /// K is ignored and the unit-mass shape is used.
    pub fn cdf(&self, w: f64) -> f64 {
        match *self {
            DistParams::Glv { l, alpha, .. } => glv_cdf(w, l, alpha),
            DistParams::LogNormal { mu, sigma } => lognormal_cdf(w, mu, sigma),
            DistParams::MaxwellBoltzmann { a } => maxboltz_cdf(w, a),
            DistParams::ParetoTail { alpha, x_min } => pareto_cdf(w, alpha, x_min),
        }
    }

    /// Moment-based starting point for `family` on `hist`.
    pub fn initial_guess(family: Family, hist: &Histogram) -> Self {
        let total = hist.total();
        let mut mean = 0.0;
        let mut log_mean = 0.0;
        for (i, &c) in hist.counts.iter().enumerate() {
            let x = hist.center(i).max(f64::MIN_POSITIVE);
            mean += c * x;
            log_mean += c * x.ln();
        }
        mean /= total;
        log_mean /= total;
        let mut var = 0.0;
        let mut log_var = 0.0;
        for (i, &c) in hist.counts.iter().enumerate() {
            let x = hist.center(i).max(f64::MIN_POSITIVE);
            var += c * (x - mean).powi(2);
            log_var += c * (x.ln() - log_mean).powi(2);
        }
        var /= total;
        log_var /= total;
        let mean = if mean > 0.0 { mean } else { 1.0 };
        match family {
            // mean of the unit-mass shape is L; variance is L²/(α−2)
            Family::Glv => {
                let alpha = if var > 0.0 { 2.0 + mean * mean / var } else { 3.0 };
                DistParams::glv(mean, alpha.min(1e3))
            }
            Family::LogNormal => DistParams::LogNormal {
                mu: log_mean,
                sigma: if log_var > 0.0 { log_var.sqrt() } else { 0.1 },
            },
            Family::MaxwellBoltzmann => DistParams::MaxwellBoltzmann {
                a: mean / (2.0 * (2.0 / PI).sqrt()),
            },
            Family::ParetoTail => {
                // start the tail at the bin holding the median count
                let mut acc = 0.0;
                let mut x_min = hist.bin_edges[0];
                for (i, &c) in hist.counts.iter().enumerate() {
                    acc += c;
                    if acc >= total / 2.0 {
                        x_min = hist.bin_edges[i];
                        break;
                    }
                }
                if x_min <= 0.0 {
                    x_min = mean;
                }
                DistParams::ParetoTail { alpha: 2.0, x_min }
            }
        }
    }

    fn to_free(self) -> Vec<f64> {
        match self {
            DistParams::Glv { l, alpha, .. } => vec![l.ln(), (alpha - 1.0).ln()],
            DistParams::LogNormal { mu, sigma } => vec![mu, sigma.ln()],
            DistParams::MaxwellBoltzmann { a } => vec![a.ln()],
            DistParams::ParetoTail { alpha, .. } => vec![alpha.ln()],
        }
    }

    fn from_free(template: DistParams, theta: &[f64]) -> Self {
        match template {
            DistParams::Glv { .. } => DistParams::glv(theta[0].exp(), 1.0 + theta[1].exp()),
            DistParams::LogNormal { .. } => DistParams::LogNormal {
                mu: theta[0],
                sigma: theta[1].exp(),
            },
            DistParams::MaxwellBoltzmann { .. } => DistParams::MaxwellBoltzmann { a: theta[0].exp() },
            DistParams::ParetoTail { x_min, .. } => DistParams::ParetoTail {
                alpha: theta[0].exp(),
                x_min,
            },
        }
    }
}

/// K that makes the GLV density integrate to one: (α−1)^α / (L·Γ(α)).
pub fn glv_normalizer(l: f64, alpha: f64) -> f64 {
    (alpha * (alpha - 1.0).ln() - ln_gamma(alpha) - l.ln()).exp()
}

/// `K·exp(−(α−1)/(w/L)) / (w/L)^(1+α)`, zero for `w ≤ 0`.
pub fn glv_pdf(w: f64, k: f64, l: f64, alpha: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let x = w / l;
    // log space keeps the w → 0 limit from turning into 0/0
    k * (-(alpha - 1.0) / x - (1.0 + alpha) * x.ln()).exp()
}

/// CDF of the unit-mass GLV shape, Q(α, (α−1)L/w).
pub fn glv_cdf(w: f64, l: f64, alpha: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    if w.is_infinite() {
        return 1.0;
    }
    gamma_ur(alpha, (alpha - 1.0) * l / w)
}

pub fn lognormal_pdf(w: f64, mu: f64, sigma: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let z = (w.ln() - mu) / sigma;
    (-0.5 * z * z).exp() / (w * sigma * (2.0 * PI).sqrt())
}

pub fn lognormal_cdf(w: f64, mu: f64, sigma: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    0.5 * erfc(-(w.ln() - mu) / (sigma * SQRT_2))
}

/// Speed-distribution form `√(2/π)·w²·exp(−w²/2a²)/a³`.
pub fn maxboltz_pdf(w: f64, a: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    (2.0 / PI).sqrt() * w * w * (-w * w / (2.0 * a * a)).exp() / (a * a * a)
}

pub fn maxboltz_cdf(w: f64, a: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    if w.is_infinite() {
        return 1.0;
    }
    let x = w / a;
    erf(x / SQRT_2) - (2.0 / PI).sqrt() * x * (-x * x / 2.0).exp()
}

pub fn pareto_pdf(w: f64, alpha: f64, x_min: f64) -> f64 {
    if w < x_min {
        return 0.0;
    }
    alpha / x_min * (x_min / w).powf(alpha + 1.0)
}

pub fn pareto_cdf(w: f64, alpha: f64, x_min: f64) -> f64 {
    if w <= x_min {
        return 0.0;
    }
    1.0 - (x_min / w).powf(alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    Count(usize),
    Width(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<f64>,
    pub assumed_error: f64,
}

impl Histogram {
    pub fn new(bin_edges: Vec<f64>, counts: Vec<f64>, assumed_error: f64) -> Result<Self, FitError> {
        if bin_edges.len() < 2 || counts.len() + 1 != bin_edges.len() {
            return Err(FitError::InvalidHistogram(format!(
                "{} edges for {} counts",
                bin_edges.len(),
                counts.len()
            )));
        }
        if bin_edges.iter().any(|e| !e.is_finite()) || bin_edges.windows(2).any(|p| p[1] <= p[0]) {
            return Err(FitError::InvalidHistogram("edges must be finite and strictly ascending".into()));
        }
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(FitError::InvalidHistogram("counts must be nonnegative".into()));
        }
        if !(assumed_error.is_finite() && assumed_error > 0.0) {
            return Err(FitError::InvalidHistogram("assumed error must be positive".into()));
        }
        Ok(Histogram {
            bin_edges,
            counts,
            assumed_error,
        })
    }

    /// Equal-width histogram of `values`.
    ///
    /// Without `range` the bins span [min, max]. A value maps to
    /// `⌊(v − lo)/width⌋`, clamped so the top edge lands in the last bin.
    /// Values outside an explicit range are dropped. A constant input gets a
    /// range widened around its value.
    pub fn from_values(values: &[f64], binning: Binning, range: Option<(f64, f64)>) -> Result<Self, FitError> {
        if values.is_empty() {
            return Err(FitError::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FitError::InvalidBins("values must be finite".into()));
        }
        let (mut lo, mut hi) = match range {
            Some((lo, hi)) => {
                if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                    return Err(FitError::InvalidBins(format!("bad range [{lo}, {hi}]")));
                }
                (lo, hi)
            }
            None => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        };
        if hi == lo {
            let half = 0.5 * lo.abs().max(1.0);
            lo -= half;
            hi += half;
        }
        let n_bins = match binning {
            Binning::Count(n) => n,
            Binning::Width(w) => {
                if !(w.is_finite() && w > 0.0) {
                    return Err(FitError::InvalidBins(format!("bin width {w}")));
                }
                ((hi - lo) / w).ceil() as usize
            }
        };
        if n_bins < 2 {
            return Err(FitError::InvalidBins(format!("need at least 2 bins, got {n_bins}")));
        }
        let width = match binning {
            Binning::Count(_) => (hi - lo) / n_bins as f64,
            Binning::Width(w) => w,
        };
        let mut counts = vec![0.0; n_bins];
        for &v in values {
            if v < lo || v > hi {
                continue;
            }
            let b = (((v - lo) / width).floor() as usize).min(n_bins - 1);
            counts[b] += 1.0;
        }
        let bin_edges = (0..=n_bins).map(|i| lo + width * i as f64).collect();
        Ok(Histogram {
            bin_edges,
            counts,
            assumed_error: DEFAULT_ASSUMED_ERROR,
        })
    }

    pub fn with_assumed_error(mut self, err: f64) -> Self {
        self.assumed_error = err;
        self
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn nonempty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0.0).count()
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.bin_edges[i] + self.bin_edges[i + 1])
    }

    /// Indices of the bins the family is compared on.
    fn fit_bins(&self, params: &DistParams) -> std::ops::Range<usize> {
        match *params {
            DistParams::ParetoTail { x_min, .. } => {
                let first = self.bin_edges.partition_point(|&e| e < x_min);
                first.min(self.n_bins())..self.n_bins()
            }
            _ => 0..self.n_bins(),
        }
    }
}

/// χ² of `params` against `hist` and the number of bins it was taken over.
pub fn chi2(hist: &Histogram, params: &DistParams) -> (f64, usize) {
    let bins = hist.fit_bins(params);
    let n_used = bins.len();
    let total: f64 = hist.counts[bins.clone()].iter().sum();
    let mut prev = params.cdf(hist.bin_edges[bins.start]);
    let covered = params.cdf(hist.bin_edges[bins.end]) - prev;
    if !(covered > 0.0) {
        return (f64::INFINITY, n_used);
    }
    let mut acc = 0.0;
    for i in bins {
        let next = params.cdf(hist.bin_edges[i + 1]);
        let expected = total * (next - prev) / covered;
        let r = (hist.counts[i] - expected) / hist.assumed_error;
        acc += r * r;
        prev = next;
    }
    (acc, n_used)
}

/// χ² divided by (bins − free parameters).
pub fn reduced_chi2(hist: &Histogram, params: &DistParams) -> f64 {
    let (c, n) = chi2(hist, params);
    let dof = n.saturating_sub(params.family().free_params()).max(1);
    c / dof as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_evaluations: usize,
    pub restarts: usize,
    /// Simplex size in the log parameters below which a descent stops.
    pub x_tolerance: f64,
    pub f_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_evaluations: MAX_EVALUATIONS,
            restarts: RESTARTS,
            x_tolerance: 1e-9,
            f_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub params: DistParams,
    pub reduced_chi2: f64,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn family(&self) -> Family {
        self.params.family()
    }
}

pub fn fit(hist: &Histogram, init: &DistParams) -> Result<FitResult, FitError> {
    fit_with(hist, init, &FitOptions::default())
}

/// Nelder-Mead descent on the log-parametrised family, followed by
/// restarts from the best point with deterministically jittered simplices.
///
/// The result is never worse than `init`. When the evaluation budget runs
/// out first, the best point found is returned with `converged = false`.
pub fn fit_with(hist: &Histogram, init: &DistParams, opts: &FitOptions) -> Result<FitResult, FitError> {
    init.validate()?;
    let needed = init.family().free_params() + 1;
    let got = {
        let bins = hist.fit_bins(init);
        hist.counts[bins].iter().filter(|&&c| c > 0.0).count()
    };
    if got < needed {
        return Err(FitError::InsufficientBins { needed, got });
    }
    let template = *init;
    let objective = |theta: &[f64]| {
        let p = DistParams::from_free(template, theta);
        if p.validate().is_err() {
            return f64::INFINITY;
        }
        let c = chi2(hist, &p).0;
        if c.is_nan() {
            f64::INFINITY
        } else {
            c
        }
    };

    let mut best_x = init.to_free();
    let mut best_f = objective(&best_x);
    let mut evaluations = 1;
    let mut iterations = 0;
    let mut converged = false;
    for round in 0..=opts.restarts {
        let budget = opts.max_evaluations.saturating_sub(evaluations);
        if budget == 0 {
            converged = false;
            break;
        }
        let (start, step) = jittered_start(&best_x, round);
        let out = nelder_mead(&objective, &start, step, budget, opts.x_tolerance, opts.f_tolerance);
        evaluations += out.evaluations;
        iterations += out.iterations;
        converged = out.converged;
        if out.f < best_f {
            best_f = out.f;
            best_x = out.x;
        }
    }
    let params = if best_f.is_finite() {
        DistParams::from_free(template, &best_x)
    } else {
        *init
    };
    let (c, n) = chi2(hist, &params);
    let dof = n.saturating_sub(params.family().free_params()).max(1);
    Ok(FitResult {
        params,
        reduced_chi2: c / dof as f64,
        chi2: c,
        dof,
        iterations,
        evaluations,
        converged,
    })
}

fn jittered_start(x: &[f64], round: usize) -> (Vec<f64>, f64) {
    if round == 0 {
        return (x.to_vec(), 0.2);
    }
    let start = x
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let sign = if (round + j).is_multiple_of(2) { 1.0 } else { -1.0 };
            v + sign * 0.02 * round as f64
        })
        .collect();
    (start, 0.05 + 0.05 * round as f64)
}

struct Descent {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    evaluations: usize,
    converged: bool,
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    x_tol: f64,
    f_tol: f64,
) -> Descent {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for j in 0..n {
        let mut p = x0.to_vec();
        p[j] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    let mut iterations = 0;
    let mut converged = false;

    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let f_spread = values[n] - values[0];
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if values[0].is_finite() && f_spread <= f_tol * (1.0 + values[0].abs()) && x_spread <= x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-0.5);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = f(&xc);
            (xc, fc)
        };
        evals += 1;
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let p: Vec<f64> = simplex[i]
                .iter()
                .zip(&simplex[0])
                .map(|(a, b)| b + 0.5 * (a - b))
                .collect();
            values[i] = f(&p);
            simplex[i] = p;
        }
        evals += n;
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    Descent {
        x: simplex[best].clone(),
        f: values[best],
        iterations,
        evaluations: evals,
        converged,
    }
}
