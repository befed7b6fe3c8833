use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use glv_econ::distfit::{self, Binning, DistParams, Family, FitOptions, FitResult, Histogram};
use glv_econ::dynamics::{self, CityModelParams, LvParams, RateSpec};
use glv_econ::engine::{self, ModelPreset};
use glv_econ::io::{self, Table};
use glv_econ::metrics::{self, MetricsReport};
use glv_econ::params::RatioReport;
use glv_econ::sweep::{self, SweepSpec};

use crate::args::{CityArgs, FitArgs, LvArgs, MetricsArgs, SimulateArgs, SweepArgs};
use crate::settings::{config_err, SimulateConfig, Source};
use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    Ok(io::write_atomic(path, text.as_bytes())?)
}

fn to_json(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Writes to `out`, or to standard output when no path was given.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report(values: &[f64], n_tail: Option<usize>, what: &str) -> Result<MetricsReport, CliError> {
    MetricsReport::compute(values, n_tail).map_err(|e| runtime(format!("{what} metrics: {e}")))
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = SimulateConfig::resolve(args)?;
    let p = &cfg.params;
    let run = engine::run(p).map_err(runtime)?;

    let wealth = report(&run.final_wealth, cfg.n_tail, "wealth")?;
    let income = report(&run.final_income, cfg.n_tail, "income")?;
    let earnings = report(&run.wages, cfg.n_tail, "earnings")?;
    let total_wages: f64 = run.wages.iter().sum();
    let ratios = RatioReport::from_totals(run.final_total_wealth, total_wages, p.profit_pool(total_wages))
        .map_err(runtime)?;
    let stationarity = engine::detect_stationarity(&run);

    let doc = json!({
        "model": cfg.model.name(),
        "seed": p.seed,
        "gini_wealth": wealth.gini,
        "gini_income": income.gini,
        "gini_earnings": earnings.gini,
        "wealth": wealth,
        "income": income,
        "earnings": earnings,
        "ratios": ratios,
        "stationarity": stationarity,
        "floor_events": run.floor_events(),
        "policy": p.policy,
        "params": p,
    });

    ensure_dir(&cfg.out_dir)?;
    write(&cfg.out_dir.join("wealth.csv"), &io::wealth_csv(&run.final_wealth, &run.final_income))?;
    write(&cfg.out_dir.join("metrics.json"), &to_json(&doc))?;
    write(&cfg.out_dir.join("aggregates.csv"), &io::aggregates_csv(&run.aggregate_series))?;
    if let Some(bins) = cfg.histogram_bins {
        let h = Histogram::from_values(&run.final_wealth, Binning::Count(bins), None).map_err(config_err_display)?;
        write(&cfg.out_dir.join("wealth_hist.csv"), &io::histogram_csv(&h))?;
    }

    let hill = wealth
        .hill_alpha
        .map(|a| format!("{a:.3}"))
        .unwrap_or_else(|| "n/a".into());
    eprintln!(
        "model {} seed {}: {} agents x {} iterations, gini wealth {:.4} income {:.4}, hill alpha {hill}, {}",
        cfg.model.name(),
        p.seed,
        p.n_agents,
        p.n_iterations,
        wealth.gini,
        income.gini,
        if stationarity.converged { "stationary" } else { "not yet stationary" },
    );
    Ok(())
}

fn config_err_display(e: impl std::fmt::Display) -> CliError {
    config_err(e.to_string())
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let mut src = Source::load(args.config.as_deref())?;
    let base: Option<String> = src.get(args.base, "base")?;
    let rho: Option<String> = src.get(args.rho, "rho")?;
    let v: Option<String> = src.get(args.v, "v")?;
    let replicates = src.get(args.replicates, "replicates")?;
    let seed = src.get(args.seed, "seed")?;
    let agents = src.get(args.agents, "agents")?;
    let iterations = src.get(args.iterations, "iterations")?;
    let n_tail = src.get(args.n_tail, "n_tail")?;
    let out: Option<PathBuf> = src.get(args.out, "out")?;
    let law: Option<PathBuf> = src.get(args.law, "law")?;
    src.finish()?;

    let seed = seed.ok_or_else(|| config_err("missing seed (--seed)"))?;
    let rho = rho.ok_or_else(|| config_err("missing rho grid (--rho start:stop:step)"))?;
    let base: ModelPreset = base.as_deref().unwrap_or("1c").parse().map_err(config_err)?;
    let spec = SweepSpec {
        base,
        rho_values: sweep::parse_grid(&rho).map_err(config_err)?,
        v_values: match v {
            Some(s) => sweep::parse_grid(&s).map_err(config_err)?,
            None => Vec::new(),
        },
        replicates: replicates.unwrap_or(1),
        n_agents: agents.unwrap_or(10_000),
        n_iterations: iterations.unwrap_or(10_000),
        n_tail,
        ..SweepSpec::standard(seed)
    };
    spec.validate().map_err(config_err_display)?;

    let table = sweep::run_sweep(&spec).map_err(runtime)?;
    emit(out.as_deref(), &table.to_csv())?;
    let defined = table.rows.iter().filter(|r| r.alpha_defined).count();
    eprintln!(
        "sweep on {}: {} cells x {} replicates, tail exponent defined in {defined}",
        spec.base,
        table.rows.len(),
        spec.replicates
    );
    if let Some(path) = law {
        let fitted = sweep::fit_alpha_law(&table).map_err(config_err_display)?;
        write(&path, &to_json(&fitted))?;
        eprintln!(
            "alpha law: c = {:.4}, p = {:.4}, min linear R^2 = {:.4} over {} points",
            fitted.c, fitted.p, fitted.r2_linear, fitted.n_points
        );
    }
    Ok(())
}

fn load_histogram(a: &FitArgs) -> Result<Histogram, CliError> {
    let text = io::read_file(&a.input)?;
    let first = text.lines().next().unwrap_or("");
    if first.split(',').any(|h| h.trim() == "bin_lo") {
        return Ok(io::read_histogram_csv(&text, a.assumed_error)?);
    }
    let values = Table::parse(&text)?.column(&a.column)?;
    Ok(Histogram::from_values(&values, Binning::Count(a.bins), None)
        .map_err(config_err_display)?
        .with_assumed_error(a.assumed_error))
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    let families: Vec<Family> = if args.family.eq_ignore_ascii_case("all") {
        Family::ALL.to_vec()
    } else {
        vec![args.family.parse().map_err(config_err)?]
    };
    let hist = load_histogram(&args)?;
    let opts = FitOptions {
        max_evaluations: args.max_evaluations,
        ..FitOptions::default()
    };
    let mut results: Vec<FitResult> = Vec::new();
    for f in families {
        let r = distfit::fit_with(&hist, &DistParams::initial_guess(f, &hist), &opts).map_err(runtime)?;
        eprintln!(
            "{f}: reduced chi2 {:.5} ({} dof){}",
            r.reduced_chi2,
            r.dof,
            if r.converged { "" } else { ", not converged" }
        );
        results.push(r);
    }
    let doc = if results.len() == 1 {
        serde_json::to_value(&results[0])
    } else {
        serde_json::to_value(&results)
    }
    .expect("serializable");
    emit(args.out.as_deref(), &to_json(&doc))?;
    let stuck: Vec<String> = results
        .iter()
        .filter(|r| !r.converged)
        .map(|r| r.params.family().to_string())
        .collect();
    if stuck.is_empty() {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!("fit did not converge: {}", stuck.join(", "))))
    }
}

pub fn metrics(args: MetricsArgs) -> Result<(), CliError> {
    let table = Table::parse(&io::read_file(&args.input)?)?;
    let columns: Vec<String> = match &args.column {
        Some(c) => vec![c.clone()],
        None => table.header.iter().filter(|h| *h != "rank").cloned().collect(),
    };
    let mut doc = serde_json::Map::new();
    for c in &columns {
        let values = table.column(c)?;
        let r = report(&values, args.n_tail, c)?;
        eprintln!("{c}: n {} gini {:.4}", r.n, r.gini);
        doc.insert(c.clone(), serde_json::to_value(&r).expect("serializable"));
    }
    emit(args.out.as_deref(), &to_json(&Value::Object(doc)))
}

pub fn lv(args: LvArgs) -> Result<(), CliError> {
    let mut src = Source::load(args.config.as_deref())?;
    let a = src.get(args.a, "a")?.unwrap_or(1.0);
    let c = src.get(args.c, "c")?.unwrap_or(1.0);
    let alpha = src.get(args.alpha, "alpha")?.unwrap_or(1.0);
    let gamma = src.get(args.gamma, "gamma")?.unwrap_or(1.0);
    let x0 = src.get(args.x0, "x0")?.unwrap_or(2.0);
    let y0 = src.get(args.y0, "y0")?.unwrap_or(1.0);
    let dt = src.get(args.dt, "dt")?.unwrap_or(0.001);
    let steps = src.get(args.steps, "steps")?.unwrap_or(100_000);
    let stride = src.get(args.stride, "stride")?.unwrap_or(100);
    let out: Option<PathBuf> = src.get(args.out, "out")?;
    src.finish()?;

    let p = LvParams::new(a, c, alpha, gamma).map_err(config_err_display)?;
    let traj = dynamics::lv_trajectory((x0, y0), &p, dt, steps, stride).map_err(config_err_display)?;
    emit(out.as_deref(), &io::lv_csv(&traj))?;
    let v0 = dynamics::lv_invariant((x0, y0), &p);
    let drift = traj
        .iter()
        .map(|q| (dynamics::lv_invariant((q.x, q.y), &p) - v0).abs())
        .fold(0.0, f64::max);
    eprintln!(
        "lv: {steps} RK4 steps of {dt}, {} points kept, max invariant drift {drift:.3e}",
        traj.len()
    );
    Ok(())
}

pub fn city(args: CityArgs) -> Result<(), CliError> {
    let mut src = Source::load(args.config.as_deref())?;
    let seed = src.get(args.seed, "seed")?.unwrap_or(1);
    let mut p = CityModelParams::standard(seed);
    if let Some(n) = src.get(args.cities, "cities")? {
        p.n_cities = n;
    }
    if let Some(n) = src.get(args.steps, "steps")? {
        p.n_steps = n;
    }
    let rate = |r: RateSpec, mean: Option<f64>, sd: Option<f64>| RateSpec {
        mean: mean.unwrap_or(r.mean),
        sd: sd.unwrap_or(r.sd),
    };
    let lambda = (src.get(args.lambda, "lambda")?, src.get(args.lambda_sd, "lambda_sd")?);
    let a = (src.get(args.a, "a")?, src.get(args.a_sd, "a_sd")?);
    let c = (src.get(args.c, "c")?, src.get(args.c_sd, "c_sd")?);
    p.lambda = rate(p.lambda, lambda.0, lambda.1);
    p.a = rate(p.a, a.0, a.1);
    p.c = rate(p.c, c.0, c.1);
    if let Some(s) = src.get(args.stride, "stride")? {
        p.sample_stride = s;
    }
    let bins = src.get(args.bins, "bins")?.unwrap_or(100);
    let out_dir: PathBuf = src.get(args.out_dir, "out_dir")?.unwrap_or_else(|| PathBuf::from("."));
    src.finish()?;
    p.validate().map_err(config_err_display)?;

    let run = dynamics::run_city_model(&p).map_err(runtime)?;
    let hist = Histogram::from_values(&run.stationary_sample, Binning::Count(bins), None).map_err(runtime)?;
    let mut fits = serde_json::Map::new();
    let mut chi = Vec::new();
    for f in [Family::Glv, Family::LogNormal] {
        match distfit::fit(&hist, &DistParams::initial_guess(f, &hist)) {
            Ok(r) => {
                chi.push(format!("{f} {:.4}", r.reduced_chi2));
                fits.insert(f.to_string(), serde_json::to_value(&r).expect("serializable"));
            }
            Err(e) => {
                chi.push(format!("{f} failed ({e})"));
                fits.insert(f.to_string(), Value::Null);
            }
        }
    }

    ensure_dir(&out_dir)?;
    write(&out_dir.join("city_trace.csv"), &io::city_trace_csv(&run.trace))?;
    write(&out_dir.join("city_final.csv"), &io::column_csv("population", &run.final_populations))?;
    write(&out_dir.join("city_hist.csv"), &io::histogram_csv(&hist))?;
    write(&out_dir.join("city_fit.json"), &to_json(&Value::Object(fits)))?;
    let gini = metrics::gini(&run.final_populations).map_err(runtime)?;
    eprintln!(
        "city: {} cities x {} steps, final gini {gini:.4}, mean drift {:.2e}, reduced chi2: {}",
        p.n_cities,
        p.n_steps,
        run.mean_drift(0.5),
        chi.join(", ")
    );
    Ok(())
}
