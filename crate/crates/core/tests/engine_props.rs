mod common;

use glv_econ::engine::{self, ModelPreset};
use glv_econ::metrics;
use glv_econ::sweep::{self, SweepSpec};
use glv_econ::params::{ConsumptionSpec, EconParams, PopulationState, WageSpec};
use proptest::prelude::*;

fn small(preset: ModelPreset, seed: u64, n: usize, t: usize) -> EconParams {
    let mut p = preset.params(seed);
    p.n_agents = n;
    p.n_iterations = t;
    p
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn preset_strategy() -> impl Strategy<Value = ModelPreset> {
    prop::sample::select(ModelPreset::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_matches_hand_update(
        preset in preset_strategy(),
        seed in 0u64..1000,
        n in 2usize..300,
        rho in 0.0f64..0.9,
        jitter in prop::collection::vec(0.5f64..1.5, 300),
    ) {
        let mut p = small(preset, seed, n, 1);
        p.profit_ratio = rho;
        let mut state = engine::initialize(&p).unwrap();
        for (w, j) in state.wealth.iter_mut().zip(&jitter) {
            *w *= j;
        }
        let (next, totals) = engine::step(&state, &p).unwrap();

        // independent recomputation for the deterministic modes
        if let Some(omega) = match p.consumption {
            ConsumptionSpec::FixedUniform { rate } => Some(vec![rate; n]),
            ConsumptionSpec::FixedPerAgent { .. } => state.consumption_propensity.clone(),
            ConsumptionSpec::StochasticPerStep { .. } => None,
        } {
            let total: f64 = state.wealth.iter().sum();
            let wages: f64 = state.wages.iter().sum();
            let pool = wages * rho / (1.0 - rho);
            for (i, (&w, &o)) in state.wealth.iter().zip(&omega).enumerate() {
                let expect = w + state.wages[i] + pool * w / total - o * w;
                prop_assert!(rel(next.wealth[i], expect) < 1e-12, "agent {i}");
            }
        }

        if totals.floor_events == 0 {
            let flow = totals.wealth_before + totals.income - totals.consumption;
            prop_assert!(rel(totals.wealth_after, flow) < 1e-9);
            let sum: f64 = next.wealth.iter().sum();
            prop_assert!(rel(totals.wealth_after, sum) < 1e-9);
        }
        let wages: f64 = state.wages.iter().sum();
        let paid = totals.income - wages;
        prop_assert!((paid - totals.profit_pool).abs() <= 1e-9 * totals.income);
    }
}

#[test]
fn run_series_satisfies_accounting_every_iteration() {
    for preset in ModelPreset::ALL {
        let r = engine::run(&small(preset, 3, 500, 400)).unwrap();
        let s = &r.aggregate_series;
        for k in 0..s.len() - 1 {
            let flow = s[k].total_wealth + s[k].total_income - s[k].total_consumption;
            assert!(rel(s[k + 1].total_wealth, flow) < 1e-9, "{preset} iteration {k}");
        }
        let last = s.last().unwrap();
        let flow = last.total_wealth + last.total_income - last.total_consumption;
        assert!(rel(r.final_total_wealth, flow) < 1e-9);
    }
}

#[test]
fn uniform_consumption_passes_wage_shape_through() {
    // With one Ω for everybody the fixed point is w_i = e_i/(Ω − r), so wealth
    // and income are exact multiples of the wage.
    let p = small(ModelPreset::M1B, 8, 400, 3000);
    let r = engine::run(&p).unwrap();
    let omega = p.consumption.mean();
    let wages: f64 = r.wages.iter().sum();
    let profit_rate = p.profit_pool(wages) / r.final_total_wealth;
    for (w, e) in r.final_wealth.iter().zip(&r.wages) {
        assert!(rel(*w, e / (omega - profit_rate)) < 1e-9);
    }
    let g_e = metrics::gini(&r.wages).unwrap();
    assert!((metrics::gini(&r.final_wealth).unwrap() - g_e).abs() < 1e-9);
    assert!((metrics::gini(&r.final_income).unwrap() - g_e).abs() < 1e-9);
}

#[test]
fn thrifty_agents_end_up_richer() {
    let p = small(ModelPreset::M1C, 4, 400, 3000);
    let r = engine::run(&p).unwrap();
    let omega = r.consumption_propensity.as_ref().unwrap();
    let wages: f64 = r.wages.iter().sum();
    let profit_rate = p.profit_pool(wages) / r.final_total_wealth;
    let mut order: Vec<usize> = (0..omega.len()).collect();
    order.sort_by(|&a, &b| omega[a].total_cmp(&omega[b]));
    for pair in order.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if omega[a] < omega[b] {
            assert!(r.final_wealth[a] > r.final_wealth[b]);
        }
    }
    for (i, w) in r.final_wealth.iter().enumerate() {
        assert!(rel(*w, 100.0 / (omega[i] - profit_rate)) < 1e-9, "agent {i}");
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let p = small(ModelPreset::M1A, 17, 5000, 200);
    let on = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| engine::run(&p).unwrap())
    };
    let base = on(1);
    for threads in [2, 7] {
        let other = on(threads);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&base.final_wealth), bits(&other.final_wealth));
        assert_eq!(base.aggregate_series, other.aggregate_series);
    }
}

#[test]
fn stationary_state_forgets_initial_wealth() {
    let p = small(ModelPreset::M1D, 2, 300, 4000);
    let reference = engine::run(&p).unwrap();
    let init = engine::initialize(&p).unwrap();
    let mean = init.mean_wealth();
    // very unequal start: a tenth of the agents hold almost everything
    let skewed: Vec<f64> = (0..p.n_agents)
        .map(|i| if i % 10 == 0 { 9.0 * mean } else { mean / 9.0 })
        .collect();
    let mut state = PopulationState {
        wealth: skewed,
        ..init
    };
    for _ in 0..p.n_iterations {
        state = engine::step(&state, &p).unwrap().0;
    }
    for (a, b) in state.wealth.iter().zip(&reference.final_wealth) {
        assert!(rel(*a, *b) < 1e-6);
    }
}

#[test]
fn tail_exponent_ignores_scale_of_wages_and_consumption() {
    let base = small(ModelPreset::M1C, 6, 2000, 3000);
    let alpha = |p: &EconParams| {
        let r = engine::run(p).unwrap();
        (
            metrics::hill_alpha(&r.final_wealth, 80).unwrap(),
            metrics::gini(&r.final_wealth).unwrap(),
        )
    };
    let (a0, g0) = alpha(&base);

    let mut wages = base.clone();
    wages.wage = WageSpec::Constant { value: 250.0 };
    let (a1, g1) = alpha(&wages);
    assert!(rel(a1, a0) < 1e-9 && rel(g1, g0) < 1e-9, "{a0} {a1}");

    // doubling mean Ω with the same relative spread doubles every rate
    let mut omega = base.clone();
    omega.consumption = ConsumptionSpec::FixedPerAgent { mean: 0.4, sd: 0.04 };
    let (a2, g2) = alpha(&omega);
    assert!(rel(a2, a0) < 1e-6 && rel(g2, g0) < 1e-6, "{a0} {a2}");
}

#[test]
fn hill_recovers_pareto_exponent() {
    // standard error of the estimate is (α − 1)/√k
    let k = 2000;
    for (alpha, seed) in [(1.5, 1), (2.2, 2), (3.0, 3), (4.5, 4)] {
        let x = common::sample_pareto_density(k * 10, alpha, 1.0, seed);
        let est = metrics::hill_alpha(&x, k).unwrap();
        let se = (alpha - 1.0) / (k as f64).sqrt();
        assert!((est - alpha).abs() < 3.0 * se, "α {alpha}: {est}");
    }
}

#[test]
fn large_pareto_sample_gives_alpha_two() {
    let x = common::sample_pareto_density(100_000, 2.0, 1.0, 12);
    let est = metrics::hill_alpha(&x, 10_000).unwrap();
    assert!((est - 2.0).abs() < 0.05, "{est}");
}

#[test]
fn consumption_balances_income_at_stationarity() {
    for preset in ModelPreset::ALL {
        let r = engine::run(&small(preset, 21, 2000, 2000)).unwrap();
        let late = &r.aggregate_series[1000..];
        let c: f64 = late.iter().map(|a| a.total_consumption).sum();
        let y: f64 = late.iter().map(|a| a.total_income).sum();
        assert!((0.99..=1.01).contains(&(c / y)), "{preset}: C/Y = {}", c / y);
    }
}

#[test]
fn stationarity_detected_for_fixed_and_stochastic_models() {
    let fixed = engine::run(&small(ModelPreset::M1C, 1, 1000, 3000)).unwrap();
    let rep = engine::detect_stationarity(&fixed);
    assert!(rep.converged, "{rep:?}");
    assert!(rep.max_relative_change.unwrap() < 1e-9);

    let noisy = engine::run(&small(ModelPreset::M1A, 1, 10_000, 2000)).unwrap();
    let rep = engine::detect_stationarity(&noisy);
    assert!(rep.ks_statistic < 0.02, "{rep:?}");
    assert!(rep.max_relative_change.is_none());
}

#[test]
fn profit_ratio_extremes() {
    let spec = SweepSpec {
        rho_values: vec![0.0, 1.0],
        v_values: Vec::new(),
        replicates: 1,
        n_agents: 1000,
        n_iterations: 3000,
        n_tail: None,
        ..SweepSpec::standard(3)
    };
    let t = sweep::run_sweep(&spec).unwrap();
    let (low, high) = (&t.rows[0], &t.rows[1]);
    assert_eq!(low.gini_income, 0.0);
    assert_eq!(low.poverty_wealth, 0.0);
    assert_eq!(low.poverty_income, 0.0);
    assert!(high.gini_wealth >= 0.99, "{}", high.gini_wealth);
    assert!(high.top_share_wealth > 0.99, "{}", high.top_share_wealth);
}
