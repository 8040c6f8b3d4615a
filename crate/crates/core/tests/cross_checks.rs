use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lottery_core::avg::{solve_sys_avg, v_avg, AvgMethod, AvgOptions};
use lottery_core::catalog::{example2_instance, example2_optimal_profile, random_instance, RandomSpec};
use lottery_core::kernel::{isotonic_concave_max, IsotonicProblem, Status};
use lottery_core::model::{is_feasible_scheme, NetworkInstance};
use lottery_core::oracle::{grid_brute_force_isotonic, grid_brute_force_sys, grid_brute_force_vavg};
use lottery_core::permsearch::{dual_inner_max, dual_minimize, solve_sys_exhaustive, DualOptions, SearchOptions};
use lottery_core::solver_fix::{check_equilibrium, solve_sys_fix, FixMethod, SolveOptions};
use lottery_core::{Agent, ValueFunction, WeightingFunction};

#[test]
fn grid_oracle_brackets_example2() {
    let inst = example2_instance();
    let (v, scheme) = grid_brute_force_sys(&inst, 0.01, None).unwrap();
    assert_abs_diff_eq!(v, 7.5621, epsilon = 0.02);
    let exact = solve_sys_fix(&inst, &example2_optimal_profile(), &SolveOptions::default()).unwrap().value;
    assert!(v <= exact + 1e-9, "{v} {scheme:?}");
    assert!(is_feasible_scheme(&inst, &scheme).unwrap());
}

#[test]
fn kernel_dominates_isotonic_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let k = rng.gen_range(1..=4);
        let h: Vec<f64> = WeightingFunction::Kt { gamma: rng.gen_range(0.4..0.95) }.decision_weights(k);
        let value = ValueFunction::Power { beta: rng.gen_range(0.3..0.9) };
        let prices: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..0.6)).collect();
        let cap = 4.0;
        let sol = isotonic_concave_max(&IsotonicProblem { h: h.clone(), value, prices: prices.clone(), cap: Some(cap) }).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        let (grid, _) = grid_brute_force_isotonic(&h, &value, &prices, 0.005, cap).unwrap();
        assert!(sol.value >= grid - 1e-9, "kernel {} below oracle {}", sol.value, grid);
        assert!(sol.value - grid <= 0.005f64.powf(0.3) + 0.6 * 0.005, "gap {}", sol.value - grid);
    }
}

#[test]
fn uniform_weights_with_equal_prices_give_constant_vector() {
    let vf = ValueFunction::Power { beta: 0.5 };
    let sol = isotonic_concave_max(&IsotonicProblem { h: vec![1.0 / 3.0; 3], value: vf, prices: vec![0.2; 3], cap: None }).unwrap();
    // Scalar problem: max sqrt(x) - 0.6 x, optimum x = 1 / (4 * 0.36).
    for z in &sol.z {
        assert_abs_diff_eq!(*z, 1.0 / 1.44, epsilon = 1e-9);
    }
}

#[test]
fn averaged_value_matches_dynamic_programme() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..8 {
        let k = rng.gen_range(2..=6);
        let agent = Agent::new(ValueFunction::Power { beta: rng.gen_range(0.5..0.9) }, WeightingFunction::Kt { gamma: rng.gen_range(0.4..0.9) });
        let zbar: f64 = rng.gen_range(0.5..2.0);
        let step: f64 = 0.02;
        let zbar = (zbar / step).round() * step;
        let (exact, z) = v_avg(&agent, zbar, k).unwrap();
        let h = agent.decision_weights(k).unwrap();
        let grid = grid_brute_force_vavg(&h, &agent.value, zbar, step).unwrap();
        assert_abs_diff_eq!(z.iter().sum::<f64>() / k as f64, zbar, epsilon = 1e-9);
        assert!(exact >= grid - 1e-9);
        assert!(exact - grid <= 0.05, "v_avg {exact} vs grid {grid}");
    }
}

fn small_instances(seed: u64) -> Vec<NetworkInstance> {
    let spec = RandomSpec { max_players: 3, max_outcomes: 3, max_links: 2 };
    (0..12).map(|s| random_instance(seed + s, &spec)).collect()
}

#[test]
fn fix_routes_agree() {
    for inst in small_instances(300) {
        let pi: Vec<Vec<usize>> = (0..inst.num_players()).map(|i| (0..inst.k).map(|o| (o + i) % inst.k).collect()).collect();
        let ipm = solve_sys_fix(&inst, &pi, &SolveOptions::default()).unwrap();
        let dual = solve_sys_fix(&inst, &pi, &SolveOptions::with_method(FixMethod::DualAscent)).unwrap();
        assert!(ipm.converged && dual.converged, "{} {} {} {} {inst:?}", ipm.converged, ipm.kkt_residual, dual.converged, dual.kkt_residual);
        assert_abs_diff_eq!(ipm.value, dual.value, epsilon = 1e-6);
        assert!(check_equilibrium(&inst, &pi, &dual).unwrap().max <= 1e-6);
        assert!(is_feasible_scheme(&inst, &ipm.scheme).unwrap());
    }
}

#[test]
fn avg_routes_agree_and_bound_primal() {
    for inst in small_instances(400) {
        let da = solve_sys_avg(&inst, &AvgOptions::default()).unwrap();
        let ip = solve_sys_avg(&inst, &AvgOptions { method: AvgMethod::InteriorPoint, ..Default::default() }).unwrap();
        assert!((da.value - ip.value).abs() <= 1e-6, "{} {} {} {} {inst:?}", da.value, ip.value, da.kkt_residual, ip.kkt_residual);
        if let Ok(p) = solve_sys_exhaustive(&inst, &SearchOptions::default()) {
            assert!(p.report.value <= da.value + 1e-6);
        }
    }
}

#[test]
fn weak_duality_at_sampled_prices() {
    let inst = example2_instance();
    let primal = solve_sys_fix(&inst, &example2_optimal_profile(), &SolveOptions::default()).unwrap().value;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..200 {
        let lambda = vec![vec![rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)]];
        let eval = dual_inner_max(&inst, &lambda).unwrap();
        if let Some(v) = eval.value {
            assert!(v >= primal - 1e-9);
        }
    }
    let d = dual_minimize(&inst, &DualOptions::default()).unwrap();
    assert!(d.value >= primal);
}

#[test]
fn ordering_rule_under_zero_gap() {
    use lottery_core::permsearch::{duality_gap, GapOptions};
    let spec = RandomSpec { max_players: 2, max_outcomes: 2, max_links: 2 };
    let mut checked = 0;
    for seed in 500..540 {
        let inst = random_instance(seed, &spec);
        if !inst.agents.iter().all(|a| a.weighting() == Some(&WeightingFunction::Identity)) {
            continue;
        }
        let g = duality_gap(&inst, &GapOptions::default()).unwrap();
        assert!(g.gap.abs() <= 1e-3, "seed {seed}: gap {}", g.gap);
        assert_eq!(g.ordering_rule_holds, Some(true), "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 3);
}
