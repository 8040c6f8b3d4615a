use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lottery_core::avg::{check_tail_structure, solve_sys_avg, solve_user_avg, v_avg, AvgOptions};
use lottery_core::catalog::{
    example1_instance, example1_repro, example2_instance, example2_optimal_profile, random_instance, RandomSpec,
};
use lottery_core::cpt::{chord_slope, cpt_value, lstar, pstar, ConcaveEnvelope};
use lottery_core::model::{identity_permutation, Permutation};
use lottery_core::oracle::{grid_brute_force_sys, grid_error_bound, partition_by_enumeration};
use lottery_core::permsearch::{
    case_table_example2, dual_minimize, solve_sys_exhaustive, solve_sys_localsearch, DualOptions, LocalSearchOptions,
    SearchOptions,
};
use lottery_core::reduction::decide_partition;
use lottery_core::solver_fix::{check_equilibrium, solve_sys_fix, FixMethod, SolveOptions};
use lottery_core::{Agent, NetworkInstance, ValueFunction, WeightingFunction};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn run(id: &str, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Result<Outcome, String>) -> bool {
    let start = Instant::now();
    let outcome = f().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = outcome.pass && in_time;
    let budget = limit.map_or(String::new(), |l| format!(" (limit {:.0?})", l));
    println!(
        "{} [{id}] {name}: {}; {:.3?}{budget}",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed
    );
    pass
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn random_profile(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Permutation> {
    use rand::seq::SliceRandom;
    (0..n)
        .map(|_| {
            let mut p = identity_permutation(k);
            p.shuffle(rng);
            p
        })
        .collect()
}

fn is_expected_utility(inst: &NetworkInstance) -> bool {
    inst.agents.iter().all(|a| a.weighting() == Some(&WeightingFunction::Identity))
}

fn example1() -> Result<Outcome, String> {
    let r = example1_repro(200).map_err(|e| e.to_string())?;
    let pass = r.deterministic == 10.0 && close(r.value, 14.1690, 5e-3) && close(r.x_star, 9.7871, 5e-3);
    Ok(Outcome::new(pass, format!("deterministic={} max={:.6} at x={:.6}", r.deterministic, r.value, r.x_star)))
}

fn example2_primal() -> Result<Outcome, String> {
    let inst = example2_instance();
    let pi = example2_optimal_profile();
    let r = solve_sys_fix(&inst, &pi, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let res = check_equilibrium(&inst, &pi, &r).map_err(|e| e.to_string())?;
    let z_ok = r.scheme.z.iter().all(|z| close(z[0], 1.95, 1e-3) && close(z[1], 0.95, 1e-3));
    let best = solve_sys_exhaustive(&inst, &SearchOptions::default()).map_err(|e| e.to_string())?;
    let pass = close(r.value, 7.5621, 1e-3) && z_ok && res.max <= 1e-6 && best.pi == pi;
    Ok(Outcome::new(
        pass,
        format!("W={:.6} z={:?} kkt={:.2e} exhaustive pi={:?}", r.value, r.scheme.z, res.max, best.pi),
    ))
}

fn example2_dual() -> Result<Outcome, String> {
    let inst = example2_instance();
    let d = dual_minimize(&inst, &DualOptions::default()).map_err(|e| e.to_string())?;
    let table = case_table_example2().values();
    let expected = [10.2284, 10.1814, 9.5006, 8.2757];
    let table_ok = table.iter().zip(expected).all(|(a, b)| close(*a, b, 1e-3));
    let primal = solve_sys_exhaustive(&inst, &SearchOptions::default()).map_err(|e| e.to_string())?;
    let gap = d.value - primal.report.value;
    let pass = close(d.value, 8.2757, 1e-3) && table_ok && close(gap, 0.7136, 2e-3);
    Ok(Outcome::new(pass, format!("W_ds={:.6} cases={:.4?} gap={:.6}", d.value, table, gap)))
}

fn figure1() -> Result<Outcome, String> {
    let points = [
        (0.01, 0.0553),
        (0.025, 0.0915),
        (0.05, 0.1316),
        (0.10, 0.1863),
        (0.15, 0.2269),
        (0.20, 0.2608),
        (0.25, 0.2907),
        (0.30, 0.3184),
        (0.35, 0.3446),
        (0.40, 0.3700),
        (0.45, 0.3952),
        (0.50, 0.4206),
        (0.55, 0.4467),
        (0.60, 0.4739),
        (0.65, 0.5027),
        (0.70, 0.5338),
        (0.75, 0.5683),
        (0.80, 0.6074),
        (0.85, 0.6537),
        (0.90, 0.7117),
        (0.95, 0.7932),
        (0.98, 0.8710),
    ];
    let wf = WeightingFunction::Kt { gamma: 0.61 };
    let worst = points.iter().map(|&(p, w)| (wf.eval(p) - w).abs()).fold(0.0, f64::max);
    Ok(Outcome::new(points.len() == 22 && worst <= 1e-3, format!("22 points, max deviation {worst:.2e}")))
}

fn equilibrium() -> Result<Outcome, String> {
    let spec = RandomSpec { max_players: 3, max_outcomes: 3, max_links: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut agree, mut failures) = (0.0f64, 0, Vec::new());
    for seed in 0..20 {
        let inst = random_instance(1000 + seed, &spec);
        let pi = random_profile(&mut rng, inst.num_players(), inst.k);
        let r = solve_sys_fix(&inst, &pi, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let res = check_equilibrium(&inst, &pi, &r).map_err(|e| e.to_string())?.max;
        worst = worst.max(res);
        if res > 1e-6 {
            failures.push(seed);
        }
        if let Ok(t) = solve_sys_fix(&inst, &pi, &SolveOptions::with_method(FixMethod::Tatonnement)) {
            if t.converged && close(t.value, r.value, 1e-4) {
                agree += 1;
            }
        }
    }
    let pass = failures.is_empty() && agree >= 18;
    Ok(Outcome::new(pass, format!("max residual {worst:.2e} (over 1e-6: {failures:?}); tatonnement agrees on {agree}/20")))
}

fn desk_instances() -> Vec<NetworkInstance> {
    let spec = RandomSpec { max_players: 2, max_outcomes: 2, max_links: 2 };
    (0..20).map(|seed| random_instance(2000 + seed, &spec)).collect()
}

fn oracle_equivalence() -> Result<Outcome, String> {
    let (mut worst_ratio, mut bad) = (0.0f64, Vec::new());
    for (idx, inst) in desk_instances().iter().enumerate() {
        let exact = solve_sys_exhaustive(inst, &SearchOptions::default()).map_err(|e| e.to_string())?.report.value;
        let (grid, _) = grid_brute_force_sys(inst, 0.01, None).map_err(|e| e.to_string())?;
        let bound = grid_error_bound(inst, 0.01);
        let diff = (exact - grid).abs();
        worst_ratio = worst_ratio.max(diff / bound);
        if diff > bound {
            bad.push(idx);
        }
    }
    Ok(Outcome::new(bad.is_empty(), format!("max |diff|/bound {worst_ratio:.3}; violations {bad:?}")))
}

fn duality_chain() -> Result<Outcome, String> {
    let (mut order_bad, mut avg_dual_worst, mut eut_worst, mut eut_count) = (Vec::new(), 0.0f64, 0.0f64, 0);
    let mut bad = Vec::new();
    for (idx, inst) in desk_instances().iter().enumerate() {
        let w_ps = solve_sys_exhaustive(inst, &SearchOptions::default()).map_err(|e| e.to_string())?.report.value;
        let w_pa = solve_sys_avg(inst, &AvgOptions::default()).map_err(|e| e.to_string())?.value;
        let w_ds = dual_minimize(inst, &DualOptions::default()).map_err(|e| e.to_string())?.value;
        if w_ps > w_pa + 1e-6 {
            order_bad.push(idx);
        }
        let d = (w_pa - w_ds).abs();
        avg_dual_worst = avg_dual_worst.max(d);
        let mut ok = w_ps <= w_pa + 1e-6 && d <= 2e-3;
        if is_expected_utility(inst) {
            eut_count += 1;
            eut_worst = eut_worst.max(w_ds - w_ps);
            ok &= w_ds - w_ps <= 1e-3;
        }
        if !ok {
            bad.push(idx);
        }
    }
    Ok(Outcome::new(
        bad.is_empty(),
        format!(
            "W_ps>W_pa on {order_bad:?}; max |W_pa-W_ds| {avg_dual_worst:.2e}; {eut_count} identity instances, max W_ds-W_ps {eut_worst:.2e}; failing {bad:?}"
        ),
    ))
}

fn gadget() -> Result<Outcome, String> {
    let sets: [(&[u64], bool); 7] = [
        (&[1, 1], true),
        (&[1, 2, 3], true),
        (&[2, 2], true),
        (&[3, 5, 8], true),
        (&[1, 1, 1], false),
        (&[1, 2, 4], false),
        (&[2, 3, 4], false),
    ];
    let mut wrong = Vec::new();
    let mut slowest = Duration::ZERO;
    for (set, expected) in sets {
        let start = Instant::now();
        let d = decide_partition(set, 0.1, &SearchOptions::default()).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        slowest = slowest.max(elapsed);
        if d.partition_exists != expected || partition_by_enumeration(set) != expected || elapsed > Duration::from_secs(5) {
            wrong.push(set.to_vec());
        }
    }
    Ok(Outcome::new(wrong.is_empty(), format!("7 sets, slowest {slowest:.3?}; wrong {wrong:?}")))
}

fn tail_structure() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let k = 10;
    let mut bad = Vec::new();
    for idx in 0..50 {
        let gamma = rng.gen_range(0.4..0.99);
        let beta = rng.gen_range(0.5..0.95);
        let rho_bar = rng.gen_range(0.05..2.0);
        let wf = WeightingFunction::Kt { gamma };
        let agent = Agent::new(ValueFunction::Power { beta }, wf);
        let z = solve_user_avg(&agent, rho_bar, k).map_err(|e| e.to_string())?;
        let p = pstar(&wf, 1e-10).map_err(|e| e.to_string())?;
        let nonzero = z.iter().any(|&x| x > 0.0);
        if !nonzero || !check_tail_structure(&z, p, k, 1e-6).map_err(|e| e.to_string())? {
            bad.push((idx, gamma, beta, lstar(p, k).ok()));
        }
    }
    Ok(Outcome::new(bad.is_empty(), format!("50 agents; failing {bad:?}")))
}

fn envelope_properties() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let tol = 1e-8;
    let mut failures = Vec::new();
    for idx in 0..10 {
        let wf = WeightingFunction::Kt { gamma: rng.gen_range(0.4..0.95) };
        let agent = Agent::new(ValueFunction::Power { beta: rng.gen_range(0.5..0.95) }, wf);
        let k = rng.gen_range(2..=8);
        let grid: Vec<f64> = (1..=20).map(|t| 0.25 * t as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&x| v_avg(&agent, x, k).map(|v| v.0)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let monotone = values.windows(2).all(|w| w[1] > w[0]);
        let concave = (0..grid.len() - 2).step_by(1).all(|t| {
            let mid = v_avg(&agent, grid[t + 1], k).map(|v| v.0).unwrap_or(f64::NEG_INFINITY);
            mid >= 0.5 * (values[t] + values[t + 2]) - tol
        });
        let env = ConcaveEnvelope::new(wf, 1e-12).map_err(|e| e.to_string())?;
        let p = env.p_star();
        let probs: Vec<f64> = (0..=1000).map(|t| t as f64 / 1000.0).collect();
        let dominance = probs.iter().all(|&q| env.eval(q) >= wf.eval(q) - tol);
        let agreement = probs.iter().filter(|&&q| q <= p).all(|&q| (env.eval(q) - wf.eval(q)).abs() <= tol);
        let slope = (1.0 - wf.eval(p)) / (1.0 - p);
        let linear = probs.iter().filter(|&&q| q >= p).all(|&q| (env.eval(q) - (wf.eval(p) + slope * (q - p))).abs() <= tol);
        let tail: Vec<f64> = (0..=1000).map(|t| p + (0.999 - p) * t as f64 / 1000.0).collect();
        let g_monotone = tail.windows(2).all(|w| chord_slope(&wf, w[1]) >= chord_slope(&wf, w[0]) - tol);
        if !(monotone && concave && dominance && agreement && linear && g_monotone) {
            failures.push((idx, monotone, concave, dominance, agreement, linear, g_monotone));
        }
    }
    Ok(Outcome::new(failures.is_empty(), format!("10 agents x 20-point grids; failing {failures:?}")))
}

fn random_prospect(rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let len = rng.gen_range(1..=8);
    let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let head: f64 = probs[..len - 1].iter().sum();
    probs[len - 1] = 1.0 - head;
    probs.into_iter().map(|p| (p, rng.gen_range(0.0..10.0))).collect()
}

fn random_agent(rng: &mut ChaCha8Rng, weighting: Option<WeightingFunction>) -> Agent {
    let value = if rng.gen_bool(0.5) {
        ValueFunction::Power { beta: rng.gen_range(0.2..1.0) }
    } else {
        ValueFunction::LogAffine { a: rng.gen_range(0.1..2.0), b: rng.gen_range(0.0..1.0), s: rng.gen_range(0.01..1.0), c: 0.0 }
    };
    let weighting = weighting.unwrap_or_else(|| match rng.gen_range(0..3) {
        0 => WeightingFunction::Identity,
        1 => WeightingFunction::Kt { gamma: rng.gen_range(0.3..1.0) },
        _ => WeightingFunction::PowerConvex { a: rng.gen_range(1.0..3.0) },
    });
    Agent::new(value, weighting)
}

fn cpt_invariance() -> Result<Outcome, String> {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut perm_worst, mut split_worst, mut eut_worst) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let agent = random_agent(&mut rng, None);
        let prospect = random_prospect(&mut rng);
        let base = cpt_value(&agent, &prospect).map_err(|e| e.to_string())?;
        let mut shuffled = prospect.clone();
        shuffled.shuffle(&mut rng);
        perm_worst = perm_worst.max((cpt_value(&agent, &shuffled).map_err(|e| e.to_string())? - base).abs());
    }
    for _ in 0..1000 {
        let agent = random_agent(&mut rng, None);
        let prospect = random_prospect(&mut rng);
        let base = cpt_value(&agent, &prospect).map_err(|e| e.to_string())?;
        let at = rng.gen_range(0..prospect.len());
        let share = rng.gen_range(0.1..0.9);
        let (p, x) = prospect[at];
        let mut split = prospect.clone();
        split[at] = (p * share, x);
        split.push((p - p * share, x));
        split_worst = split_worst.max((cpt_value(&agent, &split).map_err(|e| e.to_string())? - base).abs());
    }
    for _ in 0..1000 {
        let agent = random_agent(&mut rng, Some(WeightingFunction::Identity));
        let prospect = random_prospect(&mut rng);
        let expected: f64 = prospect.iter().map(|&(p, x)| p * agent.value.value(x)).sum();
        eut_worst = eut_worst.max((cpt_value(&agent, &prospect).map_err(|e| e.to_string())? - expected).abs());
    }
    let pass = perm_worst <= 1e-12 && split_worst <= 1e-12 && eut_worst <= 1e-12;
    Ok(Outcome::new(pass, format!("max deviation: permutation {perm_worst:.1e}, split {split_worst:.1e}, expected utility {eut_worst:.1e}")))
}

fn example1_local_search() -> Result<Outcome, String> {
    let inst = example1_instance();
    let opts = LocalSearchOptions { restarts: 0, max_rounds: 1, ..Default::default() };
    let sol = solve_sys_localsearch(&inst, &opts).map_err(|e| e.to_string())?;
    Ok(Outcome::new(sol.report.value >= 14.1690 - 1e-2, format!("value {:.6} after {} evaluations", sol.report.value, sol.evaluations)))
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let results = [
        run("1", "example 1 winner lottery", Some(secs(1)), example1),
        run("2", "example 2 primal optimum", Some(secs(5)), example2_primal),
        run("3", "example 2 dual and gap", Some(secs(30)), example2_dual),
        run("4", "kt weighting plot points", None, figure1),
        run("5", "equilibrium residuals and tatonnement", None, equilibrium),
        run("6", "exhaustive vs grid oracle", None, oracle_equivalence),
        run("7", "primal <= average = dual chain", None, duality_chain),
        run("8", "partition gadget decisions", None, gadget),
        run("9", "equal-tail structure", None, tail_structure),
        run("10", "averaged value and envelope properties", None, envelope_properties),
        run("11", "cpt invariances", None, cpt_invariance),
        run("12", "example 1 local-search lower bound", None, example1_local_search),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
