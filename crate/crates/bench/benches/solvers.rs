use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use lottery_core::avg::{solve_sys_avg, AvgOptions};
use lottery_core::catalog::{example2_instance, example2_optimal_profile, random_instance, RandomSpec};
use lottery_core::kernel::{isotonic_concave_max, IsotonicProblem};
use lottery_core::permsearch::{dual_minimize, solve_sys_exhaustive, DualOptions, SearchOptions};
use lottery_core::solver_fix::{solve_sys_fix, FixMethod, SolveOptions};
use lottery_core::{ValueFunction, WeightingFunction};

fn pava(c: &mut Criterion) {
    let k = 64;
    let prob = IsotonicProblem {
        h: WeightingFunction::Kt { gamma: 0.61 }.decision_weights(k),
        value: ValueFunction::Power { beta: 0.88 },
        prices: (0..k).map(|l| 0.01 + 0.02 * ((l * 7) % 11) as f64).collect(),
        cap: Some(10.0),
    };
    c.bench_function("pava_k64", |b| b.iter(|| isotonic_concave_max(black_box(&prob)).unwrap()));
}

fn fixed_permutation(c: &mut Criterion) {
    let inst = example2_instance();
    let pi = example2_optimal_profile();
    let mut group = c.benchmark_group("sys_fix_example2");
    for (name, method) in [
        ("interior_point", FixMethod::InteriorPoint),
        ("dual_ascent", FixMethod::DualAscent),
        ("tatonnement", FixMethod::Tatonnement),
    ] {
        let opts = SolveOptions::with_method(method);
        group.bench_function(name, |b| b.iter(|| solve_sys_fix(black_box(&inst), &pi, &opts).unwrap()));
    }
    group.finish();
}

fn system_search(c: &mut Criterion) {
    let inst = random_instance(7, &RandomSpec { max_players: 3, max_outcomes: 3, max_links: 2 });
    let opts = SearchOptions { workers: Some(1), ..Default::default() };
    c.bench_function("sys_exhaustive_random", |b| b.iter(|| solve_sys_exhaustive(black_box(&inst), &opts).unwrap()));
    c.bench_function("sys_avg_random", |b| b.iter(|| solve_sys_avg(black_box(&inst), &AvgOptions::default()).unwrap()));
}

fn dual(c: &mut Criterion) {
    let inst = example2_instance();
    let opts = DualOptions { workers: Some(1), ..Default::default() };
    let mut group = c.benchmark_group("dual");
    group.sample_size(10);
    group.bench_function("dual_minimize_example2", |b| b.iter(|| dual_minimize(black_box(&inst), &opts).unwrap()));
    group.finish();
}

criterion_group!(benches, pava, fixed_permutation, system_search, dual);
criterion_main!(benches);
