//! The two worked instances: ten CPT players sharing one link, and the
//! two-player instance with a nonzero duality gap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cpt::{Agent, ValueFunction, WeightingFunction};
use crate::error::Result;
use crate::kernel;
use crate::model::{LotteryScheme, NetworkInstance, Permutation};
use crate::permsearch::{self, case_table_example2, cyclic_profile, CaseTable, GapOptions};

pub const EXAMPLE1_PLAYERS: usize = 10;
pub const EXAMPLE1_CAPACITY: f64 = 10.0;

/// Ten identical Tversky–Kahneman players (`beta = 0.88`, `gamma = 0.61`)
/// on one link of capacity 10, with `k = 10` outcomes.
pub fn example1_instance() -> NetworkInstance {
    let agent = example1_agent();
    NetworkInstance::new(
        vec![EXAMPLE1_CAPACITY],
        vec![vec![0]; EXAMPLE1_PLAYERS],
        EXAMPLE1_PLAYERS,
        vec![agent; EXAMPLE1_PLAYERS],
    )
    .expect("example 1 is valid")
}

pub fn example1_agent() -> Agent {
    Agent::new(ValueFunction::Power { beta: 0.88 }, WeightingFunction::Kt { gamma: 0.61 })
}

/// Aggregate CPT value of the winner lottery: one uniformly chosen player
/// gets `x`, the others split `c - x`.
pub fn example1_curve(x: f64) -> f64 {
    let n = EXAMPLE1_PLAYERS as f64;
    let agent = example1_agent();
    let w = agent.weighting().expect("weighting function").eval(1.0 / n);
    let v = agent.value;
    n * (w * v.value(x) + (1.0 - w) * v.value((EXAMPLE1_CAPACITY - x) / (n - 1.0)))
}

/// The winner lottery as a scheme on the cyclic profile.
pub fn example1_scheme(x: f64) -> LotteryScheme {
    let n = EXAMPLE1_PLAYERS;
    let rest = (EXAMPLE1_CAPACITY - x) / (n as f64 - 1.0);
    let z = (0..n).map(|_| (0..n).map(|l| if l == 0 { x } else { rest }).collect()).collect();
    LotteryScheme { z, pi: cyclic_profile(n, n) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Repro {
    pub x_star: f64,
    pub value: f64,
    /// `n v(c / n)`: the best deterministic allocation.
    pub deterministic: f64,
    /// `(x, U(x))` samples on `[c / n, c]`.
    pub curve: Vec<(f64, f64)>,
}

pub fn example1_repro(samples: usize) -> Result<Example1Repro> {
    let lo = EXAMPLE1_CAPACITY / EXAMPLE1_PLAYERS as f64;
    let (x_star, value) = kernel::maximize_1d_concave(example1_curve, lo, EXAMPLE1_CAPACITY, 1e-10)?;
    let n = EXAMPLE1_PLAYERS as f64;
    let deterministic = n * example1_agent().value.value(EXAMPLE1_CAPACITY / n);
    let samples = samples.max(2);
    let curve = (0..samples)
        .map(|s| {
            let x = lo + (EXAMPLE1_CAPACITY - lo) * s as f64 / (samples - 1) as f64;
            (x, example1_curve(x))
        })
        .collect();
    Ok(Example1Repro { x_star, value, deterministic, curve })
}

/// Two players on a link of capacity 2.9 with `k = 2`, defined by their
/// decision weights.
pub fn example2_instance() -> NetworkInstance {
    NetworkInstance::new(
        vec![2.9],
        vec![vec![0], vec![0]],
        2,
        vec![
            Agent::with_explicit_weights(ValueFunction::LogAffine { a: 1.0, b: 0.0, s: 0.05, c: 3.0 }, vec![1.0 / 3.0, 2.0 / 3.0]),
            Agent::with_explicit_weights(ValueFunction::LogAffine { a: 0.4, b: 0.6, s: 0.05, c: 3.0 }, vec![5.0 / 6.0, 1.0 / 6.0]),
        ],
    )
    .expect("example 2 is valid")
}

/// The anti-aligned profile: player 2's best outcome is player 1's worst.
pub fn example2_optimal_profile() -> Vec<Permutation> {
    vec![vec![0, 1], vec![1, 0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example2Repro {
    #[serde(rename = "W_ps")]
    pub w_ps: f64,
    #[serde(rename = "W_ds")]
    pub w_ds: f64,
    pub gap: f64,
    pub pi_star: Vec<Permutation>,
    pub lambda_star: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub case_table: CaseTable,
}

pub fn example2_repro(opts: &GapOptions) -> Result<Example2Repro> {
    let inst = example2_instance();
    let primal = permsearch::solve_sys_exhaustive(&inst, &opts.search)?;
    let dual = permsearch::dual_minimize(&inst, &opts.dual)?;
    Ok(Example2Repro {
        w_ps: primal.report.value,
        w_ds: dual.value,
        gap: dual.value - primal.report.value,
        pi_star: primal.pi,
        lambda_star: dual.lambda,
        z: primal.report.scheme.z,
        case_table: case_table_example2(),
    })
}

/// Size limits for [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub max_players: usize,
    pub max_outcomes: usize,
    pub max_links: usize,
}

/// Seeded random instance. Roughly one in four draws gives every player the
/// identity weighting; the rest mix Tversky–Kahneman, convex power and
/// identity weightings over power and log-affine values.
pub fn random_instance(seed: u64, spec: &RandomSpec) -> NetworkInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=spec.max_players);
    let k = rng.gen_range(1..=spec.max_outcomes);
    let m = rng.gen_range(1..=spec.max_links);
    let expected_utility = rng.gen_bool(0.25);
    let capacities = (0..m).map(|_| rng.gen_range(1.0..4.0)).collect();
    let routes = (0..n)
        .map(|_| loop {
            let route: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.5)).collect();
            if !route.is_empty() {
                break route;
            }
        })
        .collect();
    let agents = (0..n)
        .map(|_| {
            let value = if rng.gen_bool(0.5) {
                ValueFunction::Power { beta: rng.gen_range(0.3..0.9) }
            } else {
                ValueFunction::LogAffine {
                    a: rng.gen_range(0.5..2.0),
                    b: rng.gen_range(0.0..0.3),
                    s: rng.gen_range(0.05..0.5),
                    c: 0.0,
                }
            };
            let weighting = if expected_utility {
                WeightingFunction::Identity
            } else {
                match rng.gen_range(0..3) {
                    0 => WeightingFunction::Identity,
                    1 => WeightingFunction::Kt { gamma: rng.gen_range(0.5..0.95) },
                    _ => WeightingFunction::PowerConvex { a: rng.gen_range(1.0..2.0) },
                }
            };
            Agent::new(value, weighting)
        })
        .collect();
    NetworkInstance::new(capacities, routes, k, agents).expect("generated instance is valid")
}
