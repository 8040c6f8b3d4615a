//! Search over permutation profiles, the min–max dual, and the duality gap.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, IsotonicProblem, NelderMeadOptions, Status};
use crate::model::{identity_permutation, invert, LotteryScheme, NetworkInstance, Permutation};
use crate::solver_fix::{solve_sys_fix, SolveOptions, SolveReport};

/// Relative margin a candidate must beat the incumbent by to replace it.
const IMPROVE_TOL: f64 = 1e-9;

fn beats(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + IMPROVE_TOL * (1.0 + incumbent.abs())
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// All permutations of `0..k` in lexicographic order.
pub fn all_permutations(k: usize) -> Vec<Permutation> {
    let mut out = Vec::new();
    let mut p = identity_permutation(k);
    loop {
        out.push(p.clone());
        let Some(i) = (1..k).rev().find(|&i| p[i - 1] < p[i]) else { break };
        let j = (i..k).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
    out
}

/// Number of profiles the exhaustive search evaluates: `(k!)^(n-1)`.
pub fn profile_count(n: usize, k: usize) -> u128 {
    let fact: u128 = (1..=k as u128).product();
    let mut total: u128 = 1;
    for _ in 1..n {
        total = total.saturating_mul(fact);
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub budget: u128,
    pub fix: SolveOptions,
    pub workers: Option<usize>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { budget: 100_000, fix: SolveOptions::default(), workers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysSolution {
    pub pi: Vec<Permutation>,
    pub report: SolveReport,
    pub evaluations: usize,
}

fn profile_at(perms: &[Permutation], n: usize, k: usize, mut index: u128) -> Vec<Permutation> {
    let base = perms.len() as u128;
    let mut pi = vec![identity_permutation(k); n];
    for i in (1..n).rev() {
        pi[i] = perms[(index % base) as usize].clone();
        index /= base;
    }
    pi
}

/// Best profile over all `(k!)^(n-1)` profiles with player 0's permutation
/// fixed to the identity; ties go to the lexicographically smallest profile.
pub fn solve_sys_exhaustive(inst: &NetworkInstance, opts: &SearchOptions) -> Result<SysSolution> {
    let (n, k) = (inst.num_players(), inst.k);
    let required = profile_count(n, k);
    if required > opts.budget {
        return Err(Error::BudgetExceeded { required, budget: opts.budget });
    }
    let perms = all_permutations(k);
    let fix = opts.fix;
    let values: Vec<Result<f64>> = with_workers(opts.workers, || {
        (0..required as u64)
            .into_par_iter()
            .map(|idx| solve_sys_fix(inst, &profile_at(&perms, n, k, idx as u128), &fix).map(|r| r.value))
            .collect()
    })?;
    let mut best: Option<(u128, f64)> = None;
    for (idx, v) in values.into_iter().enumerate() {
        let v = v?;
        match best {
            Some((_, b)) if !beats(v, b) => {}
            _ => best = Some((idx as u128, v)),
        }
    }
    let (idx, _) = best.expect("at least one profile");
    let pi = profile_at(&perms, n, k, idx);
    let report = solve_sys_fix(inst, &pi, &opts.fix)?;
    Ok(SysSolution { pi, report, evaluations: required as usize })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_rounds: usize,
    pub fix: SolveOptions,
    pub workers: Option<usize>,
}

impl Default for LocalSearchOptions {
    fn default() -> Self {
        LocalSearchOptions { restarts: 2, seed: 0, max_rounds: 200, fix: SolveOptions::default(), workers: None }
    }
}

/// Profile where player `i` ranks outcome `o` at `(o + i) mod k`.
pub fn cyclic_profile(n: usize, k: usize) -> Vec<Permutation> {
    (0..n).map(|i| (0..k).map(|o| (o + i) % k).collect()).collect()
}

/// Best-improvement hill climbing over single-player transpositions, from
/// the cyclic profile and then from seeded random restarts.
pub fn solve_sys_localsearch(inst: &NetworkInstance, opts: &LocalSearchOptions) -> Result<SysSolution> {
    let (n, k) = (inst.num_players(), inst.k);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![cyclic_profile(n, k)];
    for _ in 0..opts.restarts {
        starts.push(
            (0..n)
                .map(|_| {
                    let mut p = identity_permutation(k);
                    p.shuffle(&mut rng);
                    p
                })
                .collect(),
        );
    }
    let moves: Vec<(usize, usize, usize)> =
        (0..n).flat_map(|i| (0..k).flat_map(move |a| (a + 1..k).map(move |b| (i, a, b)))).collect();
    let fix = opts.fix;
    let mut evaluations = 0;
    let mut best: Option<(Vec<Permutation>, f64)> = None;
    for start in starts {
        let mut current = start;
        let mut value = solve_sys_fix(inst, &current, &fix)?.value;
        evaluations += 1;
        for _ in 0..opts.max_rounds {
            let cur = &current;
            let values: Vec<Result<f64>> = with_workers(opts.workers, || {
                moves
                    .par_iter()
                    .map(|&(i, a, b)| {
                        let mut pi = cur.clone();
                        pi[i].swap(a, b);
                        solve_sys_fix(inst, &pi, &fix).map(|r| r.value)
                    })
                    .collect()
            })?;
            evaluations += values.len();
            let mut step: Option<(usize, f64)> = None;
            for (idx, v) in values.into_iter().enumerate() {
                let v = v?;
                let incumbent = step.map_or(value, |(_, s)| s);
                if beats(v, incumbent) {
                    step = Some((idx, v));
                }
            }
            let Some((idx, v)) = step else { break };
            let (i, a, b) = moves[idx];
            current[i].swap(a, b);
            value = v;
        }
        match &best {
            Some((_, b)) if !beats(value, *b) => {}
            _ => best = Some((current, value)),
        }
    }
    let (pi, _) = best.expect("at least one start");
    let report = solve_sys_fix(inst, &pi, &opts.fix)?;
    Ok(SysSolution { pi, report, evaluations })
}

/// `Theta_d(lambda)`: the Lagrangian maximised jointly over permutations and allocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEvaluation {
    /// `None` when the inner maximum is unbounded.
    pub value: Option<f64>,
    pub scheme: Option<LotteryScheme>,
    pub lambda: Vec<Vec<f64>>,
    /// First player whose inner problem is unbounded.
    pub unbounded_player: Option<usize>,
}

impl DualEvaluation {
    pub fn is_unbounded(&self) -> bool {
        self.value.is_none()
    }

    fn objective(&self) -> f64 {
        self.value.unwrap_or(f64::INFINITY)
    }
}

/// Sum of link duals over each player's route, per outcome.
pub fn route_prices(inst: &NetworkInstance, lambda: &[Vec<f64>]) -> Vec<Vec<f64>> {
    inst.routes.iter().map(|route| (0..inst.k).map(|o| route.iter().map(|&j| lambda[j][o]).sum()).collect()).collect()
}

/// Each player ranks outcomes by ascending route price (ties by outcome
/// index), then solves its order-constrained problem at the sorted prices.
pub fn dual_inner_max(inst: &NetworkInstance, lambda: &[Vec<f64>]) -> Result<DualEvaluation> {
    let k = inst.k;
    if lambda.len() != inst.num_links() || lambda.iter().any(|r| r.len() != k) {
        return Err(Error::LengthMismatch { expected: inst.num_links(), got: lambda.len() });
    }
    if lambda.iter().flatten().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain("link duals must be finite and nonnegative".into()));
    }
    let h = inst.decision_weights()?;
    let rho_hat = route_prices(inst, lambda);
    let mut value: f64 = lambda.iter().zip(&inst.capacities).map(|(row, c)| c * row.iter().sum::<f64>()).sum();
    let mut z = Vec::with_capacity(inst.num_players());
    let mut pi = Vec::with_capacity(inst.num_players());
    for (i, rh) in rho_hat.iter().enumerate() {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| rh[a].total_cmp(&rh[b]));
        let prices = order.iter().map(|&o| rh[o]).collect();
        let sol = kernel::isotonic_concave_max(&IsotonicProblem { h: h[i].clone(), value: inst.agents[i].value, prices, cap: None })?;
        if sol.status == Status::Unbounded {
            return Ok(DualEvaluation { value: None, scheme: None, lambda: lambda.to_vec(), unbounded_player: Some(i) });
        }
        value += sol.value;
        z.push(sol.z);
        pi.push(invert(&order));
    }
    Ok(DualEvaluation { value: Some(value), scheme: Some(LotteryScheme { z, pi }), lambda: lambda.to_vec(), unbounded_player: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualOptions {
    pub max_dim: usize,
    /// Total number of coarse grid points.
    pub grid_points: usize,
    /// Number of best grid points refined by Nelder–Mead.
    pub starts: usize,
    pub nelder_mead: NelderMeadOptions,
    pub workers: Option<usize>,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions { max_dim: 6, grid_points: 20_000, starts: 4, nelder_mead: NelderMeadOptions::default(), workers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualMinimum {
    pub value: f64,
    pub lambda: Vec<Vec<f64>>,
    pub evaluations: usize,
    /// Per-link upper bound of the searched box.
    pub search_box: Vec<f64>,
}

/// Upper bounds `lambda_j(o) <= (Theta_d(L) - sum_i v_i(0)) / c_j` valid for
/// every dual minimiser, where `L` is a uniform dual at which all inner
/// problems are bounded.
fn dual_search_box(inst: &NetworkInstance) -> Result<(Vec<f64>, usize)> {
    let h = inst.decision_weights()?;
    let mut level: f64 = 1.0;
    for (agent, h) in inst.agents.iter().zip(&h) {
        let slope = agent.value.asymptotic_slope();
        let mut hs = 0.0;
        for (l, x) in h.iter().enumerate() {
            hs += x;
            level = level.max(2.0 * slope * hs / (l + 1) as f64 + 1.0);
        }
    }
    let reference = vec![vec![level; inst.k]; inst.num_links()];
    let mut evals = 1;
    let mut upper = dual_inner_max(inst, &reference)?;
    while upper.is_unbounded() {
        let doubled: Vec<Vec<f64>> = upper.lambda.iter().map(|r| r.iter().map(|x| 2.0 * x).collect()).collect();
        upper = dual_inner_max(inst, &doubled)?;
        evals += 1;
    }
    let floor: f64 = inst.agents.iter().map(|a| a.value.value(0.0)).sum();
    let budget = (upper.objective() - floor).max(1e-12);
    Ok((inst.capacities.iter().map(|c| budget / c).collect(), evals))
}

/// `min_{lambda >= 0} Theta_d(lambda)` by a coarse grid over the bounding
/// box followed by Nelder–Mead refinement from the best grid points.
pub fn dual_minimize(inst: &NetworkInstance, opts: &DualOptions) -> Result<DualMinimum> {
    let (m, k) = (inst.num_links(), inst.k);
    let dim = m * k;
    if dim > opts.max_dim {
        return Err(Error::DimensionTooLarge { dim, max: opts.max_dim });
    }
    let (bounds, mut evaluations) = dual_search_box(inst)?;
    let theta = |x: &[f64]| -> f64 {
        let lambda: Vec<Vec<f64>> = (0..m).map(|j| (0..k).map(|o| x[j * k + o].max(0.0)).collect()).collect();
        dual_inner_max(inst, &lambda).map(|e| e.objective()).unwrap_or(f64::INFINITY)
    };
    let per_dim = ((opts.grid_points as f64).powf(1.0 / dim as f64).floor() as usize).max(3);
    let total = per_dim.pow(dim as u32);
    let point = |mut idx: usize| -> Vec<f64> {
        let mut x = vec![0.0; dim];
        for (d, xd) in x.iter_mut().enumerate() {
            *xd = bounds[d / k] * ((idx % per_dim) as f64 + 0.5) / per_dim as f64;
            idx /= per_dim;
        }
        x
    };
    let grid: Vec<f64> = with_workers(opts.workers, || (0..total).into_par_iter().map(|i| theta(&point(i))).collect())?;
    evaluations += total;
    let mut ranked: Vec<usize> = (0..total).filter(|&i| grid[i].is_finite()).collect();
    if ranked.is_empty() {
        return Err(Error::Numerical("dual is unbounded at every grid point".into()));
    }
    ranked.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]).then(a.cmp(&b)));

    let mean_bound = bounds.iter().sum::<f64>() / bounds.len() as f64;
    let mut best_x = point(ranked[0]);
    let mut best_v = grid[ranked[0]];
    for &start in ranked.iter().take(opts.starts.max(1)) {
        let mut x = point(start);
        let mut v = grid[start];
        let mut step = mean_bound / per_dim as f64;
        for _ in 0..8 {
            let nm = NelderMeadOptions { initial_step: step, ..opts.nelder_mead };
            let res = kernel::nelder_mead(theta, &x, &nm);
            evaluations += res.evaluations;
            let improved = v - res.value;
            if res.value < v {
                x = res.x;
                v = res.value;
            }
            if improved <= 1e-13 * (1.0 + v.abs()) {
                break;
            }
            step = (step * 0.1).max(1e-9);
        }
        if v < best_v {
            best_v = v;
            best_x = x;
        }
    }
    let lambda = (0..m).map(|j| (0..k).map(|o| best_x[j * k + o].max(0.0)).collect()).collect();
    Ok(DualMinimum { value: best_v, lambda, evaluations, search_box: bounds })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapOptions {
    pub search: SearchOptions,
    pub dual: DualOptions,
    /// Gaps at or below this count as zero for the ordering check.
    pub tol: f64,
}

impl Default for GapOptions {
    fn default() -> Self {
        GapOptions { search: SearchOptions::default(), dual: DualOptions::default(), tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityGap {
    #[serde(rename = "W_ps")]
    pub w_ps: f64,
    #[serde(rename = "W_ds")]
    pub w_ds: f64,
    pub gap: f64,
    pub pi_star: Vec<Permutation>,
    pub lambda_star: Vec<Vec<f64>>,
    /// Ordering-rule verdict, computed only when the gap closes.
    pub ordering_rule_holds: Option<bool>,
}

/// True iff every player's ranking pairs larger allocations with cheaper
/// outcomes; ranks sharing an allocation level may be ordered freely.
pub fn ordering_rule_holds(inst: &NetworkInstance, scheme: &LotteryScheme, lambda: &[Vec<f64>], tol: f64) -> bool {
    let rho_hat = route_prices(inst, lambda);
    let scale = 1.0 + rho_hat.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
    scheme.z.iter().zip(&scheme.pi).zip(&rho_hat).all(|((z, pi), rh)| {
        let order = invert(pi);
        let mut blocks: Vec<(f64, f64)> = Vec::new();
        for (l, &o) in order.iter().enumerate() {
            let p = rh[o];
            if l > 0 && (z[l - 1] - z[l]).abs() <= 1e-6 {
                let last = blocks.last_mut().expect("block exists");
                last.0 = last.0.min(p);
                last.1 = last.1.max(p);
            } else {
                blocks.push((p, p));
            }
        }
        blocks.windows(2).all(|w| w[0].1 <= w[1].0 + tol * scale)
    })
}

/// `W_ps` by exhaustive search, `W_ds` by dual minimisation, and their gap.
pub fn duality_gap(inst: &NetworkInstance, opts: &GapOptions) -> Result<DualityGap> {
    let primal = solve_sys_exhaustive(inst, &opts.search)?;
    let dual = dual_minimize(inst, &opts.dual)?;
    let gap = dual.value - primal.report.value;
    let ordering = (gap <= opts.tol).then(|| ordering_rule_holds(inst, &primal.report.scheme, &dual.lambda, 1e-3));
    Ok(DualityGap {
        w_ps: primal.report.value,
        w_ds: dual.value,
        gap,
        pi_star: primal.pi,
        lambda_star: dual.lambda,
        ordering_rule_holds: ordering,
    })
}

/// The four case-restricted minimisations of the two-player, single-link
/// dual with `lambda(1) <= lambda(2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTable {
    pub c1_b2: CaseOptimum,
    pub c1_d2: CaseOptimum,
    pub d1_b2: CaseOptimum,
    pub d1_d2: CaseOptimum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseOptimum {
    pub value: f64,
    pub lambda: [f64; 2],
}

impl CaseTable {
    pub fn values(&self) -> [f64; 4] {
        [self.c1_b2.value, self.d1_b2.value, self.d1_d2.value, self.c1_d2.value]
    }

    pub fn minimum(&self) -> CaseOptimum {
        [self.c1_b2, self.c1_d2, self.d1_b2, self.d1_d2]
            .into_iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("four cases")
    }
}

#[derive(Clone, Copy)]
enum First {
    C1,
    D1,
}

#[derive(Clone, Copy)]
enum Second {
    B2,
    D2,
}

/// Closed-form allocations of each case; `None` outside the case's region.
fn case_objective(first: First, second: Second, l1: f64, l2: f64) -> Option<f64> {
    const S: f64 = 0.05;
    let (z11, z12) = match first {
        First::C1 => {
            if !(l2 / 2.0 <= l1 && l1 <= l2 && l1 + l2 <= 1.0 / S) {
                return None;
            }
            let z = 1.0 / (l1 + l2) - S;
            (z, z)
        }
        First::D1 => {
            if !(l1 <= l2 / 2.0 && l1 > 0.0 && l1 <= 1.0 / (3.0 * S) && l2 <= 2.0 / (3.0 * S)) {
                return None;
            }
            (1.0 / (3.0 * l1) - S, 2.0 / (3.0 * l2) - S)
        }
    };
    if !(l1 > 0.5 && l1 <= 2.15 / 0.3) {
        return None;
    }
    let z21 = 2.0 / (6.0 * l1 - 3.0) - S;
    let z22 = match second {
        Second::B2 => {
            if l2 < 1.0 / 0.75 + 0.1 {
                return None;
            }
            0.0
        }
        Second::D2 => {
            if !(0.1..=2.15 / 1.5).contains(&l2) {
                return None;
            }
            2.0 / (30.0 * l2 - 3.0) - S
        }
    };
    let v1 = (1.0 / 3.0) * (z11 + S).ln() + (2.0 / 3.0) * (z12 + S).ln();
    let p2 = |z: f64| (2.0 * (z + S).ln() + 3.0 * (z + S)) / 5.0;
    let v2 = (5.0 / 6.0) * p2(z21) + (1.0 / 6.0) * p2(z22);
    Some(v1 + v2 - l1 * (z11 + z21) - l2 * (z12 + z22) + 2.9 * (l1 + l2) + 6.0)
}

/// Minimises a case objective over its region by repeated grid zooming.
fn minimize_case(first: First, second: Second) -> CaseOptimum {
    let (mut lo, mut hi) = ([0.0, 0.0], [8.0, 16.0]);
    let mut best = CaseOptimum { value: f64::INFINITY, lambda: [f64::NAN; 2] };
    const N: usize = 200;
    for _ in 0..18 {
        let step = [(hi[0] - lo[0]) / N as f64, (hi[1] - lo[1]) / N as f64];
        for a in 0..=N {
            for b in 0..=N {
                let (l1, l2) = (lo[0] + a as f64 * step[0], lo[1] + b as f64 * step[1]);
                if let Some(v) = case_objective(first, second, l1, l2) {
                    if v < best.value {
                        best = CaseOptimum { value: v, lambda: [l1, l2] };
                    }
                }
            }
        }
        for d in 0..2 {
            lo[d] = (best.lambda[d] - 4.0 * step[d]).max(0.0);
            hi[d] = best.lambda[d] + 4.0 * step[d];
        }
    }
    best
}

/// Case analysis of the two-player, single-link, two-outcome example.
pub fn case_table_example2() -> CaseTable {
    CaseTable {
        c1_b2: minimize_case(First::C1, Second::B2),
        c1_d2: minimize_case(First::C1, Second::D2),
        d1_b2: minimize_case(First::D1, Second::B2),
        d1_d2: minimize_case(First::D1, Second::D2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_are_lexicographic() {
        assert_eq!(all_permutations(1), vec![vec![0]]);
        assert_eq!(all_permutations(3), vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0]
        ]);
        assert_eq!(profile_count(3, 3), 36);
        assert_eq!(profile_count(1, 5), 1);
    }

    #[test]
    fn profile_indexing_is_lexicographic() {
        let perms = all_permutations(2);
        assert_eq!(profile_at(&perms, 3, 2, 0), vec![vec![0, 1], vec![0, 1], vec![0, 1]]);
        assert_eq!(profile_at(&perms, 3, 2, 1), vec![vec![0, 1], vec![0, 1], vec![1, 0]]);
        assert_eq!(profile_at(&perms, 3, 2, 2), vec![vec![0, 1], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn case_table_values() {
        let t = case_table_example2();
        let want = [10.2284, 10.1814, 9.5006, 8.2757];
        for (got, want) in t.values().iter().zip(want) {
            assert!((got - want).abs() <= 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn cyclic_profile_shape() {
        assert_eq!(cyclic_profile(2, 3), vec![vec![0, 1, 2], vec![1, 2, 0]]);
    }
}
