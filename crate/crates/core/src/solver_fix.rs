//! The fixed-permutation system problem: direct solvers, the user/network
//! market decomposition, and equilibrium verification.

use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierOptions, ConcaveProgram, Row, Term};
use crate::cpt::ValueFunction;
use crate::error::{Error, Result};
use crate::kernel::{self, IsotonicProblem, SpgOptions, Status};
use crate::model::{
    check_profile, cumulative, from_increments, increments, invert, outcome_loads, prices_from_duals,
    LotteryScheme, NetworkInstance, Permutation, PriceSystem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixMethod {
    /// Primal-dual interior point on the allocation variables.
    InteriorPoint,
    /// Spectral projected gradient on the link duals with exact inner solves.
    DualAscent,
    /// Iterated exchange of rates and budgets between users and the network.
    Tatonnement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub kkt_tol: f64,
    pub val_tol: f64,
    pub max_iter: usize,
    pub fix_tol: f64,
    pub method: FixMethod,
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            kkt_tol: 1e-8,
            val_tol: 1e-6,
            max_iter: 200_000,
            fix_tol: 1e-10,
            method: FixMethod::InteriorPoint,
            trace: false,
        }
    }
}

impl SolveOptions {
    pub fn with_method(method: FixMethod) -> Self {
        SolveOptions { method, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub value: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub value: f64,
    pub scheme: LotteryScheme,
    pub prices: PriceSystem,
    /// `delta[i][l] = z_i(l) - z_i(l + 1)`.
    pub delta: Vec<Vec<f64>>,
    /// `m[i][l] = delta[i][l] * r[i][l]`.
    pub budgets: Vec<Vec<f64>>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method: FixMethod,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trajectory: Vec<TracePoint>,
}

/// `sum_i sum_l h_i(l) v_i(z_i(l))`.
pub fn system_value(inst: &NetworkInstance, h: &[Vec<f64>], z: &[Vec<f64>]) -> f64 {
    inst.agents
        .iter()
        .zip(h)
        .zip(z)
        .map(|((a, h), z)| h.iter().zip(z).map(|(h, x)| h * a.value.value(x.max(0.0))).sum::<f64>())
        .sum()
}

pub fn solve_sys_fix(inst: &NetworkInstance, pi: &[Permutation], opts: &SolveOptions) -> Result<SolveReport> {
    check_profile(inst, pi)?;
    match opts.method {
        FixMethod::InteriorPoint => solve_interior_point(inst, pi, opts),
        FixMethod::DualAscent => solve_dual_ascent(inst, pi, opts),
        FixMethod::Tatonnement => tatonnement(inst, pi, opts),
    }
}

/// A point strictly inside the scheme polytope: strictly descending and
/// loading every link to at most half its capacity.
fn interior_start(inst: &NetworkInstance) -> f64 {
    let max_users = inst.link_users().iter().map(Vec::len).max().unwrap_or(1).max(1);
    0.5 * inst.min_capacity() / max_users as f64
}

fn solve_interior_point(inst: &NetworkInstance, pi: &[Permutation], opts: &SolveOptions) -> Result<SolveReport> {
    let (n, k, m) = (inst.num_players(), inst.k, inst.num_links());
    let h = inst.decision_weights()?;
    let var = |i: usize, l: usize| i * k + l;
    let mut terms = Vec::with_capacity(n * k);
    for i in 0..n {
        for l in 0..k {
            terms.push(Term::Value { weight: h[i][l], value: inst.agents[i].value });
        }
    }
    let users = inst.link_users();
    let mut rows = Vec::with_capacity(m * k + n * k);
    for j in 0..m {
        for o in 0..k {
            rows.push(Row::new(users[j].iter().map(|&i| (var(i, pi[i][o]), 1.0)).collect(), inst.capacities[j]));
        }
    }
    for i in 0..n {
        for l in 0..k {
            let coefs = if l + 1 < k { vec![(var(i, l + 1), 1.0), (var(i, l), -1.0)] } else { vec![(var(i, l), -1.0)] };
            rows.push(Row::new(coefs, 0.0));
        }
    }
    let t = interior_start(inst);
    let x0: Vec<f64> = (0..n * k).map(|v| t * (k - v % k) as f64 / k as f64).collect();
    let program = ConcaveProgram { terms, rows };
    let sol = program.maximize(&x0, &BarrierOptions::default(), opts.trace)?;

    let z: Vec<Vec<f64>> = (0..n).map(|i| (0..k).map(|l| sol.x[var(i, l)].max(0.0)).collect()).collect();
    let lambda: Vec<Vec<f64>> = (0..m).map(|j| (0..k).map(|o| sol.duals[j * k + o].max(0.0)).collect()).collect();
    let mut prices = prices_from_duals(inst, pi, &lambda)?;
    prices.alpha = (0..n).map(|i| (0..k).map(|l| sol.duals[m * k + i * k + l].max(0.0)).collect()).collect();
    let trajectory = sol
        .trace
        .iter()
        .map(|&(iteration, value, max_violation)| TracePoint { iteration, value, max_violation })
        .collect();
    finish_report(inst, pi, &h, z, prices, sol.iterations, sol.converged, FixMethod::InteriorPoint, trajectory, opts)
}

#[allow(clippy::too_many_arguments)]
fn finish_report(
    inst: &NetworkInstance,
    pi: &[Permutation],
    h: &[Vec<f64>],
    z: Vec<Vec<f64>>,
    prices: PriceSystem,
    iterations: usize,
    solver_converged: bool,
    method: FixMethod,
    trajectory: Vec<TracePoint>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let delta: Vec<Vec<f64>> = z.iter().map(|z| increments(z)).collect();
    let budgets = delta.iter().zip(&prices.r).map(|(d, r)| d.iter().zip(r).map(|(d, r)| d * r).collect()).collect();
    let value = system_value(inst, h, &z);
    let mut report = SolveReport {
        value,
        scheme: LotteryScheme { z, pi: pi.to_vec() },
        prices,
        delta,
        budgets,
        kkt_residual: 0.0,
        iterations,
        converged: false,
        method,
        trajectory,
    };
    report.kkt_residual = check_equilibrium(inst, pi, &report)?.max;
    report.converged = solver_converged && report.kkt_residual <= opts.kkt_tol;
    Ok(report)
}

/// Player `i`'s inner problem, capped at twice its route bottleneck so the
/// cap bounds the dual without flattening it near feasible allocations.
fn inner_solve(inst: &NetworkInstance, h: &[f64], i: usize, rho: &[f64]) -> Result<kernel::IsotonicSolution> {
    kernel::isotonic_concave_max(&IsotonicProblem {
        h: h.to_vec(),
        value: inst.agents[i].value,
        prices: rho.to_vec(),
        cap: Some(2.0 * inst.route_bottleneck(i)),
    })
}

fn unflatten(x: &[f64], rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|r| x[r * cols..(r + 1) * cols].to_vec()).collect()
}

fn solve_dual_ascent(inst: &NetworkInstance, pi: &[Permutation], opts: &SolveOptions) -> Result<SolveReport> {
    let (n, k, m) = (inst.num_players(), inst.k, inst.num_links());
    let h = inst.decision_weights()?;
    let dual = |x: &[f64]| -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
        let lambda = unflatten(x, m, k);
        let prices = prices_from_duals(inst, pi, &lambda)?;
        let mut value: f64 = (0..m).map(|j| inst.capacities[j] * lambda[j].iter().sum::<f64>()).sum();
        let mut z = Vec::with_capacity(n);
        for i in 0..n {
            let sol = inner_solve(inst, &h[i], i, &prices.rho[i])?;
            value += sol.value;
            z.push(sol.z);
        }
        let loads = outcome_loads(inst, &LotteryScheme { z: z.clone(), pi: pi.to_vec() });
        let grad = (0..m * k).map(|v| inst.capacities[v / k] - loads[v / k][v % k]).collect();
        Ok((value, grad, z))
    };
    let x0 = vec![1.0 / k as f64; m * k];
    let spg = SpgOptions { pg_tol: opts.kkt_tol * 1e-2, max_iter: opts.max_iter, memory: 10 };
    let res = kernel::spg_minimize(|x| dual(x).map(|(f, g, _)| (f, g)), &x0, &spg, opts.trace)?;
    let (_, _, z) = dual(&res.x)?;
    let lambda = unflatten(&res.x, m, k);
    let mut prices = prices_from_duals(inst, pi, &lambda)?;
    for i in 0..n {
        prices.alpha[i] = inner_solve(inst, &h[i], i, &prices.rho[i])?.alpha;
    }
    let trajectory = res
        .trace
        .iter()
        .map(|&(iteration, value, max_violation)| TracePoint { iteration, value, max_violation })
        .collect();
    finish_report(inst, pi, &h, z, prices, res.iterations, res.converged, FixMethod::DualAscent, trajectory, opts)
}

fn rate_prices(r: &[f64]) -> Result<Vec<f64>> {
    if r.is_empty() || !(r[0] > 0.0) {
        return Err(Error::Domain("rates need r(1) > 0".into()));
    }
    let mut rho = Vec::with_capacity(r.len());
    for l in 0..r.len() {
        let p = r[l] - if l > 0 { r[l - 1] } else { 0.0 };
        if p < -1e-12 * r[l].abs().max(1.0) {
            return Err(Error::Domain("rates must be nondecreasing".into()));
        }
        rho.push(p.max(0.0));
    }
    Ok(rho)
}

fn user_budgets(r: &[f64], h: &[f64], vf: &ValueFunction, cap: Option<f64>) -> Result<Vec<f64>> {
    if r.len() != h.len() {
        return Err(Error::LengthMismatch { expected: h.len(), got: r.len() });
    }
    let sol = kernel::isotonic_concave_max(&IsotonicProblem { h: h.to_vec(), value: *vf, prices: rate_prices(r)?, cap })?;
    if sol.status == Status::Unbounded {
        return Err(Error::Unbounded);
    }
    Ok(increments(&sol.z).iter().zip(r).map(|(d, r)| d * r).collect())
}

/// Budgets that maximise `sum_l h(l) v(sum_{s >= l} m(s) / r(s)) - sum_l m(l)`
/// for rates `0 < r(1) <= ... <= r(k)`.
pub fn solve_user(r: &[f64], h: &[f64], vf: &ValueFunction) -> Result<Vec<f64>> {
    user_budgets(r, h, vf, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSolution {
    pub delta: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

/// The network's Eisenberg–Gale program: `max sum m_i(l) ln delta_i(l)`
/// under the cumulative link constraints. Zero-budget coordinates stay at 0.
pub fn solve_net(inst: &NetworkInstance, pi: &[Permutation], m: &[Vec<f64>], _opts: &SolveOptions) -> Result<NetSolution> {
    check_profile(inst, pi)?;
    let (n, k, nl) = (inst.num_players(), inst.k, inst.num_links());
    if m.len() != n || m.iter().any(|row| row.len() != k) {
        return Err(Error::LengthMismatch { expected: n, got: m.len() });
    }
    if m.iter().flatten().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain("budgets must be finite and nonnegative".into()));
    }
    let mut index = vec![vec![None; k]; n];
    let mut terms = Vec::new();
    for i in 0..n {
        for l in 0..k {
            if m[i][l] > 0.0 {
                index[i][l] = Some(terms.len());
                terms.push(Term::Log { weight: m[i][l] });
            }
        }
    }
    let mut delta = vec![vec![0.0; k]; n];
    let mut lambda = vec![vec![0.0; k]; nl];
    if terms.is_empty() {
        return Ok(NetSolution { delta, lambda, converged: true, iterations: 0 });
    }
    let users = inst.link_users();
    let mut rows = Vec::new();
    let mut row_of = Vec::new();
    for j in 0..nl {
        for o in 0..k {
            let index = &index;
            let coefs: Vec<(usize, f64)> = users[j]
                .iter()
                .flat_map(|&i| (pi[i][o]..k).filter_map(move |s| index[i][s].map(|v| (v, 1.0))))
                .collect();
            if !coefs.is_empty() {
                rows.push(Row::new(coefs, inst.capacities[j]));
                row_of.push((j, o));
            }
        }
    }
    let x0 = vec![interior_start(inst) / k as f64; terms.len()];
    let sol = ConcaveProgram { terms, rows }.maximize(&x0, &BarrierOptions::default(), false)?;
    for i in 0..n {
        for l in 0..k {
            if let Some(v) = index[i][l] {
                delta[i][l] = sol.x[v];
            }
        }
    }
    for (r, &(j, o)) in row_of.iter().enumerate() {
        lambda[j][o] = sol.duals[r].max(0.0);
    }
    Ok(NetSolution { delta, lambda, converged: sol.converged, iterations: sol.iterations })
}

type Matrix = Vec<Vec<f64>>;

/// Iterated market process: the network posts rates, users answer with
/// budgets, the network clears budgets through its Eisenberg–Gale program
/// and updates its link prices. Prices are damped, with the damping halved
/// whenever the price change grows.
pub fn tatonnement(inst: &NetworkInstance, pi: &[Permutation], opts: &SolveOptions) -> Result<SolveReport> {
    check_profile(inst, pi)?;
    let (n, k, m) = (inst.num_players(), inst.k, inst.num_links());
    let h = inst.decision_weights()?;
    let max_iter = opts.max_iter.min(20_000);
    let mut lambda = vec![vec![1.0 / k as f64; k]; m];
    let mut theta: f64 = 0.5;
    let mut prev_change = f64::INFINITY;
    let mut prev_value = f64::NAN;
    let mut trajectory = Vec::new();
    // Latest `(z, lambda)` pair.
    let mut last: Option<(Matrix, Matrix)> = None;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=max_iter {
        iterations = it;
        let prices = prices_from_duals(inst, pi, &lambda)?;
        let mut budgets = Vec::with_capacity(n);
        for i in 0..n {
            let cap = Some(2.0 * inst.route_bottleneck(i));
            budgets.push(if prices.r[i][0] > 0.0 {
                user_budgets(&prices.r[i], &h[i], &inst.agents[i].value, cap)?
            } else {
                vec![0.0; k]
            });
        }
        let net = solve_net(inst, pi, &budgets, opts)?;
        let z: Vec<Vec<f64>> = net.delta.iter().map(|d| from_increments(d)).collect();
        let value = system_value(inst, &h, &z);
        let change = net
            .lambda
            .iter()
            .flatten()
            .zip(lambda.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        trajectory.push(TracePoint { iteration: it, value, max_violation: change });
        let scale = 1.0 + lambda.iter().flatten().fold(0.0f64, |a, b| a.max(*b));
        if (value - prev_value).abs() < opts.fix_tol && change <= 1e-9 * scale {
            last = Some((z, net.lambda));
            converged = true;
            break;
        }
        if change > prev_change {
            theta = (theta * 0.5).max(1e-3);
        } else {
            theta = (theta * 1.05).min(1.0);
        }
        prev_change = change;
        prev_value = value;
        for (row, target) in lambda.iter_mut().zip(&net.lambda) {
            for (x, t) in row.iter_mut().zip(target) {
                *x = (1.0 - theta) * *x + theta * t;
            }
        }
        last = Some((z, net.lambda));
    }
    let (z, lambda) = last.ok_or_else(|| Error::Numerical("tatonnement ran no iterations".into()))?;
    let prices = prices_from_duals(inst, pi, &lambda)?;
    let mut report = finish_report(inst, pi, &h, z, prices, iterations, converged, FixMethod::Tatonnement, Vec::new(), opts)?;
    report.converged = converged;
    if opts.trace || !converged {
        report.trajectory = trajectory;
    }
    Ok(report)
}

/// Residuals of the equilibrium conditions, each a maximum absolute violation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EquilibriumResiduals {
    /// Link loads above capacity, and ordering / sign violations of `z`.
    pub primal: f64,
    /// Negative link duals.
    pub dual_sign: f64,
    /// `|lambda_j(o) (c_j - load_j(o))|`.
    pub link_complementarity: f64,
    /// Violations of `sum_{s <= l} h(s) v'(z(s)) <= r(l)`.
    pub user_foc: f64,
    /// `|delta(l) (r(l) - sum_{s <= l} h(s) v'(z(s)))|`.
    pub user_complementarity: f64,
    /// `max(0, -r(1))`: rates must open positive.
    pub rate_condition: f64,
    /// `|m - delta r|` against the reported budgets.
    pub budget_identity: f64,
    /// `|delta - diff(z)|` against the reported increments.
    pub increment_identity: f64,
    pub max: f64,
}

/// Verifies a report against the equilibrium conditions, recomputing prices
/// from the reported link duals.
pub fn check_equilibrium(inst: &NetworkInstance, pi: &[Permutation], report: &SolveReport) -> Result<EquilibriumResiduals> {
    check_profile(inst, pi)?;
    let (n, k) = (inst.num_players(), inst.k);
    let z = &report.scheme.z;
    if z.len() != n || z.iter().any(|row| row.len() != k) {
        return Err(Error::LengthMismatch { expected: n, got: z.len() });
    }
    let h = inst.decision_weights()?;
    let lambda_clamped: Vec<Vec<f64>> = report.prices.lambda.iter().map(|r| r.iter().map(|x| x.max(0.0)).collect()).collect();
    let prices = prices_from_duals(inst, pi, &lambda_clamped)?;
    let mut res = EquilibriumResiduals {
        dual_sign: report.prices.lambda.iter().flatten().fold(0.0f64, |a, x| a.max(-x)),
        ..Default::default()
    };

    let scheme = LotteryScheme { z: z.clone(), pi: pi.to_vec() };
    let loads = outcome_loads(inst, &scheme);
    for (j, row) in loads.iter().enumerate() {
        for (o, &load) in row.iter().enumerate() {
            res.primal = res.primal.max(load - inst.capacities[j]);
            res.link_complementarity =
                res.link_complementarity.max((lambda_clamped[j][o] * (inst.capacities[j] - load)).abs());
        }
    }
    for i in 0..n {
        let zi = &z[i];
        for l in 0..k {
            let next = if l + 1 < k { zi[l + 1] } else { 0.0 };
            res.primal = res.primal.max(next - zi[l]);
        }
        res.primal = res.primal.max(-zi[k - 1]);
        let grad: Vec<f64> = (0..k).map(|l| h[i][l] * inst.agents[i].value.derivative(zi[l].max(0.0))).collect();
        let g_cum = cumulative(&grad);
        let r = &prices.r[i];
        let delta = increments(zi);
        res.rate_condition = res.rate_condition.max(-r[0]);
        for l in 0..k {
            res.user_foc = res.user_foc.max(g_cum[l] - r[l]);
            res.user_complementarity = res.user_complementarity.max((delta[l] * (r[l] - g_cum[l])).abs());
            if let Some(d) = report.delta.get(i).and_then(|row| row.get(l)) {
                res.increment_identity = res.increment_identity.max((d - delta[l]).abs());
            }
            if let Some(mb) = report.budgets.get(i).and_then(|row| row.get(l)) {
                res.budget_identity = res.budget_identity.max((mb - delta[l] * r[l]).abs());
            }
        }
    }
    res.max = [
        res.primal,
        res.dual_sign,
        res.link_complementarity,
        res.user_foc,
        res.user_complementarity,
        res.rate_condition,
        res.budget_identity,
        res.increment_identity,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(res)
}

/// Rank-to-outcome view of a profile, handy for reports.
pub fn outcome_orders(pi: &[Permutation]) -> Vec<Vec<usize>> {
    pi.iter().map(|p| invert(p)).collect()
}
