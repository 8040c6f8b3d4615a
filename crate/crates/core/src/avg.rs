//! The average system problem, where link constraints hold in expectation,
//! its decomposition into per-player problems at scalar prices, the
//! averaged CPT value, and the equal-tail structure of optimal lotteries.

use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierOptions, ConcaveProgram, Row, Term};
use crate::cpt::{lstar, pstar, Agent, ValueFunction};
use crate::error::{Error, Result};
use crate::kernel::{self, IsotonicProblem, SpgOptions, Status};
use crate::model::NetworkInstance;

fn uniform_problem(h: &[f64], vf: &ValueFunction, rho_bar: f64, cap: Option<f64>) -> IsotonicProblem {
    let k = h.len();
    IsotonicProblem { h: h.to_vec(), value: *vf, prices: vec![rho_bar / k as f64; k], cap }
}

fn mean(z: &[f64]) -> f64 {
    z.iter().sum::<f64>() / z.len() as f64
}

fn ranked_value(h: &[f64], vf: &ValueFunction, z: &[f64]) -> f64 {
    h.iter().zip(z).map(|(h, x)| h * vf.value(*x)).sum()
}

/// `max sum_l h(l) v(z(l)) - (rho_bar / k) sum_l z(l)` over descending `z >= 0`.
pub fn solve_user_avg(agent: &Agent, rho_bar: f64, k: usize) -> Result<Vec<f64>> {
    if !(rho_bar > 0.0) || !rho_bar.is_finite() {
        return Err(Error::Domain(format!("scalar price must be positive, got {rho_bar}")));
    }
    let h = agent.decision_weights(k)?;
    let sol = kernel::isotonic_concave_max(&uniform_problem(&h, &agent.value, rho_bar, None))?;
    if sol.status == Status::Unbounded {
        return Err(Error::Unbounded);
    }
    Ok(sol.z)
}

/// Averaged CPT value: `max sum_l h(l) v(z(l))` over descending `z >= 0`
/// with mean `zbar`, and a maximiser.
pub fn v_avg(agent: &Agent, zbar: f64, k: usize) -> Result<(f64, Vec<f64>)> {
    if !(zbar >= 0.0) || !zbar.is_finite() {
        return Err(Error::Domain(format!("mean allocation must be finite and nonnegative, got {zbar}")));
    }
    let h = agent.decision_weights(k)?;
    let vf = &agent.value;
    if zbar == 0.0 {
        return Ok((vf.value(0.0), vec![0.0; k]));
    }
    if vf.is_affine() {
        // The feasible set's extreme points are the step vectors (k zbar / l) 1_{<= l}.
        let mut best: Option<(f64, Vec<f64>)> = None;
        for l in 1..=k {
            let z: Vec<f64> = (0..k).map(|s| if s < l { k as f64 * zbar / l as f64 } else { 0.0 }).collect();
            let v = ranked_value(&h, vf, &z);
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, z));
            }
        }
        return Ok(best.expect("k >= 1"));
    }

    let mean_at = |rho: f64| -> Result<(f64, Vec<f64>)> {
        let sol = kernel::isotonic_concave_max(&uniform_problem(&h, vf, rho, None))?;
        Ok(match sol.status {
            Status::Unbounded => (f64::INFINITY, Vec::new()),
            Status::Optimal => (mean(&sol.z), sol.z),
        })
    };
    let slope = vf.asymptotic_slope();
    let mut floor: f64 = 0.0;
    let mut hs = 0.0;
    for (l, x) in h.iter().enumerate() {
        hs += x;
        floor = floor.max(k as f64 * hs * slope / (l + 1) as f64);
    }
    let mut hi = (2.0 * floor).max(1.0);
    let mut guard = 0;
    while mean_at(hi)?.0 > zbar {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::Numerical("could not bracket the averaged-value multiplier".into()));
        }
    }
    let mut lo = hi;
    while mean_at(lo)?.0 < zbar {
        lo = floor + 0.5 * (lo - floor);
        guard += 1;
        if guard > 4000 || lo <= floor {
            return Err(Error::Numerical("could not bracket the averaged-value multiplier".into()));
        }
    }
    let (mut best_gap, mut best_z) = (f64::INFINITY, Vec::new());
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let (m, z) = mean_at(mid)?;
        if (m - zbar).abs() < best_gap {
            best_gap = (m - zbar).abs();
            best_z = z;
        }
        if best_gap <= 1e-12 * zbar.max(1.0) || mid <= lo || mid >= hi {
            break;
        }
        if m > zbar {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best_gap > 1e-9 * zbar.max(1.0) {
        return Err(Error::Numerical(format!("averaged-value bisection stalled at mean gap {best_gap}")));
    }
    Ok((ranked_value(&h, vf, &best_z), best_z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvgMethod {
    /// Projected gradient on the scalar link prices with exact per-player solves.
    DualAscent,
    /// Interior point on the allocation variables.
    InteriorPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvgOptions {
    pub method: AvgMethod,
    pub kkt_tol: f64,
    pub max_iter: usize,
}

impl Default for AvgOptions {
    fn default() -> Self {
        AvgOptions { method: AvgMethod::DualAscent, kkt_tol: 1e-8, max_iter: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgSolveReport {
    /// `W_pa`.
    pub value: f64,
    pub z: Vec<Vec<f64>>,
    pub zbar: Vec<f64>,
    pub lambda_bar: Vec<f64>,
    pub rho_bar: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method: AvgMethod,
}

fn scalar_prices(inst: &NetworkInstance, lambda_bar: &[f64]) -> Vec<f64> {
    inst.routes.iter().map(|r| r.iter().map(|&j| lambda_bar[j]).sum()).collect()
}

fn mean_loads(inst: &NetworkInstance, zbar: &[f64]) -> Vec<f64> {
    let mut loads = vec![0.0; inst.num_links()];
    for (i, route) in inst.routes.iter().enumerate() {
        for &j in route {
            loads[j] += zbar[i];
        }
    }
    loads
}

/// Maximises `sum_i V_i^avg(zbar_i)` subject to `sum_{i in R_j} zbar_i <= c_j`.
pub fn solve_sys_avg(inst: &NetworkInstance, opts: &AvgOptions) -> Result<AvgSolveReport> {
    let h = inst.decision_weights()?;
    let (z, lambda_bar, iterations, solver_converged) = match opts.method {
        AvgMethod::DualAscent => avg_dual_ascent(inst, &h, opts)?,
        AvgMethod::InteriorPoint => avg_interior_point(inst, &h)?,
    };
    let zbar: Vec<f64> = z.iter().map(|z| mean(z)).collect();
    let rho_bar = scalar_prices(inst, &lambda_bar);
    let value = inst.agents.iter().zip(&h).zip(&z).map(|((a, h), z)| ranked_value(h, &a.value, z)).sum();
    let mut report = AvgSolveReport {
        value,
        z,
        zbar,
        lambda_bar,
        rho_bar,
        kkt_residual: 0.0,
        iterations,
        converged: false,
        method: opts.method,
    };
    report.kkt_residual = avg_kkt_residual(inst, &report)?;
    report.converged = solver_converged && report.kkt_residual <= opts.kkt_tol;
    Ok(report)
}

type AvgRaw = (Vec<Vec<f64>>, Vec<f64>, usize, bool);

fn avg_dual_ascent(inst: &NetworkInstance, h: &[Vec<f64>], opts: &AvgOptions) -> Result<AvgRaw> {
    let k = inst.k;
    // Twice the largest feasible top allocation, so the cap never flattens the dual.
    let caps: Vec<f64> = (0..inst.num_players()).map(|i| 2.0 * k as f64 * inst.route_bottleneck(i)).collect();
    let inner = |lambda_bar: &[f64]| -> Result<(f64, Vec<Vec<f64>>)> {
        let rho = scalar_prices(inst, lambda_bar);
        let mut value: f64 = lambda_bar.iter().zip(&inst.capacities).map(|(l, c)| l * c).sum();
        let mut z = Vec::with_capacity(rho.len());
        for (i, agent) in inst.agents.iter().enumerate() {
            let sol = kernel::isotonic_concave_max(&uniform_problem(&h[i], &agent.value, rho[i], Some(caps[i])))?;
            value += sol.value;
            z.push(sol.z);
        }
        Ok((value, z))
    };
    let fg = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (value, z) = inner(x)?;
        let zbar: Vec<f64> = z.iter().map(|z| mean(z)).collect();
        let loads = mean_loads(inst, &zbar);
        Ok((value, inst.capacities.iter().zip(&loads).map(|(c, l)| c - l).collect()))
    };
    let spg = SpgOptions { pg_tol: opts.kkt_tol * 1e-3, max_iter: opts.max_iter, memory: 10 };
    let res = kernel::spg_minimize(fg, &vec![1.0; inst.num_links()], &spg, false)?;
    let (_, z) = inner(&res.x)?;
    Ok((z, res.x, res.iterations, res.converged))
}

fn avg_interior_point(inst: &NetworkInstance, h: &[Vec<f64>]) -> Result<AvgRaw> {
    let (n, k, m) = (inst.num_players(), inst.k, inst.num_links());
    let var = |i: usize, l: usize| i * k + l;
    let terms = (0..n * k).map(|v| Term::Value { weight: h[v / k][v % k], value: inst.agents[v / k].value }).collect();
    let users = inst.link_users();
    let mut rows = Vec::new();
    for j in 0..m {
        let coefs = users[j].iter().flat_map(|&i| (0..k).map(move |l| (var(i, l), 1.0 / k as f64))).collect();
        rows.push(Row::new(coefs, inst.capacities[j]));
    }
    for i in 0..n {
        for l in 0..k {
            let coefs = if l + 1 < k { vec![(var(i, l + 1), 1.0), (var(i, l), -1.0)] } else { vec![(var(i, l), -1.0)] };
            rows.push(Row::new(coefs, 0.0));
        }
    }
    let max_users = users.iter().map(Vec::len).max().unwrap_or(1).max(1);
    let t = 0.5 * inst.min_capacity() / max_users as f64;
    let x0: Vec<f64> = (0..n * k).map(|v| t * (k - v % k) as f64 / k as f64).collect();
    let sol = ConcaveProgram { terms, rows }.maximize(&x0, &BarrierOptions::default(), false)?;
    let z = (0..n).map(|i| (0..k).map(|l| sol.x[var(i, l)].max(0.0)).collect()).collect();
    let lambda_bar = sol.duals[..m].iter().map(|x| x.max(0.0)).collect();
    Ok((z, lambda_bar, sol.iterations, sol.converged))
}

/// Largest violation among mean-load feasibility, dual sign, link
/// complementarity, and each player's optimality at its scalar price.
pub fn avg_kkt_residual(inst: &NetworkInstance, report: &AvgSolveReport) -> Result<f64> {
    let k = inst.k;
    let h = inst.decision_weights()?;
    let zbar: Vec<f64> = report.z.iter().map(|z| mean(z)).collect();
    let loads = mean_loads(inst, &zbar);
    let mut res = 0.0f64;
    for j in 0..inst.num_links() {
        let lam = report.lambda_bar[j];
        res = res.max(loads[j] - inst.capacities[j]).max(-lam);
        res = res.max((lam.max(0.0) * (inst.capacities[j] - loads[j])).abs());
    }
    let rho = scalar_prices(inst, &report.lambda_bar);
    for (i, z) in report.z.iter().enumerate() {
        let vf = &inst.agents[i].value;
        let mut alpha = 0.0;
        for l in 0..k {
            let next = if l + 1 < k { z[l + 1] } else { 0.0 };
            res = res.max(next - z[l]);
            alpha += rho[i] / k as f64 - h[i][l] * vf.derivative(z[l].max(0.0));
            res = res.max(-alpha).max((alpha.max(0.0) * (z[l] - next)).abs());
        }
    }
    Ok(res)
}

/// True iff `max_{l >= l*} |z(l) - z(k)| <= tol`.
pub fn check_tail_structure(z: &[f64], p_star: f64, k: usize, tol: f64) -> Result<bool> {
    if z.len() != k {
        return Err(Error::LengthMismatch { expected: k, got: z.len() });
    }
    let l = lstar(p_star, k)?;
    let last = z[k - 1];
    Ok(z[l - 1..].iter().all(|x| (x - last).abs() <= tol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailVerdict {
    pub player: usize,
    pub p_star: Option<f64>,
    pub l_star: Option<usize>,
    pub holds: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Equal-tail verdict for each player's allocation in an average solution.
pub fn tail_verdicts(inst: &NetworkInstance, report: &AvgSolveReport, tol: f64) -> Vec<TailVerdict> {
    let k = inst.k;
    inst.agents
        .iter()
        .enumerate()
        .map(|(i, agent)| {
            let skip = |note: &str| TailVerdict { player: i, p_star: None, l_star: None, holds: None, note: Some(note.into()) };
            let Some(wf) = agent.weighting() else {
                return skip("explicit decision weights: no weighting function to envelope");
            };
            if !agent.value.is_strictly_concave() {
                return skip("affine value function: structure check needs strict concavity");
            }
            let p = match pstar(wf, 1e-8) {
                Ok(p) => p,
                Err(e) => return skip(&e.to_string()),
            };
            match lstar(p, k) {
                Ok(l) => TailVerdict {
                    player: i,
                    p_star: Some(p),
                    l_star: Some(l),
                    holds: check_tail_structure(&report.z[i], p, k, tol).ok(),
                    note: None,
                },
                Err(e) => TailVerdict { player: i, p_star: Some(p), l_star: None, holds: None, note: Some(e.to_string()) },
            }
        })
        .collect()
}
