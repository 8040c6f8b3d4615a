//! Network instances, lottery schemes and price bookkeeping.
//!
//! Indices are 0-based throughout. A permutation `pi[o]` is the rank that
//! outcome `o` receives, so a player's allocation at outcome `o` is
//! `z[pi[o]]`, and rank 0 is the largest allocation.

use serde::{Deserialize, Serialize};

use crate::cpt::Agent;
use crate::error::{Error, Result, Violation};

/// Absolute tolerance on link loads.
pub const TOL_FEAS: f64 = 1e-9;

/// Per-outcome rank assignment of one player.
pub type Permutation = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInstance {
    pub capacities: Vec<f64>,
    pub routes: Vec<Vec<usize>>,
    pub k: usize,
    pub agents: Vec<Agent>,
}

impl NetworkInstance {
    /// Builds and validates an instance, normalising every route to a sorted set.
    pub fn new(capacities: Vec<f64>, routes: Vec<Vec<usize>>, k: usize, agents: Vec<Agent>) -> Result<Self> {
        validate_instance(NetworkInstance { capacities, routes, k, agents })
    }

    pub fn num_players(&self) -> usize {
        self.routes.len()
    }

    pub fn num_links(&self) -> usize {
        self.capacities.len()
    }

    /// `R_j`: players whose route uses link `j`.
    pub fn users_of(&self, link: usize) -> Vec<usize> {
        (0..self.num_players()).filter(|&i| self.routes[i].binary_search(&link).is_ok()).collect()
    }

    pub fn link_users(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_links()];
        for (i, route) in self.routes.iter().enumerate() {
            for &j in route {
                out[j].push(i);
            }
        }
        out
    }

    /// Smallest capacity on player `i`'s route; no allocation can exceed it.
    pub fn route_bottleneck(&self, player: usize) -> f64 {
        self.routes[player].iter().map(|&j| self.capacities[j]).fold(f64::INFINITY, f64::min)
    }

    /// Decision weights of every player for this instance's `k`.
    pub fn decision_weights(&self) -> Result<Vec<Vec<f64>>> {
        self.agents.iter().map(|a| a.decision_weights(self.k)).collect()
    }

    pub fn max_capacity(&self) -> f64 {
        self.capacities.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_capacity(&self) -> f64 {
        self.capacities.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Returns the instance (routes sorted and deduplicated) iff every invariant
/// holds; otherwise the complete list of violations.
pub fn validate_instance(mut inst: NetworkInstance) -> Result<NetworkInstance> {
    let mut violations = Vec::new();
    if inst.capacities.is_empty() {
        violations.push(Violation("instance has no links".into()));
    }
    for (j, &c) in inst.capacities.iter().enumerate() {
        if !(c > 0.0) || !c.is_finite() {
            violations.push(Violation(format!("link {j}: non-positive capacity {c}")));
        }
    }
    if inst.k == 0 {
        violations.push(Violation("number of outcomes k must be at least 1".into()));
    }
    if inst.routes.is_empty() {
        violations.push(Violation("instance has no players".into()));
    }
    if inst.agents.len() != inst.routes.len() {
        violations.push(Violation(format!(
            "agent-count mismatch: {} agents for {} routes",
            inst.agents.len(),
            inst.routes.len()
        )));
    }
    let m = inst.capacities.len();
    for (i, route) in inst.routes.iter_mut().enumerate() {
        if route.is_empty() {
            violations.push(Violation(format!("player {i}: empty route")));
        }
        for &j in route.iter() {
            if j >= m {
                violations.push(Violation(format!("player {i}: bad link index {j} (instance has {m} links)")));
            }
        }
        route.sort_unstable();
        route.dedup();
    }
    let k = (inst.k > 0).then_some(inst.k);
    for (i, agent) in inst.agents.iter().enumerate() {
        for v in agent.validate(k) {
            violations.push(Violation(format!("agent {i}: {}", v.0)));
        }
    }
    if violations.is_empty() {
        Ok(inst)
    } else {
        Err(Error::InvalidInstance(violations))
    }
}

/// Per-link loads of a deterministic allocation.
pub fn link_loads(inst: &NetworkInstance, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != inst.num_players() {
        return Err(Error::LengthMismatch { expected: inst.num_players(), got: x.len() });
    }
    let mut loads = vec![0.0; inst.num_links()];
    for (i, route) in inst.routes.iter().enumerate() {
        for &j in route {
            loads[j] += x[i];
        }
    }
    Ok(loads)
}

/// `A^T x <= c + TOL_FEAS` for a deterministic allocation.
pub fn is_feasible_allocation(inst: &NetworkInstance, x: &[f64]) -> Result<bool> {
    let loads = link_loads(inst, x)?;
    Ok(loads.iter().zip(&inst.capacities).all(|(l, c)| *l <= c + TOL_FEAS))
}

/// Player allocations ranked from largest to smallest, plus the outcome-to-rank map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotteryScheme {
    pub z: Vec<Vec<f64>>,
    pub pi: Vec<Permutation>,
}

impl LotteryScheme {
    /// Outcome matrix `y[i][o] = z[i][pi[i][o]]`.
    pub fn compose(&self) -> Vec<Vec<f64>> {
        scheme_compose(self)
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.z.len() != self.pi.len() {
            return Err(Error::LengthMismatch { expected: self.z.len(), got: self.pi.len() });
        }
        for (z, pi) in self.z.iter().zip(&self.pi) {
            if z.len() != k {
                return Err(Error::LengthMismatch { expected: k, got: z.len() });
            }
            check_permutation(pi, k)?;
            if z.iter().any(|x| !(*x >= -TOL_FEAS)) || z.windows(2).any(|w| w[0] + TOL_FEAS < w[1]) {
                return Err(Error::Domain("allocation vectors must be nonnegative and descending".into()));
            }
        }
        Ok(())
    }
}

pub fn check_permutation(pi: &[usize], k: usize) -> Result<()> {
    if pi.len() != k {
        return Err(Error::LengthMismatch { expected: k, got: pi.len() });
    }
    let mut seen = vec![false; k];
    for &r in pi {
        if r >= k || seen[r] {
            return Err(Error::Domain(format!("{pi:?} is not a permutation of 0..{k}")));
        }
        seen[r] = true;
    }
    Ok(())
}

/// Checks a permutation profile against an instance.
pub fn check_profile(inst: &NetworkInstance, pi: &[Permutation]) -> Result<()> {
    if pi.len() != inst.num_players() {
        return Err(Error::LengthMismatch { expected: inst.num_players(), got: pi.len() });
    }
    pi.iter().try_for_each(|p| check_permutation(p, inst.k))
}

/// `inverse[rank] = outcome`.
pub fn invert(pi: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; pi.len()];
    for (o, &r) in pi.iter().enumerate() {
        inv[r] = o;
    }
    inv
}

pub fn identity_permutation(k: usize) -> Permutation {
    (0..k).collect()
}

/// Link loads at every outcome: `loads[j][o]`.
pub fn outcome_loads(inst: &NetworkInstance, scheme: &LotteryScheme) -> Vec<Vec<f64>> {
    let mut loads = vec![vec![0.0; inst.k]; inst.num_links()];
    for (i, route) in inst.routes.iter().enumerate() {
        for o in 0..inst.k {
            let y = scheme.z[i][scheme.pi[i][o]];
            for &j in route {
                loads[j][o] += y;
            }
        }
    }
    loads
}

/// True iff every outcome profile `(z_i(pi_i(o)))_i` is feasible.
pub fn is_feasible_scheme(inst: &NetworkInstance, scheme: &LotteryScheme) -> Result<bool> {
    if scheme.z.len() != inst.num_players() {
        return Err(Error::LengthMismatch { expected: inst.num_players(), got: scheme.z.len() });
    }
    scheme.validate(inst.k)?;
    let loads = outcome_loads(inst, scheme);
    Ok(loads.iter().zip(&inst.capacities).all(|(row, c)| row.iter().all(|l| *l <= c + TOL_FEAS)))
}

/// Splits an outcome matrix into ranked allocations and permutations.
/// Equal entries keep their outcome order, which yields the
/// lexicographically smallest permutation.
pub fn scheme_decompose(y: &[Vec<f64>]) -> LotteryScheme {
    let mut z = Vec::with_capacity(y.len());
    let mut pi = Vec::with_capacity(y.len());
    for row in y {
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        z.push(order.iter().map(|&o| row[o]).collect());
        pi.push(invert(&order));
    }
    LotteryScheme { z, pi }
}

pub fn scheme_compose(scheme: &LotteryScheme) -> Vec<Vec<f64>> {
    scheme.z.iter().zip(&scheme.pi).map(|(z, pi)| pi.iter().map(|&r| z[r]).collect()).collect()
}

/// Link duals and the per-player prices they induce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSystem {
    /// `lambda[j][o]`, indexed by link and outcome.
    pub lambda: Vec<Vec<f64>>,
    /// `rho[i][l]`, indexed by player and rank.
    pub rho: Vec<Vec<f64>>,
    /// Cumulative rates `r[i][l] = sum_{s <= l} rho[i][s]`.
    pub r: Vec<Vec<f64>>,
    /// Ordering duals `alpha[i][l]`.
    pub alpha: Vec<Vec<f64>>,
}

/// `rho_i(l) = sum_{j in J_i} lambda_j(pi_i^{-1}(l))` and its prefix sums.
pub fn prices_from_duals(inst: &NetworkInstance, pi: &[Permutation], lambda: &[Vec<f64>]) -> Result<PriceSystem> {
    check_profile(inst, pi)?;
    if lambda.len() != inst.num_links() {
        return Err(Error::LengthMismatch { expected: inst.num_links(), got: lambda.len() });
    }
    for row in lambda {
        if row.len() != inst.k {
            return Err(Error::LengthMismatch { expected: inst.k, got: row.len() });
        }
        if row.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Domain("link duals must be nonnegative".into()));
        }
    }
    let n = inst.num_players();
    let mut rho = vec![vec![0.0; inst.k]; n];
    for i in 0..n {
        for (o, &rank) in pi[i].iter().enumerate() {
            rho[i][rank] = inst.routes[i].iter().map(|&j| lambda[j][o]).sum();
        }
    }
    let r = rho.iter().map(|row| cumulative(row)).collect();
    Ok(PriceSystem { lambda: lambda.to_vec(), rho, r, alpha: vec![vec![0.0; inst.k]; n] })
}

pub fn cumulative(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// `delta(l) = z(l) - z(l + 1)` with `z(k) = 0`.
pub fn increments(z: &[f64]) -> Vec<f64> {
    (0..z.len()).map(|l| z[l] - z.get(l + 1).copied().unwrap_or(0.0)).collect()
}

/// Inverse of [`increments`]: `z(l) = sum_{s >= l} delta(s)`.
pub fn from_increments(delta: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; delta.len()];
    let mut acc = 0.0;
    for l in (0..delta.len()).rev() {
        acc += delta[l];
        z[l] = acc;
    }
    z
}
