//! Brute-force references for small instances. Deliberately slow and
//! independent of the structured solvers: no permutation symmetry, no
//! pooling, only grid enumeration and dynamic programming.

use rayon::prelude::*;

use crate::cpt::ValueFunction;
use crate::error::{Error, Result};
use crate::model::{invert, LotteryScheme, NetworkInstance};

/// Grid cells allowed by the system oracle before it refuses to run.
pub const MAX_GRID_WORK: f64 = 2e9;

fn permutations(k: usize) -> Vec<Vec<usize>> {
    // Heap's algorithm: order differs from the search module on purpose.
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..k).collect();
    let mut c = vec![0; k];
    out.push(p.clone());
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            out.push(p.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Amount by which rounding each allocation down to the grid can lower the
/// system value: the sum of the value functions' moduli of continuity.
pub fn grid_error_bound(inst: &NetworkInstance, step: f64) -> f64 {
    inst.agents.iter().map(|a| modulus(&a.value, step)).sum()
}

fn modulus(vf: &ValueFunction, step: f64) -> f64 {
    match *vf {
        ValueFunction::Power { beta } => step.powf(beta),
        ValueFunction::LogAffine { a, b, s, .. } => step * (a / s + b),
        ValueFunction::Linear => step,
    }
}

fn levels(cap: f64, step: f64) -> usize {
    (cap / step + 1e-9).floor() as usize
}

struct SysSearch<'a> {
    inst: &'a NetworkInstance,
    h: Vec<Vec<f64>>,
    orders: Vec<Vec<usize>>,
    step: f64,
    z_cap: f64,
}

impl SysSearch<'_> {
    fn player_value(&self, i: usize, z: &[f64]) -> f64 {
        self.h[i].iter().zip(z).map(|(h, x)| h * self.inst.agents[i].value.value(*x)).sum()
    }

    /// Largest grid value player `i` may place at rank `l` given residual capacities.
    fn room(&self, i: usize, l: usize, residual: &[Vec<f64>]) -> f64 {
        let o = self.orders[i][l];
        self.inst.routes[i].iter().map(|&j| residual[j][o]).fold(self.z_cap, f64::min)
    }

    fn place(&self, i: usize, z: &[f64], residual: &mut [Vec<f64>], sign: f64) {
        for (l, &x) in z.iter().enumerate() {
            let o = self.orders[i][l];
            for &j in &self.inst.routes[i] {
                residual[j][o] -= sign * x;
            }
        }
    }

    /// Last player takes the componentwise-largest feasible descending grid vector.
    fn greedy(&self, i: usize, residual: &[Vec<f64>]) -> Vec<f64> {
        let k = self.inst.k;
        let mut z = vec![0.0; k];
        let mut prev = self.z_cap;
        for l in 0..k {
            let room = self.room(i, l, residual).max(0.0);
            let q = levels(room.min(prev), self.step);
            z[l] = q as f64 * self.step;
            prev = z[l];
        }
        z
    }

    fn players(&self, i: usize, residual: &mut Vec<Vec<f64>>, acc: f64, chosen: &mut Vec<Vec<f64>>, best: &mut (f64, Vec<Vec<f64>>)) {
        let n = self.inst.num_players();
        if i + 1 == n {
            let z = self.greedy(i, residual);
            let total = acc + self.player_value(i, &z);
            if total > best.0 {
                chosen.push(z);
                *best = (total, chosen.clone());
                chosen.pop();
            }
            return;
        }
        let mut z = vec![0.0; self.inst.k];
        self.ranks(i, 0, usize::MAX, &mut z, residual, acc, chosen, best);
    }

    #[allow(clippy::too_many_arguments)]
    fn ranks(
        &self,
        i: usize,
        l: usize,
        prev_q: usize,
        z: &mut Vec<f64>,
        residual: &mut Vec<Vec<f64>>,
        acc: f64,
        chosen: &mut Vec<Vec<f64>>,
        best: &mut (f64, Vec<Vec<f64>>),
    ) {
        if l == self.inst.k {
            self.place(i, z, residual, 1.0);
            chosen.push(z.clone());
            let value = self.player_value(i, z);
            self.players(i + 1, residual, acc + value, chosen, best);
            chosen.pop();
            self.place(i, z, residual, -1.0);
            return;
        }
        let top = levels(self.room(i, l, residual).max(0.0), self.step).min(prev_q);
        for q in 0..=top {
            z[l] = q as f64 * self.step;
            self.ranks(i, l + 1, q, z, residual, acc, chosen, best);
        }
        z[l] = 0.0;
    }
}

/// Maximum system value over every permutation profile and every
/// grid-quantised feasible descending allocation. `z_cap` defaults to the
/// largest link capacity.
pub fn grid_brute_force_sys(inst: &NetworkInstance, step: f64, z_cap: Option<f64>) -> Result<(f64, LotteryScheme)> {
    let (n, k) = (inst.num_players(), inst.k);
    if n > 3 || k > 3 {
        return Err(Error::DimensionTooLarge { dim: n.max(k), max: 3 });
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("grid step must be positive".into()));
    }
    let z_cap = z_cap.unwrap_or_else(|| inst.max_capacity());
    let q = levels(z_cap, step) as f64 + 1.0;
    let per_player = (0..k).fold(1.0, |acc, t| acc * (q + t as f64) / (t + 1) as f64);
    let perms = permutations(k);
    let profiles = perms.len().pow(n as u32);
    let work = profiles as f64 * per_player.powi(n as i32 - 1);
    if work > MAX_GRID_WORK {
        return Err(Error::InvalidParameter(format!("grid oracle would enumerate {work:.3e} cells")));
    }
    let h = inst.decision_weights()?;
    let results: Vec<(f64, LotteryScheme)> = (0..profiles)
        .into_par_iter()
        .map(|mut idx| {
            let mut pi = Vec::with_capacity(n);
            for _ in 0..n {
                pi.push(perms[idx % perms.len()].clone());
                idx /= perms.len();
            }
            let search = SysSearch { inst, h: h.clone(), orders: pi.iter().map(|p| invert(p)).collect(), step, z_cap };
            let mut residual: Vec<Vec<f64>> = inst.capacities.iter().map(|&c| vec![c + 1e-12; k]).collect();
            let mut best = (f64::NEG_INFINITY, Vec::new());
            search.players(0, &mut residual, 0.0, &mut Vec::new(), &mut best);
            (best.0, LotteryScheme { z: best.1, pi })
        })
        .collect();
    let mut best = results[0].clone();
    for r in results.into_iter().skip(1) {
        if r.0 > best.0 {
            best = r;
        }
    }
    Ok(best)
}

/// Grid maximum of `sum_l h(l) v(z(l)) - sum_l prices(l) z(l)` over
/// descending grid vectors in `[0, z_cap]`, by dynamic programming.
pub fn grid_brute_force_isotonic(h: &[f64], vf: &ValueFunction, prices: &[f64], step: f64, z_cap: f64) -> Result<(f64, Vec<f64>)> {
    let k = h.len();
    if k > 5 {
        return Err(Error::DimensionTooLarge { dim: k, max: 5 });
    }
    if prices.len() != k {
        return Err(Error::LengthMismatch { expected: k, got: prices.len() });
    }
    let q_max = levels(z_cap, step);
    let term = |l: usize, q: usize| {
        let x = q as f64 * step;
        h[l] * vf.value(x) - prices[l] * x
    };
    // best[q]: optimum over ranks l..k with z(l) <= q, and its argmax level at rank l.
    let mut below = vec![0.0; q_max + 1];
    let mut choice = vec![vec![0usize; q_max + 1]; k];
    for l in (0..k).rev() {
        let mut cur = vec![f64::NEG_INFINITY; q_max + 1];
        for q in 0..=q_max {
            let here = term(l, q) + if l + 1 < k { below[q] } else { 0.0 };
            let (prev, prev_choice) = if q > 0 { (cur[q - 1], choice[l][q - 1]) } else { (f64::NEG_INFINITY, 0) };
            if here >= prev {
                cur[q] = here;
                choice[l][q] = q;
            } else {
                cur[q] = prev;
                choice[l][q] = prev_choice;
            }
        }
        below = cur;
    }
    let mut z = vec![0.0; k];
    let mut bound = q_max;
    for l in 0..k {
        let q = choice[l][bound];
        z[l] = q as f64 * step;
        bound = q;
    }
    Ok((below[q_max], z))
}

/// Grid maximum of `sum_l h(l) v(z(l))` over descending grid vectors whose
/// mean is `zbar` (rounded to the grid).
pub fn grid_brute_force_vavg(h: &[f64], vf: &ValueFunction, zbar: f64, step: f64) -> Result<f64> {
    let k = h.len();
    let total = (k as f64 * zbar / step).round() as usize;
    if (k + 1) as f64 * (total + 1) as f64 * (total + 1) as f64 > 5e8 {
        return Err(Error::InvalidParameter("averaged-value grid too fine".into()));
    }
    let width = total + 1;
    // dp[q * width + s]: best over ranks l..k with z(l) <= q and rank sum s.
    let neg = f64::NEG_INFINITY;
    let mut below = vec![neg; width * width];
    for l in (0..k).rev() {
        let mut cur = vec![neg; width * width];
        for q in 0..=total {
            let base = h[l] * vf.value(q as f64 * step);
            for s in q..=total {
                let rest = if l + 1 < k {
                    below[q * width + (s - q)]
                } else if s == q {
                    0.0
                } else {
                    neg
                };
                let here = base + rest;
                let prev = if q > 0 { cur[(q - 1) * width + s] } else { neg };
                cur[q * width + s] = here.max(prev);
            }
            if q > 0 {
                for s in 0..q.min(width) {
                    cur[q * width + s] = cur[(q - 1) * width + s];
                }
            }
        }
        below = cur;
    }
    Ok(below[total * width + total])
}

/// Whether the integers split into two halves of equal sum, by enumerating subsets.
pub fn partition_by_enumeration(integers: &[u64]) -> bool {
    let total: u64 = integers.iter().sum();
    if total % 2 == 1 {
        return false;
    }
    let n = integers.len();
    (0u64..(1u64 << n)).any(|mask| {
        (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| integers[i]).sum::<u64>() * 2 == total
    })
}
