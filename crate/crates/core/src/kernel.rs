//! Inner solvers: golden-section search, the pool-adjacent-violators solver
//! for order-constrained concave maximisation, Nelder–Mead, and a spectral
//! projected gradient method on the nonnegative orthant.

use serde::{Deserialize, Serialize};

use crate::cpt::ValueFunction;
use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimisation of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    if !(lo <= hi) {
        return Err(Error::InvalidParameter(format!("golden section needs lo <= hi, got [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        if b - a <= f64::EPSILON * (a.abs() + b.abs()) {
            break;
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // The interior search cannot land exactly on an endpoint optimum.
    let (flo, fhi) = (f(lo), f(hi));
    if flo < fx && flo <= fhi {
        Ok((lo, flo))
    } else if fhi < fx {
        Ok((hi, fhi))
    } else {
        Ok((x, fx))
    }
}

/// Golden-section maximisation of a concave `f` on `[lo, hi]`.
pub fn maximize_1d_concave<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    let (x, fx) = golden_section_min(|x| -f(x), lo, hi, tol)?;
    Ok((x, -fx))
}

/// `max sum_l h(l) v(z(l)) - sum_l prices(l) z(l)` over descending `z >= 0`,
/// optionally with `z(0) <= cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicProblem {
    pub h: Vec<f64>,
    pub value: ValueFunction,
    pub prices: Vec<f64>,
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Unbounded,
}

/// Solution of an [`IsotonicProblem`]. When `status` is `Unbounded`, `z` and
/// `alpha` are empty and `value` is `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicSolution {
    pub z: Vec<f64>,
    /// Ordering duals of `z(l) >= z(l + 1)`, with `z(k) = 0` closing the chain.
    pub alpha: Vec<f64>,
    /// Dual of the cap constraint (0 when uncapped or slack).
    pub cap_dual: f64,
    pub value: f64,
    pub kkt_residual: f64,
    pub status: Status,
    /// First prefix (1-based length) whose cumulative price fails the slope test.
    pub unbounded_prefix: Option<usize>,
}

struct Pool {
    start: usize,
    end: usize,
    h: f64,
    price: f64,
    level: f64,
}

/// Common level of a pool: the maximiser of `H v(x) - R x` on `[0, cap]`.
pub fn pool_level(vf: &ValueFunction, h: f64, price: f64, cap: Option<f64>) -> f64 {
    let upper = cap.unwrap_or(f64::INFINITY);
    if vf.is_affine() {
        // Ties between a flat objective and the origin resolve to 0.
        let slope = h * vf.derivative(0.0);
        return if slope - price > 1e-12 * slope.max(price) { upper } else { 0.0 };
    }
    if price <= 0.0 {
        return upper;
    }
    let marginal = |x: f64| h * vf.derivative(x) - price;
    if marginal(0.0) <= 0.0 {
        return 0.0;
    }
    if let Some(c) = cap {
        if marginal(c) >= 0.0 {
            return c;
        }
    } else if h * vf.asymptotic_slope() >= price {
        return f64::INFINITY;
    }
    let mut hi = cap.unwrap_or(1.0);
    while cap.is_none() && marginal(hi) > 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    solve_marginal(vf, h, price, 0.0, hi)
}

/// Root of `h v'(x) = price` on a bracket with a sign change, by safeguarded
/// Newton with bisection fallback.
fn solve_marginal(vf: &ValueFunction, h: f64, price: f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = |x: f64| h * vf.derivative(x) - price;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gx = g(x);
        if gx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) || gx == 0.0 {
            break;
        }
        let slope = h * vf.second_derivative(x);
        let newton = if slope < 0.0 && slope.is_finite() { x - gx / slope } else { f64::NAN };
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (g(x)).abs() <= 1e-14 * price.abs().max(1e-300) {
            break;
        }
    }
    x.clamp(lo.min(hi), hi.max(lo))
}

/// The slope test: the uncapped problem is unbounded iff some prefix has
/// `r(l) < H(l) * slope`, or equality for a non-affine value function.
pub fn unbounded_prefix(h: &[f64], prices: &[f64], vf: &ValueFunction) -> Option<usize> {
    let slope = vf.asymptotic_slope();
    let (mut hs, mut rs) = (0.0, 0.0);
    for l in 0..h.len() {
        hs += h[l];
        rs += prices[l];
        let bound = hs * slope;
        let scale = bound.abs().max(rs.abs()).max(1e-300);
        let tie = (rs - bound).abs() <= 1e-12 * scale;
        if (rs < bound && !tie) || (tie && !vf.is_affine()) {
            return Some(l + 1);
        }
    }
    None
}

/// Pool-adjacent-violators solver for [`IsotonicProblem`].
pub fn isotonic_concave_max(prob: &IsotonicProblem) -> Result<IsotonicSolution> {
    let k = prob.h.len();
    if k == 0 || prob.prices.len() != k {
        return Err(Error::LengthMismatch { expected: k, got: prob.prices.len() });
    }
    if prob.h.iter().any(|h| !(*h > 0.0)) || prob.prices.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::Domain("isotonic problem needs h > 0 and finite prices >= 0".into()));
    }
    if let Some(c) = prob.cap {
        if !(c >= 0.0) {
            return Err(Error::Domain(format!("cap must be nonnegative, got {c}")));
        }
    }
    if prob.cap.is_none() {
        if let Some(l) = unbounded_prefix(&prob.h, &prob.prices, &prob.value) {
            return Ok(IsotonicSolution {
                z: Vec::new(),
                alpha: Vec::new(),
                cap_dual: 0.0,
                value: f64::INFINITY,
                kkt_residual: 0.0,
                status: Status::Unbounded,
                unbounded_prefix: Some(l),
            });
        }
    }

    let vf = &prob.value;
    let mut pools: Vec<Pool> = Vec::with_capacity(k);
    for l in 0..k {
        let (h, price) = (prob.h[l], prob.prices[l]);
        pools.push(Pool { start: l, end: l, h, price, level: pool_level(vf, h, price, prob.cap) });
        while pools.len() >= 2 && pools[pools.len() - 1].level > pools[pools.len() - 2].level {
            let top = pools.pop().expect("two pools");
            let below = pools.last_mut().expect("two pools");
            below.end = top.end;
            below.h += top.h;
            below.price += top.price;
            below.level = pool_level(vf, below.h, below.price, prob.cap);
        }
    }
    let mut z = vec![0.0; k];
    for pool in &pools {
        if !pool.level.is_finite() {
            return Err(Error::Numerical("isotonic pool level diverged".into()));
        }
        z[pool.start..=pool.end].fill(pool.level);
    }

    let grad: Vec<f64> = (0..k).map(|l| prob.h[l] * vf.derivative(z[l])).collect();
    let mut cap_dual = 0.0;
    if let Some(c) = prob.cap {
        // Every leading rank held at the cap shares its multiplier.
        let excess: f64 = (0..k).take_while(|&l| z[l] >= c).map(|l| grad[l] - prob.prices[l]).sum();
        cap_dual = excess.max(0.0);
    }
    // Stationarity: h v'(z(l)) - rho(l) - kappa [l = 0] + alpha(l) - alpha(l - 1) = 0.
    let mut alpha_raw = vec![0.0; k];
    let mut acc = cap_dual;
    for l in 0..k {
        acc += prob.prices[l] - grad[l];
        alpha_raw[l] = acc;
    }
    let alpha: Vec<f64> = alpha_raw.iter().map(|a| a.max(0.0)).collect();

    let scale = 1.0 + prob.prices.iter().chain(&grad).fold(0.0f64, |m, x| m.max(x.abs()));
    let mut resid = 0.0f64;
    for l in 0..k {
        let next = if l + 1 < k { z[l + 1] } else { 0.0 };
        resid = resid.max((-alpha_raw[l]).max(0.0) / scale);
        resid = resid.max((alpha[l] * (z[l] - next)).abs() / scale);
    }
    if let Some(c) = prob.cap {
        resid = resid.max((cap_dual * (c - z[0])).abs() / scale);
    }

    let value = prob.h.iter().zip(&z).map(|(h, x)| h * vf.value(*x)).sum::<f64>()
        - prob.prices.iter().zip(&z).map(|(p, x)| p * x).sum::<f64>();
    Ok(IsotonicSolution {
        z,
        alpha,
        cap_dual,
        value,
        kkt_residual: resid,
        status: Status::Optimal,
        unbounded_prefix: None,
    })
}

/// Settings for [`nelder_mead`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    pub f_tol: f64,
    pub x_tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { initial_step: 0.1, f_tol: 1e-13, x_tol: 1e-11, max_evals: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder–Mead minimisation with dimension-adaptive coefficients. `f` may
/// return `+inf` outside its domain.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> MinimizeResult {
    let d = x0.len();
    let df = d as f64;
    let (alpha, gamma) = (1.0, 1.0 + 2.0 / df);
    let (rho, sigma) = (0.75 - 1.0 / (2.0 * df), 1.0 - 1.0 / df);
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += if p[i] != 0.0 { opts.initial_step.max(0.05 * p[i].abs()) } else { opts.initial_step };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evals)).collect();
    let mut converged = false;
    while evals < opts.max_evals {
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();

        let f_spread = (values[d] - values[0]).abs();
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread.is_finite() && f_spread <= opts.f_tol * (1.0 + values[0].abs()) && x_spread <= opts.x_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; d];
        for p in &simplex[..d] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / df;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[d]).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[d] {
            let xc = along(alpha * rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[d].min(fr) {
            simplex[d] = xc;
            values[d] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=d {
            let shrunk: Vec<f64> = best.iter().zip(&simplex[i]).map(|(b, x)| b + sigma * (x - b)).collect();
            values[i] = eval(&shrunk, &mut evals);
            simplex[i] = shrunk;
        }
    }
    let best = (0..=d).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("nonempty simplex");
    MinimizeResult { x: simplex[best].clone(), value: values[best], evaluations: evals, converged }
}

/// Settings for [`spg_minimize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpgOptions {
    /// Stop when the projected gradient's max-norm falls below this.
    pub pg_tol: f64,
    pub max_iter: usize,
    /// Non-monotone line-search memory.
    pub memory: usize,
}

impl Default for SpgOptions {
    fn default() -> Self {
        SpgOptions { pg_tol: 1e-10, max_iter: 200_000, memory: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpgResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub pg_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `(iteration, value, projected-gradient norm)`.
    pub trace: Vec<(usize, f64, f64)>,
}

fn project_step(x: &[f64], g: &[f64], t: f64) -> Vec<f64> {
    x.iter().zip(g).map(|(x, g)| (x - t * g).max(0.0)).collect()
}

fn pg_norm(x: &[f64], g: &[f64]) -> f64 {
    x.iter().zip(g).map(|(x, g)| ((x - g).max(0.0) - x).abs()).fold(0.0, f64::max)
}

/// Spectral projected gradient (Barzilai–Borwein steps with a non-monotone
/// Armijo search) for a convex `C^1` function on `x >= 0`. `fg` returns the
/// value and gradient.
pub fn spg_minimize<F>(mut fg: F, x0: &[f64], opts: &SpgOptions, trace: bool) -> Result<SpgResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const STEP_MIN: f64 = 1e-12;
    const STEP_MAX: f64 = 1e12;
    let mut x: Vec<f64> = x0.iter().map(|v| v.max(0.0)).collect();
    let (mut f, mut g) = fg(&x)?;
    let mut history = vec![f];
    let mut pg = pg_norm(&x, &g);
    let mut step = if pg > 0.0 { (1.0 / pg).clamp(STEP_MIN, STEP_MAX) } else { 1.0 };
    let mut log = Vec::new();
    let mut iter = 0;
    while iter < opts.max_iter {
        if trace {
            log.push((iter, f, pg));
        }
        if pg <= opts.pg_tol {
            return Ok(SpgResult { x, value: f, pg_norm: pg, iterations: iter, converged: true, trace: log });
        }
        iter += 1;
        let target = project_step(&x, &g, step);
        let d: Vec<f64> = target.iter().zip(&x).map(|(t, x)| t - x).collect();
        let slope: f64 = d.iter().zip(&g).map(|(d, g)| d * g).sum();
        let f_ref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let (x_new, f_new, g_new) = loop {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(x, d)| (x + t * d).max(0.0)).collect();
            let (fc, gc) = fg(&cand)?;
            if fc <= f_ref + 1e-4 * t * slope || t < 1e-20 {
                break (cand, fc, gc);
            }
            let denom = 2.0 * (fc - f - t * slope);
            let t_quad = if denom > 0.0 { -slope * t * t / denom } else { 0.5 * t };
            t = if t_quad >= 0.1 * t && t_quad <= 0.9 * t { t_quad } else { 0.5 * t };
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sty: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sts: f64 = s.iter().map(|a| a * a).sum();
        step = if sty > 0.0 { (sts / sty).clamp(STEP_MIN, STEP_MAX) } else { STEP_MAX.min(1e4 * step) };
        x = x_new;
        f = f_new;
        g = g_new;
        pg = pg_norm(&x, &g);
        history.push(f);
        if history.len() > opts.memory.max(1) {
            history.remove(0);
        }
    }
    if trace {
        log.push((iter, f, pg));
    }
    Ok(SpgResult { x, value: f, pg_norm: pg, iterations: iter, converged: false, trace: log })
}
