//! Primal-dual interior point method for separable concave maximisation
//! under sparse linear inequalities:
//!
//! `max sum_v f_v(x_v)  s.t.  G x <= b`.
//!
//! Mehrotra predictor-corrector steps on the perturbed KKT system
//! `grad F - G^T y = 0`, `s = b - G x`, `s * y = mu`; the reduced Newton
//! system `(G^T S^-1 Y G - hess F) dx = r_d - G^T S^-1 r_c` is factored by a
//! dense Cholesky decomposition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cpt::ValueFunction;
use crate::error::{Error, Result};

/// One separable objective term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    /// `weight * v(x)`.
    Value { weight: f64, value: ValueFunction },
    /// `weight * ln(x)`.
    Log { weight: f64 },
}

impl Term {
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            Term::Value { weight, value } => {
                (weight * value.value(x), weight * value.derivative(x), weight * value.second_derivative(x))
            }
            Term::Log { weight } => {
                if x <= 0.0 {
                    return (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
                }
                (weight * x.ln(), weight / x, -weight / (x * x))
            }
        }
    }
}

/// Sparse row `sum coefs <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Row {
    pub fn new(coefs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row { coefs, rhs }
    }

    fn dot(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(v, a)| a * x[v]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveProgram {
    pub terms: Vec<Term>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierOptions {
    /// Target for the average complementarity `s^T y / p`.
    pub mu_tol: f64,
    /// Target for the relative dual residual.
    pub dual_tol: f64,
    pub max_iter: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions { mu_tol: 1e-13, dual_tol: 1e-11, max_iter: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSolution {
    pub x: Vec<f64>,
    /// One multiplier per row.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub dual_residual: f64,
    pub mu: f64,
    /// `(iteration, objective, max(dual residual, mu))`.
    pub trace: Vec<(usize, f64, f64)>,
}

impl ConcaveProgram {
    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let mut f = 0.0;
        let mut g = vec![0.0; x.len()];
        let mut h = vec![0.0; x.len()];
        for (v, term) in self.terms.iter().enumerate() {
            let (fv, gv, hv) = term.eval(x[v]);
            f += fv;
            g[v] = gv;
            h[v] = hv;
        }
        (f, g, h)
    }

    fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.rhs - r.dot(x)).collect()
    }

    fn gt_times(&self, y: &[f64], nv: usize) -> Vec<f64> {
        let mut out = vec![0.0; nv];
        for (row, &yr) in self.rows.iter().zip(y) {
            for &(v, a) in &row.coefs {
                out[v] += a * yr;
            }
        }
        out
    }

    /// Maximises from a strictly feasible `x0`.
    pub fn maximize(&self, x0: &[f64], opts: &BarrierOptions, trace: bool) -> Result<BarrierSolution> {
        let nv = self.terms.len();
        let p = self.rows.len();
        if x0.len() != nv {
            return Err(Error::LengthMismatch { expected: nv, got: x0.len() });
        }
        let mut x = x0.to_vec();
        let mut s = self.slacks(&x);
        if s.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Numerical("interior point start is not strictly feasible".into()));
        }
        let (mut f, mut g, mut h) = self.objective(&x);
        if !f.is_finite() {
            return Err(Error::Numerical("objective undefined at the interior point start".into()));
        }
        let gscale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut y: Vec<f64> = s.iter().map(|si| (gscale * 1e-2 / si).clamp(1e-8, 1e8)).collect();
        let mut log = Vec::new();

        for iter in 0..=opts.max_iter {
            let gty = self.gt_times(&y, nv);
            let r_d: Vec<f64> = g.iter().zip(&gty).map(|(a, b)| a - b).collect();
            let dres = r_d.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (1.0 + g.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            let mu = if p > 0 { s.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / p as f64 } else { 0.0 };
            if trace {
                log.push((iter, f, dres.max(mu)));
            }
            if (dres <= opts.dual_tol && mu <= opts.mu_tol * (1.0 + f.abs())) || iter == opts.max_iter {
                return Ok(BarrierSolution {
                    x,
                    duals: y,
                    objective: f,
                    iterations: iter,
                    converged: iter < opts.max_iter,
                    dual_residual: dres,
                    mu,
                    trace: log,
                });
            }

            let mut m = DMatrix::<f64>::zeros(nv, nv);
            for (r, row) in self.rows.iter().enumerate() {
                let d = y[r] / s[r];
                for &(a, ca) in &row.coefs {
                    for &(b, cb) in &row.coefs {
                        m[(a, b)] += d * ca * cb;
                    }
                }
            }
            for v in 0..nv {
                m[(v, v)] -= h[v];
            }
            let chol = factor(m)?;

            let solve = |r_c: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
                let scaled: Vec<f64> = r_c.iter().zip(&s).map(|(a, b)| a / b).collect();
                let gt = self.gt_times(&scaled, nv);
                let rhs = DVector::from_iterator(nv, r_d.iter().zip(&gt).map(|(a, b)| a - b));
                let dx: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
                let ds: Vec<f64> = self.rows.iter().map(|row| -row.dot(&dx)).collect();
                let dy: Vec<f64> = (0..p).map(|r| (r_c[r] - y[r] * ds[r]) / s[r]).collect();
                (dx, ds, dy)
            };

            let r_aff: Vec<f64> = s.iter().zip(&y).map(|(a, b)| -a * b).collect();
            let (_, ds_a, dy_a) = solve(&r_aff);
            let a_aff = max_step(&s, &ds_a).min(max_step(&y, &dy_a)).min(1.0);
            let mu_aff = (0..p).map(|r| (s[r] + a_aff * ds_a[r]) * (y[r] + a_aff * dy_a[r])).sum::<f64>() / p as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            let target = sigma * mu;
            let merit_slope = |dx: &[f64]| {
                let ds = self.ds_from(dx);
                g.iter().zip(dx).map(|(a, b)| a * b).sum::<f64>() + target * (0..p).map(|r| ds[r] / s[r]).sum::<f64>()
            };
            let r_c: Vec<f64> = (0..p).map(|r| target - s[r] * y[r] - ds_a[r] * dy_a[r]).collect();
            let (mut dx, _, mut dy) = solve(&r_c);
            let mut slope = merit_slope(&dx);
            if !(slope > 0.0) {
                // The centred direction without the corrector always ascends the merit.
                let r_c: Vec<f64> = (0..p).map(|r| target - s[r] * y[r]).collect();
                (dx, _, dy) = solve(&r_c);
                slope = merit_slope(&dx).max(0.0);
            }
            let merit = |f: f64, s: &[f64]| f + target * s.iter().map(|v| v.ln()).sum::<f64>();
            let merit0 = merit(f, &s);
            let noise = 1e-13 * (1.0 + f.abs() + target * s.iter().map(|v| v.ln().abs()).sum::<f64>());

            let mut alpha = (0.995 * max_step(&s, &self.ds_from(&dx)).min(max_step(&y, &dy))).min(1.0);
            let mut fallback: Option<f64> = None;
            let step = loop {
                let xn: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
                let sn = self.slacks(&xn);
                let trial = self.objective(&xn);
                let admissible = sn.iter().all(|v| *v > 0.0) && trial.0.is_finite() && trial.1.iter().all(|v| v.is_finite());
                if admissible {
                    if merit(trial.0, &sn) >= merit0 + 1e-4 * alpha * slope - noise {
                        break Some((alpha, xn, sn, trial));
                    }
                    fallback.get_or_insert(alpha);
                }
                alpha *= 0.5;
                if alpha < 1e-10 {
                    break None;
                }
            };
            let (alpha, xn, sn, trial) = match (step, fallback) {
                (Some(step), _) => step,
                // Merit differences lost in rounding: take the longest admissible step.
                (None, Some(alpha)) => {
                    let xn: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
                    let sn = self.slacks(&xn);
                    let trial = self.objective(&xn);
                    (alpha, xn, sn, trial)
                }
                (None, None) => return Err(Error::Numerical("interior point step collapsed".into())),
            };
            x = xn;
            s = sn;
            (f, g, h) = trial;
            for r in 0..p {
                y[r] = (y[r] + alpha * dy[r]).max(1e-300);
            }
        }
        unreachable!("loop returns at max_iter")
    }

    fn ds_from(&self, dx: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| -row.dot(dx)).collect()
    }
}

fn factor(m: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let diag_max = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut trial = m.clone();
        for i in 0..trial.nrows() {
            trial[(i, i)] += reg;
        }
        if let Some(c) = trial.cholesky() {
            return Ok(c);
        }
        reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
    }
    Err(Error::Numerical("reduced Newton system is not positive definite".into()))
}

/// Largest `t` in `(0, 1 / 0.995]` keeping `v + t dv > 0` (capped at a large value).
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).filter(|(_, d)| **d < 0.0).map(|(a, d)| -a / d).fold(1e300, f64::min)
}
