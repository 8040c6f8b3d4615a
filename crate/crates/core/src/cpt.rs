//! Rank-dependent (CPT, gains-only) preferences: value functions, probability
//! weighting functions, decision weights, and the concave envelope of a
//! weighting function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::kernel;

/// Power-family derivatives at zero are clamped to `1 / DERIV_EPS`.
pub const DERIV_EPS: f64 = 1e-12;

/// Smallest `gamma` for which the Tversky–Kahneman weighting function is
/// strictly increasing on `[0, 1]`.
pub const KT_MIN_GAMMA: f64 = 0.28;

/// Concave, strictly increasing value function on `[0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum ValueFunction {
    /// `v(x) = x^beta`, `beta` in `(0, 1]`.
    Power { beta: f64 },
    /// `v(x) = a ln(x + s) + b (x + s) + c`.
    LogAffine {
        a: f64,
        b: f64,
        s: f64,
        #[serde(default)]
        c: f64,
    },
    /// `v(x) = x`.
    Linear,
}

/// Value, derivative and `lim_{x -> inf} v'(x)` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueEval {
    pub value: f64,
    pub derivative: f64,
    pub asymptotic_slope: f64,
}

impl ValueFunction {
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        match *self {
            ValueFunction::Power { beta } => {
                if !(beta > 0.0 && beta <= 1.0) {
                    out.push(Violation(format!("power value function needs beta in (0, 1], got {beta}")));
                }
            }
            ValueFunction::LogAffine { a, b, s, c } => {
                if !(a >= 0.0 && b >= 0.0 && a + b > 0.0) {
                    out.push(Violation(format!(
                        "log_affine value function needs a >= 0, b >= 0, a + b > 0, got a={a}, b={b}"
                    )));
                }
                if !(s > 0.0 && s.is_finite()) {
                    out.push(Violation(format!("log_affine value function needs s > 0, got {s}")));
                }
                if !c.is_finite() {
                    out.push(Violation("log_affine offset c must be finite".into()));
                }
            }
            ValueFunction::Linear => {}
        }
        out
    }

    /// `v(x)`; the caller guarantees `x >= 0`.
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ValueFunction::Power { beta } => x.powf(beta),
            ValueFunction::LogAffine { a, b, s, c } => {
                let t = x + s;
                let log_part = if a == 0.0 { 0.0 } else { a * t.ln() };
                log_part + b * t + c
            }
            ValueFunction::Linear => x,
        }
    }

    /// `v'(x)`, with the power family clamped at the origin.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ValueFunction::Power { beta } => {
                if beta == 1.0 {
                    1.0
                } else if x <= 0.0 {
                    1.0 / DERIV_EPS
                } else {
                    (beta * x.powf(beta - 1.0)).min(1.0 / DERIV_EPS)
                }
            }
            ValueFunction::LogAffine { a, b, s, .. } => a / (x + s) + b,
            ValueFunction::Linear => 1.0,
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            ValueFunction::Power { beta } => {
                if beta == 1.0 {
                    0.0
                } else if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    beta * (beta - 1.0) * x.powf(beta - 2.0)
                }
            }
            ValueFunction::LogAffine { a, s, .. } => -a / ((x + s) * (x + s)),
            ValueFunction::Linear => 0.0,
        }
    }

    pub fn asymptotic_slope(&self) -> f64 {
        match *self {
            // x^1 is the identity, whose slope never decays.
            ValueFunction::Power { beta: 1.0 } => 1.0,
            ValueFunction::Power { .. } => 0.0,
            ValueFunction::LogAffine { b, .. } => b,
            ValueFunction::Linear => 1.0,
        }
    }

    /// True when `v` has a constant derivative.
    pub fn is_affine(&self) -> bool {
        match *self {
            ValueFunction::Power { beta } => beta == 1.0,
            ValueFunction::LogAffine { a, .. } => a == 0.0,
            ValueFunction::Linear => true,
        }
    }

    pub fn is_strictly_concave(&self) -> bool {
        !self.is_affine()
    }
}

/// Exact value, derivative and asymptotic slope of `vf` at `x >= 0`.
pub fn value_eval(vf: &ValueFunction, x: f64) -> Result<ValueEval> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("value function argument must be a finite x >= 0, got {x}")));
    }
    Ok(ValueEval {
        value: vf.value(x),
        derivative: vf.derivative(x),
        asymptotic_slope: vf.asymptotic_slope(),
    })
}

/// Continuous, strictly increasing probability weighting function with
/// `w(0) = 0` and `w(1) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum WeightingFunction {
    Identity,
    /// Tversky–Kahneman: `p^g / (p^g + (1 - p)^g)^(1/g)`.
    Kt { gamma: f64 },
    /// `p^a` with `a > 1`.
    PowerConvex { a: f64 },
}

impl WeightingFunction {
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        match *self {
            WeightingFunction::Identity => {}
            WeightingFunction::Kt { gamma } => {
                if !(KT_MIN_GAMMA..=1.0).contains(&gamma) {
                    out.push(Violation(format!(
                        "kt weighting needs gamma in [{KT_MIN_GAMMA}, 1] to be strictly increasing, got {gamma}"
                    )));
                }
            }
            WeightingFunction::PowerConvex { a } => {
                if !(a > 1.0 && a.is_finite()) {
                    out.push(Violation(format!("power_convex weighting needs a > 1, got {a}")));
                }
            }
        }
        out
    }

    /// `w(p)` for `p` in `[0, 1]`; endpoints are exact.
    pub fn eval(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        match *self {
            WeightingFunction::Identity => p,
            WeightingFunction::Kt { gamma } => {
                let num = p.powf(gamma);
                num / (num + (1.0 - p).powf(gamma)).powf(1.0 / gamma)
            }
            WeightingFunction::PowerConvex { a } => p.powf(a),
        }
    }

    /// `w'(p)` on the open interval `(0, 1)`.
    pub fn derivative(&self, p: f64) -> f64 {
        match *self {
            WeightingFunction::Identity => 1.0,
            WeightingFunction::Kt { gamma } => {
                let pg = p.powf(gamma);
                let qg = (1.0 - p).powf(gamma);
                let d = pg + qg;
                let w = pg / d.powf(1.0 / gamma);
                w * (gamma / p - (pg / p - qg / (1.0 - p)) / d)
            }
            WeightingFunction::PowerConvex { a } => a * p.powf(a - 1.0),
        }
    }

    /// Decision weights `h(l) = w(l/k) - w((l-1)/k)` of a uniform
    /// `k`-outcome lottery, ranked from the largest outcome down.
    pub fn decision_weights(&self, k: usize) -> Vec<f64> {
        let grid: Vec<f64> = (0..=k).map(|l| self.eval(l as f64 / k as f64)).collect();
        grid.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// `w(p)`; rejects probabilities outside `[0, 1]`.
pub fn weight_eval(wf: &WeightingFunction, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(wf.eval(p))
}

/// Decision weights of a uniform `k`-outcome lottery.
pub fn decision_weights(wf: &WeightingFunction, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("number of outcomes k must be at least 1".into()));
    }
    Ok(wf.decision_weights(k))
}

/// How an agent weighs a ranked lottery: through a weighting function, or via
/// decision weights supplied directly for a fixed `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weights {
    Explicit { explicit_h: Vec<f64> },
    Function(WeightingFunction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub value: ValueFunction,
    pub weights: Weights,
}

impl Agent {
    pub fn new(value: ValueFunction, weighting: WeightingFunction) -> Self {
        Agent { value, weights: Weights::Function(weighting) }
    }

    pub fn with_explicit_weights(value: ValueFunction, h: Vec<f64>) -> Self {
        Agent { value, weights: Weights::Explicit { explicit_h: h } }
    }

    pub fn weighting(&self) -> Option<&WeightingFunction> {
        match &self.weights {
            Weights::Function(wf) => Some(wf),
            Weights::Explicit { .. } => None,
        }
    }

    /// Checks the agent's parameters; `k` enables the explicit-weights length check.
    pub fn validate(&self, k: Option<usize>) -> Vec<Violation> {
        let mut out = self.value.validate();
        match &self.weights {
            Weights::Function(wf) => out.extend(wf.validate()),
            Weights::Explicit { explicit_h } => {
                if let Some(k) = k {
                    if explicit_h.len() != k {
                        out.push(Violation(format!(
                            "explicit_h has {} entries, expected k = {k}",
                            explicit_h.len()
                        )));
                    }
                }
                if explicit_h.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
                    out.push(Violation("explicit_h entries must be positive and finite".into()));
                }
                let sum: f64 = explicit_h.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    out.push(Violation(format!("explicit_h must sum to 1, sums to {sum}")));
                }
            }
        }
        out
    }

    pub fn decision_weights(&self, k: usize) -> Result<Vec<f64>> {
        match &self.weights {
            Weights::Function(wf) => decision_weights(wf, k),
            Weights::Explicit { explicit_h } => {
                if explicit_h.len() != k {
                    return Err(Error::LengthMismatch { expected: k, got: explicit_h.len() });
                }
                Ok(explicit_h.clone())
            }
        }
    }
}

/// CPT value of a finite prospect of `(probability, outcome)` pairs.
///
/// Outcomes are ranked from best to worst and equal outcomes are merged, so
/// the result is independent of input order and of how ties are split.
/// Agents carrying only explicit decision weights accept uniform prospects of
/// matching length.
pub fn cpt_value(agent: &Agent, prospect: &[(f64, f64)]) -> Result<f64> {
    if prospect.is_empty() {
        return Err(Error::InvalidParameter("prospect must be non-empty".into()));
    }
    for &(p, y) in prospect {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::Domain(format!("probabilities must be nonnegative, got {p}")));
        }
        if !(y >= 0.0) || !y.is_finite() {
            return Err(Error::Domain(format!("outcomes must be finite and nonnegative, got {y}")));
        }
    }
    let total: f64 = prospect.iter().map(|&(p, _)| p).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::ProbabilitiesNotNormalized(total));
    }
    let mut ranked: Vec<(f64, f64)> = prospect.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));

    match &agent.weights {
        Weights::Explicit { explicit_h } => {
            let k = explicit_h.len();
            let uniform = 1.0 / k as f64;
            if ranked.len() != k || ranked.iter().any(|&(p, _)| (p - uniform).abs() > 1e-12) {
                return Err(Error::ExplicitWeights("cpt_value on a non-uniform prospect"));
            }
            Ok(explicit_h.iter().zip(&ranked).map(|(h, &(_, y))| h * agent.value.value(y)).sum())
        }
        Weights::Function(wf) => {
            let mut merged: Vec<(f64, f64)> = Vec::with_capacity(ranked.len());
            for (p, y) in ranked {
                match merged.last_mut() {
                    Some(last) if last.1 == y => last.0 += p,
                    _ => merged.push((p, y)),
                }
            }
            let mut cumulative = 0.0;
            let mut prev_w = 0.0;
            let mut value = 0.0;
            let last = merged.len() - 1;
            for (idx, &(p, y)) in merged.iter().enumerate() {
                cumulative += p;
                let w = if idx == last { 1.0 } else { wf.eval(cumulative.min(1.0)) };
                value += (w - prev_w) * agent.value.value(y);
                prev_w = w;
            }
            Ok(value)
        }
    }
}

/// `sum_l h(l) v(z(l))` for a descending allocation vector `z`.
pub fn cpt_value_uniform(h: &[f64], vf: &ValueFunction, z: &[f64]) -> Result<f64> {
    if h.len() != z.len() {
        return Err(Error::LengthMismatch { expected: h.len(), got: z.len() });
    }
    if z.iter().any(|x| !(*x >= 0.0)) || z.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Domain("allocation vector must be nonnegative and descending".into()));
    }
    Ok(h.iter().zip(z).map(|(h, &x)| h * vf.value(x)).sum())
}

/// `g(p) = (1 - w(p)) / (1 - p)`: slope of the chord from `(p, w(p))` to `(1, 1)`.
pub fn chord_slope(wf: &WeightingFunction, p: f64) -> f64 {
    (1.0 - wf.eval(p)) / (1.0 - p)
}

/// Default grid step used by [`pstar`].
pub const PSTAR_GRID_STEP: f64 = 1e-5;

/// Smallest probability `p*` beyond which the concave majorant of `w` is the
/// chord to `(1, 1)`; computed as the smallest global minimiser of
/// [`chord_slope`] on `[0, 1)`.
pub fn pstar(wf: &WeightingFunction, tol: f64) -> Result<f64> {
    pstar_with_step(wf, PSTAR_GRID_STEP, tol)
}

pub fn pstar_with_step(wf: &WeightingFunction, step: f64, tol: f64) -> Result<f64> {
    if !wf.validate().is_empty() {
        return Err(Error::UnsupportedFamily(format!("{wf:?}")));
    }
    if !(step > 0.0 && step < 0.5) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("pstar needs 0 < step < 0.5 and tol > 0, got {step}, {tol}")));
    }
    const TIE: f64 = 1e-14;
    let n = ((1.0 - step) / step).floor() as usize;
    let mut best_idx = 0;
    let mut best = chord_slope(wf, 0.0);
    for i in 1..=n {
        let g = chord_slope(wf, i as f64 * step);
        if g < best - TIE {
            best = g;
            best_idx = i;
        }
    }
    let lo = (best_idx as f64 - 1.0).max(0.0) * step;
    let hi = ((best_idx + 1) as f64 * step).min(1.0 - step / 2.0);
    let (mut p, mut g) = kernel::golden_section_min(|p| chord_slope(wf, p), lo, hi, tol)?;

    // The minimiser is where the tangent from (1, 1) touches w; bisect that
    // condition when it brackets a sign change.
    let tangency = |p: f64| wf.derivative(p) * (1.0 - p) - (1.0 - wf.eval(p));
    let (a, b) = ((p - 4.0 * tol).max(lo.max(f64::MIN_POSITIVE)), (p + 4.0 * tol).min(hi));
    if a > 0.0 && b > a && tangency(a) > 0.0 && tangency(b) < 0.0 {
        let (mut a, mut b) = (a, b);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if tangency(mid) > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        p = 0.5 * (a + b);
        g = chord_slope(wf, p);
    }
    if best_idx == 0 && chord_slope(wf, 0.0) <= g + TIE {
        return Ok(0.0);
    }
    Ok(p)
}

/// `p*` for an agent; explicit-weights agents carry no weighting function.
pub fn pstar_for_agent(agent: &Agent, tol: f64) -> Result<f64> {
    match agent.weighting() {
        Some(wf) => pstar(wf, tol),
        None => Err(Error::ExplicitWeights("pstar")),
    }
}

/// First rank (1-based) from which an optimal lottery is flat:
/// `l* = min { l : (l - 1) / k >= p* }`.
pub fn lstar(p_star: f64, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let kf = k as f64;
    if p_star > (kf - 1.0) / kf {
        return Err(Error::StructureUndefined { p_star, k });
    }
    Ok((1..=k).find(|&l| (l as f64 - 1.0) / kf >= p_star).unwrap_or(k))
}

/// Minimum concave majorant of a weighting function, reconstructed from `p*`.
#[derive(Debug, Clone, Copy)]
pub struct ConcaveEnvelope {
    weighting: WeightingFunction,
    p_star: f64,
    w_at_p_star: f64,
}

impl ConcaveEnvelope {
    pub fn new(weighting: WeightingFunction, tol: f64) -> Result<Self> {
        let p_star = pstar(&weighting, tol)?;
        Ok(Self::from_pstar(weighting, p_star))
    }

    pub fn from_pstar(weighting: WeightingFunction, p_star: f64) -> Self {
        ConcaveEnvelope { weighting, p_star, w_at_p_star: weighting.eval(p_star) }
    }

    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    pub fn eval(&self, p: f64) -> f64 {
        if p <= self.p_star {
            self.weighting.eval(p)
        } else {
            let slope = (1.0 - self.w_at_p_star) / (1.0 - self.p_star);
            self.w_at_p_star + (p - self.p_star) * slope
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ex2_player1() -> ValueFunction {
        ValueFunction::LogAffine { a: 1.0, b: 0.0, s: 0.05, c: 3.0 }
    }

    fn ex2_player2() -> ValueFunction {
        ValueFunction::LogAffine { a: 0.4, b: 0.6, s: 0.05, c: 3.0 }
    }

    #[test]
    fn value_eval_closed_forms() {
        let e = value_eval(&ex2_player1(), 1.95).unwrap();
        assert_abs_diff_eq!(e.value, 2f64.ln() + 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.derivative, 0.5, epsilon = 1e-12);
        assert_eq!(e.asymptotic_slope, 0.0);

        let e = value_eval(&ValueFunction::Linear, 7.0).unwrap();
        assert_eq!((e.value, e.derivative, e.asymptotic_slope), (7.0, 1.0, 1.0));

        let e = value_eval(&ValueFunction::Power { beta: 0.88 }, 1.0).unwrap();
        assert_abs_diff_eq!(e.value, 1.0);
        assert_abs_diff_eq!(e.derivative, 0.88, epsilon = 1e-12);
        assert_eq!(e.asymptotic_slope, 0.0);

        assert_eq!(ex2_player2().asymptotic_slope(), 0.6);
        assert!(value_eval(&ValueFunction::Linear, -1.0).is_err());
    }

    #[test]
    fn power_derivative_is_clamped_at_zero() {
        let vf = ValueFunction::Power { beta: 0.5 };
        assert_eq!(vf.derivative(0.0), 1.0 / DERIV_EPS);
        assert!(vf.derivative(1e-300).is_finite());
    }

    #[test]
    fn kt_matches_plot_points() {
        let wf = WeightingFunction::Kt { gamma: 0.61 };
        assert_abs_diff_eq!(weight_eval(&wf, 0.5).unwrap(), 0.4206, epsilon = 5e-4);
        assert_abs_diff_eq!(weight_eval(&wf, 0.1).unwrap(), 0.1863, epsilon = 5e-4);
        assert_eq!(weight_eval(&wf, 0.0).unwrap(), 0.0);
        assert_eq!(weight_eval(&wf, 1.0).unwrap(), 1.0);
        assert_eq!(weight_eval(&WeightingFunction::Identity, 0.3).unwrap(), 0.3);
        assert!(weight_eval(&wf, 1.5).is_err());
    }

    #[test]
    fn kt_derivative_matches_finite_differences() {
        let wf = WeightingFunction::Kt { gamma: 0.61 };
        for &p in &[0.05, 0.2, 0.5, 0.8, 0.95] {
            let eps = 1e-6;
            let fd = (wf.eval(p + eps) - wf.eval(p - eps)) / (2.0 * eps);
            assert_abs_diff_eq!(wf.derivative(p), fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn decision_weights_examples() {
        let h = decision_weights(&WeightingFunction::Identity, 4).unwrap();
        for x in &h {
            assert_abs_diff_eq!(*x, 0.25, epsilon = 1e-15);
        }
        let h = decision_weights(&WeightingFunction::Kt { gamma: 0.61 }, 10).unwrap();
        assert_abs_diff_eq!(h[0], 0.1863, epsilon = 5e-4);
        assert_abs_diff_eq!(h[9], 1.0 - 0.7117, epsilon = 5e-4);
        assert!(h.iter().all(|x| *x > 0.0));
        assert_abs_diff_eq!(h.iter().sum::<f64>(), 1.0, epsilon = 4.0 * f64::EPSILON);
        assert!(decision_weights(&WeightingFunction::Identity, 0).is_err());
    }

    #[test]
    fn cpt_value_examples() {
        let eut = Agent::new(ValueFunction::Linear, WeightingFunction::Identity);
        assert_abs_diff_eq!(cpt_value(&eut, &[(0.5, 2.0), (0.5, 0.0)]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            cpt_value(&eut, &[(1.0, 5.0)]).unwrap(),
            cpt_value(&eut, &[(0.5, 5.0), (0.5, 5.0)]).unwrap(),
            epsilon = 1e-15
        );

        let kt = Agent::new(ValueFunction::Power { beta: 0.88 }, WeightingFunction::Kt { gamma: 0.61 });
        let v = cpt_value(&kt, &[(0.1, 9.7871), (0.9, 0.2129 / 9.0)]).unwrap();
        assert_abs_diff_eq!(v, 1.41690, epsilon = 5e-4);

        assert!(matches!(cpt_value(&eut, &[(0.5, 1.0), (0.4, 0.0)]), Err(Error::ProbabilitiesNotNormalized(_))));
    }

    #[test]
    fn cpt_value_explicit_weights_uniform_only() {
        let agent = Agent::with_explicit_weights(ex2_player1(), vec![1.0 / 3.0, 2.0 / 3.0]);
        let v = cpt_value(&agent, &[(0.5, 0.95), (0.5, 1.95)]).unwrap();
        assert_abs_diff_eq!(v, 3.23105, epsilon = 1e-4);
        assert!(matches!(cpt_value(&agent, &[(0.3, 0.95), (0.7, 1.95)]), Err(Error::ExplicitWeights(_))));
    }

    #[test]
    fn cpt_value_uniform_examples() {
        let z = [1.95, 0.95];
        let v1 = cpt_value_uniform(&[1.0 / 3.0, 2.0 / 3.0], &ex2_player1(), &z).unwrap();
        let v2 = cpt_value_uniform(&[5.0 / 6.0, 1.0 / 6.0], &ex2_player2(), &z).unwrap();
        assert_abs_diff_eq!(v1, 3.23105, epsilon = 1e-4);
        assert_abs_diff_eq!(v2, 4.33105, epsilon = 1e-4);
        assert_abs_diff_eq!(v1 + v2, 7.5621, epsilon = 1e-4);

        let h = decision_weights(&WeightingFunction::Kt { gamma: 0.61 }, 5).unwrap();
        let vf = ValueFunction::Power { beta: 0.7 };
        assert_abs_diff_eq!(cpt_value_uniform(&h, &vf, &[2.0; 5]).unwrap(), vf.value(2.0), epsilon = 1e-14);
        assert!(cpt_value_uniform(&h, &vf, &[1.0, 2.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn pstar_closed_form_cases() {
        assert_eq!(pstar(&WeightingFunction::Identity, 1e-8).unwrap(), 0.0);
        assert_eq!(pstar(&WeightingFunction::PowerConvex { a: 2.0 }, 1e-8).unwrap(), 0.0);
        let p = pstar(&WeightingFunction::Kt { gamma: 0.61 }, 1e-8).unwrap();
        assert!(p > 0.0 && p < 0.4, "p* = {p}");
        assert!(matches!(pstar(&WeightingFunction::Kt { gamma: 0.1 }, 1e-8), Err(Error::UnsupportedFamily(_))));
        let explicit = Agent::with_explicit_weights(ValueFunction::Linear, vec![0.5, 0.5]);
        assert!(matches!(pstar_for_agent(&explicit, 1e-8), Err(Error::ExplicitWeights(_))));
    }

    #[test]
    fn lstar_examples() {
        assert_eq!(lstar(0.0, 7).unwrap(), 1);
        assert_eq!(lstar(0.35, 10).unwrap(), 5);
        assert_eq!(lstar(0.4, 10).unwrap(), 5);
        assert!(matches!(lstar(0.9, 2), Err(Error::StructureUndefined { .. })));
    }

    #[test]
    fn agent_spec_json_shapes() {
        let a: Agent = serde_json::from_str(
            r#"{"value":{"family":"power","params":{"beta":0.88}},"weights":{"family":"kt","params":{"gamma":0.61}}}"#,
        )
        .unwrap();
        assert_eq!(a, Agent::new(ValueFunction::Power { beta: 0.88 }, WeightingFunction::Kt { gamma: 0.61 }));
        let b: Agent =
            serde_json::from_str(r#"{"value":{"family":"linear"},"weights":{"explicit_h":[0.9,0.1]}}"#).unwrap();
        assert_eq!(b.weights, Weights::Explicit { explicit_h: vec![0.9, 0.1] });
        let c: Agent =
            serde_json::from_str(r#"{"value":{"family":"linear"},"weights":{"family":"identity"}}"#).unwrap();
        assert_eq!(c.weighting(), Some(&WeightingFunction::Identity));
        let round = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<Agent>(&round).unwrap(), a);
    }
}
