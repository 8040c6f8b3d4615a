//! Reduction from PARTITION: a star of private links plus one shared link
//! whose capacity is half the total, so the system value reaches the
//! threshold exactly when the integers split evenly.

use serde::{Deserialize, Serialize};

use crate::cpt::{Agent, ValueFunction};
use crate::error::{Error, Result};
use crate::model::{LotteryScheme, NetworkInstance};
use crate::permsearch::{solve_sys_exhaustive, SearchOptions};

/// Slack below the threshold still accepted as reaching it.
pub const DECISION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionGadget {
    pub instance: NetworkInstance,
    #[serde(rename = "T")]
    pub threshold: f64,
    pub integers: Vec<u64>,
    pub epsilon: f64,
}

/// Player `i` owns link `i` (capacity `c_i`) and shares link `n` (capacity
/// `sum c / 2`); linear value, two outcomes weighted `(1 - eps, eps)`.
pub fn partition_gadget(integers: &[u64], epsilon: f64) -> Result<PartitionGadget> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    if integers.is_empty() || integers.contains(&0) {
        return Err(Error::InvalidParameter("integers must be positive and non-empty".into()));
    }
    let n = integers.len();
    let total: u64 = integers.iter().sum();
    let mut capacities: Vec<f64> = integers.iter().map(|&c| c as f64).collect();
    capacities.push(total as f64 / 2.0);
    let routes = (0..n).map(|i| vec![i, n]).collect();
    let agent = Agent::with_explicit_weights(ValueFunction::Linear, vec![1.0 - epsilon, epsilon]);
    let instance = NetworkInstance::new(capacities, routes, 2, vec![agent; n])?;
    Ok(PartitionGadget {
        instance,
        threshold: (1.0 - epsilon) * total as f64,
        integers: integers.to_vec(),
        epsilon,
    })
}

/// The scheme that gives every player its own capacity at its best outcome,
/// with players in `subset` peaking at outcome 0 and the rest at outcome 1.
pub fn witness_scheme(gadget: &PartitionGadget, subset: &[bool]) -> Result<LotteryScheme> {
    let n = gadget.integers.len();
    if subset.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: subset.len() });
    }
    let z = gadget.integers.iter().map(|&c| vec![c as f64, 0.0]).collect();
    let pi = subset.iter().map(|&s| if s { vec![0, 1] } else { vec![1, 0] }).collect();
    Ok(LotteryScheme { z, pi })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDecision {
    pub instance: NetworkInstance,
    #[serde(rename = "T")]
    pub threshold: f64,
    #[serde(rename = "W_ps")]
    pub w_ps: f64,
    pub partition_exists: bool,
}

/// Decides PARTITION by solving the gadget's system problem over all profiles.
pub fn decide_partition(integers: &[u64], epsilon: f64, opts: &SearchOptions) -> Result<PartitionDecision> {
    let gadget = partition_gadget(integers, epsilon)?;
    let sol = solve_sys_exhaustive(&gadget.instance, opts)?;
    let w_ps = sol.report.value;
    Ok(PartitionDecision {
        partition_exists: w_ps >= gadget.threshold - DECISION_TOL,
        threshold: gadget.threshold,
        w_ps,
        instance: gadget.instance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::is_feasible_scheme;
    use crate::solver_fix::system_value;

    #[test]
    fn rejects_bad_parameters() {
        assert!(partition_gadget(&[1, 2], 0.5).is_err());
        assert!(partition_gadget(&[1, 2], 0.0).is_err());
        assert!(partition_gadget(&[0, 2], 0.1).is_err());
        assert!(partition_gadget(&[], 0.1).is_err());
    }

    #[test]
    fn gadget_shape() {
        let g = partition_gadget(&[1, 2, 3], 0.1).unwrap();
        assert_eq!(g.instance.capacities, vec![1.0, 2.0, 3.0, 3.0]);
        assert_eq!(g.instance.routes[2], vec![2, 3]);
        assert!((g.threshold - 5.4).abs() < 1e-12);
    }

    #[test]
    fn witness_attains_threshold() {
        let g = partition_gadget(&[1, 2, 3], 0.1).unwrap();
        let s = witness_scheme(&g, &[true, true, false]).unwrap();
        assert!(is_feasible_scheme(&g.instance, &s).unwrap());
        let h = g.instance.decision_weights().unwrap();
        assert!((system_value(&g.instance, &h, &s.z) - g.threshold).abs() < 1e-12);
        let unbalanced = witness_scheme(&g, &[true, false, false]).unwrap();
        assert!(!is_feasible_scheme(&g.instance, &unbalanced).unwrap());
    }

    #[test]
    fn decides_small_sets() {
        let opts = SearchOptions::default();
        assert!(decide_partition(&[1, 1], 0.1, &opts).unwrap().partition_exists);
        assert!(!decide_partition(&[1, 1, 1], 0.1, &opts).unwrap().partition_exists);
    }
}
