//! Steady-state follower error `R(S) = ½·Tr(L_ff⁻¹)` and quantities derived from it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{LeaderSet, NoisyGraph};

/// Relative threshold below which a greedy gain counts as zero (scaled by `R_max`).
pub const GAIN_TOLERANCE: f64 = 1e-12;

/// Total and per-follower steady-state mean-square error for one leader set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub total: f64,
    /// `R(S, u) = ½ (L_ff⁻¹)_uu`, keyed by original node id.
    pub per_node: BTreeMap<usize, f64>,
    pub leaders: LeaderSet,
}

impl ErrorReport {
    /// `node,error` rows followed by a `total,<value>` footer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,error\n");
        for (u, e) in &self.per_node {
            out.push_str(&format!("{u},{e}\n"));
        }
        out.push_str(&format!("total,{}\n", self.total));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub fn system_error(g: &NoisyGraph, s: &LeaderSet) -> Result<ErrorReport> {
    let gs = g.ground(s)?;
    let diag = gs.inverse_diagonal();
    let per_node: BTreeMap<usize, f64> = gs
        .followers()
        .iter()
        .zip(diag.iter())
        .map(|(&u, &d)| (u, 0.5 * d))
        .collect();
    let total = 0.5 * diag.iter().sum::<f64>();
    Ok(ErrorReport {
        total,
        per_node,
        leaders: s.clone(),
    })
}

/// `R(S)` for a leader slice, without building a report.
pub fn error_value(g: &NoisyGraph, leaders: &[usize]) -> Result<f64> {
    let s = LeaderSet::new(leaders.to_vec(), g.node_count())?;
    Ok(0.5 * g.ground(&s)?.trace_inverse())
}

/// `R(S)` on a graph that may be disconnected; `None` when some follower has
/// no path to a leader (the error is unbounded).
pub fn error_if_reached(g: &NoisyGraph, leaders: &[usize]) -> Option<f64> {
    if leaders.is_empty() || !g.leaders_reach_all(leaders) {
        return None;
    }
    error_value(g, leaders).ok()
}

/// `R(S) − R(S ∪ {v})`, evaluated with two independent factorizations.
pub fn marginal_gain(g: &NoisyGraph, s: &LeaderSet, v: usize) -> Result<f64> {
    if v >= g.node_count() {
        return Err(Error::NodeOutOfRange {
            node: v,
            n: g.node_count(),
        });
    }
    if s.contains(v) {
        return Err(Error::AlreadyLeader(v));
    }
    let before = 0.5 * g.ground(s)?.trace_inverse();
    let after = 0.5 * g.ground(&s.with(v)?)?.trace_inverse();
    Ok(before - after)
}

/// Bound on the grounded trace after random link failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientBound {
    /// `Tr(L_ff⁻¹) + (n − |S|)·δ / λ_min(L_ff)²` with `δ = 2·p·d·X`.
    pub trace_bound: f64,
    /// `trace_bound / 2`, directly comparable with `R(S)`.
    pub error_bound: f64,
    pub delta: f64,
    pub lambda_min: f64,
}

/// First-order bound on `Tr(L̃_ff⁻¹)` when each link fails independently with
/// probability `p`. `d` is the maximum degree and `X` the largest conductance.
pub fn gradient_bound(g: &NoisyGraph, s: &LeaderSet, p: f64) -> Result<GradientBound> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("p", format!("{p} is not a probability")));
    }
    let gs = g.ground(s)?;
    let trace = gs.trace_inverse();
    let nf = gs.followers().len();
    if nf == 0 {
        return Ok(GradientBound {
            trace_bound: 0.0,
            error_bound: 0.0,
            delta: 0.0,
            lambda_min: 0.0,
        });
    }
    let delta = 2.0 * p * g.max_degree() as f64 * g.max_weight();
    let lambda_min = gs.lambda_min();
    let trace_bound = trace + nf as f64 * delta / (lambda_min * lambda_min);
    Ok(GradientBound {
        trace_bound,
        error_bound: 0.5 * trace_bound,
        delta,
        lambda_min,
    })
}

/// Per-node single-leader errors `R({v})`.
pub fn singleton_errors(g: &NoisyGraph) -> Vec<f64> {
    use rayon::prelude::*;
    (0..g.node_count())
        .into_par_iter()
        .map(|v| error_value(g, &[v]).expect("connected graph grounds at any node"))
        .collect()
}

/// `R_max = max_v R({v})`.
pub fn max_singleton_error(g: &NoisyGraph) -> f64 {
    singleton_errors(g).into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> NoisyGraph {
        NoisyGraph::new(n, (0..n - 1).map(|i| (i, i + 1, 1.0))).unwrap()
    }

    fn triangle() -> NoisyGraph {
        NoisyGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    fn set(v: &[usize], n: usize) -> LeaderSet {
        LeaderSet::new(v.to_vec(), n).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn system_error_examples() {
        assert!(close(system_error(&path(2), &set(&[1], 2)).unwrap().total, 0.5));

        let r = system_error(&triangle(), &set(&[0], 3)).unwrap();
        assert!(close(r.total, 2.0 / 3.0));
        assert!(close(r.per_node[&1], 1.0 / 3.0));
        assert!(close(r.per_node[&2], 1.0 / 3.0));

        let r = system_error(&triangle(), &LeaderSet::all(3)).unwrap();
        assert_eq!(r.total, 0.0);
        assert!(r.per_node.is_empty());

        assert_eq!(
            system_error(&triangle(), &LeaderSet::empty()).unwrap_err(),
            Error::EmptyLeaderSet
        );
    }

    #[test]
    fn marginal_gain_examples() {
        assert!(close(marginal_gain(&path(3), &set(&[1], 3), 0).unwrap(), 0.5));
        assert!(close(
            marginal_gain(&triangle(), &set(&[0], 3), 1).unwrap(),
            5.0 / 12.0
        ));
        // completing the leader set removes the entire error
        let g = path(3);
        let s = set(&[0, 1], 3);
        let r = system_error(&g, &s).unwrap().total;
        assert!(close(marginal_gain(&g, &s, 2).unwrap(), r));
        assert_eq!(
            marginal_gain(&g, &s, 1).unwrap_err(),
            Error::AlreadyLeader(1)
        );
    }

    #[test]
    fn gradient_bound_examples() {
        let g = path(2);
        let s = set(&[1], 2);
        let b = gradient_bound(&g, &s, 0.0).unwrap();
        assert!(close(b.trace_bound, 1.0));
        let b = gradient_bound(&g, &s, 0.1).unwrap();
        assert!(close(b.trace_bound, 1.2));
        assert!(close(b.error_bound, 0.6));
        let b1 = gradient_bound(&triangle(), &set(&[0], 3), 1.0).unwrap();
        assert!(b1.trace_bound >= 4.0 / 3.0);
        assert!(gradient_bound(&g, &s, 1.5).is_err());
    }

    #[test]
    fn max_singleton_examples() {
        assert!(close(max_singleton_error(&path(2)), 0.5));
        assert!(close(max_singleton_error(&path(3)), 1.5));
        assert!(close(max_singleton_error(&triangle()), 2.0 / 3.0));
    }

    #[test]
    fn csv_has_footer() {
        let r = system_error(&triangle(), &set(&[0], 3)).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("node,error\n1,"));
        assert!(csv.trim_end().ends_with(&format!("total,{}", r.total)));
        let back: ErrorReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn unreached_followers_have_no_error() {
        let g = NoisyGraph::new_possibly_disconnected(3, [(0, 1, 1.0)]).unwrap();
        assert_eq!(error_if_reached(&g, &[0]), None);
        assert!(close(error_if_reached(&g, &[0, 2]).unwrap(), 0.5));
    }
}
