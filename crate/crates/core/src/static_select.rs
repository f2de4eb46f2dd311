//! Leader selection on a fixed topology.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LeaderSet, NoisyGraph};
use crate::greedy::{self, GreedyRun, Stop, Strategy};
use crate::objective::ScenarioObjective;

/// Leaders in pick order with the objective after every pick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub leaders: LeaderSet,
    pub error_trace: Vec<f64>,
    /// Size-ratio guarantee for threshold runs; `None` for budget runs, whose
    /// guarantee depends on the unknown optimum (see [`greedy_bound_k`]).
    pub bound: Option<f64>,
    pub terminated_early: bool,
    /// Largest singleton objective value, `R_max`.
    pub r_max: f64,
}

impl SelectionResult {
    pub(crate) fn from_run(run: GreedyRun, n: usize) -> Self {
        let r_max = run.max_singleton();
        SelectionResult {
            leaders: LeaderSet::new(run.picks, n).expect("greedy picks are distinct"),
            error_trace: run.values,
            bound: None,
            terminated_early: run.terminated_early,
            r_max,
        }
    }

    pub fn final_error(&self) -> f64 {
        *self.error_trace.last().expect("nonempty selection")
    }

    /// `step,leader,error` rows in pick order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,leader,error\n");
        for (step, (v, e)) in self.leaders.iter().zip(&self.error_trace).enumerate() {
            out.push_str(&format!("{},{v},{e}\n", step + 1));
        }
        out
    }
}

/// Greedy selection of at most `k` leaders minimizing `R(S)`.
pub fn select_static_k(g: &NoisyGraph, k: usize) -> Result<SelectionResult> {
    select_static_k_with(g, k, Strategy::Lazy)
}

pub fn select_static_k_with(g: &NoisyGraph, k: usize, strategy: Strategy) -> Result<SelectionResult> {
    let n = g.node_count();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let obj = ScenarioObjective::single(g);
    let run = greedy::run(&obj, Stop::Budget(k), strategy, |_| false);
    Ok(SelectionResult::from_run(run, n))
}

/// Smallest greedy leader set with `R(S) ≤ α`. Negative `α` is treated as 0.
pub fn select_static_alpha(g: &NoisyGraph, alpha: f64) -> SelectionResult {
    select_static_alpha_with(g, alpha, Strategy::Lazy)
}

pub fn select_static_alpha_with(g: &NoisyGraph, alpha: f64, strategy: Strategy) -> SelectionResult {
    let obj = ScenarioObjective::single(g);
    let run = greedy::run(&obj, Stop::Threshold(alpha.max(0.0)), strategy, |_| false);
    let mut result = SelectionResult::from_run(run, g.node_count());
    result.bound = Some(alpha_ratio_bound(&result.error_trace, result.r_max));
    result
}

/// `1 + log(R_max / R(S_{k−1}))` for a greedy trace of length `k`.
///
/// The error before the first pick is taken to be `R_max`, so a single pick
/// gives a ratio bound of 1.
pub fn alpha_ratio_bound(trace: &[f64], r_max: f64) -> f64 {
    let k = trace.len();
    let before_last = if k >= 2 { trace[k - 2] } else { r_max };
    1.0 + (r_max / before_last).ln()
}

/// Terms of the cardinality guarantee
/// `R(S_greedy) ≤ (1 − ((k−1)/k)^k)·R* + R_max/e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KBound {
    /// Multiplier of the optimum, `1 − ((k−1)/k)^k`.
    pub coefficient: f64,
    /// `R_max / e`.
    pub additive: f64,
    /// Right-hand side, when the optimum is supplied.
    pub value: Option<f64>,
}

impl KBound {
    pub fn at(&self, r_star: f64) -> f64 {
        self.coefficient * r_star + self.additive
    }
}

pub fn greedy_bound_k(result: &SelectionResult, k: usize, r_star: Option<f64>) -> KBound {
    let kf = k as f64;
    let coefficient = 1.0 - ((kf - 1.0) / kf).powf(kf);
    let additive = result.r_max / std::f64::consts::E;
    let mut b = KBound {
        coefficient,
        additive,
        value: None,
    };
    b.value = r_star.map(|r| b.at(r));
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{marginal_gain, max_singleton_error};

    fn path(n: usize) -> NoisyGraph {
        NoisyGraph::new(n, (0..n - 1).map(|i| (i, i + 1, 1.0))).unwrap()
    }

    fn triangle() -> NoisyGraph {
        NoisyGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn static_k_examples() {
        let r = select_static_k(&path(3), 1).unwrap();
        assert_eq!(r.leaders.as_slice(), &[1]);
        assert!(close(r.final_error(), 1.0));

        let r = select_static_k(&triangle(), 3).unwrap();
        assert_eq!(r.leaders.len(), 3);
        assert_eq!(r.final_error(), 0.0);

        let r = select_static_k(&triangle(), 1).unwrap();
        assert_eq!(r.leaders.as_slice(), &[0]);
        assert!(close(r.final_error(), 2.0 / 3.0));

        assert_eq!(
            select_static_k(&triangle(), 0).unwrap_err(),
            Error::InvalidK { k: 0, n: 3 }
        );
        assert!(select_static_k(&triangle(), 4).is_err());
    }

    #[test]
    fn static_alpha_examples() {
        let r = select_static_alpha(&path(3), 1.0);
        assert_eq!(r.leaders.as_slice(), &[1]);

        let r = select_static_alpha(&path(3), 0.0);
        assert_eq!(r.leaders.len(), 3);
        assert_eq!(r.final_error(), 0.0);

        let r = select_static_alpha(&path(3), 0.6);
        assert_eq!(r.leaders.as_slice(), &[1, 0]);
        assert!(close(r.final_error(), 0.5));

        // negative thresholds clamp to zero
        assert_eq!(select_static_alpha(&path(3), -1.0).leaders.len(), 3);
    }

    #[test]
    fn trace_gains_match_marginal_gain() {
        let g = NoisyGraph::new(
            6,
            [
                (0, 1, 0.4),
                (1, 2, 1.3),
                (2, 3, 0.8),
                (3, 4, 2.0),
                (4, 5, 0.6),
                (5, 0, 1.7),
                (2, 5, 0.9),
            ],
        )
        .unwrap();
        let r = select_static_k(&g, 6).unwrap();
        let picks = r.leaders.as_slice();
        for step in 1..picks.len() {
            let prefix = LeaderSet::new(picks[..step].to_vec(), 6).unwrap();
            let realized = r.error_trace[step - 1] - r.error_trace[step];
            let direct = marginal_gain(&g, &prefix, picks[step]).unwrap();
            assert!((realized - direct).abs() < 1e-12, "{realized} vs {direct}");
            assert!(r.error_trace[step] < r.error_trace[step - 1]);
        }
        assert!(close(r.r_max, max_singleton_error(&g)));
    }

    #[test]
    fn bound_examples() {
        let r = select_static_k(&triangle(), 1).unwrap();
        let b = greedy_bound_k(&r, 1, Some(2.0 / 3.0));
        assert_eq!(b.coefficient, 1.0);
        let expected = 2.0 / 3.0 + (2.0 / 3.0) / std::f64::consts::E;
        assert!(close(b.value.unwrap(), expected));
        assert!((b.value.unwrap() - 0.9119).abs() < 1e-4);

        let big = greedy_bound_k(&r, 100_000, None);
        assert!((big.coefficient - (1.0 - (-1.0f64).exp())).abs() < 1e-5);
        assert!(big.value.is_none());
    }

    #[test]
    fn single_pick_ratio_bound_is_one() {
        assert_eq!(alpha_ratio_bound(&[0.7], 1.5), 1.0);
        assert!((alpha_ratio_bound(&[1.0, 0.5], 1.5) - (1.0 + 1.5f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn csv_lists_picks() {
        let r = select_static_alpha(&path(3), 0.6);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("1,1,"));
        assert!(csv.contains("2,0,"));
    }
}
