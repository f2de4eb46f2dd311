//! Greedy minimization of nonincreasing supermodular set functions.
//!
//! The first pick is the best singleton (the empty set has unbounded error).
//! Every later pick maximizes `F(S) − F(S ∪ {v})`, ties going to the lowest
//! node id. [`Strategy::Lazy`] keeps stale gains in a max-heap; under
//! supermodularity a stale gain is an upper bound on the fresh one, so only
//! candidates whose bound can still beat the best fresh gain are re-evaluated.
//! Bounds are inflated by a small relative margin before the comparison, which
//! makes the lazy pick identical to the naive pick rather than merely close.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::metric::GAIN_TOLERANCE;
use crate::objective::SetObjective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    Naive,
    #[default]
    Lazy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// At most this many picks.
    Budget(usize),
    /// Until the objective is at or below the threshold.
    Threshold(f64),
}

/// Outcome of one greedy run.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRun {
    pub picks: Vec<usize>,
    /// `F` after each pick.
    pub values: Vec<f64>,
    /// Gain realized by each pick; the first entry is `+∞`.
    pub gains: Vec<f64>,
    /// Objective of every singleton, indexed by node id.
    pub singleton_values: Vec<f64>,
    /// Stopped because no candidate improved the objective.
    pub terminated_early: bool,
}

impl GreedyRun {
    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("at least one pick")
    }

    /// `max_v F({v})`.
    pub fn max_singleton(&self) -> f64 {
        self.singleton_values.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
struct Bound {
    gain: f64,
    node: usize,
}

impl PartialEq for Bound {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Bound {}
impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Bound {
    // larger gain first, then lower id
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.node.cmp(&self.node))
    }
}

fn inflate(gain: f64) -> f64 {
    gain + 1e-9 * gain.abs() + 1e-300
}

/// Runs greedy with an optional predicate that ends the run once satisfied.
///
/// `done(ctx)` is consulted after every pick in addition to `stop`.
pub fn run<O, F>(obj: &O, stop: Stop, strategy: Strategy, done: F) -> GreedyRun
where
    O: SetObjective,
    F: Fn(&O::Context) -> bool,
{
    let n = obj.ground_size();
    let budget = match stop {
        Stop::Budget(k) => k.min(n),
        Stop::Threshold(_) => n,
    };
    let reached = |value: f64, ctx: &O::Context| match stop {
        Stop::Threshold(alpha) => value <= alpha || done(ctx),
        Stop::Budget(_) => done(ctx),
    };

    let singleton_values: Vec<f64> = (0..n).into_par_iter().map(|v| obj.value(&[v])).collect();
    let first = (0..n)
        .min_by(|&a, &b| singleton_values[a].total_cmp(&singleton_values[b]).then(a.cmp(&b)))
        .expect("nonempty ground set");
    let scale = singleton_values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let tolerance = GAIN_TOLERANCE * scale;

    let mut picks = vec![first];
    let mut ctx = obj.prepare(&picks);
    let mut values = vec![obj.context_value(&ctx)];
    let mut gains = vec![f64::INFINITY];
    let mut in_set = vec![false; n];
    in_set[first] = true;
    let mut terminated_early = false;
    let mut heap: Option<BinaryHeap<Bound>> = None;

    while picks.len() < budget && !reached(*values.last().unwrap(), &ctx) {
        let best = match strategy {
            Strategy::Naive => naive_step(obj, &ctx, &picks, &in_set),
            Strategy::Lazy => lazy_step(obj, &ctx, &picks, &in_set, &mut heap),
        };
        let Some(best) = best else { break };
        if !(best.gain > tolerance) {
            terminated_early = true;
            break;
        }
        picks.push(best.node);
        in_set[best.node] = true;
        ctx = obj.prepare(&picks);
        values.push(obj.context_value(&ctx));
        gains.push(best.gain);
    }

    GreedyRun {
        picks,
        values,
        gains,
        singleton_values,
        terminated_early,
    }
}

fn naive_step<O: SetObjective>(
    obj: &O,
    ctx: &O::Context,
    set: &[usize],
    in_set: &[bool],
) -> Option<Bound> {
    let n = obj.ground_size();
    (0..n)
        .into_par_iter()
        .filter(|&v| !in_set[v])
        .map(|v| Bound {
            gain: obj.gain(ctx, set, v),
            node: v,
        })
        .max()
}

fn lazy_step<O: SetObjective>(
    obj: &O,
    ctx: &O::Context,
    set: &[usize],
    in_set: &[bool],
    heap: &mut Option<BinaryHeap<Bound>>,
) -> Option<Bound> {
    let Some(h) = heap.as_mut() else {
        // no bounds yet: evaluate everything once
        let n = obj.ground_size();
        let fresh: Vec<Bound> = (0..n)
            .into_par_iter()
            .filter(|&v| !in_set[v])
            .map(|v| Bound {
                gain: obj.gain(ctx, set, v),
                node: v,
            })
            .collect();
        let best = fresh.iter().copied().max();
        *heap = Some(
            fresh
                .into_iter()
                .filter(|b| Some(b.node) != best.map(|x| x.node))
                .collect(),
        );
        return best;
    };

    let mut best: Option<Bound> = None;
    let mut refreshed = Vec::new();
    while let Some(top) = h.peek().copied() {
        if let Some(b) = best {
            if inflate(top.gain) < b.gain {
                break;
            }
        }
        h.pop();
        let fresh = Bound {
            gain: obj.gain(ctx, set, top.node),
            node: top.node,
        };
        if best.is_none_or(|b| fresh > b) {
            if let Some(prev) = best {
                refreshed.push(prev);
            }
            best = Some(fresh);
        } else {
            refreshed.push(fresh);
        }
    }
    h.extend(refreshed);
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NoisyGraph;
    use crate::objective::ScenarioObjective;

    #[test]
    fn bound_order_prefers_low_id_on_ties() {
        let a = Bound { gain: 1.0, node: 3 };
        let b = Bound { gain: 1.0, node: 1 };
        assert!(b > a);
        assert!(Bound { gain: 2.0, node: 9 } > b);
    }

    #[test]
    fn lazy_matches_naive_on_small_graph() {
        let g = NoisyGraph::new(
            7,
            [
                (0, 1, 0.5),
                (1, 2, 2.0),
                (2, 3, 1.0),
                (3, 4, 0.3),
                (4, 5, 1.5),
                (5, 6, 0.7),
                (6, 0, 1.1),
                (1, 4, 0.9),
            ],
        )
        .unwrap();
        let obj = ScenarioObjective::single(&g);
        for k in 1..=7 {
            let a = run(&obj, Stop::Budget(k), Strategy::Naive, |_| false);
            let b = run(&obj, Stop::Budget(k), Strategy::Lazy, |_| false);
            assert_eq!(a, b);
        }
    }
}
