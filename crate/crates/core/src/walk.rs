//! Random-walk view of the per-follower error.
//!
//! A walk on the graph moves from `i` to neighbor `j` with probability
//! `P(i, j) = (1/ν_ij) / D_i`. The commute time `κ(S, u)` is the expected
//! number of steps for a walk from follower `u` to reach the leader set and
//! come back to `u`. It satisfies
//!
//! ```text
//! κ(S, u) = 2·(Σ_{(s,t) ∈ E} 1/ν_st) · (L_ff⁻¹)_uu = 4·W·R(S, u)
//! ```
//!
//! with `W` the total conductance. This module computes both sides
//! independently: the closed form from the grounded Laplacian, and a Monte
//! Carlo estimate that only simulates walks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LeaderSet, NoisyGraph};
use crate::rng::substream;

/// Per-walk step cap.
pub const MAX_WALK_STEPS: u64 = 100_000_000;

/// Row-stochastic transition matrix `P(i, j) = ν_ij⁻¹ / D_i`.
pub fn transition_matrix(g: &NoisyGraph) -> DMatrix<f64> {
    let n = g.node_count();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let d = g.weighted_degree(i);
        for &(j, w) in g.neighbors(i) {
            p[(i, j)] = w / d;
        }
    }
    p
}

/// Probability, per start node, that the walk visits `target` before any leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingProbabilities {
    /// Indexed by node id.
    pub v_star: Vec<f64>,
    pub target: usize,
    pub absorbing: LeaderSet,
}

impl HittingProbabilities {
    /// Largest violation of `v_i = Σ_j P(i, j) v_j` over interior nodes.
    pub fn harmonic_residual(&self, g: &NoisyGraph) -> f64 {
        (0..g.node_count())
            .filter(|&i| i != self.target && !self.absorbing.contains(i))
            .map(|i| {
                let d = g.weighted_degree(i);
                let avg: f64 = g
                    .neighbors(i)
                    .iter()
                    .map(|&(j, w)| w / d * self.v_star[j])
                    .sum();
                (self.v_star[i] - avg).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn check_target(g: &NoisyGraph, s: &LeaderSet, u: usize) -> Result<()> {
    if u >= g.node_count() {
        return Err(Error::NodeOutOfRange {
            node: u,
            n: g.node_count(),
        });
    }
    if s.is_empty() {
        return Err(Error::EmptyLeaderSet);
    }
    if s.contains(u) {
        return Err(Error::LeaderTarget(u));
    }
    Ok(())
}

/// Solves the Dirichlet problem `v(u) = 1`, `v(S) = 0`, harmonic elsewhere.
pub fn hitting_probabilities(g: &NoisyGraph, s: &LeaderSet, u: usize) -> Result<HittingProbabilities> {
    check_target(g, s, u)?;
    let boundary = s.with(u)?;
    let gs = g.ground(&boundary)?;
    let mut v_star = vec![0.0; g.node_count()];
    v_star[u] = 1.0;
    if !gs.is_all_leaders() {
        // the target is the last boundary column
        let col = boundary.len() - 1;
        let rhs = DVector::from_iterator(
            gs.followers().len(),
            (0..gs.followers().len()).map(|r| -gs.lfl()[(r, col)]),
        );
        let interior = gs.solve(&rhs);
        for (r, &i) in gs.followers().iter().enumerate() {
            v_star[i] = interior[r];
        }
    }
    Ok(HittingProbabilities {
        v_star,
        target: u,
        absorbing: s.clone(),
    })
}

/// Closed form `2·W·(L_ff⁻¹)_uu`.
pub fn commute_time_exact(g: &NoisyGraph, s: &LeaderSet, u: usize) -> Result<f64> {
    check_target(g, s, u)?;
    let gs = g.ground(s)?;
    let r = gs.row_of(u).expect("target is a follower");
    let diag = gs.inverse_diagonal();
    Ok(2.0 * g.total_weight() * diag[r])
}

/// Commute time through the escape probability: `(L_ff⁻¹)_uu` equals
/// `1 / Σ_t ν_ut⁻¹ (1 − v_t)` with `v` the hitting probabilities of `u`.
pub fn commute_time_via_escape(g: &NoisyGraph, s: &LeaderSet, u: usize) -> Result<f64> {
    let h = hitting_probabilities(g, s, u)?;
    let escape: f64 = g
        .neighbors(u)
        .iter()
        .map(|&(t, w)| w * (1.0 - h.v_star[t]))
        .sum();
    Ok(2.0 * g.total_weight() / escape)
}

/// Monte Carlo commute-time estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub walks: u64,
    pub u: usize,
    pub leaders: LeaderSet,
}

/// Neighbor lists with cumulative transition probabilities.
struct Sampler {
    next: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(g: &NoisyGraph) -> Self {
        let n = g.node_count();
        let mut next = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        for i in 0..n {
            let d = g.weighted_degree(i);
            let mut acc = 0.0;
            let mut ids = Vec::new();
            let mut cum = Vec::new();
            for &(j, w) in g.neighbors(i) {
                acc += w / d;
                ids.push(j);
                cum.push(acc);
            }
            if let Some(last) = cum.last_mut() {
                *last = 1.0;
            }
            next.push(ids);
            cumulative.push(cum);
        }
        Sampler { next, cumulative }
    }

    #[inline]
    fn step<R: Rng>(&self, i: usize, rng: &mut R) -> usize {
        let x: f64 = rng.random();
        let cum = &self.cumulative[i];
        let k = cum.iter().position(|&c| x < c).unwrap_or(cum.len() - 1);
        self.next[i][k]
    }
}

fn one_round_trip<R: Rng>(
    sampler: &Sampler,
    is_leader: &[bool],
    u: usize,
    rng: &mut R,
) -> Result<u64> {
    let mut steps = 0u64;
    let mut at = u;
    while !is_leader[at] {
        at = sampler.step(at, rng);
        steps += 1;
        if steps > MAX_WALK_STEPS {
            return Err(Error::WalkTimeout(MAX_WALK_STEPS));
        }
    }
    while at != u {
        at = sampler.step(at, rng);
        steps += 1;
        if steps > MAX_WALK_STEPS {
            return Err(Error::WalkTimeout(MAX_WALK_STEPS));
        }
    }
    Ok(steps)
}

/// Mean round-trip length `u → S → u` over `walks` independent walks.
///
/// Walk `w` draws from stream `w` of `seed`; step counts are summed exactly,
/// so the estimate is identical under any thread count.
pub fn commute_time_sampled(
    g: &NoisyGraph,
    s: &LeaderSet,
    u: usize,
    walks: u64,
    seed: u64,
) -> Result<WalkEstimate> {
    check_target(g, s, u)?;
    if walks == 0 {
        return Err(crate::error::invalid("walks", "must be at least 1"));
    }
    let sampler = Sampler::new(g);
    let is_leader = s.mask(g.node_count());
    let (sum, sum_sq) = (0..walks)
        .into_par_iter()
        .map(|w| {
            let mut rng = substream(seed, w);
            one_round_trip(&sampler, &is_leader, u, &mut rng).map(|t| (t as u128, (t as u128) * (t as u128)))
        })
        .try_reduce(|| (0u128, 0u128), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;

    let nw = walks as f64;
    let mean = sum as f64 / nw;
    let stderr = if walks > 1 {
        // Σ(x − x̄)² = Σx² − (Σx)²/N, exact in integers up to the final division
        let centered = sum_sq as f64 - (sum as f64) * (sum as f64) / nw;
        (centered.max(0.0) / (nw - 1.0) / nw).sqrt()
    } else {
        0.0
    };
    Ok(WalkEstimate {
        mean,
        stderr,
        walks,
        u,
        leaders: s.clone(),
    })
}
