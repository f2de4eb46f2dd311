//! Set functions over leader sets that the greedy engine can minimize.
//!
//! Every objective in this crate has the shape
//!
//! ```text
//! F(S) = Σ_g a_g · max{ E_g(S), c }
//! ```
//!
//! where each group `g` is a weighted family of topologies and `E_g(S)` is the
//! weighted mean of `R(S | L)` over the members in which every follower can
//! reach a leader. A static graph is one group with one member; an ensemble
//! average is `M` single-member groups; a Monte Carlo failure model is one
//! group with `M` sampled members; the truncated switching objective adds the
//! constant `c`.
//!
//! Marginal gains reuse one inverse per member: removing follower `v` from
//! `L_ff` lowers the trace of the inverse by `‖(L_ff⁻¹)_{·v}‖² / (L_ff⁻¹)_vv`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{LeaderSet, NoisyGraph};

/// A set function minimized by the greedy engine.
///
/// `value` and `gain` must be evaluated through the same arithmetic by every
/// caller so that different search strategies see bitwise-identical numbers.
pub trait SetObjective: Sync {
    type Context: Sync;

    fn ground_size(&self) -> usize;

    /// State at a nonempty set `S`, from which gains are read.
    fn prepare(&self, set: &[usize]) -> Self::Context;

    /// `F(S)` for the set the context was prepared at.
    fn context_value(&self, ctx: &Self::Context) -> f64;

    /// `F(S) − F(S ∪ {v})` for `v ∉ S`.
    fn gain(&self, ctx: &Self::Context, set: &[usize], v: usize) -> f64;

    fn value(&self, set: &[usize]) -> f64 {
        self.context_value(&self.prepare(set))
    }
}

/// One topology inside a group, with its (unnormalized) probability weight.
#[derive(Debug, Clone)]
struct Member {
    graph: NoisyGraph,
    labels: Vec<usize>,
    components: usize,
    weight: f64,
}

#[derive(Debug, Clone)]
struct Group {
    members: Vec<Member>,
    coeff: f64,
}

/// General grouped, truncated, conditional-mean objective.
#[derive(Debug, Clone)]
pub struct ScenarioObjective {
    n: usize,
    groups: Vec<Group>,
    floor: f64,
}

enum MemberState {
    Reached {
        inv: DMatrix<f64>,
        row_of: Vec<Option<usize>>,
        /// `R(S | L)`
        value: f64,
    },
    /// Some follower has no path to a leader. `lone` is the single
    /// leaderless component when there is exactly one.
    Unreached { lone: Option<usize> },
}

pub struct ScenarioContext {
    states: Vec<Vec<MemberState>>,
    value: f64,
    excess: f64,
}

impl ScenarioContext {
    /// `F(S) − c·Σ a_g`; zero exactly when every group mean is at or below the floor.
    pub fn excess(&self) -> f64 {
        self.excess
    }
}

impl ScenarioObjective {
    /// Builds from groups of `(graph, weight)` pairs. `coeffs[g]` multiplies
    /// group `g`; `floor` is the truncation constant `c`.
    pub fn new(
        groups: Vec<(f64, Vec<(NoisyGraph, f64)>)>,
        floor: f64,
    ) -> Result<Self> {
        let n = groups
            .first()
            .and_then(|(_, m)| m.first())
            .map(|(g, _)| g.node_count())
            .ok_or_else(|| crate::error::invalid("groups", "no topologies"))?;
        let mut out = Vec::with_capacity(groups.len());
        for (coeff, members) in groups {
            if members.is_empty() {
                return Err(crate::error::invalid("groups", "empty group"));
            }
            let mut ms = Vec::with_capacity(members.len());
            for (graph, weight) in members {
                if graph.node_count() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: graph.node_count(),
                    });
                }
                let labels = graph.components();
                let components = labels.iter().max().map_or(0, |m| m + 1);
                ms.push(Member {
                    graph,
                    labels,
                    components,
                    weight,
                });
            }
            out.push(Group {
                members: ms,
                coeff,
            });
        }
        Ok(ScenarioObjective {
            n,
            groups: out,
            floor,
        })
    }

    /// `R(S)` on one graph.
    pub fn single(g: &NoisyGraph) -> Self {
        Self::new(vec![(1.0, vec![(g.clone(), 1.0)])], 0.0).expect("valid single graph")
    }

    /// `(1/M) Σ_i max{R(S | L_i), c}`; `c = 0` gives the ensemble average.
    pub fn ensemble(graphs: &[NoisyGraph], floor: f64) -> Result<Self> {
        let m = graphs.len() as f64;
        Self::new(
            graphs
                .iter()
                .map(|g| (1.0 / m, vec![(g.clone(), 1.0)]))
                .collect(),
            floor,
        )
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn set_floor(&mut self, c: f64) {
        self.floor = c;
    }

    /// Number of member topologies across all groups.
    pub fn member_count(&self) -> usize {
        self.groups.iter().map(|g| g.members.len()).sum()
    }

    fn member_state(&self, m: &Member, set: &[usize], in_set: &[bool]) -> MemberState {
        let mut has_leader = vec![false; m.components];
        for &s in set {
            has_leader[m.labels[s]] = true;
        }
        let missing: Vec<usize> = (0..m.components).filter(|&c| !has_leader[c]).collect();
        if !missing.is_empty() {
            let lone = if missing.len() == 1 { Some(missing[0]) } else { None };
            return MemberState::Unreached { lone };
        }
        let leaders = LeaderSet::new(set.to_vec(), self.n).expect("valid leader set");
        let gs = m.graph.ground(&leaders).expect("reached graph grounds");
        let inv = gs.inverse();
        let value = 0.5 * (0..inv.nrows()).map(|r| inv[(r, r)]).sum::<f64>();
        let row_of = (0..self.n)
            .map(|v| if in_set[v] { None } else { gs.row_of(v) })
            .collect();
        MemberState::Reached { inv, row_of, value }
    }

    /// Combines per-group conditional means into `(F, excess over the floor)`.
    fn combine(&self, group_means: impl Iterator<Item = f64>) -> (f64, f64) {
        let mut excess = 0.0;
        for (g, mean) in self.groups.iter().zip(group_means) {
            excess += g.coeff * (mean - self.floor).max(0.0);
        }
        let coeff_sum: f64 = self.groups.iter().map(|g| g.coeff).sum();
        (coeff_sum * self.floor + excess, excess)
    }

    /// Conditional mean of a group given per-member `Option<R>`.
    fn group_mean(members: &[Member], values: impl Iterator<Item = Option<f64>>) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (m, v) in members.iter().zip(values) {
            if let Some(r) = v {
                num += m.weight * r;
                den += m.weight;
            }
        }
        if den > 0.0 {
            num / den
        } else {
            f64::INFINITY
        }
    }
}

impl ScenarioObjective {
    /// Conditional mean of each group at `set`, before truncation.
    pub fn group_values(&self, set: &[usize]) -> Vec<f64> {
        let ctx = self.prepare(set);
        self.groups
            .iter()
            .zip(&ctx.states)
            .map(|(g, st)| {
                Self::group_mean(
                    &g.members,
                    st.iter().map(|s| match s {
                        MemberState::Reached { value, .. } => Some(*value),
                        MemberState::Unreached { .. } => None,
                    }),
                )
            })
            .collect()
    }
}

impl SetObjective for ScenarioObjective {
    type Context = ScenarioContext;

    fn ground_size(&self) -> usize {
        self.n
    }

    fn prepare(&self, set: &[usize]) -> ScenarioContext {
        let mut in_set = vec![false; self.n];
        for &s in set {
            in_set[s] = true;
        }
        let states: Vec<Vec<MemberState>> = self
            .groups
            .iter()
            .map(|g| {
                g.members
                    .par_iter()
                    .map(|m| self.member_state(m, set, &in_set))
                    .collect()
            })
            .collect();
        let (value, excess) = self.combine(self.groups.iter().zip(&states).map(|(g, st)| {
            Self::group_mean(
                &g.members,
                st.iter().map(|s| match s {
                    MemberState::Reached { value, .. } => Some(*value),
                    MemberState::Unreached { .. } => None,
                }),
            )
        }));
        ScenarioContext {
            states,
            value,
            excess,
        }
    }

    fn context_value(&self, ctx: &ScenarioContext) -> f64 {
        ctx.value
    }

    fn gain(&self, ctx: &ScenarioContext, set: &[usize], v: usize) -> f64 {
        let (after, _) = self.combine(self.groups.iter().zip(&ctx.states).map(|(g, st)| {
            Self::group_mean(
                &g.members,
                g.members.iter().zip(st).map(|(m, s)| match s {
                    MemberState::Reached { inv, row_of, value } => {
                        let r = row_of[v].expect("candidate is a follower");
                        let col = inv.column(r);
                        Some(value - 0.5 * col.norm_squared() / col[r])
                    }
                    MemberState::Unreached { lone: Some(c) } if m.labels[v] == *c => {
                        let mut grown = set.to_vec();
                        grown.push(v);
                        crate::metric::error_if_reached(&m.graph, &grown)
                    }
                    MemberState::Unreached { .. } => None,
                }),
            )
        }));
        if ctx.value == f64::INFINITY && after == f64::INFINITY {
            // still no reached member in some group
            return 0.0;
        }
        ctx.value - after
    }
}
