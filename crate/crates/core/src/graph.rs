//! Noisy undirected graphs, weighted Laplacians and leader/follower partitions.
//!
//! Every link `(i, j)` carries a noise variance `ν_ij > 0`. The weighted
//! Laplacian uses the inverse variances as conductances:
//!
//! ```text
//! L_ij = -1/ν_ij        for (i, j) ∈ E
//! L_ii = D_i = Σ_j 1/ν_ij
//! ```
//!
//! Grounding the Laplacian at a leader set `S` keeps the follower rows and
//! columns (`L_ff`), which is symmetric positive definite whenever the graph is
//! connected and `S` is nonempty.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected link in canonical orientation (`i < j`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Noise variance of the link.
    pub nu: f64,
}

impl Edge {
    /// Conductance `1/ν`.
    #[inline]
    pub fn weight(&self) -> f64 {
        1.0 / self.nu
    }

    #[inline]
    pub fn other(&self, v: usize) -> usize {
        if v == self.i {
            self.j
        } else {
            self.i
        }
    }
}

/// Connected, undirected graph with per-link noise variances.
///
/// Immutable after construction; node ids are dense `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyGraph {
    n: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl NoisyGraph {
    /// Validates and builds a graph. The result is guaranteed to be connected.
    pub fn new<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let g = Self::build(n, edges)?;
        let components = g.component_count();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(g)
    }

    /// Same validation as [`NoisyGraph::new`] without the connectivity check.
    ///
    /// Used for failure samples and mobility frames, which may be disconnected.
    pub fn new_possibly_disconnected<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Self::build(n, edges)
    }

    fn build<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut out: Vec<Edge> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (a, b, nu) in edges {
            for node in [a, b] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if !(nu > 0.0) || !nu.is_finite() {
                return Err(Error::NonPositiveVariance { i, j, nu });
            }
            if !seen.insert((i, j)) {
                return Err(Error::DuplicateEdge(i, j));
            }
            out.push(Edge { i, j, nu });
        }
        Ok(Self::from_canonical(n, out))
    }

    /// Builds from edges already known to be valid (canonical, distinct, in range).
    pub(crate) fn from_canonical(n: usize, edges: Vec<Edge>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for e in &edges {
            adj[e.i].push((e.j, e.weight()));
            adj[e.j].push((e.i, e.weight()));
        }
        NoisyGraph { n, edges, adj }
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbors of `v` with link conductances `1/ν`.
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// `D_i = Σ_{j ∈ N(i)} 1/ν_ij`.
    pub fn weighted_degree(&self, v: usize) -> f64 {
        self.adj[v].iter().map(|&(_, w)| w).sum()
    }

    /// Sum of all link conductances, `Σ_{(s,t) ∈ E} 1/ν_st`.
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(Edge::weight).sum()
    }

    /// Largest link conductance, `max 1/ν_ij`.
    pub fn max_weight(&self) -> f64 {
        self.edges.iter().map(Edge::weight).fold(0.0, f64::max)
    }

    /// Component label per node (labels are dense, in order of first node).
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut stack = Vec::new();
        for root in 0..self.n {
            if label[root] != usize::MAX {
                continue;
            }
            label[root] = next;
            stack.push(root);
            while let Some(v) = stack.pop() {
                for &(w, _) in &self.adj[v] {
                    if label[w] == usize::MAX {
                        label[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// True when every node lies in a component that contains a leader.
    pub fn leaders_reach_all(&self, leaders: &[usize]) -> bool {
        let labels = self.components();
        let count = labels.iter().max().map_or(0, |m| m + 1);
        let mut has_leader = vec![false; count];
        for &s in leaders {
            has_leader[labels[s]] = true;
        }
        has_leader.iter().all(|&b| b)
    }

    /// Graph with the edges selected by `keep` (indexed like [`NoisyGraph::edges`]).
    pub fn subgraph(&self, keep: impl Fn(usize) -> bool) -> NoisyGraph {
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|(idx, _)| keep(*idx))
            .map(|(_, e)| *e)
            .collect();
        NoisyGraph::from_canonical(self.n, edges)
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<NoisyGraph> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: perm.len(),
            });
        }
        NoisyGraph::new_possibly_disconnected(
            self.n,
            self.edges.iter().map(|e| (perm[e.i], perm[e.j], e.nu)),
        )
    }

    /// Multiplies every noise variance by `c`.
    pub fn scale_variances(&self, c: f64) -> NoisyGraph {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { nu: e.nu * c, ..*e })
            .collect();
        NoisyGraph::from_canonical(self.n, edges)
    }

    /// Dense weighted Laplacian.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            let w = e.weight();
            l[(e.i, e.j)] -= w;
            l[(e.j, e.i)] -= w;
            l[(e.i, e.i)] += w;
            l[(e.j, e.j)] += w;
        }
        l
    }

    pub fn ground(&self, leaders: &LeaderSet) -> Result<GroundedSystem> {
        GroundedSystem::new(self, leaders)
    }
}

/// Ordered set of distinct leader ids, kept in selection order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LeaderSet {
    members: Vec<usize>,
}

impl LeaderSet {
    pub fn new(members: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &v in &members {
            if v >= n {
                return Err(Error::NodeOutOfRange { node: v, n });
            }
            if seen[v] {
                return Err(Error::DuplicateLeader(v));
            }
            seen[v] = true;
        }
        Ok(LeaderSet { members })
    }

    pub fn empty() -> Self {
        LeaderSet::default()
    }

    /// All nodes `0..n` in id order.
    pub fn all(n: usize) -> Self {
        LeaderSet {
            members: (0..n).collect(),
        }
    }

    pub fn push(&mut self, v: usize) -> Result<()> {
        if self.contains(v) {
            return Err(Error::AlreadyLeader(v));
        }
        self.members.push(v);
        Ok(())
    }

    pub fn with(&self, v: usize) -> Result<Self> {
        let mut next = self.clone();
        next.push(v)?;
        Ok(next)
    }

    #[inline]
    pub fn contains(&self, v: usize) -> bool {
        self.members.contains(&v)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.members.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[usize] {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    /// Members in ascending id order.
    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.members.clone();
        v.sort_unstable();
        v
    }

    pub(crate) fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &v in &self.members {
            m[v] = true;
        }
        m
    }
}

impl From<LeaderSet> for Vec<usize> {
    fn from(s: LeaderSet) -> Self {
        s.members
    }
}

/// A graph partitioned into followers and leaders, with the follower block
/// factored once.
#[derive(Debug, Clone)]
pub struct GroundedSystem {
    leaders: LeaderSet,
    followers: Vec<usize>,
    row_of: Vec<Option<usize>>,
    lff: DMatrix<f64>,
    lfl: DMatrix<f64>,
    d_f: DVector<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl GroundedSystem {
    pub fn new(g: &NoisyGraph, leaders: &LeaderSet) -> Result<Self> {
        if leaders.is_empty() {
            return Err(Error::EmptyLeaderSet);
        }
        let n = g.node_count();
        for v in leaders.iter() {
            if v >= n {
                return Err(Error::NodeOutOfRange { node: v, n });
            }
        }
        let is_leader = leaders.mask(n);
        let followers: Vec<usize> = (0..n).filter(|&v| !is_leader[v]).collect();
        let mut row_of = vec![None; n];
        for (r, &v) in followers.iter().enumerate() {
            row_of[v] = Some(r);
        }
        let mut col_of_leader = vec![None; n];
        for (c, v) in leaders.iter().enumerate() {
            col_of_leader[v] = Some(c);
        }

        let nf = followers.len();
        let mut lff = DMatrix::zeros(nf, nf);
        let mut lfl = DMatrix::zeros(nf, leaders.len());
        let mut d_f = DVector::zeros(nf);
        for (r, &v) in followers.iter().enumerate() {
            let mut d = 0.0;
            for &(w, c) in g.neighbors(v) {
                d += c;
                match row_of[w] {
                    Some(rw) => lff[(r, rw)] -= c,
                    None => lfl[(r, col_of_leader[w].unwrap())] -= c,
                }
            }
            lff[(r, r)] += d;
            d_f[r] = d;
        }

        let chol = if nf == 0 {
            None
        } else {
            Some(Cholesky::new(lff.clone()).ok_or(Error::NotPositiveDefinite)?)
        };
        Ok(GroundedSystem {
            leaders: leaders.clone(),
            followers,
            row_of,
            lff,
            lfl,
            d_f,
            chol,
        })
    }

    pub fn leaders(&self) -> &LeaderSet {
        &self.leaders
    }

    /// Follower ids in row order.
    pub fn followers(&self) -> &[usize] {
        &self.followers
    }

    /// Row of follower `v` in `L_ff`, or `None` for leaders.
    pub fn row_of(&self, v: usize) -> Option<usize> {
        self.row_of.get(v).copied().flatten()
    }

    /// No followers remain; `L_ff` is 0×0.
    pub fn is_all_leaders(&self) -> bool {
        self.followers.is_empty()
    }

    pub fn lff(&self) -> &DMatrix<f64> {
        &self.lff
    }

    /// Follower-leader coupling block, columns in leader-set order.
    pub fn lfl(&self) -> &DMatrix<f64> {
        &self.lfl
    }

    /// Diagonal of `D_f` (weighted follower degrees).
    pub fn d_f(&self) -> &DVector<f64> {
        &self.d_f
    }

    /// Solves `L_ff x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            Some(c) => c.solve(b),
            None => DVector::zeros(0),
        }
    }

    /// `L_ff⁻¹`, assembled from the Cholesky factor.
    pub fn inverse(&self) -> DMatrix<f64> {
        match &self.chol {
            Some(c) => c.inverse(),
            None => DMatrix::zeros(0, 0),
        }
    }

    /// Diagonal of `L_ff⁻¹` via the inverse lower factor: `(A⁻¹)_uu = Σ_k (L⁻¹)_ku²`.
    pub fn inverse_diagonal(&self) -> DVector<f64> {
        let Some(c) = &self.chol else {
            return DVector::zeros(0);
        };
        let nf = self.followers.len();
        let mut linv = DMatrix::identity(nf, nf);
        let l = c.l();
        if !l.solve_lower_triangular_mut(&mut linv) {
            // The factor has a strictly positive diagonal, so this cannot fail.
            unreachable!("Cholesky factor is singular");
        }
        DVector::from_iterator(nf, linv.column_iter().map(|col| col.norm_squared()))
    }

    /// `Tr(L_ff⁻¹)`.
    pub fn trace_inverse(&self) -> f64 {
        self.inverse_diagonal().iter().sum()
    }

    /// Smallest eigenvalue of `L_ff` (0 when there are no followers).
    pub fn lambda_min(&self) -> f64 {
        if self.followers.is_empty() {
            return 0.0;
        }
        self.lff
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize, nu: f64) -> NoisyGraph {
        NoisyGraph::new(n, (0..n - 1).map(|i| (i, i + 1, nu))).unwrap()
    }

    fn triangle() -> NoisyGraph {
        NoisyGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    #[test]
    fn build_errors() {
        assert!(NoisyGraph::new(2, [(0, 1, 1.0)]).is_ok());
        assert_eq!(
            NoisyGraph::new(3, [(0, 1, 1.0)]),
            Err(Error::Disconnected { components: 2 })
        );
        assert_eq!(
            NoisyGraph::new(3, [(0, 1, 1.0), (1, 0, 2.0)]),
            Err(Error::DuplicateEdge(0, 1))
        );
        assert_eq!(NoisyGraph::new(2, [(1, 1, 1.0)]), Err(Error::SelfLoop(1)));
        assert!(matches!(
            NoisyGraph::new(2, [(0, 1, 0.0)]),
            Err(Error::NonPositiveVariance { .. })
        ));
        assert!(matches!(
            NoisyGraph::new(2, [(0, 5, 1.0)]),
            Err(Error::NodeOutOfRange { node: 5, n: 2 })
        ));
    }

    #[test]
    fn edges_are_canonical() {
        let g = NoisyGraph::new(3, [(2, 0, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(g.edges().iter().all(|e| e.i < e.j));
    }

    #[test]
    fn laplacian_examples() {
        let l = path(2, 1.0).laplacian();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let l = path(2, 0.5).laplacian();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
        let l = triangle().laplacian();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l[(i, j)], if i == j { 2.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn ground_examples() {
        let g = path(2, 1.0);
        let gs = g.ground(&LeaderSet::new(vec![1], 2).unwrap()).unwrap();
        assert_eq!(gs.lff(), &DMatrix::from_element(1, 1, 1.0));

        let gs = triangle().ground(&LeaderSet::new(vec![0], 3).unwrap()).unwrap();
        assert_eq!(
            gs.lff(),
            &DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0])
        );
        assert_eq!(gs.followers(), &[1, 2]);

        let gs = triangle().ground(&LeaderSet::all(3)).unwrap();
        assert!(gs.is_all_leaders());
        assert_eq!(gs.lff().shape(), (0, 0));
        assert_eq!(gs.trace_inverse(), 0.0);

        assert_eq!(
            triangle().ground(&LeaderSet::empty()).unwrap_err(),
            Error::EmptyLeaderSet
        );
    }

    #[test]
    fn leader_set_validation() {
        assert_eq!(
            LeaderSet::new(vec![1, 1], 3),
            Err(Error::DuplicateLeader(1))
        );
        let mut s = LeaderSet::new(vec![2, 0], 3).unwrap();
        assert_eq!(s.push(0), Err(Error::AlreadyLeader(0)));
        s.push(1).unwrap();
        assert_eq!(s.as_slice(), &[2, 0, 1]);
        assert_eq!(s.sorted(), vec![0, 1, 2]);
    }

    #[test]
    fn inverse_diagonal_matches_inverse() {
        let g = NoisyGraph::new(
            5,
            [(0, 1, 0.5), (1, 2, 2.0), (2, 3, 1.0), (3, 4, 0.3), (0, 4, 1.5), (1, 3, 0.7)],
        )
        .unwrap();
        let gs = g.ground(&LeaderSet::new(vec![2], 5).unwrap()).unwrap();
        let inv = gs.inverse();
        let diag = gs.inverse_diagonal();
        for r in 0..4 {
            assert!((inv[(r, r)] - diag[r]).abs() < 1e-12);
        }
    }

    #[test]
    fn reach_check() {
        let g = NoisyGraph::new_possibly_disconnected(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(!g.leaders_reach_all(&[0]));
        assert!(g.leaders_reach_all(&[0, 3]));
    }
}
