//! Stochastic simulation of the noisy leader-follower dynamics.
//!
//! Follower `i` moves toward the offsets its neighbors imply, weighting each
//! link by its inverse noise variance:
//!
//! ```text
//! dx_i = −D_i⁻¹ Σ_j ν_ij⁻¹ (x_i − x_j − r_ij) dt + dw_i,   Var(dw_i) = dt / D_i
//! ```
//!
//! Leaders hold their states. In steady state the deviation from the desired
//! state `x_f*` has covariance `X = ½ L_ff⁻¹`, the solution of
//! `−D_f⁻¹L_ff X − X L_ff D_f⁻¹ + D_f⁻¹ = 0`, so the mean-square deviation is
//! `R(S)`. [`integrate`] estimates it with Euler–Maruyama.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{LeaderSet, NoisyGraph};
use crate::metric::{system_error, ErrorReport};
use crate::rng::substream;

/// How link noise enters the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NoiseMode {
    /// One aggregated noise per follower, intensity `1/D_i`.
    #[default]
    Aggregated,
    /// Independent noise on every directed measurement `(i, j)`, intensity `ν_ij`.
    PerLink,
    /// No noise; the state converges to `x_f*`.
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsConfig {
    pub graph: NoisyGraph,
    pub leaders: LeaderSet,
    /// `r_ij` for each edge of `graph.edges()`, oriented from `i` to `j` (`i < j`);
    /// `r_ji = −r_ij`.
    pub offsets: Vec<f64>,
    /// Fixed states of the leaders, in leader order.
    pub leader_states: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
    /// Share of the horizon discarded before averaging.
    pub burn_in: f64,
    pub seed: u64,
    /// Independent trajectories averaged together.
    pub replicates: usize,
    pub noise: NoiseMode,
    /// Keep every `n`-th state of the first replicate.
    pub record_every: Option<usize>,
}

impl DynamicsConfig {
    /// Zero offsets, leaders at 0, `dt = 1e−3`, horizon 2000, half burn-in,
    /// 16 replicates.
    pub fn new(graph: NoisyGraph, leaders: LeaderSet) -> Self {
        let offsets = vec![0.0; graph.edge_count()];
        let leader_states = vec![0.0; leaders.len()];
        DynamicsConfig {
            graph,
            leaders,
            offsets,
            leader_states,
            dt: 1e-3,
            horizon: 2000.0,
            burn_in: 0.5,
            seed: 0,
            replicates: 16,
            noise: NoiseMode::Aggregated,
            record_every: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.leaders.is_empty() {
            return Err(Error::EmptyLeaderSet);
        }
        if self.offsets.len() != self.graph.edge_count() {
            return Err(Error::DimensionMismatch {
                expected: self.graph.edge_count(),
                got: self.offsets.len(),
            });
        }
        if self.leader_states.len() != self.leaders.len() {
            return Err(Error::DimensionMismatch {
                expected: self.leaders.len(),
                got: self.leader_states.len(),
            });
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.horizon > self.dt) {
            return Err(invalid("horizon", "must exceed dt"));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(invalid("burn_in", "must lie in [0, 1)"));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates", "must be at least 1"));
        }
        if self.record_every == Some(0) {
            return Err(invalid("record_every", "must be at least 1"));
        }
        Ok(())
    }
}

/// Checks that some `x` satisfies `x_i − x_j = r_ij` on every edge.
///
/// Potentials are assigned along a BFS spanning tree; every edge's residual
/// must then vanish.
pub fn check_offsets(g: &NoisyGraph, offsets: &[f64]) -> Result<Vec<f64>> {
    if offsets.len() != g.edge_count() {
        return Err(Error::DimensionMismatch {
            expected: g.edge_count(),
            got: offsets.len(),
        });
    }
    let n = g.node_count();
    let mut r_of = vec![Vec::new(); n];
    for (e, &r) in g.edges().iter().zip(offsets) {
        r_of[e.i].push((e.j, r));
        r_of[e.j].push((e.i, -r));
    }
    let mut pot = vec![f64::NAN; n];
    for root in 0..n {
        if !pot[root].is_nan() {
            continue;
        }
        pot[root] = 0.0;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            for &(j, r) in &r_of[i] {
                if pot[j].is_nan() {
                    // x_j = x_i − r_ij
                    pot[j] = pot[i] - r;
                    queue.push_back(j);
                }
            }
        }
    }
    let scale = offsets.iter().fold(1.0f64, |m, r| m.max(r.abs()));
    for (e, &r) in g.edges().iter().zip(offsets) {
        let residual = pot[e.i] - pot[e.j] - r;
        if residual.abs() > 1e-9 * scale {
            return Err(Error::InconsistentOffsets {
                i: e.i,
                j: e.j,
                residual,
            });
        }
    }
    Ok(pot)
}

/// Equilibrium of the noiseless dynamics, `x_f* = −L_ff⁻¹(L_fl x_l* + B r)`,
/// as a full state vector indexed by node id (leaders at their fixed states).
pub fn desired_state(cfg: &DynamicsConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_offsets(&cfg.graph, &cfg.offsets)?;
    let g = &cfg.graph;
    let gs = g.ground(&cfg.leaders)?;
    let mut x = vec![0.0; g.node_count()];
    for (&l, &v) in cfg.leaders.as_slice().iter().zip(&cfg.leader_states) {
        x[l] = v;
    }
    if gs.is_all_leaders() {
        return Ok(x);
    }
    let nf = gs.followers().len();
    // L_ff x_f = −L_fl x_l + Σ_j ν_ij⁻¹ r_ij
    let mut rhs = DVector::zeros(nf);
    for (r, &i) in gs.followers().iter().enumerate() {
        for &(j, w) in g.neighbors(i) {
            if cfg.leaders.contains(j) {
                rhs[r] += w * x[j];
            }
        }
    }
    for (e, &off) in g.edges().iter().zip(&cfg.offsets) {
        let w = e.weight();
        if let Some(r) = gs.row_of(e.i) {
            rhs[r] += w * off;
        }
        if let Some(r) = gs.row_of(e.j) {
            rhs[r] -= w * off;
        }
    }
    let xf = gs.solve(&rhs);
    for (r, &i) in gs.followers().iter().enumerate() {
        x[i] = xf[r];
    }
    Ok(x)
}

/// Largest stable Euler step, `2 / λ_max(D_f⁻¹ L_ff)`.
pub fn step_limit(g: &NoisyGraph, s: &LeaderSet) -> Result<f64> {
    let gs = g.ground(s)?;
    if gs.is_all_leaders() {
        return Ok(f64::INFINITY);
    }
    // D^{-1/2} L_ff D^{-1/2} is symmetric and similar to D^{-1} L_ff
    let d = gs.d_f().map(|x| 1.0 / x.sqrt());
    let m = DMatrix::from_fn(d.len(), d.len(), |a, b| d[a] * gs.lff()[(a, b)] * d[b]);
    let lambda_max = m.symmetric_eigenvalues().max();
    Ok(2.0 / lambda_max)
}

/// `‖−D_f⁻¹L_ff X − X L_ff D_f⁻¹ + D_f⁻¹‖_max` at `X = ½ L_ff⁻¹`.
pub fn lyapunov_residual(g: &NoisyGraph, s: &LeaderSet) -> Result<f64> {
    let gs = g.ground(s)?;
    if gs.is_all_leaders() {
        return Ok(0.0);
    }
    let x = gs.inverse() * 0.5;
    let dinv = DMatrix::from_diagonal(&gs.d_f().map(|v| 1.0 / v));
    let a = &dinv * gs.lff();
    let res = -(&a * &x) - &x * a.transpose() + &dinv;
    Ok(res.amax())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    /// Time-averaged `‖x_f − x_f*‖²` after burn-in, averaged over replicates.
    pub empirical_mse: f64,
    /// Standard error of `empirical_mse` across replicates.
    pub mse_stderr: f64,
    /// Time-averaged `(x_u − x_u*)²` per follower.
    pub per_node_variance: BTreeMap<usize, f64>,
    /// Time-averaged `x_u` per follower.
    pub per_node_mean: BTreeMap<usize, f64>,
    /// Standard error of each `per_node_mean` across replicates.
    pub per_node_mean_stderr: BTreeMap<usize, f64>,
    pub desired: Vec<f64>,
    pub analytic: ErrorReport,
    /// `|empirical − analytic| / analytic`; zero when both vanish.
    pub relative_gap: f64,
    /// Post-burn-in steps per replicate.
    pub samples: u64,
    pub replicates: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trajectory: Vec<TrajectoryPoint>,
}

/// One follower's links: `(follower row or leader, ν⁻¹, r_ij, √ν)`.
struct Link {
    row: Option<usize>,
    w: f64,
    r: f64,
    leader_value: f64,
    sqrt_nu: f64,
}

struct ReplicateStats {
    mse: f64,
    sq: Vec<f64>,
    mean: Vec<f64>,
    trajectory: Vec<TrajectoryPoint>,
}

/// Euler–Maruyama estimate of the steady-state mean-square deviation.
pub fn integrate(cfg: &DynamicsConfig) -> Result<SimulationSummary> {
    cfg.validate()?;
    let desired = desired_state(cfg)?;
    let analytic = system_error(&cfg.graph, &cfg.leaders)?;
    let limit = step_limit(&cfg.graph, &cfg.leaders)?;
    if !(cfg.dt < limit) {
        return Err(Error::UnstableStep { dt: cfg.dt, limit });
    }
    let g = &cfg.graph;
    let gs = g.ground(&cfg.leaders)?;
    let followers = gs.followers().to_vec();
    let nf = followers.len();

    let mut leader_value = vec![0.0; g.node_count()];
    for (&l, &v) in cfg.leaders.as_slice().iter().zip(&cfg.leader_states) {
        leader_value[l] = v;
    }
    let mut offset_of = std::collections::HashMap::new();
    for (e, &r) in g.edges().iter().zip(&cfg.offsets) {
        offset_of.insert((e.i, e.j), r);
        offset_of.insert((e.j, e.i), -r);
    }
    let links: Vec<Vec<Link>> = followers
        .iter()
        .map(|&i| {
            g.neighbors(i)
                .iter()
                .map(|&(j, w)| Link {
                    row: gs.row_of(j),
                    w,
                    r: offset_of[&(i, j)],
                    leader_value: leader_value[j],
                    sqrt_nu: (1.0 / w).sqrt(),
                })
                .collect()
        })
        .collect();
    let d_inv: Vec<f64> = followers.iter().map(|&i| 1.0 / g.weighted_degree(i)).collect();
    let x_star: Vec<f64> = followers.iter().map(|&i| desired[i]).collect();

    let steps = (cfg.horizon / cfg.dt).round() as u64;
    let burn = (steps as f64 * cfg.burn_in).floor() as u64;
    let samples = steps - burn;
    let sqrt_dt = cfg.dt.sqrt();

    let run = |rep: usize| -> ReplicateStats {
        let mut rng = substream(cfg.seed, rep as u64);
        let mut x = vec![0.0; nf];
        let mut next = vec![0.0; nf];
        let mut sum_sq = vec![0.0; nf];
        let mut sum = vec![0.0; nf];
        let mut trajectory = Vec::new();
        for step in 0..steps {
            for a in 0..nf {
                let mut pull = 0.0;
                let mut noise = 0.0;
                for l in &links[a] {
                    let xj = l.row.map_or(l.leader_value, |b| x[b]);
                    pull += l.w * (x[a] - xj - l.r);
                    if cfg.noise == NoiseMode::PerLink {
                        let z: f64 = rng.sample(StandardNormal);
                        noise += l.w * l.sqrt_nu * z;
                    }
                }
                let mut dx = -d_inv[a] * pull * cfg.dt;
                match cfg.noise {
                    NoiseMode::Aggregated => {
                        let z: f64 = rng.sample(StandardNormal);
                        dx += (d_inv[a]).sqrt() * sqrt_dt * z;
                    }
                    NoiseMode::PerLink => dx -= d_inv[a] * sqrt_dt * noise,
                    NoiseMode::Off => {}
                }
                next[a] = x[a] + dx;
            }
            std::mem::swap(&mut x, &mut next);
            if step >= burn {
                for a in 0..nf {
                    let e = x[a] - x_star[a];
                    sum_sq[a] += e * e;
                    sum[a] += x[a];
                }
            }
            if rep == 0 {
                if let Some(every) = cfg.record_every {
                    if (step + 1) % every as u64 == 0 {
                        trajectory.push(TrajectoryPoint {
                            t: (step + 1) as f64 * cfg.dt,
                            x: x.clone(),
                        });
                    }
                }
            }
        }
        let m = samples as f64;
        let sq: Vec<f64> = sum_sq.iter().map(|s| s / m).collect();
        ReplicateStats {
            mse: sq.iter().sum(),
            sq,
            mean: sum.iter().map(|s| s / m).collect(),
            trajectory,
        }
    };

    let mut reps: Vec<ReplicateStats> = (0..cfg.replicates).into_par_iter().map(run).collect();
    let r = cfg.replicates as f64;
    let mean_of = |f: &dyn Fn(&ReplicateStats) -> f64| reps.iter().map(f).sum::<f64>() / r;
    let stderr_of = |f: &dyn Fn(&ReplicateStats) -> f64, mean: f64| {
        if cfg.replicates < 2 {
            return 0.0;
        }
        let ss: f64 = reps.iter().map(|x| (f(x) - mean).powi(2)).sum();
        (ss / (r - 1.0) / r).sqrt()
    };

    let empirical_mse = mean_of(&|s| s.mse);
    let mse_stderr = stderr_of(&|s| s.mse, empirical_mse);
    let mut per_node_variance = BTreeMap::new();
    let mut per_node_mean = BTreeMap::new();
    let mut per_node_mean_stderr = BTreeMap::new();
    for (a, &u) in followers.iter().enumerate() {
        per_node_variance.insert(u, mean_of(&|s| s.sq[a]));
        let m = mean_of(&|s| s.mean[a]);
        per_node_mean.insert(u, m);
        per_node_mean_stderr.insert(u, stderr_of(&|s| s.mean[a], m));
    }
    let relative_gap = if analytic.total > 0.0 {
        (empirical_mse - analytic.total).abs() / analytic.total
    } else {
        empirical_mse
    };
    let trajectory = std::mem::take(&mut reps[0].trajectory);
    Ok(SimulationSummary {
        empirical_mse,
        mse_stderr,
        per_node_variance,
        per_node_mean,
        per_node_mean_stderr,
        desired,
        analytic,
        relative_gap,
        samples,
        replicates: cfg.replicates,
        trajectory,
    })
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

    #[test]
    fn desired_state_examples() {
        let mut cfg = DynamicsConfig::new(path(3), set(&[1], 3));
        cfg.leader_states = vec![2.5];
        assert_eq!(desired_state(&cfg).unwrap(), vec![2.5, 2.5, 2.5]);

        let mut cfg = DynamicsConfig::new(path(2), set(&[1], 2));
        cfg.offsets = vec![1.0];
        let x = desired_state(&cfg).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);

        let mut cfg = DynamicsConfig::new(triangle(), set(&[0], 3));
        cfg.offsets = vec![1.0, 1.0, 1.0];
        assert!(matches!(desired_state(&cfg), Err(Error::InconsistentOffsets { .. })));
        // x = (2, 1, 0) is consistent: r_01 = 1, r_12 = 1, r_02 = 2
        cfg.offsets = vec![1.0, 1.0, 2.0];
        cfg.leader_states = vec![2.0];
        let x = desired_state(&cfg).unwrap();
        assert!((x[1] - 1.0).abs() < 1e-12 && x[2].abs() < 1e-12);
    }

    #[test]
    fn lyapunov_examples() {
        assert!(lyapunov_residual(&path(2), &set(&[1], 2)).unwrap() <= 1e-12);
        assert!(lyapunov_residual(&triangle(), &set(&[0], 3)).unwrap() <= 1e-12);
        assert_eq!(
            lyapunov_residual(&triangle(), &LeaderSet::empty()).unwrap_err(),
            Error::EmptyLeaderSet
        );
    }

    #[test]
    fn zero_noise_converges_to_equilibrium() {
        let mut cfg = DynamicsConfig::new(triangle(), set(&[0], 3));
        cfg.offsets = vec![1.0, 1.0, 2.0];
        cfg.leader_states = vec![2.0];
        cfg.noise = NoiseMode::Off;
        cfg.horizon = 60.0;
        cfg.replicates = 1;
        let s = integrate(&cfg).unwrap();
        assert!(s.empirical_mse < 1e-12, "{}", s.empirical_mse);
    }

    #[test]
    fn step_guard() {
        let mut cfg = DynamicsConfig::new(path(2), set(&[1], 2));
        cfg.dt = 2.5;
        cfg.horizon = 10.0;
        assert!(matches!(integrate(&cfg), Err(Error::UnstableStep { .. })));
        assert!((step_limit(&path(2), &set(&[1], 2)).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn short_run_is_near_analytic() {
        let mut cfg = DynamicsConfig::new(path(2), set(&[1], 2));
        cfg.horizon = 200.0;
        cfg.replicates = 8;
        cfg.seed = 4;
        let s = integrate(&cfg).unwrap();
        assert!(s.relative_gap < 0.15, "{}", s.relative_gap);
    }
}
