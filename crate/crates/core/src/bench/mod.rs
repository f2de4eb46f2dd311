//! Random deployments, mobility traces, baseline selectors and experiment sweeps.

mod experiment;

pub use experiment::{run_experiment, Dataset, Experiment, ExperimentConfig, Row};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{LeaderSet, NoisyGraph};
use crate::rng::substream;

/// Agents dropped uniformly in a rectangle, linked within a radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeploymentSpec {
    pub n: usize,
    /// Meters.
    pub width: f64,
    pub height: f64,
    /// Communication radius in meters.
    pub range: f64,
    /// `ν_ij = nu_scale · d_ij`.
    pub nu_scale: f64,
    pub seed: u64,
    /// Placements tried before giving up on connectivity.
    pub max_retries: usize,
}

impl Default for DeploymentSpec {
    fn default() -> Self {
        DeploymentSpec {
            n: 100,
            width: 1000.0,
            height: 1000.0,
            range: 300.0,
            nu_scale: 1.0 / 300.0,
            seed: 0,
            max_retries: 1000,
        }
    }
}

impl DeploymentSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::EmptyGraph);
        }
        if !(self.nu_scale > 0.0) {
            return Err(invalid("nu_scale", "must be positive"));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(invalid("area", "width and height must be positive"));
        }
        if !(self.range >= 0.0) {
            return Err(invalid("range", "must be nonnegative"));
        }
        Ok(())
    }
}

pub type Point = [f64; 2];

/// Links every pair within `range`, with `ν = nu_scale · distance`.
pub fn graph_from_positions(pos: &[Point], range: f64, nu_scale: f64) -> NoisyGraph {
    let mut edges = Vec::new();
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let d = ((pos[i][0] - pos[j][0]).powi(2) + (pos[i][1] - pos[j][1]).powi(2)).sqrt();
            if d <= range {
                // coincident agents would give a zero variance
                edges.push((i, j, nu_scale * d.max(1e-9)));
            }
        }
    }
    NoisyGraph::new_possibly_disconnected(pos.len(), edges).expect("well-formed edge list")
}

/// A connected deployment with the agent positions and the attempt that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub graph: NoisyGraph,
    pub positions: Vec<Point>,
    pub attempts: usize,
}

pub fn deploy(spec: &DeploymentSpec) -> Result<Deployment> {
    spec.validate()?;
    for attempt in 0..spec.max_retries.max(1) {
        let mut rng = substream(spec.seed, attempt as u64);
        let positions: Vec<Point> = (0..spec.n)
            .map(|_| [rng.random::<f64>() * spec.width, rng.random::<f64>() * spec.height])
            .collect();
        let graph = graph_from_positions(&positions, spec.range, spec.nu_scale);
        if graph.is_connected() {
            return Ok(Deployment {
                graph,
                positions,
                attempts: attempt + 1,
            });
        }
    }
    Err(Error::CannotConnect(spec.max_retries.max(1)))
}

/// Connected random geometric graph.
pub fn gen_geometric(spec: &DeploymentSpec) -> Result<NoisyGraph> {
    deploy(spec).map(|d| d.graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Baseline {
    Random,
    MaxDegree,
    AvgDegree,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Random, Baseline::MaxDegree, Baseline::AvgDegree];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Random => "random",
            Baseline::MaxDegree => "max-degree",
            Baseline::AvgDegree => "avg-degree",
        }
    }
}

/// Every node, in the order the baseline would add them.
///
/// `degrees` may be fractional (averaged over several topologies).
pub fn baseline_order(degrees: &[f64], mode: Baseline, seed: u64) -> Vec<usize> {
    let n = degrees.len();
    let mut ids: Vec<usize> = (0..n).collect();
    match mode {
        Baseline::Random => {
            let mut rng = substream(seed, 0);
            ids = index::sample(&mut rng, n, n).into_vec();
        }
        Baseline::MaxDegree => {
            ids.sort_by(|&a, &b| degrees[b].total_cmp(&degrees[a]).then(a.cmp(&b)));
        }
        Baseline::AvgDegree => {
            let mean = degrees.iter().sum::<f64>() / n as f64;
            ids.sort_by(|&a, &b| {
                (degrees[a] - mean)
                    .abs()
                    .total_cmp(&(degrees[b] - mean).abs())
                    .then(a.cmp(&b))
            });
        }
    }
    ids
}

pub fn degrees(g: &NoisyGraph) -> Vec<f64> {
    (0..g.node_count()).map(|v| g.degree(v) as f64).collect()
}

/// `k` leaders chosen by a heuristic; ties go to the lowest id.
pub fn baseline_select(g: &NoisyGraph, k: usize, mode: Baseline, seed: u64) -> Result<LeaderSet> {
    let n = g.node_count();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let order = baseline_order(&degrees(g), mode, seed);
    LeaderSet::new(order[..k].to_vec(), n)
}

/// Group mobility: a reference point wanders, agents keep their offsets to it
/// up to a uniform jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilitySpec {
    /// Reference-point speed, m/s.
    pub speed: f64,
    /// Seconds between reference-point direction changes.
    pub step_interval: f64,
    /// Seconds between topology snapshots (leader reselection).
    pub reselect_interval: f64,
    /// Radius of each agent's uniform position error, meters.
    pub jitter: f64,
    /// Number of snapshots.
    pub frames: usize,
    pub seed: u64,
}

impl Default for MobilitySpec {
    fn default() -> Self {
        MobilitySpec {
            speed: 30.0,
            step_interval: 1.0,
            reselect_interval: 10.0,
            jitter: 30.0,
            frames: 100,
            seed: 0,
        }
    }
}

/// Snapshots of a moving formation.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    pub frames: Vec<NoisyGraph>,
    /// The formation's own graph, before any movement.
    pub initial: NoisyGraph,
    /// Jitter draws discarded because the snapshot was disconnected.
    pub rejitters: usize,
    /// Edges added or removed relative to the previous snapshot.
    pub edge_changes: Vec<usize>,
}

fn reflect(x: f64, hi: f64) -> f64 {
    let period = 2.0 * hi;
    let m = x.rem_euclid(period);
    if m > hi {
        period - m
    } else {
        m
    }
}

fn edge_symmetric_difference(a: &NoisyGraph, b: &NoisyGraph) -> usize {
    use std::collections::BTreeSet;
    let ea: BTreeSet<(usize, usize)> = a.edges().iter().map(|e| (e.i, e.j)).collect();
    let eb: BTreeSet<(usize, usize)> = b.edges().iter().map(|e| (e.i, e.j)).collect();
    ea.symmetric_difference(&eb).count()
}

pub fn mobility_trace(spec: &MobilitySpec, dspec: &DeploymentSpec) -> Result<MobilityTrace> {
    if !(spec.speed >= 0.0 && spec.step_interval > 0.0 && spec.reselect_interval > 0.0) {
        return Err(invalid("mobility", "speed must be nonnegative and intervals positive"));
    }
    if !(spec.jitter >= 0.0) {
        return Err(invalid("jitter", "must be nonnegative"));
    }
    let base = deploy(dspec)?;
    let center = [dspec.width / 2.0, dspec.height / 2.0];
    let offsets: Vec<Point> = base
        .positions
        .iter()
        .map(|p| [p[0] - center[0], p[1] - center[1]])
        .collect();

    let mut walk = substream(spec.seed, 0);
    let mut reference = center;
    let moves = (spec.reselect_interval / spec.step_interval).round().max(1.0) as usize;
    let hop = spec.speed * spec.step_interval;
    let mut frames: Vec<NoisyGraph> = Vec::with_capacity(spec.frames);
    let mut rejitters = 0;
    let mut edge_changes = Vec::with_capacity(spec.frames);

    for f in 0..spec.frames {
        for _ in 0..moves {
            let theta = walk.random::<f64>() * std::f64::consts::TAU;
            reference = [
                reflect(reference[0] + hop * theta.cos(), dspec.width),
                reflect(reference[1] + hop * theta.sin(), dspec.height),
            ];
        }
        let mut frame = None;
        for attempt in 0..dspec.max_retries.max(1) {
            let mut rng = substream(spec.seed, 1 + (f as u64) * 1_000_003 + attempt as u64);
            let pos: Vec<Point> = offsets
                .iter()
                .map(|o| {
                    // uniform in the disc
                    let r = spec.jitter * rng.random::<f64>().sqrt();
                    let a = rng.random::<f64>() * std::f64::consts::TAU;
                    [reference[0] + o[0] + r * a.cos(), reference[1] + o[1] + r * a.sin()]
                })
                .collect();
            let g = graph_from_positions(&pos, dspec.range, dspec.nu_scale);
            if g.is_connected() {
                frame = Some(g);
                break;
            }
            rejitters += 1;
        }
        let g = frame.ok_or(Error::CannotConnect(dspec.max_retries.max(1)))?;
        let prev = frames.last().unwrap_or(&base.graph);
        edge_changes.push(edge_symmetric_difference(prev, &g));
        frames.push(g);
    }
    Ok(MobilityTrace {
        frames,
        initial: base.graph,
        rejitters,
        edge_changes,
    })
}
