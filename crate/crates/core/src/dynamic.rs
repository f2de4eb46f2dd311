//! Leader selection when the topology is not fixed: random link failures,
//! switching between known topologies, and both at once.
//!
//! Every selector here builds a [`ScenarioObjective`] and hands it to the
//! greedy engine. A failure model becomes one group of sampled (or
//! enumerated) topologies; an ensemble becomes one group per topology.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{LeaderSet, NoisyGraph};
use crate::greedy::{self, Stop, Strategy};
use crate::metric::error_if_reached;
use crate::objective::{ScenarioObjective, SetObjective};
use crate::rng::{child_seed, substream};
use crate::static_select::{alpha_ratio_bound, select_static_k, SelectionResult};

/// Largest edge count the exact failure enumerator accepts.
pub const EXACT_EDGE_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum FailureMode {
    /// Every link fails independently with probability `p`.
    IndependentLinks { p: f64 },
    /// One of the listed topologies occurs, with the given probabilities.
    Scenarios {
        topologies: Vec<NoisyGraph>,
        weights: Vec<f64>,
    },
}

/// What to do with a sampled topology in which some follower cannot reach a leader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DisconnectPolicy {
    /// Drop the sample for the leader sets that leave a follower unreached.
    #[default]
    Exclude,
    /// Drop every sample whose failed graph is disconnected, regardless of
    /// the leader set. The filter does not depend on `S`, so the conditional
    /// mean keeps the supermodular structure of each sample.
    ConditionConnected,
}

/// Distribution over topologies plus the settings of its estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureModel {
    pub mode: FailureMode,
    /// Monte Carlo sample count `M`.
    pub samples: usize,
    pub seed: u64,
    pub policy: DisconnectPolicy,
    /// Enumerate every failure pattern instead of sampling.
    pub exact: bool,
}

impl FailureModel {
    pub fn independent(p: f64, samples: usize, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("p", format!("{p} is not a probability")));
        }
        if samples == 0 {
            return Err(invalid("samples", "must be at least 1"));
        }
        Ok(FailureModel {
            mode: FailureMode::IndependentLinks { p },
            samples,
            seed,
            policy: DisconnectPolicy::Exclude,
            exact: false,
        })
    }

    pub fn scenarios(
        topologies: Vec<NoisyGraph>,
        weights: Vec<f64>,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        if topologies.is_empty() {
            return Err(invalid("topologies", "empty scenario list"));
        }
        if topologies.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: topologies.len(),
                got: weights.len(),
            });
        }
        let n = topologies[0].node_count();
        if let Some(g) = topologies.iter().find(|g| g.node_count() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.node_count(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("weights", "must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("weights", format!("sum to {total}, not 1")));
        }
        if samples == 0 {
            return Err(invalid("samples", "must be at least 1"));
        }
        Ok(FailureModel {
            mode: FailureMode::Scenarios {
                topologies,
                weights,
            },
            samples,
            seed,
            policy: DisconnectPolicy::Exclude,
            exact: false,
        })
    }

    pub fn with_policy(mut self, policy: DisconnectPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_exact(mut self, exact: bool) -> Self {
        self.exact = exact;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn check_nodes(&self, g: &NoisyGraph) -> Result<()> {
        if let FailureMode::Scenarios { topologies, .. } = &self.mode {
            let m = topologies[0].node_count();
            if m != g.node_count() {
                return Err(Error::DimensionMismatch {
                    expected: g.node_count(),
                    got: m,
                });
            }
        }
        Ok(())
    }

    /// `M` topologies drawn from the model; sample `m` uses stream `m`.
    ///
    /// For independent failures each link draws one uniform number and fails
    /// when it is below `p`, so samples under the same seed are coupled
    /// across `p`.
    pub fn sample(&self, g: &NoisyGraph) -> Result<Vec<NoisyGraph>> {
        self.check_nodes(g)?;
        let out = match &self.mode {
            FailureMode::IndependentLinks { p } => (0..self.samples as u64)
                .into_par_iter()
                .map(|m| {
                    let mut rng = substream(self.seed, m);
                    let keep: Vec<bool> = (0..g.edge_count()).map(|_| rng.random::<f64>() >= *p).collect();
                    g.subgraph(|e| keep[e])
                })
                .collect(),
            FailureMode::Scenarios {
                topologies,
                weights,
            } => {
                let dist = WeightedIndex::new(weights)
                    .map_err(|e| invalid("weights", e.to_string()))?;
                (0..self.samples as u64)
                    .map(|m| topologies[dist.sample(&mut substream(self.seed, m))].clone())
                    .collect()
            }
        };
        Ok(out)
    }

    /// Every topology with positive probability, with its probability.
    pub fn distribution(&self, g: &NoisyGraph) -> Result<Vec<(NoisyGraph, f64)>> {
        self.check_nodes(g)?;
        match &self.mode {
            FailureMode::IndependentLinks { p } => {
                let e = g.edge_count();
                if e > EXACT_EDGE_CAP {
                    return Err(Error::BruteForceTooLarge {
                        subsets: 1u128 << e.min(127),
                        cap: 1u128 << EXACT_EDGE_CAP,
                    });
                }
                let mut out = Vec::new();
                for pattern in 0u32..(1u32 << e) {
                    let failed = pattern.count_ones() as i32;
                    let w = p.powi(failed) * (1.0 - p).powi(e as i32 - failed);
                    if w > 0.0 {
                        out.push((g.subgraph(|idx| pattern & (1 << idx) == 0), w));
                    }
                }
                Ok(out)
            }
            FailureMode::Scenarios {
                topologies,
                weights,
            } => Ok(topologies
                .iter()
                .cloned()
                .zip(weights.iter().copied())
                .filter(|(_, w)| *w > 0.0)
                .collect()),
        }
    }

    /// Weighted topologies the selectors average over, after the
    /// disconnection policy's `S`-independent filter.
    pub fn members(&self, g: &NoisyGraph) -> Result<Vec<(NoisyGraph, f64)>> {
        let mut members = if self.exact {
            self.distribution(g)?
        } else {
            self.sample(g)?.into_iter().map(|t| (t, 1.0)).collect()
        };
        if self.policy == DisconnectPolicy::ConditionConnected {
            members.retain(|(t, _)| t.is_connected());
        }
        if members.is_empty() {
            return Err(Error::AllSamplesDisconnected);
        }
        Ok(members)
    }

    /// Monte Carlo estimate of `E_π(R(S))`.
    pub fn expected_error(&self, g: &NoisyGraph, s: &LeaderSet) -> Result<Expectation> {
        if s.is_empty() {
            return Err(Error::EmptyLeaderSet);
        }
        if self.exact {
            return expected_error_exact(self, g, s);
        }
        let samples = self.sample(g)?;
        let values: Vec<Option<f64>> = samples
            .par_iter()
            .map(|t| self.sample_value(t, s))
            .collect();
        let kept: Vec<f64> = values.iter().flatten().copied().collect();
        if kept.is_empty() {
            return Err(Error::AllSamplesDisconnected);
        }
        let m = kept.len() as f64;
        // shifted by the first value: identical samples give that value exactly
        let mean = kept[0] + kept.iter().map(|x| x - kept[0]).sum::<f64>() / m;
        let stderr = if kept.len() > 1 {
            let ss: f64 = kept.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (m - 1.0) / m).sqrt()
        } else {
            0.0
        };
        Ok(Expectation {
            mean,
            stderr,
            disconnected_fraction: 1.0 - m / samples.len() as f64,
            used: kept.len(),
        })
    }

    fn sample_value(&self, t: &NoisyGraph, s: &LeaderSet) -> Option<f64> {
        if self.policy == DisconnectPolicy::ConditionConnected && !t.is_connected() {
            return None;
        }
        error_if_reached(t, s.as_slice())
    }
}

/// Estimate of the expected error under a failure model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    /// Mean over the samples that count under the disconnection policy.
    pub mean: f64,
    /// Standard error of `mean`; zero for exact enumeration.
    pub stderr: f64,
    /// Share of samples (or probability mass) that did not count.
    pub disconnected_fraction: f64,
    /// Samples or patterns that counted.
    pub used: usize,
}

/// `(mean, stderr, disconnected_fraction)` of `R(S)` under the failure model.
pub fn expected_error_mc(fm: &FailureModel, g: &NoisyGraph, s: &LeaderSet) -> Result<Expectation> {
    fm.expected_error(g, s)
}

/// Exact conditional expectation by enumerating every failure pattern.
pub fn expected_error_exact(fm: &FailureModel, g: &NoisyGraph, s: &LeaderSet) -> Result<Expectation> {
    if s.is_empty() {
        return Err(Error::EmptyLeaderSet);
    }
    let dist = fm.distribution(g)?;
    let (num, den, used) = dist
        .par_iter()
        .map(|(t, w)| match fm.sample_value(t, s) {
            Some(r) => (w * r, *w, 1usize),
            None => (0.0, 0.0, 0),
        })
        .reduce(|| (0.0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    if used == 0 {
        return Err(Error::AllSamplesDisconnected);
    }
    let total: f64 = dist.iter().map(|(_, w)| w).sum();
    Ok(Expectation {
        mean: num / den,
        stderr: 0.0,
        disconnected_fraction: 1.0 - den / total,
        used,
    })
}

fn failure_objective(fm: &FailureModel, g: &NoisyGraph) -> Result<ScenarioObjective> {
    // the same samples serve every candidate of every greedy step
    ScenarioObjective::new(vec![(1.0, fm.members(g)?)], 0.0)
}

/// Greedy `k` leaders minimizing the expected error.
pub fn select_k_random_failures(fm: &FailureModel, g: &NoisyGraph, k: usize) -> Result<SelectionResult> {
    let n = g.node_count();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let obj = failure_objective(fm, g)?;
    let run = greedy::run(&obj, Stop::Budget(k), Strategy::Lazy, |_| false);
    Ok(SelectionResult::from_run(run, n))
}

/// Smallest greedy set with expected error at most `α`.
pub fn select_alpha_random_failures(fm: &FailureModel, g: &NoisyGraph, alpha: f64) -> Result<SelectionResult> {
    let obj = failure_objective(fm, g)?;
    let run = greedy::run(&obj, Stop::Threshold(alpha.max(0.0)), Strategy::Lazy, |_| false);
    let mut result = SelectionResult::from_run(run, g.node_count());
    result.bound = Some(alpha_ratio_bound(&result.error_trace, result.r_max));
    Ok(result)
}

/// Known topologies `G_1..G_M` over one node set.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyEnsemble {
    topologies: Vec<NoisyGraph>,
}

impl TopologyEnsemble {
    pub fn new(topologies: Vec<NoisyGraph>) -> Result<Self> {
        let first = topologies
            .first()
            .ok_or_else(|| invalid("topologies", "ensemble is empty"))?;
        let n = first.node_count();
        for g in &topologies {
            if g.node_count() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: g.node_count(),
                });
            }
            if !g.is_connected() {
                return Err(Error::Disconnected {
                    components: g.component_count(),
                });
            }
        }
        Ok(TopologyEnsemble { topologies })
    }

    pub fn topologies(&self) -> &[NoisyGraph] {
        &self.topologies
    }

    pub fn len(&self) -> usize {
        self.topologies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topologies.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.topologies[0].node_count()
    }

    /// `R(S | L_i)` for every topology.
    /// Evaluates through the same objective the selectors minimize, so the
    /// numbers agree with their stopping checks to the last bit.
    fn objective(&self) -> ScenarioObjective {
        ScenarioObjective::ensemble(&self.topologies, 0.0).expect("nonempty ensemble of equal-size graphs")
    }

    /// `R(S | L_i)` for every topology.
    pub fn errors(&self, s: &LeaderSet) -> Result<Vec<f64>> {
        if s.is_empty() {
            return Err(Error::EmptyLeaderSet);
        }
        if let Some(v) = s.iter().find(|&v| v >= self.node_count()) {
            return Err(Error::NodeOutOfRange {
                node: v,
                n: self.node_count(),
            });
        }
        Ok(self.objective().group_values(s.as_slice()))
    }

    /// `R({v} | L_i)` indexed `[v][i]`.
    fn singletons(&self) -> Vec<Vec<f64>> {
        let obj = self.objective();
        (0..self.node_count())
            .into_par_iter()
            .map(|v| obj.group_values(&[v]))
            .collect()
    }

    /// `max_i max_v R({v} | L_i)`.
    pub fn r_max(&self) -> f64 {
        self.singletons().iter().flatten().copied().fold(0.0, f64::max)
    }

    /// `1 + log(max_v Σ_i R({v} | L_i))`, at least 1.
    pub fn default_beta(&self) -> f64 {
        let best = self
            .singletons()
            .iter()
            .map(|r| r.iter().sum::<f64>())
            .fold(0.0, f64::max);
        (1.0 + best.ln()).max(1.0)
    }
}

/// `(1/M) Σ_i R(S | L_i)`.
pub fn avg_error(ens: &TopologyEnsemble, s: &LeaderSet) -> Result<f64> {
    let e = ens.errors(s)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// `max_i R(S | L_i)` and the index of the first topology attaining it.
pub fn worst_error(ens: &TopologyEnsemble, s: &LeaderSet) -> Result<(f64, usize)> {
    let e = ens.errors(s)?;
    let mut best = (e[0], 0);
    for (i, &v) in e.iter().enumerate().skip(1) {
        if v > best.0 {
            best = (v, i);
        }
    }
    Ok(best)
}

/// `F_c(S) = (1/M) Σ_i max{R(S | L_i), c}`.
pub fn truncated_objective(ens: &TopologyEnsemble, c: f64, s: &LeaderSet) -> Result<f64> {
    let e = ens.errors(s)?;
    Ok(e.iter().map(|&r| r.max(c)).sum::<f64>() / e.len() as f64)
}

/// Settings of the bisection in [`select_switching_k`]; `None` picks the default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SwitchingParams {
    /// Size inflation `β ≥ 1`; default `max(1, 1 + log max_v Σ_i R({v}|L_i))`.
    pub beta: Option<f64>,
    /// Bisection width `δ > 0`; default `1/M`.
    pub delta: Option<f64>,
}

/// Result of a bisection-based switching selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingResult {
    pub selection: SelectionResult,
    /// Smallest accepted error level; every topology's error is at most this.
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    /// False when even the initial level could not be met within `βk` leaders.
    pub feasible: bool,
    pub iterations: usize,
}

/// Runs greedy on `F_α` until every group is at or below `α`, giving up once
/// the set exceeds `cap` leaders.
fn cover_at(obj: &ScenarioObjective, alpha: f64, cap: usize) -> (greedy::GreedyRun, bool) {
    let mut obj = obj.clone();
    obj.set_floor(alpha);
    let n = obj.ground_size();
    let run = greedy::run(&obj, Stop::Budget((cap + 1).min(n)), Strategy::Lazy, |ctx| ctx.excess() == 0.0);
    let met = obj.prepare(&run.picks).excess() == 0.0;
    (run, met)
}

fn bisect(
    obj: &ScenarioObjective,
    k: usize,
    alpha_max: f64,
    beta: f64,
    delta: f64,
) -> Result<SwitchingResult> {
    let n = obj.ground_size();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if !(beta >= 1.0) {
        return Err(invalid("beta", format!("{beta} is below 1")));
    }
    if !(delta > 0.0) {
        return Err(invalid("delta", format!("{delta} is not positive")));
    }
    let cap = ((beta * k as f64 + 1e-9).floor() as usize).max(1);
    let accept = |run: &greedy::GreedyRun, met: bool| met && run.picks.len() <= cap;

    let (mut best, met) = cover_at(obj, alpha_max, cap);
    let feasible = accept(&best, met);
    let mut best_alpha = alpha_max;
    let (mut lo, mut hi) = (0.0, alpha_max);
    let mut iterations = 0;
    while feasible && hi - lo >= delta {
        let mid = 0.5 * (lo + hi);
        let (run, met) = cover_at(obj, mid, cap);
        iterations += 1;
        if accept(&run, met) {
            hi = mid;
            best = run;
            best_alpha = mid;
        } else {
            lo = mid;
        }
    }
    Ok(SwitchingResult {
        selection: SelectionResult::from_run(best, n),
        alpha: best_alpha,
        beta,
        delta,
        feasible,
        iterations,
    })
}

/// At most `βk` leaders whose worst-case error over the ensemble is small,
/// found by bisection on the error level with the truncated objective.
pub fn select_switching_k(ens: &TopologyEnsemble, k: usize, params: SwitchingParams) -> Result<SwitchingResult> {
    let beta = params.beta.unwrap_or_else(|| ens.default_beta());
    let delta = params.delta.unwrap_or(1.0 / ens.len() as f64);
    let obj = ScenarioObjective::ensemble(ens.topologies(), 0.0)?;
    bisect(&obj, k, singleton_ceiling(&obj), beta, delta)
}

/// Largest finite group mean over single leaders, read through the objective
/// itself so the first cover at this level is met exactly.
fn singleton_ceiling(obj: &ScenarioObjective) -> f64 {
    (0..obj.ground_size())
        .flat_map(|v| group_means(obj, &[v]))
        .filter(|e| e.is_finite())
        .fold(0.0, f64::max)
}

/// Smallest greedy set with `R(S | L_i) ≤ α` on every topology.
pub fn select_alpha_switching(ens: &TopologyEnsemble, alpha: f64) -> Result<SelectionResult> {
    let alpha = alpha.max(0.0);
    let obj = ScenarioObjective::ensemble(ens.topologies(), alpha)?;
    let n = ens.node_count();
    let run = greedy::run(&obj, Stop::Budget(n), Strategy::Lazy, |ctx| ctx.excess() == 0.0);
    Ok(SelectionResult::from_run(run, n))
}

/// How per-topology expected errors are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregate {
    /// `(1/M) Σ_i E_πi(R(S | L_i))`.
    Avg,
    /// `max_i E_πi(R(S | L_i))`, through the truncated objective.
    Worst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// At most `k` leaders (`βk` in worst mode).
    K(usize),
    /// Error at most `α`.
    Alpha(f64),
}

/// Selection for switching topologies whose links also fail at random.
///
/// Failures of different topologies are sampled independently, each from its
/// own seed.
pub fn switching_with_failures(
    ens: &TopologyEnsemble,
    fms: &[FailureModel],
    mode: Aggregate,
    target: Target,
    params: SwitchingParams,
) -> Result<SwitchingResult> {
    if fms.len() != ens.len() {
        return Err(Error::DimensionMismatch {
            expected: ens.len(),
            got: fms.len(),
        });
    }
    let m = ens.len() as f64;
    let groups = ens
        .topologies()
        .iter()
        .zip(fms)
        .map(|(g, fm)| Ok((1.0 / m, fm.members(g)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut obj = ScenarioObjective::new(groups, 0.0)?;
    let n = ens.node_count();
    let beta = params.beta.unwrap_or_else(|| ens.default_beta());
    let delta = params.delta.unwrap_or(1.0 / m);

    match (mode, target) {
        (Aggregate::Avg, Target::K(k)) => {
            if k == 0 || k > n {
                return Err(Error::InvalidK { k, n });
            }
            let run = greedy::run(&obj, Stop::Budget(k), Strategy::Lazy, |_| false);
            let selection = SelectionResult::from_run(run, n);
            let alpha = selection.final_error();
            Ok(plain(selection, alpha, alpha.is_finite()))
        }
        (Aggregate::Avg, Target::Alpha(alpha)) => {
            let alpha = alpha.max(0.0);
            let run = greedy::run(&obj, Stop::Threshold(alpha), Strategy::Lazy, |_| false);
            let met = run.final_value() <= alpha;
            Ok(plain(SelectionResult::from_run(run, n), alpha, met))
        }
        (Aggregate::Worst, Target::K(k)) => {
            // per-topology expectations of single leaders bound the search range
            bisect(&obj, k, singleton_ceiling(&obj), beta, delta)
        }
        (Aggregate::Worst, Target::Alpha(alpha)) => {
            let alpha = alpha.max(0.0);
            obj.set_floor(alpha);
            let run = greedy::run(&obj, Stop::Budget(n), Strategy::Lazy, |ctx| ctx.excess() == 0.0);
            let met = obj.prepare(&run.picks).excess() == 0.0;
            Ok(plain(SelectionResult::from_run(run, n), alpha, met))
        }
    }
}

fn plain(selection: SelectionResult, alpha: f64, feasible: bool) -> SwitchingResult {
    SwitchingResult {
        selection,
        alpha,
        beta: 1.0,
        delta: 0.0,
        feasible,
        iterations: 0,
    }
}

/// Conditional mean of every group at `set`, read through one-group objectives.
fn group_means(obj: &ScenarioObjective, set: &[usize]) -> Vec<f64> {
    obj.group_values(set)
}

/// Independent static-k selection on each topology.
pub fn per_topology_refresh(ens: &TopologyEnsemble, k: usize) -> Result<Vec<SelectionResult>> {
    ens.topologies().iter().map(|g| select_static_k(g, k)).collect()
}

/// Failure models sharing `p` and `M`, one per topology, with derived seeds.
pub fn independent_models(ens: &TopologyEnsemble, p: f64, samples: usize, seed: u64) -> Result<Vec<FailureModel>> {
    (0..ens.len())
        .map(|i| FailureModel::independent(p, samples, child_seed(seed, i as u64)))
        .collect()
}
