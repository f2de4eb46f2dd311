use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{baseline_order, degrees, deploy, mobility_trace, Baseline, DeploymentSpec, MobilitySpec};
use crate::dynamic::{
    expected_error_mc, independent_models, select_alpha_switching, select_k_random_failures,
    switching_with_failures, Aggregate, FailureModel, SwitchingParams, Target, TopologyEnsemble,
};
use crate::error::{Error, Result};
use crate::graph::{LeaderSet, NoisyGraph};
use crate::metric::{error_value, max_singleton_error};
use crate::online::init_online;
use crate::rng::child_seed;
use crate::static_select::{select_static_alpha, select_static_k};

pub const SUPERMODULAR: &str = "supermodular";
/// Placeholder for externally computed convex-relaxation results.
pub const CONVEX: &str = "convex";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    /// Error against the number of leaders.
    Fig1a,
    /// Leaders needed against the normalized error bound.
    Fig1b,
    /// Error against network size with `k = n/10`.
    Fig2a,
    /// Expected error against link-failure probability.
    Fig2b,
    /// Leaders needed against the number of switching topologies.
    Fig3a,
    /// As `Fig3a` with link failures.
    Fig3b,
    /// Error over time under group mobility.
    Fig4,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Fig1a,
        Experiment::Fig1b,
        Experiment::Fig2a,
        Experiment::Fig2b,
        Experiment::Fig3a,
        Experiment::Fig3b,
        Experiment::Fig4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig1a => "fig1a",
            Experiment::Fig1b => "fig1b",
            Experiment::Fig2a => "fig2a",
            Experiment::Fig2b => "fig2b",
            Experiment::Fig3a => "fig3a",
            Experiment::Fig3b => "fig3b",
            Experiment::Fig4 => "fig4",
        }
    }

    fn x_name(self) -> &'static str {
        match self {
            Experiment::Fig1a => "k",
            Experiment::Fig1b => "alpha",
            Experiment::Fig2a => "n",
            Experiment::Fig2b => "p",
            Experiment::Fig3a | Experiment::Fig3b => "topologies",
            Experiment::Fig4 => "t",
        }
    }

    fn value_name(self) -> &'static str {
        match self {
            Experiment::Fig1b | Experiment::Fig3a | Experiment::Fig3b => "leaders_needed",
            _ => "error",
        }
    }

    fn default_grid(self) -> Vec<f64> {
        match self {
            Experiment::Fig1a => (1..=6).map(f64::from).collect(),
            Experiment::Fig1b => (1..=9).map(|i| f64::from(i) / 10.0).collect(),
            Experiment::Fig2a => vec![20.0, 40.0, 60.0, 80.0, 100.0],
            Experiment::Fig2b => vec![0.0, 0.05, 0.1, 0.15, 0.2],
            Experiment::Fig3a | Experiment::Fig3b => (1..=10).map(f64::from).collect(),
            Experiment::Fig4 => Vec::new(),
        }
    }

    fn default_n(self) -> usize {
        match self {
            Experiment::Fig1a => 25,
            _ => 100,
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Sweep settings; unset fields fall back to the experiment's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Sweep values; `fig4` ignores it.
    pub grid: Option<Vec<f64>>,
    /// Leader count for fixed-size experiments (`fig2b`, `fig4`).
    pub k: Option<usize>,
    /// Monte Carlo samples used while selecting.
    pub samples: usize,
    /// Independent samples used to score every method.
    pub eval_samples: usize,
    /// Failure probability for `fig3b`.
    pub p: f64,
    /// Error target of `fig3a`/`fig3b` as a fraction of the first topology's `R_max`.
    pub alpha: f64,
    /// Online learning rate for `fig4`.
    pub beta: f64,
    /// Geometry; `n` and `seed` are overridden per trial.
    pub deployment: DeploymentSpec,
    pub mobility: MobilitySpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: None,
            trials: 10,
            seed: 0,
            grid: None,
            k: None,
            samples: 50,
            eval_samples: 200,
            p: 0.05,
            alpha: 0.2,
            beta: 0.5,
            deployment: DeploymentSpec::default(),
            mobility: MobilitySpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub method: String,
    pub x: f64,
    pub trial: usize,
    /// Empty for placeholder methods and for points no sample could score.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub experiment: Experiment,
    pub x_name: String,
    pub value_name: String,
    pub rows: Vec<Row>,
}

impl Dataset {
    /// Long format: `method,x,trial,<value>`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("method,{},trial,{}\n", self.x_name, self.value_name);
        for r in &self.rows {
            let v = r.value.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.method, r.x, r.trial, v));
        }
        out
    }

    /// Mean value of `method` at `x` over the trials that produced one.
    pub fn mean(&self, method: &str, x: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.x == x)
            .filter_map(|r| r.value)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Distinct sweep values in order.
    pub fn xs(&self) -> Vec<f64> {
        let mut xs: Vec<f64> = self.rows.iter().map(|r| r.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    }
}

fn row(method: &str, x: f64, trial: usize, value: Option<f64>) -> Row {
    Row {
        method: method.to_string(),
        x,
        trial,
        value,
    }
}

/// Runs a sweep. Trials run in parallel; rows come back sorted by
/// `(method, x, trial)`.
pub fn run_experiment(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Dataset> {
    if cfg.trials == 0 {
        return Err(crate::error::invalid("trials", "must be at least 1"));
    }
    let grid = cfg.grid.clone().unwrap_or_else(|| experiment.default_grid());
    let per_trial = |trial: usize| -> Result<Vec<Row>> {
        let seed = child_seed(cfg.seed, trial as u64);
        match experiment {
            Experiment::Fig1a => fig1a(cfg, &grid, trial, seed),
            Experiment::Fig1b => fig1b(cfg, &grid, trial, seed),
            Experiment::Fig2a => fig2a(cfg, &grid, trial, seed),
            Experiment::Fig2b => fig2b(cfg, &grid, trial, seed),
            Experiment::Fig3a => fig3(cfg, &grid, trial, seed, false),
            Experiment::Fig3b => fig3(cfg, &grid, trial, seed, true),
            Experiment::Fig4 => fig4(cfg, trial, seed),
        }
    };
    let chunks: Vec<Vec<Row>> = (0..cfg.trials)
        .into_par_iter()
        .map(per_trial)
        .collect::<Result<_>>()?;
    let mut rows: Vec<Row> = chunks.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.x.total_cmp(&b.x))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(Dataset {
        experiment,
        x_name: experiment.x_name().to_string(),
        value_name: experiment.value_name().to_string(),
        rows,
    })
}

fn deployment(cfg: &ExperimentConfig, n: usize, seed: u64) -> DeploymentSpec {
    DeploymentSpec {
        n,
        seed,
        ..cfg.deployment.clone()
    }
}

fn graph_for(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<NoisyGraph> {
    deploy(&deployment(cfg, n, seed)).map(|d| d.graph)
}

fn baseline_seed(seed: u64) -> u64 {
    child_seed(seed, 0xBA5E)
}

/// Smallest prefix length of `order` whose error `err(prefix)` is within
/// every target, scanning prefixes in increasing length.
fn prefix_needs(n: usize, order: &[usize], targets: &[f64], err: impl Fn(&[usize]) -> Option<f64>) -> Vec<usize> {
    let lowest = targets.iter().copied().fold(f64::INFINITY, f64::min);
    let mut needs = vec![n; targets.len()];
    let mut open = targets.len();
    for m in 1..=n {
        let Some(e) = err(&order[..m]) else { continue };
        for (need, &t) in needs.iter_mut().zip(targets) {
            if *need == n && m < n && e <= t {
                *need = m;
                open -= 1;
            }
        }
        if open == 0 || e <= lowest {
            break;
        }
    }
    needs
}

/// As [`prefix_needs`] for an error that never increases along the prefix,
/// found by bisection.
fn prefix_needs_monotone(n: usize, order: &[usize], targets: &[f64], err: impl Fn(&[usize]) -> f64) -> Vec<usize> {
    let mut seen = std::collections::HashMap::new();
    let mut at = |m: usize| *seen.entry(m).or_insert_with(|| err(&order[..m]));
    targets
        .iter()
        .map(|&t| {
            // smallest m in 1..n with err(m) <= t, else n
            let (mut lo, mut hi) = (1, n);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if at(mid) <= t {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            lo
        })
        .collect()
}

fn fig1a(cfg: &ExperimentConfig, grid: &[f64], trial: usize, seed: u64) -> Result<Vec<Row>> {
    let n = cfg.n.unwrap_or(Experiment::Fig1a.default_n());
    let g = graph_for(cfg, n, seed)?;
    let ks: Vec<usize> = grid.iter().map(|&k| k as usize).collect();
    let kmax = ks.iter().copied().max().unwrap_or(1).clamp(1, n);
    let greedy = select_static_k(&g, kmax)?;
    let mut rows = Vec::new();
    for &k in &ks {
        let k = k.clamp(1, n);
        let x = k as f64;
        let m = k.min(greedy.error_trace.len());
        rows.push(row(SUPERMODULAR, x, trial, Some(greedy.error_trace[m - 1])));
        for b in Baseline::ALL {
            let order = baseline_order(&degrees(&g), b, baseline_seed(seed));
            rows.push(row(b.name(), x, trial, Some(error_value(&g, &order[..k])?)));
        }
        rows.push(row(CONVEX, x, trial, None));
    }
    Ok(rows)
}

fn fig1b(cfg: &ExperimentConfig, grid: &[f64], trial: usize, seed: u64) -> Result<Vec<Row>> {
    let n = cfg.n.unwrap_or(Experiment::Fig1b.default_n());
    let g = graph_for(cfg, n, seed)?;
    let r_max = max_singleton_error(&g);
    let targets: Vec<f64> = grid.iter().map(|a| a * r_max).collect();
    let lowest = targets.iter().copied().fold(f64::INFINITY, f64::min);
    // the greedy order does not depend on the bound, so one trace serves every target
    let trace = select_static_alpha(&g, lowest).error_trace;
    let mut rows = Vec::new();
    for (&a, &t) in grid.iter().zip(&targets) {
        let need = trace.iter().position(|&e| e <= t).map_or(n, |i| i + 1);
        rows.push(row(SUPERMODULAR, a, trial, Some(need as f64)));
    }
    for b in Baseline::ALL {
        let order = baseline_order(&degrees(&g), b, baseline_seed(seed));
        let needs = prefix_needs_monotone(n, &order, &targets, |p| error_value(&g, p).expect("connected graph"));
        for (&a, need) in grid.iter().zip(needs) {
            rows.push(row(b.name(), a, trial, Some(need as f64)));
        }
    }
    Ok(rows)
}

fn fig2a(cfg: &ExperimentConfig, grid: &[f64], trial: usize, seed: u64) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for &x in grid {
        let n = x as usize;
        let k = ((n as f64 * 0.1).round() as usize).clamp(1, n);
        let s = child_seed(seed, n as u64);
        let g = graph_for(cfg, n, s)?;
        rows.push(row(SUPERMODULAR, x, trial, Some(select_static_k(&g, k)?.final_error())));
        for b in Baseline::ALL {
            let order = baseline_order(&degrees(&g), b, baseline_seed(s));
            rows.push(row(b.name(), x, trial, Some(error_value(&g, &order[..k])?)));
        }
    }
    Ok(rows)
}

fn fig2b(cfg: &ExperimentConfig, grid: &[f64], trial: usize, seed: u64) -> Result<Vec<Row>> {
    let n = cfg.n.unwrap_or(Experiment::Fig2b.default_n());
    let k = cfg.k.unwrap_or(10).clamp(1, n);
    let g = graph_for(cfg, n, seed)?;
    let mut rows = Vec::new();
    for &p in grid {
        let select = FailureModel::independent(p, cfg.samples, child_seed(seed, 1))?;
        let eval = FailureModel::independent(p, cfg.eval_samples, child_seed(seed, 2))?;
        let score = |s: &LeaderSet| match expected_error_mc(&eval, &g, s) {
            Ok(e) => Ok(Some(e.mean)),
            Err(Error::AllSamplesDisconnected) => Ok(None),
            Err(e) => Err(e),
        };
        let chosen = select_k_random_failures(&select, &g, k)?;
        rows.push(row(SUPERMODULAR, p, trial, score(&chosen.leaders)?));
        for b in Baseline::ALL {
            let order = baseline_order(&degrees(&g), b, baseline_seed(seed));
            let s = LeaderSet::new(order[..k].to_vec(), n)?;
            rows.push(row(b.name(), p, trial, score(&s)?));
        }
    }
    Ok(rows)
}

fn fig3(cfg: &ExperimentConfig, grid: &[f64], trial: usize, seed: u64, failures: bool) -> Result<Vec<Row>> {
    let exp = if failures { Experiment::Fig3b } else { Experiment::Fig3a };
    let n = cfg.n.unwrap_or(exp.default_n());
    let m_max = grid.iter().map(|&m| m as usize).max().unwrap_or(1).max(1);
    let all: Vec<NoisyGraph> = (0..m_max)
        .into_par_iter()
        .map(|i| graph_for(cfg, n, child_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    let target = cfg.alpha * max_singleton_error(&all[0]);
    let mut rows = Vec::new();
    for &x in grid {
        let m = (x as usize).clamp(1, m_max);
        let ens = TopologyEnsemble::new(all[..m].to_vec())?;
        let mean_deg: Vec<f64> = (0..n)
            .map(|v| all[..m].iter().map(|g| g.degree(v) as f64).sum::<f64>() / m as f64)
            .collect();
        if failures {
            let select = independent_models(&ens, cfg.p, cfg.samples, child_seed(seed, 1 << 20))?;
            let eval = independent_models(&ens, cfg.p, cfg.eval_samples, child_seed(seed, 1 << 21))?;
            let r = switching_with_failures(&ens, &select, Aggregate::Worst, Target::Alpha(target), SwitchingParams::default())?;
            let size = if r.feasible { r.selection.leaders.len() } else { n };
            rows.push(row(SUPERMODULAR, x, trial, Some(size as f64)));
            let worst = |p: &[usize]| -> Option<f64> {
                let s = LeaderSet::new(p.to_vec(), n).ok()?;
                let mut w: f64 = 0.0;
                for (g, fm) in ens.topologies().iter().zip(&eval) {
                    w = w.max(expected_error_mc(fm, g, &s).ok()?.mean);
                }
                Some(w)
            };
            for b in Baseline::ALL {
                let order = baseline_order(&mean_deg, b, baseline_seed(seed));
                let need = prefix_needs(n, &order, &[target], worst)[0];
                rows.push(row(b.name(), x, trial, Some(need as f64)));
            }
        } else {
            let r = select_alpha_switching(&ens, target)?;
            rows.push(row(SUPERMODULAR, x, trial, Some(r.leaders.len() as f64)));
            let worst = |p: &[usize]| -> f64 {
                let s = LeaderSet::new(p.to_vec(), n).expect("prefix of a permutation");
                ens.errors(&s).expect("connected topologies").into_iter().fold(0.0, f64::max)
            };
            for b in Baseline::ALL {
                let order = baseline_order(&mean_deg, b, baseline_seed(seed));
                let need = prefix_needs_monotone(n, &order, &[target], worst)[0];
                rows.push(row(b.name(), x, trial, Some(need as f64)));
            }
        }
    }
    Ok(rows)
}

fn fig4(cfg: &ExperimentConfig, trial: usize, seed: u64) -> Result<Vec<Row>> {
    let n = cfg.n.unwrap_or(Experiment::Fig4.default_n());
    let k = cfg.k.unwrap_or(10).clamp(1, n);
    let mspec = MobilitySpec {
        seed: child_seed(seed, 7),
        ..cfg.mobility.clone()
    };
    let trace = mobility_trace(&mspec, &deployment(cfg, n, seed))?;
    let mut online = init_online(n, k, cfg.beta, child_seed(seed, 8))?;
    let mut rows = Vec::new();
    let mut previous = &trace.initial;
    for (t, g) in trace.frames.iter().enumerate() {
        let x = (t + 1) as f64;
        let out = online.step(g)?;
        rows.push(row(SUPERMODULAR, x, trial, Some(out.realized_error)));
        for b in Baseline::ALL {
            // heuristics only see the last revealed topology; random redraws every frame
            let order = baseline_order(&degrees(previous), b, child_seed(baseline_seed(seed), t as u64));
            rows.push(row(b.name(), x, trial, Some(error_value(g, &order[..k])?)));
        }
        previous = g;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            n: Some(12),
            trials,
            seed: 3,
            samples: 10,
            eval_samples: 20,
            k: Some(2),
            ..Default::default()
        }
    }

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert_eq!(
            "fig9".parse::<Experiment>().unwrap_err(),
            Error::UnknownExperiment("fig9".into())
        );
    }

    #[test]
    fn row_counts_match_grid() {
        let cfg = small(2);
        let d = run_experiment(Experiment::Fig1a, &cfg).unwrap();
        assert_eq!(d.rows.len(), 6 * 5 * 2);
        let d = run_experiment(Experiment::Fig1b, &cfg).unwrap();
        assert_eq!(d.rows.len(), 9 * 4 * 2);
        let mut c = cfg.clone();
        c.grid = Some(vec![1.0, 2.0, 3.0]);
        let d = run_experiment(Experiment::Fig3a, &c).unwrap();
        assert_eq!(d.rows.len(), 3 * 4 * 2);
        let mut c = cfg.clone();
        c.mobility.frames = 5;
        let d = run_experiment(Experiment::Fig4, &c).unwrap();
        assert_eq!(d.rows.len(), 5 * 4 * 2);
    }

    #[test]
    fn rows_are_sorted_and_reproducible() {
        let cfg = small(3);
        let a = run_experiment(Experiment::Fig2b, &cfg).unwrap();
        let b = run_experiment(Experiment::Fig2b, &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        for w in a.rows.windows(2) {
            let key = |r: &Row| (r.method.clone(), r.x, r.trial);
            let (ka, kb) = (key(&w[0]), key(&w[1]));
            assert!(ka.0 < kb.0 || (ka.0 == kb.0 && (ka.1 < kb.1 || (ka.1 == kb.1 && ka.2 < kb.2))));
        }
        assert!(a.to_csv().starts_with("method,p,trial,error\n"));
    }

    #[test]
    fn no_failures_matches_static_comparison() {
        let mut cfg = small(2);
        cfg.grid = Some(vec![0.0]);
        let d = run_experiment(Experiment::Fig2b, &cfg).unwrap();
        for trial in 0..2 {
            let g = graph_for(&cfg, 12, child_seed(cfg.seed, trial as u64)).unwrap();
            let direct = select_static_k(&g, 2).unwrap().final_error();
            let got = d
                .rows
                .iter()
                .find(|r| r.method == SUPERMODULAR && r.trial == trial)
                .unwrap()
                .value
                .unwrap();
            assert!((got - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn one_topology_is_the_static_alpha_sweep() {
        let mut cfg = small(1);
        cfg.grid = Some(vec![1.0]);
        let d = run_experiment(Experiment::Fig3a, &cfg).unwrap();
        let g = graph_for(&cfg, 12, child_seed(child_seed(cfg.seed, 0), 0)).unwrap();
        let target = cfg.alpha * max_singleton_error(&g);
        let want = select_static_alpha(&g, target).leaders.len() as f64;
        assert_eq!(d.mean(SUPERMODULAR, 1.0), Some(want));
    }
}
