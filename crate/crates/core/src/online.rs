//! Leader selection for topologies that change arbitrarily between steps.
//!
//! Each of the `k` leader positions keeps a weight per node. At step `t` the
//! leaders `S_t` are drawn from the normalized weights; once `G_t` is
//! revealed, position `i` is scored against the greedy choice on `G_t` given
//! the first `i − 1` drawn leaders:
//!
//! ```text
//! l_{t,i,j} = 1 − gain_t(j) / gain_t(s_opt),   w_{t+1,i}(j) = β^{l_{t,i,j}} · w_{t,i}(j)
//! ```
//!
//! and the next leaders are drawn from the updated weights.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{LeaderSet, NoisyGraph};
use crate::greedy::{self, Stop, Strategy};
use crate::metric::{error_value, singleton_errors, GAIN_TOLERANCE};
use crate::objective::{ScenarioObjective, SetObjective};
use crate::rng::substream;

/// Largest number of candidate sets the exact hindsight search will visit.
pub const HINDSIGHT_CAP: u128 = 250_000;

/// Weights of every position plus the leaders chosen for the coming step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineState {
    n: usize,
    k: usize,
    beta: f64,
    seed: u64,
    t: u64,
    /// Natural log of `w_{t,i}(j)`; kept in log space so weights stay positive.
    log_weights: Vec<Vec<f64>>,
    current: LeaderSet,
}

/// What one step revealed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// 1-based step index.
    pub t: u64,
    pub selected: LeaderSet,
    /// `R(S_t | L_t)`.
    pub realized_error: f64,
    /// `losses[i][j] = l_{t,i,j}`.
    pub losses: Vec<Vec<f64>>,
    /// `s_opt` for every position.
    pub optima: Vec<usize>,
    /// Positions whose best gain was zero; their weights were left alone.
    pub degenerate: Vec<bool>,
}

pub fn init_online(n: usize, k: usize, beta: f64, seed: u64) -> Result<OnlineState> {
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid("beta", format!("{beta} is outside (0, 1]")));
    }
    let log_weights = vec![vec![0.0; n]; k];
    let current = draw(&log_weights, n, &mut substream(seed, 0));
    Ok(OnlineState {
        n,
        k,
        beta,
        seed,
        t: 0,
        log_weights,
        current,
    })
}

/// One leader per position, each from its distribution with earlier picks removed.
fn draw<R: Rng>(log_weights: &[Vec<f64>], n: usize, rng: &mut R) -> LeaderSet {
    let mut picked = vec![false; n];
    let mut out = LeaderSet::empty();
    for lw in log_weights {
        let mut probs = normalize(lw);
        for (j, p) in probs.iter_mut().enumerate() {
            if picked[j] {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        let x = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut choice = None;
        for (j, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                choice = Some(j);
                if x < acc {
                    break;
                }
            }
        }
        // all remaining mass underflowed: fall back to the lowest free id
        let j = choice.unwrap_or_else(|| (0..n).find(|&j| !picked[j]).expect("k ≤ n"));
        picked[j] = true;
        out.push(j).expect("distinct by construction");
    }
    out
}

fn normalize(log_w: &[f64]) -> Vec<f64> {
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

impl OnlineState {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Steps taken so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Leaders for the next step.
    pub fn current(&self) -> &LeaderSet {
        &self.current
    }

    /// `π_{t,i}`, the normalized weights of position `i`.
    pub fn distribution(&self, i: usize) -> Vec<f64> {
        normalize(&self.log_weights[i])
    }

    /// Weights of position `i` scaled so the largest is 1.
    pub fn weights(&self, i: usize) -> Vec<f64> {
        let top = self.log_weights[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.log_weights[i].iter().map(|l| (l - top).exp()).collect()
    }

    /// Most likely node of every position (lowest id on ties).
    pub fn argmax(&self) -> Vec<usize> {
        self.log_weights
            .iter()
            .map(|lw| {
                let mut best = 0;
                for j in 1..lw.len() {
                    if lw[j] > lw[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Plays the current leaders on `g`, learns from `g`, and draws the next leaders.
    pub fn step(&mut self, g: &NoisyGraph) -> Result<StepOutcome> {
        if g.node_count() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: g.node_count(),
            });
        }
        if !g.is_connected() {
            return Err(Error::Disconnected {
                components: g.component_count(),
            });
        }
        let selected = self.current.clone();
        let realized_error = error_value(g, selected.as_slice())?;

        let singles = singleton_errors(g);
        let r_max = singles.iter().copied().fold(0.0, f64::max);
        let tolerance = GAIN_TOLERANCE * r_max;
        let obj = ScenarioObjective::single(g);
        let prefix = selected.as_slice();

        let mut losses = Vec::with_capacity(self.k);
        let mut optima = Vec::with_capacity(self.k);
        let mut degenerate = Vec::with_capacity(self.k);
        for i in 0..self.k {
            let gains = position_gains(&obj, &singles, r_max, &prefix[..i]);
            let mut opt = 0;
            for j in 1..self.n {
                if gains[j] > gains[opt] {
                    opt = j;
                }
            }
            let best = gains[opt];
            let flat = !(best > tolerance);
            let loss: Vec<f64> = if flat {
                vec![0.0; self.n]
            } else {
                gains.iter().map(|&gj| (1.0 - gj / best).clamp(0.0, 1.0)).collect()
            };
            if !flat {
                let lb = self.beta.ln();
                for (lw, l) in self.log_weights[i].iter_mut().zip(&loss) {
                    *lw += l * lb;
                }
            }
            losses.push(loss);
            optima.push(opt);
            degenerate.push(flat);
        }

        self.t += 1;
        self.current = draw(&self.log_weights, self.n, &mut substream(self.seed, self.t));
        Ok(StepOutcome {
            t: self.t,
            selected,
            realized_error,
            losses,
            optima,
            degenerate,
        })
    }
}

/// `R(P) − R(P ∪ {j})` on one graph for every `j`; zero for `j ∈ P`. The
/// empty prefix uses `R_max` in place of `R(∅)`.
fn position_gains(obj: &ScenarioObjective, singles: &[f64], r_max: f64, prefix: &[usize]) -> Vec<f64> {
    let n = singles.len();
    if prefix.is_empty() {
        return singles.iter().map(|r| r_max - r).collect();
    }
    let ctx = obj.prepare(prefix);
    (0..n)
        .into_par_iter()
        .map(|j| if prefix.contains(&j) { 0.0 } else { obj.gain(&ctx, prefix, j) })
        .collect()
}

/// Functional form of [`OnlineState::step`].
pub fn online_step(mut st: OnlineState, g: &NoisyGraph) -> Result<(OnlineState, StepOutcome)> {
    let out = st.step(g)?;
    Ok((st, out))
}

/// Runs the learner over a whole trace.
pub fn run_online(trace: &[NoisyGraph], k: usize, beta: f64, seed: u64) -> Result<(OnlineState, Vec<StepOutcome>)> {
    let n = trace
        .first()
        .ok_or_else(|| invalid("trace", "no topologies"))?
        .node_count();
    let mut st = init_online(n, k, beta, seed)?;
    let mut history = Vec::with_capacity(trace.len());
    for g in trace {
        history.push(st.step(g)?);
    }
    Ok((st, history))
}

/// Cumulative regret after `t` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub t: u64,
    pub online_error: f64,
    pub online_cumulative: f64,
    /// `min_{|S|=k} Σ_{τ≤t} R(S | L_τ)` (or the greedy stand-in).
    pub hindsight_cumulative: f64,
    /// `(1 − 1/e)·online_cumulative − hindsight_cumulative`.
    pub k_regret: f64,
    /// `online_cumulative − hindsight_cumulative`.
    pub undiscounted: f64,
    /// `√(R_max · k · t · ln n)`.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub points: Vec<RegretPoint>,
    /// Best fixed set in hindsight over the whole trace.
    pub hindsight_set: LeaderSet,
    /// False when the hindsight term came from greedy on the summed objective.
    pub hindsight_exact: bool,
    pub r_max: f64,
}

impl RegretReport {
    /// `t,error,K` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,error,K,undiscounted,reference\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.t, p.online_error, p.k_regret, p.undiscounted, p.reference
            ));
        }
        out
    }

    /// Least-squares slope of `log K` against `log t` over the points with `K > 0`.
    pub fn k_slope(&self) -> Option<f64> {
        log_log_slope(self.points.iter().map(|p| (p.t as f64, p.k_regret)))
    }

    pub fn undiscounted_slope(&self) -> Option<f64> {
        log_log_slope(self.points.iter().map(|p| (p.t as f64, p.undiscounted)))
    }

    /// `K` never grows linearly: it stays at or below zero, or its log-log
    /// slope is below 1.
    pub fn sublinear(&self) -> bool {
        if self.points.iter().all(|p| p.k_regret <= 0.0) {
            return true;
        }
        self.k_slope().is_some_and(|s| s < 1.0)
    }
}

/// Slope of the least-squares line through `(ln x, ln y)` for `y > 0`.
pub fn log_log_slope(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact `argmin_{|S|=k} Σ_t R(S | L_t)` over the whole trace, and
/// `min_{|S|=k} Σ_{τ≤t} R(S | L_τ)` for every prefix length `t`.
pub fn brute_force_hindsight(topologies: &[NoisyGraph], k: usize) -> Result<(LeaderSet, Vec<f64>)> {
    let n = topologies[0].node_count();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let count = binomial(n, k);
    if count > HINDSIGHT_CAP {
        return Err(Error::BruteForceTooLarge {
            subsets: count,
            cap: HINDSIGHT_CAP,
        });
    }
    let sets = subsets(n, k);
    // cumulative error of every set after every step
    let table: Vec<Vec<f64>> = sets
        .par_iter()
        .map(|s| {
            let mut acc = 0.0;
            topologies
                .iter()
                .map(|g| {
                    acc += error_value(g, s).expect("connected topology");
                    acc
                })
                .collect()
        })
        .collect();
    let t_len = topologies.len();
    let curve: Vec<f64> = (0..t_len)
        .map(|t| table.iter().map(|row| row[t]).fold(f64::INFINITY, f64::min))
        .collect();
    let mut best = 0;
    for (i, row) in table.iter().enumerate() {
        if row[t_len - 1] < table[best][t_len - 1] {
            best = i;
        }
    }
    Ok((LeaderSet::new(sets[best].clone(), n)?, curve))
}

/// Regret of an online run against the best fixed `k`-set in hindsight.
///
/// When `C(n, k)` exceeds [`HINDSIGHT_CAP`], greedy on `Σ_t R(S | L_t)`
/// stands in for the minimum and `hindsight_exact` is false.
pub fn regret_report(history: &[StepOutcome], topologies: &[NoisyGraph], k: usize) -> Result<RegretReport> {
    if history.len() != topologies.len() {
        return Err(Error::DimensionMismatch {
            expected: topologies.len(),
            got: history.len(),
        });
    }
    if topologies.is_empty() {
        return Err(invalid("topologies", "empty trace"));
    }
    let n = topologies[0].node_count();
    let (hindsight_set, curve, exact) = match brute_force_hindsight(topologies, k) {
        Ok((s, c)) => (s, c, true),
        Err(Error::BruteForceTooLarge { .. }) => {
            let groups = topologies.iter().map(|g| (1.0, vec![(g.clone(), 1.0)])).collect();
            let obj = ScenarioObjective::new(groups, 0.0)?;
            let run = greedy::run(&obj, Stop::Budget(k), Strategy::Lazy, |_| false);
            let s = LeaderSet::new(run.picks, n)?;
            let mut acc = 0.0;
            let c = topologies
                .iter()
                .map(|g| {
                    acc += error_value(g, s.as_slice()).expect("connected topology");
                    acc
                })
                .collect();
            (s, c, false)
        }
        Err(e) => return Err(e),
    };
    let r_max = topologies
        .par_iter()
        .map(|g| singleton_errors(g).into_iter().fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    let discount = 1.0 - (-1.0f64).exp();
    let log_n = (n as f64).ln();
    let mut online_cumulative = 0.0;
    let points = history
        .iter()
        .zip(&curve)
        .enumerate()
        .map(|(i, (h, &hind))| {
            online_cumulative += h.realized_error;
            let t = (i + 1) as u64;
            RegretPoint {
                t,
                online_error: h.realized_error,
                online_cumulative,
                hindsight_cumulative: hind,
                k_regret: discount * online_cumulative - hind,
                undiscounted: online_cumulative - hind,
                reference: (r_max * k as f64 * t as f64 * log_n).sqrt(),
            }
        })
        .collect();
    Ok(RegretReport {
        points,
        hindsight_set,
        hindsight_exact: exact,
        r_max,
    })
}
