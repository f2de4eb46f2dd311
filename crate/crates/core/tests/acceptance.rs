//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 3 5`.

mod common;

use std::time::Instant;

use leader_select::bench::{
    baseline_select, mobility_trace, run_experiment, Baseline, Dataset, DeploymentSpec, Experiment,
    ExperimentConfig, MobilitySpec,
};
use leader_select::dynamic::{
    expected_error_exact, expected_error_mc, select_alpha_switching, select_switching_k, truncated_objective,
    worst_error, DisconnectPolicy, FailureModel, SwitchingParams, TopologyEnsemble,
};
use leader_select::graph::{LeaderSet, NoisyGraph};
use leader_select::metric::{error_value, gradient_bound, max_singleton_error, system_error};
use leader_select::online::{regret_report, run_online};
use leader_select::rng::child_seed;
use leader_select::sim::{integrate, lyapunov_residual, DynamicsConfig};
use leader_select::static_select::{alpha_ratio_bound, greedy_bound_k, select_static_alpha, select_static_k};
use leader_select::walk::{commute_time_exact, commute_time_sampled};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_leaders(n: usize, max_k: usize, r: &mut impl Rng) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(r);
    ids.truncate(r.random_range(1..=max_k.min(n - 1)));
    ids
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn closed_form_vs_walks() -> Outcome {
    let cases: Vec<(NoisyGraph, Vec<usize>)> = (0..20)
        .map(|i| {
            let mut r = rng(100 + i);
            let n = r.random_range(3..=10);
            let g = random_connected(n, r.random_range(0..=n), &mut r);
            let s = random_leaders(n, 3, &mut r);
            (g, s)
        })
        .collect();
    let mut worst_rel: f64 = 0.0;
    let (mut pairs, mut within) = (0usize, 0usize);
    for (gi, (g, s)) in cases.iter().enumerate() {
        let set = LeaderSet::new(s.clone(), g.node_count()).unwrap();
        let rep = system_error(g, &set).unwrap();
        let w: f64 = g.edges().iter().map(|e| 1.0 / e.nu).sum();
        for (&u, &r_u) in &rep.per_node {
            let kappa = commute_time_exact(g, &set, u).unwrap();
            worst_rel = worst_rel.max(rel_gap(r_u, kappa / (2.0 * 2.0 * w)));
            let est = commute_time_sampled(g, &set, u, 100_000, child_seed(gi as u64, u as u64)).unwrap();
            pairs += 1;
            if (est.mean - kappa).abs() <= 4.0 * est.stderr {
                within += 1;
            }
        }
    }
    let share = within as f64 / pairs as f64;
    outcome(
        worst_rel <= 1e-9 && share >= 0.99,
        format!("max relative gap {worst_rel:.2e}; sampled within 4 stderr on {within}/{pairs} pairs"),
    )
}

fn dynamics() -> Outcome {
    let mut worst_res: f64 = 0.0;
    for i in 0..20 {
        let mut r = rng(200 + i);
        let n = r.random_range(2..=20);
        let g = random_connected(n, r.random_range(0..=n), &mut r);
        let s = LeaderSet::new(random_leaders(n, 4, &mut r), n).unwrap();
        worst_res = worst_res.max(lyapunov_residual(&g, &s).unwrap());
    }
    let path = NoisyGraph::new(2, [(0, 1, 1.0)]).unwrap();
    let tri = NoisyGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
    let mut ok = worst_res <= 1e-9;
    let mut detail = format!("max Lyapunov residual {worst_res:.2e}");
    for (name, g, leader) in [("2-path", path, 1), ("triangle", tri, 0)] {
        let n = g.node_count();
        let mut cfg = DynamicsConfig::new(g, LeaderSet::new(vec![leader], n).unwrap());
        cfg.seed = 7;
        let sum = integrate(&cfg).unwrap();
        ok &= sum.relative_gap <= 0.10 && sum.samples >= 1_000_000;
        detail.push_str(&format!(
            "; {name}: MSE {:.4} vs {:.4} (gap {:.3}, {} samples x {})",
            sum.empirical_mse, sum.analytic.total, sum.relative_gap, sum.samples, sum.replicates
        ));
    }
    outcome(ok, detail)
}

fn tabulate(n: usize, f: impl Fn(&[usize]) -> Option<f64> + Sync) -> Vec<Option<f64>> {
    (0..1u32 << n)
        .into_par_iter()
        .map(|m| if m == 0 { None } else { f(&members(m)) })
        .collect()
}

fn supermodularity() -> Outcome {
    let (mut r_slack, mut k_slack, mut f_slack, mut e_slack) =
        (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for i in 0..20 {
        let mut r = rng(300 + i);
        let n = r.random_range(4..=8);
        let g = random_connected(n, r.random_range(0..=5), &mut r);

        r_slack = r_slack.min(supermodular_slack(n, &tabulate(n, |s| error_value(&g, s).ok())));

        for u in 0..n {
            let t = tabulate(n, |s| {
                if s.contains(&u) {
                    return None;
                }
                commute_time_exact(&g, &LeaderSet::new(s.to_vec(), n).unwrap(), u).ok()
            });
            k_slack = k_slack.min(supermodular_slack(n, &t));
        }

        let ens = TopologyEnsemble::new((0..3).map(|_| random_connected(n, r.random_range(0..=n), &mut r)).collect())
            .unwrap();
        let c = r.random_range(0.0..1.0) * ens.r_max();
        let t = tabulate(n, |s| truncated_objective(&ens, c, &LeaderSet::new(s.to_vec(), n).unwrap()).ok());
        f_slack = f_slack.min(supermodular_slack(n, &t));

        assert!(g.edge_count() <= 12);
        let fm = FailureModel::independent(0.1, 1, 0)
            .unwrap()
            .with_exact(true)
            .with_policy(DisconnectPolicy::ConditionConnected);
        let t = tabulate(n, |s| {
            expected_error_exact(&fm, &g, &LeaderSet::new(s.to_vec(), n).unwrap())
                .ok()
                .map(|e| e.mean)
        });
        e_slack = e_slack.min(supermodular_slack(n, &t));
    }
    let min = r_slack.min(k_slack).min(f_slack).min(e_slack);
    outcome(
        min >= -1e-9,
        format!(
            "worst slack R {r_slack:.2e}, commute {k_slack:.2e}, truncated {f_slack:.2e}, expected under failures {e_slack:.2e}"
        ),
    )
}

fn greedy_guarantees() -> Outcome {
    let mut worst_k_margin = f64::INFINITY;
    let mut worst_ratio_margin = f64::INFINITY;
    for i in 0..50 {
        let mut r = rng(400 + i);
        let n = r.random_range(4..=10);
        let g = random_connected(n, r.random_range(0..=n), &mut r);
        // best error of every size, by exhaustive search with the test-side inverse
        let best: Vec<f64> = (0..=n)
            .map(|k| {
                if k == 0 {
                    f64::INFINITY
                } else {
                    k_subsets(n, k)
                        .iter()
                        .map(|s| oracle_error(&g, s))
                        .fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        for k in 1..=3 {
            let res = select_static_k(&g, k).unwrap();
            let bound = greedy_bound_k(&res, k, Some(best[k])).value.unwrap();
            worst_k_margin = worst_k_margin.min(bound + 1e-9 - res.final_error());
        }
        let r_max = max_singleton_error(&g);
        for frac in [0.1, 0.3, 0.6] {
            let alpha = frac * r_max;
            let res = select_static_alpha(&g, alpha);
            let k_star = (1..=n).find(|&k| best[k] <= alpha).unwrap_or(n);
            let ratio = res.leaders.len() as f64 / k_star as f64;
            let bound = alpha_ratio_bound(&res.error_trace, r_max);
            worst_ratio_margin = worst_ratio_margin.min(bound + 1e-9 - ratio);
        }
    }
    outcome(
        worst_k_margin >= 0.0 && worst_ratio_margin >= 0.0,
        format!("smallest slack: size-k bound {worst_k_margin:.3e}, error-bound ratio {worst_ratio_margin:.3e}"),
    )
}

fn monte_carlo() -> Outcome {
    let g = NoisyGraph::new(
        6,
        [
            (0, 1, 1.0),
            (1, 2, 0.5),
            (2, 3, 1.5),
            (3, 4, 1.0),
            (4, 5, 2.0),
            (5, 0, 0.8),
            (0, 3, 1.2),
            (1, 4, 0.7),
        ],
    )
    .unwrap();
    let s = LeaderSet::new(vec![0], 6).unwrap();
    let exact = FailureModel::independent(0.1, 1, 0).unwrap().with_exact(true);
    let truth = expected_error_exact(&exact, &g, &s).unwrap().mean;
    let hits = (0..100u64)
        .into_par_iter()
        .filter(|&seed| {
            let fm = FailureModel::independent(0.1, 10_000, seed).unwrap();
            let e = expected_error_mc(&fm, &g, &s).unwrap();
            (e.mean - truth).abs() <= 4.0 * e.stderr
        })
        .count();
    outcome(hits >= 99, format!("exact {truth:.6}; {hits}/100 seeds within 4 stderr"))
}

fn gradient() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for p in [0.01, 0.05] {
        let (mut total, mut over) = (0usize, 0usize);
        for i in 0..20 {
            let mut r = rng(600 + i);
            let n = r.random_range(4..=12);
            let g = random_connected(n, r.random_range(0..=n), &mut r);
            let s = LeaderSet::new(random_leaders(n, 3, &mut r), n).unwrap();
            let bound = gradient_bound(&g, &s, p).unwrap().trace_bound;
            let fm = FailureModel::independent(p, 1000, child_seed(600 + i, 1)).unwrap();
            for t in fm.sample(&g).unwrap().iter().filter(|t| t.is_connected()) {
                total += 1;
                if 2.0 * error_value(t, s.as_slice()).unwrap() > bound {
                    over += 1;
                }
            }
        }
        let rate = over as f64 / total as f64;
        ok &= rate <= 0.05;
        detail.push(format!("p={p}: {over}/{total} samples above the bound ({:.2}%)", 100.0 * rate));
    }
    outcome(ok, detail.join("; "))
}

fn switching() -> Outcome {
    let (mut alpha_ok, mut size_ok, mut worst_ok) = (true, true, true);
    let mut detail = String::new();
    let mut largest_excess = f64::NEG_INFINITY;
    for i in 0..30 {
        let mut r = rng(700 + i);
        let n = r.random_range(4..=8);
        let m = r.random_range(2..=3);
        let ens = TopologyEnsemble::new((0..m).map(|_| random_connected(n, r.random_range(0..=n), &mut r)).collect())
            .unwrap();
        let alpha = r.random_range(0.05..1.0) * ens.r_max();
        let sel = select_alpha_switching(&ens, alpha).unwrap();
        let (w, _) = worst_error(&ens, &sel.leaders).unwrap();
        alpha_ok &= w <= alpha;

        for k in 1..=3.min(n - 1) {
            let res = select_switching_k(&ens, k, SwitchingParams { beta: None, delta: Some(1.0 / m as f64) }).unwrap();
            size_ok &= res.selection.leaders.len() as f64 <= res.beta * k as f64 + 1e-9;
            let worst_of = |s: &[usize]| {
                ens.topologies()
                    .iter()
                    .map(|g| oracle_error(g, s))
                    .fold(0.0, f64::max)
            };
            let r_star = k_subsets(n, k).iter().map(|s| worst_of(s)).fold(f64::INFINITY, f64::min);
            let got = worst_of(res.selection.leaders.as_slice());
            largest_excess = largest_excess.max(got - r_star);
            if got > r_star + 1e-9 {
                worst_ok = false;
                if detail.is_empty() {
                    detail = format!(
                        "; first miss: ensemble {i}, k={k}, |S|={}, worst {got:.4} > optimum {r_star:.4}",
                        res.selection.leaders.len()
                    );
                }
            }
        }
    }
    outcome(
        alpha_ok && size_ok && worst_ok,
        format!(
            "error target met: {alpha_ok}; size within beta*k: {size_ok}; worst error within optimum: {worst_ok} (largest excess {largest_excess:.3e}){detail}"
        ),
    )
}

fn online() -> Outcome {
    let mut r = rng(800);
    let g = random_connected(10, 6, &mut r);
    let trace = vec![g.clone(); 50];
    let (st, _) = run_online(&trace, 3, 0.5, 1).unwrap();
    let greedy = select_static_k(&g, 3).unwrap();
    let converged = st.argmax() == greedy.leaders.as_slice();

    let dspec = DeploymentSpec {
        n: 30,
        seed: 8,
        ..DeploymentSpec::default()
    };
    let mspec = MobilitySpec {
        frames: 200,
        seed: 9,
        ..MobilitySpec::default()
    };
    let mobility = mobility_trace(&mspec, &dspec).unwrap();
    let (_, history) = run_online(&mobility.frames, 3, 0.5, 10).unwrap();
    let tail = |v: &[f64]| v[v.len() - 50..].iter().sum::<f64>() / 50.0;
    let online_err: Vec<f64> = history.iter().map(|h| h.realized_error).collect();
    let random_err: Vec<f64> = mobility
        .frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let s = baseline_select(f, 3, Baseline::Random, child_seed(11, t as u64)).unwrap();
            error_value(f, s.as_slice()).unwrap()
        })
        .collect();
    let (on, rnd) = (tail(&online_err), tail(&random_err));
    let report = regret_report(&history, &mobility.frames, 3).unwrap();
    let slope = report.k_slope();
    let sublinear = report.sublinear();
    outcome(
        converged && on <= rnd && sublinear,
        format!(
            "static argmax {:?} vs greedy {:?}; trailing-50 mean online {on:.4} vs random {rnd:.4}; K(T) {:.3}, log-log slope {} (hindsight exact: {})",
            st.argmax(),
            greedy.leaders.as_slice(),
            report.points.last().unwrap().k_regret,
            slope.map_or("n/a".to_string(), |s| format!("{s:.3}")),
            report.hindsight_exact
        ),
    )
}

fn ordered(d: &Dataset, lower_is_better: &[&str]) -> (bool, Vec<String>) {
    let mut ok = true;
    let mut lines = Vec::new();
    for x in d.xs() {
        let means: Vec<f64> = lower_is_better.iter().map(|m| d.mean(m, x).unwrap_or(f64::NAN)).collect();
        let holds = means.windows(2).all(|w| w[0] <= w[1]);
        ok &= holds;
        lines.push(format!(
            "{}={x}: {}{}",
            d.x_name,
            means.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" / "),
            if holds { "" } else { " (out of order)" }
        ));
    }
    (ok, lines)
}

fn figures() -> Outcome {
    let order = ["supermodular", "random", "avg-degree", "max-degree"];
    let cfg = ExperimentConfig {
        n: Some(100),
        trials: 10,
        seed: 2024,
        k: Some(10),
        ..ExperimentConfig::default()
    };
    let mut ok = true;
    let mut detail = Vec::new();
    for e in [Experiment::Fig1b, Experiment::Fig2b, Experiment::Fig3a] {
        let start = Instant::now();
        let d = run_experiment(e, &cfg).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let (holds, lines) = ordered(&d, &order);
        ok &= holds;
        detail.push(format!(
            "{}: {} [{secs:.0}s]",
            e.name(),
            if holds { "ordered" } else { "NOT ordered" }
        ));
        for l in lines {
            println!("    {} {l}", e.name());
        }
    }
    outcome(ok, format!("{} (means listed as {})", detail.join(", "), order.join(" / ")))
}

fn main() {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("closed form vs random-walk oracle", closed_form_vs_walks),
        ("noisy dynamics match the error metric", dynamics),
        ("supermodularity sweeps", supermodularity),
        ("greedy guarantees against brute force", greedy_guarantees),
        ("Monte Carlo converges to exact enumeration", monte_carlo),
        ("first-order failure bound", gradient),
        ("switching-topology selection", switching),
        ("online selection", online),
        ("figure orderings", figures),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {id} {}: {name} [{secs:.1}s] {}",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
