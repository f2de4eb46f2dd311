//! `leadsel`: leader selection for noisy multi-agent networks from the command line.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leader_select::bench::{
    gen_geometric, mobility_trace, run_experiment, DeploymentSpec, Experiment, ExperimentConfig, MobilitySpec,
};
use leader_select::dynamic::{
    expected_error_mc, select_alpha_random_failures, select_alpha_switching, select_k_random_failures,
    select_switching_k, switching_with_failures, worst_error, Aggregate, DisconnectPolicy, FailureModel,
    SwitchingParams, SwitchingResult, Target, TopologyEnsemble,
};
use leader_select::format::{parse_graph, write_graph_json, write_graph_text, GRAPH_GRAMMAR};
use leader_select::graph::{LeaderSet, NoisyGraph};
use leader_select::greedy::Strategy;
use leader_select::online::{regret_report, run_online};
use leader_select::rng::child_seed;
use leader_select::sim::{integrate, DynamicsConfig, NoiseMode};
use leader_select::static_select::{greedy_bound_k, select_static_alpha_with, select_static_k_with};
use leader_select::walk::{commute_time_exact, commute_time_sampled};
use serde::Serialize;
use serde_json::json;

use manifest::{Inputs, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "leadsel", version, about = "Leader selection for networks with noisy links", after_help = GRAPH_GRAMMAR)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Serialize)]
struct Common {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent. The run manifest goes to `<out>.manifest.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
enum Command {
    /// Greedy leaders for a fixed topology.
    #[command(after_help = GRAPH_GRAMMAR)]
    SelectStatic(SelectStatic),
    /// Greedy leaders when links fail independently at random.
    #[command(after_help = GRAPH_GRAMMAR)]
    SelectFailures(SelectFailures),
    /// Leaders that serve every topology of a switching network.
    #[command(after_help = GRAPH_GRAMMAR)]
    SelectSwitching(SelectSwitching),
    /// Multiplicative-weights selection over a time-varying topology.
    #[command(after_help = GRAPH_GRAMMAR)]
    Online(Online),
    /// Simulate the noisy follower dynamics and compare with the analytic error.
    #[command(after_help = GRAPH_GRAMMAR)]
    Simulate(Simulate),
    /// Compare per-node error with exact and sampled random-walk commute times.
    #[command(after_help = GRAPH_GRAMMAR)]
    VerifyCommute(VerifyCommute),
    /// Run one of the comparison sweeps and write long-format CSV.
    Bench(Bench),
    /// Generate a connected random geometric graph.
    #[command(after_help = GRAPH_GRAMMAR)]
    GenGraph(GenGraph),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SelectStatic(_) => "select-static",
            Command::SelectFailures(_) => "select-failures",
            Command::SelectSwitching(_) => "select-switching",
            Command::Online(_) => "online",
            Command::Simulate(_) => "simulate",
            Command::VerifyCommute(_) => "verify-commute",
            Command::Bench(_) => "bench",
            Command::GenGraph(_) => "gen-graph",
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[command(group(clap::ArgGroup::new("target").required(true).args(["k", "alpha"])))]
struct SelectStatic {
    #[arg(long)]
    graph: PathBuf,
    /// Number of leaders.
    #[arg(long)]
    k: Option<usize>,
    /// Error bound; the smallest greedy set meeting it is returned.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Evaluate every candidate at every step instead of using lazy bounds.
    #[arg(long)]
    naive: bool,
    /// Also write `step,leader,error` rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(group(clap::ArgGroup::new("target").required(true).args(["k", "alpha"])))]
struct SelectFailures {
    #[arg(long)]
    graph: PathBuf,
    /// Independent failure probability of every link.
    #[arg(long)]
    p: f64,
    /// Monte Carlo samples.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Enumerate every failure pattern (at most 16 links).
    #[arg(long)]
    exact_enum: bool,
    /// Average only over failure patterns that leave the graph connected.
    #[arg(long)]
    condition_connected: bool,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum AggregateArg {
    Avg,
    Worst,
}

#[derive(Args, Debug, Serialize)]
#[command(group(clap::ArgGroup::new("target").required(true).args(["k", "alpha"])))]
struct SelectSwitching {
    /// Graph files over a shared node set, or one directory holding them.
    #[arg(long, num_args = 1.., required = true)]
    ensemble: Vec<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Size inflation; defaults to `1 + ln max_v Σ_i R({v} | L_i)`.
    #[arg(long)]
    beta: Option<f64>,
    /// Bisection width; defaults to `1/M`.
    #[arg(long)]
    delta: Option<f64>,
    /// Worst-case error bound over all topologies.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Link failure probability inside every topology.
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// How per-topology errors are combined when `--p` is set.
    #[arg(long, value_enum, default_value_t = AggregateArg::Worst)]
    mode: AggregateArg,
}

#[derive(Args, Debug, Serialize)]
struct Online {
    /// Directory with one graph file per step, read in file-name order.
    #[arg(long, conflicts_with = "mobility")]
    trace: Option<PathBuf>,
    /// Generate a group-mobility trace instead.
    #[arg(long)]
    mobility: bool,
    /// Agents in the generated trace.
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Steps to run; defaults to the whole trace (100 for generated traces).
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct Simulate {
    #[arg(long)]
    graph: PathBuf,
    /// Comma-separated leader ids.
    #[arg(long, value_delimiter = ',', required = true)]
    leaders: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 2000.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.5)]
    burn_in: f64,
    #[arg(long, default_value_t = 16)]
    replicates: usize,
    /// Simulate every link's noise separately instead of the aggregated form.
    #[arg(long)]
    per_link: bool,
    /// Comma-separated desired offsets `r_ij`, one per edge in file order, oriented from the smaller id to the larger.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    offsets: Option<Vec<f64>>,
    /// Comma-separated fixed leader states, in `--leaders` order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    leader_states: Option<Vec<f64>>,
    /// Write a decimated trajectory of the first replicate here as CSV.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Keep every n-th step in the trajectory.
    #[arg(long, default_value_t = 1000)]
    record_every: usize,
}

#[derive(Args, Debug, Serialize)]
struct VerifyCommute {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    leaders: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    walks: u64,
}

#[derive(Args, Debug, Serialize)]
struct Bench {
    /// fig1a, fig1b, fig2a, fig2b, fig3a, fig3b or fig4.
    #[arg(long)]
    experiment: String,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// JSON object overriding any experiment setting.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GraphFormat {
    Text,
    Json,
}

#[derive(Args, Debug, Serialize)]
struct GenGraph {
    /// JSON deployment settings (n, width, height, range, nu_scale, max_retries).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum, default_value_t = GraphFormat::Text)]
    format: GraphFormat,
}

/// A run that did not produce a clean result.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "InvalidArgument".into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure {
            code: 2,
            kind: "Io".into(),
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<leader_select::Error> for Failure {
    fn from(e: leader_select::Error) -> Self {
        use leader_select::Error as E;
        let debug = format!("{e:?}");
        let kind = debug
            .split(|c: char| !c.is_alphanumeric())
            .next()
            .unwrap_or("Error")
            .to_string();
        let code = match e {
            E::CannotConnect(_) | E::AllSamplesDisconnected | E::InfeasibleBudget | E::WalkTimeout(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

/// Primary output plus whether the result should be flagged (exit 3).
struct Output {
    body: String,
    flagged: Option<String>,
}

fn ok(body: String) -> Result<Output, Failure> {
    Ok(Output { body, flagged: None })
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("result serializes");
    s.push('\n');
    s
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::io(path, e))
}

fn graph(inputs: &mut Inputs, path: &Path) -> Result<NoisyGraph, Failure> {
    Ok(parse_graph(&inputs.read(path)?)?)
}

fn graph_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    if let [dir] = paths {
        if dir.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| Failure::io(dir, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Failure::usage(format!("{} holds no graph files", dir.display())));
            }
            return Ok(files);
        }
    }
    Ok(paths.to_vec())
}

fn leader_set(ids: &[usize], n: usize) -> Result<LeaderSet, Failure> {
    Ok(LeaderSet::new(ids.to_vec(), n)?)
}

fn select_static(a: &SelectStatic, inputs: &mut Inputs) -> Result<Output, Failure> {
    let g = graph(inputs, &a.graph)?;
    let strategy = if a.naive { Strategy::Naive } else { Strategy::Lazy };
    let (result, bound) = match (a.k, a.alpha) {
        (Some(k), _) => {
            let r = select_static_k_with(&g, k, strategy)?;
            let b = greedy_bound_k(&r, k, None);
            (r, json!({ "coefficient": b.coefficient, "additive": b.additive }))
        }
        (None, Some(alpha)) => {
            if !(alpha >= 0.0) {
                return Err(Failure::usage(format!("--alpha must be nonnegative, got {alpha}")));
            }
            let r = select_static_alpha_with(&g, alpha, strategy);
            let b = r.bound;
            (r, json!({ "size_ratio": b }))
        }
        (None, None) => unreachable!("clap requires a target"),
    };
    if let Some(csv) = &a.csv {
        write_file(csv, &result.to_csv())?;
    }
    ok(pretty(&json!({ "selection": result, "guarantee": bound })))
}

fn select_failures(a: &SelectFailures, seed: u64, inputs: &mut Inputs) -> Result<Output, Failure> {
    let g = graph(inputs, &a.graph)?;
    let policy = if a.condition_connected {
        DisconnectPolicy::ConditionConnected
    } else {
        DisconnectPolicy::Exclude
    };
    let fm = FailureModel::independent(a.p, a.samples, seed)?
        .with_exact(a.exact_enum)
        .with_policy(policy);
    let (selection, target) = match (a.k, a.alpha) {
        (Some(k), _) => (select_k_random_failures(&fm, &g, k)?, None),
        (None, Some(alpha)) => {
            if !(alpha >= 0.0) {
                return Err(Failure::usage(format!("--alpha must be nonnegative, got {alpha}")));
            }
            (select_alpha_random_failures(&fm, &g, alpha)?, Some(alpha))
        }
        (None, None) => unreachable!("clap requires a target"),
    };
    let expectation = expected_error_mc(&fm, &g, &selection.leaders)?;
    let flagged = target
        .filter(|&alpha| !(selection.final_error() <= alpha))
        .map(|alpha| format!("expected error {} does not meet {alpha}", selection.final_error()));
    Ok(Output {
        body: pretty(&json!({ "selection": selection, "expected_error": expectation })),
        flagged,
    })
}

fn select_switching(a: &SelectSwitching, seed: u64, inputs: &mut Inputs) -> Result<Output, Failure> {
    let files = graph_files(&a.ensemble)?;
    let graphs = files.iter().map(|f| graph(inputs, f)).collect::<Result<Vec<_>, _>>()?;
    let ens = TopologyEnsemble::new(graphs)?;
    let params = SwitchingParams {
        beta: a.beta,
        delta: a.delta,
    };
    if let Some(alpha) = a.alpha {
        if !(alpha >= 0.0) {
            return Err(Failure::usage(format!("--alpha must be nonnegative, got {alpha}")));
        }
    }
    let result: SwitchingResult = if a.p > 0.0 {
        let fms = leader_select::dynamic::independent_models(&ens, a.p, a.samples, seed)?;
        let mode = match a.mode {
            AggregateArg::Avg => Aggregate::Avg,
            AggregateArg::Worst => Aggregate::Worst,
        };
        let target = match (a.k, a.alpha) {
            (Some(k), _) => Target::K(k),
            (None, Some(alpha)) => Target::Alpha(alpha),
            (None, None) => unreachable!("clap requires a target"),
        };
        switching_with_failures(&ens, &fms, mode, target, params)?
    } else {
        match (a.k, a.alpha) {
            (Some(k), _) => select_switching_k(&ens, k, params)?,
            (None, Some(alpha)) => {
                let selection = select_alpha_switching(&ens, alpha)?;
                let (worst, _) = worst_error(&ens, &selection.leaders)?;
                SwitchingResult {
                    selection,
                    alpha,
                    beta: 1.0,
                    delta: 0.0,
                    feasible: worst <= alpha,
                    iterations: 0,
                }
            }
            (None, None) => unreachable!("clap requires a target"),
        }
    };
    let errors = ens.errors(&result.selection.leaders)?;
    let flagged = (!result.feasible).then(|| "no leader set met the target within the budget".to_string());
    Ok(Output {
        body: pretty(&json!({ "result": result, "per_topology_error": errors })),
        flagged,
    })
}

fn online(a: &Online, seed: u64, inputs: &mut Inputs) -> Result<Output, Failure> {
    let mut trace = match (&a.trace, a.mobility) {
        (Some(dir), _) => graph_files(std::slice::from_ref(dir))?
            .iter()
            .map(|f| graph(inputs, f))
            .collect::<Result<Vec<_>, _>>()?,
        (None, true) => {
            let dspec = DeploymentSpec {
                n: a.n,
                seed: child_seed(seed, 1),
                ..DeploymentSpec::default()
            };
            let mspec = MobilitySpec {
                frames: a.steps.unwrap_or(100),
                seed: child_seed(seed, 2),
                ..MobilitySpec::default()
            };
            mobility_trace(&mspec, &dspec)?.frames
        }
        (None, false) => return Err(Failure::usage("give --trace <dir> or --mobility")),
    };
    if let Some(steps) = a.steps {
        if steps == 0 || steps > trace.len() {
            return Err(Failure::usage(format!("--steps must be in 1..={}", trace.len())));
        }
        trace.truncate(steps);
    }
    let (_, history) = run_online(&trace, a.k, a.beta, child_seed(seed, 3))?;
    let report = regret_report(&history, &trace, a.k)?;
    ok(report.to_csv())
}

fn simulate(a: &Simulate, seed: u64, inputs: &mut Inputs) -> Result<Output, Failure> {
    let g = graph(inputs, &a.graph)?;
    let leaders = leader_set(&a.leaders, g.node_count())?;
    let mut cfg = DynamicsConfig::new(g, leaders);
    cfg.dt = a.dt;
    cfg.horizon = a.horizon;
    cfg.burn_in = a.burn_in;
    cfg.replicates = a.replicates;
    cfg.seed = seed;
    cfg.noise = if a.per_link { NoiseMode::PerLink } else { NoiseMode::Aggregated };
    if let Some(off) = &a.offsets {
        cfg.offsets = off.clone();
    }
    if let Some(states) = &a.leader_states {
        cfg.leader_states = states.clone();
    }
    if a.trajectory.is_some() {
        cfg.record_every = Some(a.record_every);
    }
    let mut summary = integrate(&cfg)?;
    if let Some(path) = &a.trajectory {
        let mut csv = String::from("t");
        for v in 0..cfg.graph.node_count() {
            csv.push_str(&format!(",x{v}"));
        }
        csv.push('\n');
        for p in &summary.trajectory {
            csv.push_str(&p.t.to_string());
            for x in &p.x {
                csv.push_str(&format!(",{x}"));
            }
            csv.push('\n');
        }
        write_file(path, &csv)?;
        summary.trajectory.clear();
    }
    ok(pretty(&summary))
}

fn verify_commute(a: &VerifyCommute, seed: u64, inputs: &mut Inputs) -> Result<Output, Failure> {
    let g = graph(inputs, &a.graph)?;
    let s = leader_set(&a.leaders, g.node_count())?;
    let mut csv = String::from("u,exact,sampled_mean,stderr\n");
    let mut misses = Vec::new();
    for u in (0..g.node_count()).filter(|&u| !s.contains(u)) {
        let exact = commute_time_exact(&g, &s, u)?;
        let est = commute_time_sampled(&g, &s, u, a.walks, child_seed(seed, u as u64))?;
        if (est.mean - exact).abs() > 4.0 * est.stderr {
            misses.push(u);
        }
        csv.push_str(&format!("{u},{exact},{},{}\n", est.mean, est.stderr));
    }
    let flagged = (!misses.is_empty()).then(|| format!("sampled mean more than 4 standard errors off at nodes {misses:?}"));
    Ok(Output { body: csv, flagged })
}

fn bench(a: &Bench, seed: u64, inputs: &mut Inputs) -> Result<Output, Failure> {
    let experiment: Experiment = a.experiment.parse()?;
    let mut cfg: ExperimentConfig = match &a.config {
        Some(path) => serde_json::from_str(&inputs.read(path)?)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
        None => ExperimentConfig::default(),
    };
    cfg.trials = a.trials;
    cfg.seed = seed;
    if a.n.is_some() {
        cfg.n = a.n;
    }
    if a.k.is_some() {
        cfg.k = a.k;
    }
    ok(run_experiment(experiment, &cfg)?.to_csv())
}

fn gen_graph(a: &GenGraph, seed: u64, inputs: &mut Inputs) -> Result<Output, Failure> {
    let mut spec: DeploymentSpec = match &a.spec {
        Some(path) => serde_json::from_str(&inputs.read(path)?)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
        None => DeploymentSpec::default(),
    };
    spec.seed = seed;
    if let Some(n) = a.n {
        spec.n = n;
    }
    let g = gen_geometric(&spec)?;
    ok(match a.format {
        GraphFormat::Text => write_graph_text(&g),
        GraphFormat::Json => write_graph_json(&g) + "\n",
    })
}

fn report(f: &Failure) {
    eprintln!(
        "{}",
        json!({ "error": f.kind, "message": f.message, "exit_code": f.code })
    );
}

fn run(cli: Cli) -> Result<Output, Failure> {
    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let seed = cli.common.seed;
    let mut inputs = Inputs::default();
    let out = match &cli.command {
        Command::SelectStatic(a) => select_static(a, &mut inputs),
        Command::SelectFailures(a) => select_failures(a, seed, &mut inputs),
        Command::SelectSwitching(a) => select_switching(a, seed, &mut inputs),
        Command::Online(a) => online(a, seed, &mut inputs),
        Command::Simulate(a) => simulate(a, seed, &mut inputs),
        Command::VerifyCommute(a) => verify_commute(a, seed, &mut inputs),
        Command::Bench(a) => bench(a, seed, &mut inputs),
        Command::GenGraph(a) => gen_graph(a, seed, &mut inputs),
    }?;

    let manifest = RunManifest {
        tool: "leadsel",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name(),
        seed,
        params: serde_json::to_value(&cli.command).expect("arguments serialize"),
        inputs: inputs.digests,
    };
    match &cli.common.out {
        Some(path) => {
            write_file(path, &out.body)?;
            let mut mpath = path.clone().into_os_string();
            mpath.push(".manifest.json");
            write_file(Path::new(&mpath), &pretty(&manifest))?;
        }
        None => {
            print!("{}", out.body);
            eprintln!("{}", json!({ "manifest": manifest }));
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let kind = match e.kind() {
                ErrorKind::InvalidSubcommand => "UnknownSubcommand",
                _ => "InvalidArgument",
            };
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            report(&Failure {
                code: 2,
                kind: kind.into(),
                message: first.to_string(),
            });
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(Output { flagged: None, .. }) => ExitCode::SUCCESS,
        Ok(Output {
            flagged: Some(reason), ..
        }) => {
            report(&Failure {
                code: 3,
                kind: "Flagged".into(),
                message: reason,
            });
            ExitCode::from(3)
        }
        Err(f) => {
            report(&f);
            ExitCode::from(f.code)
        }
    }
}
