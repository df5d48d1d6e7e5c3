//! Command-line front end: merge checkpoints, fit and evaluate the
//! floor+tail law, plan expert budgets, run quadratic-world simulations,
//! and analyze merge-order trajectories.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mergelaw::error::{Error, Result};
use mergelaw::plan::StopRule;
use mergelaw::report::{self, PlotSeries};
use mergelaw::sim::SampleKind;
use mergelaw::{
    fit, law, merge as merging, plan as planning, sim, table, traj, Checkpoint, ColumnMap,
    CurveParams, JointParams, MergeKind, MergeRecipe, ThreePointInput, WeightsMode,
};

#[derive(Parser)]
#[command(name = "mergelaw", version, about = "Model merging and its scaling laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge expert checkpoints into a base checkpoint.
    Merge(MergeArgs),
    /// Fit a law to a measurement table.
    Fit(FitArgs),
    /// Evaluate fitted parameters over a k grid (plot-ready CSV).
    Eval(EvalArgs),
    /// Forecast a curve from three early points and recommend a budget.
    Plan(PlanArgs),
    /// Monte-Carlo check of the loss expansion on a quadratic world.
    Simulate(SimArgs),
    /// Generate diverse merge orders.
    Permute(PermuteArgs),
    /// Donor-to-domain synergy matrix from a trajectory CSV.
    Synergy(SynergyArgs),
    /// Across-order dispersion statistics from a measurement CSV.
    OrderStats(OrderStatsArgs),
    /// Parse a CSV and report what was ingested.
    IngestCheck(IngestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Average,
    Ta,
    Ties,
    Dare,
}

#[derive(Args)]
struct MergeArgs {
    /// Base checkpoint path.
    #[arg(long)]
    base: PathBuf,
    /// Expert checkpoint paths (one or more).
    #[arg(long, required = true, num_args = 1..)]
    experts: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "average")]
    method: MethodArg,
    /// Total merge scale c (defaults: 0.8 for ta, 1.0 otherwise).
    #[arg(long)]
    c: Option<f64>,
    /// TIES trim density in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// DARE drop probability in [0, 1).
    #[arg(long, default_value_t = 0.2)]
    drop_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TIES: divide by the per-position agreeing count instead of k.
    #[arg(long)]
    disjoint_mean: bool,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CsvArgs {
    /// Input CSV path.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "model")]
    model_col: String,
    #[arg(long, default_value = "domain")]
    domain_col: String,
    #[arg(long, default_value = "ce_loss")]
    ce_col: String,
    /// Optional method column name.
    #[arg(long)]
    method_col: Option<String>,
    /// Optional model-size column name (billions).
    #[arg(long)]
    n_col: Option<String>,
    #[arg(long, default_value = "unknown")]
    default_method: String,
    #[arg(long, default_value_t = 1.0)]
    default_n: f64,
}

impl CsvArgs {
    fn column_map(&self) -> ColumnMap {
        ColumnMap {
            model: self.model_col.clone(),
            domain: self.domain_col.clone(),
            ce: self.ce_col.clone(),
            method: self.method_col.clone(),
            n: self.n_col.clone(),
            default_method: self.default_method.clone(),
            default_n: self.default_n,
        }
    }

    fn ingest(&self) -> Result<table::Ingested> {
        table::ingest_csv(&self.input, &self.column_map())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FitModelArg {
    /// Per-size curve on mean CE per k.
    Curve,
    /// Joint (N, k) law on mean CE per cell.
    Joint,
    /// Joint law on per-cell sample variances across orders.
    Variance,
    /// Dispersion tail on per-k across-order std.
    Dispersion,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Uniform,
    K,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    csv: CsvArgs,
    #[arg(long, value_enum, default_value = "curve")]
    model: FitModelArg,
    #[arg(long, value_enum, default_value = "k")]
    weights: WeightsArg,
    /// Curve fit only: add the bounded interference term D*k/(k+q).
    #[arg(long)]
    bounded: bool,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON file with fitted parameters (curve or joint field names).
    #[arg(long)]
    params: PathBuf,
    /// k values to evaluate, e.g. 1,2,4,8.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u32, 2, 3, 4, 5, 6, 7, 8, 9])]
    k: Vec<u32>,
    /// Model sizes (billions) for joint parameters, one series per N.
    #[arg(long, value_delimiter = ',')]
    n: Vec<f64>,
    /// Output CSV path (long format: series,x,y).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Relative,
    Absolute,
}

#[derive(Args)]
struct PlanArgs {
    /// Three measurements as "k:ce,k:ce,k:ce", e.g. "1:0.76,2:0.74,4:0.73".
    #[arg(long)]
    points: String,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 32)]
    k_max: u32,
    #[arg(long, value_enum, default_value = "relative")]
    rule: RuleArg,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    /// World description JSON (dim, l0, g, h, mu, sigma, c).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u32, 2, 4, 8, 16])]
    k: Vec<u32>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw bounded-uniform task vectors instead of Gaussian.
    #[arg(long)]
    bounded: bool,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PermuteArgs {
    /// Comma-separated donor labels in base order.
    #[arg(long, value_delimiter = ',', required = true)]
    base: Vec<String>,
    /// Number of orders to generate.
    #[arg(short, long, default_value_t = 12)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    candidates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional output file (one hyphen-joined order per line).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynergyArgs {
    #[command(flatten)]
    csv: CsvArgs,
    /// JSON file mapping group name -> [domain labels] for block means.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OrderStatsArgs {
    #[command(flatten)]
    csv: CsvArgs,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    csv: CsvArgs,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Merge(a) => cmd_merge(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Permute(a) => cmd_permute(a),
        Command::Synergy(a) => cmd_synergy(a),
        Command::OrderStats(a) => cmd_order_stats(a),
        Command::IngestCheck(a) => cmd_ingest_check(a),
    }
}

fn cmd_merge(a: MergeArgs) -> Result<()> {
    let kind = match a.method {
        MethodArg::Average => MergeKind::Average,
        MethodArg::Ta => MergeKind::Ta,
        MethodArg::Ties => MergeKind::Ties,
        MethodArg::Dare => MergeKind::Dare,
    };
    let mut recipe = MergeRecipe::new(kind)
        .with_density(a.density)
        .with_drop_rate(a.drop_rate)
        .with_seed(a.seed);
    if let Some(c) = a.c {
        recipe = recipe.with_c(c);
    }
    recipe.disjoint_mean = a.disjoint_mean;

    let base = mergelaw::load_checkpoint(&a.base)?;
    let experts: Vec<Checkpoint> = a
        .experts
        .iter()
        .map(mergelaw::load_checkpoint)
        .collect::<Result<_>>()?;
    let labeled: Vec<(String, &Checkpoint)> = a
        .experts
        .iter()
        .zip(&experts)
        .map(|(p, e)| (p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), e))
        .collect();
    let merged = merging::merge_labeled(&base, &labeled, &recipe)?;
    mergelaw::save_checkpoint(&merged.checkpoint, &a.out)?;
    println!(
        "merged {} experts ({} tensors) -> {}",
        merged.k,
        merged.checkpoint.tensors.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let ingested = a.csv.ingest()?;
    let t = &ingested.table;
    let weights = match a.weights {
        WeightsArg::Uniform => WeightsMode::Uniform,
        WeightsArg::K => WeightsMode::ProportionalToK,
    };
    let fit_report = match a.model {
        FitModelArg::Curve => fit::fit_curve(&t.mean_by_k(), weights, a.bounded)?,
        FitModelArg::Joint => fit::fit_joint(&t.mean_by_nk(), weights)?,
        FitModelArg::Variance => fit::fit_variance(t)?,
        FitModelArg::Dispersion => {
            let (records, warnings) = traj::order_dispersion(t);
            for w in warnings {
                eprintln!("warning: {w}");
            }
            // pool across N: mean std per k
            let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
            for r in &records {
                let e = acc.entry(r.k).or_insert((0.0, 0));
                e.0 += r.std;
                e.1 += 1;
            }
            let pts: Vec<(u32, f64)> =
                acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect();
            fit::fit_dispersion(&pts)?
        }
    };
    report::write_fit_report(&fit_report, &a.out)?;
    println!("r_squared = {}", report::sig6(fit_report.r_squared));
    for note in &fit_report.notes {
        eprintln!("note: {note}");
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.params).map_err(|e| Error::io(&a.params, e))?;
    if a.k.is_empty() || a.k.iter().any(|&k| k < 1) {
        return Err(Error::InvalidInput("k grid must be nonempty with k >= 1".into()));
    }
    let series = if let Ok(joint) = serde_json::from_str::<JointParams>(&text) {
        let ns = if a.n.is_empty() { vec![1.0] } else { a.n.clone() };
        ns.iter()
            .map(|&n| PlotSeries {
                name: format!("ce_vs_k,N={n}"),
                points: a
                    .k
                    .iter()
                    .map(|&k| (k as f64, law::eval_joint(&joint, n, k)))
                    .collect(),
            })
            .collect()
    } else {
        let curve: CurveParams = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("unrecognized parameter JSON: {e}")))?;
        vec![PlotSeries {
            name: "ce_vs_k".into(),
            points: a
                .k
                .iter()
                .map(|&k| (k as f64, law::eval_curve(&curve, k, None)))
                .collect(),
        }]
    };
    report::write_plot_csv(&series, &a.out)
}

fn parse_points(s: &str) -> Result<ThreePointInput> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "expected exactly three k:ce pairs, got {}",
            parts.len()
        )));
    }
    let mut samples = [(0u32, 0f64); 3];
    for (i, part) in parts.iter().enumerate() {
        let (k, ce) = part.split_once(':').ok_or_else(|| {
            Error::InvalidInput(format!("bad point '{part}', expected k:ce"))
        })?;
        samples[i] = (
            k.trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad k in '{part}'")))?,
            ce.trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad CE in '{part}'")))?,
        );
    }
    Ok(ThreePointInput::new(samples))
}

fn cmd_plan(a: PlanArgs) -> Result<()> {
    let input = parse_points(&a.points)?;
    let rule = match a.rule {
        RuleArg::Relative => StopRule::RelativeGain,
        RuleArg::Absolute => StopRule::AbsoluteGain,
    };
    let plan = planning::plan(&input, a.delta, a.epsilon, 1..=a.k_max, rule)?;
    report::write_plan_report(&plan, &a.out)?;
    println!(
        "k_star = {}, k_epsilon = {} ({})",
        plan.k_star, plan.k_epsilon, plan.rule
    );
    Ok(())
}

fn cmd_simulate(a: SimArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| Error::io(&a.config, e))?;
    let world = sim::world_from_json(&text)?;
    let kind = if a.bounded {
        SampleKind::BoundedUniform
    } else {
        SampleKind::Gaussian
    };
    let result = sim::simulate(&world, &a.k, a.trials, a.seed, kind)?;
    report::write_sim_result(&result, &a.out)?;
    if let Ok(slope) = sim::slope_check(&result) {
        println!("log-log variance slope = {}", report::sig6(slope));
    }
    Ok(())
}

fn cmd_permute(a: PermuteArgs) -> Result<()> {
    let perms = traj::generate_permutations(&a.base, a.m, a.candidates, a.seed)?;
    let lines: Vec<String> = perms.iter().map(|p| p.join("-")).collect();
    match &a.out {
        Some(path) => std::fs::write(path, lines.join("\n") + "\n")
            .map_err(|e| Error::io(path, e))?,
        None => {
            for l in &lines {
                println!("{l}");
            }
        }
    }
    Ok(())
}

fn cmd_synergy(a: SynergyArgs) -> Result<()> {
    let ingested = a.csv.ingest()?;
    for w in &ingested.warnings {
        eprintln!("warning: {w}");
    }
    let matrix = traj::synergy_matrix(&ingested.trajectories)?;
    report::write_synergy(&matrix, &a.out)?;
    if let Some(path) = &a.groups {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let groups: BTreeMap<String, Vec<String>> = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("bad groups JSON: {e}")))?;
        for ((gd, ge), mean) in matrix.block_means(&groups) {
            println!("block {gd} -> {ge}: {}", report::sig6(mean));
        }
    }
    Ok(())
}

fn cmd_order_stats(a: OrderStatsArgs) -> Result<()> {
    let ingested = a.csv.ingest()?;
    let (records, warnings) = traj::order_dispersion(&ingested.table);
    for w in warnings {
        eprintln!("warning: {w}");
    }
    report::write_dispersion(&records, &a.out)
}

fn cmd_ingest_check(a: IngestArgs) -> Result<()> {
    let ingested = a.csv.ingest()?;
    println!(
        "rows: {}, trajectories: {}, warnings: {}",
        ingested.table.rows.len(),
        ingested.trajectories.len(),
        ingested.warnings.len()
    );
    for w in &ingested.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}
