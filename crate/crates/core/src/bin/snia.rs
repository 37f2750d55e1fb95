//! Command-line front end: dataset preparation, victim and agent training,
//! attack evaluation, and report aggregation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use snia_core::baselines::GradSource;
use snia_core::env::{build_label_bank, AttackGoal};
use snia_core::graph::{io, make_splits, Graph, SplitSpec};
use snia_core::harness::{
    budget_sweep, goal_grid, heatmap_matrix, read_reports_jsonl, run_attack_suite, success_rates, write_heatmap_csv,
    write_manifest, write_reports_jsonl, write_success_rates_csv, write_sweep_csv, AttackerSpec, ExperimentConfig,
    SuiteInputs,
};
use snia_core::ppo::{load_agent, save_agent, train, PpoConfig, TrainTask};
use snia_core::seeding::derive_seed;
use snia_core::victim::{train_victim, GnnArchitecture, VictimModel};

#[derive(Parser)]
#[command(
    name = "snia",
    about = "Single-node injection attacks on GNN node classifiers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset operations.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Victim model operations.
    #[command(subcommand)]
    Victim(VictimCmd),
    /// Attack agent operations.
    #[command(subcommand)]
    Agent(AgentCmd),
    /// Attack evaluation.
    #[command(subcommand)]
    Attack(AttackCmd),
    /// Aggregate reports into CSV summaries.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Load a raw dump, keep the largest connected component, write the
    /// canonical dataset plus train/val/test splits and attack targets.
    Prep(DatasetPrepArgs),
}

#[derive(Args)]
struct DatasetPrepArgs {
    /// Directory with raw edges.tsv / features.tsv / labels.tsv / meta.tsv.
    #[arg(long)]
    raw_dir: PathBuf,
    /// Output directory for the prepared dataset.
    #[arg(long)]
    out: PathBuf,
    /// Master seed (drives the split and target sampling).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum VictimCmd {
    /// Train a classifier on a prepared dataset and save its checkpoint.
    Train(VictimTrainArgs),
}

#[derive(Args)]
struct VictimTrainArgs {
    /// Prepared dataset directory (with splits.tsv / targets.tsv).
    #[arg(long)]
    dataset_dir: PathBuf,
    /// Architecture: gcn | sgc | surrogate | tagcn | gcnii.
    #[arg(long)]
    arch: String,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AgentCmd {
    /// Train the PPO attack agent against a trained victim.
    Train(AgentTrainArgs),
}

#[derive(Args)]
struct AgentTrainArgs {
    #[arg(long)]
    dataset_dir: PathBuf,
    /// Victim checkpoint to attack.
    #[arg(long)]
    victim: PathBuf,
    /// Agent checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Training log (JSONL) output path.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Collection phases to run.
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Parallel environments per phase.
    #[arg(long, default_value_t = 32)]
    envs: usize,
    /// Steps per environment per phase.
    #[arg(long, default_value_t = 128)]
    steps_per_env: usize,
    /// Greedy evaluation cadence, in epochs.
    #[arg(long, default_value_t = 400)]
    eval_every: usize,
    /// Evaluations without improvement before early stop.
    #[arg(long, default_value_t = 20)]
    patience: usize,
    /// Feature budget; defaults to the dataset's maximum feature count
    /// per node.
    #[arg(long)]
    budget: Option<usize>,
    /// Restrict training goals to the first N targets.
    #[arg(long)]
    targets: Option<usize>,
}

#[derive(Subcommand)]
enum AttackCmd {
    /// Run attackers over a goal grid and write reports plus summaries.
    Run(AttackRunArgs),
}

#[derive(Args)]
struct AttackRunArgs {
    /// Optional key = value config file; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    /// Victim checkpoint.
    #[arg(long)]
    victim: Option<PathBuf>,
    /// Surrogate checkpoint (needed by black-box gradient attackers).
    #[arg(long)]
    surrogate: Option<PathBuf>,
    /// Agent checkpoint (needed by the gsnia attacker).
    #[arg(long)]
    agent: Option<PathBuf>,
    /// Comma-separated attackers: clean|random|mostattr|oneshot|greedy|gsnia.
    #[arg(long, value_delimiter = ',')]
    attacker: Vec<String>,
    /// Gradient source for oneshot/greedy: victim | surrogate.
    #[arg(long)]
    grad_source: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Feature budget; defaults to the dataset's maximum per-node count.
    #[arg(long)]
    budget: Option<usize>,
    /// Number of targets from the target set (default: all).
    #[arg(long)]
    targets: Option<usize>,
    /// Targeted labels (default: every label).
    #[arg(long, value_delimiter = ',')]
    labels: Vec<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock timings (makes reruns non-identical).
    #[arg(long, default_value_t = false)]
    timings: bool,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Aggregate reports.jsonl into the label-shift heatmap CSV.
    Heatmap(ReportHeatmapArgs),
    /// Evaluate a trained agent across feature budgets.
    Sweep(ReportSweepArgs),
}

#[derive(Args)]
struct ReportHeatmapArgs {
    /// Path to reports.jsonl.
    #[arg(long)]
    reports: PathBuf,
    /// Number of labels in the dataset.
    #[arg(long)]
    num_labels: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportSweepArgs {
    #[arg(long)]
    dataset_dir: PathBuf,
    #[arg(long)]
    victim: PathBuf,
    #[arg(long)]
    agent: PathBuf,
    /// Comma-separated episode lengths to evaluate.
    #[arg(long, value_delimiter = ',')]
    budgets: Vec<usize>,
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Dataset(DatasetCmd::Prep(args)) => dataset_prep(args),
        Command::Victim(VictimCmd::Train(args)) => victim_train(args),
        Command::Agent(AgentCmd::Train(args)) => agent_train(args),
        Command::Attack(AttackCmd::Run(args)) => attack_run(args),
        Command::Report(ReportCmd::Heatmap(args)) => report_heatmap(args),
        Command::Report(ReportCmd::Sweep(args)) => report_sweep(args),
    }
}

fn load_prepared(dir: &Path, seed: u64) -> anyhow::Result<(Graph, SplitSpec)> {
    let g = io::load_dataset(dir).with_context(|| format!("loading dataset from {}", dir.display()))?;
    let split = io::load_splits(dir, seed, &g).with_context(|| format!("loading splits from {}", dir.display()))?;
    Ok((g, split))
}

fn dataset_prep(args: DatasetPrepArgs) -> anyhow::Result<()> {
    let raw = io::load_dataset(&args.raw_dir)?;
    let (lcc, _) = raw.largest_connected_component();
    let split = make_splits(&lcc, derive_seed(args.seed, "splits"))?;
    io::write_dataset(&lcc, &args.out)?;
    io::write_splits(&split, &args.out)?;
    println!(
        "prepared {} nodes, {} edges, {} features, {} labels; splits {}/{}/{} with {} targets",
        lcc.num_nodes(),
        lcc.num_edges(),
        lcc.num_features(),
        lcc.num_labels(),
        split.train_ids.len(),
        split.val_ids.len(),
        split.test_ids.len(),
        split.target_ids.len()
    );
    Ok(())
}

fn victim_train(args: VictimTrainArgs) -> anyhow::Result<()> {
    let (g, split) = load_prepared(&args.dataset_dir, args.seed)?;
    let arch = GnnArchitecture::from_name(&args.arch)?;
    let model = train_victim(&g, &split, &arch, derive_seed(args.seed, "victim"))?;
    let test_acc = model.accuracy(&g, &split.test_ids)?;
    let val_acc = model.accuracy(&g, &split.val_ids)?;
    model.save(&args.out)?;
    println!(
        "{}: val accuracy {:.4}, test accuracy {:.4}; checkpoint {}",
        args.arch,
        val_acc,
        test_acc,
        args.out.display()
    );
    Ok(())
}

fn agent_train(args: AgentTrainArgs) -> anyhow::Result<()> {
    let (g, split) = load_prepared(&args.dataset_dir, args.seed)?;
    let victim = VictimModel::load(&args.victim, &g)?;
    let bank = build_label_bank(&g, &victim)?;
    let budget = args.budget.unwrap_or_else(|| g.max_feature_budget());
    let goals = goal_grid(&split.target_ids, args.targets, None, g.num_labels());
    let task = TrainTask {
        graph: &g,
        victim: &victim,
        bank: &bank,
        goals,
        budget,
    };
    let cfg = PpoConfig {
        parallel_envs: args.envs,
        steps_per_env: args.steps_per_env,
        train_epochs: args.epochs,
        eval_every: args.eval_every,
        patience: args.patience,
        ..PpoConfig::default()
    };
    let outcome = train(&task, &cfg, derive_seed(args.seed, "agent"))?;
    save_agent(&args.out, &outcome.policy, &outcome.value)?;
    if let Some(log_path) = &args.log {
        if let Some(dir) = log_path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut text = String::new();
        for entry in &outcome.log {
            text.push_str(&serde_json::to_string(entry)?);
            text.push('\n');
        }
        std::fs::write(log_path, text)?;
    }
    match outcome.best_success {
        Some(s) => println!(
            "trained {} epochs (budget {budget}); best eval success {:.4}; checkpoint {}",
            outcome.log.len(),
            s,
            args.out.display()
        ),
        None => println!(
            "trained {} epochs (budget {budget}); checkpoint {}",
            outcome.log.len(),
            args.out.display()
        ),
    }
    Ok(())
}

fn attack_run(args: AttackRunArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    // explicit flags override the config file
    if let Some(v) = args.dataset_dir {
        cfg.dataset_dir = Some(v);
    }
    if let Some(v) = args.victim {
        cfg.victim = Some(v);
    }
    if let Some(v) = args.surrogate {
        cfg.surrogate = Some(v);
    }
    if let Some(v) = args.agent {
        cfg.agent = Some(v);
    }
    if !args.attacker.is_empty() {
        cfg.attackers = Some(args.attacker.clone());
    }
    if let Some(v) = args.grad_source {
        cfg.grad_source = Some(v);
    }
    if let Some(v) = args.seed {
        cfg.seed = Some(v);
    }
    if let Some(v) = args.budget {
        cfg.budget = Some(v);
    }
    if let Some(v) = args.targets {
        cfg.num_targets = Some(v);
    }
    if !args.labels.is_empty() {
        cfg.labels = Some(args.labels.clone());
    }
    if let Some(v) = args.out {
        cfg.out_dir = Some(v);
    }
    if args.timings {
        cfg.timings = Some(true);
    }

    let dataset_dir = cfg.dataset_dir.clone().context("--dataset-dir is required")?;
    let victim_path = cfg.victim.clone().context("--victim is required")?;
    let out_dir = cfg.out_dir.clone().context("--out is required")?;
    let attacker_names = cfg.attackers.clone().context("--attacker is required")?;
    let seed = cfg.seed.unwrap_or(0);

    let grad_source = match cfg.grad_source.as_deref() {
        None | Some("victim") => GradSource::Victim,
        Some("surrogate") => GradSource::Surrogate,
        Some(other) => bail!("unknown grad source {other:?}; expected victim|surrogate"),
    };
    let attackers: Vec<AttackerSpec> = attacker_names
        .iter()
        .map(|n| AttackerSpec::parse(n, grad_source))
        .collect::<snia_core::Result<_>>()?;

    let (g, split) = load_prepared(&dataset_dir, seed)?;
    let victim = VictimModel::load(&victim_path, &g)?;
    let victim_name = victim.arch.kind.name().to_string();
    let surrogate = match &cfg.surrogate {
        Some(p) => Some(VictimModel::load(p, &g)?),
        None => None,
    };
    let policy = match &cfg.agent {
        Some(p) => Some(load_agent(p)?.0),
        None => None,
    };
    let budget = cfg.budget.unwrap_or_else(|| g.max_feature_budget());
    let goals = goal_grid(&split.target_ids, cfg.num_targets, cfg.labels.as_deref(), g.num_labels());

    let inputs = SuiteInputs {
        graph: &g,
        victim: &victim,
        victim_name,
        surrogate: surrogate.as_ref(),
        policy: policy.as_ref(),
        goals,
        budget,
        seed,
        timings: cfg.timings.unwrap_or(false),
    };
    let reports = run_attack_suite(&inputs, &attackers)?;

    std::fs::create_dir_all(&out_dir)?;
    let reports_path = out_dir.join("reports.jsonl");
    write_reports_jsonl(&reports, &reports_path)?;
    let columns: Vec<String> = attackers.iter().map(AttackerSpec::column_name).collect();
    let rates = success_rates(&reports, g.num_labels(), &columns);
    let rates_path = out_dir.join("success_rates.csv");
    write_success_rates_csv(&rates, &columns, &rates_path)?;
    let manifest_path = out_dir.join("manifest.tsv");
    write_manifest(&[&reports_path, &rates_path], &cfg.canonical_string(), &manifest_path)?;

    for (label, row) in rates.iter().enumerate() {
        let cells: Vec<String> = columns
            .iter()
            .zip(row)
            .map(|(c, v)| format!("{c} {:.1}", v * 100.0))
            .collect();
        println!("y_t={label}: {}", cells.join(", "));
    }
    println!("wrote {}", reports_path.display());
    Ok(())
}

fn report_heatmap(args: ReportHeatmapArgs) -> anyhow::Result<()> {
    let reports = read_reports_jsonl(&args.reports)?;
    let matrix = heatmap_matrix(&reports, args.num_labels);
    write_heatmap_csv(&matrix, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn report_sweep(args: ReportSweepArgs) -> anyhow::Result<()> {
    if args.budgets.is_empty() {
        bail!("--budgets must list at least one episode length");
    }
    let (g, split) = load_prepared(&args.dataset_dir, args.seed)?;
    let victim = VictimModel::load(&args.victim, &g)?;
    let (policy, _) = load_agent(&args.agent)?;
    let bank = build_label_bank(&g, &victim)?;
    let goals: Vec<AttackGoal> = goal_grid(&split.target_ids, args.targets, None, g.num_labels());
    let rows = budget_sweep(&g, &victim, &bank, &policy, &goals, &args.budgets, g.num_labels())?;
    write_sweep_csv(&rows, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
