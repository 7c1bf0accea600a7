use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tomplan::harness::{export_tree, run_batch, run_episode, Condition, HarnessError, RunConfig, TreeFormat};
use tomplan::model::{GenerativeModel, Task};
use tomplan::si::SelectionMode;

#[derive(Parser)]
#[command(
    name = "tomplan",
    version,
    about = "Sophisticated-inference and theory-of-mind planning in gridworlds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its trace.
    Run(RunArgs),
    /// Run a seed sweep and write metrics and the per-seed table.
    Batch(RunArgs),
    /// Run one episode with tree export and write each agent's planning trees.
    ExportTree {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "records")]
        format: FormatArg,
        /// Only export trees planned at this step.
        #[arg(long)]
        step: Option<usize>,
    },
    /// Check a generative model file (JSON) or a run configuration (TOML).
    ValidateModel { path: PathBuf },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Records,
    Graph,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SelectionArg {
    Argmax,
    Sample,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ConditionArg {
    NonTom,
    Tom,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file; overrides --task presets.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "collision")]
    task: Task,
    #[arg(long, value_enum)]
    condition: Option<ConditionArg>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    policy_threshold: Option<f64>,
    #[arg(long)]
    observation_threshold: Option<f64>,
    #[arg(long)]
    other_policy_threshold: Option<f64>,
    #[arg(long)]
    other_observation_threshold: Option<f64>,
    /// Disable all pruning.
    #[arg(long)]
    no_pruning: bool,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_enum)]
    selection: Option<SelectionArg>,
    /// Single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed range `a..b` (exclusive) or comma list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::Config(format!("cannot parse seeds {spec:?}"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_toml(&std::fs::read_to_string(p)?)?,
            None => RunConfig::preset(self.task, Condition::NonTom),
        };
        if let Some(c) = self.condition {
            cfg.set_condition(match c {
                ConditionArg::NonTom => Condition::NonTom,
                ConditionArg::Tom => Condition::Tom,
            });
        }
        let p = &mut cfg.planner;
        if let Some(h) = self.horizon {
            p.base.horizon = h;
        }
        if let Some(t) = self.policy_threshold {
            p.base.policy_prune_threshold = t;
        }
        if let Some(t) = self.observation_threshold {
            p.base.observation_prune_threshold = t;
        }
        if let Some(t) = self.other_policy_threshold {
            p.other_policy_prune_threshold = t;
        }
        if let Some(t) = self.other_observation_threshold {
            p.other_observation_prune_threshold = t;
        }
        if self.no_pruning {
            p.base.pruning = false;
        }
        if let Some(t) = self.temperature {
            p.base.temperature = t;
        }
        if let Some(s) = self.selection {
            cfg.selection = match s {
                SelectionArg::Argmax => SelectionMode::Argmax,
                SelectionArg::Sample => SelectionMode::Sample,
            };
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let seed = cfg.seeds[0];
            let ep = run_episode(&cfg, seed)?;
            write(&args.out, "config.toml", &cfg.to_toml())?;
            let trace: String = ep
                .trace
                .iter()
                .map(|s| serde_json::to_string(s).map(|l| l + "\n"))
                .collect::<Result<_, _>>()?;
            write(&args.out, &format!("trace-{seed}.jsonl"), &trace)?;
            write(
                &args.out,
                &format!("outcome-{seed}.json"),
                &serde_json::to_string_pretty(&ep.outcome)?,
            )?;
            println!("{}", serde_json::to_string(&ep.outcome)?);
        }
        Command::Batch(args) => {
            let cfg = args.config()?;
            let report = run_batch(&cfg)?;
            write(&args.out, "config.toml", &cfg.to_toml())?;
            write(&args.out, "outcomes.csv", &report.table())?;
            write(
                &args.out,
                "metrics.json",
                &serde_json::to_string_pretty(&report.metrics)?,
            )?;
            println!("{}", serde_json::to_string_pretty(&report.metrics)?);
        }
        Command::ExportTree { run, format, step } => {
            let mut cfg = run.config()?;
            cfg.export.trees = true;
            let seed = cfg.seeds[0];
            let ep = run_episode(&cfg, seed)?;
            let (format, ext) = match format {
                FormatArg::Records => (TreeFormat::Records, "jsonl"),
                FormatArg::Graph => (TreeFormat::Graph, "dot"),
            };
            std::fs::create_dir_all(&run.out)?;
            let mut written = 0;
            for t in ep.trees.iter().filter(|t| step.is_none_or(|s| s == t.step)) {
                let name = format!("tree-{}-step{}.{ext}", tomplan::env::AGENT_NAMES[t.agent], t.step);
                let path = run.out.join(name);
                export_tree(&t.tree, format, &path)?;
                println!("{}", path.display());
                written += 1;
            }
            if written == 0 {
                return Err(HarnessError::Config(format!(
                    "no tree planned at step {} (the episode ran {} steps)",
                    step.unwrap_or(0),
                    ep.trace.len()
                )));
            }
        }
        Command::ValidateModel { path } => {
            let text = std::fs::read_to_string(&path)?;
            if path.extension().is_some_and(|e| e == "toml") {
                RunConfig::from_toml(&text)?;
                println!("ok: run configuration");
            } else {
                let model = GenerativeModel::from_json(&text)?;
                let violations = model.validate();
                if !violations.is_empty() {
                    for v in &violations {
                        eprintln!("{}: {}", v.location, v.message);
                    }
                    return Err(HarnessError::Config(format!("{} violation(s)", violations.len())));
                }
                println!("ok: model {}", model.name);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
