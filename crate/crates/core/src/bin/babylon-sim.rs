use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use babylon_sim::checks::{ALL, OPT_IN};
use babylon_sim::client::Finality;
use babylon_sim::config::SimConfig;
use babylon_sim::harness::{run_batch, summary, HarnessError};
use babylon_sim::scenario::{Params, NAMES};

#[derive(Parser)]
#[command(name = "babylon-sim", about = "Run checkpointing scenarios and check their traces")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Option<Cmd>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario (the default command).
    Run(RunArgs),
    /// List scenarios and checks.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum FinalityArg {
    Fast,
    Slow,
    Both,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario name, `fuzz`, or `all`.
    #[arg(long)]
    scenario: Option<String>,
    /// TOML file with timing parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds to run.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Directory for traces and the verdict summary.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated checks. Defaults to every standard check.
    #[arg(long, value_delimiter = ',')]
    checks: Vec<String>,
    #[arg(long, value_enum, default_value = "both")]
    finality: FinalityArg,
    /// Plain accountable BFT without Bitcoin.
    #[arg(long)]
    baseline: bool,
}

fn run(a: RunArgs) -> Result<bool, String> {
    let Some(name) = a.scenario else { return Err("--scenario is required".into()) };
    for c in &a.checks {
        if !ALL.contains(&c.as_str()) && !OPT_IN.contains(&c.as_str()) {
            return Err(format!("unknown check {c}"));
        }
    }
    let cfg = a.config.as_deref().map(SimConfig::load).transpose().map_err(|e| e.to_string())?;
    let first = a.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(1);
    let seeds: Vec<u64> = (first..first + a.seeds.max(1)).collect();
    let params = Params {
        cfg,
        seed: first,
        baseline: a.baseline,
        finality: match a.finality {
            FinalityArg::Fast => Some(Finality::Fast),
            FinalityArg::Slow => Some(Finality::Slow),
            FinalityArg::Both => None,
        },
        ..Default::default()
    };
    let checks: Vec<&str> = a.checks.iter().map(String::as_str).collect();
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    }
    let names: Vec<&str> = if name == "all" { NAMES.to_vec() } else { vec![name.as_str()] };
    let mut reports = Vec::new();
    for n in names {
        reports.extend(run_batch(n, &params, &seeds, &checks, a.out.as_deref()).map_err(|e| match e {
            HarnessError::UnknownScenario(s) => format!("unknown scenario {s}; try `babylon-sim list`"),
            e => e.to_string(),
        })?);
    }
    let text = summary(&reports);
    print!("{text}");
    if let Some(dir) = &a.out {
        let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
        std::fs::write(dir.join("summary.txt"), &text).map_err(|e| e.to_string())?;
        std::fs::write(dir.join("summary.json"), json).map_err(|e| e.to_string())?;
    }
    Ok(reports.iter().all(|r| r.ok()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match cli.cmd {
        Some(Cmd::List) => {
            println!("scenarios: {} fuzz", NAMES.join(" "));
            println!("checks: {}", ALL.join(" "));
            println!("opt-in checks: {}", OPT_IN.join(" "));
            return ExitCode::SUCCESS;
        }
        Some(Cmd::Run(a)) => a,
        None => cli.run,
    };
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
