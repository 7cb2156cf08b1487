use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sas_cli::config::{resolve_run_config, Overrides};
use sas_cli::{profiles, AgentKind, Command, RunOptions};

/// Exit status when a run finished but missed one of its success conditions.
const EXIT_UNMET: u8 = 3;

#[derive(Parser)]
#[command(
    name = "sasopt",
    version,
    about = "Benchmark, retrieval and self-improvement experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimizer comparison table on the benchmark functions.
    Bench(RunArgs),
    /// Top-k retrieval accuracy of an agent over cached traces.
    Retrieve(RunArgs),
    /// Iterative self-improvement towards a landing goal.
    SelfImprove(RunArgs),
    /// Regenerate tables and plots of an artifact directory into its `report/`.
    Report { artifact: PathBuf },
    /// List the embedded profiles, or print one.
    Profiles { name: Option<String> },
}

#[derive(Args)]
struct RunArgs {
    /// Run config (TOML).
    #[arg(long, conflicts_with = "profile")]
    config: Option<PathBuf>,
    /// Embedded config, see `sasopt profiles`.
    #[arg(long)]
    profile: Option<String>,
    /// Artifact directory [default: runs/<command>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    agent: Option<AgentKind>,
    /// Fixture for `--agent replay`.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Save every agent reply to `fixture.jsonl` in the artifact.
    #[arg(long)]
    record: bool,
}

fn execute(command: Command, args: RunArgs) -> anyhow::Result<ExitCode> {
    let overrides = Overrides {
        seed: args.seed,
        agent: args.agent,
        fixture: args.fixture,
    };
    let cfg = resolve_run_config(
        command,
        args.config.as_deref(),
        args.profile.as_deref(),
        &overrides,
    )?;
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from("runs").join(command.to_string()));
    let outcome = sas_cli::run(
        &cfg,
        &RunOptions {
            out,
            jobs: args.jobs,
            record: args.record,
        },
    )?;
    println!("wrote {}", outcome.dir.display());
    if outcome.success() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &outcome.failures {
            eprintln!("unmet: {f}");
        }
        Ok(ExitCode::from(EXIT_UNMET))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Bench(a) => execute(Command::Bench, a),
        Cmd::Retrieve(a) => execute(Command::Retrieve, a),
        Cmd::SelfImprove(a) => execute(Command::SelfImprove, a),
        Cmd::Report { artifact } => sas_cli::report(&artifact).map(|r| {
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {}", r.dir.display());
            ExitCode::SUCCESS
        }),
        Cmd::Profiles { name: None } => {
            for n in profiles::names() {
                println!("{n}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Profiles { name: Some(n) } => match profiles::profile(&n) {
            Some(text) => {
                print!("{text}");
                Ok(ExitCode::SUCCESS)
            }
            None => Err(anyhow::anyhow!("unknown profile '{n}'")),
        },
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
