use std::path::PathBuf;
use std::process::ExitCode;

use algoc::scenarios::{list_builtins, resolve_out_dir, run_stage, ScenarioConfig, ScenarioReport, Stage};
use algoc::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "algoc", version, about = "Optimal control on almost Lie algebroids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check skew-symmetry, the almost-Lie identity and Jacobi.
    CheckAxioms(RunArgs),
    /// Integrate the extremal and write the base path.
    Simulate(RunArgs),
    /// Transport matrix and pairing drift along the extremal.
    Transport(RunArgs),
    /// Solve for the extremal and check scenario residuals.
    Extremal(RunArgs),
    /// Maximum-principle residuals of the extremal.
    PmpVerify(RunArgs),
    /// Needle-variation cone and separation certificate.
    NeedleCone(RunArgs),
    /// Full pipeline.
    Run(RunArgs),
    /// List builtin scenarios.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin scenario name; overrides the file.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory (falls back to ALGOC_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

impl RunArgs {
    fn config(&self) -> Result<ScenarioConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(name) = &self.scenario {
            cfg.scenario = name.clone();
        }
        if cfg.scenario.is_empty() {
            return Err(Error::Config("no scenario given; use --scenario or --config".into()));
        }
        if self.steps.is_some() {
            cfg.steps = self.steps;
        }
        if self.tol.is_some() {
            cfg.tol = self.tol;
        }
        cfg.out_dir = resolve_out_dir(self.out.as_deref().or(cfg.out_dir.as_deref()));
        Ok(cfg)
    }
}

fn print_report(report: &ScenarioReport) {
    println!("scenario {} ({})", report.scenario, report.algebroid);
    if !report.switches.is_empty() {
        let s: Vec<String> = report.switches.iter().map(|t| format!("{t:.6}")).collect();
        println!("switches {}", s.join(" "));
    }
    for c in &report.checks {
        let verdict = if c.pass { "ok  " } else { "FAIL" };
        println!("{verdict} {:<36} {:>12.4e}  ({} {:.1e})", c.name, c.value, c.bound, c.threshold);
    }
    for (k, v) in &report.details {
        println!("     {k:<36} {v:>12.4e}");
    }
}

fn execute(args: &RunArgs, stage: Stage) -> ExitCode {
    let outcome = args.config().and_then(|cfg| run_stage(&cfg, stage));
    match outcome {
        Ok(out) => {
            print_report(&out.report);
            for p in &out.artifacts {
                println!("wrote {}", p.display());
            }
            if out.report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_NUMERICAL)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, stage) = match &cli.command {
        Command::List => {
            for (name, desc) in list_builtins() {
                println!("{name:<32} {desc}");
            }
            return ExitCode::SUCCESS;
        }
        Command::CheckAxioms(a) => (a, Stage::Axioms),
        Command::Simulate(a) => (a, Stage::Simulate),
        Command::Transport(a) => (a, Stage::Transport),
        Command::Extremal(a) => (a, Stage::Extremal),
        Command::PmpVerify(a) => (a, Stage::PmpVerify),
        Command::NeedleCone(a) => (a, Stage::NeedleCone),
        Command::Run(a) => (a, Stage::All),
    };
    execute(args, stage)
}
