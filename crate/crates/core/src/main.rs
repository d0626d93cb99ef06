use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use subdiff::cli::{self, builtins, CliError, RunOptions, ScenarioFile, EXIT_PARSE};

#[derive(Parser)]
#[command(name = "subdiff", version, about = "Run subdifferential and dynamic-programming verification scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or the builtin catalogue) and write reports.
    Run(RunArgs),
    /// Print the builtin scenario catalogue.
    List {
        /// Emit the catalogue as a runnable scenario file instead.
        #[arg(long)]
        json: bool,
    },
    /// Parse and validate a scenario file without running it.
    Validate { file: PathBuf },
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["file", "builtins"]))]
struct RunArgs {
    file: Option<PathBuf>,
    /// Run every builtin scenario.
    #[arg(long)]
    builtins: bool,
    #[arg(long)]
    out: PathBuf,
    /// Overrides every scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Multiplies all runner tolerances.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
    /// Hypothesis violations fail the run.
    #[arg(long)]
    strict: bool,
}

fn run(args: RunArgs) -> Result<i32, CliError> {
    let file = match &args.file {
        Some(path) => cli::load(path)?,
        None => ScenarioFile::from_scenarios(&builtins::all()),
    };
    let opts = RunOptions {
        jobs: args.jobs,
        seed: args.seed,
        tol_scale: args.tol_scale,
        strict: args.strict,
    };
    let outcome = cli::run_file(&file, &args.out, &opts)?;
    for r in &outcome.reports {
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        let verdict = if r.pass { "pass" } else { "FAIL" };
        if failed.is_empty() {
            println!("{verdict:<4} {} ({} checks)", r.scenario, r.checks.len());
        } else {
            println!("{verdict:<4} {} ({} checks; not passing: {})", r.scenario, r.checks.len(), failed.join(", "));
        }
    }
    println!("report: {}", args.out.join("report.json").display());
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::List { json } => {
            if json {
                let file = ScenarioFile::from_scenarios(&builtins::all());
                println!("{}", serde_json::to_string_pretty(&file).expect("catalogue serializes"));
            } else {
                print!("{}", builtins::list_builtins());
            }
            Ok(0)
        }
        Command::Validate { file } => cli::load(&file).and_then(|f| f.jobs(None)).map(|jobs| {
            println!("ok: {} scenario(s)", jobs.len());
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_PARSE as u8)
        }
    }
}
