// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod io;
mod run;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ScenarioConfig;
use run::{Run, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver did not converge: {what}")]
    NonConvergence { what: String, report: Option<Box<RunReport>> },
    #[error("detection contract violated: {what}")]
    Contract { what: String, report: Option<Box<RunReport>> },
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonConvergence { .. } => 3,
            CliError::Contract { .. } => 4,
            CliError::Other(_) => 1,
        }
    }

    fn report(&self) -> Option<&RunReport> {
        match self {
            CliError::NonConvergence { report, .. } | CliError::Contract { report, .. } => report.as_deref(),
            _ => None,
        }
    }
}

impl From<spoofplan::Error> for CliError {
    fn from(e: spoofplan::Error) -> Self {
        use spoofplan::Error as E;
        match e {
            E::InvalidArgument(_)
            | E::ControlBound { .. }
            | E::NegativeSpeed { .. }
            | E::Unreachable(_)
            | E::Infeasible { .. }
            | E::SingularPosition { .. } => CliError::Config(e.to_string()),
            E::Solver(what) => CliError::NonConvergence { what, report: None },
            other => CliError::Other(other.into()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spoofplan", version, about = "Undetectable spoofing attacks and secure planning for planar robots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: $SPOOFPLAN_OUT, then the scenario's
    /// `output.dir`, then ./spoofplan-out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integration step, overriding the scenario.
    #[arg(long)]
    dt: Option<f64>,
    /// Worker threads for seeds, Jacobian columns and sweep entries.
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed for the random multi-start costates, overriding the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Print nothing but errors.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roll out the nominal and, optionally, a closed-form undetectable attack.
    Simulate(Common),
    /// Solve for the worst-case undetectable attack on the nominal.
    AttackOpt(Common),
    /// Plan a secure trajectory to p_F (optionally attacking the result).
    PlanSecure(Common),
    /// Classify a nominal input and build a counterexample when it is not secure.
    Check {
        #[command(flatten)]
        common: Common,
        /// Candidate trajectory CSV; defaults to the scenario's nominal input.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Worst-case deviation over a family of constant nominal inputs.
    Sweep(Common),
}

fn out_dir(flag: Option<PathBuf>, cfg: &ScenarioConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os("SPOOFPLAN_OUT").filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("spoofplan-out"))
}

fn load(common: &Common) -> Result<(ScenarioConfig, PathBuf), CliError> {
    let mut cfg = ScenarioConfig::load(&common.config)?;
    if let Some(dt) = common.dt {
        cfg.dt = Some(dt);
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = out_dir(common.out.clone(), &cfg);
    Ok((cfg, out))
}

fn print_report(r: &RunReport) {
    println!("{:<24}{}", "command", r.command);
    println!("{:<24}{}", "status", r.status);
    for (k, v) in &r.metrics {
        println!("{k:<24}{v}");
    }
    if let Some(d) = r.detection.as_ref().and_then(|d| d.get("detected")) {
        println!("{:<24}{d}", "detected");
    }
    println!("{:<24}{:.3}", "wall_clock_s", r.wall_clock_s);
    for f in &r.files {
        println!("{:<24}{}", "wrote", f.display());
    }
}

fn dispatch(cmd: Command) -> Result<(RunReport, bool), CliError> {
    let (name, common, input): (&'static str, Common, Option<PathBuf>) = match cmd {
        Command::Simulate(c) => ("simulate", c, None),
        Command::AttackOpt(c) => ("attack-opt", c, None),
        Command::PlanSecure(c) => ("plan-secure", c, None),
        Command::Check { common, input } => ("check", common, input),
        Command::Sweep(c) => ("sweep", c, None),
    };
    if let Some(n) = common.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(anyhow::Error::from)?;
    }
    let quiet = common.quiet;
    let (cfg, out) = load(&common)?;
    let run = Run::new(name, cfg, out);
    let report = match name {
        "simulate" => run::simulate(run),
        "attack-opt" => run::attack_opt(run),
        "plan-secure" => run::plan_secure_cmd(run),
        "check" => run::check(run, input.as_deref()),
        _ => run::sweep(run),
    };
    match report {
        Ok(r) => Ok((r, quiet)),
        Err(e) => {
            if let (false, Some(r)) = (quiet, e.report()) {
                print_report(r);
            }
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = match &cli.command {
        Command::Simulate(c) | Command::AttackOpt(c) | Command::PlanSecure(c) | Command::Sweep(c) => c.quiet,
        Command::Check { common, .. } => common.quiet,
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if quiet { "error" } else { "warn" })).init();
    match dispatch(cli.command) {
        Ok((report, quiet)) => {
            if !quiet {
                print_report(&report);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
