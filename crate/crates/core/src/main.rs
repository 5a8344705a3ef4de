use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use fitwave::experiments::{report, ExperimentConfig, Session, Target};
use fitwave::{solve_q, theory, EngineKind, ModelParams};

#[derive(Parser)]
#[command(name = "fitwave", version, about = "Simulate and analyse the travelling fitness wave of an adapting population")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOpts {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    engine: Option<EngineKind>,
    #[arg(long)]
    replicates: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble and write wave.csv and tau.csv per replicate.
    Simulate(RunOpts),
    /// Solve the renewal equation and write t,q,m on the grid.
    SolveQ {
        #[arg(long)]
        h: f64,
        #[arg(long)]
        tmax: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the scales and predictions for (N, s, mu) as JSON.
    Predict {
        #[arg(long = "N", value_parser = parse_population)]
        n: u64,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        mu: f64,
    },
    /// Check one target; exits with status 2 if it fails.
    Verify {
        target: Target,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Evaluate every configured target and write report.json.
    Report(RunOpts),
}

/// Accepts integers written in floating-point notation such as `1e6`.
fn parse_population(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if x.fract() != 0.0 || !(0.0..=u64::MAX as f64).contains(&x) {
        return Err(format!("population size must be a nonnegative integer, got {s}"));
    }
    Ok(x as u64)
}

enum Failure {
    Usage(anyhow::Error),
    Verification(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn load(opts: &RunOpts) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&opts.config)?;
    if let Some(seed) = opts.seed {
        cfg.run.seed = seed;
    }
    if let Some(engine) = opts.engine {
        cfg.run.engine = engine;
    }
    if let Some(r) = opts.replicates {
        cfg.run.replicates = r;
    }
    if let Some(w) = opts.workers {
        cfg.run.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_report(rep: &report::Report, out: Option<&Path>) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("report.json");
            std::fs::write(&path, rep.to_json() + "\n").with_context(|| format!("writing {}", path.display()))
        }
        None => {
            println!("{}", rep.to_json());
            Ok(())
        }
    }
}

fn predict(n: u64, s: f64, mu: f64) -> Result<serde_json::Value> {
    let params = ModelParams::new(n, mu, s)?;
    let sc = theory::scales(&params)?;
    let pr = theory::predictions(&params)?;
    Ok(serde_json::json!({
        "aN": sc.a_n,
        "kN": sc.k_n,
        "kNminus": sc.k_n_minus,
        "kNplus": sc.k_n_plus,
        "kstar": sc.k_star,
        "tstar": sc.t_star,
        "A1": sc.assumptions.a1,
        "A2": sc.assumptions.a2,
        "A3": sc.assumptions.a3,
        "dfWidth": pr.df_width,
        "dfSpeed": pr.df_speed,
        "rbwSpeed": pr.rbw_speed,
        "speed": pr.speed,
    }))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(opts) => {
            let cfg = load(&opts)?;
            let mut session = Session::new(&cfg).map_err(anyhow::Error::from)?;
            let out = opts.out.unwrap_or_else(|| PathBuf::from("."));
            report::write_trajectories(&session.base, &out).map_err(anyhow::Error::from)?;
            let rep = session.report(&[]).map_err(anyhow::Error::from)?;
            write_report(&rep, Some(&out))?;
        }
        Command::SolveQ { h, tmax, out } => {
            let curves = solve_q(h, tmax).map_err(anyhow::Error::from)?;
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            curves.write_csv(std::io::BufWriter::new(file)).context("writing curves")?;
        }
        Command::Predict { n, s, mu } => {
            println!("{}", serde_json::to_string_pretty(&predict(n, s, mu)?).expect("json"));
        }
        Command::Verify { target, opts } => {
            let cfg = load(&opts)?;
            let mut session = Session::new(&cfg).map_err(anyhow::Error::from)?;
            let rep = session.report(&[target]).map_err(anyhow::Error::from)?;
            if let Some(out) = opts.out.as_deref() {
                write_report(&rep, Some(out))?;
            }
            let t = &rep.targets[0];
            let verdict = if t.passed { "PASS" } else { "FAIL" };
            println!("{verdict} {target}: {}", t.criterion);
            if !t.passed {
                return Err(Failure::Verification(format!("{target} failed")));
            }
        }
        Command::Report(opts) => {
            let cfg = load(&opts)?;
            if cfg.verify.targets.is_empty() {
                return Err(Failure::Usage(anyhow!("config lists no [verify] targets")));
            }
            let mut session = Session::new(&cfg).map_err(anyhow::Error::from)?;
            let rep = session.report(&cfg.verify.targets).map_err(anyhow::Error::from)?;
            write_report(&rep, opts.out.as_deref())?;
            for t in &rep.targets {
                eprintln!("{} {}", if t.passed { "PASS" } else { "FAIL" }, t.target);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}
