use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dbshadow::estimate::Method;
use dbshadow::harness::{
    cmd_estimate, cmd_lowerbound, cmd_scaling, cmd_verify, example_config, CommandOutcome, Overrides, RunConfig,
    WORKERS_ENV,
};
use dbshadow::trajectory::Engine;

#[derive(Parser)]
#[command(name = "dbshadow", version, about = "Detailed-balance shadow tomography simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check channel identities and the exact marginal law.
    Verify(RunArgs),
    /// Run the protocol and write estimates and the transcript.
    Estimate(RunArgs),
    /// Sweep M and epsilon over many seeds.
    Scaling(RunArgs),
    /// Run the lower-bound lemma battery.
    Lowerbound(RunArgs),
    /// Print the example config (two-qubit Ising chain) as JSON.
    ExampleConfig,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long)]
    copies: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `mean-of-truncated-block-means` or `median-of-means`.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, value_parser = parse_engine)]
    engine: Option<Engine>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Seeds per scaling grid point.
    #[arg(long)]
    seeds: Option<usize>,
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown engine '{s}' (expected pure-ensemble or density)"))
}

impl RunArgs {
    fn load(&self) -> dbshadow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::read(p)?,
            None => RunConfig::default(),
        };
        Overrides {
            beta: self.beta,
            sigma: self.sigma,
            c: self.c,
            epsilon: self.epsilon,
            delta: self.delta,
            ell: self.ell,
            copies: self.copies,
            seed: self.seed,
            method: self.method,
            engine: self.engine,
            output_dir: self.output_dir.clone(),
            seeds: self.seeds,
        }
        .apply(&mut cfg);
        Ok(cfg)
    }
}

fn init_workers() -> Result<(), String> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v.parse().map_err(|_| format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(args: &RunArgs, cmd: fn(&RunConfig) -> dbshadow::Result<CommandOutcome>) -> ExitCode {
    match args.load().and_then(|cfg| cmd(&cfg)) {
        Ok(out) => {
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            if out.passed {
                eprintln!("PASS");
                ExitCode::SUCCESS
            } else {
                eprintln!("FAIL (see report.json)");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match &cli.command {
        Command::Verify(a) => run(a, cmd_verify),
        Command::Estimate(a) => run(a, cmd_estimate),
        Command::Scaling(a) => run(a, cmd_scaling),
        Command::Lowerbound(a) => run(a, cmd_lowerbound),
        Command::ExampleConfig => {
            println!("{}", serde_json::to_string_pretty(&example_config()).expect("config serializes"));
            ExitCode::SUCCESS
        }
    }
}
