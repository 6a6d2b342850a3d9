use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diffnet_cli::commands::{self, PdfParams};
use diffnet_cli::config::{ExperimentConfig, Overrides};
use diffnet_cli::experiment::thread_count;
use diffnet_cli::{CliError, CliResult};
use diffnet_core::network::TopologySpec;

#[derive(Parser)]
#[command(name = "diffnet", version, about = "Clustering and learning over multi-task diffusion networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    n_iters: Option<usize>,
    #[arg(long)]
    n_trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            mu: self.mu,
            n_iters: self.n_iters,
            n_trials: self.n_trials,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte Carlo trials and write learning curves and a summary.
    Simulate(ConfigArgs),
    /// Write the closed-form theory report.
    Analyze(ConfigArgs),
    /// Compare error-probability bounds with empirical rates over a sweep.
    Errprob(ConfigArgs),
    /// Write density curves of the test statistic for Δ = σ² I.
    Pdf {
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        d_star_norm_sq: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_sq: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.03, 0.05])]
        mu: Vec<f64>,
        #[arg(long, default_value_t = 4001)]
        n_points: usize,
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
    },
    /// Generate or validate a topology.
    #[command(subcommand)]
    Topology(TopologyCommand),
}

#[derive(Subcommand)]
enum TopologyCommand {
    /// Sample a topology from a generator spec (JSON).
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "topology.json")]
        output: PathBuf,
    },
    /// Check a topology file against every structural invariant.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => {
            let out = commands::simulate(&args.load()?, thread_count())?;
            for (trial, err) in &out.aggregate.diverged {
                eprintln!("trial {trial} diverged: {err}");
            }
            for f in out.files {
                println!("{}", f.display());
            }
        }
        Command::Analyze(args) => {
            let report = commands::analyze(&args.load()?)?;
            println!(
                "predicted steady-state MSD: {} ({:.3} dB)",
                commands::fmt_f(report.predicted_msd),
                report.predicted_msd_db
            );
        }
        Command::Errprob(args) => {
            let out = commands::errprob(&args.load()?, thread_count())?;
            for f in out.files {
                println!("{}", f.display());
            }
        }
        Command::Pdf { dim, d_star_norm_sq, sigma_sq, mu, n_points, output_dir } => {
            let params = PdfParams { dim, d_star_norm_sq, sigma_sq, mu_list: mu, n_points };
            commands::pdf(&params, &output_dir)?;
            println!("{}", output_dir.join("pdf_curves.csv").display());
        }
        Command::Topology(TopologyCommand::Generate { spec, output }) => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|source| CliError::Io { path: spec.display().to_string(), source })?;
            let spec: TopologySpec = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("invalid topology spec: {e}")))?;
            let check = commands::topology_generate(&spec, &output)?;
            print!("{}", commands::summary_json(&check));
        }
        Command::Topology(TopologyCommand::Validate { input }) => {
            let check = commands::topology_validate(&input)?;
            print!("{}", commands::summary_json(&check));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
