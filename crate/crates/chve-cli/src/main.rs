use chve_cli::{config, runner, CliError};
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

/// Phase-field viscoelasticity simulator.
#[derive(Parser, Debug)]
#[command(name = "chve", version, about)]
struct Cli {
    /// Flat key-value config file; keys are documented in the README.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment preset used as the base configuration.
    #[arg(long, default_value = "TC1a")]
    preset: String,
    /// Time scheme: cs or dsav.
    #[arg(long)]
    scheme: Option<String>,
    /// RNG seed for the initial data.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of time steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory for CSV and VTK files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mesh resolution: NX NY.
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    mesh: Option<Vec<usize>>,
}

fn build_config(cli: &Cli) -> Result<config::RunConfig, CliError> {
    let mut cfg = config::preset(&cli.preset)?;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)?;
        config::apply_config_text(&mut cfg, &text)?;
    }
    if let Some(scheme) = &cli.scheme {
        cfg.scheme = config::Scheme::parse(scheme)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = cli.steps {
        cfg.steps = steps;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(mesh) = &cli.mesh {
        cfg.nx = mesh[0];
        cfg.ny = mesh[1];
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    println!(
        "scheme={} mesh={}x{} dt={:e} steps={} seed={} eps={:e}",
        cfg.scheme.name(),
        cfg.nx,
        cfg.ny,
        cfg.dt,
        cfg.steps,
        cfg.seed,
        cfg.epsilon()
    );
    let outcome = runner::run(&cfg)?;
    let last = outcome.reports.last().expect("at least the initial report");
    println!(
        "done: t={:e} L={:e} E_CH={:e} mass={:e}",
        last.t, last.lyapunov, last.e_ch, last.mass
    );
    if let Some(b) = outcome.min_bracket {
        println!("min_bracket={b:e}");
    }
    if let Some(path) = &outcome.csv_path {
        println!("csv={}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("last_error: {err}");
            ExitCode::FAILURE
        }
    }
}
