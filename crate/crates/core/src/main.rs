use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ergomesh::cli::{self, Overrides};

#[derive(Parser)]
#[command(name = "ergomesh", version, about = "Ergodic coverage trajectories over triangle meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a trajectory and export it with its coverage and a report.
    Plan(Common),
    /// Score an existing trajectory CSV.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV with columns t,x,y,z[,ux,uy,uz].
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Export eigenvalues and eigenvectors of the mesh Laplacian.
    Spectrum(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset (overrides the file's `preset` key).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for cached eigenbases.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set solver.outer_iters=5`.
    #[arg(long = "set", value_name = "KEY=JSON")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self) -> ergomesh::Result<cli::RunConfig> {
        cli::resolve_config(
            self.config.as_deref(),
            &Overrides {
                preset: self.preset.clone(),
                output_dir: self.output_dir.clone(),
                seed: self.seed,
                cache_dir: self.cache_dir.clone(),
                set: self.set.clone(),
            },
        )
    }
}

fn run(command: Command) -> ergomesh::Result<()> {
    match command {
        Command::Plan(common) => {
            let report = cli::run_plan(&common.resolve()?)?;
            println!("{}", serde_json::to_string_pretty(&summary(&report)).expect("json"));
        }
        Command::Eval { common, trajectory } => {
            let report = cli::run_eval(&common.resolve()?, &trajectory)?;
            println!("{}", serde_json::to_string_pretty(&summary(&report)).expect("json"));
        }
        Command::Spectrum(common) => {
            let cfg = common.resolve()?;
            let basis = cli::run_spectrum(&cfg)?;
            println!(
                "wrote {} eigenpairs to {}",
                basis.len(),
                cfg.output_dir.display()
            );
        }
    }
    Ok(())
}

fn summary(report: &cli::RunReport) -> serde_json::Value {
    serde_json::json!({
        "command": report.command,
        "ergodic_metric": report.ergodic_metric,
        "analytic_metric": report.analytic_metric,
        "initial_ergodic_metric": report.initial_ergodic_metric,
        "initial_analytic_metric": report.initial_analytic_metric,
        "violations": report.violations,
        "optimizer": report.optimizer,
        "basis_size": report.basis_size,
        "output_dir": report.config.output_dir,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
