use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use pdesync::harness::config::ScenarioConfig;
use pdesync::harness::converge::{convergence_study, StudyOptions};
use pdesync::harness::io::{
    constants_dump, load_run_dir, write_report, write_run_dir, write_verification, RunReport,
};
use pdesync::harness::run::simulate;
use pdesync::harness::sweep::{run_sweep, write_summary};
use pdesync::harness::verify::verify;
use pdesync::harness::{output_root, HarnessError};

#[derive(Parser)]
#[command(name = "pdesync", version, about = "Simulate and audit boundary-controlled PDE agent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario, write its series and verify the bounds.
    Run {
        config: PathBuf,
        /// Output root (defaults to the config, then $PDESYNC_OUT, then ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify a run directory from its files.
    Verify { rundir: PathBuf },
    /// Run the amplitude sweep declared in a scenario.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid and time-step refinement study.
    Converge {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Print the bound constants as JSON.
    Constants { config: PathBuf },
}

fn run_dir(cfg: &ScenarioConfig, out: Option<&Path>) -> PathBuf {
    output_root(out.or(cfg.output_dir.as_deref())).join(&cfg.name)
}

fn execute(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let run = simulate(&cfg)?;
            let dir = run_dir(&cfg, out.as_deref());
            write_run_dir(&dir, &run)?;
            let verification = verify(&cfg, &run.series, &run.init_norms)?;
            print!("{}", verification.summary());
            let pass = verification.pass;
            write_report(
                &dir,
                &RunReport {
                    name: cfg.name.clone(),
                    verification,
                    compatibility: run.compatibility,
                    runtime: run.stats,
                },
            )?;
            info!("wrote {} ({:.2} s)", dir.display(), run.stats.wall_seconds);
            Ok(pass)
        }
        Command::Verify { rundir } => {
            let loaded = load_run_dir(&rundir)?;
            let report = verify(&loaded.config, &loaded.series, &loaded.init_norms)?;
            print!("{}", report.summary());
            for f in report.failures() {
                error!("{f}");
            }
            write_verification(&rundir, &report)?;
            Ok(report.pass)
        }
        Command::Sweep { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let spec = cfg.sweep.clone().ok_or_else(|| HarnessError::Config {
                field: "sweep".into(),
                message: "section missing".into(),
            })?;
            let rows = run_sweep(&cfg, &spec)?;
            let dir = run_dir(&cfg, out.as_deref());
            write_summary(&dir, &rows)?;
            for row in rows.iter().filter(|r| !r.verification.pass) {
                for f in row.verification.failures() {
                    error!("{:?}: {f}", row.knobs);
                }
            }
            println!("{} jobs written to {}", rows.len(), dir.display());
            Ok(rows.iter().all(|r| r.verification.pass))
        }
        Command::Converge { config, levels } => {
            let cfg = ScenarioConfig::load(&config)?;
            let report = convergence_study(&cfg, &StudyOptions::new(levels))?;
            print!("{}", report.summary());
            Ok(true)
        }
        Command::Constants { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            let dump = constants_dump(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&dump).expect("constants serialize"));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
