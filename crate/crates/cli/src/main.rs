//! `paneldid` — batch front-end for the panel difference-in-differences
//! engine.
//!
//! Exit codes: 0 success, 1 command error (machine-readable JSON on
//! stderr), 2 argument/usage errors (from the parser). The `validate`
//! verb exits 1 when the panel has validation errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use paneldid::error::{Error, Result};
use paneldid_cli::commands::{
    cmd_build_panel, cmd_cross_section, cmd_diagnostics, cmd_estimate, cmd_event_study,
    cmd_simulate, cmd_validate, BuildInputs,
};
use paneldid_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "paneldid",
    version,
    about = "Staggered-adoption panel estimation: TWFE and group-time ATT with \
             cluster/spatial/bootstrap inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed override for bootstrap and simulation.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory (created if absent).
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate micro records, attach geography and spatial covariates,
    /// and write a panel CSV.
    BuildPanel {
        /// Micro-record CSV (defaults to [data].micro).
        #[arg(long, value_name = "PATH")]
        micro: Option<PathBuf>,
        /// Unit schedule/geography CSV (defaults to [data].schedule).
        #[arg(long, value_name = "PATH")]
        schedule: Option<PathBuf>,
        /// Institution sites CSV (defaults to [data].sites).
        #[arg(long, value_name = "PATH")]
        sites: Option<PathBuf>,
        /// Named anchor-path CSV (defaults to [data].anchors).
        #[arg(long, value_name = "PATH")]
        anchors: Option<PathBuf>,
    },
    /// Run the configured estimators; one table row per
    /// (outcome, estimator, vcov).
    Estimate {
        /// Panel CSV (defaults to [data].panel).
        panel: Option<PathBuf>,
    },
    /// Group-time cells aggregated by event time, with uniform bands.
    EventStudy {
        panel: Option<PathBuf>,
    },
    /// Balance, KS, summary, and density tables at the base period.
    Diagnostics {
        panel: Option<PathBuf>,
    },
    /// Monte Carlo run of an estimator on a synthetic DGP.
    Simulate,
    /// Validate a panel CSV; exits 1 if the report has errors.
    Validate {
        panel: Option<PathBuf>,
    },
    /// One-period cross-section regression (OLS or Poisson).
    CrossSection {
        panel: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn resolve<'a>(cli_arg: Option<&'a Path>, cfg_path: Option<&'a Path>, what: &str) -> Result<&'a Path> {
    cli_arg.or(cfg_path).ok_or_else(|| {
        Error::Schema(format!("no {what} path: pass --{what} or set [data].{what}"))
    })
}

fn run(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli.config.as_deref())?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::BuildPanel { micro, schedule, sites, anchors } => {
            let micro = resolve(micro.as_deref(), cfg.data.micro.as_deref(), "micro")?;
            let schedule =
                resolve(schedule.as_deref(), cfg.data.schedule.as_deref(), "schedule")?;
            let inputs = BuildInputs {
                micro,
                schedule,
                sites: sites.as_deref().or(cfg.data.sites.as_deref()),
                anchors: anchors.as_deref().or(cfg.data.anchors.as_deref()),
            };
            let built = cmd_build_panel(&cfg, &inputs, out)?;
            for w in &built.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "wrote {} ({} units x {} periods)",
                built.panel_path.display(),
                built.n_units,
                built.n_periods
            );
            Ok(0)
        }
        Command::Estimate { panel } => {
            let panel = cfg.panel_path(panel.as_deref())?;
            let res = cmd_estimate(&cfg, &panel, cli.seed, out)?;
            println!(
                "wrote {} and {} ({} rows)",
                res.csv_path.display(),
                res.json_path.display(),
                res.rows.len()
            );
            Ok(0)
        }
        Command::EventStudy { panel } => {
            let panel = cfg.panel_path(panel.as_deref())?;
            let res = cmd_event_study(&cfg, &panel, cli.seed, out)?;
            println!(
                "wrote {} and {} ({} outcome series)",
                res.csv_path.display(),
                res.json_path.display(),
                res.series.len()
            );
            Ok(0)
        }
        Command::Diagnostics { panel } => {
            let panel = cfg.panel_path(panel.as_deref())?;
            let res = cmd_diagnostics(&cfg, &panel, out)?;
            if let Some(w) = &res.warning {
                eprintln!("warning: {w}");
            } else {
                println!(
                    "wrote {} diagnostics tables to {}",
                    res.paths.len(),
                    out.display()
                );
            }
            Ok(0)
        }
        Command::Simulate => {
            let res = cmd_simulate(&cfg, cli.seed, out)?;
            println!(
                "wrote {} (bias {:.6}, mean se {:.6})",
                res.json_path.display(),
                res.report.bias,
                res.report.mean_se
            );
            Ok(0)
        }
        Command::Validate { panel } => {
            let panel = cfg.panel_path(panel.as_deref())?;
            let (report, exit) = cmd_validate(&panel)?;
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Io(e.to_string()))?;
            println!("{text}");
            Ok(exit)
        }
        Command::CrossSection { panel } => {
            let panel = cfg.panel_path(panel.as_deref())?;
            let res = cmd_cross_section(&cfg, &panel, out)?;
            println!(
                "wrote {} and {} ({} terms, n = {})",
                res.csv_path.display(),
                res.json_path.display(),
                res.table.rows.len(),
                res.table.n
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // Ignore the error if a pool already exists (e.g. under tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let payload = serde_json::json!({
                "error": { "code": e.code(), "message": e.to_string() }
            });
            eprintln!("{payload}");
            ExitCode::from(1)
        }
    }
}
