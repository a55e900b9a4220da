use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use adhesion_wave::cli::{load_config, run_experiment, write_json, write_ode_csv, write_potential_table};
use adhesion_wave::ode::{default_battery, verify_uniform_decay, OdeParams};
use adhesion_wave::PotentialParams;

#[derive(Parser)]
#[command(name = "adhesion-wave", version, about = "Damped wave equation with an adhesion potential")]
struct Cli {
    /// Directory for relative output paths and experiment artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Suppress the summary printed to stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Potential utilities.
    Potential {
        #[command(subcommand)]
        command: PotentialCommand,
    },
    /// The scalar hybrid ODE with threshold 1.
    Ode {
        #[command(subcommand)]
        command: OdeCommand,
    },
    /// Run an experiment document.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum PotentialCommand {
    /// Tabulate `u, phi, dphi` to CSV.
    Table(TableArgs),
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    u_star: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long, allow_hyphen_values = true)]
    from: f64,
    #[arg(long, allow_hyphen_values = true)]
    to: f64,
    #[arg(long)]
    step: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum OdeCommand {
    /// Exact piecewise solution sampled to CSV (`t,z,w,regime`).
    Run {
        #[arg(long, allow_hyphen_values = true)]
        z0: f64,
        #[arg(long, allow_hyphen_values = true)]
        w0: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        t_max: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniform-decay report over a battery and a list of sigmas.
    Verify {
        #[arg(long, value_enum, default_value_t = BatteryArg::Default)]
        battery: BatteryArg,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000,10000")]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 30.0)]
        t_max: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BatteryArg {
    Default,
}

fn resolve(out_dir: Option<&Path>, path: &Path) -> Result<PathBuf> {
    let full = match out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    };
    if let Some(parent) = full.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(full)
}

fn run(cli: Cli) -> Result<bool> {
    let out_dir = cli.out_dir.as_deref();
    match cli.command {
        Command::Potential {
            command: PotentialCommand::Table(a),
        } => {
            let p = PotentialParams::new(a.u_star, a.sigma)?;
            let path = resolve(out_dir, &a.out)?;
            let n = write_potential_table(&path, &p, a.from, a.to, a.step)?;
            if !cli.quiet {
                println!("wrote {n} rows to {}", path.display());
            }
            Ok(true)
        }
        Command::Ode {
            command: OdeCommand::Run { z0, w0, sigma, t_max, dt, out },
        } => {
            let p = OdeParams::new(sigma)?;
            anyhow::ensure!(dt > 0.0, "dt must be positive, got {dt}");
            let path = resolve(out_dir, &out)?;
            let tr = write_ode_csv(&path, z0, w0, &p, t_max, dt)?;
            if !cli.quiet {
                let cases: Vec<String> = tr.trace().iter().map(|l| format!("{:?}", l.case)).collect();
                println!(
                    "cases {}, z_inf {:?}, wrote {}",
                    cases.join(" -> "),
                    tr.z_inf,
                    path.display()
                );
            }
            Ok(true)
        }
        Command::Ode {
            command: OdeCommand::Verify { battery, sigmas, t_max, out },
        } => {
            let points = match battery {
                BatteryArg::Default => default_battery(),
            };
            let report = verify_uniform_decay(&points, &sigmas, t_max)?;
            let path = resolve(out_dir, &out)?;
            write_json(&path, &report)?;
            if !cli.quiet {
                println!(
                    "max ratio {:.4} (threshold {}), middle visits <= {}, band transitions <= {}, wrote {}",
                    report.max_ratio,
                    report.ratio_threshold,
                    report.max_middle_visits,
                    report.max_band_transitions,
                    path.display()
                );
            }
            Ok(report.passes())
        }
        Command::Run { config } => {
            let spec = load_config(&config)?;
            let summary = run_experiment(&spec, out_dir)?;
            if !cli.quiet {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            }
            Ok(summary.exit_ok())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
