use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use kdv_compact::data::DataFamily;
use kdv_compact::diagnostics::{breakup_point, fit_solitons_nodal};
use kdv_compact::domain::CompactGrid;
use kdv_cli::config::load_config;
use kdv_cli::output::read_snapshot;
use kdv_cli::runner::{output_root, reproduce, resume, run, RunOutcome};

/// gKdV solver on the compactified real line.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file; trailing `--key=value` override config keys.
    Run {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Continue a run directory from its checkpoint.
    Resume {
        dir: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Run one of the shipped configurations.
    Reproduce {
        id: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Break-up point of the dispersionless equation for a data family.
    Breakup { family: String, p: u32 },
    /// Fit solitons to a compact-grid snapshot.
    Fit {
        snapshot: PathBuf,
        #[arg(long)]
        p: u32,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long = "min-amplitude", default_value_t = 0.1)]
        min_amplitude: f64,
    },
}

fn report(outcome: &RunOutcome) {
    let m = &outcome.manifest;
    println!("{}: {} after {} steps", outcome.dir.display(), m.status, m.steps_completed);
    if let Some(d) = m.max_rel_drift_tracked {
        println!("max relative drift: {d:e}");
    }
    if let Some(f) = &m.final_diagnostics {
        println!("coefficient floor: {:e}", f.coeff_floor);
    }
}

fn fit(snapshot: &Path, p: u32, eps: f64, min_amplitude: f64) -> Result<()> {
    let snap = read_snapshot(snapshot)?;
    let n = snap.l.len() - 1;
    let mid = n / 2 + 1;
    let c = snap.x[mid] / (std::f64::consts::FRAC_PI_2 * snap.l[mid]).tan();
    if !(c.is_finite() && c > 0.0) {
        bail!("cannot infer the map constant from {}", snapshot.display());
    }
    let grid = CompactGrid::new(n, c)?;
    let fitted = fit_solitons_nodal(&snap.u, &grid, p, eps, min_amplitude)?;
    println!("position,amplitude,speed,misfit");
    for pk in &fitted.peaks {
        println!("{:e},{:e},{:e},{:e}", pk.position, pk.amplitude, pk.speed, pk.misfit);
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let name = cfg.output.clone().unwrap_or_else(|| {
                config
                    .file_stem()
                    .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned())
            });
            report(&run(&cfg, &output_root().join(name))?);
        }
        Command::Resume { dir, overrides } => report(&resume(&dir, &overrides)?),
        Command::Reproduce { id, overrides } => report(&reproduce(&id, &overrides, &output_root())?),
        Command::Breakup { family, p } => {
            let family: DataFamily = family.parse()?;
            let b = breakup_point(&family, p)?;
            println!("t_c = {:e}\nx_c = {:e}\nu_c = {:e}", b.t_c, b.x_c, b.u_c);
        }
        Command::Fit {
            snapshot,
            p,
            eps,
            min_amplitude,
        } => fit(&snapshot, p, eps, min_amplitude)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
