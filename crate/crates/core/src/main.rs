use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use maglev::cli_app::{self, CliError, LoadedConfig};
use maglev::trap_analysis::Axis;

/// Design and analysis toolkit for passive magnetic levitation of soft
/// ferromagnetic spheres in slit superconducting disks.
#[derive(Parser)]
#[command(name = "maglev", version, about)]
struct Cli {
    /// Scenario config file (TOML, SI units)
    #[arg(long, global = true, default_value = "scenario.toml")]
    config: PathBuf,

    /// Output directory for artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Proceed even when feasibility checks fail
    #[arg(long, global = true)]
    force: bool,

    /// Concurrency degree for sweeps
    #[arg(long, global = true, default_value = "1")]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Static feasibility checks (geometry bands, regime, effective radius)
    Feasibility,
    /// Calibrated bare-disk field solve; axial profile + summary
    Solve,
    /// Potential scan through the equilibrium along one axis
    Scan {
        #[arg(long, value_enum)]
        axis: AxisArg,
    },
    /// Full harmonic trap characterization
    Characterize,
    /// Dissipation (Q) budget
    Qbudget,
    /// Force-noise budget and feasibility flag
    Noise,
    /// Re-run the Q-budget pipeline across parameter values
    Sweep {
        /// Dotted config path, e.g. geometry.a or b_max_target
        #[arg(long)]
        param: String,
        /// Comma-separated values substituted for --param
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Grid-convergence study on a cell-count ladder
    Convergence {
        /// Comma-separated cells-per-axis ladder, ascending, e.g. 48,64,96
        #[arg(long = "grid-ladder", value_delimiter = ',', required = true)]
        grid_ladder: Vec<usize>,
    },
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum AxisArg {
    X,
    Y,
    Z,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Axis {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
            AxisArg::Z => Axis::Z,
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    std::fs::create_dir_all(&cli.out).map_err(|source| CliError::Io {
        path: cli.out.clone(),
        source,
    })?;
    let cfg: LoadedConfig = cli_app::load_config(&cli.config)?;
    match &cli.command {
        Command::Feasibility => {
            let report = cli_app::run_feasibility(&cfg, &cli.out, cli.force)?;
            println!(
                "feasibility: {} ({} checks, regime {})",
                if report.all_ok { "ok" } else { "failed" },
                report.checks.len(),
                report.regime
            );
        }
        Command::Solve => {
            let report = cli_app::run_solve(&cfg, &cli.out)?;
            println!(
                "solve: B_max = {:.4} T at B_ext = {:.4} T ({} iterations)",
                report.b_max, report.b_ext, report.iterations
            );
        }
        Command::Scan { axis } => {
            let report = cli_app::run_scan(&cfg, &cli.out, (*axis).into())?;
            println!(
                "scan {}: convex = {}, curvature = {:.4e} J/m^2",
                report.axis.label(),
                report.convex,
                report.curvature
            );
        }
        Command::Characterize => {
            let report = cli_app::run_characterize(&cfg, &cli.out)?;
            println!(
                "characterize: f = [{:.1}, {:.1}, {:.1}] Hz, levitation {}",
                report.trap.f[0],
                report.trap.f[1],
                report.trap.f[2],
                if report.trap.levitation_ok { "ok" } else { "fails" }
            );
        }
        Command::Qbudget => {
            let report = cli_app::run_qbudget(&cfg, &cli.out)?;
            println!("qbudget: Q_total = {:.3e} at f_z = {:.1} Hz", report.q_total, report.f_z);
        }
        Command::Noise => {
            let report = cli_app::run_noise(&cfg, &cli.out)?;
            println!(
                "noise: {} ({} entries)",
                if report.feasible { "feasible" } else { "infeasible" },
                report.entries.len()
            );
        }
        Command::Sweep { param, values } => {
            let report = cli_app::run_sweep(&cfg, &cli.out, param, values, cli.threads)?;
            println!("sweep {}: {} points", report.param, report.rows.len());
        }
        Command::Convergence { grid_ladder } => {
            let report = cli_app::run_convergence(&cfg, &cli.out, grid_ladder)?;
            println!(
                "convergence: finest pair {:.3}%{}",
                100.0 * report.finest_pair_rel_diff,
                if report.under_resolved { " (under-resolved)" } else { "" }
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
