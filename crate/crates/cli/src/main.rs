mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use obsbench_core::Error;

#[derive(Parser)]
#[command(name = "obsbench", version, about = "Battery SOC observer workbench")]
struct Cli {
    /// JSON file with default `params`, `ocv`, `seed` and `out` values.
    /// Falls back to $OBSBENCH_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Cell and OCV inputs shared by the model-level commands.
#[derive(Args, Clone, Default)]
pub struct CellArgs {
    /// CellParams JSON; the bundled reference cell when absent.
    #[arg(long)]
    params: Option<PathBuf>,
    /// OcvCurve JSON; the bundled reference curve when absent.
    #[arg(long)]
    ocv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate ground truth for a loadfile.
    Simulate {
        #[arg(long)]
        loadfile: PathBuf,
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long)]
        soc0: f64,
        /// Use explicit Euler instead of the exact zero-order-hold step.
        #[arg(long)]
        euler: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Design observer gains by pole placement.
    Design {
        #[arg(long)]
        variant: String,
        /// Comma-separated poles, e.g. `-0.15,-0.02,-0.004+0.003j,-0.004-0.003j`.
        #[arg(long, allow_hyphen_values = true)]
        poles: Option<String>,
        #[command(flatten)]
        cell: CellArgs,
        /// Sample period for the PID derivative terms.
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        #[arg(long)]
        k_dc: Option<f64>,
        #[arg(long)]
        boundary_layer: Option<f64>,
        #[arg(long)]
        derivative_share: Option<f64>,
        #[arg(long)]
        d_filter_tau: Option<f64>,
        /// Gains JSON destination; the full design goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one estimator over a measured loadfile.
    Estimate {
        #[arg(long, conflicts_with = "estimator")]
        gains: Option<PathBuf>,
        /// Estimator name when no gains file is given (default poles).
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long)]
        loadfile: PathBuf,
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long, default_value_t = 1.0)]
        soc0: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and write the comparison bundle.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Identify pulse parameters by particle swarm.
    Identify {
        #[arg(long)]
        pulse: PathBuf,
        #[arg(long)]
        ocv: Option<PathBuf>,
        /// PsoConfig JSON.
        #[arg(long)]
        pso: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fitted CellParams destination; the full fit goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract an OCV curve from a low-current charge/discharge test.
    Ocv {
        #[arg(long)]
        test: PathBuf,
        /// Number of grid points over the common SOC range.
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank tests for the linear and nonlinear observability matrices.
    Observability {
        #[command(flatten)]
        cell: CellArgs,
        /// linear, input_nl, state_nl or measurement_nl.
        #[arg(long, default_value = "linear")]
        scenario: String,
        #[arg(long, default_value_t = 0.5)]
        soc: f64,
        #[arg(long, default_value_t = 2)]
        order: u32,
        /// Nonlinearity vector `q1,q2,q3`.
        #[arg(long, allow_hyphen_values = true, default_value = "0,0,0")]
        q: String,
        /// Degree of the polynomial used for OCV derivatives.
        #[arg(long, default_value_t = 5)]
        degree: usize,
    },
    /// Single-parameter perturbation sweep.
    Sensitivity {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated parameter names.
        #[arg(long, default_value = "r_ohm,r_a,c_a,r_b,c_b")]
        params: String,
        #[arg(long, allow_hyphen_values = true, default_value = "-0.8,0.8")]
        amps: String,
        /// damped or step.
        #[arg(long, default_value = "damped")]
        envelope: String,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence race from a wrong initial SOC.
    Convergence {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        soc_true0: Option<f64>,
        #[arg(long)]
        soc_est0: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Current-bias or voltage-noise sweep.
    NoiseSweep {
        #[arg(long)]
        scenario: PathBuf,
        /// current or voltage.
        #[arg(long)]
        axis: String,
        /// Bias means (A) for current, noise sds (V) for voltage.
        #[arg(long)]
        levels: Option<String>,
        /// Current noise sd (A) or voltage noise mean (V).
        #[arg(long)]
        fixed: Option<f64>,
        /// Voltage damping time constant, s.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        undamped: bool,
        /// Seeds `seed..seed+n`; level-wise means go to `replicates.csv`.
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wall-clock cost per estimator.
    Timing {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Design(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = config::Config::load(cli.config.as_deref()).and_then(|cfg| commands::dispatch(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("obsbench: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
