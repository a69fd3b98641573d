use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use thermal_filtering::ensemble::{InitialState, Representation};
use thermal_filtering::fock::FockScheme;
use thermal_filtering::gaussian::DeterministicScheme;
use thermal_filtering::io::commands::{
    cmd_ensemble, cmd_oracle_check, cmd_sweep, cmd_threshold, cmd_trajectory, cmd_vmin, Report,
};
use thermal_filtering::io::config::{GridSpec, RunConfig};
use thermal_filtering::io::Format;
use thermal_filtering::Error;

/// Conditional dynamics of a mode under general-dyne monitoring of a
/// partially purified thermal bath.
#[derive(Parser)]
#[command(name = "thermal-filter", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Steady-state variance, purity and bound over (N, gamma) grids.
    Sweep,
    /// Threshold purification gamma_th(N) for squeezing.
    Threshold,
    /// Minimum variance over N at fixed gamma.
    Vmin,
    /// One conditional trajectory with its measurement records.
    Trajectory,
    /// Ensemble statistics over many trajectories.
    Ensemble,
    /// Cross-checks of the Gaussian moments against the Fock oracle.
    OracleCheck,
}

#[derive(Clone, Copy, ValueEnum)]
enum RepArg {
    Gaussian,
    Fock,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Vacuum,
    Thermal,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Rk4,
    Euler,
}

#[derive(Clone, Copy, ValueEnum)]
enum FockSchemeArg {
    GaussianKraus,
    Euler,
}

#[derive(Args)]
struct Common {
    /// Mean thermal occupation N.
    #[arg(long, global = true)]
    n: Option<f64>,
    /// Purification parameter in [0, 1].
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// `a:b:step` or a comma-separated list.
    #[arg(long, global = true)]
    gamma_grid: Option<String>,
    /// `a:b:step` or a comma-separated list.
    #[arg(long, global = true)]
    n_grid: Option<String>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    t_final: Option<f64>,
    #[arg(long, global = true)]
    n_traj: Option<usize>,
    /// Fock truncation dimension.
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    representation: Option<RepArg>,
    #[arg(long, global = true, value_enum)]
    init: Option<InitArg>,
    /// Covariance integrator.
    #[arg(long, global = true, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, global = true, value_enum)]
    fock_scheme: Option<FockSchemeArg>,
    /// Keep every k-th step in ensemble output.
    #[arg(long, global = true)]
    record_every: Option<usize>,
    /// Worker threads; overrides THERMAL_FILTER_WORKERS.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Flat JSON file of the same settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Integrate the Gaussian moments with the wrong sign of A2, B2.
    #[arg(long, global = true)]
    flip_a2_sign: bool,
}

impl Common {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            n: self.n,
            gamma: self.gamma,
            gamma_grid: self.gamma_grid.clone().map(GridSpec::Text),
            n_grid: self.n_grid.clone().map(GridSpec::Text),
            dt: self.dt,
            t_final: self.t_final,
            n_traj: self.n_traj,
            dim: self.dim,
            seed: self.seed,
            representation: self.representation.map(|r| match r {
                RepArg::Gaussian => Representation::Gaussian,
                RepArg::Fock => Representation::Fock,
            }),
            init: self.init.map(|i| match i {
                InitArg::Vacuum => InitialState::Vacuum,
                InitArg::Thermal => InitialState::Thermal,
            }),
            scheme: self.scheme.map(|s| match s {
                SchemeArg::Rk4 => DeterministicScheme::Rk4,
                SchemeArg::Euler => DeterministicScheme::Euler,
            }),
            fock_scheme: self.fock_scheme.map(|s| match s {
                FockSchemeArg::GaussianKraus => FockScheme::GaussianKraus,
                FockSchemeArg::Euler => FockScheme::Euler,
            }),
            record_every: self.record_every,
            workers: self.workers,
            out: self.out.clone(),
            format: self.format.map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            }),
            flip_a2_sign: self.flip_a2_sign.then_some(true),
        }
    }
}

fn run(cli: &Cli) -> Result<Report, Error> {
    let flags = cli.common.to_config();
    let cfg = match &cli.common.config {
        Some(path) => RunConfig::from_json_file(path)?.overlay(&flags),
        None => flags,
    };
    let report = match cli.command {
        Command::Sweep => cmd_sweep(&cfg)?,
        Command::Threshold => cmd_threshold(&cfg)?,
        Command::Vmin => cmd_vmin(&cfg)?,
        Command::Trajectory => cmd_trajectory(&cfg)?,
        Command::Ensemble => cmd_ensemble(&cfg)?,
        Command::OracleCheck => cmd_oracle_check(&cfg)?,
    };
    match &cfg.out {
        Some(path) => report.table.write(path, cfg.format())?,
        None => {
            let text = report.table.render(cfg.format());
            let mut out = std::io::stdout().lock();
            // a closed pipe (`| head`) is not an error
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    return Err(Error::Io {
                        path: PathBuf::from("<stdout>"),
                        source: e,
                    })
                }
                _ => {}
            }
        }
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            for note in &report.notes {
                eprintln!("{note}");
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Domain { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
