//! `bloch-pulse`: synthesize, simulate, verify and compare optimal control
//! fields for a single Bloch vector.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bloch_pulse::Family;

use commands::{CompareGrid, SimulateInput, TableFormat};
use config::{OutputFormat, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "bloch-pulse",
    version,
    about = "Optimal control fields for a Bloch vector"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the control field of a pulse family.
    Synth(PulseArgs),
    /// Propagate a pulse file and report the arrival error.
    Simulate(SimulateArgs),
    /// Check a family against random perturbations of its criterion.
    Verify(VerifyArgs),
    /// Tabulate costs of all families over a parameter grid.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    Csv,
    Markdown,
}

#[derive(Args)]
struct OutputArgs {
    /// Seed for randomized checks; overrides BLOCH_PULSE_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PulseArgs {
    /// Initial state `x,y,z`.
    #[arg(long = "si", default_value = "0,0,1", allow_hyphen_values = true)]
    s_i: String,
    /// Final state `x,y,z`.
    #[arg(long = "sf", default_value = "1,0,0", allow_hyphen_values = true)]
    s_f: String,
    /// b1, b2, b3 or cn.
    #[arg(long, default_value = "b1")]
    family: Family,
    /// Winding branch.
    #[arg(long = "n", default_value_t = 0, allow_negative_numbers = true)]
    branch_n: i64,
    /// Fluence weight of the mixed criterion.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Rate weight of the mixed criterion (b3 shape).
    #[arg(long, default_value_t = 5.0)]
    omega: f64,
    /// Constant-norm shape parameter.
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// Time steps on [0, 1].
    #[arg(long, default_value_t = 2000)]
    grid_n: usize,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Pulse file written by `synth` (JSON, or CSV with header t,bx,by,bz).
    #[arg(long)]
    pulse: PathBuf,
    /// Initial state; taken from the pulse file when omitted.
    #[arg(long = "si", allow_hyphen_values = true)]
    s_i: Option<String>,
    /// Target state; taken from the pulse file when omitted.
    #[arg(long = "sf", allow_hyphen_values = true)]
    s_f: Option<String>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    pulse: PulseArgs,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Trials with perturbations off the rotation axis; 0 skips the check.
    #[arg(long, default_value_t = bloch_pulse::oracle::OFF_AXIS_TRIALS)]
    off_axis_trials: usize,
}

#[derive(Args)]
struct CompareArgs {
    /// Rotation angles.
    #[arg(long, default_value = "0.1,0.7853981633974483,1.5707963267948966,2.5")]
    thetas: String,
    /// Read --thetas in degrees.
    #[arg(long)]
    degrees: bool,
    #[arg(long, default_value = "0,1", allow_hyphen_values = true)]
    branches: String,
    #[arg(long, default_value = "5")]
    omegas: String,
    /// Constant-norm rows, at n = 0 only.
    #[arg(long, default_value = "0.5,1")]
    mus: String,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 2000)]
    grid_n: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: TableArg,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl OutputArgs {
    fn format(&self) -> OutputFormat {
        match self.format {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
        }
    }
}

impl PulseArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut warnings = Vec::new();
        let s_i = config::parse_state("si", &self.s_i, &mut warnings)?;
        let s_f = config::parse_state("sf", &self.s_f, &mut warnings)?;
        Ok(RunConfig {
            s_i,
            s_f,
            family: self.family,
            branch_n: self.branch_n,
            a: config::check_positive("--a", self.a)?,
            omega: config::check_positive("--omega", self.omega)?,
            mu: if self.mu.is_finite() {
                self.mu
            } else {
                return Err(CliError::Usage("--mu must be finite".into()));
            },
            grid_n: config::check_grid(self.grid_n)?,
            seed: config::resolve_seed(self.out.seed)?,
            output_format: self.out.format(),
            output_path: self.out.output.clone(),
            warnings,
        })
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(args) => commands::synth(&args.config()?),
        Command::Simulate(args) => {
            let mut warnings = Vec::new();
            let s_i = args
                .s_i
                .as_deref()
                .map(|s| config::parse_state("si", s, &mut warnings))
                .transpose()?;
            let s_f = args
                .s_f
                .as_deref()
                .map(|s| config::parse_state("sf", s, &mut warnings))
                .transpose()?;
            let cfg = RunConfig {
                s_i: s_i.unwrap_or(bloch_pulse::Vec3::Z),
                s_f: s_f.unwrap_or(bloch_pulse::Vec3::X),
                family: Family::Custom,
                branch_n: 0,
                a: 1.0,
                omega: 5.0,
                mu: 1.0,
                grid_n: config::MIN_GRID,
                seed: config::resolve_seed(args.out.seed)?,
                output_format: args.out.format(),
                output_path: args.out.output.clone(),
                warnings,
            };
            commands::simulate(
                &cfg,
                &SimulateInput {
                    pulse: &args.pulse,
                    s_i,
                    s_f,
                },
            )
        }
        Command::Verify(args) => {
            commands::verify(&args.pulse.config()?, args.trials, args.off_axis_trials)
        }
        Command::Compare(args) => {
            let scale = if args.degrees {
                std::f64::consts::PI / 180.0
            } else {
                1.0
            };
            let grid = CompareGrid {
                thetas: config::parse_list(&args.thetas)?
                    .into_iter()
                    .map(|t| t * scale)
                    .collect(),
                branches: config::parse_int_list(&args.branches)?,
                omegas: config::parse_list(&args.omegas)?
                    .into_iter()
                    .map(|w| config::check_positive("--omegas", w))
                    .collect::<Result<_, _>>()?,
                mus: config::parse_list(&args.mus)?,
                a: config::check_positive("--a", args.a)?,
                grid_n: config::check_grid(args.grid_n)?,
            };
            let format = match args.format {
                TableArg::Csv => TableFormat::Csv,
                TableArg::Markdown => TableFormat::Markdown,
            };
            commands::compare(&grid, format, args.output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
