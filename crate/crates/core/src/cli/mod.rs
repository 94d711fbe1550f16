//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure, 4 fit did not converge.

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use commands::FitRequest;
use config::{RunConfig, SamplingKind};
use presets::{preset, preset_sweep, SweepAxis, LIFETIME_NS, PRESETS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_FIT: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "pulsefocus", version, about = "Two-level emitter under a periodic π-pulse train")]
pub struct Cli {
    /// Worker threads for ensemble work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Ensemble absorption spectrum P1, P2, Q.
    Spectrum(RunArgs),
    /// One spectrum per value of a swept parameter plus a summary table.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Swept parameter (defaults to the preset's own sweep).
        #[arg(long, value_enum)]
        axis: Option<SweepAxis>,
        /// Comma-separated values in config units (ns, MHz, count, π).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
    /// Fluorescence trace and windowed probe scans.
    Trace(RunArgs),
    /// Fit a peak or decay model to CSV data.
    Fit(FitArgs),
    /// Pulse amplitude calibration with a simulated amplitude sweep.
    Calibrate(CalibrateArgs),
    /// List the built-in presets.
    Presets,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration (see `pulsefocus presets`).
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output file stem.
    #[arg(long)]
    pub stem: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingKind>,
    /// Realizations, quadrature order or node count.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub n_pulses: Option<usize>,
    #[arg(long)]
    pub tau_ns: Option<f64>,
    /// Ensemble FWHM.
    #[arg(long)]
    pub fwhm_mhz: Option<f64>,
    /// Ensemble center detuning.
    #[arg(long, allow_hyphen_values = true)]
    pub delta0_mhz: Option<f64>,
    /// Rotation angle per pulse in units of π.
    #[arg(long)]
    pub angle_pi: Option<f64>,
    /// Number of frequency points.
    #[arg(long)]
    pub points: Option<usize>,
    /// Also write SVG plots.
    #[arg(long)]
    pub svg: bool,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    pub emit_config: bool,
}

impl RunArgs {
    /// Base configuration with every flag applied.
    pub fn config(&self) -> Result<RunConfig> {
        let mut c = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => return Err(Error::Config("pass --config <file> or --preset <name>".into())),
        };
        if let Some(v) = &self.out {
            c.output.dir = v.display().to_string();
        }
        if let Some(v) = &self.stem {
            c.output.stem = v.clone();
        }
        if let Some(v) = self.seed {
            c.ensemble.seed = v;
        }
        if let Some(v) = self.sampling {
            c.ensemble.sampling = v;
        }
        if let Some(v) = self.size {
            c.ensemble.size = v;
        }
        if let Some(v) = self.n_pulses {
            c.pulses.n_pulses = v;
        }
        if let Some(v) = self.tau_ns {
            c.pulses.interpulse_delay_ns = v;
        }
        if let Some(v) = self.fwhm_mhz {
            c.ensemble.fwhm_mhz = v;
        }
        if let Some(v) = self.delta0_mhz {
            c.ensemble.center_mhz = v;
        }
        if let Some(v) = self.angle_pi {
            c.pulses.rotation_angle_pi = v;
        }
        if let Some(v) = self.points {
            c.frequencies.points = v;
        }
        c.output.svg |= self.svg;
        c.resolve()?;
        Ok(c)
    }
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    /// lorentzian_sum(n), pseudo_voigt, gaussian, exponential, bi_exponential
    /// or trace_model.
    #[arg(long)]
    pub model: String,
    /// CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// x column (default: first).
    #[arg(long)]
    pub x: Option<String>,
    /// y column (default: second).
    #[arg(long)]
    pub y: Option<String>,
    /// Column of 1σ errors; weights are 1/σ².
    #[arg(long)]
    pub sigma: Option<String>,
    /// Base curve column for trace_model.
    #[arg(long)]
    pub base: Option<String>,
    /// Comma-separated initial parameters (default: estimated from the data).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub init: Option<Vec<f64>>,
    /// Interpulse delay; seeds satellites at ±n/(2τ) for an x axis in MHz.
    #[arg(long, conflicts_with = "spacing_mhz")]
    pub tau_ns: Option<f64>,
    /// Satellite spacing in the x unit.
    #[arg(long)]
    pub spacing_mhz: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub carrier_mhz: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Report stem (default: data file stem).
    #[arg(long)]
    pub stem: Option<String>,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args, Debug, Clone)]
pub struct CalibrateArgs {
    #[arg(long, default_value_t = presets::PULSE_FWHM_NS)]
    pub fwhm_ns: f64,
    /// Rotation angle in units of π.
    #[arg(long, default_value_t = 1.0)]
    pub angle_pi: f64,
    #[arg(long, default_value_t = LIFETIME_NS)]
    pub lifetime_ns: f64,
    /// Amplitudes in the sweep.
    #[arg(long, default_value_t = 61)]
    pub points: usize,
    /// Sweep CSV path.
    #[arg(long, default_value = "out/calibration.csv")]
    pub out: PathBuf,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Data(_) | Error::Io(_) | Error::Layout { .. } => EXIT_CONFIG,
        Error::FitFailed { .. } => EXIT_FIT,
        Error::InvalidParameter(_) | Error::Numerical { .. } | Error::Coverage { .. } => EXIT_NUMERIC,
    }
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn emit(run: &RunArgs) -> Result<Option<RunConfig>> {
    let c = run.config()?;
    if run.emit_config {
        print!("{}", c.to_toml()?);
        return Ok(None);
    }
    Ok(Some(c))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spectrum(run) => {
            if let Some(c) = emit(&run)? {
                report(&commands::cmd_spectrum(&c)?);
            }
        }
        Command::Sweep { run, axis, values } => {
            let default = run.preset.as_deref().and_then(preset_sweep);
            let axis = axis.or(default.as_ref().map(|d| d.0));
            let values = values.or(default.map(|d| d.1));
            let (Some(axis), Some(values)) = (axis, values) else {
                return Err(Error::Config("sweep needs --axis and --values (or a preset that defines a sweep)".into()));
            };
            if let Some(c) = emit(&run)? {
                report(&commands::cmd_sweep(&c, axis, &values)?);
            }
        }
        Command::Trace(run) => {
            if let Some(c) = emit(&run)? {
                report(&commands::cmd_trace(&c)?);
            }
        }
        Command::Fit(a) => {
            let spacing = a.spacing_mhz.or(a.tau_ns.map(|t| 500.0 / t));
            let stem = a.stem.clone().unwrap_or_else(|| {
                a.data.file_stem().map_or_else(|| "fit".into(), |s| s.to_string_lossy().into_owned())
            });
            let req = FitRequest {
                model: a.model,
                data: a.data,
                x: a.x,
                y: a.y,
                sigma: a.sigma,
                base: a.base,
                init: a.init,
                spacing,
                carrier: a.carrier_mhz,
                max_iterations: a.max_iterations,
                out_dir: a.out,
                stem,
                svg: a.svg,
            };
            report(&commands::cmd_fit(&req)?);
        }
        Command::Calibrate(a) => {
            let (_, path) = commands::cmd_calibrate(a.fwhm_ns, a.angle_pi, a.lifetime_ns, a.points, &a.out)?;
            report(&[path]);
        }
        Command::Presets => {
            for p in PRESETS {
                let sweep = preset_sweep(p.name).map_or(String::new(), |(axis, values)| {
                    let v: Vec<String> = values.iter().map(|x| format!("{x:.4}")).collect();
                    format!(" [sweep {} = {}]", axis.name(), v.join(", "))
                });
                println!("{:<12} {}{sweep}", p.name, p.about);
            }
        }
    }
    Ok(())
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool already set up: {e}");
        }
    }
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
