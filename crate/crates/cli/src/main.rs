//! `spindex`: command-line driver for the index-theorem verification pipelines.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;
use spindex::index::DEFAULT_TIMES;
use spindex::operators::TwistSpec;

use config::{check_output, ConfigError, Format, GeometryConfig, GeometryName, RunConfig, CONFIG_SCHEMA};

const SCHEMA_VERSION: u32 = 1;

const AFTER_HELP: &str = "\
Exit status: 0 when every check passes, 1 when a check fails, 2 on usage errors.

JSON reports: {\"schema_version\", \"command\", \"passed\", \"report\"}.
CSV columns:
  clifford-check  frame,top_supertrace_re,top_supertrace_im
  lichnerowicz    resolution,residual,order
  heat-trace      t,trace  then a blank line and  coefficient,value,std_error
  rescale         t,supertrace_re,supertrace_im
  renorm          z,g   (samples of G(z) used by the Laurent fit)
  index           t,supertrace
  psc-check       index,min_abs_eigenvalue,window,lichnerowicz_bound";

#[derive(Parser, Debug)]
#[command(name = "spindex", version, about = "Desk-scale checks of the local index theorem", after_help = AFTER_HELP)]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "SPINDEX_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write the report here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// TOML run configuration; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct GeometryArgs {
    #[arg(long, value_enum)]
    geometry: Option<GeometryName>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    periods: Option<Vec<f64>>,
    #[arg(long)]
    boundary_length: Option<f64>,
    #[arg(long)]
    collar: Option<f64>,
}

impl GeometryArgs {
    fn config(&self) -> GeometryConfig {
        GeometryConfig {
            kind: self.geometry,
            periods: self.periods.clone(),
            radius: self.radius,
            boundary_length: self.boundary_length,
            collar: self.collar,
            resolution: self.resolution,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exhaustive supertrace audit of the Clifford algebra.
    CliffordCheck {
        #[arg(long, default_value_t = 4)]
        dim: usize,
    },
    /// Residual of D² − Δ − c(F) − κ/4, with grid refinement on the sphere.
    Lichnerowicz {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, allow_hyphen_values = true)]
        twist: Option<i64>,
        /// Number of resolutions (each doubling the previous) on the sphere.
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Scalar heat trace samples and the fitted small-time coefficients.
    HeatTrace {
        #[command(flatten)]
        geometry: GeometryArgs,
        /// Polynomial degree of the fit in t.
        #[arg(long, default_value_t = 2)]
        fit: usize,
        #[arg(long, default_value_t = 1e-3)]
        t_min: f64,
        #[arg(long, default_value_t = 1e-1)]
        t_max: f64,
        #[arg(long, default_value_t = 40)]
        samples: usize,
    },
    /// Rescaled diagonal family t^n k_{t²}: filtration, slope and limit.
    Rescale {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, allow_hyphen_values = true)]
        twist: Option<i64>,
    },
    /// Finite part and poles of the Mellin transform of x^m, and the b-trace.
    Renorm {
        #[arg(long, default_value_t = 0)]
        power: i32,
        #[arg(long)]
        collar: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-3.5, 0.5])]
        window: Vec<f64>,
        /// Times for the b-cylinder heat trace.
        #[arg(long = "t", value_delimiter = ',')]
        times: Option<Vec<f64>>,
    },
    /// Spectral, heat-supertrace, geometric and eta sides of the index formula.
    Index {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, allow_hyphen_values = true)]
        twist: Option<i64>,
        #[arg(long = "t", value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Gauge winding numbers of the twisting connection (torus only).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        winding: Option<Vec<i64>>,
    },
    /// Spectral gap and vanishing index on a positively curved model.
    PscCheck {
        #[command(flatten)]
        geometry: GeometryArgs,
    },
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u32,
    command: &'a str,
    passed: bool,
    report: Value,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(format!("{e}\n\n{CONFIG_SCHEMA}"))
    }
}

impl From<spindex::Error> for Failure {
    fn from(e: spindex::Error) -> Self {
        let mut root = &e;
        while let spindex::Error::Context { source, .. } = root {
            root = source;
        }
        use spindex::Error::*;
        match root {
            InvalidParameter(_) | Unsupported(_) | Precondition(_) | DimensionMismatch { .. } | OddDimension(_)
            | InvalidMetric(_) | NonPositiveTime(_) | RadiusTooLarge { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Run(e.to_string()))?;
    }
    let format = cli.format.or(file.format).unwrap_or(Format::Json);
    let output = cli.output.clone().or_else(|| file.output.clone());
    if let Some(p) = &output {
        check_output(p)?;
    }
    let twist_of = |flag: Option<i64>| flag.or(file.twist).unwrap_or(0);
    let times_of = |flag: &Option<Vec<f64>>| -> Result<Vec<f64>, Failure> {
        let t = flag.clone().or_else(|| file.times.clone()).unwrap_or_else(|| DEFAULT_TIMES.to_vec());
        if let Some(bad) = t.iter().find(|t| !(**t > 0.0)) {
            return Err(Failure::Usage(format!("times must be positive, got {bad}")));
        }
        Ok(t)
    };
    let geometry = |args: &GeometryArgs, kind: GeometryName, res: usize| -> Result<_, Failure> {
        Ok(file.geometry.merged(&args.config()).spec(kind, res)?)
    };

    let (name, out) = match &cli.command {
        Command::CliffordCheck { dim } => ("clifford-check", commands::clifford_check(*dim)?),
        Command::Lichnerowicz {
            geometry: g,
            twist,
            levels,
        } => {
            let kind = g.geometry.or(file.geometry.kind).unwrap_or(GeometryName::Torus);
            let res = if kind == GeometryName::Sphere { 40 } else { 8 };
            ("lichnerowicz", commands::lichnerowicz(&geometry(g, kind, res)?, twist_of(*twist), *levels)?)
        }
        Command::HeatTrace {
            geometry: g,
            fit,
            t_min,
            t_max,
            samples,
        } => {
            let kind = g.geometry.or(file.geometry.kind).unwrap_or(GeometryName::Circle);
            let res = match kind {
                GeometryName::Circle => 220,
                GeometryName::Torus => 160,
                _ => 320,
            };
            let spec = geometry(g, kind, res)?;
            ("heat-trace", commands::heat_trace(&spec, *fit, (*t_min, *t_max), *samples)?)
        }
        Command::Rescale { geometry: g, twist } => {
            let spec = geometry(g, GeometryName::Torus, 128)?;
            ("rescale", commands::rescale(&spec, twist_of(*twist))?)
        }
        Command::Renorm {
            power,
            collar,
            window,
            times,
        } => {
            let collar = collar.or(file.geometry.collar).unwrap_or(1.0);
            let length = file.geometry.boundary_length.unwrap_or(2.0 * std::f64::consts::PI);
            let times = times_of(times)?;
            ("renorm", commands::renorm(*power, collar, (window[0], window[1]), &times, length)?)
        }
        Command::Index {
            geometry: g,
            twist,
            times,
            winding,
        } => {
            let spec = geometry(g, GeometryName::Torus, 8)?;
            let w = winding.clone().unwrap_or_else(|| vec![0, 0]);
            if w.len() != 2 {
                return Err(Failure::Usage(format!("--winding takes two integers, got {}", w.len())));
            }
            let twist = TwistSpec {
                degree: twist_of(*twist),
                gauge_winding: [w[0], w[1]],
            };
            ("index", commands::index(&spec, twist, &times_of(times)?, file.tolerances())?)
        }
        Command::PscCheck { geometry: g } => {
            let spec = geometry(g, GeometryName::Sphere, 40)?;
            ("psc-check", commands::psc_check(&spec)?)
        }
    };

    let text = match format {
        Format::Json => {
            let env = Envelope {
                schema_version: SCHEMA_VERSION,
                command: name,
                passed: out.passed,
                report: out.report,
            };
            let mut s = serde_json::to_string_pretty(&env).map_err(|e| Failure::Run(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => out.csv,
    };
    match output {
        Some(p) => std::fs::write(&p, text).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Run(e.to_string()))?;
        }
    }
    Ok(out.passed)
}
