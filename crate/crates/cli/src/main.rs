//! Single-binary front end: six subcommands over one JSON configuration
//! format. Data artifacts go to stdout or --out; diagnostics (run report,
//! error envelope, sidecar metadata without --out) go to stderr.
//!
//! Exit codes: 0 success, 1 filesystem trouble, 2 unusable command line or
//! configuration, 3 physics validation failure, 4 numerical breach.

mod config;
mod scenarios;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use damposc::{wigner, Error};
use num_complex::Complex64;
use serde_json::{json, Value};

use config::FileConfig;
use scenarios::{render_json, Failure, Format, Kind, Quantity, ScenarioOutput, Warnings};

#[derive(Parser)]
#[command(
    name = "damposc",
    version,
    about = "Closed-form dynamics of the damped quantum oscillator, with a \
             truncated-basis integrator for cross-checks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Path to the JSON run configuration
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Write the data artifact here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Output format; defaults to csv for tabular scenarios, json otherwise
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct InitialPoint {
    /// Real part of the initial coherent amplitude
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha0_re: f64,
    /// Imaginary part of the initial coherent amplitude
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha0_im: f64,
}

impl InitialPoint {
    fn alpha0(&self) -> Complex64 {
        Complex64::new(self.alpha0_re, self.alpha0_im)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the coefficient constraints and report margins
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form moment trajectories on a uniform time grid
    Moments {
        #[command(flatten)]
        common: Common,
        /// End of the time grid
        #[arg(long, value_parser = positive_time)]
        t1: f64,
        /// Number of grid intervals; the output has steps + 1 rows
        #[arg(long, default_value_t = 200, value_parser = at_least_one)]
        steps: usize,
        #[command(flatten)]
        initial: InitialPoint,
    },
    /// Number-basis density matrix at one time
    Rho {
        #[command(flatten)]
        common: Common,
        /// Evaluation time
        #[arg(long, value_parser = positive_time)]
        t1: f64,
        /// Number of basis levels
        #[arg(long, default_value_t = 32, value_parser = at_least_two)]
        dim: usize,
        #[command(flatten)]
        initial: InitialPoint,
    },
    /// Phase-space density on a rectangular grid
    Wigner {
        #[command(flatten)]
        common: Common,
        /// Evaluation time; unused for --kind steady
        #[arg(long, value_parser = positive_time)]
        t1: Option<f64>,
        /// Which closed-form solution to evaluate
        #[arg(long, value_enum, default_value_t = Kind::Wavepacket)]
        kind: Kind,
        /// Grid as x1min,x1max,x2min,x2max,n1,n2
        #[arg(long, value_parser = grid_spec, default_value = "-3,3,-3,3,61,61",
              allow_hyphen_values = true)]
        grid: wigner::GridSpec,
        #[command(flatten)]
        initial: InitialPoint,
    },
    /// Stationary covariance and occupation
    Steady {
        #[command(flatten)]
        common: Common,
    },
    /// Deviation of the closed forms from the truncated-basis integrator
    OracleCompare {
        #[command(flatten)]
        common: Common,
        /// End of the comparison window
        #[arg(long, value_parser = positive_time)]
        t1: f64,
        /// Number of comparison intervals along the trajectory
        #[arg(long, default_value_t = 200, value_parser = at_least_one)]
        steps: usize,
        /// Basis levels for the integrator; sized from the occupation when absent
        #[arg(long, value_parser = at_least_two)]
        dim: Option<usize>,
        /// Which moment to report; all three are compared either way
        #[arg(long, value_enum, default_value_t = Quantity::All)]
        quantity: Quantity,
        #[command(flatten)]
        initial: InitialPoint,
    },
}

fn positive_time(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be a positive finite number, got {s}"))
    }
}

fn at_least_one(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 1 {
        Ok(v)
    } else {
        Err("must be at least 1".into())
    }
}

fn at_least_two(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 2 {
        Ok(v)
    } else {
        Err("must be at least 2".into())
    }
}

fn grid_spec(s: &str) -> Result<wigner::GridSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err(format!(
            "expected x1min,x1max,x2min,x2max,n1,n2 (6 fields), got {}",
            parts.len()
        ));
    }
    let num = |i: usize| -> Result<f64, String> {
        parts[i].parse().map_err(|e| format!("field {}: {e}", i + 1))
    };
    let count = |i: usize| -> Result<usize, String> {
        parts[i].parse().map_err(|e| format!("field {}: {e}", i + 1))
    };
    Ok(wigner::GridSpec {
        x1_min: num(0)?,
        x1_max: num(1)?,
        x2_min: num(2)?,
        x2_max: num(3)?,
        n1: count(4)?,
        n2: count(5)?,
    })
}

fn load_config(path: &Path) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("config parse error: {e}")))
}

/// Exit code and machine-readable kind for a library error.
fn classify(e: &Error) -> (&'static str, u8) {
    match e {
        Error::InvalidInput(_) => ("invalid_input", 3),
        Error::InvalidRegime(_) => ("invalid_regime", 3),
        Error::DegenerateInput(_) => ("degenerate_input", 3),
        Error::NoStationaryState { .. } => ("no_stationary_state", 3),
        Error::DegenerateRegime(_) => ("degenerate_regime", 3),
        Error::UnsupportedRegime(_) => ("unsupported_regime", 3),
        Error::SingularInitialCondition(_) => ("singular_initial_condition", 3),
        Error::PRepresentationUnavailable(_) => ("p_representation_unavailable", 4),
        Error::GenFunctionDiverged(_) => ("gen_function_diverged", 4),
        Error::TruncationBreach { .. } => ("truncation_breach", 4),
    }
}

fn envelope(f: &Failure) -> (Value, u8) {
    let (kind, code, message, details) = match f {
        Failure::Config(msg) => ("config", 2, msg.clone(), json!({})),
        Failure::Constraints(violated) => (
            "constraint_violation",
            3,
            format!("coefficient constraints violated: {}", violated.join("; ")),
            json!({ "violated": violated }),
        ),
        Failure::Domain(e) => {
            let (kind, code) = classify(e);
            let details = match e {
                Error::NoStationaryState { discriminant } => {
                    json!({ "discriminant": discriminant })
                }
                Error::TruncationBreach { drift, dim } => {
                    json!({ "drift": drift, "dim": dim })
                }
                _ => json!({}),
            };
            (kind, code, e.to_string(), details)
        }
        Failure::Io(msg) => ("io", 1, msg.clone(), json!({})),
    };
    let env = json!({
        "error": {
            "kind": kind,
            "exit_code": code,
            "message": message,
            "details": details,
        }
    });
    (env, code)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn ensure_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

/// Write the artifact and sidecar, print the run report, return exit 0.
fn deliver(
    scenario: &str,
    out: &Option<PathBuf>,
    result: ScenarioOutput,
    started: Instant,
) -> Result<(), Failure> {
    let ScenarioOutput { data, sidecar, warnings } = result;
    let data = ensure_newline(data);
    let mut outputs = Vec::new();
    match out {
        Some(path) => {
            std::fs::write(path, &data)
                .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
            outputs.push(path.display().to_string());
            if let Some(meta) = sidecar {
                let meta_path = with_suffix(path, ".meta.json");
                std::fs::write(&meta_path, ensure_newline(meta)).map_err(|e| {
                    Failure::Io(format!("cannot write {}: {e}", meta_path.display()))
                })?;
                outputs.push(meta_path.display().to_string());
            }
        }
        None => {
            print!("{data}");
            outputs.push("stdout".to_string());
            if let Some(meta) = sidecar {
                eprintln!("{meta}");
            }
        }
    }
    let Warnings { low_precision, truncation_breach, p_representation_unavailable } = warnings;
    let report = json!({
        "scenario": scenario,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "warnings": {
            "low_precision": low_precision,
            "truncation_breach": truncation_breach,
            "p_representation_unavailable": p_representation_unavailable,
        },
        "outputs": outputs,
    });
    eprintln!("{}", render_json(&report));
    Ok(())
}

fn dispatch(cli: &Cli, started: Instant) -> Result<(), Failure> {
    let (common, scenario) = match &cli.cmd {
        Cmd::Validate { common } => (common, "validate"),
        Cmd::Moments { common, .. } => (common, "moments"),
        Cmd::Rho { common, .. } => (common, "rho"),
        Cmd::Wigner { common, .. } => (common, "wigner"),
        Cmd::Steady { common } => (common, "steady"),
        Cmd::OracleCompare { common, .. } => (common, "oracle-compare"),
    };
    let cfg = load_config(&common.config)?;
    let tabular_default =
        matches!(cli.cmd, Cmd::Moments { .. } | Cmd::Wigner { .. });
    let format = common.format.unwrap_or(if tabular_default { Format::Csv } else { Format::Json });
    let result = match &cli.cmd {
        Cmd::Validate { .. } => scenarios::run_validate(&cfg, format)?,
        Cmd::Moments { t1, steps, initial, .. } => {
            scenarios::run_moments(&cfg, *t1, *steps, initial.alpha0(), format)?
        }
        Cmd::Rho { t1, dim, initial, .. } => {
            scenarios::run_rho(&cfg, *t1, *dim, initial.alpha0(), format)?
        }
        Cmd::Wigner { t1, kind, grid, initial, .. } => scenarios::run_wigner(
            &cfg,
            *kind,
            *t1,
            initial.alpha0_re,
            initial.alpha0_im,
            grid,
            format,
        )?,
        Cmd::Steady { .. } => scenarios::run_steady(&cfg, format)?,
        Cmd::OracleCompare { t1, steps, dim, quantity, initial, .. } => {
            scenarios::run_oracle_compare(
                &cfg,
                *t1,
                *steps,
                *dim,
                initial.alpha0(),
                *quantity,
                format,
            )?
        }
    };
    deliver(scenario, &common.out, result, started)
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = Cli::parse();
    match dispatch(&cli, started) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (env, code) = envelope(&f);
            eprintln!("{}", render_json(&env));
            ExitCode::from(code)
        }
    }
}
