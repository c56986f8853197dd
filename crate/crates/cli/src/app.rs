//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use nilheat::Error;

use crate::checks::run_verify;
use crate::config::{ConfigError, RunConfig};
use crate::decompose::{decompose, format_rows};
use crate::fieldio::{parse_manifold_function, parse_points};
use crate::report::{write_report, write_summary};
use crate::tables::{dump_kernel, Kernel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "nilheat", version, about = "Heat transforms on the Heisenberg nilmanifold")]
struct Cli {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    n: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    k: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    t: Option<String>,
    /// Base resolution per unit-cell axis (tables: points per axis).
    #[arg(long, global = true, allow_negative_numbers = true)]
    grid: Option<String>,
    /// Half-width of sampling boxes on R^n (tables: of the tabulated square).
    #[arg(long, global = true, allow_negative_numbers = true)]
    radius: Option<String>,
    /// Lattice-sum tail tolerance.
    #[arg(long, global = true, allow_negative_numbers = true)]
    tol: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    seed: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Denominator of the Bergman isometry ratio: thm410 or prop44.
    #[arg(long, global = true)]
    convention: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    workers: Option<String>,
    /// Comma-separated check ids to run (verify only).
    #[arg(long, global = true)]
    checks: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the verification checks and write a JSON-lines report.
    Verify,
    /// Tabulate a kernel on a square grid.
    DumpKernel {
        #[arg(value_enum, ignore_case = true)]
        which: Kernel,
    },
    /// Split a sampled nilmanifold function into (k, j) components.
    Decompose { input: PathBuf },
    /// Evaluate the heat transform of a sampled nilmanifold function at listed points.
    Eval {
        input: PathBuf,
        /// File of complex points, one per row: z, w, zeta as (re, im) pairs.
        #[arg(long)]
        points: PathBuf,
    },
}

impl Cli {
    fn config(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("n", &self.n),
            ("k", &self.k),
            ("t", &self.t),
            ("grid", &self.grid),
            ("radius", &self.radius),
            ("tol", &self.tol),
            ("seed", &self.seed),
            ("out", &self.out),
            ("convention", &self.convention),
            ("workers", &self.workers),
            ("checks", &self.checks),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn numeric_exit(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } | Error::Truncation { .. } | Error::IllPosed { .. } => EXIT_NON_CONVERGENCE,
        _ => EXIT_CONFIG,
    }
}

fn emit(cfg: &RunConfig, text: &str, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match &cfg.out {
        Some(path) => match std::fs::write(path, text) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(stderr, "cannot write {}: {e}", path.display());
                EXIT_CONFIG
            }
        },
        None => match stdout.write_all(text.as_bytes()) {
            Ok(()) => EXIT_OK,
            Err(_) => EXIT_CONFIG,
        },
    }
}

fn read(path: &PathBuf, stderr: &mut dyn Write) -> Option<String> {
    match std::fs::read_to_string(path) {
        Ok(t) => Some(t),
        Err(e) => {
            let _ = writeln!(stderr, "cannot read {}: {e}", path.display());
            None
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    let cfg = match cli.config() {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            return EXIT_CONFIG;
        }
    };
    match &cli.command {
        Command::Verify => verify(&cfg, stdout, stderr),
        Command::DumpKernel { which } => match dump_kernel(*which, &cfg) {
            Ok(table) => emit(&cfg, &table, stdout, stderr),
            Err(e) => {
                let _ = writeln!(stderr, "{e}");
                numeric_exit(&e)
            }
        },
        Command::Decompose { input } => {
            let Some(text) = read(input, stderr) else { return EXIT_CONFIG };
            let f = match parse_manifold_function(&text) {
                Ok(f) => f,
                Err(e) => {
                    let _ = writeln!(stderr, "{}: {e}", input.display());
                    return EXIT_CONFIG;
                }
            };
            match decompose(&f) {
                Ok(rows) => emit(&cfg, &format_rows(&rows, f.n()), stdout, stderr),
                Err(e) => {
                    let _ = writeln!(stderr, "{e}");
                    numeric_exit(&e)
                }
            }
        }
        Command::Eval { input, points } => {
            let Some(text) = read(input, stderr) else { return EXIT_CONFIG };
            let Some(ptext) = read(points, stderr) else { return EXIT_CONFIG };
            let f = match parse_manifold_function(&text) {
                Ok(f) => f,
                Err(e) => {
                    let _ = writeln!(stderr, "{}: {e}", input.display());
                    return EXIT_CONFIG;
                }
            };
            let pts = match parse_points(&ptext, f.n()) {
                Ok(p) => p,
                Err(e) => {
                    let _ = writeln!(stderr, "{}: {e}", points.display());
                    return EXIT_CONFIG;
                }
            };
            let mut out = String::from("re,im,tail\n");
            for p in &pts {
                match nilheat::heat_transform::heat_transform_manifold(&f, cfg.t, p, cfg.tol) {
                    Ok(v) => out.push_str(&format!("{},{},{:e}\n", v.value.re, v.value.im, v.tail)),
                    Err(e) => {
                        let _ = writeln!(stderr, "{e}");
                        return numeric_exit(&e);
                    }
                }
            }
            emit(&cfg, &out, stdout, stderr)
        }
    }
}

fn verify(cfg: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let results = match run_verify(cfg) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            return EXIT_CONFIG;
        }
    };
    let mut report = Vec::new();
    write_report(&mut report, cfg, &results).expect("writing to memory");
    let summary_to: &mut dyn Write = if cfg.out.is_some() { stdout } else { stderr };
    let _ = write_summary(summary_to, &results);
    let code = emit(cfg, &String::from_utf8(report).expect("utf-8 report"), stdout, stderr);
    if code != EXIT_OK {
        return code;
    }
    if results.iter().any(|r| r.non_convergence) {
        EXIT_NON_CONVERGENCE
    } else if results.iter().any(|r| !r.pass) {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    }
}
