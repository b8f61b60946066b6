//! `moiso` command line.
//!
//! Exit codes: 0 success, 1 model or fit failure, 2 usage or parse error.

use clap::{Parser, Subcommand};
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use crate::config::AppConfig;
use crate::device::{
    calibrate, transmission_spectrum, wavelength_grid, Calibration, CalibrationTargets, IsolatorConfig, RESIDUAL_NAMES,
};
use crate::error::{Error, Result};
use crate::experiments::{
    count_coincidences_from_reader, mode_overlap_for_visibility, run_hom, run_magnet_sweep, Case, RunReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MODEL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "moiso", version, about = "Magneto-optical isolator single-photon simulator")]
pub struct Cli {
    /// TOML configuration file; every section is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for all sampling (default 20210611 or the config's seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: the config's output_dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the device model to classical targets; writes calibration.json.
    Calibrate {
        /// TOML file with the target fields; defaults to [targets] of the config.
        #[arg(long)]
        targets: Option<PathBuf>,
    },
    /// Forward/backward transmission spectrum; writes spectrum.csv.
    Spectrum {
        #[arg(long)]
        min_nm: Option<f64>,
        #[arg(long)]
        max_nm: Option<f64>,
        #[arg(long)]
        step_nm: Option<f64>,
        /// Film magnetization in [-1, 1].
        #[arg(long, allow_hyphen_values = true)]
        m: Option<f64>,
    },
    /// Simulated magnet sweep; writes sweep_report.json and sweep_curve.csv.
    MagnetSweep {
        /// A, A', B, B' or reference_waveguide.
        #[arg(long)]
        case: Option<String>,
    },
    /// Simulated HOM scan; writes hom_report.json and hom_curve.csv.
    Hom {
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        mode_overlap: Option<f64>,
        /// Choose the mode overlap that yields this visibility.
        #[arg(long)]
        target_visibility: Option<f64>,
        /// Use expected counts instead of Poisson draws.
        #[arg(long)]
        noiseless: bool,
    },
    /// Count coincidences in a `channel,time_ps` file; writes coincidences.json.
    Analyze {
        stream: PathBuf,
        #[arg(long)]
        window_ps: Option<f64>,
        #[arg(long)]
        offset_ps: Option<f64>,
    },
}

/// Failure classified by exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Format { .. } | Error::Domain(_) => EXIT_USAGE,
            _ => EXIT_MODEL,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn parse_case(s: &str) -> std::result::Result<Case, CliError> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        usage(format!(
            "unknown case {s:?}; expected A, A', B, B' or reference_waveguide"
        ))
    })
}

struct Ctx {
    cfg: AppConfig,
    out: PathBuf,
}

impl Ctx {
    fn device(&self) -> std::result::Result<IsolatorConfig, CliError> {
        match self.cfg.device {
            Some(d) => Ok(d),
            None => Ok(run_calibration(&self.cfg.targets)?.config),
        }
    }
}

fn run_calibration(targets: &CalibrationTargets) -> std::result::Result<Calibration, CliError> {
    calibrate(targets).map_err(|e| {
        let mut message = e.to_string();
        if let Error::Calibration { residuals, .. } = &e {
            for (n, r) in RESIDUAL_NAMES.iter().zip(residuals) {
                message.push_str(&format!("\n  {n}: {r:+.3} tolerances"));
            }
        }
        CliError {
            code: EXIT_MODEL,
            message,
        }
    })
}

#[derive(Serialize)]
struct SpectrumSummary {
    peak_wavelength_nm: f64,
    peak_isolation_db: f64,
}

/// Runs one command. Progress and summaries go to `log`.
pub fn execute(cli: Cli, log: &mut dyn Write) -> std::result::Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let ctx = Ctx { cfg, out };
    let say = |log: &mut dyn Write, s: String| {
        let _ = writeln!(log, "{s}");
    };

    match cli.command {
        Command::Calibrate { targets } => {
            let t = match targets {
                Some(p) => {
                    let text =
                        std::fs::read_to_string(&p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
                    let t: CalibrationTargets =
                        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                    t.validate()?;
                    t
                }
                None => ctx.cfg.targets,
            };
            let cal = run_calibration(&t)?;
            let path = ctx.out.join("calibration.json");
            write_json(&path, &cal)?;
            for (n, r) in RESIDUAL_NAMES.iter().zip(&cal.scaled_residuals) {
                say(log, format!("{n:32} {r:+.4} tolerances"));
            }
            say(log, format!("wrote {}", path.display()));
        }
        Command::Spectrum {
            min_nm,
            max_nm,
            step_nm,
            m,
        } => {
            let s = ctx.cfg.spectrum;
            let (lo, hi, step) = (
                min_nm.unwrap_or(s.min_nm),
                max_nm.unwrap_or(s.max_nm),
                step_nm.unwrap_or(s.step_nm),
            );
            if !(lo < hi) {
                return Err(usage(format!("wavelength range is inverted: {lo} >= {hi}")));
            }
            let m = m.unwrap_or(s.m);
            let grid = wavelength_grid(lo, hi, step)?;
            let device = ctx.device()?;
            let pts = transmission_spectrum(&device, &grid, m, s.pair()?)?;
            let mut csv = String::from("wavelength_nm,forward_db,backward_db,isolation_db\n");
            for p in &pts {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    p.wavelength_nm, p.forward_db, p.backward_db, p.isolation_db
                ));
            }
            let path = ctx.out.join("spectrum.csv");
            write_atomic(&path, csv.as_bytes())?;
            if let Some(best) = pts.iter().max_by(|a, b| a.isolation_db.total_cmp(&b.isolation_db)) {
                let sum = SpectrumSummary {
                    peak_wavelength_nm: best.wavelength_nm,
                    peak_isolation_db: best.isolation_db,
                };
                say(log, serde_json::to_string(&sum).map_err(Error::from)?);
            }
            say(log, format!("wrote {}", path.display()));
        }
        Command::MagnetSweep { case } => {
            let mut scenario = ctx.cfg.scenario();
            if let Some(c) = case {
                scenario.case = parse_case(&c)?;
            }
            if scenario.magnet_trajectory.is_empty() {
                return Err(usage("scenario.magnet_trajectory is empty"));
            }
            let device = ctx.device()?;
            let report = run_magnet_sweep(&scenario, &device, &ctx.cfg.magnet)?;
            write_report(&ctx.out, "sweep", &report, report.curve_csv(), log)?;
        }
        Command::Hom {
            case,
            mode_overlap,
            target_visibility,
            noiseless,
        } => {
            let mut scenario = ctx.cfg.scenario();
            if let Some(c) = case {
                scenario.case = parse_case(&c)?;
            }
            let h = &ctx.cfg.hom;
            let device = ctx.device()?;
            let overlap = match (mode_overlap, target_visibility.or(h.target_visibility)) {
                (Some(v), _) => v,
                (None, Some(t)) => mode_overlap_for_visibility(&scenario, &device, t)?,
                (None, None) => h.mode_overlap,
            };
            let delays = h.delays()?;
            let report = run_hom(&scenario, &device, &delays, overlap, noiseless || h.noiseless)?;
            let mut csv = String::from("delay_ps,probability,counts,sigma\n");
            for (c, p) in report.curve.iter().zip(&report.points) {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    c.x,
                    p.probability.unwrap_or(f64::NAN),
                    c.net,
                    c.sigma
                ));
            }
            write_report(&ctx.out, "hom", &report, csv, log)?;
        }
        Command::Analyze {
            stream,
            window_ps,
            offset_ps,
        } => {
            let f = File::open(&stream).map_err(|e| usage(format!("cannot open {}: {e}", stream.display())))?;
            let window = window_ps.unwrap_or(ctx.cfg.detector.coincidence_window_ps);
            let offset = offset_ps.unwrap_or(ctx.cfg.scenario.accidental_offset_ps);
            let rec = count_coincidences_from_reader(BufReader::new(f), window, offset).map_err(|e| match e {
                Error::Format { line, message } => usage(format!("{}:{line}: {message}", stream.display())),
                other => other.into(),
            })?;
            let path = ctx.out.join("coincidences.json");
            write_json(&path, &rec)?;
            say(log, serde_json::to_string(&rec).map_err(Error::from)?);
            say(log, format!("wrote {}", path.display()));
        }
    }
    Ok(())
}

fn write_report(
    out: &Path,
    stem: &str,
    report: &RunReport,
    csv: String,
    log: &mut dyn Write,
) -> std::result::Result<(), CliError> {
    let json_path = out.join(format!("{stem}_report.json"));
    let csv_path = out.join(format!("{stem}_curve.csv"));
    write_atomic(&json_path, report.to_json()?.as_bytes())?;
    write_atomic(&csv_path, csv.as_bytes())?;
    for (k, v) in &report.derived {
        let _ = writeln!(log, "{k:28} {:.6} ± {:.6}", v.value, v.sigma);
    }
    let _ = writeln!(log, "wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

/// Parses `args`, runs, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut stdout = std::io::stdout();
    match execute(cli, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
