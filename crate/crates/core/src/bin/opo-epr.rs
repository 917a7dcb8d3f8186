use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use opo_epr::config::{load_observations, parse_observations, TraceMode, DEFAULT_OBSERVATIONS};
use opo_epr::run::{self, ReproduceTarget, Table};
use opo_epr::{load_config, Error, Result, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "opo-epr", version, about = "OPO quantum-noise spectra, entanglement criteria and parameter fits")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output path (file, or directory for `reproduce`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detected noise spectra over a frequency range.
    Spectra {
        #[arg(long)]
        min: Option<f64>,
        #[arg(long)]
        max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Mancini, Duan and EPR criteria at one frequency.
    Criteria {
        #[arg(long)]
        freq: Option<f64>,
    },
    /// Homodyne variance vs local-oscillator phase for one rotated mode.
    Trace {
        #[arg(long)]
        freq: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Least-squares fit of the free apparatus parameters.
    Fit {
        /// Observation CSV; defaults to the file named in the config.
        #[arg(long)]
        observations: Option<PathBuf>,
    },
    /// Regenerate the reference figures and table as CSV.
    Reproduce {
        #[arg(value_enum)]
        target: Option<TargetArg>,
        #[arg(long = "target", value_enum, conflicts_with = "target")]
        target_flag: Option<TargetArg>,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    Plus,
    Minus,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum TargetArg {
    Fig2,
    Fig3,
    Table1,
}

impl From<TargetArg> for ReproduceTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Fig2 => ReproduceTarget::Fig2,
            TargetArg::Fig3 => ReproduceTarget::Fig3,
            TargetArg::Table1 => ReproduceTarget::Table1,
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn write_table(table: &Table, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let f = fs::File::create(path).map_err(|e| io_err(path, e))?;
            table.write_csv(io::BufWriter::new(f))
        }
        None => table.write_csv(io::stdout().lock()),
    }
}

fn write_sidecar(path: &Path, cli: &Cli, config: &RunConfig) -> Result<()> {
    let meta = json!({
        "tool": "opo-epr",
        "version": env!("CARGO_PKG_VERSION"),
        "command": format!("{:?}", cli.command),
        "config": cli.config.as_ref().map(|p| p.display().to_string()),
        "apparatus": {
            "opo": config.apparatus.opo,
            "pump": config.apparatus.pump,
            "detection": config.apparatus.detection,
            "v_ind": config.apparatus.v_ind,
        },
    });
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn sidecar_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn execute(cli: &Cli) -> Result<()> {
    let config_path = cli.config.as_ref().ok_or_else(|| {
        Error::invalid("--config", "a configuration path", "missing")
    })?;
    let config = load_config(config_path)?;
    let out = cli.out.as_deref();

    match &cli.command {
        Command::Spectra { min, max, points } => {
            let s = config.spectra;
            let t = run::run_spectra(
                &config,
                min.unwrap_or(s.min_hz),
                max.unwrap_or(s.max_hz),
                points.unwrap_or(s.points),
            )?;
            write_table(&t, out)?;
        }
        Command::Criteria { freq } => {
            let t = run::run_criteria(&config, freq.unwrap_or(config.criteria.freq_hz))?;
            write_table(&t, out)?;
        }
        Command::Trace { freq, mode } => {
            let mode = match mode {
                Some(ModeArg::Plus) => TraceMode::Plus,
                Some(ModeArg::Minus) => TraceMode::Minus,
                None => config.trace.mode,
            };
            let trace = run::run_trace(&config, freq.unwrap_or(config.trace.freq_hz), mode)?;
            write_table(&trace.to_table(), out)?;
        }
        Command::Fit { observations } => {
            let obs = match observations.clone().or_else(|| config.observations_path()) {
                Some(p) => load_observations(p)?,
                None => parse_observations(DEFAULT_OBSERVATIONS)?,
            };
            let (result, t) = run::run_fit(&config, obs)?;
            if !result.converged {
                log::warn!("fit stopped at the iteration cap without meeting the tolerance");
            }
            write_table(&t, out)?;
        }
        Command::Reproduce {
            target,
            target_flag,
        } => {
            let target = target.or(*target_flag).ok_or_else(|| {
                Error::invalid("target", "one of fig2, fig3, table1", "missing")
            })?;
            let artifacts = run::run_reproduce(&config, target.into())?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
                    for (name, table) in &artifacts {
                        write_table(table, Some(&dir.join(name)))?;
                    }
                    let meta = dir.join(format!("{}.meta.json", ReproduceTarget::from(target).name()));
                    write_sidecar(&meta, cli, &config)?;
                }
                None => {
                    let mut stdout = io::stdout().lock();
                    for (i, (name, table)) in artifacts.iter().enumerate() {
                        if i > 0 {
                            writeln!(stdout).map_err(|e| io_err(Path::new("<stdout>"), e))?;
                        }
                        writeln!(stdout, "# {name}").map_err(|e| io_err(Path::new("<stdout>"), e))?;
                        table.write_csv(&mut stdout)?;
                    }
                }
            }
            return Ok(());
        }
    }
    if let Some(path) = out {
        write_sidecar(&sidecar_for(path), cli, &config)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {}", e.kind(), msg);
            ExitCode::FAILURE
        }
    }
}
