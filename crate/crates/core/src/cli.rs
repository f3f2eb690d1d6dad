//! Command-line front end.
//!
//! Exit codes are a stable contract: 0 success, 1 runtime failure, 2 usage or
//! configuration error. Failures print one line, `error[<category>]: <message>`.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use crate::data::{parse_idx_labels, parse_idx_raw};
use crate::error::{Error, Result};
use crate::experiments::{baseline_pooled, build, run_experiment, summarize, write_outputs, ExperimentConfig, MetricsLog};
use crate::nn::gradcheck::run_gradcheck;
use crate::protocol::{coordinate, participate, EventLog, PublicData};
use crate::transport::{TcpChannel, TcpServer};

/// Environment variable naming the output directory when neither the config
/// nor `--output` sets one.
pub const OUTPUT_DIR_ENV: &str = "FEDMD_OUTPUT_DIR";

/// Gradient check tolerance on the maximum relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "fedmd", version, about = "Heterogeneous federated learning via model distillation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transfer baselines, collaboration rounds and (optionally) the pooled baseline.
    Run {
        config: PathBuf,
        /// `key=value` overrides; bare keys refer to the `[collaboration]` section.
        overrides: Vec<String>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Only one of the two reference points.
    Baseline {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = BaselineKind::Transfer)]
        kind: BaselineKind,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        networks: usize,
    },
    /// Print the shape of an IDX file, plus a histogram when it holds labels.
    InspectData { path: PathBuf },
    /// Coordinate a run over TCP; parties connect with `join`.
    Serve {
        addr: SocketAddr,
        config: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Take part in a run coordinated by `serve`.
    Join { addr: SocketAddr, party: usize, config: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    Transfer,
    Pooled,
}

/// A failure together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::Config(_) => 2,
            _ => 1,
        };
        Self { code, error }
    }
}

/// Read, override and validate a config file. Any problem here is a
/// configuration error (exit code 2).
pub fn parse_config(path: &Path, overrides: &[String]) -> std::result::Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        error: Error::file(path, e),
    })?;
    ExperimentConfig::from_toml_str(&text, overrides).map_err(|e| Failure { code: 2, error: e })
}

fn resolve_output(config: &mut ExperimentConfig, flag: Option<PathBuf>) {
    if let Some(dir) = flag {
        config.output.dir = Some(dir);
    } else if config.output.dir.is_none() {
        config.output.dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    }
}

/// Parse `argv`, execute, and return the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(out, "{rendered}") } else { write!(err, "{rendered}") };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error[{}]: {}", f.error.category(), single_line(&f.error.to_string()));
            f.code
        }
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn io(e: std::io::Error) -> Failure {
    Error::Data(format!("cannot write output: {e}")).into()
}

pub fn execute(command: Command, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    match command {
        Command::Run { config, overrides, output } => {
            let mut config = parse_config(&config, &overrides)?;
            resolve_output(&mut config, output);
            let outcome = run_experiment(&config)?;
            write!(out, "{}", outcome.summary.table()).map_err(io)?;
            if let Some(dir) = &config.output.dir {
                writeln!(out, "wrote {}", dir.display()).map_err(io)?;
            }
        }
        Command::Baseline { config, kind, output } => {
            let mut config = parse_config(&config, &[])?;
            resolve_output(&mut config, output);
            let log = match kind {
                BaselineKind::Transfer => {
                    config.collaboration.rounds = 0;
                    config.pooled = false;
                    run_experiment(&config)?.log
                }
                BaselineKind::Pooled => {
                    let experiment = build(&config)?;
                    MetricsLog::new(baseline_pooled(&config, &experiment)?, config.collaboration.seed)
                }
            };
            writeln!(out, "party  accuracy").map_err(io)?;
            for row in &log.rows {
                writeln!(out, "{:>5}  {:.4}", row.party, row.accuracy).map_err(io)?;
            }
            if kind == BaselineKind::Pooled {
                if let Some(dir) = &config.output.dir {
                    let csv = dir.join("metrics.csv");
                    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
                    std::fs::write(&csv, log.to_csv()).map_err(|e| Error::file(&csv, e))?;
                }
            }
        }
        Command::Gradcheck { seed, networks } => {
            let report = run_gradcheck(seed, networks)?;
            writeln!(
                out,
                "networks: {}  parameters: {}  max relative error: {:.3e}  worst: {}",
                report.networks, report.parameters_checked, report.max_rel_error, report.worst_case
            )
            .map_err(io)?;
            if !report.passed(GRADCHECK_TOLERANCE) {
                return Err(Error::Data(format!(
                    "gradient check failed: {:.3e} >= {GRADCHECK_TOLERANCE:e}",
                    report.max_rel_error
                ))
                .into());
            }
            writeln!(out, "ok").map_err(io)?;
        }
        Command::InspectData { path } => {
            let bytes = std::fs::read(&path).map_err(|e| Error::file(&path, e))?;
            let array = parse_idx_raw(&bytes)?;
            let dims: Vec<String> = array.dims.iter().map(|d| d.to_string()).collect();
            writeln!(out, "shape: [{}]", dims.join(", ")).map_err(io)?;
            if array.dims.len() == 1 {
                let labels = parse_idx_labels(&bytes)?;
                let mut hist = BTreeMap::new();
                for l in labels {
                    *hist.entry(l).or_insert(0usize) += 1;
                }
                writeln!(out, "label  count").map_err(io)?;
                for (label, count) in hist {
                    writeln!(out, "{label:>5}  {count}").map_err(io)?;
                }
            }
        }
        Command::Serve { addr, config, output } => {
            let mut config = parse_config(&config, &[])?;
            resolve_output(&mut config, output);
            let experiment = build(&config)?;
            let server = TcpServer::bind(addr)?;
            writeln!(out, "listening on {}", server.local_addr()?).map_err(io)?;
            out.flush().map_err(io)?;
            let channels = (0..config.collaboration.parties)
                .map(|_| server.accept())
                .collect::<Result<Vec<_>>>()?;
            let mut log = coordinate(channels, &config.collaboration, experiment.public.len(), &EventLog::default())?;
            log.meta.config_hash = config.hash()?;
            let summary = summarize(&log)?;
            write!(out, "{}", summary.table()).map_err(io)?;
            if let Some(dir) = &config.output.dir {
                write_outputs(dir, &config, &log, &summary)?;
            }
        }
        Command::Join { addr, party, config } => {
            let config = parse_config(&config, &[])?;
            let experiment = build(&config)?;
            let mut parties = experiment.parties(&config)?;
            if party >= parties.len() {
                return Err(Error::Config(format!("party {party} out of range 0..{}", parties.len())).into());
            }
            let mut state = parties.swap_remove(party);
            let collab = &config.collaboration;
            let public = PublicData::split(experiment.public, collab.public_validation_fraction, collab.seed)?;
            let mut channel = TcpChannel::connect(addr, Duration::from_secs(30))?;
            participate(&mut channel, &mut state, &public, &experiment.test, collab, &EventLog::default())?;
            writeln!(out, "party {party} done").map_err(io)?;
        }
    }
    Ok(())
}
