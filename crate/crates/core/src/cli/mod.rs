// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: `run`, `gen`, `bench` and `dump-protocol`.
//!
//! Exit codes: 0 success, 1 bad input (spec, arguments, infeasible
//! generation), 2 simulation failure (a node never bootstrapped or the run
//! hit its time limit).

pub mod bench;
pub mod gen;
pub mod golden;
pub mod spec;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::simnet::world::{World, WorldError};
use bench::{run_bench, BenchConfig, BenchError};
use spec::TopologySpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_SIM: i32 = 2;

/// Environment variable holding the log filter (`error`, `info`, `debug`,
/// `trace`).
pub const LOG_ENV: &str = "ICNSIM_LOG";

#[derive(Debug, Parser)]
#[command(name = "icnsim", version, about = "ICN-over-SDN bootstrap simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bootstrap every node of a topology and write the span CSV.
    Run {
        #[arg(long)]
        topology: PathBuf,
        /// Overrides the seed in the topology file.
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the TM's final topology graph.
        #[arg(long)]
        dump_topology: bool,
    },
    /// Generate a random connected topology.
    Gen {
        #[arg(long)]
        switches: usize,
        #[arg(long)]
        links: usize,
        #[arg(long, default_value_t = 0)]
        hosts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep formation time over link counts.
    Bench {
        /// Inclusive range, e.g. `10..60`.
        #[arg(long, value_parser = parse_range)]
        links: (usize, usize),
        #[arg(long, default_value_t = 10)]
        step: usize,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the golden wire vectors as `name hex` lines.
    DumpProtocol,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once("..").ok_or("expected LO..HI")?;
    let lo = lo.trim().parse().map_err(|e| format!("LO: {e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("HI: {e}"))?;
    Ok((lo, hi))
}

pub fn init_logging() {
    let env = env_logger::Env::default().filter_or(LOG_ENV, "error");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> std::io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => out.write_all(text.as_bytes()),
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run {
            topology,
            seed,
            out: path,
            dump_topology,
        } => cmd_run(&topology, seed, path.as_deref(), dump_topology, out, err),
        Command::Gen {
            switches,
            links,
            hosts,
            seed,
            out: path,
        } => match gen::generate(switches, links, hosts, seed) {
            Ok(spec) => finish(emit(path.as_deref(), &spec.to_json(), out), err),
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                EXIT_INPUT
            }
        },
        Command::Bench {
            links: (lo, hi),
            step,
            repeats,
            seed,
            out: path,
        } => {
            let cfg = BenchConfig { lo, hi, step, repeats, seed };
            match run_bench(&cfg) {
                Ok(result) => {
                    let _ = writeln!(err, "{}", result.fit_line());
                    finish(emit(path.as_deref(), &result.to_csv(), out), err)
                }
                Err(e @ (BenchError::Args(_) | BenchError::Gen(_))) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_INPUT
                }
                Err(e) => {
                    let _ = writeln!(err, "simulation failed: {e}");
                    EXIT_SIM
                }
            }
        }
        Command::DumpProtocol => finish(out.write_all(golden::dump().as_bytes()), err),
    }
}

fn finish(r: std::io::Result<()>, err: &mut dyn Write) -> i32 {
    match r {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

fn cmd_run(
    topology: &Path,
    seed: Option<u64>,
    path: Option<&Path>,
    dump_topology: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let text = match fs::read_to_string(topology) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", topology.display());
            return EXIT_INPUT;
        }
    };
    let mut spec = match TopologySpec::from_json(&text) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", topology.display());
            return EXIT_INPUT;
        }
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let mut world = match World::new(&spec) {
        Ok(w) => w,
        Err(e @ WorldError::Spec(_)) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
        Err(e) => {
            let _ = writeln!(err, "simulation failed: {e}");
            return EXIT_SIM;
        }
    };
    let run = world.run().and_then(|()| world.check_complete());
    let report = world.report();
    let code = finish(emit(path, &report.to_csv(), out), err);
    if path.is_some() {
        let _ = out.write_all(report.to_text().as_bytes());
    }
    if dump_topology {
        let _ = out.write_all(world.tm().graph().dump().as_bytes());
    }
    if let Err(e) = run {
        let _ = writeln!(err, "simulation failed: {e}");
        return EXIT_SIM;
    }
    code
}
