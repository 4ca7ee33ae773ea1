mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use relay_manet::harness::{sweep, write_csv, SweepSpec};
use relay_manet::model::{end_to_end_delay, solve_rbp, throughput_capacity, SolverOptions};
use relay_manet::sim::{self, SimConfig};
use relay_manet::{acceptance, Error, NetworkParams};
use serde_json::json;

use config::{parse_rho_list, ConfigError, Settings, DEFAULT_SEED, DEFAULT_SLOTS, DEFAULT_WARMUP};

const SEED_ENV: &str = "MANET_SEED";
const DEFAULT_SWEEP_REPS: usize = 10;

/// Blocking probability and delay in buffer-limited two-hop relay MANETs.
///
/// Parameters may come from a `key = value` file (--spec) and from flags;
/// flags win. The default seed may be set with MANET_SEED.
#[derive(Parser, Debug)]
#[command(name = "relay-manet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Suppress log lines on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the blocking fixed point and the delay model at one load.
    Theory {
        #[command(flatten)]
        net: NetFlags,
        #[command(flatten)]
        load: LoadFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Throughput capacity of the network.
    Capacity {
        #[command(flatten)]
        net: NetFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Simulate at one load and report the measurements.
    Sim {
        #[command(flatten)]
        net: NetFlags,
        #[command(flatten)]
        load: LoadFlags,
        #[command(flatten)]
        run: RunFlags,
        /// Write a `slot,kind,tx,rx` line per transmission of replication 0.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Theory and simulation over a load grid, as CSV.
    Sweep {
        #[command(flatten)]
        net: NetFlags,
        /// Comma-separated loads relative to capacity.
        #[arg(long)]
        rho: Option<String>,
        #[command(flatten)]
        run: RunFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Run the built-in acceptance suite.
    Validate {
        /// Criterion ids to run; all when omitted.
        ids: Vec<u32>,
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        out: OutFlags,
    },
}

#[derive(Args, Debug)]
struct NetFlags {
    /// Number of nodes (even).
    #[arg(long)]
    n: Option<usize>,
    /// Grid side in cells.
    #[arg(long)]
    m: Option<usize>,
    /// Relay buffer size.
    #[arg(long = "B", id = "B")]
    buffer: Option<usize>,
    /// Transmission range in cells [default: 1].
    #[arg(long)]
    nu: Option<usize>,
    /// Interference guard factor [default: 1].
    #[arg(long)]
    delta: Option<f64>,
    /// `key = value` file with defaults for any of the flags.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LoadFlags {
    /// Per-node arrival rate in packets per slot.
    #[arg(long, conflicts_with = "rho")]
    lambda: Option<f64>,
    /// Arrival rate relative to throughput capacity.
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args, Debug)]
struct RunFlags {
    /// Base seed [default: MANET_SEED or 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Measured slots per replication [default: 10000000].
    #[arg(long)]
    slots: Option<u64>,
    /// Unmeasured slots before measurement [default: 100000].
    #[arg(long)]
    warmup: Option<u64>,
    /// Replications per point [default: 1 for sim, 10 for sweep].
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct OutFlags {
    /// Output file [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

struct Log {
    quiet: bool,
}

impl Log {
    /// Log lines are `#` comments, so stderr as a whole stays a valid
    /// config file.
    fn line(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("# {msg}");
        }
    }

    fn echo(&self, settings: &Settings) {
        if !self.quiet {
            eprint!("{}", settings.echo());
        }
    }
}

fn net_settings(net: &NetFlags) -> Result<Settings, Failure> {
    let flags = Settings {
        n: net.n,
        m: net.m,
        buffer: net.buffer,
        nu: net.nu,
        delta: net.delta,
        ..Settings::default()
    };
    let file = match &net.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("reading {}: {e}", path.display())))?;
            Settings::parse(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => Settings::default(),
    };
    Ok(flags.over(file))
}

fn with_load(base: Settings, load: &LoadFlags) -> Settings {
    let flags = Settings {
        lambda: load.lambda,
        rho: load.rho.map(|r| vec![r]),
        ..Settings::default()
    };
    // A flag for either form of the load replaces both forms from the file.
    if flags.lambda.is_some() || flags.rho.is_some() {
        flags.over(Settings {
            lambda: None,
            rho: None,
            ..base
        })
    } else {
        base
    }
}

/// Run flags over `base`, with the seed environment variable below both.
fn with_run(base: Settings, run: &RunFlags) -> Result<Settings, Failure> {
    let env = match std::env::var(SEED_ENV) {
        Ok(v) => Settings {
            seed: Some(
                v.trim()
                    .parse()
                    .map_err(|e| Failure::Usage(format!("{SEED_ENV}={v:?} is not a seed: {e}")))?,
            ),
            ..Settings::default()
        },
        Err(_) => Settings::default(),
    };
    Ok(Settings {
        seed: run.seed,
        slots: run.slots,
        warmup: run.warmup,
        reps: run.reps,
        workers: run.workers,
        ..Settings::default()
    }
    .over(base)
    .over(env))
}

/// The network with its arrival rate, from exactly one of lambda or rho.
fn loaded_network(s: &Settings) -> Result<NetworkParams, Failure> {
    let base = s.network()?;
    match (s.lambda, s.rho.as_deref()) {
        (Some(_), Some(_)) => Err(Failure::Usage("give only one of lambda and rho".into())),
        (Some(lambda), None) => Ok(base.with_lambda(lambda)),
        (None, Some(&[rho])) => {
            let lambda0 = throughput_capacity(&base, &SolverOptions::default())?.lambda0;
            Ok(base.with_lambda(rho * lambda0))
        }
        (None, Some(_)) => Err(Failure::Usage("expected a single rho value".into())),
        (None, None) => Err(Failure::Usage(
            "one of --lambda or --rho is required".into(),
        )),
    }
}

/// Fills the defaults the echo should show.
fn resolve_network(mut s: Settings) -> Settings {
    s.nu = s.nu.or(Some(1));
    s.delta = s.delta.or(Some(1.0));
    s
}

fn resolve_run(mut s: Settings, default_reps: usize) -> Settings {
    s.seed = s.seed.or(Some(DEFAULT_SEED));
    s.slots = s.slots.or(Some(DEFAULT_SLOTS));
    s.warmup = s.warmup.or(Some(DEFAULT_WARMUP));
    s.reps = s.reps.or(Some(default_reps));
    s
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(create(path)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn create(path: &Path) -> Result<File, Failure> {
    File::create(path).map_err(|e| Failure::Run(format!("creating {}: {e}", path.display())))
}

fn emit_json(out: &Option<PathBuf>, value: &serde_json::Value) -> Result<(), Failure> {
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Run(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn set_workers(workers: Option<usize>) -> Result<(), Failure> {
    match workers {
        Some(0) => Err(Failure::Usage("workers must be at least 1".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::Run(e.to_string())),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let log = Log { quiet: cli.quiet };
    match cli.command {
        Command::Theory { net, load, out } => {
            let settings = resolve_network(with_load(net_settings(&net)?, &load));
            let params = loaded_network(&settings)?;
            log.echo(&settings);
            let sol = solve_rbp(&params)?;
            let delay = match end_to_end_delay(&sol) {
                Ok(d) => Some(d),
                Err(Error::Unstable { lambda, mu_s }) => {
                    log.line(format_args!(
                        "lambda {lambda} is not below the local service rate {mu_s}; delays are unbounded"
                    ));
                    None
                }
                Err(e) => return Err(e.into()),
            };
            emit_json(
                &out.out,
                &json!({ "stable": delay.is_some(), "solution": sol, "delay": delay }),
            )
        }
        Command::Capacity { net, out } => {
            let settings = resolve_network(net_settings(&net)?);
            let params = settings.network()?;
            log.echo(&settings);
            let cap = throughput_capacity(&params, &SolverOptions::default())?;
            emit_json(&out.out, &json!({ "params": params, "capacity": cap }))
        }
        Command::Sim {
            net,
            load,
            run,
            trace,
            out,
        } => {
            let settings = resolve_run(
                resolve_network(with_run(with_load(net_settings(&net)?, &load), &run)?),
                1,
            );
            let params = loaded_network(&settings)?;
            log.echo(&settings);
            let config = SimConfig {
                params,
                seed: settings.seed.expect("resolved"),
                warmup_slots: settings.warmup.expect("resolved"),
                measure_slots: settings.slots.expect("resolved"),
                replications: settings.reps.expect("resolved"),
            };
            set_workers(settings.workers)?;
            let start = Instant::now();
            let report = match trace {
                Some(path) => {
                    let sink = Box::new(BufWriter::new(create(&path)?));
                    sim::run_with_trace(&config, sink)?
                }
                None => sim::run(&config)?,
            };
            log.line(format_args!(
                "simulated {} replication(s) in {:.1} s",
                config.replications,
                start.elapsed().as_secs_f64()
            ));
            emit_json(
                &out.out,
                &serde_json::to_value(&report).map_err(|e| Failure::Run(e.to_string()))?,
            )
        }
        Command::Sweep { net, rho, run, out } => {
            let mut base = net_settings(&net)?;
            if let Some(r) = rho {
                base.rho = Some(parse_rho_list(&r)?);
            }
            if base.lambda.is_some() {
                return Err(Failure::Usage("sweep takes rho, not lambda".into()));
            }
            let settings = resolve_run(resolve_network(with_run(base, &run)?), DEFAULT_SWEEP_REPS);
            let params = settings.network()?;
            let grid = settings
                .rho
                .clone()
                .ok_or_else(|| Failure::Usage("sweep needs --rho or rho in --spec".into()))?;
            log.echo(&settings);
            let spec = SweepSpec {
                params,
                rho_grid: grid,
                seed: settings.seed.expect("resolved"),
                warmup_slots: settings.warmup.expect("resolved"),
                measure_slots: settings.slots.expect("resolved"),
                replications: settings.reps.expect("resolved"),
                workers: settings.workers,
            };
            if spec.workers == Some(0) {
                return Err(Failure::Usage("workers must be at least 1".into()));
            }
            let start = Instant::now();
            let rows = sweep(&spec)?;
            log.line(format_args!(
                "swept {} points in {:.1} s",
                rows.len(),
                start.elapsed().as_secs_f64()
            ));
            let mut w = open_out(&out.out)?;
            write_csv(&mut w, &rows)?;
            w.flush()?;
            Ok(())
        }
        Command::Validate { ids, workers, out } => {
            set_workers(workers)?;
            let mut w = open_out(&out.out)?;
            let results = acceptance::run_selected(
                |id| ids.is_empty() || ids.contains(&id),
                |r| {
                    // A broken output stream surfaces at the final flush.
                    let _ = writeln!(w, "{r}").and_then(|()| w.flush());
                },
            );
            if results.is_empty() {
                return Err(Failure::Usage(format!("no criterion matches {ids:?}")));
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            writeln!(
                w,
                "acceptance: {} passed, {failed} failed",
                results.len() - failed
            )?;
            w.flush()?;
            if failed > 0 {
                return Err(Failure::Run(format!("{failed} acceptance criteria failed")));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
