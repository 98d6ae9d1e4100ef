//! `hypwalk`: batch front-end for the random-walk computations.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 when the
//! configuration is invalid. Failures print an error JSON on stdout.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use hypwalk::{Exec, Family};
use serde::Serialize;
use serde_json::json;

use commands::Ctx;
use config::{MeasureSpec, Params, Resolved};
use error::CliError;
use output::{Envelope, ErrorEnvelope, SCHEMA_VERSION};

#[derive(Parser, Debug)]
#[command(name = "hypwalk", version, about = "Random walks on hyperbolic groups")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// integer, free:<rank> or free-product:<m>,<n>.
    #[arg(long, global = true)]
    group: Option<String>,
    /// uniform, or word:p pairs separated by commas.
    #[arg(long, global = true, allow_hyphen_values = true)]
    measure: Option<String>,
    /// Worker threads for the data-parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the JSON artifact here instead of stdout.
    #[arg(long, global = true)]
    json: Option<PathBuf>,
    /// Also write a CSV table.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Log the resolved configuration.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(flatten)]
    params: Params,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Entropy and escape sequences H_n, L_n.
    Walk,
    /// Green function and hitting probability tables.
    Green,
    /// Martin kernels at an interior point or along a ray.
    Martin,
    /// Ancona constant, operator diameter and chain contraction.
    ObstacleVerify,
    /// Harmonic measure on cylinders and transfer-operator pressure.
    Harmonic,
    /// Boundary entropy next to the direct estimator.
    Entropy,
    /// Boundary escape rate next to the direct estimator.
    Escape,
    /// Difference quotients over a random grid of measures.
    LipschitzScan,
    /// Second differences along a segment of measures.
    KinkScan,
    /// Constants over a neighbourhood of a measure.
    Stability,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Walk => "walk",
            Command::Green => "green",
            Command::Martin => "martin",
            Command::ObstacleVerify => "obstacle-verify",
            Command::Harmonic => "harmonic",
            Command::Entropy => "entropy",
            Command::Escape => "escape",
            Command::LipschitzScan => "lipschitz-scan",
            Command::KinkScan => "kink-scan",
            Command::Stability => "stability",
        }
    }
}

/// Everything that determines the results; the digest is taken over this.
#[derive(Serialize)]
struct DigestInput<'a> {
    command: &'a str,
    group: Family,
    measure: &'a MeasureSpec,
    params: &'a Resolved,
}

struct Prepared {
    ctx: Ctx,
    digest: String,
    threads: usize,
}

fn pick_source<T>(name: &str, flag: Option<T>, file: Option<T>, default: T) -> T
where
    T: std::fmt::Debug,
{
    let (v, source) = match (flag, file) {
        (Some(v), _) => (v, "flag"),
        (None, Some(v)) => (v, "file"),
        (None, None) => (default, "default"),
    };
    log::info!("{name} = {v:?} ({source})");
    v
}

fn prepare(cli: &Cli, command: &str) -> Result<Prepared, CliError> {
    let file = match &cli.config {
        Some(path) => Some(config::load_file(path)?),
        None => None,
    };
    let file_params = file.as_ref().map(|f| f.params.clone()).unwrap_or_default();
    let group_flag = cli.group.as_deref().map(config::parse_group).transpose()?;
    let family = pick_source("group", group_flag, file.as_ref().and_then(|f| f.group), Family::Free { rank: 2 });
    let measure_flag = cli.measure.as_deref().map(config::parse_measure).transpose()?;
    let uniform = MeasureSpec {
        uniform: Some(true),
        entries: None,
    };
    let measure = pick_source("measure", measure_flag, file.as_ref().and_then(|f| f.measure.clone()), uniform);
    let r = config::resolve(command, &cli.params, &file_params);
    if commands::needs_seed(command, &r) && r.seed.is_none() {
        return Err(CliError::validation("params.seed", format!("{command} draws random numbers and needs a seed")));
    }
    let threads = pick_source("threads", cli.threads, None, default_threads());
    if threads == 0 {
        return Err(CliError::validation("threads", "must be at least 1"));
    }
    let g = config::build_group(family)?;
    let p = config::build_measure(&g, &measure)?;
    let digest = output::digest(&DigestInput {
        command,
        group: family,
        measure: &measure,
        params: &r,
    });
    let exec = if threads == 1 { Exec::Sequential } else { Exec::Parallel };
    Ok(Prepared {
        ctx: Ctx { g, p, r, exec },
        digest,
        threads,
    })
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[cfg(feature = "parallel")]
fn init_pool(threads: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::warn!("worker pool already set up: {e}");
    }
}

#[cfg(not(feature = "parallel"))]
fn init_pool(_threads: usize) {}

fn output_paths(cli: &Cli) -> (Option<PathBuf>, Option<PathBuf>) {
    let file = cli.config.as_deref().and_then(|p| config::load_file(p).ok());
    let out = file.map(|f| f.output).unwrap_or_default();
    (cli.json.clone().or(out.json), cli.csv.clone().or(out.csv))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let command = cli.command.name();
    let start = Instant::now();
    let prepared = prepare(cli, command)?;
    init_pool(prepared.threads);
    let out = commands::run(command, &prepared.ctx)?;
    let (json_path, csv_path) = output_paths(cli);
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        config_digest: prepared.digest,
        results: out.results,
    };
    output::emit(json_path.as_deref(), &output::pretty(&envelope))?;
    if let Some(csv) = &csv_path {
        output::emit(Some(csv), &out.table.to_csv())?;
    }
    // Run metadata stays out of the artifact so that it is reproducible.
    let meta = json!({
        "schema_version": SCHEMA_VERSION,
        "unix_time": SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        "elapsed_seconds": start.elapsed().as_secs_f64(),
        "threads": prepared.threads,
    });
    match &json_path {
        Some(p) => {
            let mut meta_path = p.clone().into_os_string();
            meta_path.push(".meta.json");
            output::emit(Some(&PathBuf::from(meta_path)), &output::pretty(&meta))?;
        }
        None => log::info!("run metadata: {meta}"),
    }
    Ok(())
}

fn fail(command: &str, err: &CliError, json_path: Option<&std::path::Path>) -> ExitCode {
    let text = output::pretty(&ErrorEnvelope {
        schema_version: SCHEMA_VERSION,
        command,
        error: err,
    });
    if let Some(p) = json_path {
        let _ = std::fs::write(p, &text);
    }
    print!("{text}");
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return fail("", &CliError::validation("args", e.kind().to_string()), None);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (json_path, _) = output_paths(&cli);
            fail(cli.command.name(), &e, json_path.as_deref())
        }
    }
}
