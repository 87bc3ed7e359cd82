//! Command-line front end: configuration, run orchestration, result files and
//! the basis cache.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 insufficient
//! working precision, 4 other numerical failure, 5 file-system error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod cache;
pub mod config;
pub mod orders;
pub mod record;
pub mod run;

use config::{FileConfig, Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] oppq_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(oppq_core::Error::InvalidParameter(_)) => 2,
            CliError::Core(e) if e.is_precision_failure() => 3,
            CliError::Core(_) => 4,
            CliError::Io { .. } => 5,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "oppq",
    version,
    about = "Eigenenergy estimates and bounds from moment equations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Tabulate the functional on an energy grid for each order.
    Scan(RunArgs),
    /// Track the local minimum of one state across orders.
    Minima(RunArgs),
    /// Minima plus lower/upper bounds from a cap on the functional.
    Bound(RunArgs),
    /// Inspect or clear the basis cache.
    Cache {
        action: CacheAction,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "OPPQ_CACHE_DIR")]
        cache_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CacheAction {
    Status,
    Clear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RefineArg {
    Golden,
    Derivative,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Working precision in decimal digits.
    #[arg(long)]
    pub digits: Option<u32>,
    /// harmonic, quartic or qzm.
    #[arg(long)]
    pub problem: Option<String>,
    /// Problem parameter, e.g. `field=0.2` or `eps0=0.5` (repeatable).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    /// Expansion orders: `6,7,8`, `6..14` or `10..100:10`.
    #[arg(long)]
    pub orders: Option<String>,
    /// Missing-moment orders (qzm); each runs at its top expansion order.
    #[arg(long = "m-s", conflicts_with = "orders")]
    pub m_s: Option<String>,
    /// Energy window `LO:HI`.
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Grid intervals across the window.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Explicit cap on the functional.
    #[arg(long, conflicts_with = "cap_margin")]
    pub cap: Option<String>,
    /// Cap as `(1 + F) ·` the largest minimum value.
    #[arg(long)]
    pub cap_margin: Option<String>,
    #[arg(long, value_enum)]
    pub refine: Option<RefineArg>,
    /// Output table; the run record and timings go next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "OPPQ_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let over = Overrides {
            problem: self.problem,
            digits: self.digits,
            params: self.params,
            orders: self.orders,
            m_s: self.m_s,
            window: self.window,
            grid_points: self.grid_points,
            cap: self.cap,
            cap_margin: self.cap_margin,
            refine: self.refine.map(|r| match r {
                RefineArg::Golden => "golden".to_string(),
                RefineArg::Derivative => "derivative".to_string(),
            }),
            out: self.out,
            cache_dir: self.cache_dir,
        };
        RunConfig::resolve(file, over)
    }
}

fn cache_command(action: CacheAction, config: Option<PathBuf>, dir: Option<PathBuf>) -> Result<(), CliError> {
    let from_file = match &config {
        Some(path) => FileConfig::load(path)?.cache_dir,
        None => None,
    };
    let dir = dir
        .or(from_file)
        .ok_or_else(|| CliError::Config("no cache directory (--cache-dir or OPPQ_CACHE_DIR)".into()))?;
    let cache = cache::BasisCache::new(dir);
    match action {
        CacheAction::Status => {
            let entries = cache.status()?;
            println!("cache {}", cache.dir().display());
            println!("entries {}", entries.len());
            for e in entries {
                let state = if e.valid { "ok" } else { "corrupt" };
                println!("{} {} {} {}", e.file, e.bytes, state, e.key.unwrap_or_default());
            }
        }
        CacheAction::Clear => {
            let n = cache.clear()?;
            println!("removed {n}");
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        CliCommand::Scan(a) => a.resolve().and_then(|c| run::execute(run::Command::Scan, &c)),
        CliCommand::Minima(a) => a.resolve().and_then(|c| run::execute(run::Command::Minima, &c)),
        CliCommand::Bound(a) => a.resolve().and_then(|c| run::execute(run::Command::Bound, &c)),
        CliCommand::Cache {
            action,
            config,
            cache_dir,
        } => cache_command(action, config, cache_dir),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
