//! The `ffcnet` command-line tool.
//!
//! Every subcommand reads one [`RunConfig`], applies command-line
//! overrides, validates everything it will touch and only then writes
//! under the output directory.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ffcnet::Precision;

pub mod commands;
pub mod config;
mod error;

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ffcnet", version, about = "Frequency-domain complex CNN: data, training and inspection")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct CommonArgs {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory; every file the command writes goes here.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Dataset root with one folder per class.
    #[arg(long, global = true, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Single-threaded, bit-reproducible numerics.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[arg(long, global = true, value_parser = parse_precision)]
    pub precision: Option<Precision>,
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        _ => Err(format!("expected f32 or f64, got {s:?}")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic dataset (PNG per sample plus manifest.json).
    GenData,
    /// Cache eval-mode patch spectra of the whole dataset.
    Preprocess {
        /// Validate an existing cache file instead of writing one.
        #[arg(long, value_name = "FILE")]
        check: Option<PathBuf>,
    },
    /// Train and keep the best validation checkpoint.
    Train,
    /// Score a checkpoint on one split.
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "SPLIT")]
        split: Option<String>,
    },
    /// Train one model per (K, p, seed) grid point.
    Sweep,
    /// Write per-patch magnitude and phase images of one picture.
    Inspect {
        image: PathBuf,
        /// Put the zero-frequency bin in the middle of each image.
        #[arg(long)]
        centered: bool,
    },
}

impl CommonArgs {
    /// Config file (or defaults) with flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.paths.out = out.clone();
        }
        if let Some(data) = &self.data {
            cfg.paths.data = data.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        if let Some(p) = self.precision {
            cfg.precision = p;
        }
        Ok(cfg)
    }
}

impl Command {
    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Eval { checkpoint, split } => {
                if let Some(c) = checkpoint {
                    cfg.paths.checkpoint = Some(c.clone());
                }
                if let Some(s) = split {
                    cfg.eval.split = s.clone();
                }
            }
            Command::Inspect { centered: true, .. } => cfg.inspect.centered = true,
            _ => {}
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = cli.common.resolve()?;
    cli.command.apply(&mut cfg);
    cfg.validate()?;
    let threads = if cfg.deterministic { 1 } else { cfg.workers };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} workers: {e}")))?;
    pool.install(|| match &cli.command {
        Command::GenData => commands::gen_data(&cfg).map(|_| ()),
        Command::Preprocess { check: Some(path) } => commands::check_cache(path).map(|_| ()),
        Command::Preprocess { check: None } => commands::preprocess(&cfg).map(|_| ()),
        Command::Train => commands::train(&cfg).map(|_| ()),
        Command::Eval { .. } => commands::eval(&cfg).map(|_| ()),
        Command::Sweep => commands::sweep(&cfg).map(|_| ()),
        Command::Inspect { image, .. } => commands::inspect(&cfg, image).map(|_| ()),
    })
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("FFCNET_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("ffcnet").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let cli = parse(&["train", "--seed", "9", "--out", "o", "--precision", "f64", "--deterministic"]);
        let cfg = cli.common.resolve().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.paths.out, PathBuf::from("o"));
        assert_eq!(cfg.precision, Precision::F64);
        assert!(cfg.deterministic);
    }

    #[test]
    fn eval_flags_reach_config() {
        let cli = parse(&["eval", "--checkpoint", "w.ffcw", "--split", "val"]);
        let mut cfg = cli.common.resolve().unwrap();
        cli.command.apply(&mut cfg);
        assert_eq!(cfg.paths.checkpoint, Some(PathBuf::from("w.ffcw")));
        assert_eq!(cfg.eval.split, "val");
    }

    #[test]
    fn bad_usage_is_exit_one_and_help_is_zero() {
        assert_eq!(main_with_args(["ffcnet", "frobnicate"]), 1);
        assert_eq!(main_with_args(["ffcnet", "train", "--precision", "f16"]), 1);
        assert_eq!(main_with_args(["ffcnet", "--help"]), 0);
    }
}
