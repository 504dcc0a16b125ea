//! `bdris` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bdris::arch::BaselineKind;
use bdris::harness::{
    cmd_baseline, cmd_eval, cmd_sweep, cmd_synth, cmd_train, write_records, Overrides,
    RunConfig, RunOutput, Source,
};
use bdris::optimizer::Variant;
use bdris::physics::ChannelSet;
use bdris::Result;

#[derive(Parser)]
#[command(name = "bdris", version, about = "BD-RIS architecture discovery and optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Codebook bits for the discrete variant.
    #[arg(long = "n-b")]
    n_b: Option<u32>,
    /// Quantizer temperature.
    #[arg(long)]
    tau: Option<f64>,
    /// Series resistance of the lossy branch model (ohm).
    #[arg(long = "r")]
    r: Option<f64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    inner: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            n_b: self.n_b,
            tau: self.tau,
            r: self.r,
            realizations: self.realizations,
            epochs: self.epochs,
            inner: self.inner,
            patience: self.patience,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a channel set.
    Synth {
        #[command(flatten)]
        common: Common,
        /// `ideal` channels also serve the lossy and discrete variants; `mc` draws coupled channels.
        #[arg(long, default_value = "ideal")]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
        /// Also dump the realizations as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Learn an architecture of circuit complexity K_cc jointly with the optimizer.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        channels: PathBuf,
        #[arg(long)]
        variant: Variant,
        #[arg(long = "k-cc")]
        k_cc: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint written by an earlier run with the same settings.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many epochs in this invocation.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Train the optimizer under a fixed reference architecture.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        channels: PathBuf,
        #[arg(long)]
        variant: Variant,
        /// single, tridiagonal, arrowhead, band:Q, stem:Q or fully.
        #[arg(long)]
        kind: BaselineKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One run per K_cc (and per baseline), written as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        channels: PathBuf,
        #[arg(long)]
        variant: Variant,
        #[arg(long = "k-cc", value_delimiter = ',')]
        k_cc: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        baselines: Vec<BaselineKind>,
        /// Run the points concurrently.
        #[arg(long)]
        parallel: bool,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate saved parameters on a channel set.
    Eval {
        #[arg(long)]
        channels: PathBuf,
        #[arg(long)]
        params: PathBuf,
        /// Also print one objective per realization.
        #[arg(long)]
        per_realization: bool,
    },
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| bdris::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            common,
            variant,
            out,
            csv,
        } => {
            let cfg = common.resolve()?;
            let set = cmd_synth(&cfg, variant, &out)?;
            if let Some(path) = csv {
                set.write_csv(create(&path)?)?;
            }
            println!("realizations {} config_hash {}", set.meta.count, set.meta.config_hash);
        }
        Command::Train {
            common,
            channels,
            variant,
            k_cc,
            out,
            resume,
            stop_after,
        } => {
            let cfg = common.resolve()?;
            let set = ChannelSet::read(&channels)?;
            let run = RunOutput {
                dir: Some(out),
                resume,
                stop_after,
            };
            let outcome = cmd_train(&cfg, &set, variant, k_cc, &run)?;
            write_records(&[outcome.record], std::io::stdout())?;
        }
        Command::Baseline {
            common,
            channels,
            variant,
            kind,
            out,
        } => {
            let cfg = common.resolve()?;
            let set = ChannelSet::read(&channels)?;
            let run = RunOutput {
                dir: out,
                ..RunOutput::default()
            };
            let outcome = cmd_baseline(&cfg, &set, variant, kind, &run)?;
            write_records(&[outcome.record], std::io::stdout())?;
        }
        Command::Sweep {
            common,
            channels,
            variant,
            k_cc,
            baselines,
            parallel,
            out,
        } => {
            let cfg = common.resolve()?;
            let set = ChannelSet::read(&channels)?;
            let points: Vec<Source> = k_cc
                .into_iter()
                .map(Source::Learned)
                .chain(baselines.into_iter().map(Source::Baseline))
                .collect();
            if points.is_empty() {
                return Err(bdris::Error::Config("sweep needs --k-cc or --baselines".into()));
            }
            let records = cmd_sweep(&cfg, &set, variant, &points, parallel)?;
            match out {
                Some(path) => write_records(&records, create(&path)?)?,
                None => write_records(&records, std::io::stdout())?,
            }
        }
        Command::Eval {
            channels,
            params,
            per_realization,
        } => {
            let set = ChannelSet::read(&channels)?;
            let (record, values) = cmd_eval(&params, &set)?;
            write_records(&[record], std::io::stdout())?;
            if per_realization {
                for (i, v) in values.iter().enumerate() {
                    println!("{i},{v:e}");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
