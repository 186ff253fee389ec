//! Command-line interface.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use ppgas_core::inference::{Config, Method};

use crate::bench::{run_benchmark, BenchConfig};
use crate::ess::compute_ess;
use crate::jsonl::{read_records, write_records};
use crate::lgss::{LgssSpec, Parameters};
use crate::{run_text, HarnessError};

#[derive(Parser, Debug)]
#[command(name = "ppgas", version, about = "Particle inference for a small probabilistic Lisp")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Is,
    Smc,
    Icsmc,
    Pgas,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Is => Method::Importance,
            MethodArg::Smc => Method::Smc,
            MethodArg::Icsmc => Method::Icsmc,
            MethodArg::Pgas => Method::Pgas,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Jsonl,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run inference on a program and write predict records.
    Run {
        program: PathBuf,
        #[arg(long, value_enum, default_value = "smc")]
        method: MethodArg,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        particles: u64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        sweeps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to standard output.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: Format,
        /// Keep the retained particle's previous weight under ancestor sampling.
        #[arg(long)]
        keep_retained_weight: bool,
    },
    /// Effective sample size per target from predict records.
    Ess {
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate the state-space benchmark and compare methods.
    BenchLgss {
        #[arg(long, default_value_t = 50)]
        t: usize,
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        particles: u64,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        sweeps: u64,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "pgas,icsmc")]
        method: Vec<MethodArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        q: f64,
        #[arg(long, default_value_t = 0.01)]
        r: f64,
        /// Fix omega and q at their true values instead of sampling them.
        #[arg(long)]
        fixed: bool,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            program,
            method,
            particles,
            sweeps,
            seed,
            output,
            format: Format::Jsonl,
            keep_retained_weight,
        } => {
            let text = std::fs::read_to_string(&program)?;
            let config = Config {
                particles: particles as usize,
                recompute_retained_weight: !keep_retained_weight,
            };
            let records = run_text(&text, method.into(), &config, sweeps as usize, seed)?;
            let mut out = sink(&output)?;
            write_records(&mut out, &records)?;
            out.flush()?;
        }
        Command::Ess { input, output } => {
            let records = read_records(BufReader::new(File::open(&input)?))?;
            let rows = compute_ess(&records)?;
            let mut out = sink(&output)?;
            for row in &rows {
                serde_json::to_writer(&mut out, row)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
        Command::BenchLgss {
            t,
            d,
            particles,
            sweeps,
            restarts,
            method,
            seed,
            q,
            r,
            fixed,
            threads,
            output,
        } => {
            if t == 0 || d == 0 || restarts == 0 {
                return Err(HarnessError::Usage("--t, --d and --restarts must be positive".into()));
            }
            let mut config = BenchConfig::desk(method.into_iter().map(Method::from).collect(), seed);
            config.spec = LgssSpec::new(d, t, 4.0 * std::f64::consts::PI / t as f64, q, r, seed);
            config.parameters = if fixed { Parameters::Fixed } else { Parameters::Priors };
            config.particles = particles as usize;
            config.sweeps = sweeps as usize;
            config.restarts = restarts;
            if let Some(n) = threads {
                config.threads = n.max(1);
            }
            let report = run_benchmark(&config)?;
            let mut out = sink(&output)?;
            serde_json::to_writer_pretty(&mut out, &report)?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
    }
    Ok(())
}
