use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mixrec::harness::{
    run_experiment, sweep, write_records_csv, write_records_jsonl, write_sweep_csv, ExperimentConfig, InstanceMode,
};
use mixrec::occ_engine::{Batch, RowPolicy};
use mixrec::oracle::{Model, Sampling};
use mixrec::recovery::Strategy;
use mixrec::set_families::{build_cff_verified, build_ruff_verified, FamilyConstants, FamilyKind};

#[derive(Parser)]
#[command(name = "mixrec", version, about = "Support recovery experiments for MLC/MLR mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials of one strategy.
    Run {
        #[command(flatten)]
        common: Common,
        /// p-ident:<p>, flip or kruskal:<r>.
        #[arg(long, default_value = "p-ident:2")]
        strategy: String,
        /// Batch size per distinct query: auto or an integer.
        #[arg(long = "T", default_value = "auto")]
        t: String,
        #[arg(long, value_enum, default_value_t = Format::Jsonl)]
        format: Format,
        /// Record wall time per trial (makes output nondeterministic).
        #[arg(long)]
        timings: bool,
    },
    /// Accuracy of the p-identifiable and Jennrich paths across batch sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "T", value_delimiter = ',', default_value = "5,10,15,20,25,30,35,40,45,50")]
        t: Vec<u64>,
        /// p used by the p-identifiable column.
        #[arg(long, default_value_t = 2)]
        p: usize,
    },
    /// Build a set family and check its defining property exactly.
    VerifyFamily {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 2)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        attempts: usize,
        #[arg(long, default_value_t = 4.0)]
        c1: f64,
        #[arg(long, default_value_t = 2.0)]
        c2: f64,
        #[arg(long, default_value_t = 8.0)]
        c3: f64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value_t = ModelArg::Mlc)]
    model: ModelArg,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long = "l", default_value_t = 3)]
    ell: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Union)]
    mode: ModeArg,
    #[arg(long)]
    distinct: bool,
    /// Nonnegative hidden vectors.
    #[arg(long)]
    positive: bool,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SamplingArg::Aggregated)]
    sampling: SamplingArg,
    /// Query every family row instead of only the rows that are read.
    #[arg(long)]
    all_rows: bool,
    #[arg(long, default_value_t = 4.0)]
    c1: f64,
    #[arg(long, default_value_t = 2.0)]
    c2: f64,
    #[arg(long, default_value_t = 8.0)]
    c3: f64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Mlc,
    Mlr,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Union,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Exact,
    Aggregated,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Ruff,
    Cff,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    match s {
        "flip" => Ok(Strategy::FlipIndependent),
        _ => match s.strip_prefix("p-ident:") {
            Some(p) => p
                .parse()
                .map(Strategy::PIdentifiable)
                .map_err(|e| format!("bad p in {s:?}: {e}")),
            None => s.parse(),
        },
    }
}

fn parse_batch(s: &str) -> Result<Batch, String> {
    if s == "auto" {
        return Ok(Batch::Auto);
    }
    s.parse().map(Batch::Fixed).map_err(|e| format!("bad batch size {s:?}: {e}"))
}

impl Common {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            model: match self.model {
                ModelArg::Mlc => Model::Mlc,
                ModelArg::Mlr => Model::Mlr,
            },
            n: self.n,
            ell: self.ell,
            k: self.k,
            eta: self.eta,
            sigma: self.sigma,
            delta: self.delta,
            mode: match self.mode {
                ModeArg::Union => InstanceMode::Union,
                ModeArg::Random => InstanceMode::Random,
            },
            distinct: self.distinct,
            positive: self.positive,
            trials: self.trials,
            seed: self.seed,
            constants: FamilyConstants {
                c1: self.c1,
                c2: self.c2,
                c3: self.c3,
            },
            sampling: match self.sampling {
                SamplingArg::Exact => Sampling::Exact,
                SamplingArg::Aggregated => Sampling::Aggregated,
            },
            row_policy: if self.all_rows { RowPolicy::All } else { RowPolicy::Selected },
            ..Default::default()
        }
    }

    fn sink(&self) -> io::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        })
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn run(cli: Cli) -> Result<(), Failure> {
    let io_err = |e: io::Error| Failure::Runtime(e.to_string());
    match cli.command {
        Command::Run {
            common,
            strategy,
            t,
            format,
            timings,
        } => {
            let mut cfg = common.config();
            cfg.strategy = parse_strategy(&strategy).map_err(Failure::Config)?;
            cfg.batch = parse_batch(&t).map_err(Failure::Config)?;
            cfg.timings = timings;
            let exp = run_experiment(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
            let mut out = common.sink().map_err(io_err)?;
            match format {
                Format::Csv => write_records_csv(&exp.records, &mut out).map_err(|e| Failure::Runtime(e.to_string()))?,
                Format::Jsonl => write_records_jsonl(&exp.records, &mut out).map_err(io_err)?,
            }
            out.flush().map_err(io_err)?;
            let summary = serde_json::to_string(&exp.summary).expect("plain data serializes");
            if common.out.is_some() {
                println!("{summary}");
            } else {
                eprintln!("{summary}");
            }
            Ok(())
        }
        Command::Sweep { common, t, p } => {
            let mut cfg = common.config();
            cfg.strategy = Strategy::PIdentifiable(p);
            let rows = sweep(&cfg, &t).map_err(|e| Failure::Config(e.to_string()))?;
            let mut out = common.sink().map_err(io_err)?;
            write_sweep_csv(&rows, &mut out).map_err(|e| Failure::Runtime(e.to_string()))?;
            out.flush().map_err(io_err)
        }
        Command::VerifyFamily {
            kind,
            n,
            t,
            alpha,
            r,
            seed,
            attempts,
            c1,
            c2,
            c3,
        } => {
            let c = FamilyConstants { c1, c2, c3 };
            let built = match kind {
                Kind::Ruff => build_ruff_verified(n, t, alpha, seed, &c, attempts),
                Kind::Cff => build_cff_verified(n, r, t, seed, &c, attempts),
            };
            let report = match built {
                Ok(f) => {
                    let (name, d) = match f.kind {
                        FamilyKind::Ruff { d, .. } => ("ruff", Some(d)),
                        FamilyKind::Cff { .. } => ("cff", None),
                    };
                    serde_json::json!({"kind": name, "n": f.n, "m": f.m, "d": d, "seed": f.seed, "verified": f.verified})
                }
                Err(e) => return Err(Failure::Config(e.to_string())),
            };
            println!("{report}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
