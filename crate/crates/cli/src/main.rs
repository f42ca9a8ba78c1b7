use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use rbchain_cli::bench::{run_bench, write_csv, BenchEngine, BenchSpec, Workload};
use rbchain_cli::commands::{
    cmd_build, cmd_predict, cmd_query, cmd_verify, BuildOptions, Source, UsageError,
};
use rbchain_core::cost_model::CostParams;
use rbchain_core::ingest::CsvMapping;
use rbchain_core::{Engine, Error, TreeConfig};

#[derive(Parser)]
#[command(
    name = "rbchain",
    version,
    about = "Indexed metadata chain: build, query, verify, bench, predict"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a chain file (and its skip index) from CSV or synthetic data.
    Build(BuildArgs),
    /// Run a conjunctive query; prints NDJSON matches and a stats line.
    Query(QueryArgs),
    /// Check every block and the skip index.
    Verify {
        #[arg(long, env = "RBCHAIN_CHAIN")]
        chain: PathBuf,
    },
    /// Run the benchmark matrix and write CSV.
    Bench(BenchArgs),
    /// Evaluate the cost model and print JSON.
    Predict(PredictArgs),
}

#[derive(Args)]
struct TreeArgs {
    #[arg(long, default_value_t = 4)]
    leaf_fanout: usize,
    #[arg(long, default_value_t = 4)]
    internal_fanout: usize,
    #[arg(long, default_value_t = rbchain_core::bloom::DEFAULT_BITS)]
    bloom_bits: usize,
    #[arg(long, default_value_t = rbchain_core::bloom::DEFAULT_HASHES)]
    bloom_hashes: u32,
}

impl TreeArgs {
    fn config(&self) -> TreeConfig {
        TreeConfig {
            leaf_fanout: self.leaf_fanout,
            internal_fanout: self.internal_fanout,
            bloom_bits: self.bloom_bits,
            bloom_hashes: self.bloom_hashes,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Synthetic {
    Employees,
    Uniform,
}

#[derive(Args)]
struct BuildArgs {
    /// CSV input file.
    #[arg(long, conflicts_with = "synthetic")]
    csv: Option<PathBuf>,
    /// JSON file {"continuous": [..], "discrete": [..], "id": ".."}.
    #[arg(long, requires = "csv", conflicts_with_all = ["continuous", "discrete", "id"])]
    mapping: Option<PathBuf>,
    /// Continuous column, repeatable.
    #[arg(long, requires = "csv")]
    continuous: Vec<String>,
    /// Discrete column, repeatable.
    #[arg(long, requires = "csv")]
    discrete: Vec<String>,
    /// Owner id column; row numbers otherwise.
    #[arg(long, requires = "csv")]
    id: Option<String>,
    #[arg(long, value_enum, required_unless_present = "csv")]
    synthetic: Option<Synthetic>,
    /// Synthetic record count.
    #[arg(long, default_value_t = 4000)]
    records: usize,
    /// Uniform data dimensionality.
    #[arg(long, default_value_t = 2)]
    dims: usize,
    /// Uniform data tag values.
    #[arg(long, default_value_t = 8)]
    tags: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    block_size: usize,
    #[arg(long, default_value_t = 2)]
    alpha: u64,
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long, env = "RBCHAIN_CHAIN")]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, env = "RBCHAIN_CHAIN")]
    chain: PathBuf,
    /// name=lo..hi, repeatable.
    #[arg(long)]
    range: Vec<String>,
    /// name=value, repeatable.
    #[arg(long)]
    eq: Vec<String>,
    #[arg(long, default_value = "skip", value_parser = parse_engine)]
    engine: Engine,
    /// Alpha for an index rebuilt from scratch.
    #[arg(long, default_value_t = 2)]
    alpha: u64,
}

fn parse_engine(s: &str) -> std::result::Result<Engine, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct BenchArgs {
    /// Transaction totals, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = BenchSpec::default().tx_totals)]
    tx: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = BenchSpec::default().block_sizes)]
    block_sizes: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    alpha: u64,
    #[arg(long, value_enum, default_value = "mixed")]
    workload: Workload,
    #[arg(long, default_value_t = 20)]
    queries: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, value_delimiter = ',')]
    engines: Vec<BenchEngine>,
    /// Concurrent query workers per cell.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    tree: TreeArgs,
    /// CSV output; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 4.0)]
    leaf_fanout: f64,
    #[arg(long, default_value_t = 4.0)]
    internal_fanout: f64,
    #[arg(long, default_value_t = 40.0)]
    n_block: f64,
    /// Volume of the sample space.
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Query side lengths, one per dimension or a single value for all.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    q_len: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    c_access: f64,
    #[arg(long, default_value_t = 1.0)]
    c_bf: f64,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long)]
    f_n: Option<f64>,
    /// Also run Monte Carlo measurements with this many trials.
    #[arg(long)]
    validate: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Build(a) => {
            let source = match (&a.csv, a.synthetic) {
                (Some(path), _) => {
                    let mapping = match &a.mapping {
                        Some(m) => CsvMapping::from_json_file(m)?,
                        None => CsvMapping {
                            continuous: a.continuous.clone(),
                            discrete: a.discrete.clone(),
                            id: a.id.clone(),
                        },
                    };
                    Source::Csv {
                        path: path.clone(),
                        mapping,
                    }
                }
                (None, Some(Synthetic::Employees)) => Source::Employees {
                    n: a.records,
                    seed: a.seed,
                },
                (None, Some(Synthetic::Uniform)) => Source::Uniform {
                    n: a.records,
                    d: a.dims,
                    tags: a.tags,
                    seed: a.seed,
                },
                (None, None) => {
                    return Err(UsageError("--csv or --synthetic is required".into()).into())
                }
            };
            let opts = BuildOptions {
                block_size: a.block_size,
                alpha: a.alpha,
                tree: a.tree.config(),
            };
            let report = cmd_build(&source, &opts, &a.out)?;
            for r in &report.rejected {
                eprintln!("skipped line {}: {}", r.line, r.reason);
            }
            eprintln!(
                "{} records in {} blocks; index {}",
                report.records,
                report.blocks,
                report.index_path.display()
            );
            println!("{}", report.tip);
        }
        Command::Query(a) => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            cmd_query(&a.chain, &a.range, &a.eq, a.engine, a.alpha, &mut lock)?;
        }
        Command::Verify { chain } => {
            let outcome = cmd_verify(&chain)?;
            if outcome.is_ok() {
                println!("{outcome}");
            } else {
                eprintln!("verification failed: {outcome}");
                return Ok(ExitCode::from(1));
            }
        }
        Command::Bench(a) => {
            let spec = BenchSpec {
                tx_totals: a.tx,
                block_sizes: a.block_sizes,
                alpha: a.alpha,
                workload: a.workload,
                queries: a.queries,
                seed: a.seed,
                engines: if a.engines.is_empty() {
                    BenchEngine::ALL.to_vec()
                } else {
                    a.engines
                },
                tree: a.tree.config(),
                workers: a.workers,
            };
            spec.validate().map_err(|e| UsageError(e.to_string()))?;
            let rows = run_bench(&spec)?;
            match a.out {
                Some(path) => write_csv(&rows, std::fs::File::create(path)?)?,
                None => write_csv(&rows, std::io::stdout().lock())?,
            }
        }
        Command::Predict(a) => {
            let q_len = if a.q_len.len() == 1 {
                vec![a.q_len[0]; a.d]
            } else {
                a.q_len
            };
            let params = CostParams {
                d: a.d,
                leaf_fanout: a.leaf_fanout,
                internal_fanout: a.internal_fanout,
                n_block: a.n_block,
                s: a.s,
                q_len,
                c_access: a.c_access,
                c_bf: a.c_bf,
                theta: a.theta,
                f_n: a.f_n,
            };
            let report = cmd_predict(params, a.validate.map(|t| (t, a.seed)))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.is::<UsageError>() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Decode(_) | Error::MalformedBlock { .. } | Error::StaleIndex(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
