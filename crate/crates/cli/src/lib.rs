//! Library behind the `rbchain` binary: chain building, querying,
//! verification, the benchmark matrix and cost-model predictions.

pub mod bench;
pub mod commands;

pub use bench::{run_bench, BenchEngine, BenchRow, BenchSpec, Workload};
pub use commands::{
    cmd_build, cmd_predict, cmd_query, cmd_verify, index_path, BuildOptions, Source, UsageError,
    VerifyOutcome,
};

/// Environment variable naming the default chain file.
pub const CHAIN_ENV: &str = "RBCHAIN_CHAIN";
