//! Benchmark matrix over (transaction total, block size, engine).
//!
//! Each cell builds an employee-like chain, plants the workload's target
//! values, and runs the same query list through every engine. Result sets are
//! compared against the linear scan on every query.

use std::time::Instant;

use anyhow::{bail, ensure, Result};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbchain_core::ingest::{employee_schema, gen_employees, EMPLOYEE_CITIES};
use rbchain_core::{
    build_index, run_query, Chain, Engine, IntraOptions, MetadataRecord, PreparedQuery, Query,
    QueryStats, SkipIndex, TraversalStats, TreeConfig,
};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Workload {
    /// Each query asks for a city value planted in at most 5% of blocks.
    SparseDiscrete,
    /// Narrow join-year windows touching at most 5% of block MBRs.
    SparseRange,
    /// A city value planted in about 10% of every block's records, plus an age window.
    IntraMixed,
    /// Rotates discrete-only, range-only and mixed queries over common values.
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum BenchEngine {
    Linear,
    Header,
    Skip,
    /// Every block's tree, bloom pruning on.
    IntraBloom,
    /// Every block's tree, bloom pruning off.
    IntraNobloom,
}

impl BenchEngine {
    pub const ALL: [BenchEngine; 5] = [
        BenchEngine::Linear,
        BenchEngine::Header,
        BenchEngine::Skip,
        BenchEngine::IntraBloom,
        BenchEngine::IntraNobloom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchEngine::Linear => "linear",
            BenchEngine::Header => "header",
            BenchEngine::Skip => "skip",
            BenchEngine::IntraBloom => "intra-bloom",
            BenchEngine::IntraNobloom => "intra-nobloom",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub tx_totals: Vec<usize>,
    pub block_sizes: Vec<usize>,
    pub alpha: u64,
    pub workload: Workload,
    pub queries: usize,
    pub seed: u64,
    pub engines: Vec<BenchEngine>,
    pub tree: TreeConfig,
    /// Query worker threads per cell. Counters do not depend on this.
    pub workers: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            tx_totals: (3400..=4400).step_by(200).collect(),
            block_sizes: vec![10, 20, 40],
            alpha: 2,
            workload: Workload::Mixed,
            queries: 20,
            seed: 1,
            engines: BenchEngine::ALL.to_vec(),
            tree: TreeConfig::default(),
            workers: 1,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.tx_totals.is_empty(), "no transaction totals");
        ensure!(!self.block_sizes.is_empty(), "no block sizes");
        ensure!(!self.engines.is_empty(), "no engines");
        ensure!(
            self.tx_totals.iter().all(|&t| t > 0),
            "transaction totals must be positive"
        );
        ensure!(
            self.block_sizes.iter().all(|&b| b > 0),
            "block sizes must be positive"
        );
        ensure!(self.queries > 0, "query count must be positive");
        ensure!(self.workers > 0, "worker count must be positive");
        ensure!(self.alpha >= 2, "alpha must be at least 2");
        self.tree.validate()?;
        Ok(())
    }
}

/// One CSV row: a (tx_total, block_size, engine) cell averaged over the workload.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub tx_total: usize,
    pub block_size: usize,
    pub blocks: usize,
    pub alpha: u64,
    pub engine: String,
    pub queries: usize,
    pub mean_wall_ns: f64,
    pub median_wall_ns: f64,
    pub mean_blocks_checked: f64,
    pub mean_nodes_visited: f64,
    pub mean_bf_checks: f64,
    pub mean_matches: f64,
}

/// A built chain with its index and query list.
pub struct Cell {
    pub chain: Chain,
    pub index: SkipIndex,
    pub queries: Vec<Query>,
}

/// Counters and timing for one query through one engine.
#[derive(Clone, Debug)]
pub struct Sample {
    pub hits: Vec<(u64, usize)>,
    pub stats: QueryStats,
    pub wall_ns: u64,
}

fn cell_seed(seed: u64, tx_total: usize, block_size: usize) -> u64 {
    let mut h = seed ^ 0x6a09_e667_f3bc_c908;
    for v in [tx_total as u64, block_size as u64] {
        h = (h ^ v).wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(29);
    }
    h
}

pub fn build_cell(spec: &BenchSpec, tx_total: usize, block_size: usize) -> Result<Cell> {
    let seed = cell_seed(spec.seed, tx_total, block_size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = gen_employees(tx_total, seed);
    let schema = employee_schema();

    let planted = match spec.workload {
        Workload::SparseDiscrete => plant_rare(&mut records, block_size, spec.queries, &mut rng),
        Workload::IntraMixed => {
            plant_sparse(&mut records, block_size, &mut rng);
            Vec::new()
        }
        Workload::SparseRange | Workload::Mixed => Vec::new(),
    };

    let mut chain = Chain::new(schema.clone(), spec.tree)?;
    chain.append_chunked(records, block_size)?;
    let index = build_index(&chain, spec.alpha)?;

    let queries = match spec.workload {
        Workload::SparseDiscrete => planted
            .iter()
            .map(|v| Query::from_named(&schema, &[], &[("city", v.as_str())]))
            .collect::<rbchain_core::Result<Vec<_>>>()?,
        Workload::SparseRange => (0..spec.queries)
            .map(|_| sparse_range_query(&chain, &mut rng))
            .collect::<Result<Vec<_>>>()?,
        Workload::IntraMixed => (0..spec.queries)
            .map(|_| {
                let lo = rng.gen_range(22..=32) as f64;
                Query::from_named(&schema, &[("age", lo, lo + 9.0)], &[("city", SPARSE_CITY)])
            })
            .collect::<rbchain_core::Result<Vec<_>>>()?,
        Workload::Mixed => (0..spec.queries)
            .map(|i| mixed_query(i, &mut rng))
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(Cell {
        chain,
        index,
        queries,
    })
}

pub const SPARSE_CITY: &str = "Sparse";

/// Plants `Rare-j` into one record in each of `max(1, 5% of blocks)` blocks.
fn plant_rare(
    records: &mut [MetadataRecord],
    block_size: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let blocks = records.len().div_ceil(block_size);
    let per_value = (blocks * 5 / 100).max(1);
    let mut used = vec![false; records.len()];
    (0..count)
        .map(|j| {
            let value = format!("Rare-{j}");
            for b in sample(rng, blocks, per_value) {
                let start = b * block_size;
                let end = (start + block_size).min(records.len());
                let free: Vec<usize> = (start..end).filter(|&i| !used[i]).collect();
                if free.is_empty() {
                    continue;
                }
                let i = free[rng.gen_range(0..free.len())];
                used[i] = true;
                records[i].discrete.insert("city".into(), value.clone());
            }
            value
        })
        .collect()
}

/// Gives `max(1, len/10)` records of every block the city `Sparse`.
fn plant_sparse(records: &mut [MetadataRecord], block_size: usize, rng: &mut ChaCha8Rng) {
    for chunk in records.chunks_mut(block_size) {
        let k = (chunk.len() / 10).max(1);
        for i in sample(rng, chunk.len(), k) {
            chunk[i].discrete.insert("city".into(), SPARSE_CITY.into());
        }
    }
}

/// A year window around a random record's join date, halved until it
/// touches at most 5% of block MBRs, plus an age window.
fn sparse_range_query(chain: &Chain, rng: &mut ChaCha8Rng) -> Result<Query> {
    let schema = chain.schema();
    let b = rng.gen_range(0..chain.len());
    let recs = chain.blocks()[b].records();
    let center = recs[rng.gen_range(0..recs.len())].continuous[0];
    let age_lo = rng.gen_range(22..=30) as f64;
    let limit = (chain.len() as f64 * 0.05).floor() as usize;
    let mut half = 7.0 * 0.01;
    for _ in 0..30 {
        let q = Query::from_named(
            schema,
            &[
                ("year", center - half, center + half),
                ("age", age_lo, age_lo + 10.0),
            ],
            &[],
        )?;
        let p = PreparedQuery::new(&q, schema)?;
        let touched = chain
            .blocks()
            .iter()
            .filter(|blk| blk.header.block_mbr.intersects(&p.mbr).unwrap_or(false))
            .count();
        if touched <= limit.max(1) {
            return Ok(q);
        }
        half /= 2.0;
    }
    bail!("could not find a sparse range window")
}

fn mixed_query(i: usize, rng: &mut ChaCha8Rng) -> Result<Query> {
    let schema = employee_schema();
    let city = EMPLOYEE_CITIES[rng.gen_range(0..EMPLOYEE_CITIES.len())].0;
    let y = 2012.0 + rng.gen::<f64>() * 6.5;
    let year = ("year", y, y + 0.5);
    let lo = rng.gen_range(22..=36) as f64;
    let age = ("age", lo, lo + 5.0);
    Ok(match i % 3 {
        0 => Query::from_named(&schema, &[], &[("city", city)])?,
        1 => Query::from_named(&schema, &[year, age], &[])?,
        _ => Query::from_named(&schema, &[year], &[("city", city)])?,
    })
}

/// Opens every block's tree, the intra-block baseline.
pub fn intra_all(
    chain: &Chain,
    query: &PreparedQuery,
    opts: IntraOptions,
    stats: &mut QueryStats,
) -> Vec<(u64, usize)> {
    let mut out = Vec::new();
    for block in chain.blocks() {
        stats.blocks_checked += 1;
        stats.trees_queried += 1;
        let mut t = TraversalStats::default();
        let hits = block.tree.query_prepared(query, opts, &mut t);
        stats.nodes_visited += t.nodes_visited();
        stats.bf_checks += t.bf_checks;
        out.extend(hits.into_iter().map(|i| (block.height(), i)));
    }
    out
}

pub fn run_one(engine: BenchEngine, cell: &Cell, query: &Query) -> Result<Sample> {
    let mut stats = QueryStats::default();
    let start = Instant::now();
    let hits = match engine {
        BenchEngine::Linear | BenchEngine::Header | BenchEngine::Skip => {
            let e = match engine {
                BenchEngine::Linear => Engine::Linear,
                BenchEngine::Header => Engine::Header,
                _ => Engine::Skip,
            };
            run_query(e, &cell.chain, Some(&cell.index), query, &mut stats)?
                .into_iter()
                .map(|m| (m.height, m.index))
                .collect()
        }
        BenchEngine::IntraBloom | BenchEngine::IntraNobloom => {
            let p = PreparedQuery::new(query, cell.chain.schema())?;
            let opts = IntraOptions {
                bloom_pruning: engine == BenchEngine::IntraBloom,
                mbr_pruning: true,
            };
            intra_all(&cell.chain, &p, opts, &mut stats)
        }
    };
    let wall_ns = start.elapsed().as_nanos() as u64;
    Ok(Sample {
        hits,
        stats,
        wall_ns,
    })
}

/// Runs every engine on every query of the cell. `out[e][q]` is engine `e`
/// on query `q`. Fails if any engine disagrees with the linear scan.
pub fn run_cell(cell: &Cell, engines: &[BenchEngine], workers: usize) -> Result<Vec<Vec<Sample>>> {
    let run_query_all = |q: &Query| -> Result<Vec<Sample>> {
        let truth: Vec<(u64, usize)> = cell
            .chain
            .linear_scan(q)?
            .into_iter()
            .map(|m| (m.height, m.index))
            .collect();
        engines
            .iter()
            .map(|&e| {
                let s = run_one(e, cell, q)?;
                ensure!(
                    s.hits == truth,
                    "engine {} disagrees with linear scan",
                    e.name()
                );
                Ok(s)
            })
            .collect()
    };

    let per_query: Vec<Vec<Sample>> = if workers <= 1 {
        cell.queries
            .iter()
            .map(run_query_all)
            .collect::<Result<_>>()?
    } else {
        let chunk = cell.queries.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = cell
                .queries
                .chunks(chunk)
                .map(|qs| {
                    scope.spawn(move || qs.iter().map(run_query_all).collect::<Result<Vec<_>>>())
                })
                .collect();
            let mut all = Vec::with_capacity(cell.queries.len());
            for h in handles {
                all.extend(h.join().expect("bench worker panicked")?);
            }
            Ok::<_, anyhow::Error>(all)
        })?
    };

    let mut by_engine: Vec<Vec<Sample>> = vec![Vec::with_capacity(per_query.len()); engines.len()];
    for samples in per_query {
        for (e, s) in samples.into_iter().enumerate() {
            by_engine[e].push(s);
        }
    }
    Ok(by_engine)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn median(mut xs: Vec<u64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_unstable();
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2] as f64
    } else {
        (xs[n / 2 - 1] as f64 + xs[n / 2] as f64) / 2.0
    }
}

pub fn summarize(
    tx_total: usize,
    block_size: usize,
    cell: &Cell,
    alpha: u64,
    engine: BenchEngine,
    samples: &[Sample],
) -> BenchRow {
    BenchRow {
        tx_total,
        block_size,
        blocks: cell.chain.len(),
        alpha,
        engine: engine.name().to_string(),
        queries: samples.len(),
        mean_wall_ns: mean(samples.iter().map(|s| s.wall_ns as f64)),
        median_wall_ns: median(samples.iter().map(|s| s.wall_ns).collect()),
        mean_blocks_checked: mean(samples.iter().map(|s| s.stats.blocks_checked as f64)),
        mean_nodes_visited: mean(samples.iter().map(|s| s.stats.nodes_visited as f64)),
        mean_bf_checks: mean(samples.iter().map(|s| s.stats.bf_checks as f64)),
        mean_matches: mean(samples.iter().map(|s| s.hits.len() as f64)),
    }
}

/// Runs the full matrix; rows are ordered by tx_total, block size, then engine.
pub fn run_bench(spec: &BenchSpec) -> Result<Vec<BenchRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &tx in &spec.tx_totals {
        for &bs in &spec.block_sizes {
            let cell = build_cell(spec, tx, bs)?;
            let samples = run_cell(&cell, &spec.engines, spec.workers)?;
            for (&e, s) in spec.engines.iter().zip(&samples) {
                rows.push(summarize(tx, bs, &cell, spec.alpha, e, s));
            }
        }
    }
    Ok(rows)
}

pub fn write_csv(rows: &[BenchRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
