use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use rbchain_core::cost_model::{
    measure_bf_checks, measure_node_accesses, predict, CostParams, Prediction,
};
use rbchain_core::ingest::{
    employee_schema, gen_employees, gen_uniform, parse_csv, uniform_schema, CsvMapping, Rejection,
};
use rbchain_core::{
    digest, rebuild_check, run_query, Chain, Digest, Engine, Error, Mbr, MetadataRecord, Query,
    QueryStats, Schema, SkipIndex, TreeConfig,
};
use serde::Serialize;
use serde_json::{json, Map, Value};

/// Bad flags or arguments; maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// The skip index lives next to the chain file.
pub fn index_path(chain_path: &Path) -> PathBuf {
    let mut s = chain_path.as_os_str().to_owned();
    s.push(".skip");
    PathBuf::from(s)
}

/// `name=lo..hi`
pub fn parse_range(s: &str) -> Result<(String, f64, f64)> {
    let (name, span) = s
        .split_once('=')
        .ok_or_else(|| usage(format!("range {s:?}: expected name=lo..hi")))?;
    let (lo, hi) = span
        .split_once("..")
        .ok_or_else(|| usage(format!("range {s:?}: expected name=lo..hi")))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("range {s:?}: {v:?} is not a number")))
    };
    Ok((name.trim().to_string(), num(lo)?, num(hi)?))
}

/// `name=value`
pub fn parse_eq(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() && !v.is_empty() => {
            Ok((k.trim().to_string(), v.to_string()))
        }
        _ => Err(usage(format!("condition {s:?}: expected name=value"))),
    }
}

pub fn build_query(schema: &Schema, ranges: &[String], eqs: &[String]) -> Result<Query> {
    let ranges = ranges
        .iter()
        .map(|r| parse_range(r))
        .collect::<Result<Vec<_>>>()?;
    let eqs = eqs
        .iter()
        .map(|e| parse_eq(e))
        .collect::<Result<Vec<_>>>()?;
    let r: Vec<(&str, f64, f64)> = ranges
        .iter()
        .map(|(n, lo, hi)| (n.as_str(), *lo, *hi))
        .collect();
    let e: Vec<(&str, &str)> = eqs.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    Query::from_named(schema, &r, &e).map_err(|err| usage(err.to_string()))
}

pub enum Source {
    Csv {
        path: PathBuf,
        mapping: CsvMapping,
    },
    Employees {
        n: usize,
        seed: u64,
    },
    /// `n` points in the unit cube with a `tag` attribute over `tags` values.
    Uniform {
        n: usize,
        d: usize,
        tags: usize,
        seed: u64,
    },
}

pub struct BuildOptions {
    pub block_size: usize,
    pub alpha: u64,
    pub tree: TreeConfig,
}

#[derive(Debug)]
pub struct BuildReport {
    pub blocks: usize,
    pub records: usize,
    pub rejected: Vec<Rejection>,
    pub tip: Digest,
    pub index_path: PathBuf,
}

fn load_source(source: &Source) -> Result<(Schema, Vec<MetadataRecord>, Vec<Rejection>)> {
    Ok(match source {
        Source::Csv { path, mapping } => {
            let schema = mapping.schema()?;
            let load = parse_csv(path, mapping, &schema)?;
            (schema, load.records, load.rejected)
        }
        Source::Employees { n, seed } => (employee_schema(), gen_employees(*n, *seed), Vec::new()),
        Source::Uniform { n, d, tags, seed } => {
            if *tags == 0 || *d == 0 {
                return Err(usage("uniform data needs d > 0 and tags > 0"));
            }
            let universe = vec![(
                "tag".to_string(),
                (0..*tags).map(|t| format!("t{t}")).collect(),
            )];
            let schema = uniform_schema(*d, &universe)?;
            let space = Mbr::new(vec![0.0; *d], vec![1.0; *d])?;
            (
                schema,
                gen_uniform(*n, *d, *seed, &space, &universe)?,
                Vec::new(),
            )
        }
    })
}

/// Builds a chain from `source`, writes it to `out` and its index beside it.
pub fn cmd_build(source: &Source, opts: &BuildOptions, out: &Path) -> Result<BuildReport> {
    if opts.block_size == 0 {
        return Err(usage("block size must be positive"));
    }
    let (schema, records, rejected) = load_source(source)?;
    if records.is_empty() {
        return Err(anyhow!("no usable records"));
    }
    let count = records.len();
    let mut chain = Chain::new(schema, opts.tree).map_err(|e| usage(e.to_string()))?;
    chain.append_chunked(records, opts.block_size)?;
    if !chain.verify_chain() {
        return Err(anyhow!("freshly built chain failed verification"));
    }
    let bytes = chain.to_bytes();
    std::fs::write(out, &bytes).with_context(|| format!("writing {}", out.display()))?;
    let index = SkipIndex::build(&chain, opts.alpha).map_err(|e| usage(e.to_string()))?;
    let ipath = index_path(out);
    index.save(&ipath, &digest(&bytes))?;
    Ok(BuildReport {
        blocks: chain.len(),
        records: count,
        rejected,
        tip: chain.tip_digest(),
        index_path: ipath,
    })
}

fn read_chain(path: &Path) -> Result<(Chain, Vec<u8>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let chain = Chain::from_bytes(&bytes)?;
    Ok((chain, bytes))
}

/// Loads the index beside `chain_path`, rebuilding and saving it when missing
/// or stale. Returns whether a rebuild happened.
pub fn load_or_rebuild_index(
    chain_path: &Path,
    chain: &Chain,
    bytes: &[u8],
    alpha: u64,
) -> Result<(SkipIndex, bool)> {
    let ipath = index_path(chain_path);
    let key = digest(bytes);
    let existing = SkipIndex::load(&ipath).ok();
    let alpha = existing.as_ref().map_or(alpha, |(i, _)| i.alpha());
    if let Some((index, k)) = existing {
        if k == key && rebuild_check(chain, &index) {
            return Ok((index, false));
        }
    }
    let index = SkipIndex::build(chain, alpha)?;
    index.save(&ipath, &key)?;
    Ok((index, true))
}

fn attrs_json(schema: &Schema, r: &MetadataRecord) -> Value {
    let mut m = Map::new();
    for (name, v) in schema.continuous_dims().iter().zip(&r.continuous) {
        m.insert(name.clone(), json!(v));
    }
    for (k, v) in &r.discrete {
        m.insert(k.clone(), json!(v));
    }
    Value::Object(m)
}

/// Writes one JSON line per match, then a stats line. Returns the stats.
pub fn cmd_query(
    chain_path: &Path,
    ranges: &[String],
    eqs: &[String],
    engine: Engine,
    alpha: u64,
    out: &mut impl Write,
) -> Result<QueryStats> {
    let (chain, bytes) = read_chain(chain_path)?;
    let query = build_query(chain.schema(), ranges, eqs)?;
    let index = if engine == Engine::Skip {
        let (index, rebuilt) = load_or_rebuild_index(chain_path, &chain, &bytes, alpha)?;
        if rebuilt {
            eprintln!(
                "skip index was missing or stale; rebuilt {}",
                index_path(chain_path).display()
            );
        }
        Some(index)
    } else {
        None
    };
    let mut stats = QueryStats::default();
    let start = Instant::now();
    let hits = run_query(engine, &chain, index.as_ref(), &query, &mut stats)?;
    let wall_ns = start.elapsed().as_nanos() as u64;
    for m in &hits {
        let line = json!({
            "height": m.height,
            "index": m.index,
            "owner_id": m.record.owner_id,
            "attrs": attrs_json(chain.schema(), m.record),
        });
        writeln!(out, "{line}")?;
    }
    let line = json!({
        "blocks_checked": stats.blocks_checked,
        "nodes_visited": stats.nodes_visited,
        "bf_checks": stats.bf_checks,
        "wall_ns": wall_ns,
    });
    writeln!(out, "{line}")?;
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VerifyOutcome {
    Ok {
        blocks: usize,
    },
    /// The chain file is damaged; `height` is the first failing block.
    Block {
        height: u64,
        reason: String,
    },
    /// The chain file is damaged outside any block.
    File(String),
    Index(String),
}

impl VerifyOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, VerifyOutcome::Ok { .. })
    }
}

impl std::fmt::Display for VerifyOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerifyOutcome::Ok { blocks } => {
                write!(f, "ok: {blocks} blocks and skip index verified")
            }
            VerifyOutcome::Block { height, reason } => write!(f, "block {height}: {reason}"),
            VerifyOutcome::File(reason) => write!(f, "chain file: {reason}"),
            VerifyOutcome::Index(reason) => write!(f, "skip index: {reason}"),
        }
    }
}

/// Verifies the chain, then its skip index.
pub fn cmd_verify(chain_path: &Path) -> Result<VerifyOutcome> {
    let bytes =
        std::fs::read(chain_path).with_context(|| format!("reading {}", chain_path.display()))?;
    let chain = match Chain::from_bytes(&bytes) {
        Ok(c) => c,
        Err(Error::MalformedBlock { height, reason }) => {
            return Ok(VerifyOutcome::Block { height, reason })
        }
        Err(e) => return Ok(VerifyOutcome::File(e.to_string())),
    };
    if let Err(fault) = chain.verify_report() {
        return Ok(VerifyOutcome::Block {
            height: fault.height,
            reason: fault.reason,
        });
    }
    let ipath = index_path(chain_path);
    let (index, key) = match SkipIndex::load(&ipath) {
        Ok(v) => v,
        Err(e) => return Ok(VerifyOutcome::Index(format!("{}: {e}", ipath.display()))),
    };
    if key != digest(&bytes) {
        return Ok(VerifyOutcome::Index(format!(
            "{} was built for a different chain file",
            ipath.display()
        )));
    }
    if !rebuild_check(&chain, &index) {
        return Ok(VerifyOutcome::Index(format!(
            "{} does not match a rebuild",
            ipath.display()
        )));
    }
    Ok(VerifyOutcome::Ok {
        blocks: chain.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measured {
    pub node_accesses: f64,
    pub bf_checks: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictReport {
    pub params: CostParams,
    #[serde(flatten)]
    pub prediction: Prediction,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured: Option<Measured>,
}

/// Evaluates the cost model; with `validate = Some((trials, seed))` also runs
/// the Monte Carlo measurements on a matching synthetic tree.
pub fn cmd_predict(params: CostParams, validate: Option<(usize, u64)>) -> Result<PredictReport> {
    let prediction = predict(&params).map_err(|e| usage(e.to_string()))?;
    let measured = match validate {
        None => None,
        Some((trials, seed)) => {
            let whole = |v: f64, what: &str| {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(usage(format!("--validate needs a whole {what}")))
                }
            };
            let n = whole(params.n_block, "n-block")?;
            let config = TreeConfig {
                leaf_fanout: whole(params.leaf_fanout, "leaf fanout")?,
                internal_fanout: whole(params.internal_fanout, "internal fanout")?,
                ..TreeConfig::default()
            };
            let side = params.s.powf(1.0 / params.d as f64);
            let q = params.q_len[0] / side;
            if params.q_len.iter().any(|&l| l != params.q_len[0]) {
                return Err(usage("--validate needs equal query sides"));
            }
            let theta = (params.theta.round() as usize).min(n);
            Some(Measured {
                node_accesses: measure_node_accesses(n, params.d, &config, q, trials, seed)?,
                bf_checks: measure_bf_checks(n, theta, &config, trials, seed)?,
                trials,
            })
        }
    };
    Ok(PredictReport {
        params,
        prediction,
        measured,
    })
}
