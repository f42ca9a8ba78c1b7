//! Analytic query-cost predictors for one block's tree, and Monte Carlo
//! harnesses that measure the same quantities on instrumented traversals.
//!
//! Notation follows the usual R-tree cost model: `d_f`/`d_l` leaf and
//! internal fanout, `N_block` records per block, a sample space
//! `[0, s^(1/d)]^d`, query side lengths `q_len`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{gen_uniform, uniform_schema};
use crate::mbr::Mbr;
use crate::query::{Interval, PreparedQuery, Query};
use crate::record::{MetadataRecord, Schema};
use crate::tree::{IntraOptions, MerkleRbTree, TraversalStats, TreeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub d: usize,
    pub leaf_fanout: f64,
    pub internal_fanout: f64,
    pub n_block: f64,
    /// Volume of the sample space.
    pub s: f64,
    pub q_len: Vec<f64>,
    pub c_access: f64,
    pub c_bf: f64,
    pub theta: f64,
    /// Per-level bloom survival factor; defaults to `theta / n_block`.
    pub f_n: Option<f64>,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParam(what.to_string()));
        if self.d == 0 {
            return bad("d must be positive");
        }
        if self.q_len.len() != self.d {
            return Err(Error::InvalidParam(format!(
                "{} query lengths for d = {}",
                self.q_len.len(),
                self.d
            )));
        }
        let positive = [
            ("leaf_fanout", self.leaf_fanout),
            ("internal_fanout", self.internal_fanout),
            ("n_block", self.n_block),
            ("s", self.s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.internal_fanout <= 1.0 {
            return bad("internal_fanout must exceed 1");
        }
        if self.n_block < self.leaf_fanout {
            return bad("n_block must be at least leaf_fanout");
        }
        let non_negative = [
            ("c_access", self.c_access),
            ("c_bf", self.c_bf),
            ("theta", self.theta),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParam(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.q_len.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return bad("query lengths must be >= 0");
        }
        if self.theta > self.n_block {
            return bad("theta cannot exceed n_block");
        }
        if let Some(f) = self.f_n {
            if !(f.is_finite() && f >= 0.0) {
                return bad("f_n must be >= 0");
            }
        }
        Ok(())
    }

    pub fn f_n(&self) -> f64 {
        self.f_n.unwrap_or(self.theta / self.n_block)
    }

    fn leaf_side(&self) -> f64 {
        (self.s * self.leaf_fanout / self.n_block).powf(1.0 / self.d as f64)
    }

    /// `∏_i (side + q_len[i])`
    fn extended_volume(&self, side: f64) -> f64 {
        self.q_len.iter().map(|q| side + q).product()
    }

    fn level_side(&self, j: usize) -> f64 {
        (self.s / self.internal_fanout.powi(j as i32)).powf(1.0 / self.d as f64)
    }
}

/// Probability that two axis-aligned boxes in unit space overlap:
/// `∏_i (r1[i] + r2[i])`, clamped to `[0, 1]`.
pub fn p_overlap(r1: &[f64], r2: &[f64]) -> Result<f64> {
    if r1.len() != r2.len() {
        return Err(Error::DimensionMismatch {
            expected: r1.len(),
            actual: r2.len(),
        });
    }
    if r1.iter().chain(r2).any(|l| l.is_nan() || *l < 0.0) {
        return Err(Error::InvalidParam("side lengths must be >= 0".into()));
    }
    Ok(r1
        .iter()
        .zip(r2)
        .map(|(a, b)| a + b)
        .product::<f64>()
        .clamp(0.0, 1.0))
}

/// `1 + log_{d_l}(s * d_f / N_block)`.
pub fn tree_height(p: &CostParams) -> f64 {
    1.0 + (p.s * p.leaf_fanout / p.n_block).ln() / p.internal_fanout.ln()
}

/// Height implied by packing: `1 + log_{d_l}(N_block / d_f)`.
pub fn structural_height(p: &CostParams) -> f64 {
    1.0 + (p.n_block / p.leaf_fanout).ln() / p.internal_fanout.ln()
}

/// Integer level count used by the summations, `ceil(structural_height)`, at least 1.
pub fn levels(p: &CostParams) -> usize {
    let h = structural_height(p);
    (h - 1e-9).ceil().max(1.0) as usize
}

/// Height of a built tree.
pub fn actual_height(tree: &MerkleRbTree) -> usize {
    tree.height()
}

/// Expected node accesses per block.
///
/// Leaf term `(N_block / d_f) · ∏((s·d_f/N_block)^(1/d) + q)` (leaf count times
/// per-leaf access probability) plus, for levels `j = 0..=h-2`,
/// `d_l^j · ∏((s/d_l^j)^(1/d) + q)`.
pub fn expected_nodes(p: &CostParams) -> Result<f64> {
    p.validate()?;
    let leaves = p.n_block / p.leaf_fanout * p.extended_volume(p.leaf_side());
    Ok(leaves + internal_terms(p, levels(p)))
}

/// Node accesses with leaf multiplier `d_f` and the [`tree_height`] height,
/// uncorrected; reported next to [`expected_nodes`] for comparison.
pub fn expected_nodes_raw(p: &CostParams) -> Result<f64> {
    p.validate()?;
    let h = tree_height(p).ceil();
    let h = if h.is_finite() && h > 0.0 {
        h as usize
    } else {
        0
    };
    Ok(p.extended_volume(p.leaf_side()) * p.leaf_fanout + internal_terms(p, h))
}

fn internal_terms(p: &CostParams, h: usize) -> f64 {
    (0..h.saturating_sub(1))
        .map(|j| p.internal_fanout.powi(j as i32) * p.extended_volume(p.level_side(j)))
        .sum()
}

pub fn cost_range(p: &CostParams) -> Result<f64> {
    Ok(p.c_access * expected_nodes(p)?)
}

pub fn p_bf(theta: f64, n_block: f64) -> Result<f64> {
    if n_block.is_nan() || n_block <= 0.0 {
        return Err(Error::InvalidParam("n_block must be positive".into()));
    }
    if theta.is_nan() || theta < 0.0 || theta > n_block {
        return Err(Error::InvalidParam(format!(
            "theta {theta} outside [0, {n_block}]"
        )));
    }
    Ok(theta / n_block)
}

/// `C_BF · (d_f/N + Σ_{j=0}^{h-2} d_l^j · d_f · f_n^(h-2-j) / N)`
pub fn cost_discrete(p: &CostParams) -> Result<f64> {
    p.validate()?;
    let h = levels(p);
    let base = p.leaf_fanout / p.n_block;
    let sum: f64 = (0..h.saturating_sub(1))
        .map(|j| p.internal_fanout.powi(j as i32) * base * p.f_n().powi((h - 2 - j) as i32))
        .sum();
    Ok(p.c_bf * (base + sum))
}

/// `C_access · d_f/N · ∏(leaf side + q) + Σ_{j=0}^{h-2} d_l^j · ∏(level side + q) · d_f · f_n^(h-2-j) / N`
///
/// `C_access` scales only the first term.
pub fn cost_total(p: &CostParams) -> Result<f64> {
    p.validate()?;
    let h = levels(p);
    let base = p.leaf_fanout / p.n_block;
    let first = p.c_access * base * p.extended_volume(p.leaf_side());
    let sum: f64 = (0..h.saturating_sub(1))
        .map(|j| {
            p.internal_fanout.powi(j as i32)
                * p.extended_volume(p.level_side(j))
                * base
                * p.f_n().powi((h - 2 - j) as i32)
        })
        .sum();
    Ok(first + sum)
}

/// All predictor outputs for one parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p_overlap: f64,
    pub tree_height: f64,
    pub structural_height: f64,
    pub expected_nodes: f64,
    pub expected_nodes_raw: f64,
    pub cost_range: f64,
    pub p_bf: f64,
    pub cost_discrete: f64,
    pub cost_total: f64,
}

/// Evaluates every predictor. `p_overlap` is taken between the query box and
/// one leaf box, both normalized by the space side.
pub fn predict(p: &CostParams) -> Result<Prediction> {
    p.validate()?;
    let side = p.s.powf(1.0 / p.d as f64);
    let leaf = vec![p.leaf_side() / side; p.d];
    let query: Vec<f64> = p.q_len.iter().map(|q| q / side).collect();
    Ok(Prediction {
        p_overlap: p_overlap(&leaf, &query)?,
        tree_height: tree_height(p),
        structural_height: structural_height(p),
        expected_nodes: expected_nodes(p)?,
        expected_nodes_raw: expected_nodes_raw(p)?,
        cost_range: cost_range(p)?,
        p_bf: p_bf(p.theta, p.n_block)?,
        cost_discrete: cost_discrete(p)?,
        cost_total: cost_total(p)?,
    })
}

/// Mean instrumented node accesses for square range queries of side `q_side`
/// placed uniformly (fully inside) the unit cube, over a tree of `n_block`
/// uniform records.
pub fn measure_node_accesses(
    n_block: usize,
    d: usize,
    config: &TreeConfig,
    q_side: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&q_side) || trials == 0 {
        return Err(Error::InvalidParam("q_side in [0,1] and trials > 0".into()));
    }
    let space = Mbr::new(vec![0.0; d], vec![1.0; d])?;
    let schema = uniform_schema(d, &[])?;
    let records = gen_uniform(n_block, d, seed, &space, &[])?;
    let tree = MerkleRbTree::build(records, &schema, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut total = 0u64;
    for _ in 0..trials {
        let ranges = (0..d)
            .map(|_| {
                let lo = rng.gen::<f64>() * (1.0 - q_side);
                Interval::new(lo, lo + q_side).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        let q = Query {
            ranges,
            discrete: vec![],
        };
        let (i, l) = tree.count_node_accesses(&q)?;
        total += i + l;
    }
    Ok(total as f64 / trials as f64)
}

/// Mean bloom checks for a discrete-only query whose value occurs in `theta`
/// of `n_block` uniform records. Each trial uses a fresh seed.
pub fn measure_bf_checks(
    n_block: usize,
    theta: usize,
    config: &TreeConfig,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if theta > n_block || trials == 0 {
        return Err(Error::InvalidParam(
            "theta <= n_block and trials > 0".into(),
        ));
    }
    let schema = Schema::new(["x0", "x1"], ["tag"])?;
    let space = Mbr::new(vec![0.0; 2], vec![1.0; 2])?;
    let q = Query::from_named(&schema, &[], &[("tag", "target")])?;
    let prepared = PreparedQuery::new(&q, &schema)?;
    let mut total = 0u64;
    for t in 0..trials {
        let s = seed.wrapping_add(t as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut records: Vec<MetadataRecord> = gen_uniform(n_block, 2, s, &space, &[])?;
        let mut order: Vec<usize> = (0..n_block).collect();
        for i in 0..theta {
            let j = rng.gen_range(i..n_block);
            order.swap(i, j);
        }
        for (pos, &i) in order.iter().enumerate() {
            let value = if pos < theta {
                "target".to_string()
            } else {
                format!("v{i}")
            };
            records[i].discrete.insert("tag".into(), value);
        }
        let tree = MerkleRbTree::build(records, &schema, config)?;
        let mut stats = TraversalStats::default();
        tree.query_prepared(&prepared, IntraOptions::default(), &mut stats);
        total += stats.bf_checks;
    }
    Ok(total as f64 / trials as f64)
}
