//! Per-block authenticated spatial index.
//!
//! An R-tree bulk loaded with Sort-Tile-Recursive packing where every node
//! carries an MBR over its subtree's continuous coordinates, a bloom filter
//! over its subtree's discrete attribute keys (the OR of its children), and a
//! Merkle digest:
//!
//! ```text
//! leaf:     H(0x00 ‖ record_0 ‖ record_1 ‖ ...)          canonical record bytes
//! internal: H(0x01 ‖ child_digest_0 ‖ ... ‖ mbr ‖ bloom)
//! ```

use serde::{Deserialize, Serialize};

use crate::bloom::{BloomFilter, DEFAULT_BITS, DEFAULT_HASHES};
use crate::codec::Reader;
use crate::digest::{Digest, Hasher};
use crate::error::{Error, Result};
use crate::mbr::Mbr;
use crate::query::{PreparedQuery, Query};
use crate::record::{write_record, MetadataRecord, Schema};

const LEAF_TAG: u8 = 0x00;
const INTERNAL_TAG: u8 = 0x01;
const MAX_DEPTH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub leaf_fanout: usize,
    pub internal_fanout: usize,
    pub bloom_bits: usize,
    pub bloom_hashes: u32,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            leaf_fanout: 4,
            internal_fanout: 4,
            bloom_bits: DEFAULT_BITS,
            bloom_hashes: DEFAULT_HASHES,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.leaf_fanout < 2 || self.internal_fanout < 2 {
            return Err(Error::InvalidConfig(format!(
                "fanouts must be >= 2 (leaf {}, internal {})",
                self.leaf_fanout, self.internal_fanout
            )));
        }
        BloomFilter::new(self.bloom_bits, self.bloom_hashes)?;
        Ok(())
    }

    pub fn empty_bloom(&self) -> BloomFilter {
        BloomFilter::new(self.bloom_bits, self.bloom_hashes).expect("validated config")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Internal(Vec<TreeNode>),
    /// Indices into the owning tree's record list.
    Leaf(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub digest: Digest,
    pub bloom: BloomFilter,
    pub mbr: Mbr,
    pub kind: NodeKind,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }

    fn height(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf(_) => 1,
            NodeKind::Internal(children) => 1 + children[0].height(),
        }
    }

    fn count_nodes(&self) -> (usize, usize) {
        match &self.kind {
            NodeKind::Leaf(_) => (0, 1),
            NodeKind::Internal(children) => children.iter().fold((1, 0), |(i, l), c| {
                let (ci, cl) = c.count_nodes();
                (i + ci, l + cl)
            }),
        }
    }
}

/// Counters gathered while traversing one tree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraversalStats {
    pub internal_visited: u64,
    pub leaf_visited: u64,
    pub bf_checks: u64,
    pub mbr_checks: u64,
}

impl TraversalStats {
    pub fn nodes_visited(&self) -> u64 {
        self.internal_visited + self.leaf_visited
    }

    pub fn add(&mut self, other: &TraversalStats) {
        self.internal_visited += other.internal_visited;
        self.leaf_visited += other.leaf_visited;
        self.bf_checks += other.bf_checks;
        self.mbr_checks += other.mbr_checks;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntraOptions {
    /// Skip subtrees whose bloom filter rules out a discrete condition.
    pub bloom_pruning: bool,
    /// Skip subtrees whose MBR misses the query rectangle.
    pub mbr_pruning: bool,
}

impl Default for IntraOptions {
    fn default() -> Self {
        IntraOptions {
            bloom_pruning: true,
            mbr_pruning: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MerkleRbTree {
    root: TreeNode,
    config: TreeConfig,
    schema: Schema,
    records: Vec<MetadataRecord>,
}

/// Sort-Tile-Recursive grouping of items by their center coordinates.
///
/// Returns groups of item ids of at most `cap` members. Sorting ties fall back
/// to the item id, so the grouping is a pure function of the input order.
fn str_groups(centers: &[Vec<f64>], cap: usize, dims: usize) -> Vec<Vec<usize>> {
    let mut ids: Vec<usize> = (0..centers.len()).collect();
    let mut out = Vec::with_capacity(centers.len().div_ceil(cap));
    if dims == 0 {
        out.extend(ids.chunks(cap).map(<[usize]>::to_vec));
    } else {
        tile(&mut ids, centers, cap, 0, dims, &mut out);
    }
    out
}

fn tile(
    ids: &mut [usize],
    centers: &[Vec<f64>],
    cap: usize,
    axis: usize,
    dims: usize,
    out: &mut Vec<Vec<usize>>,
) {
    if ids.len() <= cap {
        out.push(ids.to_vec());
        return;
    }
    ids.sort_by(|&a, &b| {
        centers[a][axis]
            .total_cmp(&centers[b][axis])
            .then(a.cmp(&b))
    });
    if axis + 1 == dims {
        out.extend(ids.chunks(cap).map(<[usize]>::to_vec));
        return;
    }
    let pages = ids.len().div_ceil(cap);
    let axes_left = (dims - axis) as u32;
    let mut slabs = 1usize;
    while slabs.saturating_pow(axes_left) < pages {
        slabs += 1;
    }
    let slab_len = cap * pages.div_ceil(slabs);
    for slab in ids.chunks_mut(slab_len) {
        tile(slab, centers, cap, axis + 1, dims, out);
    }
}

fn leaf_summary(
    entries: &[usize],
    records: &[MetadataRecord],
    schema: &Schema,
    config: &TreeConfig,
) -> Result<(Mbr, BloomFilter, Digest)> {
    let first = records
        .get(entries[0])
        .ok_or_else(|| Error::Decode(format!("record index {} out of range", entries[0])))?;
    let mut mbr = Mbr::point(&first.continuous)?;
    let mut bloom = config.empty_bloom();
    let mut hasher = Hasher::new();
    hasher.update(&[LEAF_TAG]);
    let mut buf = Vec::new();
    for &i in entries {
        let rec = records
            .get(i)
            .ok_or_else(|| Error::Decode(format!("record index {i} out of range")))?;
        mbr.expand_point(&rec.continuous)?;
        for key in rec.discrete_keys() {
            bloom.insert(&key);
        }
        buf.clear();
        write_record(&mut buf, rec, schema);
        hasher.update(&buf);
    }
    Ok((mbr, bloom, hasher.finish()))
}

fn internal_summary(parts: &[(&Mbr, &BloomFilter, &Digest)]) -> Result<(Mbr, BloomFilter, Digest)> {
    let mut mbr = parts[0].0.clone();
    let mut bloom = parts[0].1.clone();
    for (m, b, _) in &parts[1..] {
        mbr.expand(m)?;
        bloom.union_with(b)?;
    }
    let mut hasher = Hasher::new();
    hasher.update(&[INTERNAL_TAG]);
    for (_, _, d) in parts {
        hasher.update(d.as_bytes());
    }
    hasher.update(&mbr.to_bytes()).update(&bloom.to_bytes());
    Ok((mbr, bloom, hasher.finish()))
}

/// Recomputes a node's digest from its children (or entries) as stored.
pub fn node_digest(node: &TreeNode, tree: &MerkleRbTree) -> Result<Digest> {
    match &node.kind {
        NodeKind::Leaf(entries) => {
            Ok(leaf_summary(entries, &tree.records, &tree.schema, &tree.config)?.2)
        }
        NodeKind::Internal(children) => {
            let mut hasher = Hasher::new();
            hasher.update(&[INTERNAL_TAG]);
            for c in children {
                hasher.update(c.digest.as_bytes());
            }
            hasher
                .update(&node.mbr.to_bytes())
                .update(&node.bloom.to_bytes());
            Ok(hasher.finish())
        }
    }
}

impl MerkleRbTree {
    pub fn build(
        records: Vec<MetadataRecord>,
        schema: &Schema,
        config: &TreeConfig,
    ) -> Result<Self> {
        config.validate()?;
        if records.is_empty() {
            return Err(Error::EmptyInput("a tree needs at least one record"));
        }
        for r in &records {
            r.validate(schema)?;
        }
        let dims = schema.dims();
        let centers: Vec<Vec<f64>> = records.iter().map(|r| r.continuous.clone()).collect();
        let mut level: Vec<TreeNode> = str_groups(&centers, config.leaf_fanout, dims)
            .into_iter()
            .map(|entries| {
                let (mbr, bloom, digest) = leaf_summary(&entries, &records, schema, config)?;
                Ok(TreeNode {
                    digest,
                    bloom,
                    mbr,
                    kind: NodeKind::Leaf(entries),
                })
            })
            .collect::<Result<_>>()?;

        while level.len() > 1 {
            let centers: Vec<Vec<f64>> = level
                .iter()
                .map(|n| {
                    n.mbr
                        .low()
                        .iter()
                        .zip(n.mbr.high())
                        .map(|(l, h)| l + (h - l) / 2.0)
                        .collect()
                })
                .collect();
            let groups = str_groups(&centers, config.internal_fanout, dims);
            let mut slots: Vec<Option<TreeNode>> = level.into_iter().map(Some).collect();
            level = groups
                .into_iter()
                .map(|ids| {
                    let children: Vec<TreeNode> = ids
                        .iter()
                        .map(|&i| slots[i].take().expect("each node grouped once"))
                        .collect();
                    let parts: Vec<_> = children
                        .iter()
                        .map(|c| (&c.mbr, &c.bloom, &c.digest))
                        .collect();
                    let (mbr, bloom, digest) = internal_summary(&parts)?;
                    Ok(TreeNode {
                        digest,
                        bloom,
                        mbr,
                        kind: NodeKind::Internal(children),
                    })
                })
                .collect::<Result<_>>()?;
        }

        Ok(MerkleRbTree {
            root: level.pop().expect("non-empty"),
            config: *config,
            schema: schema.clone(),
            records,
        })
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    /// Mutable access for integrity experiments; [`verify`](Self::verify) catches any edit.
    pub fn root_mut(&mut self) -> &mut TreeNode {
        &mut self.root
    }

    pub fn records_mut(&mut self) -> &mut Vec<MetadataRecord> {
        &mut self.records
    }

    pub fn root_digest(&self) -> Digest {
        self.root.digest
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[MetadataRecord] {
        &self.records
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    pub fn height(&self) -> usize {
        self.root.height()
    }

    /// `(internal, leaf)` node totals.
    pub fn node_counts(&self) -> (usize, usize) {
        self.root.count_nodes()
    }

    /// Records matching `query`, ordered by record index.
    pub fn intra_query(&self, query: &Query) -> Result<Vec<(usize, &MetadataRecord)>> {
        let prepared = PreparedQuery::new(query, &self.schema)?;
        let mut stats = TraversalStats::default();
        let hits = self.query_prepared(&prepared, IntraOptions::default(), &mut stats);
        Ok(hits.into_iter().map(|i| (i, &self.records[i])).collect())
    }

    /// `(visited_internal, visited_leaf)` for the traversal `intra_query` performs.
    pub fn count_node_accesses(&self, query: &Query) -> Result<(u64, u64)> {
        let prepared = PreparedQuery::new(query, &self.schema)?;
        let mut stats = TraversalStats::default();
        self.query_prepared(&prepared, IntraOptions::default(), &mut stats);
        Ok((stats.internal_visited, stats.leaf_visited))
    }

    /// Instrumented traversal returning sorted matching record indices.
    ///
    /// The root is always visited. A child is descended into iff its MBR
    /// intersects the query rectangle and its bloom filter may contain every
    /// discrete key; leaf entries are then re-checked exactly, which removes
    /// bloom false positives.
    pub fn query_prepared(
        &self,
        query: &PreparedQuery,
        opts: IntraOptions,
        stats: &mut TraversalStats,
    ) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&self.root, query, opts, stats, &mut out);
        out.sort_unstable();
        out
    }

    fn visit(
        &self,
        node: &TreeNode,
        query: &PreparedQuery,
        opts: IntraOptions,
        stats: &mut TraversalStats,
        out: &mut Vec<usize>,
    ) {
        match &node.kind {
            NodeKind::Leaf(entries) => {
                stats.leaf_visited += 1;
                out.extend(
                    entries
                        .iter()
                        .copied()
                        .filter(|&i| query.query.matches(&self.records[i])),
                );
            }
            NodeKind::Internal(children) => {
                stats.internal_visited += 1;
                for child in children {
                    if opts.mbr_pruning {
                        stats.mbr_checks += 1;
                        if !child.mbr.intersects_unchecked(&query.mbr) {
                            continue;
                        }
                    }
                    if opts.bloom_pruning && !bloom_admits(&child.bloom, &query.keys, stats) {
                        continue;
                    }
                    self.visit(child, query, opts, stats, out);
                }
            }
        }
    }

    /// Recomputes every summary from the records and checks the result
    /// against both the stored summaries and `expected_root`.
    pub fn verify(&self, expected_root: &Digest) -> bool {
        if self.config.validate().is_err() {
            return false;
        }
        if self
            .records
            .iter()
            .any(|r| r.validate(&self.schema).is_err())
        {
            return false;
        }
        let mut seen = vec![false; self.records.len()];
        if self.check_node(&self.root, &mut seen, 0).is_none() {
            return false;
        }
        seen.iter().all(|&s| s) && self.root.digest == *expected_root
    }

    /// Returns the depth of the leaves under `node`, or `None` on any mismatch.
    fn check_node(&self, node: &TreeNode, seen: &mut [bool], depth: usize) -> Option<usize> {
        if depth > MAX_DEPTH {
            return None;
        }
        let (mbr, bloom, digest, leaf_depth) = match &node.kind {
            NodeKind::Leaf(entries) => {
                if entries.is_empty() {
                    return None;
                }
                for &i in entries {
                    if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                        return None;
                    }
                }
                let (m, b, d) =
                    leaf_summary(entries, &self.records, &self.schema, &self.config).ok()?;
                (m, b, d, depth)
            }
            NodeKind::Internal(children) => {
                if children.is_empty() {
                    return None;
                }
                let mut leaf_depth = None;
                for c in children {
                    let d = self.check_node(c, seen, depth + 1)?;
                    if *leaf_depth.get_or_insert(d) != d {
                        return None;
                    }
                }
                // children already match their recomputation, so their stored
                // summaries can stand in for it
                let parts: Vec<_> = children
                    .iter()
                    .map(|c| (&c.mbr, &c.bloom, &c.digest))
                    .collect();
                let (m, b, d) = internal_summary(&parts).ok()?;
                (m, b, d, leaf_depth?)
            }
        };
        (mbr == node.mbr && bloom == node.bloom && digest == node.digest).then_some(leaf_depth)
    }

    /// Appends the node structure in preorder:
    /// `tag ‖ digest ‖ mbr ‖ bloom ‖ u32 count ‖ (u32 indices | children)`.
    pub fn write_nodes(&self, out: &mut Vec<u8>) {
        fn write(node: &TreeNode, out: &mut Vec<u8>) {
            out.push(if node.is_leaf() {
                LEAF_TAG
            } else {
                INTERNAL_TAG
            });
            out.extend_from_slice(node.digest.as_bytes());
            node.mbr.write_bytes(out);
            node.bloom.write_bytes(out);
            match &node.kind {
                NodeKind::Leaf(entries) => {
                    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
                    for &i in entries {
                        out.extend_from_slice(&(i as u32).to_le_bytes());
                    }
                }
                NodeKind::Internal(children) => {
                    out.extend_from_slice(&(children.len() as u32).to_le_bytes());
                    for c in children {
                        write(c, out);
                    }
                }
            }
        }
        write(&self.root, out);
    }

    /// Inverse of [`write_nodes`](Self::write_nodes). Summaries are taken as
    /// stored; call [`verify`](Self::verify) to check them.
    pub fn read_nodes(
        reader: &mut Reader<'_>,
        records: Vec<MetadataRecord>,
        schema: &Schema,
        config: &TreeConfig,
    ) -> Result<Self> {
        fn read(
            reader: &mut Reader<'_>,
            dims: usize,
            config: &TreeConfig,
            depth: usize,
        ) -> Result<TreeNode> {
            if depth > MAX_DEPTH {
                return Err(Error::Decode("tree too deep".into()));
            }
            let tag = reader.u8()?;
            let digest = reader.digest()?;
            let mbr = Mbr::from_bytes(reader.take(Mbr::byte_len(dims))?, dims)?;
            let bloom = BloomFilter::from_bytes(
                reader.take(BloomFilter::byte_len(config.bloom_bits))?,
                config.bloom_bits,
                config.bloom_hashes,
            )?;
            let count = reader.u32()? as usize;
            if count == 0 {
                return Err(Error::Decode("node without entries".into()));
            }
            let kind = match tag {
                LEAF_TAG => NodeKind::Leaf(
                    (0..count)
                        .map(|_| reader.u32().map(|i| i as usize))
                        .collect::<Result<_>>()?,
                ),
                INTERNAL_TAG => NodeKind::Internal(
                    (0..count)
                        .map(|_| read(reader, dims, config, depth + 1))
                        .collect::<Result<_>>()?,
                ),
                other => return Err(Error::Decode(format!("unknown node tag {other:#x}"))),
            };
            Ok(TreeNode {
                digest,
                bloom,
                mbr,
                kind,
            })
        }
        let root = read(reader, schema.dims(), config, 0)?;
        Ok(MerkleRbTree {
            root,
            config: *config,
            schema: schema.clone(),
            records,
        })
    }
}

pub(crate) fn bloom_admits(
    bloom: &BloomFilter,
    keys: &[Vec<u8>],
    stats: &mut TraversalStats,
) -> bool {
    keys.iter().all(|k| {
        stats.bf_checks += 1;
        bloom.contains(k)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::discrete_key;

    fn schema() -> Schema {
        Schema::new(["year", "age"], ["city"]).unwrap()
    }

    fn rec(id: &str, year: f64, age: f64, city: &str) -> MetadataRecord {
        MetadataRecord::new(
            id,
            vec![year, age],
            [("city".to_string(), city.to_string())],
        )
    }

    fn fixture() -> Vec<MetadataRecord> {
        vec![
            rec("a", 2018., 34., "Pune"),
            rec("b", 2015., 28., "Bangalore"),
            rec("c", 2017., 30., "Pune"),
            rec("d", 2012., 25., "NewDelhi"),
        ]
    }

    fn cfg(f: usize) -> TreeConfig {
        TreeConfig {
            leaf_fanout: f,
            internal_fanout: f,
            ..TreeConfig::default()
        }
    }

    fn linear(records: &[MetadataRecord], q: &Query) -> Vec<usize> {
        records
            .iter()
            .enumerate()
            .filter(|(_, r)| q.matches(r))
            .map(|(i, _)| i)
            .collect()
    }

    #[test]
    fn str_packing_arithmetic() {
        let centers: Vec<Vec<f64>> = (0..16)
            .map(|i| vec![(i % 4) as f64, (i / 4) as f64])
            .collect();
        let groups = str_groups(&centers, 4, 2);
        assert_eq!(groups.len(), 4);
        assert!(groups.iter().all(|g| g.len() == 4));
        // two x-slabs of two columns, each cut into 2x2 tiles
        for g in &groups {
            for axis in [0, 1] {
                let v: Vec<f64> = g.iter().map(|&i| centers[i][axis]).collect();
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(hi - lo, 1.0);
                assert_eq!(lo % 2.0, 0.0);
            }
        }
    }

    #[test]
    fn four_records_two_leaves() {
        let t = MerkleRbTree::build(fixture(), &schema(), &cfg(2)).unwrap();
        assert_eq!(t.height(), 2);
        assert_eq!(t.node_counts(), (1, 2));
    }

    #[test]
    fn single_record_is_leaf_root() {
        let t = MerkleRbTree::build(vec![rec("a", 1., 2., "X")], &schema(), &cfg(4)).unwrap();
        assert!(t.root().is_leaf());
        assert_eq!(t.height(), 1);
        assert_eq!(t.root().mbr, Mbr::point(&[1., 2.]).unwrap());
    }

    #[test]
    fn empty_and_bad_config() {
        assert!(matches!(
            MerkleRbTree::build(vec![], &schema(), &cfg(4)),
            Err(Error::EmptyInput(_))
        ));
        assert!(MerkleRbTree::build(fixture(), &schema(), &cfg(1)).is_err());
    }

    #[test]
    fn root_bloom_holds_every_key() {
        let records: Vec<_> = (0..40)
            .map(|i| {
                rec(
                    &format!("r{i}"),
                    i as f64,
                    (i * 7 % 13) as f64,
                    &format!("c{}", i % 9),
                )
            })
            .collect();
        let t = MerkleRbTree::build(records.clone(), &schema(), &cfg(4)).unwrap();
        for r in &records {
            for k in r.discrete_keys() {
                assert!(t.root().bloom.contains(&k));
            }
        }
    }

    #[test]
    fn fixture_queries() {
        let s = schema();
        let t = MerkleRbTree::build(fixture(), &s, &cfg(2)).unwrap();
        let q = Query::from_named(&s, &[("year", 2016., 2019.)], &[("city", "Pune")]).unwrap();
        let hits: Vec<usize> = t.intra_query(&q).unwrap().iter().map(|h| h.0).collect();
        assert_eq!(hits, vec![0, 2]);
        assert_eq!(hits, linear(&fixture(), &q));

        let q = Query::from_named(&s, &[], &[("city", "Pune")]).unwrap();
        let hits: Vec<usize> = t.intra_query(&q).unwrap().iter().map(|h| h.0).collect();
        assert_eq!(hits, linear(&fixture(), &q));
        assert_eq!(hits, vec![0, 2]);
    }

    #[test]
    fn disjoint_query_only_touches_root() {
        let s = schema();
        let t = MerkleRbTree::build(fixture(), &s, &cfg(2)).unwrap();
        let q = Query::from_named(&s, &[("year", 1900., 1901.)], &[]).unwrap();
        assert!(t.intra_query(&q).unwrap().is_empty());
        assert_eq!(t.count_node_accesses(&q).unwrap(), (1, 0));
    }

    #[test]
    fn full_cover_visits_everything() {
        let s = schema();
        let records: Vec<_> = (0..37)
            .map(|i| rec(&i.to_string(), i as f64, 1., "X"))
            .collect();
        let t = MerkleRbTree::build(records, &s, &cfg(3)).unwrap();
        let q = Query::from_named(&s, &[("year", -1e9, 1e9)], &[]).unwrap();
        let (i, l) = t.count_node_accesses(&q).unwrap();
        assert_eq!((i as usize, l as usize), t.node_counts());
    }

    #[test]
    fn digest_properties() {
        let s = schema();
        let t1 = MerkleRbTree::build(fixture(), &s, &cfg(2)).unwrap();
        let t2 = MerkleRbTree::build(fixture(), &s, &cfg(2)).unwrap();
        assert_eq!(t1.root_digest(), t2.root_digest());
        assert_eq!(node_digest(t1.root(), &t1).unwrap(), t1.root_digest());

        let mut changed = fixture();
        changed[3].discrete.insert("city".into(), "Mumbai".into());
        let t3 = MerkleRbTree::build(changed, &s, &cfg(2)).unwrap();
        assert_ne!(t1.root_digest(), t3.root_digest());

        let mut swapped = t1.clone();
        if let NodeKind::Internal(children) = &mut swapped.root_mut().kind {
            children.swap(0, 1);
        }
        assert_ne!(
            node_digest(swapped.root(), &swapped).unwrap(),
            t1.root_digest()
        );
        assert!(!swapped.verify(&t1.root_digest()));
    }

    #[test]
    fn verify_detects_edits() {
        let s = schema();
        let t = MerkleRbTree::build(fixture(), &s, &cfg(2)).unwrap();
        let root = t.root_digest();
        assert!(t.verify(&root));
        assert!(!t.verify(&Digest::ZERO));

        let mut ulp = t.clone();
        let v = &mut ulp.records_mut()[1].continuous[0];
        *v = f64::from_bits(v.to_bits() + 1);
        assert!(!ulp.verify(&root));

        let mut widened = t.clone();
        let m = &widened.root().mbr;
        let mut low = m.low().to_vec();
        low[0] -= 1.0;
        widened.root_mut().mbr = Mbr::new(low, m.high().to_vec()).unwrap();
        assert!(!widened.verify(&root));
    }

    #[test]
    fn bloom_union_at_every_internal_node() {
        let records: Vec<_> = (0..100)
            .map(|i| {
                rec(
                    &i.to_string(),
                    (i * 31 % 97) as f64,
                    (i % 11) as f64,
                    &format!("c{}", i % 17),
                )
            })
            .collect();
        let t = MerkleRbTree::build(records, &schema(), &cfg(4)).unwrap();
        fn walk(n: &TreeNode) {
            if let NodeKind::Internal(children) = &n.kind {
                let mut acc = children[0].bloom.clone();
                for c in &children[1..] {
                    acc.union_with(&c.bloom).unwrap();
                }
                assert_eq!(acc, n.bloom);
                children.iter().for_each(walk);
            }
        }
        walk(t.root());
    }

    #[test]
    fn node_bytes_roundtrip() {
        let s = schema();
        let t = MerkleRbTree::build(fixture(), &s, &cfg(2)).unwrap();
        let mut bytes = Vec::new();
        t.write_nodes(&mut bytes);
        let mut r = Reader::new(&bytes);
        let back = MerkleRbTree::read_nodes(&mut r, fixture(), &s, t.config()).unwrap();
        r.finish().unwrap();
        assert_eq!(back, t);
        assert!(back.verify(&t.root_digest()));
    }

    #[test]
    fn bloom_pruning_off_same_answer_more_visits() {
        let s = schema();
        let records: Vec<_> = (0..64)
            .map(|i| {
                rec(
                    &i.to_string(),
                    i as f64,
                    (i % 8) as f64,
                    if i == 5 { "Rare" } else { "Common" },
                )
            })
            .collect();
        let t = MerkleRbTree::build(records, &s, &cfg(4)).unwrap();
        let q = Query::from_named(&s, &[], &[("city", "Rare")]).unwrap();
        let p = PreparedQuery::new(&q, &s).unwrap();
        let (mut on, mut off) = (TraversalStats::default(), TraversalStats::default());
        let a = t.query_prepared(&p, IntraOptions::default(), &mut on);
        let b = t.query_prepared(
            &p,
            IntraOptions {
                bloom_pruning: false,
                mbr_pruning: true,
            },
            &mut off,
        );
        assert_eq!(a, vec![5]);
        assert_eq!(a, b);
        assert!(on.nodes_visited() < off.nodes_visited());
        assert!(discrete_key("city", "Rare").is_ok());
    }
}
