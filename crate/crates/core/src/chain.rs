//! Append-only block store.
//!
//! Every block carries its records, their Merkle R-tree, and a header that
//! repeats the tree root's MBR and bloom filter so whole blocks can be ruled
//! out without opening the tree. Headers are hash-linked.
//!
//! File layout (integers little-endian):
//!
//! ```text
//! "MRBC" ‖ u32 version ‖ u32 json_len ‖ json {schema, config}
//! u64 block_count
//! per block: u64 len ‖ header ‖ per record (u32 len ‖ record) ‖ tree nodes
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bloom::BloomFilter;
use crate::codec::Reader;
use crate::digest::{digest, Digest};
use crate::error::{Error, Result};
use crate::mbr::Mbr;
use crate::query::{PreparedQuery, Query};
use crate::record::{read_record, write_record, MetadataRecord, Schema};
use crate::tree::{bloom_admits, IntraOptions, MerkleRbTree, TraversalStats, TreeConfig};

pub const CHAIN_MAGIC: &[u8; 4] = b"MRBC";
pub const CHAIN_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_digest: Digest,
    pub tree_root: Digest,
    pub block_mbr: Mbr,
    pub block_bf: BloomFilter,
    pub tx_count: u64,
}

impl BlockHeader {
    /// `height ‖ prev ‖ root ‖ mbr ‖ bloom ‖ tx_count`
    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(self.prev_digest.as_bytes());
        out.extend_from_slice(self.tree_root.as_bytes());
        self.block_mbr.write_bytes(out);
        self.block_bf.write_bytes(out);
        out.extend_from_slice(&self.tx_count.to_le_bytes());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_bytes(&mut out);
        out
    }

    pub fn digest(&self) -> Digest {
        digest(&self.to_bytes())
    }

    fn read(reader: &mut Reader<'_>, dims: usize, config: &TreeConfig) -> Result<Self> {
        Ok(BlockHeader {
            height: reader.u64()?,
            prev_digest: reader.digest()?,
            tree_root: reader.digest()?,
            block_mbr: Mbr::from_bytes(reader.take(Mbr::byte_len(dims))?, dims)?,
            block_bf: BloomFilter::from_bytes(
                reader.take(BloomFilter::byte_len(config.bloom_bits))?,
                config.bloom_bits,
                config.bloom_hashes,
            )?,
            tx_count: reader.u64()?,
        })
    }
}

pub fn header_digest(header: &BlockHeader) -> Digest {
    header.digest()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub header: BlockHeader,
    pub tree: MerkleRbTree,
}

impl Block {
    pub fn records(&self) -> &[MetadataRecord] {
        self.tree.records()
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    fn write_bytes(&self, out: &mut Vec<u8>) {
        self.header.write_bytes(out);
        let schema = self.tree.schema();
        let mut buf = Vec::new();
        for r in self.records() {
            buf.clear();
            write_record(&mut buf, r, schema);
            out.extend_from_slice(&(buf.len() as u32).to_le_bytes());
            out.extend_from_slice(&buf);
        }
        self.tree.write_nodes(out);
    }

    fn read(bytes: &[u8], schema: &Schema, config: &TreeConfig) -> Result<Self> {
        let mut reader = Reader::new(bytes);
        let header = BlockHeader::read(&mut reader, schema.dims(), config)?;
        let mut records = Vec::new();
        for _ in 0..header.tx_count {
            let len = reader.u32()? as usize;
            let mut sub = Reader::new(reader.take(len)?);
            records.push(read_record(&mut sub, schema)?);
            sub.finish()?;
        }
        let tree = MerkleRbTree::read_nodes(&mut reader, records, schema, config)?;
        reader.finish()?;
        Ok(Block { header, tree })
    }
}

/// One matching record located in the chain.
#[derive(Clone, Debug, PartialEq)]
pub struct Match<'a> {
    pub height: u64,
    pub index: usize,
    pub record: &'a MetadataRecord,
}

/// Counters for one chain-level query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStats {
    /// Blocks whose header or skip summaries were consulted.
    pub blocks_checked: u64,
    /// Individual summary tests (block headers plus skip levels).
    pub summary_checks: u64,
    /// Blocks whose tree was traversed.
    pub trees_queried: u64,
    pub nodes_visited: u64,
    pub bf_checks: u64,
}

impl QueryStats {
    pub(crate) fn absorb(&mut self, t: &TraversalStats) {
        self.nodes_visited += t.nodes_visited();
        self.bf_checks += t.bf_checks;
    }
}

/// Where and why chain verification failed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainFault {
    pub height: u64,
    pub reason: String,
}

impl std::fmt::Display for ChainFault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "block {}: {}", self.height, self.reason)
    }
}

#[derive(Serialize, Deserialize)]
struct FileMeta {
    schema: Schema,
    config: TreeConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    schema: Schema,
    config: TreeConfig,
    blocks: Vec<Block>,
}

impl Chain {
    pub fn new(schema: Schema, config: TreeConfig) -> Result<Self> {
        schema.validate()?;
        config.validate()?;
        Ok(Chain {
            schema,
            config,
            blocks: Vec::new(),
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut Vec<Block> {
        &mut self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip_digest(&self) -> Digest {
        self.blocks
            .last()
            .map_or(Digest::ZERO, |b| b.header.digest())
    }

    pub fn append_block(&mut self, records: Vec<MetadataRecord>) -> Result<&Block> {
        let tree = MerkleRbTree::build(records, &self.schema, &self.config)?;
        let root = tree.root();
        let header = BlockHeader {
            height: self.blocks.len() as u64,
            prev_digest: self.tip_digest(),
            tree_root: root.digest,
            block_mbr: root.mbr.clone(),
            block_bf: root.bloom.clone(),
            tx_count: tree.record_count() as u64,
        };
        self.blocks.push(Block { header, tree });
        Ok(self.blocks.last().expect("just pushed"))
    }

    /// Appends `records` in consecutive blocks of `block_size` (the last may be short).
    pub fn append_chunked(
        &mut self,
        records: Vec<MetadataRecord>,
        block_size: usize,
    ) -> Result<()> {
        if block_size == 0 {
            return Err(Error::InvalidConfig("block size must be positive".into()));
        }
        let mut it = records.into_iter().peekable();
        while it.peek().is_some() {
            let chunk: Vec<_> = it.by_ref().take(block_size).collect();
            self.append_block(chunk)?;
        }
        Ok(())
    }

    /// Exact filter over every record of every block.
    pub fn linear_scan(&self, query: &Query) -> Result<Vec<Match<'_>>> {
        self.linear_scan_stats(query, &mut QueryStats::default())
    }

    pub fn linear_scan_stats(
        &self,
        query: &Query,
        stats: &mut QueryStats,
    ) -> Result<Vec<Match<'_>>> {
        query.validate(&self.schema)?;
        let mut out = Vec::new();
        for block in &self.blocks {
            stats.blocks_checked += 1;
            out.extend(
                block
                    .records()
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| query.matches(r))
                    .map(|(index, record)| Match {
                        height: block.height(),
                        index,
                        record,
                    }),
            );
        }
        Ok(out)
    }

    /// Checks every block header, opening only trees whose summaries pass.
    pub fn header_scan_query(&self, query: &Query) -> Result<Vec<Match<'_>>> {
        let prepared = PreparedQuery::new(query, &self.schema)?;
        Ok(self.header_scan_prepared(
            &prepared,
            IntraOptions::default(),
            &mut QueryStats::default(),
        ))
    }

    pub fn header_scan_prepared(
        &self,
        query: &PreparedQuery,
        opts: IntraOptions,
        stats: &mut QueryStats,
    ) -> Vec<Match<'_>> {
        let mut out = Vec::new();
        for height in 0..self.blocks.len() {
            stats.blocks_checked += 1;
            self.check_block(height, query, opts, stats, &mut out);
        }
        out
    }

    /// Tests one block's header summaries and, if they pass, queries its tree.
    pub(crate) fn check_block<'a>(
        &'a self,
        height: usize,
        query: &PreparedQuery,
        opts: IntraOptions,
        stats: &mut QueryStats,
        out: &mut Vec<Match<'a>>,
    ) {
        let block = &self.blocks[height];
        stats.summary_checks += 1;
        let mut t = TraversalStats::default();
        let admits = block.header.block_mbr.intersects_unchecked(&query.mbr)
            && bloom_admits(&block.header.block_bf, &query.keys, &mut t);
        if admits {
            stats.trees_queried += 1;
            let hits = block.tree.query_prepared(query, opts, &mut t);
            out.extend(hits.into_iter().map(|index| Match {
                height: height as u64,
                index,
                record: &block.records()[index],
            }));
        }
        stats.absorb(&t);
    }

    pub fn verify_chain(&self) -> bool {
        self.verify_report().is_ok()
    }

    /// Verifies trees, header summaries and hash links; reports the lowest failing height.
    pub fn verify_report(&self) -> std::result::Result<(), ChainFault> {
        let mut prev = Digest::ZERO;
        for (h, block) in self.blocks.iter().enumerate() {
            let fault = |reason: &str| ChainFault {
                height: h as u64,
                reason: reason.to_string(),
            };
            let header = &block.header;
            if header.height != h as u64 {
                return Err(fault("height out of sequence"));
            }
            if header.prev_digest != prev {
                return Err(fault("previous-block digest does not link"));
            }
            if block.tree.schema() != &self.schema || block.tree.config() != &self.config {
                return Err(fault("tree parameters differ from chain"));
            }
            if header.tx_count != block.records().len() as u64 {
                return Err(fault("transaction count mismatch"));
            }
            if !block.tree.verify(&header.tree_root) {
                return Err(fault("tree does not verify against header root"));
            }
            let root = block.tree.root();
            if header.block_mbr != root.mbr || header.block_bf != root.bloom {
                return Err(fault("header summaries differ from tree root"));
            }
            prev = header.digest();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&FileMeta {
            schema: self.schema.clone(),
            config: self.config,
        })
        .expect("metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHAIN_MAGIC);
        out.extend_from_slice(&CHAIN_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.blocks.len() as u64).to_le_bytes());
        let mut buf = Vec::new();
        for block in &self.blocks {
            buf.clear();
            block.write_bytes(&mut buf);
            out.extend_from_slice(&(buf.len() as u64).to_le_bytes());
            out.extend_from_slice(&buf);
        }
        out
    }

    /// Parses a chain file. Block-level failures name the block position.
    /// Contents are not verified; see [`verify_report`](Self::verify_report).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = Reader::new(bytes);
        if reader.take(4)? != CHAIN_MAGIC {
            return Err(Error::Decode("not a chain file (bad magic)".into()));
        }
        let version = reader.u32()?;
        if version != CHAIN_VERSION {
            return Err(Error::Decode(format!(
                "unsupported chain version {version}"
            )));
        }
        let meta_len = reader.u32()? as usize;
        let meta: FileMeta = serde_json::from_slice(reader.take(meta_len)?)?;
        let mut chain = Chain::new(meta.schema, meta.config)?;
        let count = reader.u64()?;
        for height in 0..count {
            let malformed = |e: Error| Error::MalformedBlock {
                height,
                reason: e.to_string(),
            };
            let len = reader.u64().map_err(malformed)? as usize;
            let body = reader.take(len).map_err(malformed)?;
            let block = Block::read(body, &chain.schema, &chain.config).map_err(malformed)?;
            chain.blocks.push(block);
        }
        reader.finish()?;
        Ok(chain)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Chain::from_bytes(&bytes)
    }
}
