//! Indexed metadata chain.
//!
//! Each block stores its records in a Merkle R-tree whose nodes carry an MBR
//! (continuous attributes), a bloom filter (discrete attributes) and a digest.
//! Block headers repeat the root summaries, and a side skip index summarizes
//! runs of `α^i` blocks so inter-block search can jump over blocks that
//! cannot match. [`cost_model`] holds the analytic cost predictors.

pub mod bloom;
pub mod chain;
pub mod codec;
pub mod cost_model;
pub mod digest;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod mbr;
pub mod query;
pub mod record;
pub mod skip_index;
pub mod tree;

pub use bloom::BloomFilter;
pub use chain::{header_digest, Block, BlockHeader, Chain, ChainFault, Match, QueryStats};
pub use digest::{digest, Digest};
pub use engine::{run_query, Engine};
pub use error::{Error, Result};
pub use mbr::Mbr;
pub use query::{Interval, PreparedQuery, Query};
pub use record::{canonical_decode, canonical_encode, discrete_key, MetadataRecord, Schema};
pub use skip_index::{build_index, rebuild_check, SkipIndex, SkipLevel};
pub use tree::{IntraOptions, MerkleRbTree, NodeKind, TraversalStats, TreeConfig, TreeNode};
