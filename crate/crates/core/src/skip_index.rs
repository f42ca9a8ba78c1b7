//! Deterministic α-ary skip index over block headers.
//!
//! Level `i` at block `b` summarizes heights `[b, b + α^i]` (inclusive): its
//! bloom filter is the OR of those blocks' header filters and its MBR the
//! union of their header MBRs. Block `b` carries levels `0..=floor(log_α(tip - b))`,
//! so no span runs past the tip. The summaries point forward in the chain, so
//! the index lives beside the chain and is rebuilt from headers alone.

use std::path::Path;

use crate::bloom::BloomFilter;
use crate::chain::{Chain, Match, QueryStats};
use crate::codec::Reader;
use crate::digest::Digest;
use crate::error::{Error, Result};
use crate::mbr::Mbr;
use crate::query::{PreparedQuery, Query};
use crate::tree::{bloom_admits, IntraOptions, TraversalStats};

pub const INDEX_MAGIC: &[u8; 4] = b"MRBI";
pub const INDEX_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SkipLevel {
    pub level: u32,
    /// Last covered height, inclusive.
    pub span_end: u64,
    pub bloom: BloomFilter,
    pub mbr: Mbr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkipIndex {
    alpha: u64,
    block_count: u64,
    tip_digest: Digest,
    levels: Vec<Vec<SkipLevel>>,
}

impl SkipIndex {
    pub fn alpha(&self) -> u64 {
        self.alpha
    }

    pub fn block_count(&self) -> u64 {
        self.block_count
    }

    pub fn levels(&self, height: u64) -> &[SkipLevel] {
        self.levels.get(height as usize).map_or(&[], Vec::as_slice)
    }

    pub fn levels_mut(&mut self, height: u64) -> &mut Vec<SkipLevel> {
        &mut self.levels[height as usize]
    }

    /// Index for `chain`, computed by folding block headers.
    pub fn build(chain: &Chain, alpha: u64) -> Result<Self> {
        if alpha < 2 {
            return Err(Error::InvalidParam(format!(
                "alpha must be >= 2, got {alpha}"
            )));
        }
        let mut index = SkipIndex {
            alpha,
            block_count: 0,
            tip_digest: Digest::ZERO,
            levels: Vec::new(),
        };
        index.update(chain)?;
        Ok(index)
    }

    /// Brings the index up to the chain's current tip, computing only levels
    /// whose span reaches blocks appended since the last build.
    pub fn update(&mut self, chain: &Chain) -> Result<()> {
        let n = chain.len() as u64;
        if n < self.block_count {
            return Err(Error::StaleIndex("chain is shorter than the index".into()));
        }
        if self.block_count > 0
            && chain.blocks()[self.block_count as usize - 1]
                .header
                .digest()
                != self.tip_digest
        {
            return Err(Error::StaleIndex(
                "chain diverges from the indexed prefix".into(),
            ));
        }
        if n == 0 {
            return Ok(());
        }
        let tip = n - 1;
        self.levels.resize_with(n as usize, Vec::new);
        for b in 0..n {
            let mut levels = std::mem::take(&mut self.levels[b as usize]);
            self.extend_levels(chain, b, tip, &mut levels);
            self.levels[b as usize] = levels;
        }
        self.block_count = n;
        self.tip_digest = chain.tip_digest();
        Ok(())
    }

    fn extend_levels(&self, chain: &Chain, b: u64, tip: u64, levels: &mut Vec<SkipLevel>) {
        let headers = chain.blocks();
        let (mut bloom, mut mbr, mut covered) = match levels.last() {
            Some(l) => (l.bloom.clone(), l.mbr.clone(), l.span_end),
            None => {
                let h = &headers[b as usize].header;
                (h.block_bf.clone(), h.block_mbr.clone(), b)
            }
        };
        let mut i = levels.len() as u32;
        while let Some(end) = span_end(b, i, self.alpha).filter(|&e| e <= tip) {
            for h in covered + 1..=end {
                let header = &headers[h as usize].header;
                bloom
                    .union_with(&header.block_bf)
                    .expect("chain-wide bloom params");
                mbr.expand(&header.block_mbr).expect("chain-wide dims");
            }
            covered = end;
            levels.push(SkipLevel {
                level: i,
                span_end: end,
                bloom: bloom.clone(),
                mbr: mbr.clone(),
            });
            i += 1;
        }
    }

    fn check_fresh(&self, chain: &Chain) -> Result<()> {
        if self.block_count != chain.len() as u64 {
            return Err(Error::StaleIndex(format!(
                "index covers {} blocks, chain has {}",
                self.block_count,
                chain.len()
            )));
        }
        if self.tip_digest != chain.tip_digest() {
            return Err(Error::StaleIndex("tip digest differs".into()));
        }
        Ok(())
    }

    /// Inter-block search returning exactly what a linear scan would.
    pub fn inter_query<'a>(&self, chain: &'a Chain, query: &Query) -> Result<Vec<Match<'a>>> {
        let prepared = PreparedQuery::new(query, chain.schema())?;
        self.query_prepared(
            chain,
            &prepared,
            IntraOptions::default(),
            &mut QueryStats::default(),
        )
    }

    /// Cursor walk over the chain.
    ///
    /// At cursor `b` the block itself is checked first. Then the smallest
    /// level whose summaries admit the query decides the next cursor:
    /// level 0 moves to `b + 1`; level `i > 0` means `[b, b + α^(i-1)]` holds
    /// nothing, so the walk resumes at `b + α^(i-1) + 1`; if no level admits,
    /// everything up to the largest span's end is skipped.
    pub fn query_prepared<'a>(
        &self,
        chain: &'a Chain,
        query: &PreparedQuery,
        opts: IntraOptions,
        stats: &mut QueryStats,
    ) -> Result<Vec<Match<'a>>> {
        self.check_fresh(chain)?;
        let mut out = Vec::new();
        let n = chain.len() as u64;
        let mut b = 0u64;
        while b < n {
            stats.blocks_checked += 1;
            chain.check_block(b as usize, query, opts, stats, &mut out);

            let levels = self.levels(b);
            let mut passing = None;
            let mut t = TraversalStats::default();
            for level in levels {
                stats.summary_checks += 1;
                if level.mbr.intersects_unchecked(&query.mbr)
                    && bloom_admits(&level.bloom, &query.keys, &mut t)
                {
                    passing = Some(level.level);
                    break;
                }
            }
            stats.bf_checks += t.bf_checks;

            b = match (passing, levels.last()) {
                (_, None) => n,
                (None, Some(largest)) => largest.span_end + 1,
                (Some(0), _) => b + 1,
                (Some(i), _) => b + self.alpha.pow(i - 1) + 1,
            };
        }
        Ok(out)
    }

    pub fn to_bytes(&self, chain_file_digest: &Digest) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.alpha as u32).to_le_bytes());
        out.extend_from_slice(chain_file_digest.as_bytes());
        out.extend_from_slice(&self.block_count.to_le_bytes());
        out.extend_from_slice(self.tip_digest.as_bytes());
        let (dims, m, k) = self.levels.iter().flatten().next().map_or((0, 0, 0), |l| {
            (l.mbr.dims(), l.bloom.bits(), l.bloom.hashes())
        });
        out.extend_from_slice(&(dims as u32).to_le_bytes());
        out.extend_from_slice(&(m as u64).to_le_bytes());
        out.extend_from_slice(&k.to_le_bytes());
        for levels in &self.levels {
            out.extend_from_slice(&(levels.len() as u32).to_le_bytes());
            for l in levels {
                l.mbr.write_bytes(&mut out);
                l.bloom.write_bytes(&mut out);
            }
        }
        out
    }

    /// Returns the index and the chain-file digest it was keyed to.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, Digest)> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != INDEX_MAGIC {
            return Err(Error::Decode("not a skip index file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(Error::Decode(format!(
                "unsupported index version {version}"
            )));
        }
        let alpha = r.u32()? as u64;
        if alpha < 2 {
            return Err(Error::Decode(format!("alpha {alpha} < 2")));
        }
        let key = r.digest()?;
        let block_count = r.u64()?;
        let tip_digest = r.digest()?;
        let dims = r.u32()? as usize;
        let m = r.u64()? as usize;
        let k = r.u32()?;
        let tip = block_count.saturating_sub(1);
        let mut levels = Vec::new();
        for b in 0..block_count {
            let count = r.u32()?;
            let mut row = Vec::new();
            for i in 0..count {
                let span_end = span_end(b, i, alpha)
                    .filter(|&e| e <= tip)
                    .ok_or_else(|| Error::Decode(format!("level {i} at block {b} passes tip")))?;
                let mbr = Mbr::from_bytes(r.take(Mbr::byte_len(dims))?, dims)?;
                let bloom = BloomFilter::from_bytes(r.take(BloomFilter::byte_len(m))?, m, k)?;
                row.push(SkipLevel {
                    level: i,
                    span_end,
                    bloom,
                    mbr,
                });
            }
            levels.push(row);
        }
        r.finish()?;
        Ok((
            SkipIndex {
                alpha,
                block_count,
                tip_digest,
                levels,
            },
            key,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>, chain_file_digest: &Digest) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes(chain_file_digest)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Digest)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// `b + α^i`, or `None` on overflow.
fn span_end(b: u64, i: u32, alpha: u64) -> Option<u64> {
    alpha.checked_pow(i).and_then(|w| b.checked_add(w))
}

pub fn build_index(chain: &Chain, alpha: u64) -> Result<SkipIndex> {
    SkipIndex::build(chain, alpha)
}

/// `true` iff recomputing from the chain's headers reproduces `index` exactly.
pub fn rebuild_check(chain: &Chain, index: &SkipIndex) -> bool {
    SkipIndex::build(chain, index.alpha).is_ok_and(|fresh| &fresh == index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{MetadataRecord, Schema};
    use crate::tree::TreeConfig;

    fn schema() -> Schema {
        Schema::new(["x", "y"], ["tag"]).unwrap()
    }

    /// Block `b` holds points near `(b, b)` tagged `t{b % tags}`, plus `special`
    /// in the listed blocks.
    fn chain(blocks: usize, tags: usize, special: &[usize]) -> Chain {
        let mut c = Chain::new(schema(), TreeConfig::default()).unwrap();
        for b in 0..blocks {
            let recs = (0..5)
                .map(|i| {
                    let tag = if i == 0 && special.contains(&b) {
                        "special".to_string()
                    } else {
                        format!("t{}", b % tags)
                    };
                    MetadataRecord::new(
                        format!("{b}-{i}"),
                        vec![b as f64 + i as f64 * 0.1, b as f64],
                        [("tag".to_string(), tag)],
                    )
                })
                .collect();
            c.append_block(recs).unwrap();
        }
        c
    }

    fn fold(c: &Chain, from: usize, to: usize) -> (BloomFilter, Mbr) {
        let mut bf = c.blocks()[from].header.block_bf.clone();
        let mut m = c.blocks()[from].header.block_mbr.clone();
        for h in from + 1..=to {
            bf = bf.union(&c.blocks()[h].header.block_bf).unwrap();
            m = m.union(&c.blocks()[h].header.block_mbr).unwrap();
        }
        (bf, m)
    }

    #[test]
    fn eight_blocks_alpha_two() {
        let c = chain(8, 3, &[]);
        let idx = build_index(&c, 2).unwrap();
        let spans: Vec<(u32, u64)> = idx
            .levels(0)
            .iter()
            .map(|l| (l.level, l.span_end))
            .collect();
        assert_eq!(spans, vec![(0, 1), (1, 2), (2, 4)]);
        let (bf, m) = fold(&c, 0, 4);
        assert_eq!(idx.levels(0)[2].bloom, bf);
        assert_eq!(idx.levels(0)[2].mbr, m);
        assert!(idx.levels(7).is_empty());
        assert_eq!(idx.levels(6).len(), 1);
    }

    #[test]
    fn every_level_is_a_direct_fold() {
        let c = chain(23, 4, &[3, 17]);
        for alpha in [2, 3, 4] {
            let idx = build_index(&c, alpha).unwrap();
            for b in 0..23u64 {
                for l in idx.levels(b) {
                    let (bf, m) = fold(&c, b as usize, l.span_end as usize);
                    assert_eq!((&l.bloom, &l.mbr), (&bf, &m));
                    assert_eq!(l.span_end, b + alpha.pow(l.level));
                }
                for pair in idx.levels(b).windows(2) {
                    assert!(pair[1].mbr.contains(&pair[0].mbr));
                    assert_eq!(pair[0].bloom.union(&pair[1].bloom).unwrap(), pair[1].bloom);
                }
            }
        }
    }

    #[test]
    fn single_block_and_bad_alpha() {
        let c = chain(1, 1, &[]);
        let idx = build_index(&c, 2).unwrap();
        assert!(idx.levels(0).is_empty());
        assert!(build_index(&c, 1).is_err());
    }

    #[test]
    fn matches_linear_scan() {
        let c = chain(37, 5, &[0, 9, 36]);
        let s = c.schema().clone();
        let queries = [
            Query::from_named(&s, &[], &[("tag", "special")]).unwrap(),
            Query::from_named(&s, &[("x", 10.0, 12.05)], &[]).unwrap(),
            Query::from_named(&s, &[("y", 3.0, 30.0)], &[("tag", "t2")]).unwrap(),
            Query::from_named(&s, &[], &[("tag", "absent")]).unwrap(),
            Query::from_named(&s, &[("x", -5.0, 500.0)], &[]).unwrap(),
        ];
        for alpha in [2, 3, 4] {
            let idx = build_index(&c, alpha).unwrap();
            for q in &queries {
                assert_eq!(idx.inter_query(&c, q).unwrap(), c.linear_scan(q).unwrap());
            }
        }
    }

    #[test]
    fn last_block_match_is_logarithmic() {
        let c = chain(64, 1, &[63]);
        let idx = build_index(&c, 2).unwrap();
        let q = Query::from_named(c.schema(), &[], &[("tag", "special")]).unwrap();
        let p = PreparedQuery::new(&q, c.schema()).unwrap();
        let mut stats = QueryStats::default();
        let hits = idx
            .query_prepared(&c, &p, IntraOptions::default(), &mut stats)
            .unwrap();
        assert_eq!(hits.len(), 1);
        assert!(stats.blocks_checked <= 2 * 6 + 4, "{stats:?}");
        assert!(stats.summary_checks <= 4 * 2 * 6, "{stats:?}");
    }

    #[test]
    fn no_match_jumps_by_largest_span() {
        let c = chain(100, 1, &[]);
        let idx = build_index(&c, 2).unwrap();
        let q = Query::from_named(c.schema(), &[], &[("tag", "special")]).unwrap();
        let p = PreparedQuery::new(&q, c.schema()).unwrap();
        let mut stats = QueryStats::default();
        assert!(idx
            .query_prepared(&c, &p, IntraOptions::default(), &mut stats)
            .unwrap()
            .is_empty());
        // each jump at least halves what remains
        assert!(stats.blocks_checked <= 8, "{stats:?}");
        assert!(stats.summary_checks <= 8 * 8, "{stats:?}");
        assert_eq!(stats.trees_queried, 0);
    }

    #[test]
    fn stale_and_tampered_indexes() {
        let mut c = chain(10, 2, &[]);
        let idx = build_index(&c, 2).unwrap();
        assert!(rebuild_check(&c, &idx));

        let mut shrunk = idx.clone();
        let l = &mut shrunk.levels_mut(0)[1];
        let mut high = l.mbr.high().to_vec();
        high[0] -= 0.5;
        l.mbr = Mbr::new(l.mbr.low().to_vec(), high).unwrap();
        assert!(!rebuild_check(&c, &shrunk));

        let extra: Vec<_> = (0..3)
            .map(|i| MetadataRecord::new(format!("n{i}"), vec![1.0, 2.0], []))
            .collect();
        c.append_block(extra.clone()).unwrap();
        c.append_block(extra).unwrap();
        assert!(!rebuild_check(&c, &idx));
        let q = Query::from_named(c.schema(), &[("x", 0.0, 1.0)], &[]).unwrap();
        assert!(matches!(idx.inter_query(&c, &q), Err(Error::StaleIndex(_))));

        let mut grown = idx.clone();
        grown.update(&c).unwrap();
        assert_eq!(grown, build_index(&c, 2).unwrap());
    }

    #[test]
    fn bytes_roundtrip() {
        let c = chain(13, 3, &[5]);
        let idx = build_index(&c, 3).unwrap();
        let key = Digest([7; 32]);
        let bytes = idx.to_bytes(&key);
        let (back, k) = SkipIndex::from_bytes(&bytes).unwrap();
        assert_eq!(k, key);
        assert_eq!(back, idx);
        assert_eq!(back.to_bytes(&key), bytes);
    }
}
