//! Uniform entry point over the three inter-block query paths.

use std::str::FromStr;

use crate::chain::{Chain, Match, QueryStats};
use crate::error::{Error, Result};
use crate::query::{PreparedQuery, Query};
use crate::skip_index::SkipIndex;
use crate::tree::IntraOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Engine {
    /// Exact filter over every record.
    Linear,
    /// Every block header, then trees of admitted blocks.
    Header,
    /// Skip-index cursor walk.
    Skip,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Linear, Engine::Header, Engine::Skip];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Linear => "linear",
            Engine::Header => "header",
            Engine::Skip => "skip",
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Engine::Linear),
            "header" => Ok(Engine::Header),
            "skip" => Ok(Engine::Skip),
            other => Err(Error::InvalidParam(format!("unknown engine {other:?}"))),
        }
    }
}

pub fn run_query<'a>(
    engine: Engine,
    chain: &'a Chain,
    index: Option<&SkipIndex>,
    query: &Query,
    stats: &mut QueryStats,
) -> Result<Vec<Match<'a>>> {
    match engine {
        Engine::Linear => chain.linear_scan_stats(query, stats),
        Engine::Header => {
            let p = PreparedQuery::new(query, chain.schema())?;
            Ok(chain.header_scan_prepared(&p, IntraOptions::default(), stats))
        }
        Engine::Skip => {
            let index = index.ok_or_else(|| Error::StaleIndex("no skip index loaded".into()))?;
            let p = PreparedQuery::new(query, chain.schema())?;
            index.query_prepared(chain, &p, IntraOptions::default(), stats)
        }
    }
}
