//! Conjunctive queries over continuous ranges and discrete equalities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mbr::Mbr;
use crate::record::{discrete_key, MetadataRecord, Schema};

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidQuery(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    /// One slot per schema dimension; `None` leaves the dimension unconstrained.
    pub ranges: Vec<Option<Interval>>,
    pub discrete: Vec<(String, String)>,
}

impl Query {
    /// Builds a query from named conditions, checking names against the schema.
    pub fn from_named(
        schema: &Schema,
        ranges: &[(&str, f64, f64)],
        eqs: &[(&str, &str)],
    ) -> Result<Query> {
        let mut slots: Vec<Option<Interval>> = vec![None; schema.dims()];
        for &(name, lo, hi) in ranges {
            let i = schema
                .dim_index(name)
                .ok_or_else(|| Error::InvalidQuery(format!("unknown dimension {name:?}")))?;
            let iv = Interval::new(lo, hi)?;
            // repeated ranges on one dimension intersect
            slots[i] = Some(match slots[i] {
                None => iv,
                Some(prev) => Interval {
                    lo: prev.lo.max(iv.lo),
                    hi: prev.hi.min(iv.hi),
                },
            });
        }
        let query = Query {
            ranges: slots,
            discrete: eqs
                .iter()
                .map(|(a, v)| (a.to_string(), v.to_string()))
                .collect(),
        };
        query.validate(schema)?;
        Ok(query)
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.ranges.len() != schema.dims() {
            return Err(Error::InvalidQuery(format!(
                "{} range slots for {} dimensions",
                self.ranges.len(),
                schema.dims()
            )));
        }
        for iv in self.ranges.iter().flatten() {
            if iv.lo.is_nan() || iv.hi.is_nan() || iv.lo > iv.hi {
                return Err(Error::InvalidQuery(format!(
                    "empty interval [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        for (attr, _) in &self.discrete {
            if !schema.has_attr(attr) {
                return Err(Error::InvalidQuery(format!("unknown attribute {attr:?}")));
            }
        }
        if !self.has_conditions() {
            return Err(Error::InvalidQuery("query has no conditions".into()));
        }
        Ok(())
    }

    pub fn has_conditions(&self) -> bool {
        !self.discrete.is_empty() || self.ranges.iter().any(Option::is_some)
    }

    pub fn has_ranges(&self) -> bool {
        self.ranges.iter().any(Option::is_some)
    }

    /// Query rectangle with unconstrained dimensions taking the extent of `space`.
    pub fn to_mbr(&self, space: &Mbr) -> Result<Mbr> {
        if space.dims() != self.ranges.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ranges.len(),
                actual: space.dims(),
            });
        }
        let (mut low, mut high) = (space.low().to_vec(), space.high().to_vec());
        for (i, iv) in self.ranges.iter().enumerate() {
            if let Some(iv) = iv {
                if iv.lo > iv.hi {
                    return Err(Error::InvalidQuery(format!(
                        "empty interval [{}, {}]",
                        iv.lo, iv.hi
                    )));
                }
                low[i] = iv.lo;
                high[i] = iv.hi;
            }
        }
        Mbr::new(low, high)
    }

    /// Search rectangle used during traversal: unconstrained dimensions are unbounded.
    pub fn search_mbr(&self) -> Result<Mbr> {
        self.to_mbr(&Mbr::unbounded(self.ranges.len()))
    }

    pub fn discrete_keys(&self) -> Result<Vec<Vec<u8>>> {
        self.discrete
            .iter()
            .map(|(a, v)| discrete_key(a, v))
            .collect()
    }

    /// Exact predicate; the reference every index path must agree with.
    pub fn matches(&self, record: &MetadataRecord) -> bool {
        self.ranges
            .iter()
            .zip(&record.continuous)
            .all(|(iv, &v)| iv.is_none_or(|iv| iv.contains(v)))
            && self
                .discrete
                .iter()
                .all(|(a, v)| record.discrete.get(a) == Some(v))
    }
}

/// Query with its derived search material computed once.
#[derive(Clone, Debug)]
pub struct PreparedQuery {
    pub query: Query,
    pub mbr: Mbr,
    pub keys: Vec<Vec<u8>>,
}

impl PreparedQuery {
    pub fn new(query: &Query, schema: &Schema) -> Result<Self> {
        query.validate(schema)?;
        Ok(PreparedQuery {
            mbr: query.search_mbr()?,
            keys: query.discrete_keys()?,
            query: query.clone(),
        })
    }
}
