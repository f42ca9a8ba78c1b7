#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbchain_core::{Chain, MetadataRecord, Query, Schema, TreeConfig};

pub const CITIES: [&str; 5] = ["Pune", "Bangalore", "NewDelhi", "Chennai", "Kochi"];

pub fn schema() -> Schema {
    Schema::new(["year", "age"], ["city", "edu"]).unwrap()
}

/// Coordinates on a coarse grid so boundary ties are common.
pub fn random_record(rng: &mut ChaCha8Rng, id: usize) -> MetadataRecord {
    let mut discrete = vec![(
        "city".to_string(),
        CITIES[rng.gen_range(0..CITIES.len())].to_string(),
    )];
    if rng.gen_bool(0.7) {
        discrete.push((
            "edu".to_string(),
            ["BSc", "MSc", "PhD"][rng.gen_range(0..3)].to_string(),
        ));
    }
    MetadataRecord::new(
        format!("r{id}"),
        vec![
            rng.gen_range(0..40) as f64 * 0.5,
            rng.gen_range(0..20) as f64,
        ],
        discrete,
    )
}

pub fn random_query(rng: &mut ChaCha8Rng, s: &Schema) -> Query {
    loop {
        let mut ranges = Vec::new();
        let mut eqs = Vec::new();
        let kind = rng.gen_range(0..3);
        if kind != 1 {
            if rng.gen_bool(0.8) {
                let lo = rng.gen_range(0..40) as f64 * 0.5;
                ranges.push(("year", lo, lo + rng.gen_range(0..12) as f64 * 0.5));
            }
            if rng.gen_bool(0.6) {
                let lo = rng.gen_range(0..20) as f64;
                ranges.push(("age", lo, lo + rng.gen_range(0..8) as f64));
            }
        }
        if kind != 2 {
            eqs.push(("city", CITIES[rng.gen_range(0..CITIES.len())]));
            if rng.gen_bool(0.3) {
                eqs.push(("edu", ["BSc", "MSc", "PhD", "None"][rng.gen_range(0..4)]));
            }
        }
        if let Ok(q) = Query::from_named(s, &ranges, &eqs) {
            return q;
        }
    }
}

pub fn random_chain(
    rng: &mut ChaCha8Rng,
    blocks: usize,
    block_size: usize,
    cfg: TreeConfig,
) -> Chain {
    let mut c = Chain::new(schema(), cfg).unwrap();
    let mut id = 0;
    for _ in 0..blocks {
        let recs = (0..block_size)
            .map(|_| {
                id += 1;
                random_record(rng, id)
            })
            .collect();
        c.append_block(recs).unwrap();
    }
    c
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
