//! CSV loading and deterministic synthetic data.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mbr::Mbr;
use crate::record::{MetadataRecord, Schema};

/// Which CSV columns feed which record fields.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvMapping {
    pub continuous: Vec<String>,
    #[serde(default)]
    pub discrete: Vec<String>,
    #[serde(default)]
    pub id: Option<String>,
}

impl CsvMapping {
    pub fn schema(&self) -> Result<Schema> {
        Schema::new(self.continuous.clone(), self.discrete.clone())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvLoad {
    pub records: Vec<MetadataRecord>,
    pub rejected: Vec<Rejection>,
}

pub fn parse_csv(path: impl AsRef<Path>, mapping: &CsvMapping, schema: &Schema) -> Result<CsvLoad> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_reader(file, mapping, schema)
}

pub fn parse_csv_reader(
    input: impl std::io::Read,
    mapping: &CsvMapping,
    schema: &Schema,
) -> Result<CsvLoad> {
    if schema.continuous_dims() != mapping.continuous.as_slice()
        || schema.discrete_attrs() != mapping.discrete.as_slice()
    {
        return Err(Error::InvalidSchema(
            "mapping columns must match the schema names and order".into(),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let cont_cols = mapping
        .continuous
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let disc_cols = mapping
        .discrete
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let id_col = mapping.id.as_deref().map(column).transpose()?;

    let mut load = CsvLoad::default();
    for (row, result) in reader.records().enumerate() {
        let rec = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(row as u64 + 2, |p| p.line());
                load.rejected.push(Rejection {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(row as u64 + 2, |p| p.line());
        match row_to_record(&rec, row, &cont_cols, &disc_cols, id_col, mapping, schema) {
            Ok(r) => load.records.push(r),
            Err(reason) => load.rejected.push(Rejection { line, reason }),
        }
    }
    Ok(load)
}

fn row_to_record(
    rec: &csv::StringRecord,
    row: usize,
    cont_cols: &[usize],
    disc_cols: &[usize],
    id_col: Option<usize>,
    mapping: &CsvMapping,
    schema: &Schema,
) -> std::result::Result<MetadataRecord, String> {
    let mut continuous = Vec::with_capacity(cont_cols.len());
    for (&c, name) in cont_cols.iter().zip(&mapping.continuous) {
        let cell = rec
            .get(c)
            .ok_or_else(|| format!("missing cell for {name}"))?;
        let v: f64 = cell
            .parse()
            .map_err(|_| format!("column {name}: {cell:?} is not a number"))?;
        if !v.is_finite() {
            return Err(format!("column {name}: non-finite value"));
        }
        continuous.push(v);
    }
    let mut discrete = BTreeMap::new();
    for (&c, name) in disc_cols.iter().zip(&mapping.discrete) {
        let cell = rec
            .get(c)
            .ok_or_else(|| format!("missing cell for {name}"))?;
        if !cell.is_empty() {
            discrete.insert(name.clone(), cell.to_string());
        }
    }
    let owner_id = match id_col {
        Some(c) => rec.get(c).ok_or("missing id cell")?.to_string(),
        None => row.to_string(),
    };
    let record = MetadataRecord {
        owner_id,
        continuous,
        discrete,
    };
    record.validate(schema).map_err(|e| e.to_string())?;
    Ok(record)
}

/// Schema with dimensions `x0..x{d-1}` and the universe's attribute names.
pub fn uniform_schema(d: usize, universe: &[(String, Vec<String>)]) -> Result<Schema> {
    Schema::new(
        (0..d).map(|i| format!("x{i}")).collect::<Vec<_>>(),
        universe.iter().map(|(a, _)| a.clone()).collect::<Vec<_>>(),
    )
}

/// `n` records uniform in `space`, discrete values uniform over each attribute's values.
pub fn gen_uniform(
    n: usize,
    d: usize,
    seed: u64,
    space: &Mbr,
    universe: &[(String, Vec<String>)],
) -> Result<Vec<MetadataRecord>> {
    if space.dims() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: space.dims(),
        });
    }
    if universe.iter().any(|(_, vals)| vals.is_empty()) {
        return Err(Error::InvalidParam("attribute with no values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let continuous = (0..d)
                .map(|k| {
                    let (lo, hi) = (space.low()[k], space.high()[k]);
                    lo + rng.gen::<f64>() * (hi - lo)
                })
                .collect();
            let discrete = universe
                .iter()
                .map(|(a, vals)| (a.clone(), vals[rng.gen_range(0..vals.len())].clone()))
                .collect();
            MetadataRecord {
                owner_id: format!("g{i}"),
                continuous,
                discrete,
            }
        })
        .collect())
}

pub const EMPLOYEE_CITIES: [(&str, f64); 3] =
    [("Bangalore", 0.48), ("Pune", 0.27), ("New Delhi", 0.25)];

pub fn employee_schema() -> Schema {
    Schema::new(["year", "age"], ["city"]).expect("static schema")
}

/// Employee-like records: join year (fractional, 2012–2019), age 22–41, city.
/// Records come out in join order, the order owners would register in.
pub fn gen_employees(n: usize, seed: u64) -> Vec<MetadataRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut years: Vec<f64> = (0..n).map(|_| 2012.0 + rng.gen::<f64>() * 7.0).collect();
    years.sort_by(f64::total_cmp);
    years
        .into_iter()
        .enumerate()
        .map(|(i, year)| {
            let age = rng.gen_range(22..=41) as f64;
            let mut u: f64 = rng.gen();
            let mut city = EMPLOYEE_CITIES[EMPLOYEE_CITIES.len() - 1].0;
            for (name, w) in EMPLOYEE_CITIES {
                if u < w {
                    city = name;
                    break;
                }
                u -= w;
            }
            MetadataRecord::new(
                format!("emp{i}"),
                vec![year, age],
                [("city".to_string(), city.to_string())],
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping() -> CsvMapping {
        CsvMapping {
            continuous: vec!["year".into(), "age".into()],
            discrete: vec!["city".into()],
            id: None,
        }
    }

    fn parse(text: &str) -> Result<CsvLoad> {
        let m = mapping();
        parse_csv_reader(text.as_bytes(), &m, &m.schema()?)
    }

    #[test]
    fn maps_one_row() {
        let load = parse("year,age,city\n2017,34,Pune\n").unwrap();
        assert_eq!(load.records.len(), 1);
        let r = &load.records[0];
        assert_eq!(r.continuous, vec![2017.0, 34.0]);
        assert_eq!(r.discrete.get("city").map(String::as_str), Some("Pune"));
        assert_eq!(r.owner_id, "0");
    }

    #[test]
    fn header_only() {
        assert!(parse("year,age,city\n").unwrap().records.is_empty());
    }

    #[test]
    fn trims_and_quotes() {
        let load = parse("year , age,city\n 2017 , 34 ,\"New Delhi\"\n").unwrap();
        assert_eq!(load.records[0].discrete["city"], "New Delhi");
    }

    #[test]
    fn bad_row_is_rejected_not_fatal() {
        let mut text = String::from("Education,year,city,age\n");
        for i in 0..100 {
            if i == 41 {
                text.push_str("Bachelors,twenty,Pune,30\n");
            } else {
                text.push_str(&format!("Masters,{},Pune,{}\n", 2012 + i % 7, 22 + i % 20));
            }
        }
        let load = parse(&text).unwrap();
        assert_eq!(load.records.len(), 99);
        assert_eq!(load.rejected.len(), 1);
        assert_eq!(load.rejected[0].line, 43);
        assert!(load.rejected[0].reason.contains("year"));
        // order preserved
        assert_eq!(load.records[41].owner_id, "42");
    }

    #[test]
    fn missing_column_named() {
        match parse("year,city\n2017,Pune\n") {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "age"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn id_column() {
        let m = CsvMapping {
            id: Some("id".into()),
            ..mapping()
        };
        let load = parse_csv_reader(
            "id,year,age,city\nx7,2017,34,Pune\n".as_bytes(),
            &m,
            &m.schema().unwrap(),
        )
        .unwrap();
        assert_eq!(load.records[0].owner_id, "x7");
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        std::fs::write(&path, "year,age,city\n2017,34,Pune\n2015,28,Bangalore\n").unwrap();
        let m = mapping();
        let a = parse_csv(&path, &m, &m.schema().unwrap()).unwrap();
        let b = parse_csv(&path, &m, &m.schema().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 2);
    }

    #[test]
    fn uniform_is_seeded() {
        let space = Mbr::new(vec![0., 0.], vec![1., 1.]).unwrap();
        let uni = vec![("city".to_string(), vec!["A".to_string(), "B".to_string()])];
        let a = gen_uniform(1000, 2, 5, &space, &uni).unwrap();
        assert_eq!(a, gen_uniform(1000, 2, 5, &space, &uni).unwrap());
        assert_ne!(a, gen_uniform(1000, 2, 6, &space, &uni).unwrap());
        assert!(a
            .iter()
            .all(|r| r.continuous.iter().all(|&v| (0.0..=1.0).contains(&v))));
        let schema = uniform_schema(2, &uni).unwrap();
        assert!(a.iter().all(|r| r.validate(&schema).is_ok()));
    }

    #[test]
    fn uniform_mean_near_midpoint() {
        let space = Mbr::new(vec![0., 10.], vec![1., 20.]).unwrap();
        let recs = gen_uniform(10_000, 2, 11, &space, &[]).unwrap();
        for (k, mid) in [(0, 0.5), (1, 15.0)] {
            let mean = recs.iter().map(|r| r.continuous[k]).sum::<f64>() / recs.len() as f64;
            let width = space.high()[k] - space.low()[k];
            assert!((mean - mid).abs() / width < 0.05, "dim {k} mean {mean}");
        }
    }

    #[test]
    fn employees_sorted_and_valid() {
        let recs = gen_employees(500, 1);
        let s = employee_schema();
        assert!(recs.iter().all(|r| r.validate(&s).is_ok()));
        assert!(recs
            .windows(2)
            .all(|w| w[0].continuous[0] <= w[1].continuous[0]));
        assert_eq!(recs, gen_employees(500, 1));
    }
}
