//! Schemas, metadata records and their canonical byte encoding.
//!
//! Layout of an encoded record:
//!
//! ```text
//! u32 LE len ‖ owner_id
//! f64 LE      per continuous dimension, schema order
//! u32 LE len ‖ value   per discrete attribute, schema order (len 0 = absent)
//! ```

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KEY_SEPARATOR: char = '=';

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    continuous_dims: Vec<String>,
    discrete_attrs: Vec<String>,
}

impl Schema {
    pub fn new<S: Into<String>>(
        continuous_dims: impl IntoIterator<Item = S>,
        discrete_attrs: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let schema = Schema {
            continuous_dims: continuous_dims.into_iter().map(Into::into).collect(),
            discrete_attrs: discrete_attrs.into_iter().map(Into::into).collect(),
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Checks name rules; also used after deserializing.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for name in self.continuous_dims.iter().chain(&self.discrete_attrs) {
            if name.is_empty() {
                return Err(Error::InvalidSchema("empty name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate name {name:?}")));
            }
        }
        for attr in &self.discrete_attrs {
            if attr.contains(KEY_SEPARATOR) {
                return Err(Error::InvalidAttribute(attr.clone()));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.continuous_dims.len()
    }

    pub fn continuous_dims(&self) -> &[String] {
        &self.continuous_dims
    }

    pub fn discrete_attrs(&self) -> &[String] {
        &self.discrete_attrs
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.continuous_dims.iter().position(|d| d == name)
    }

    pub fn has_attr(&self, name: &str) -> bool {
        self.discrete_attrs.iter().any(|a| a == name)
    }
}

/// One data owner's published metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub owner_id: String,
    pub continuous: Vec<f64>,
    pub discrete: BTreeMap<String, String>,
}

impl MetadataRecord {
    pub fn new(
        owner_id: impl Into<String>,
        continuous: Vec<f64>,
        discrete: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        MetadataRecord {
            owner_id: owner_id.into(),
            continuous,
            discrete: discrete.into_iter().collect(),
        }
    }

    /// Empty discrete values are rejected: the encoding reserves length 0 for "absent".
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.continuous.len() != schema.dims() {
            return Err(Error::InvalidRecord(format!(
                "{}: {} continuous values for {} dimensions",
                self.owner_id,
                self.continuous.len(),
                schema.dims()
            )));
        }
        if let Some(v) = self.continuous.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord(format!(
                "{}: non-finite value {v}",
                self.owner_id
            )));
        }
        for (attr, value) in &self.discrete {
            if !schema.has_attr(attr) {
                return Err(Error::InvalidRecord(format!(
                    "{}: unknown attribute {attr:?}",
                    self.owner_id
                )));
            }
            if value.is_empty() {
                return Err(Error::InvalidRecord(format!(
                    "{}: empty value for {attr:?}",
                    self.owner_id
                )));
            }
        }
        Ok(())
    }

    /// Bloom keys for every discrete attribute this record carries.
    pub fn discrete_keys(&self) -> impl Iterator<Item = Vec<u8>> + '_ {
        self.discrete
            .iter()
            .map(|(a, v)| discrete_key_unchecked(a, v))
    }
}

/// Bloom-filter key for one attribute/value pair: UTF-8 `attr=value`.
pub fn discrete_key(attr: &str, value: &str) -> Result<Vec<u8>> {
    if attr.is_empty() || attr.contains(KEY_SEPARATOR) {
        return Err(Error::InvalidAttribute(attr.to_string()));
    }
    Ok(discrete_key_unchecked(attr, value))
}

fn discrete_key_unchecked(attr: &str, value: &str) -> Vec<u8> {
    let mut key = Vec::with_capacity(attr.len() + value.len() + 1);
    key.extend_from_slice(attr.as_bytes());
    key.push(KEY_SEPARATOR as u8);
    key.extend_from_slice(value.as_bytes());
    key
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn canonical_encode(record: &MetadataRecord, schema: &Schema) -> Result<Vec<u8>> {
    record.validate(schema)?;
    let mut out = Vec::new();
    write_record(&mut out, record, schema);
    Ok(out)
}

/// Appends the encoding of an already validated record.
pub(crate) fn write_record(out: &mut Vec<u8>, record: &MetadataRecord, schema: &Schema) {
    put_str(out, &record.owner_id);
    for v in &record.continuous {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for attr in schema.discrete_attrs() {
        put_str(out, record.discrete.get(attr).map_or("", String::as_str));
    }
}

pub fn canonical_decode(bytes: &[u8], schema: &Schema) -> Result<MetadataRecord> {
    let mut reader = crate::codec::Reader::new(bytes);
    let record = read_record(&mut reader, schema)?;
    reader.finish()?;
    Ok(record)
}

pub(crate) fn read_record(
    reader: &mut crate::codec::Reader<'_>,
    schema: &Schema,
) -> Result<MetadataRecord> {
    let owner_id = reader.string()?;
    let continuous = (0..schema.dims())
        .map(|_| reader.f64())
        .collect::<Result<Vec<_>>>()?;
    let mut discrete = BTreeMap::new();
    for attr in schema.discrete_attrs() {
        let value = reader.string()?;
        if !value.is_empty() {
            discrete.insert(attr.clone(), value);
        }
    }
    let record = MetadataRecord {
        owner_id,
        continuous,
        discrete,
    };
    record.validate(schema)?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(["year", "age"], ["city", "gender"]).unwrap()
    }

    fn pune() -> MetadataRecord {
        MetadataRecord::new(
            "u1",
            vec![2018.0, 34.0],
            [("city".to_string(), "Pune".to_string())],
        )
    }

    #[test]
    fn schema_rules() {
        assert!(Schema::new(["a", "a"], Vec::<&str>::new()).is_err());
        assert!(Schema::new(["a"], ["a"]).is_err());
        assert!(Schema::new([""], Vec::<&str>::new()).is_err());
        assert!(Schema::new(["x"], ["a=b"]).is_err());
        assert_eq!(schema().dim_index("age"), Some(1));
    }

    #[test]
    fn discrete_key_examples() {
        assert_eq!(discrete_key("city", "Pune").unwrap(), b"city=Pune".to_vec());
        assert_eq!(
            discrete_key("city", "Pune").unwrap(),
            discrete_key("city", "Pune").unwrap()
        );
        assert!(discrete_key("a", "b=c").is_ok());
        assert!(matches!(
            discrete_key("a=b", "c"),
            Err(Error::InvalidAttribute(_))
        ));
    }

    #[test]
    fn golden_encoding() {
        // owner "u1", year 2018.0, age 34.0, city "Pune", gender absent
        let expected = "02000000".to_string()
            + "7531"
            + "0000000000889f40"
            + "0000000000004140"
            + "04000000"
            + "50756e65"
            + "00000000";
        let bytes = canonical_encode(&pune(), &schema()).unwrap();
        let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, expected);
    }

    #[test]
    fn encode_deterministic_and_sensitive() {
        let a = canonical_encode(&pune(), &schema()).unwrap();
        assert_eq!(a, canonical_encode(&pune(), &schema()).unwrap());
        let mut other = pune();
        other.discrete.insert("city".into(), "Puna".into());
        assert_ne!(a, canonical_encode(&other, &schema()).unwrap());
    }

    #[test]
    fn decode_inverts_encode() {
        let bytes = canonical_encode(&pune(), &schema()).unwrap();
        assert_eq!(canonical_decode(&bytes, &schema()).unwrap(), pune());
        assert!(canonical_decode(&bytes[..bytes.len() - 1], &schema()).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(canonical_decode(&extra, &schema()).is_err());
    }

    #[test]
    fn record_validation() {
        let s = schema();
        let mut r = pune();
        r.continuous.push(1.0);
        assert!(canonical_encode(&r, &s).is_err());
        let mut r = pune();
        r.continuous[0] = f64::NAN;
        assert!(r.validate(&s).is_err());
        let mut r = pune();
        r.discrete.insert("planet".into(), "Mars".into());
        assert!(r.validate(&s).is_err());
        let mut r = pune();
        r.discrete.insert("gender".into(), String::new());
        assert!(r.validate(&s).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_record() -> impl Strategy<Value = MetadataRecord> {
            (
                "[a-z0-9]{0,8}",
                prop::collection::vec(-1e12f64..1e12, 2),
                prop::option::of("[A-Za-z =]{1,6}"),
                prop::option::of("[A-Za-z]{1,6}"),
            )
                .prop_map(|(id, cont, city, gender)| {
                    let mut d = BTreeMap::new();
                    if let Some(c) = city {
                        d.insert("city".to_string(), c);
                    }
                    if let Some(g) = gender {
                        d.insert("gender".to_string(), g);
                    }
                    MetadataRecord {
                        owner_id: id,
                        continuous: cont,
                        discrete: d,
                    }
                })
        }

        proptest! {
            #[test]
            fn roundtrip(r in arb_record()) {
                let s = schema();
                let bytes = canonical_encode(&r, &s).unwrap();
                prop_assert_eq!(canonical_decode(&bytes, &s).unwrap(), r);
            }

            #[test]
            fn injective(a in arb_record(), b in arb_record()) {
                let s = schema();
                let (ea, eb) = (canonical_encode(&a, &s).unwrap(), canonical_encode(&b, &s).unwrap());
                prop_assert_eq!(ea == eb, a == b);
            }
        }
    }
}
