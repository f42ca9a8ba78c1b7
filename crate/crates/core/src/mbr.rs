//! Axis-aligned minimum bounding rectangles over closed intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mbr {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl Mbr {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::DimensionMismatch {
                expected: low.len(),
                actual: high.len(),
            });
        }
        for (i, (lo, hi)) in low.iter().zip(&high).enumerate() {
            if lo.is_nan() || hi.is_nan() {
                return Err(Error::InvalidMbr(format!("NaN bound on dimension {i}")));
            }
            if lo > hi {
                return Err(Error::InvalidMbr(format!(
                    "low {lo} > high {hi} on dimension {i}"
                )));
            }
        }
        Ok(Mbr { low, high })
    }

    /// Degenerate rectangle holding a single point.
    pub fn point(coords: &[f64]) -> Result<Self> {
        Mbr::new(coords.to_vec(), coords.to_vec())
    }

    /// The whole of R^d; intersects every rectangle of the same dimensionality.
    pub fn unbounded(dims: usize) -> Self {
        Mbr {
            low: vec![f64::NEG_INFINITY; dims],
            high: vec![f64::INFINITY; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    fn check_dims(&self, other: &Mbr) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    pub fn union(&self, other: &Mbr) -> Result<Mbr> {
        let mut out = self.clone();
        out.expand(other)?;
        Ok(out)
    }

    /// In-place union.
    pub fn expand(&mut self, other: &Mbr) -> Result<()> {
        self.check_dims(other)?;
        for i in 0..self.dims() {
            self.low[i] = self.low[i].min(other.low[i]);
            self.high[i] = self.high[i].max(other.high[i]);
        }
        Ok(())
    }

    pub fn expand_point(&mut self, coords: &[f64]) -> Result<()> {
        if coords.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: coords.len(),
            });
        }
        for (i, &c) in coords.iter().enumerate() {
            self.low[i] = self.low[i].min(c);
            self.high[i] = self.high[i].max(c);
        }
        Ok(())
    }

    /// Closed-interval intersection test; touching boundaries intersect.
    pub fn intersects(&self, other: &Mbr) -> Result<bool> {
        self.check_dims(other)?;
        Ok(self.intersects_unchecked(other))
    }

    pub(crate) fn intersects_unchecked(&self, other: &Mbr) -> bool {
        (0..self.dims()).all(|i| self.low[i] <= other.high[i] && other.low[i] <= self.high[i])
    }

    pub fn contains_point(&self, coords: &[f64]) -> bool {
        coords.len() == self.dims()
            && coords
                .iter()
                .enumerate()
                .all(|(i, &c)| self.low[i] <= c && c <= self.high[i])
    }

    pub fn contains(&self, other: &Mbr) -> bool {
        self.dims() == other.dims()
            && (0..self.dims())
                .all(|i| self.low[i] <= other.low[i] && other.high[i] <= self.high[i])
    }

    /// Canonical bytes: every low coordinate then every high coordinate, f64 little-endian.
    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        for v in self.low.iter().chain(&self.high) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.dims() * 16);
        self.write_bytes(&mut out);
        out
    }

    pub fn byte_len(dims: usize) -> usize {
        dims * 16
    }

    pub fn from_bytes(bytes: &[u8], dims: usize) -> Result<Mbr> {
        if bytes.len() != Self::byte_len(dims) {
            return Err(Error::Decode(format!(
                "mbr needs {} bytes, got {}",
                Self::byte_len(dims),
                bytes.len()
            )));
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let (low, high) = vals.split_at(dims);
        Mbr::new(low.to_vec(), high.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mbr(low: &[f64], high: &[f64]) -> Mbr {
        Mbr::new(low.to_vec(), high.to_vec()).unwrap()
    }

    #[test]
    fn union_examples() {
        let a = mbr(&[0., 0.], &[2., 2.]);
        let b = mbr(&[1., 1.], &[3., 4.]);
        assert_eq!(a.union(&b).unwrap(), mbr(&[0., 0.], &[3., 4.]));
        assert_eq!(a.union(&a).unwrap(), a);
        let p = Mbr::point(&[5., 5.]).unwrap();
        let c = mbr(&[1., 1.], &[2., 2.]);
        assert_eq!(p.union(&c).unwrap(), mbr(&[1., 1.], &[5., 5.]));
    }

    #[test]
    fn intersect_examples() {
        let a = mbr(&[0., 0.], &[2., 2.]);
        assert!(a.intersects(&mbr(&[2., 2.], &[3., 3.])).unwrap());
        assert!(!mbr(&[0., 0.], &[1., 1.])
            .intersects(&mbr(&[2., 2.], &[3., 3.]))
            .unwrap());
        assert!(mbr(&[0., 0.], &[3., 3.])
            .intersects(&mbr(&[1., 1.], &[2., 2.]))
            .unwrap());
        // disjoint on one axis only is enough
        assert!(!mbr(&[0., 0.], &[5., 1.])
            .intersects(&mbr(&[1., 2.], &[2., 3.]))
            .unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let a = mbr(&[0.], &[1.]);
        let b = mbr(&[0., 0.], &[1., 1.]);
        assert!(matches!(a.union(&b), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            a.intersects(&b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_inverted_and_nan() {
        assert!(Mbr::new(vec![2.], vec![1.]).is_err());
        assert!(Mbr::new(vec![f64::NAN], vec![1.]).is_err());
        assert!(Mbr::new(vec![0.], vec![1., 2.]).is_err());
    }

    #[test]
    fn unbounded_intersects_everything() {
        let u = Mbr::unbounded(2);
        assert!(u.intersects(&mbr(&[-1e300, 7.], &[-1e300, 8.])).unwrap());
    }

    #[test]
    fn bytes_layout() {
        let m = mbr(&[1., 2.], &[3., 4.]);
        let b = m.to_bytes();
        assert_eq!(&b[0..8], &1f64.to_le_bytes());
        assert_eq!(&b[8..16], &2f64.to_le_bytes());
        assert_eq!(&b[16..24], &3f64.to_le_bytes());
        assert_eq!(Mbr::from_bytes(&b, 2).unwrap(), m);
    }

    fn arb_mbr(d: usize) -> impl Strategy<Value = Mbr> {
        prop::collection::vec((-100.0f64..100.0, 0.0f64..50.0), d).prop_map(|v| {
            let low = v.iter().map(|(l, _)| *l).collect();
            let high = v.iter().map(|(l, w)| l + w).collect();
            Mbr::new(low, high).unwrap()
        })
    }

    proptest! {
        #[test]
        fn intersects_symmetric(a in arb_mbr(3), b in arb_mbr(3)) {
            prop_assert_eq!(a.intersects(&b).unwrap(), b.intersects(&a).unwrap());
        }

        #[test]
        fn union_assoc_comm(a in arb_mbr(2), b in arb_mbr(2), c in arb_mbr(2)) {
            prop_assert_eq!(a.union(&b).unwrap(), b.union(&a).unwrap());
            prop_assert_eq!(
                a.union(&b).unwrap().union(&c).unwrap(),
                a.union(&b.union(&c).unwrap()).unwrap()
            );
            let u = a.union(&b).unwrap();
            prop_assert!(u.contains(&a) && u.contains(&b));
        }
    }
}
