use std::collections::HashMap;
use std::io::Write;

use crate::eatne::EmbeddingTable;
use crate::error::Result;
use crate::network::{FuId, RegionId};

#[derive(Debug, Clone)]
struct Unit {
    v: Vec<f64>,
    norm: f64,
}

/// Cosine similarity of overall FU embeddings, computed on demand.
///
/// When built with region labels, pairs from different regions are
/// reported as unknown: the embedding was never trained to separate them.
#[derive(Debug, Clone, Default)]
pub struct HppIndex {
    units: HashMap<FuId, Unit>,
    regions: Option<HashMap<FuId, RegionId>>,
}

impl HppIndex {
    pub fn new(table: &EmbeddingTable) -> Self {
        let units = table
            .iter()
            .filter(|e| e.is_covered())
            .map(|e| {
                let v: Vec<f64> = e.overall.iter().map(|&x| x as f64).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                (e.fu, Unit { v, norm })
            })
            .collect();
        HppIndex { units, regions: None }
    }

    pub fn with_regions(mut self, regions: impl IntoIterator<Item = (FuId, RegionId)>) -> Self {
        self.regions = Some(regions.into_iter().collect());
        self
    }

    pub fn is_covered(&self, fu: FuId) -> bool {
        self.units.contains_key(&fu)
    }

    /// `None` when either FU has no embedding (or, with regions, the FUs
    /// lie in different or unknown regions).
    pub fn hpp(&self, i: FuId, j: FuId) -> Option<f64> {
        let (a, b) = (self.units.get(&i)?, self.units.get(&j)?);
        if i == j {
            return Some(1.0);
        }
        if let Some(r) = &self.regions {
            if r.get(&i)? != r.get(&j)? {
                return None;
            }
        }
        // Canonical argument order keeps the value exactly symmetric.
        let (a, b) = if i < j { (a, b) } else { (b, a) };
        if a.norm == 0.0 || b.norm == 0.0 {
            log::debug!("zero embedding in hpp({i}, {j}); cosine taken as 0");
            return Some(0.0);
        }
        let dot: f64 = a.v.iter().zip(&b.v).map(|(x, y)| x * y).sum();
        Some((dot / (a.norm * b.norm)).clamp(-1.0, 1.0))
    }

    /// HPP with unknown mapped to 0.
    pub fn hpp_or_zero(&self, i: FuId, j: FuId) -> f64 {
        self.hpp(i, j).unwrap_or(0.0)
    }

    /// Writes `fu_a,fu_b,hpp` for pairs among `fus` with HPP at least `floor`.
    pub fn write_sparse_csv<W: Write>(&self, fus: &[FuId], floor: f64, w: W) -> Result<usize> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["fu_a", "fu_b", "hpp"])?;
        let mut sorted = fus.to_vec();
        sorted.sort();
        sorted.dedup();
        let mut n = 0;
        for (k, &a) in sorted.iter().enumerate() {
            for &b in &sorted[k + 1..] {
                if let Some(p) = self.hpp(a, b).filter(|&p| p >= floor) {
                    out.write_record([a.0.to_string(), b.0.to_string(), format!("{p:.6}")])?;
                    n += 1;
                }
            }
        }
        out.flush()?;
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn index(vs: &[(u32, [f64; 2])]) -> HppIndex {
        let mut t = EmbeddingTable::new(2);
        for (fu, v) in vs {
            t.insert_learned(FuId(*fu), v, v).unwrap();
        }
        t.insert_absent(FuId(99));
        HppIndex::new(&t)
    }

    #[test]
    fn analytic_values() {
        let h = index(&[(0, [1.0, 0.0]), (1, [1.0, 0.0]), (2, [0.0, 3.0]), (3, [1.0, 1.0])]);
        assert_eq!(h.hpp(FuId(0), FuId(1)).map(|p| (p - 1.0).abs() < 1e-12), Some(true));
        assert_eq!(h.hpp(FuId(0), FuId(2)), Some(0.0));
        assert!((h.hpp(FuId(0), FuId(3)).unwrap() - 0.70710678).abs() < 1e-6);
        assert_eq!(h.hpp(FuId(0), FuId(99)), None);
        assert_eq!(h.hpp(FuId(3), FuId(3)), Some(1.0));
    }

    #[test]
    fn regions_hide_cross_region_pairs() {
        let h = index(&[(0, [1.0, 0.0]), (1, [1.0, 0.2]), (2, [1.0, 0.1])])
            .with_regions([(FuId(0), RegionId(0)), (FuId(1), RegionId(0)), (FuId(2), RegionId(1))]);
        assert!(h.hpp(FuId(0), FuId(1)).is_some());
        assert_eq!(h.hpp(FuId(0), FuId(2)), None);
    }

    #[test]
    fn sparse_csv_filters_by_floor() {
        let h = index(&[(0, [1.0, 0.0]), (1, [1.0, 0.1]), (2, [0.0, 1.0])]);
        let mut buf = Vec::new();
        let n = h.write_sparse_csv(&[FuId(0), FuId(1), FuId(2)], 0.5, &mut buf).unwrap();
        assert_eq!(n, 1);
        assert!(String::from_utf8(buf).unwrap().starts_with("fu_a,fu_b,hpp\n0,1,"));
    }

    proptest! {
        #[test]
        fn symmetric_and_scale_invariant(
            a in prop::array::uniform2(-5.0f64..5.0),
            b in prop::array::uniform2(-5.0f64..5.0),
            s in 0.01f64..100.0,
        ) {
            let h = index(&[(0, a), (1, b)]);
            prop_assert_eq!(h.hpp(FuId(0), FuId(1)), h.hpp(FuId(1), FuId(0)));
            let scaled = index(&[(0, [a[0] * s, a[1] * s]), (1, [b[0] * s, b[1] * s])]);
            let (p, q) = (h.hpp(FuId(0), FuId(1)).unwrap(), scaled.hpp(FuId(0), FuId(1)).unwrap());
            prop_assert!((p - q).abs() < 1e-5);
            prop_assert!((-1.0..=1.0).contains(&p));
        }
    }
}
