use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::HppIndex;
use crate::error::{Error, Result};
use crate::geo::AoiMap;
use crate::network::{FlowUnit, FuId};

pub const DEFAULT_NEIGHBOR_RADIUS_M: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeiEntry {
    pub raw: f64,
    pub normalized: f64,
    /// Neighbors with a known HPP and their weights (summing to 1).
    pub weights: Vec<(FuId, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeiTable {
    pub entries: BTreeMap<FuId, FeiEntry>,
}

/// FUs of the same scenario whose pickup centroids or delivery centroids
/// lie within `radius_m` of this FU's. An FU with an unknown centroid has
/// no neighbors.
pub fn neighborhoods(fus: &[FlowUnit], centroids: &AoiMap, radius_m: f64) -> BTreeMap<FuId, Vec<FuId>> {
    let mut out = BTreeMap::new();
    for a in fus {
        let mut nb = Vec::new();
        for b in fus {
            if a.id == b.id || a.scenario != b.scenario {
                continue;
            }
            let near = |x, y| centroids.distance(x, y).is_some_and(|d| d <= radius_m);
            if near(a.pickup_aoi, b.pickup_aoi) || near(a.delivery_aoi, b.delivery_aoi) {
                nb.push(b.id);
            }
        }
        nb.sort();
        out.insert(a.id, nb);
    }
    out
}

/// Volume-weighted mean HPP over each FU's neighborhood, then min-max
/// normalized across all listed FUs. Neighbors without a known HPP are left
/// out of the weighting; all-zero volumes fall back to uniform weights.
pub fn fei_table(
    neighborhoods: &BTreeMap<FuId, Vec<FuId>>,
    hpp: &HppIndex,
    volumes: &HashMap<FuId, f64>,
) -> Result<FeiTable> {
    if let Some((fu, v)) = volumes.iter().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::validation(format!("negative or invalid volume {v} for {fu}")));
    }
    let mut entries = BTreeMap::new();
    for (&i, nb) in neighborhoods {
        let known: Vec<(FuId, f64)> = nb.iter().filter_map(|&j| hpp.hpp(i, j).map(|p| (j, p))).collect();
        let vol: Vec<f64> = known.iter().map(|(j, _)| volumes.get(j).copied().unwrap_or(0.0)).collect();
        let total: f64 = vol.iter().sum();
        let weights: Vec<(FuId, f64)> = known
            .iter()
            .zip(&vol)
            .map(|(&(j, _), &v)| (j, if total > 0.0 { v / total } else { 1.0 / known.len() as f64 }))
            .collect();
        let raw = known.iter().zip(&weights).map(|(&(_, p), &(_, w))| p * w).sum();
        entries.insert(
            i,
            FeiEntry {
                raw,
                normalized: 0.0,
                weights,
            },
        );
    }
    let (lo, hi) = entries
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.raw), hi.max(e.raw)));
    for e in entries.values_mut() {
        e.normalized = if hi > lo { (e.raw - lo) / (hi - lo) } else { 0.0 };
    }
    Ok(FeiTable { entries })
}

impl FeiTable {
    pub fn get(&self, fu: FuId) -> Option<&FeiEntry> {
        self.entries.get(&fu)
    }

    /// Normalized FEI, 0 for unknown FUs.
    pub fn normalized(&self, fu: FuId) -> f64 {
        self.entries.get(&fu).map_or(0.0, |e| e.normalized)
    }

    /// FUs whose normalized FEI exceeds `threshold`, ascending by id.
    pub fn above(&self, threshold: f64) -> Vec<FuId> {
        self.entries
            .iter()
            .filter(|(_, e)| e.normalized > threshold)
            .map(|(&fu, _)| fu)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["fu", "raw", "normalized"])?;
        for (fu, e) in &self.entries {
            out.write_record([fu.0.to_string(), e.raw.to_string(), e.normalized.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`FeiTable::write_csv`]; neighbor weights
    /// are not persisted.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            fu: u32,
            raw: f64,
            normalized: f64,
        }
        let mut entries = BTreeMap::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: Row = row?;
            entries.insert(
                FuId(row.fu),
                FeiEntry {
                    raw: row.raw,
                    normalized: row.normalized,
                    weights: Vec::new(),
                },
            );
        }
        Ok(FeiTable { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eatne::EmbeddingTable;
    use crate::geo::{AoiId, GeoPoint};
    use crate::network::ScenarioTag;

    /// Index whose HPP with FU 0 is the requested value for each other FU.
    fn star(ps: &[f64]) -> HppIndex {
        let mut t = EmbeddingTable::new(2);
        t.insert_learned(FuId(0), &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        for (k, &p) in ps.iter().enumerate() {
            let v = [p, (1.0 - p * p).sqrt()];
            t.insert_learned(FuId(k as u32 + 1), &v, &v).unwrap();
        }
        HppIndex::new(&t)
    }

    fn hood(of: &[(u32, &[u32])]) -> BTreeMap<FuId, Vec<FuId>> {
        of.iter().map(|(k, v)| (FuId(*k), v.iter().map(|&i| FuId(i)).collect())).collect()
    }

    #[test]
    fn single_neighbor() {
        let t = fei_table(&hood(&[(0, &[1])]), &star(&[0.8]), &HashMap::new()).unwrap();
        assert!((t.get(FuId(0)).unwrap().raw - 0.8).abs() < 1e-6);
    }

    #[test]
    fn volume_weighted_mean() {
        let vols = HashMap::from([(FuId(1), 3.0), (FuId(2), 1.0)]);
        let t = fei_table(&hood(&[(0, &[1, 2])]), &star(&[0.6, 0.2]), &vols).unwrap();
        let e = t.get(FuId(0)).unwrap();
        assert!((e.raw - 0.5).abs() < 1e-6);
        assert!((e.weights.iter().map(|w| w.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_is_zero_and_normalization_spans_unit_interval() {
        let t = fei_table(&hood(&[(0, &[1]), (1, &[]), (2, &[0])]), &star(&[0.8, 0.1]), &HashMap::new()).unwrap();
        assert_eq!(t.get(FuId(1)).unwrap().raw, 0.0);
        let norm: Vec<f64> = t.entries.values().map(|e| e.normalized).collect();
        assert_eq!(norm.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(norm.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        assert_eq!(t.above(0.5), vec![FuId(0)]);
    }

    #[test]
    fn constant_raw_normalizes_to_zero() {
        let t = fei_table(&hood(&[(5, &[]), (6, &[])]), &star(&[]), &HashMap::new()).unwrap();
        assert!(t.entries.values().all(|e| e.normalized == 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let t = fei_table(&hood(&[(0, &[1]), (1, &[0])]), &star(&[0.3]), &HashMap::new()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = FeiTable::read_csv(&buf[..]).unwrap();
        assert_eq!(back.normalized(FuId(0)), t.normalized(FuId(0)));
    }

    #[test]
    fn neighborhoods_use_radius_on_either_end() {
        let mut c = AoiMap::default();
        let o = GeoPoint::new(30.0, 120.0).unwrap();
        for (id, e) in [(0, 0.0), (1, 500.0), (2, 5000.0), (3, 9000.0)] {
            c.insert(AoiId(id), o.offset_m(e, 0.0)).unwrap();
        }
        let fu = |id, p, d| FlowUnit {
            id: FuId(id),
            pickup_aoi: AoiId(p),
            delivery_aoi: AoiId(d),
            scenario: ScenarioTag::WeekdayPeak,
        };
        let n = neighborhoods(&[fu(0, 0, 2), fu(1, 1, 3), fu(2, 3, 2), fu(3, 3, 3)], &c, 1000.0);
        assert_eq!(n[&FuId(0)], vec![FuId(1), FuId(2)]);
        assert_eq!(n[&FuId(3)], vec![FuId(1), FuId(2)]);
    }
}
