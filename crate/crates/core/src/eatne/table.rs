//! Per-FU embedding storage with binary and JSON-Lines persistence.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::AoiId;
use crate::network::{FuCatalog, FuId, FuKey, ScenarioTag};

pub const MAGIC: [u8; 4] = *b"FUEM";
pub const FORMAT_VERSION: u32 = 1;
const NO_AOI: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Learned,
    Estimated,
    Absent,
}

impl Provenance {
    fn code(self) -> u8 {
        match self {
            Provenance::Learned => 0,
            Provenance::Estimated => 1,
            Provenance::Absent => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Provenance::Learned,
            1 => Provenance::Estimated,
            2 => Provenance::Absent,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub fu: FuId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<FuKey>,
    pub provenance: Provenance,
    pub overall: Vec<f32>,
    pub pickup: Vec<f32>,
    pub delivery: Vec<f32>,
}

impl EmbeddingEntry {
    pub fn is_covered(&self) -> bool {
        self.provenance != Provenance::Absent
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<FuId, EmbeddingEntry>,
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts learned typed vectors; the overall vector is their mean.
    pub fn insert_learned(&mut self, fu: FuId, pickup: &[f64], delivery: &[f64]) -> Result<()> {
        self.insert_vectors(fu, Provenance::Learned, pickup, delivery, None)
    }

    pub(crate) fn insert_vectors(
        &mut self,
        fu: FuId,
        provenance: Provenance,
        pickup: &[f64],
        delivery: &[f64],
        overall: Option<&[f64]>,
    ) -> Result<()> {
        for v in [pickup, delivery] {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("non-finite embedding for {fu}")));
            }
        }
        let overall = match overall {
            Some(o) => to_f32(o),
            None => pickup.iter().zip(delivery).map(|(p, d)| (0.5 * (p + d)) as f32).collect(),
        };
        let key = self.entries.get(&fu).and_then(|e| e.key);
        self.entries.insert(
            fu,
            EmbeddingEntry {
                fu,
                key,
                provenance,
                overall,
                pickup: to_f32(pickup),
                delivery: to_f32(delivery),
            },
        );
        Ok(())
    }

    /// Registers an FU without vectors (no-op if already present).
    pub fn insert_absent(&mut self, fu: FuId) {
        self.entries.entry(fu).or_insert(EmbeddingEntry {
            fu,
            key: None,
            provenance: Provenance::Absent,
            overall: Vec::new(),
            pickup: Vec::new(),
            delivery: Vec::new(),
        });
    }

    /// Adds every catalog FU (absent when new) and records identity keys.
    pub fn attach_catalog(&mut self, catalog: &FuCatalog) {
        for fu in catalog.iter() {
            self.insert_absent(fu.id);
            if let Some(e) = self.entries.get_mut(&fu.id) {
                e.key = Some(fu.key());
            }
        }
    }

    pub fn entry(&self, fu: FuId) -> Option<&EmbeddingEntry> {
        self.entries.get(&fu)
    }

    /// Entry with vectors (learned or estimated).
    pub fn covered(&self, fu: FuId) -> Option<&EmbeddingEntry> {
        self.entries.get(&fu).filter(|e| e.is_covered())
    }

    pub fn provenance(&self, fu: FuId) -> Provenance {
        self.entries.get(&fu).map_or(Provenance::Absent, |e| e.provenance)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmbeddingEntry> {
        self.entries.values()
    }

    /// `(covered, total)` entry counts.
    pub fn coverage(&self) -> (usize, usize) {
        (self.entries.values().filter(|e| e.is_covered()).count(), self.entries.len())
    }

    pub fn coverage_ratio(&self) -> f64 {
        let (c, t) = self.coverage();
        if t == 0 {
            0.0
        } else {
            c as f64 / t as f64
        }
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        w.write_u64::<LittleEndian>(self.entries.len() as u64)?;
        for e in self.entries.values() {
            w.write_u32::<LittleEndian>(e.fu.0)?;
            let (p, d, s) = match e.key {
                Some(k) => (k.pickup_aoi.0, k.delivery_aoi.0, k.scenario.code()),
                None => (NO_AOI, NO_AOI, u8::MAX),
            };
            w.write_u32::<LittleEndian>(p)?;
            w.write_u32::<LittleEndian>(d)?;
            w.write_u8(s)?;
            w.write_u8(e.provenance.code())?;
            for v in [&e.overall, &e.pickup, &e.delivery] {
                if e.is_covered() {
                    for &x in v.iter() {
                        w.write_f32::<LittleEndian>(x)?;
                    }
                } else {
                    for _ in 0..self.dim {
                        w.write_f32::<LittleEndian>(0.0)?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let bad = |reason: String| Error::format("embedding table", reason);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header".into()))?;
        if magic != MAGIC {
            return Err(bad("bad magic bytes".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let count = r.read_u64::<LittleEndian>()?;
        let mut table = EmbeddingTable::new(dim);
        for n in 0..count {
            let trunc = |_| bad(format!("truncated at record {n}"));
            let fu = FuId(r.read_u32::<LittleEndian>().map_err(trunc)?);
            let p = r.read_u32::<LittleEndian>().map_err(trunc)?;
            let d = r.read_u32::<LittleEndian>().map_err(trunc)?;
            let s = r.read_u8().map_err(trunc)?;
            let prov = r.read_u8().map_err(trunc)?;
            let provenance = Provenance::from_code(prov).ok_or_else(|| bad(format!("provenance code {prov}")))?;
            let key = if p == NO_AOI {
                None
            } else {
                let scenario = ScenarioTag::from_code(s).ok_or_else(|| bad(format!("scenario code {s}")))?;
                Some(FuKey {
                    pickup_aoi: AoiId(p),
                    delivery_aoi: AoiId(d),
                    scenario,
                })
            };
            let mut vecs: [Vec<f32>; 3] = Default::default();
            for v in &mut vecs {
                *v = vec![0.0; dim];
                r.read_f32_into::<LittleEndian>(v).map_err(trunc)?;
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(bad(format!("non-finite value in record {n}")));
                }
            }
            let [overall, pickup, delivery] = if provenance == Provenance::Absent {
                Default::default()
            } else {
                vecs
            };
            if table.entries.contains_key(&fu) {
                return Err(bad(format!("duplicate record for {fu}")));
            }
            table.entries.insert(
                fu,
                EmbeddingEntry {
                    fu,
                    key,
                    provenance,
                    overall,
                    pickup,
                    delivery,
                },
            );
        }
        Ok(table)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in self.entries.values() {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut table = EmbeddingTable::default();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: EmbeddingEntry = serde_json::from_str(&line)
                .map_err(|err| Error::format("embedding jsonl", format!("line {}: {err}", n + 1)))?;
            if e.is_covered() {
                if table.entries.is_empty() || table.dim == 0 {
                    table.dim = e.overall.len();
                }
                if [&e.overall, &e.pickup, &e.delivery].iter().any(|v| v.len() != table.dim) {
                    return Err(Error::format("embedding jsonl", format!("line {}: dimension", n + 1)));
                }
            }
            table.entries.insert(e.fu, e);
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(3);
        t.insert_learned(FuId(1), &[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        t.insert_absent(FuId(2));
        t.insert_vectors(FuId(5), Provenance::Estimated, &[0.5; 3], &[0.25; 3], Some(&[0.1; 3]))
            .unwrap();
        let mut cat = FuCatalog::new();
        cat.insert(crate::network::FlowUnit {
            id: FuId(1),
            pickup_aoi: AoiId(7),
            delivery_aoi: AoiId(8),
            scenario: ScenarioTag::WeekendIdle,
        })
        .unwrap();
        t.attach_catalog(&cat);
        t
    }

    #[test]
    fn overall_is_mean_of_typed() {
        let t = sample();
        assert_eq!(t.entry(FuId(1)).unwrap().overall, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn binary_round_trip() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 20 + 3 * (14 + 36));
        assert_eq!(EmbeddingTable::read_binary(&buf[..]).unwrap(), t);
    }

    #[test]
    fn jsonl_round_trip() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        assert_eq!(EmbeddingTable::read_jsonl(&buf[..]).unwrap(), t);
    }

    #[test]
    fn rejects_corrupt_binary() {
        let mut buf = Vec::new();
        sample().write_binary(&mut buf).unwrap();
        assert!(EmbeddingTable::read_binary(&buf[..buf.len() - 3]).is_err());
        buf[0] = b'X';
        assert!(EmbeddingTable::read_binary(&buf[..]).is_err());
    }

    #[test]
    fn coverage_counts() {
        assert_eq!(sample().coverage(), (2, 3));
        assert_eq!(sample().provenance(FuId(99)), Provenance::Absent);
    }

    #[test]
    fn rejects_wrong_dimension() {
        let mut t = EmbeddingTable::new(2);
        assert!(t.insert_learned(FuId(0), &[1.0], &[1.0, 2.0]).is_err());
    }
}
