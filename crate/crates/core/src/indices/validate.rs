use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{FeiTable, HppIndex};
use crate::error::{Error, Result};
use crate::network::FuId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SehThresholds {
    /// Every member's normalized FEI must exceed this.
    pub fei: f64,
    /// Every member pair's HPP must exceed this.
    pub pair: f64,
    /// Minimum total order volume of the candidate.
    pub volume_floor: f64,
}

impl Default for SehThresholds {
    fn default() -> Self {
        SehThresholds {
            fei: 0.6,
            pair: 0.5,
            volume_floor: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "clause", rename_all = "snake_case")]
pub enum Violation {
    FeiThreshold { fu: FuId, fei: f64 },
    PairThreshold { a: FuId, b: FuId, hpp: f64 },
    UncoveredPair { a: FuId, b: FuId },
    VolumeFloor { total: f64, floor: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FeiThreshold { fu, fei } => write!(f, "fei threshold: {fu} has {fei:.4}"),
            Violation::PairThreshold { a, b, hpp } => write!(f, "pair threshold: ({a}, {b}) has {hpp:.4}"),
            Violation::UncoveredPair { a, b } => write!(f, "uncovered pair: ({a}, {b})"),
            Violation::VolumeFloor { total, floor } => write!(f, "volume floor: {total} < {floor}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SehValidation {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

/// Checks a candidate hotspot against the membership definition.
pub fn seh_validate(
    candidate: &[FuId],
    fei: &FeiTable,
    hpp: &HppIndex,
    volumes: &HashMap<FuId, f64>,
    thresholds: SehThresholds,
) -> Result<SehValidation> {
    if !(0.0..=1.0).contains(&thresholds.fei) || !(0.0..=1.0).contains(&thresholds.pair) {
        return Err(Error::validation("thresholds must lie in [0, 1]"));
    }
    let mut violations = Vec::new();
    for &fu in candidate {
        let eta = fei.normalized(fu);
        if !(eta > thresholds.fei) {
            violations.push(Violation::FeiThreshold { fu, fei: eta });
        }
    }
    for (k, &a) in candidate.iter().enumerate() {
        for &b in &candidate[k + 1..] {
            match hpp.hpp(a, b) {
                None => violations.push(Violation::UncoveredPair { a, b }),
                Some(p) if !(p > thresholds.pair) => violations.push(Violation::PairThreshold { a, b, hpp: p }),
                Some(_) => {}
            }
        }
    }
    let total: f64 = candidate.iter().map(|fu| volumes.get(fu).copied().unwrap_or(0.0)).sum();
    if total < thresholds.volume_floor {
        violations.push(Violation::VolumeFloor {
            total,
            floor: thresholds.volume_floor,
        });
    }
    Ok(SehValidation {
        valid: violations.is_empty(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eatne::EmbeddingTable;
    use crate::indices::FeiEntry;
    use std::collections::BTreeMap;

    fn setup(scale: f32) -> (FeiTable, HppIndex) {
        let mut t = EmbeddingTable::new(2);
        // hpp(0,1) = 0.4
        for (fu, v) in [(0, [1.0, 0.0]), (1, [0.4, 0.84f64.sqrt()])] {
            let v = [v[0] * scale as f64, v[1] * scale as f64];
            t.insert_learned(FuId(fu), &v, &v).unwrap();
        }
        let fei = FeiTable {
            entries: BTreeMap::from([
                (FuId(0), FeiEntry { raw: 0.0, normalized: 0.9, weights: vec![] }),
                (FuId(1), FeiEntry { raw: 0.0, normalized: 0.95, weights: vec![] }),
            ]),
        };
        (fei, HppIndex::new(&t))
    }

    fn vols() -> HashMap<FuId, f64> {
        HashMap::from([(FuId(0), 60.0), (FuId(1), 10.0)])
    }

    #[test]
    fn singleton_is_vacuously_valid() {
        let (fei, hpp) = setup(1.0);
        let v = seh_validate(&[FuId(0)], &fei, &hpp, &vols(), SehThresholds::default()).unwrap();
        assert!(v.valid);
    }

    #[test]
    fn low_pair_hpp_fails() {
        let (fei, hpp) = setup(1.0);
        let v = seh_validate(&[FuId(0), FuId(1)], &fei, &hpp, &vols(), SehThresholds::default()).unwrap();
        assert!(!v.valid);
        assert!(matches!(v.violations[0], Violation::PairThreshold { .. }));
        assert!(v.violations[0].to_string().starts_with("pair threshold"));
    }

    #[test]
    fn uncovered_pair_and_volume() {
        let (fei, hpp) = setup(1.0);
        let v = seh_validate(&[FuId(1), FuId(7)], &fei, &hpp, &vols(), SehThresholds::default()).unwrap();
        let reasons: Vec<String> = v.violations.iter().map(|x| x.to_string()).collect();
        assert!(reasons.iter().any(|r| r.starts_with("uncovered pair")));
        assert!(reasons.iter().any(|r| r.starts_with("volume floor")));
        assert!(reasons.iter().any(|r| r.starts_with("fei threshold")));
    }

    #[test]
    fn outcome_is_scale_invariant() {
        for s in [0.01, 1.0, 250.0] {
            let (fei, hpp) = setup(s);
            let th = SehThresholds { pair: 0.3, ..Default::default() };
            assert!(seh_validate(&[FuId(0), FuId(1)], &fei, &hpp, &vols(), th).unwrap().valid);
        }
    }
}
