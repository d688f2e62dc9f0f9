use std::collections::BTreeMap;

use super::{FlowUnit, FuId};
use crate::geo::{AoiId, AoiMap};

/// Geographic adjacency between flow units that share a pickup AOI.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtendedNetwork {
    /// Strict adjacency (same pickup AOI, delivery centroids under the
    /// threshold), replaced by the same-pickup fallback when empty.
    pub adjacency: BTreeMap<FuId, Vec<FuId>>,
    /// FUs sharing each FU's pickup AOI (excluding itself).
    pub same_pickup: BTreeMap<FuId, Vec<FuId>>,
    /// FUs whose AOI centroids are unknown, with the reason.
    pub excluded: Vec<(FuId, String)>,
}

impl ExtendedNetwork {
    pub fn neighbors(&self, fu: FuId) -> &[FuId] {
        self.adjacency.get(&fu).map_or(&[], Vec::as_slice)
    }

    pub fn fallback(&self, fu: FuId) -> &[FuId] {
        self.same_pickup.get(&fu).map_or(&[], Vec::as_slice)
    }
}

pub const DEFAULT_EXTENDED_THRESHOLD_M: f64 = 1000.0;

/// FUs are adjacent iff they share a pickup AOI and scenario and their
/// delivery centroids are closer than `threshold_m`. An FU without any
/// such neighbor falls back to every FU sharing its pickup AOI.
pub fn build_extended_network(
    fus: &[FlowUnit],
    centroids: &AoiMap,
    threshold_m: f64,
) -> ExtendedNetwork {
    assert!(threshold_m > 0.0, "distance threshold must be positive");
    let mut net = ExtendedNetwork::default();
    let mut by_pickup: BTreeMap<(AoiId, u8), Vec<&FlowUnit>> = BTreeMap::new();
    for fu in fus {
        let missing = [fu.pickup_aoi, fu.delivery_aoi]
            .into_iter()
            .find(|a| centroids.get(*a).is_none());
        if let Some(aoi) = missing {
            log::warn!("{} excluded from extended network: no centroid for {aoi}", fu.id);
            net.excluded.push((fu.id, format!("unknown centroid for {aoi}")));
            continue;
        }
        by_pickup
            .entry((fu.pickup_aoi, fu.scenario.code()))
            .or_default()
            .push(fu);
    }
    for group in by_pickup.values() {
        for a in group {
            let others: Vec<FuId> = group.iter().filter(|b| b.id != a.id).map(|b| b.id).collect();
            let strict: Vec<FuId> = group
                .iter()
                .filter(|b| {
                    b.id != a.id && centroids.dist(a.delivery_aoi, b.delivery_aoi) < threshold_m
                })
                .map(|b| b.id)
                .collect();
            let mut adj = if strict.is_empty() { others.clone() } else { strict };
            adj.sort();
            let mut others = others;
            others.sort();
            net.adjacency.insert(a.id, adj);
            net.same_pickup.insert(a.id, others);
        }
    }
    net
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::network::ScenarioTag;

    fn fu(id: u32, p: u32, d: u32) -> FlowUnit {
        FlowUnit {
            id: FuId(id),
            pickup_aoi: AoiId(p),
            delivery_aoi: AoiId(d),
            scenario: ScenarioTag::WeekdayPeak,
        }
    }

    fn map(points: &[(u32, f64)]) -> AoiMap {
        // AOIs placed along an east-west line, `x` meters from an origin.
        let o = GeoPoint::new(39.9, 116.4).unwrap();
        let mut m = AoiMap::new();
        for &(id, x) in points {
            m.insert(AoiId(id), o.offset_m(x, 0.0)).unwrap();
        }
        m
    }

    #[test]
    fn same_pickup_close_deliveries_are_adjacent() {
        let m = map(&[(0, 0.0), (1, 2000.0), (2, 2500.0)]);
        let net = build_extended_network(&[fu(1, 0, 1), fu(2, 0, 2)], &m, 1000.0);
        assert_eq!(net.neighbors(FuId(1)), &[FuId(2)]);
        assert_eq!(net.neighbors(FuId(2)), &[FuId(1)]);
    }

    #[test]
    fn different_pickups_never_adjacent() {
        let m = map(&[(0, 0.0), (5, 50.0), (1, 2000.0), (2, 2010.0)]);
        let net = build_extended_network(&[fu(1, 0, 1), fu(2, 5, 2)], &m, 1000.0);
        assert!(net.neighbors(FuId(1)).is_empty());
        assert!(net.neighbors(FuId(2)).is_empty());
    }

    #[test]
    fn fallback_to_same_pickup() {
        let m = map(&[(0, 0.0), (1, 1000.0), (2, 3000.0), (3, 5000.0)]);
        let net = build_extended_network(&[fu(1, 0, 1), fu(2, 0, 2), fu(3, 0, 3)], &m, 1000.0);
        assert_eq!(net.neighbors(FuId(1)).len(), 2);
    }

    #[test]
    fn unknown_centroid_is_excluded() {
        let m = map(&[(0, 0.0), (1, 100.0)]);
        let net = build_extended_network(&[fu(1, 0, 1), fu(2, 0, 9)], &m, 1000.0);
        assert_eq!(net.excluded.len(), 1);
        assert_eq!(net.excluded[0].0, FuId(2));
        assert!(net.neighbors(FuId(1)).is_empty());
    }
}
