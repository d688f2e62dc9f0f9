//! Per-FU node attributes: order volumes, durations, distances, barriers,
//! centroid coordinates and preferred-location shares, standardized per
//! region.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{FuCatalog, FuId, OrderId, RegionId, ScenarioTag};
use crate::geo::{AoiId, AoiMap};

pub const ATTRIBUTE_NAMES: [&str; 17] = [
    "fu_volume_per_day",
    "pickup_aoi_volume_per_day",
    "delivery_aoi_volume_per_day",
    "pickup_wait_secs",
    "delivery_duration_secs",
    "delivery_distance_m",
    "order_to_delivery_secs",
    "barrier_count",
    "barrier_bridge",
    "barrier_river",
    "barrier_highway",
    "pickup_lat",
    "pickup_lon",
    "delivery_lat",
    "delivery_lon",
    "pickup_preferred_share",
    "delivery_preferred_share",
];

pub const ATTRIBUTE_DIM: usize = ATTRIBUTE_NAMES.len();

/// One historical order as stored in the order-history JSON-Lines file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderRecord {
    pub order_id: OrderId,
    pub fu: FuId,
    pub pickup_aoi: AoiId,
    pub delivery_aoi: AoiId,
    pub placed_at: i64,
    pub picked_at: i64,
    pub delivered_at: i64,
    pub deadline: i64,
    pub distance_m: f64,
    #[serde(default)]
    pub negative_feedback: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Barriers {
    pub bridge: u32,
    pub river: u32,
    pub highway: u32,
}

/// Static AOI- and FU-level statistics that do not come from orders.
#[derive(Debug, Clone, Default)]
pub struct AoiStats {
    pub centroids: AoiMap,
    pub barriers: HashMap<FuId, Barriers>,
    pub preferred_share: HashMap<AoiId, f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeFlags {
    /// At least one component was filled with the regional mean.
    pub imputed: bool,
    /// The FU's region had no order history; its vector is all zeros.
    pub empty_region: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributeTable {
    pub vectors: BTreeMap<FuId, Vec<f64>>,
    pub flags: BTreeMap<FuId, AttributeFlags>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Raw (unstandardized) attribute vectors; `None` marks a missing statistic.
pub fn compute_raw_attributes(
    history: &[OrderRecord],
    stats: &AoiStats,
    catalog: &FuCatalog,
    fus: &[FuId],
    scenario: ScenarioTag,
    window_days: f64,
) -> BTreeMap<FuId, Vec<Option<f64>>> {
    assert!(window_days > 0.0, "history window must be positive");
    let in_scenario = |r: &&OrderRecord| catalog.get(r.fu).is_some_and(|u| u.scenario == scenario);
    let records: Vec<&OrderRecord> = history.iter().filter(in_scenario).collect();

    let mut fu_orders: HashMap<FuId, Vec<&OrderRecord>> = HashMap::new();
    let mut pickup_orders: HashMap<AoiId, Vec<&OrderRecord>> = HashMap::new();
    let mut delivery_orders: HashMap<AoiId, Vec<&OrderRecord>> = HashMap::new();
    for r in &records {
        fu_orders.entry(r.fu).or_default().push(r);
        pickup_orders.entry(r.pickup_aoi).or_default().push(r);
        delivery_orders.entry(r.delivery_aoi).or_default().push(r);
    }
    let empty = Vec::new();

    let mut out = BTreeMap::new();
    for &fu in fus {
        let Some(unit) = catalog.get(fu) else {
            out.insert(fu, vec![None; ATTRIBUTE_DIM]);
            continue;
        };
        let own = fu_orders.get(&fu).unwrap_or(&empty);
        let at_pickup = pickup_orders.get(&unit.pickup_aoi).unwrap_or(&empty);
        let at_delivery = delivery_orders.get(&unit.delivery_aoi).unwrap_or(&empty);
        let per_day = |n: usize| Some(n as f64 / window_days);
        let avg = |rs: &[&OrderRecord], f: &dyn Fn(&OrderRecord) -> f64| {
            mean(&rs.iter().map(|r| f(r)).collect::<Vec<_>>())
        };
        let barriers = stats.barriers.get(&fu);
        let pickup = stats.centroids.get(unit.pickup_aoi);
        let delivery = stats.centroids.get(unit.delivery_aoi);
        let v = vec![
            per_day(own.len()),
            per_day(at_pickup.len()),
            per_day(at_delivery.len()),
            avg(at_pickup, &|r| (r.picked_at - r.placed_at) as f64),
            avg(at_delivery, &|r| (r.delivered_at - r.picked_at) as f64),
            avg(own, &|r| r.distance_m),
            avg(own, &|r| (r.delivered_at - r.placed_at) as f64),
            barriers.map(|b| (b.bridge + b.river + b.highway) as f64),
            barriers.map(|b| b.bridge as f64),
            barriers.map(|b| b.river as f64),
            barriers.map(|b| b.highway as f64),
            pickup.map(|p| p.lat),
            pickup.map(|p| p.lon),
            delivery.map(|p| p.lat),
            delivery.map(|p| p.lon),
            stats.preferred_share.get(&unit.pickup_aoi).copied(),
            stats.preferred_share.get(&unit.delivery_aoi).copied(),
        ];
        debug_assert_eq!(v.len(), ATTRIBUTE_DIM);
        out.insert(fu, v);
    }
    out
}

/// Imputes missing components with the regional mean, then z-scores each
/// component within its region. A component that is constant across a
/// region standardizes to 0.
pub fn standardize_per_region(
    raw: &BTreeMap<FuId, Vec<Option<f64>>>,
    regions: &BTreeMap<FuId, RegionId>,
    region_has_history: &dyn Fn(RegionId) -> bool,
) -> AttributeTable {
    let mut members: BTreeMap<Option<RegionId>, Vec<FuId>> = BTreeMap::new();
    for fu in raw.keys() {
        members.entry(regions.get(fu).copied()).or_default().push(*fu);
    }
    let mut table = AttributeTable::default();
    for (region, fus) in members {
        let dim = raw[&fus[0]].len();
        if region.is_some_and(|r| !region_has_history(r)) {
            for fu in fus {
                table.vectors.insert(fu, vec![0.0; dim]);
                table.flags.insert(
                    fu,
                    AttributeFlags {
                        imputed: false,
                        empty_region: true,
                    },
                );
            }
            continue;
        }
        let mut cols = vec![Vec::with_capacity(fus.len()); dim];
        let mut flags = vec![AttributeFlags::default(); fus.len()];
        for k in 0..dim {
            let present: Vec<f64> = fus.iter().filter_map(|f| raw[f][k]).collect();
            let fill = mean(&present).unwrap_or(0.0);
            for (n, f) in fus.iter().enumerate() {
                let x = raw[f][k].unwrap_or_else(|| {
                    flags[n].imputed = true;
                    fill
                });
                cols[k].push(x);
            }
        }
        for col in &mut cols {
            let mu = mean(col).unwrap_or(0.0);
            let var = col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / col.len() as f64;
            let sd = var.sqrt();
            for x in col.iter_mut() {
                *x = if sd > 1e-12 { (*x - mu) / sd } else { 0.0 };
            }
        }
        for (n, fu) in fus.into_iter().enumerate() {
            table.vectors.insert(fu, cols.iter().map(|c| c[n]).collect());
            table.flags.insert(fu, flags[n]);
        }
    }
    table
}

/// Attribute vectors for `regions`' FUs from order history and static stats,
/// imputed and standardized per region.
pub fn compute_node_attributes(
    history: &[OrderRecord],
    stats: &AoiStats,
    catalog: &FuCatalog,
    regions: &BTreeMap<FuId, RegionId>,
    scenario: ScenarioTag,
    window_days: f64,
) -> AttributeTable {
    let fus: Vec<FuId> = regions.keys().copied().collect();
    let raw = compute_raw_attributes(history, stats, catalog, &fus, scenario, window_days);
    let mut with_history: std::collections::HashSet<RegionId> = Default::default();
    for r in history {
        if let Some(&reg) = regions.get(&r.fu) {
            with_history.insert(reg);
        }
    }
    standardize_per_region(&raw, regions, &|r| with_history.contains(&r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::network::FlowUnit;

    fn setup() -> (FuCatalog, AoiStats) {
        let o = GeoPoint::new(39.9, 116.4).unwrap();
        let mut centroids = AoiMap::new();
        for i in 0..4 {
            centroids.insert(AoiId(i), o.offset_m(500.0 * i as f64, 0.0)).unwrap();
        }
        let cat = FuCatalog::from_units([
            FlowUnit {
                id: FuId(1),
                pickup_aoi: AoiId(0),
                delivery_aoi: AoiId(1),
                scenario: ScenarioTag::WeekdayPeak,
            },
            FlowUnit {
                id: FuId(2),
                pickup_aoi: AoiId(0),
                delivery_aoi: AoiId(2),
                scenario: ScenarioTag::WeekdayPeak,
            },
            FlowUnit {
                id: FuId(3),
                pickup_aoi: AoiId(3),
                delivery_aoi: AoiId(2),
                scenario: ScenarioTag::WeekdayPeak,
            },
        ])
        .unwrap();
        let mut barriers = HashMap::new();
        barriers.insert(FuId(1), Barriers { bridge: 1, river: 1, highway: 0 });
        barriers.insert(FuId(2), Barriers { bridge: 0, river: 0, highway: 1 });
        let stats = AoiStats {
            centroids,
            barriers,
            preferred_share: (0..4).map(|i| (AoiId(i), 0.1)).collect(),
        };
        (cat, stats)
    }

    fn order(id: u64, fu: u32, p: u32, d: u32) -> OrderRecord {
        OrderRecord {
            order_id: OrderId(id),
            fu: FuId(fu),
            pickup_aoi: AoiId(p),
            delivery_aoi: AoiId(d),
            placed_at: 0,
            picked_at: 600,
            delivered_at: 1500,
            deadline: 2400,
            distance_m: 500.0,
            negative_feedback: false,
        }
    }

    #[test]
    fn thirty_orders_in_thirty_days_is_one_per_day() {
        let (cat, stats) = setup();
        let history: Vec<_> = (0..30).map(|i| order(i, 1, 0, 1)).collect();
        let raw = compute_raw_attributes(&history, &stats, &cat, &[FuId(1)], ScenarioTag::WeekdayPeak, 30.0);
        assert_eq!(raw[&FuId(1)][0], Some(1.0));
        assert_eq!(raw[&FuId(1)][7], Some(2.0));
    }

    #[test]
    fn missing_barrier_imputed_and_flagged() {
        let (cat, stats) = setup();
        let history = vec![order(1, 1, 0, 1), order(2, 2, 0, 2), order(3, 3, 3, 2)];
        let regions: BTreeMap<_, _> = [1, 2, 3].iter().map(|&f| (FuId(f), RegionId(1))).collect();
        let raw = compute_raw_attributes(&history, &stats, &cat, &[FuId(1), FuId(2), FuId(3)], ScenarioTag::WeekdayPeak, 30.0);
        assert_eq!(raw[&FuId(3)][7], None);
        let table = compute_node_attributes(&history, &stats, &cat, &regions, ScenarioTag::WeekdayPeak, 30.0);
        assert!(table.flags[&FuId(3)].imputed);
        assert!(!table.flags[&FuId(1)].imputed);
        // Imputed with the regional mean (1.5 barriers), which is the column
        // mean, so it standardizes to zero.
        assert!(table.vectors[&FuId(3)][7].abs() < 1e-12);
    }

    #[test]
    fn constant_component_standardizes_to_zero() {
        let (cat, stats) = setup();
        let history = vec![order(1, 1, 0, 1), order(2, 2, 0, 2), order(3, 3, 3, 2)];
        let regions: BTreeMap<_, _> = [1, 2, 3].iter().map(|&f| (FuId(f), RegionId(1))).collect();
        let table = compute_node_attributes(&history, &stats, &cat, &regions, ScenarioTag::WeekdayPeak, 30.0);
        for v in table.vectors.values() {
            // Preferred share is 0.1 everywhere.
            assert_eq!(v[15], 0.0);
            assert!(v.iter().all(|x| x.is_finite()));
            assert_eq!(v.len(), ATTRIBUTE_DIM);
        }
        // z-scores have zero mean per component.
        let s: f64 = table.vectors.values().map(|v| v[12]).sum();
        assert!(s.abs() < 1e-9);
    }

    #[test]
    fn empty_region_yields_zero_vector() {
        let (cat, stats) = setup();
        let history = vec![order(1, 1, 0, 1)];
        let regions: BTreeMap<_, _> = [(FuId(1), RegionId(1)), (FuId(3), RegionId(3))].into_iter().collect();
        let table = compute_node_attributes(&history, &stats, &cat, &regions, ScenarioTag::WeekdayPeak, 30.0);
        assert!(table.flags[&FuId(3)].empty_region);
        assert!(table.vectors[&FuId(3)].iter().all(|&x| x == 0.0));
    }
}
