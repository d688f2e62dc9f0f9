//! Seeded random instances for the oracle comparisons.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scdn_core::dispatch::{Courier, DispatchConfig, DispatchContext, MoaInstance, OnHand, Order};
use scdn_core::eatne::EmbeddingTable;
use scdn_core::geo::{AoiId, AoiMap, GeoPoint};
use scdn_core::indices::HppIndex;
use scdn_core::network::{CourierId, FlowUnit, FuCatalog, FuId, OrderId, ScenarioTag};
use scdn_core::seh::BpInstance;

/// Side of the square test grid and its cell spacing.
pub const GRID: u32 = 5;
pub const CELL_M: f64 = 800.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `w * h` AOIs on a regular grid, id `y * w + x`.
pub fn grid(w: u32, h: u32, cell_m: f64) -> AoiMap {
    let origin = GeoPoint::new(30.0, 120.0).expect("valid origin");
    let mut m = AoiMap::new();
    for y in 0..h {
        for x in 0..w {
            m.insert(AoiId(y * w + x), origin.offset_m(x as f64 * cell_m, y as f64 * cell_m))
                .expect("distinct ids");
        }
    }
    m
}

/// FU id of a directed AOI pair on the test grid.
pub fn fu_of(pickup: AoiId, delivery: AoiId) -> FuId {
    FuId(pickup.0 * GRID * GRID + delivery.0)
}

/// Context over the test grid with every directed AOI pair in the catalog.
/// Embeddings mix a pickup cluster, a delivery cluster and noise, so HPP
/// spans the whole range and pairs above the usual thresholds are common.
pub fn random_context(rng: &mut ChaCha8Rng) -> DispatchContext {
    let n = GRID * GRID;
    let dim = 6;
    let clusters: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect();
    let mut catalog = FuCatalog::new();
    let mut table = EmbeddingTable::new(dim);
    for p in 0..n {
        for d in 0..n {
            let (pa, da) = (AoiId(p), AoiId(d));
            let id = fu_of(pa, da);
            catalog
                .insert(FlowUnit {
                    id,
                    pickup_aoi: pa,
                    delivery_aoi: da,
                    scenario: ScenarioTag::WeekdayPeak,
                })
                .expect("unique pairs");
            let (cp, cd) = (&clusters[(p % 3) as usize], &clusters[(d / GRID % 3) as usize]);
            let v: Vec<f64> = (0..dim)
                .map(|k| cp[k] + 0.6 * cd[k] + 0.35 * (rng.random::<f64>() * 2.0 - 1.0))
                .collect();
            table.insert_learned(id, &v, &v).expect("finite");
        }
    }
    DispatchContext {
        centroids: grid(GRID, GRID, CELL_M),
        hpp: Some(HppIndex::new(&table)),
        catalog,
        scenario: Some(ScenarioTag::WeekdayPeak),
    }
}

fn order(id: u64, p: AoiId, d: AoiId, placed_at: i64, deadline: i64) -> Order {
    Order {
        id: OrderId(id),
        fu: fu_of(p, d),
        pickup_aoi: p,
        delivery_aoi: d,
        placed_at,
        deadline,
    }
}

/// A small assignment problem: 2..=`max_orders` orders from a few merchant
/// AOIs and 2..=`max_couriers` couriers of capacity 4, some holding one
/// order. Every order can always be placed.
pub fn random_moa(seed: u64, max_orders: usize, max_couriers: usize) -> MoaInstance {
    let mut rng = rng(seed);
    let ctx = Arc::new(random_context(&mut rng));
    let now = 40_000;
    let aois: Vec<AoiId> = (0..GRID * GRID).map(AoiId).collect();
    let merchants: Vec<AoiId> = aois.choose_multiple(&mut rng, 3).copied().collect();
    let n = rng.random_range(2..=max_orders.max(2));
    let m = rng.random_range(2..=max_couriers.max(2));
    let orders = (0..n)
        .map(|k| {
            let p = *merchants.choose(&mut rng).unwrap();
            let d = *aois.choose(&mut rng).unwrap();
            let placed = now - rng.random_range(0..600);
            order(k as u64 + 1, p, d, placed, placed + rng.random_range(1500..3000))
        })
        .collect();
    let couriers = (0..m)
        .map(|k| {
            let mut c = Courier::idle(CourierId(k as u32 + 1), *aois.choose(&mut rng).unwrap(), 4);
            c.available_at = now;
            if rng.random_bool(0.4) {
                let p = *merchants.choose(&mut rng).unwrap();
                let picked_up = rng.random_bool(0.5);
                if picked_up {
                    c.current_aoi = p;
                }
                let placed = now - rng.random_range(300..900);
                c.on_hand.push(OnHand {
                    order: order(1000 + k as u64, p, *aois.choose(&mut rng).unwrap(), placed, placed + 2400),
                    picked_up,
                });
            }
            c
        })
        .collect();
    MoaInstance {
        now,
        orders,
        couriers,
        config: DispatchConfig::default(),
        ctx,
    }
}

/// Hotspot-mode orders over few pickup AOIs and couriers of capacity 3
/// holding at most one order, so spare capacity always covers the orders
/// when `max_couriers * 2 >= max_orders`.
pub fn random_seh(seed: u64, max_orders: usize, max_couriers: usize) -> (Vec<Order>, Vec<Courier>) {
    let mut rng = rng(seed);
    let aois: Vec<AoiId> = (0..GRID * GRID).map(AoiId).collect();
    let pickups: Vec<AoiId> = aois[..3].to_vec();
    let drops: Vec<AoiId> = aois[10..15].to_vec();
    let n = rng.random_range(1..=max_orders);
    let m = rng.random_range(1..=max_couriers).max(n.div_ceil(2));
    let orders = (0..n)
        .map(|k| order(k as u64 + 1, *pickups.choose(&mut rng).unwrap(), *drops.choose(&mut rng).unwrap(), 0, 3600))
        .collect();
    let couriers = (0..m)
        .map(|k| {
            let mut c = Courier::idle(CourierId(k as u32 + 1), *pickups.choose(&mut rng).unwrap(), 3);
            if rng.random_bool(0.5) {
                c.on_hand.push(OnHand {
                    order: order(100 + k as u64, *pickups.choose(&mut rng).unwrap(), *drops.choose(&mut rng).unwrap(), 0, 3600),
                    picked_up: rng.random_bool(0.5),
                });
            }
            c
        })
        .collect();
    (orders, couriers)
}

/// A partition instance over `n` FUs whose HPP comes from cosine
/// similarity of clustered random vectors.
pub fn random_bp(seed: u64, n: usize, relaxed: bool) -> BpInstance {
    let mut rng = rng(seed);
    let dim = 4;
    let k = rng.random_range(2..=3);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect();
    let vecs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let c = centers.choose(&mut rng).unwrap();
            c.iter().map(|x| x + 0.5 * (rng.random::<f64>() * 2.0 - 1.0)).collect()
        })
        .collect();
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let hpp: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { cos(&vecs[i.min(j)], &vecs[i.max(j)]) }).collect())
        .collect();
    let volumes: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..30.0)).collect();
    BpInstance::new(
        (0..n as u32).map(|i| FuId(i + 1)).collect(),
        hpp,
        volumes,
        2,
        (2, 6),
        30.0,
        0.2,
        relaxed,
    )
    .expect("well-formed instance")
}
