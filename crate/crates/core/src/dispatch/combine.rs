use super::score::on_hand_affinity;
use super::{Courier, DispatchContext, Order, RuledRule};

/// Mutually exclusive order pairs plus the remaining single orders, as
/// indices into the pending list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Combination {
    pub bundles: Vec<(usize, usize)>,
    pub singles: Vec<usize>,
}

fn greedy_disjoint(n: usize, mut pairs: Vec<(f64, usize, usize)>, orders: &[Order]) -> Combination {
    // Ascending key, ties broken by the smaller order ids.
    pairs.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then(orders[x.1].id.cmp(&orders[y.1].id))
            .then(orders[x.2].id.cmp(&orders[y.2].id))
    });
    let mut used = vec![false; n];
    let mut bundles = Vec::new();
    for (_, a, b) in pairs {
        if !used[a] && !used[b] {
            used[a] = true;
            used[b] = true;
            bundles.push((a, b));
        }
    }
    let singles = (0..n).filter(|&k| !used[k]).collect();
    Combination { bundles, singles }
}

fn ordered_pair(orders: &[Order], a: usize, b: usize) -> (usize, usize) {
    if orders[a].id <= orders[b].id {
        (a, b)
    } else {
        (b, a)
    }
}

/// Pairs pending orders by HPP: pairs below `p1` are pruned, then the
/// highest-HPP pair is taken repeatedly, discarding every pair that shares
/// an order with it. Unknown HPP counts as 0.
pub fn combine_orders(orders: &[Order], ctx: &DispatchContext, p1: f64) -> Combination {
    let n = orders.len();
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let p = ctx.hpp(Some(orders[a].fu), Some(orders[b].fu));
            if p >= p1 {
                let (x, y) = ordered_pair(orders, a, b);
                pairs.push((-p, x, y));
            }
        }
    }
    greedy_disjoint(n, pairs, orders)
}

/// Baseline pairing: same pickup AOI, delivery centroids within the
/// radius, deadlines within the gap. Closest deliveries pair first.
pub fn ruled_bundles(orders: &[Order], ctx: &DispatchContext, rule: &RuledRule) -> Combination {
    let n = orders.len();
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let (oa, ob) = (&orders[a], &orders[b]);
            if oa.pickup_aoi != ob.pickup_aoi || (oa.deadline - ob.deadline).abs() > rule.deadline_gap_secs {
                continue;
            }
            let Some(d) = ctx.centroids.distance(oa.delivery_aoi, ob.delivery_aoi) else {
                continue;
            };
            if d <= rule.delivery_radius_m {
                let (x, y) = ordered_pair(orders, a, b);
                pairs.push((d, x, y));
            }
        }
    }
    greedy_disjoint(n, pairs, orders)
}

/// Up to `k` eligible couriers closest to `order`'s pickup AOI. Couriers at
/// equal distance are ordered by a hash of the pickup AOI and courier id:
/// orders at one AOI agree on the order, while tied couriers are not
/// always ranked by id.
pub fn nearest_couriers(order: &Order, couriers: &[Courier], k: usize, ctx: &DispatchContext, eligible: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut cands: Vec<(f64, u64, usize)> = couriers
        .iter()
        .enumerate()
        .filter(|(r, _)| eligible(*r))
        .map(|(r, c)| {
            let d = ctx.centroids.distance(c.current_aoi, order.pickup_aoi).unwrap_or(f64::INFINITY);
            (d, tie_hash(order.pickup_aoi.0 as u64, c.id.0 as u64), r)
        })
        .collect();
    let k = k.min(cands.len());
    if k == 0 {
        return Vec::new();
    }
    let by = |x: &(f64, u64, usize), y: &(f64, u64, usize)| {
        x.0.total_cmp(&y.0)
            .then(x.1.cmp(&y.1))
            .then(couriers[x.2].id.cmp(&couriers[y.2].id))
    };
    cands.select_nth_unstable_by(k - 1, by);
    cands.truncate(k);
    cands.sort_by(by);
    cands.into_iter().map(|(_, _, r)| r).collect()
}

fn tie_hash(order: u64, courier: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = order.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ courier.wrapping_add(0x632b_e59b_d9b4_e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Drops candidates whose on-hand orders have mean HPP below `p2` with any
/// member of the entity. Couriers without on-hands always stay.
pub fn recall_couriers(entity: &[&Order], candidates: &[usize], couriers: &[Courier], ctx: &DispatchContext, p2: f64) -> Vec<usize> {
    candidates
        .iter()
        .copied()
        .filter(|&r| {
            entity
                .iter()
                .all(|o| on_hand_affinity(&couriers[r], o, ctx).is_none_or(|f| f >= p2))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::route::tests::{line, order};
    use crate::dispatch::OnHand;
    use crate::eatne::EmbeddingTable;
    use crate::geo::AoiId;
    use crate::indices::HppIndex;
    use crate::network::{CourierId, FuId};

    /// Context whose HPP between FU 0 and FU k equals `ps[k-1]`; other
    /// pairs derive from the same unit vectors.
    fn ctx_with(vectors: &[(u32, Vec<f64>)]) -> DispatchContext {
        let mut t = EmbeddingTable::new(vectors[0].1.len());
        for (fu, v) in vectors {
            t.insert_learned(FuId(*fu), v, v).unwrap();
        }
        DispatchContext {
            hpp: Some(HppIndex::new(&t)),
            ..DispatchContext::new(line(4))
        }
    }

    fn with_fu(id: u64, fu: u32) -> Order {
        Order { fu: FuId(fu), ..order(id, 0, 1) }
    }

    #[test]
    fn highest_hpp_pair_wins() {
        // Orthonormal basis chosen so that p(AB)=0.9, p(AC)=0.8, p(BC)=0.3
        // holds approximately; only the ranking matters here.
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.9, (1.0f64 - 0.81).sqrt(), 0.0];
        let c1 = 0.8;
        let c2 = (0.3 - 0.9 * c1) / b[1];
        let c3 = (1.0 - c1 * c1 - c2 * c2).max(0.0).sqrt();
        let ctx = ctx_with(&[(1, a), (2, b), (3, vec![c1, c2, c3])]);
        let orders = [with_fu(1, 1), with_fu(2, 2), with_fu(3, 3)];
        let comb = combine_orders(&orders, &ctx, 0.6);
        assert_eq!(comb.bundles, vec![(0, 1)]);
        assert_eq!(comb.singles, vec![2]);
    }

    #[test]
    fn threshold_is_inclusive() {
        let ctx = ctx_with(&[(1, vec![1.0, 0.0]), (2, vec![0.6, 0.8])]);
        let orders = [with_fu(1, 1), with_fu(2, 2)];
        let p = ctx.hpp(Some(FuId(1)), Some(FuId(2)));
        let comb = combine_orders(&orders, &ctx, p);
        assert_eq!(comb.bundles.len(), 1);
        let comb = combine_orders(&orders, &ctx, p + 1e-9);
        assert!(comb.bundles.is_empty());
    }

    #[test]
    fn ruled_pairs_need_same_pickup_and_close_deadlines() {
        let ctx = DispatchContext::new(line(4));
        let mut o = vec![order(1, 0, 1), order(2, 0, 1), order(3, 1, 1), order(4, 0, 3)];
        o[1].deadline = o[0].deadline + 300;
        let comb = ruled_bundles(&o, &ctx, &RuledRule::default());
        assert_eq!(comb.bundles, vec![(0, 1)]);
        o[1].deadline = o[0].deadline + 601;
        assert!(ruled_bundles(&o, &ctx, &RuledRule::default()).bundles.is_empty());
    }

    #[test]
    fn recall_boundary_and_empty_on_hands() {
        // On-hand HPPs 0.8 and 0.2 with the new order: mean exactly 0.5.
        let ctx = ctx_with(&[(1, vec![1.0, 0.0]), (2, vec![0.8, 0.6]), (3, vec![0.2, (0.96f64).sqrt()])]);
        let mut busy = Courier::idle(CourierId(1), AoiId(0), 4);
        busy.on_hand = vec![
            OnHand { order: with_fu(10, 2), picked_up: false },
            OnHand { order: with_fu(11, 3), picked_up: false },
        ];
        let idle = Courier::idle(CourierId(2), AoiId(0), 4);
        let couriers = [busy, idle];
        let o = with_fu(1, 1);
        let f = on_hand_affinity(&couriers[0], &o, &ctx).unwrap();
        assert!((f - 0.5).abs() < 1e-6);
        assert_eq!(recall_couriers(&[&o], &[0, 1], &couriers, &ctx, f), vec![0, 1]);
        assert_eq!(recall_couriers(&[&o], &[0, 1], &couriers, &ctx, f + 1e-9), vec![1]);
    }

    #[test]
    fn picked_up_on_hand_uses_courier_location() {
        use crate::network::{FlowUnit, FuCatalog, ScenarioTag};
        let mut ctx = ctx_with(&[(1, vec![1.0, 0.0]), (7, vec![1.0, 0.0]), (2, vec![0.0, 1.0])]);
        ctx.scenario = Some(ScenarioTag::WeekdayPeak);
        ctx.catalog = FuCatalog::from_units([FlowUnit {
            id: FuId(7),
            pickup_aoi: AoiId(3),
            delivery_aoi: AoiId(1),
            scenario: ScenarioTag::WeekdayPeak,
        }])
        .unwrap();
        let mut c = Courier::idle(CourierId(1), AoiId(3), 4);
        // Order's own FU (2) is orthogonal; the synthetic FU (7) matches.
        c.on_hand = vec![OnHand { order: with_fu(10, 2), picked_up: true }];
        assert!((on_hand_affinity(&c, &with_fu(1, 1), &ctx).unwrap() - 1.0).abs() < 1e-6);
        c.on_hand[0].picked_up = false;
        assert!(on_hand_affinity(&c, &with_fu(1, 1), &ctx).unwrap().abs() < 1e-6);
    }

    #[test]
    fn nearest_respects_eligibility_and_k() {
        let ctx = DispatchContext::new(line(4));
        let couriers: Vec<Courier> = (0..4).map(|k| Courier::idle(CourierId(k), AoiId(k), 2)).collect();
        let o = order(1, 3, 0);
        assert_eq!(nearest_couriers(&o, &couriers, 2, &ctx, |_| true), vec![3, 2]);
        assert_eq!(nearest_couriers(&o, &couriers, 2, &ctx, |r| r != 3), vec![2, 1]);
    }
}
