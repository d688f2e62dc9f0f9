use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::combine::{combine_orders, nearest_couriers, recall_couriers, ruled_bundles, Combination};
use super::exact::total_md;
use super::route::{base_route, plan_from_base};
use super::score::md_with_base;
use super::{AssignedEntity, Assignment, DispatchReport, MoaInstance, OnHand, Order, Task};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundlingMode {
    /// Fixed pickup/delivery/deadline rule, no recall filter.
    Ruled,
    /// HPP-based combination plus HPP-based courier recall.
    Scdn,
    /// Orders are matched one by one.
    None,
}

struct Entity {
    members: Vec<usize>,
    candidates: Vec<usize>,
}

/// Iterative greedy many-to-one assignment. Each iteration forms entities
/// (bundles or single orders), scores every entity against its recalled
/// couriers, accepts matches in ascending cost with each entity and courier
/// used at most once, then updates courier state. Stops when all orders are
/// assigned, nothing was matched, or the iteration cap is reached.
pub fn solve_moa_iterative(inst: &MoaInstance, mode: BundlingMode) -> Result<(Assignment, DispatchReport)> {
    inst.validate()?;
    let start = Instant::now();
    let cfg = &inst.config;
    let ctx = &*inst.ctx;
    let mut couriers = inst.couriers.clone();
    let mut bases: Vec<Vec<Task>> = couriers.iter().map(|c| base_route(c, &ctx.centroids)).collect();
    let mut new_count = vec![0usize; couriers.len()];
    let mut pending: Vec<usize> = (0..inst.orders.len()).collect();
    pending.sort_by_key(|&k| inst.orders[k].id);

    let mut entities = Vec::new();
    let (mut evaluations, mut iterations, mut bundles_formed) = (0usize, 0usize, 0usize);

    while !pending.is_empty() && iterations < cfg.iteration_cap {
        iterations += 1;
        let pend: Vec<Order> = pending.iter().map(|&k| inst.orders[k].clone()).collect();
        let comb = match mode {
            BundlingMode::None => Combination {
                bundles: Vec::new(),
                singles: (0..pend.len()).collect(),
            },
            BundlingMode::Ruled => ruled_bundles(&pend, ctx, &cfg.ruled),
            BundlingMode::Scdn => combine_orders(&pend, ctx, cfg.p1),
        };
        let eligible = |r: usize, size: usize| couriers[r].spare() >= size && new_count[r] + size <= cfg.max_new_per_courier;
        let recalled = |k: usize| nearest_couriers(&pend[k], &couriers, cfg.recall_k, ctx, |r| eligible(r, 1));
        let filter = |members: &[usize], cands: Vec<usize>| -> Vec<usize> {
            if mode != BundlingMode::Scdn {
                return cands;
            }
            let refs: Vec<&Order> = members.iter().map(|&k| &pend[k]).collect();
            recall_couriers(&refs, &cands, &couriers, ctx, cfg.p2)
        };

        let mut ents: Vec<Entity> = Vec::new();
        let mut singles = comb.singles.clone();
        for &(a, b) in &comb.bundles {
            let cb = recalled(b);
            let inter: Vec<usize> = recalled(a)
                .into_iter()
                .filter(|r| cb.contains(r) && eligible(*r, 2))
                .collect();
            let cands = filter(&[a, b], inter);
            if cands.is_empty() {
                singles.extend([a, b]);
            } else {
                ents.push(Entity {
                    members: vec![a, b],
                    candidates: cands,
                });
            }
        }
        singles.sort_by_key(|&k| pend[k].id);
        for k in singles {
            // An order the recall filter would strand keeps its nearest couriers.
            let near = recalled(k);
            let kept = filter(&[k], near.clone());
            let cands = if kept.is_empty() { near } else { kept };
            ents.push(Entity {
                members: vec![k],
                candidates: cands,
            });
        }

        let pairs: Vec<(usize, usize)> = ents
            .iter()
            .enumerate()
            .flat_map(|(e, ent)| ent.candidates.iter().map(move |&r| (e, r)))
            .collect();
        evaluations += pairs.len();
        let mut scored: Vec<(f64, usize, usize)> = pairs
            .par_iter()
            .map(|&(e, r)| {
                let refs: Vec<&Order> = ents[e].members.iter().map(|&k| &pend[k]).collect();
                (md_with_base(&couriers[r], &bases[r], &refs, inst.now, ctx, cfg).total, e, r)
            })
            .filter(|s| s.0.is_finite())
            .collect();
        let first_id = |e: usize| pend[ents[e].members[0]].id;
        scored.sort_by(|x, y| {
            x.0.total_cmp(&y.0)
                .then(first_id(x.1).cmp(&first_id(y.1)))
                .then(couriers[x.2].id.cmp(&couriers[y.2].id))
        });

        let mut entity_done = vec![false; ents.len()];
        let mut courier_done = vec![false; couriers.len()];
        let mut matched = Vec::new();
        for (cost, e, r) in scored {
            if entity_done[e] || courier_done[r] {
                continue;
            }
            entity_done[e] = true;
            courier_done[r] = true;
            matched.push((cost, e, r));
        }
        if matched.is_empty() {
            break;
        }

        let mut assigned = vec![false; pend.len()];
        for (cost, e, r) in matched {
            let refs: Vec<&Order> = ents[e].members.iter().map(|&k| &pend[k]).collect();
            let planned = plan_from_base(&couriers[r], &bases[r], &refs, inst.now, &ctx.centroids, cfg)
                .expect("accepted match is feasible");
            bases[r] = planned.route.tasks;
            couriers[r].planned = bases[r].clone();
            for o in &refs {
                couriers[r].on_hand.push(OnHand {
                    order: (*o).clone(),
                    picked_up: false,
                });
            }
            new_count[r] += refs.len();
            if refs.len() > 1 {
                bundles_formed += 1;
            }
            for &k in &ents[e].members {
                assigned[k] = true;
            }
            entities.push(AssignedEntity {
                orders: refs.iter().map(|o| o.id).collect(),
                courier: couriers[r].id,
                score: cost,
                iteration: iterations,
            });
        }
        pending = pending
            .iter()
            .zip(&assigned)
            .filter(|(_, a)| !**a)
            .map(|(&k, _)| k)
            .collect();
    }

    let mut a = Assignment {
        entities,
        unassigned: pending.iter().map(|&k| inst.orders[k].id).collect(),
        total_md: 0.0,
        partial: !pending.is_empty(),
    };
    a.total_md = total_md(inst, &a.by_courier());
    let report = DispatchReport {
        method: format!("{mode:?}").to_lowercase(),
        orders: inst.orders.len(),
        assigned: inst.orders.len() - a.unassigned.len(),
        total_md: a.total_md,
        evaluations,
        iterations,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        histogram: a.histogram(),
        single_order_share: a.single_order_share(),
        bundles_formed,
        partial: a.partial,
    };
    Ok((a, report))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::dispatch::route::tests::{line, order};
    use crate::dispatch::{Courier, DispatchConfig, DispatchContext};
    use crate::geo::AoiId;
    use crate::network::CourierId;

    fn inst(orders: Vec<Order>, couriers: Vec<Courier>) -> MoaInstance {
        MoaInstance {
            now: 0,
            orders,
            couriers,
            config: DispatchConfig::default(),
            ctx: Arc::new(DispatchContext::new(line(8))),
        }
    }

    #[test]
    fn nearest_courier_gets_the_order() {
        let i = inst(
            vec![order(1, 6, 7)],
            vec![Courier::idle(CourierId(0), AoiId(0), 3), Courier::idle(CourierId(1), AoiId(5), 3)],
        );
        let (a, r) = solve_moa_iterative(&i, BundlingMode::None).unwrap();
        assert_eq!(a.entities.len(), 1);
        assert_eq!(a.entities[0].courier, CourierId(1));
        assert_eq!(r.evaluations, 2);
        assert!(!a.partial);
    }

    #[test]
    fn ruled_bundles_go_to_one_courier() {
        let i = inst(
            vec![order(1, 2, 3), order(2, 2, 3)],
            vec![Courier::idle(CourierId(0), AoiId(2), 3), Courier::idle(CourierId(1), AoiId(2), 3)],
        );
        let (a, r) = solve_moa_iterative(&i, BundlingMode::Ruled).unwrap();
        assert_eq!(r.bundles_formed, 1);
        assert_eq!(a.by_courier().len(), 1);
        assert_eq!(a.single_order_share(), 0.0);
    }

    #[test]
    fn leftover_orders_reported_as_partial() {
        let i = inst(vec![order(1, 0, 1), order(2, 0, 2)], vec![Courier::idle(CourierId(0), AoiId(0), 1)]);
        let (a, _) = solve_moa_iterative(&i, BundlingMode::None).unwrap();
        assert!(a.partial);
        assert_eq!(a.unassigned, vec![crate::network::OrderId(2)]);
    }

    #[test]
    fn recall_never_strands_a_single_order() {
        let mut c = Courier::idle(CourierId(0), AoiId(0), 3);
        c.on_hand.push(OnHand {
            order: order(100, 0, 7),
            picked_up: true,
        });
        let i = inst(vec![order(1, 2, 3)], vec![c]);
        let near = nearest_couriers(&i.orders[0], &i.couriers, 20, &i.ctx, |_| true);
        assert!(recall_couriers(&[&i.orders[0]], &near, &i.couriers, &i.ctx, i.config.p2).is_empty());
        let (a, _) = solve_moa_iterative(&i, BundlingMode::Scdn).unwrap();
        assert!(!a.partial);
        assert_eq!(a.entities[0].courier, CourierId(0));
    }

    fn arb_instance() -> impl Strategy<Value = MoaInstance> {
        (
            prop::collection::vec((0u32..8, 0u32..8), 1..10),
            prop::collection::vec((0u32..8, 0usize..4, 0usize..3), 1..6),
        )
            .prop_map(|(os, cs)| {
                let orders = os.iter().enumerate().map(|(k, &(p, d))| order(k as u64 + 1, p, d)).collect();
                let couriers = cs
                    .iter()
                    .enumerate()
                    .map(|(k, &(at, cap, held))| {
                        let mut c = Courier::idle(CourierId(k as u32), AoiId(at), cap + held.min(1));
                        for h in 0..held.min(c.capacity) {
                            c.on_hand.push(OnHand {
                                order: order(1000 + 10 * k as u64 + h as u64, at, (at + 1) % 8),
                                picked_up: h % 2 == 0,
                            });
                        }
                        c
                    })
                    .collect();
                inst(orders, couriers)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn every_order_once_and_capacity_respected(i in arb_instance(), mode in prop_oneof![
            Just(BundlingMode::None), Just(BundlingMode::Ruled), Just(BundlingMode::Scdn)
        ]) {
            let (a, r) = solve_moa_iterative(&i, mode).unwrap();
            let mut seen: Vec<_> = a.entities.iter().flat_map(|e| e.orders.clone()).chain(a.unassigned.clone()).collect();
            seen.sort();
            let mut want: Vec<_> = i.orders.iter().map(|o| o.id).collect();
            want.sort();
            prop_assert_eq!(seen, want);
            for (cid, os) in a.by_courier() {
                let c = i.couriers.iter().find(|c| c.id == cid).unwrap();
                prop_assert!(c.on_hand.len() + os.len() <= c.capacity);
                prop_assert!(os.len() <= i.config.max_new_per_courier);
            }
            prop_assert!(r.iterations <= i.config.iteration_cap);
            prop_assert!(a.total_md.is_finite());
        }

        #[test]
        fn deterministic(i in arb_instance()) {
            let (a, _) = solve_moa_iterative(&i, BundlingMode::Scdn).unwrap();
            let (b, _) = solve_moa_iterative(&i, BundlingMode::Scdn).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
