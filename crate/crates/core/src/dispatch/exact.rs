use std::collections::{BTreeMap, HashMap};

use super::score::md_score;
use super::{AssignedEntity, Assignment, MoaInstance, Order};
use crate::error::{Error, Result};
use crate::network::{CourierId, OrderId};

/// Size limits of the exhaustive assignment solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactCaps {
    pub orders: usize,
    pub couriers: usize,
    /// Most new orders one courier may take.
    pub bundle: usize,
}

impl Default for ExactCaps {
    fn default() -> Self {
        ExactCaps {
            orders: 6,
            couriers: 5,
            bundle: 3,
        }
    }
}

/// Objective of a complete assignment: the sum over couriers of the MD
/// score of all their new orders against the initial courier state. New
/// orders are inserted in id order.
pub fn total_md(inst: &MoaInstance, by_courier: &BTreeMap<CourierId, Vec<OrderId>>) -> f64 {
    let orders: HashMap<OrderId, &Order> = inst.orders.iter().map(|o| (o.id, o)).collect();
    by_courier
        .iter()
        .map(|(cid, ids)| {
            let c = inst.couriers.iter().find(|c| c.id == *cid).expect("courier in instance");
            let mut os: Vec<&Order> = ids.iter().map(|id| orders[id]).collect();
            os.sort_by_key(|o| o.id);
            md_score(c, &os, inst.now, &inst.ctx, &inst.config).total
        })
        .sum()
}

/// Odometer step over labelings; false after the last one.
fn advance(labels: &mut [usize], m: usize) -> bool {
    for k in (0..labels.len()).rev() {
        labels[k] += 1;
        if labels[k] < m {
            return true;
        }
        labels[k] = 0;
    }
    false
}

/// Exhaustive search over every order-to-courier labeling that respects
/// capacity, the per-courier cap and `caps.bundle`. Ties keep the first
/// labeling in lexicographic order. Returns the assignment and the number
/// of distinct MD evaluations.
pub fn solve_moa_exact(inst: &MoaInstance, caps: ExactCaps) -> Result<(Assignment, usize)> {
    inst.validate()?;
    let (n, m) = (inst.orders.len(), inst.couriers.len());
    if n > caps.orders || m > caps.couriers {
        return Err(Error::CapsExceeded(format!(
            "{n} orders / {m} couriers exceeds {} / {}",
            caps.orders, caps.couriers
        )));
    }
    let mut orders: Vec<&Order> = inst.orders.iter().collect();
    orders.sort_by_key(|o| o.id);
    let limit: Vec<usize> = inst
        .couriers
        .iter()
        .map(|c| c.spare().min(caps.bundle).min(inst.config.max_new_per_courier))
        .collect();
    let mut memo: HashMap<(usize, u32), f64> = HashMap::new();
    let mut cost = |r: usize, mask: u32| -> f64 {
        if mask == 0 {
            return 0.0;
        }
        *memo.entry((r, mask)).or_insert_with(|| {
            let os: Vec<&Order> = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| orders[k]).collect();
            md_score(&inst.couriers[r], &os, inst.now, &inst.ctx, &inst.config).total
        })
    };

    let mut best: Option<(f64, Vec<usize>)> = None;
    if m > 0 {
        let mut labels = vec![0usize; n];
        loop {
            let mut masks = vec![0u32; m];
            for (k, &r) in labels.iter().enumerate() {
                masks[r] |= 1 << k;
            }
            if masks.iter().zip(&limit).all(|(mk, &l)| mk.count_ones() as usize <= l) {
                let total: f64 = (0..m).map(|r| cost(r, masks[r])).sum();
                if total.is_finite() && best.as_ref().is_none_or(|(b, _)| total < b - 1e-12) {
                    best = Some((total, labels.clone()));
                }
            }
            if !advance(&mut labels, m) {
                break;
            }
        }
    }
    let evaluations = memo.len();
    let Some((total, labels)) = best else {
        return Ok((
            Assignment {
                entities: Vec::new(),
                unassigned: orders.iter().map(|o| o.id).collect(),
                total_md: 0.0,
                partial: n > 0,
            },
            evaluations,
        ));
    };
    let mut entities = Vec::new();
    for (r, c) in inst.couriers.iter().enumerate() {
        let ids: Vec<OrderId> = (0..n).filter(|&k| labels[k] == r).map(|k| orders[k].id).collect();
        if !ids.is_empty() {
            let mask = (0..n).filter(|&k| labels[k] == r).fold(0u32, |a, k| a | 1 << k);
            entities.push(AssignedEntity {
                orders: ids,
                courier: c.id,
                score: memo[&(r, mask)],
                iteration: 1,
            });
        }
    }
    Ok((
        Assignment {
            entities,
            unassigned: Vec::new(),
            total_md: total,
            partial: false,
        },
        evaluations,
    ))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dispatch::route::tests::{line, order};
    use crate::dispatch::{solve_moa_iterative, BundlingMode, Courier, DispatchConfig, DispatchContext};
    use crate::geo::AoiId;

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
    fn caps_are_enforced() {
        let orders = (1..=7).map(|k| order(k, 0, 1)).collect();
        let i = inst(orders, vec![Courier::idle(CourierId(0), AoiId(0), 9)]);
        assert!(matches!(solve_moa_exact(&i, ExactCaps::default()), Err(Error::CapsExceeded(_))));
    }

    #[test]
    fn exact_never_worse_than_greedy() {
        let i = inst(
            vec![order(1, 1, 2), order(2, 5, 6), order(3, 1, 3), order(4, 6, 7)],
            vec![
                Courier::idle(CourierId(0), AoiId(0), 3),
                Courier::idle(CourierId(1), AoiId(7), 3),
                Courier::idle(CourierId(2), AoiId(3), 3),
            ],
        );
        let (e, evals) = solve_moa_exact(&i, ExactCaps::default()).unwrap();
        assert!(evals > 0);
        let (g, _) = solve_moa_iterative(&i, BundlingMode::None).unwrap();
        assert!(e.total_md <= g.total_md + 1e-9);
        assert!((total_md(&i, &e.by_courier()) - e.total_md).abs() < 1e-9);
    }
}
