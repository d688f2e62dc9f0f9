use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Courier, Order};
use crate::geo::AoiId;

/// Hotspot-mode cost: weighted growth in the number of distinct pickup
/// AOIs still to visit and distinct delivery AOIs.
pub fn seh_md(courier: &Courier, orders: &[&Order], weights: [f64; 2]) -> f64 {
    let pickups = |extra: &[&Order]| -> usize {
        courier
            .on_hand
            .iter()
            .filter(|h| !h.picked_up)
            .map(|h| h.order.pickup_aoi)
            .chain(extra.iter().map(|o| o.pickup_aoi))
            .collect::<BTreeSet<AoiId>>()
            .len()
    };
    let deliveries = |extra: &[&Order]| -> usize {
        courier
            .on_hand
            .iter()
            .map(|h| h.order.delivery_aoi)
            .chain(extra.iter().map(|o| o.delivery_aoi))
            .collect::<BTreeSet<AoiId>>()
            .len()
    };
    let dp = pickups(orders) - pickups(&[]);
    let dd = deliveries(orders) - deliveries(&[]);
    weights[0] * dp as f64 + weights[1] * dd as f64
}

/// Sum of per-courier hotspot costs for a labeling (`None` = unassigned).
pub fn seh_assignment_cost(orders: &[Order], couriers: &[Courier], labels: &[Option<usize>], weights: [f64; 2]) -> f64 {
    (0..couriers.len())
        .map(|r| {
            let os: Vec<&Order> = orders.iter().zip(labels).filter(|(_, l)| **l == Some(r)).map(|(o, _)| o).collect();
            if os.is_empty() {
                0.0
            } else {
                seh_md(&couriers[r], &os, weights)
            }
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HillClimbParams {
    /// Extra runs from random feasible starts after the greedy start.
    pub restarts: usize,
    /// Most improving moves per run.
    pub move_cap: usize,
    pub seed: u64,
}

impl Default for HillClimbParams {
    fn default() -> Self {
        HillClimbParams {
            restarts: 8,
            move_cap: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SehAssignment {
    /// Courier index per order; `None` for overflow.
    pub labels: Vec<Option<usize>>,
    pub cost: f64,
    /// Orders left over because total spare capacity ran out.
    pub overflow: Vec<usize>,
}

const EPS: f64 = 1e-12;

struct Climb<'a> {
    orders: &'a [Order],
    couriers: &'a [Courier],
    weights: [f64; 2],
}

impl Climb<'_> {
    fn courier_cost(&self, r: usize, labels: &[Option<usize>]) -> f64 {
        let os: Vec<&Order> = self.orders.iter().zip(labels).filter(|(_, l)| **l == Some(r)).map(|(o, _)| o).collect();
        if os.is_empty() {
            0.0
        } else {
            seh_md(&self.couriers[r], &os, self.weights)
        }
    }

    fn load(&self, r: usize, labels: &[Option<usize>]) -> usize {
        labels.iter().filter(|l| **l == Some(r)).count()
    }

    /// Best-improvement local search with relocate and swap moves.
    fn run(&self, labels: &mut [Option<usize>], cap: usize) -> f64 {
        let m = self.couriers.len();
        let mut per: Vec<f64> = (0..m).map(|r| self.courier_cost(r, labels)).collect();
        for _ in 0..cap {
            let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
            let consider = |delta: f64, mv: Vec<(usize, usize)>, best: &mut Option<(f64, Vec<(usize, usize)>)>| {
                if delta < -EPS && best.as_ref().is_none_or(|(b, _)| delta < b - EPS) {
                    *best = Some((delta, mv));
                }
            };
            for i in 0..labels.len() {
                let Some(from) = labels[i] else { continue };
                for to in 0..m {
                    if to == from || self.load(to, labels) >= self.couriers[to].spare() {
                        continue;
                    }
                    labels[i] = Some(to);
                    let delta = self.courier_cost(from, labels) + self.courier_cost(to, labels) - per[from] - per[to];
                    labels[i] = Some(from);
                    consider(delta, vec![(i, to)], &mut best);
                }
                for j in i + 1..labels.len() {
                    let Some(other) = labels[j] else { continue };
                    if other == from {
                        continue;
                    }
                    labels.swap(i, j);
                    let delta = self.courier_cost(from, labels) + self.courier_cost(other, labels) - per[from] - per[other];
                    labels.swap(i, j);
                    consider(delta, vec![(i, other), (j, from)], &mut best);
                }
            }
            let Some((_, mv)) = best else { break };
            let mut touched = BTreeSet::new();
            for &(i, to) in &mv {
                touched.insert(labels[i].unwrap());
                touched.insert(to);
                labels[i] = Some(to);
            }
            for r in touched {
                per[r] = self.courier_cost(r, labels);
            }
        }
        per.iter().sum()
    }
}

/// Assigns hotspot orders to the hotspot's dedicated couriers by hill
/// climbing: a greedy start (orders by id, cheapest marginal courier),
/// then relocate/swap moves that strictly lower the total, repeated from
/// seeded random feasible starts. The best labeling found is returned.
pub fn solve_seh_hillclimb(orders: &[Order], couriers: &[Courier], weights: [f64; 2], params: HillClimbParams) -> SehAssignment {
    let climb = Climb { orders, couriers, weights };
    let n = orders.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by_key(|&k| orders[k].id);

    let mut labels = vec![None; n];
    let mut overflow = Vec::new();
    for &k in &idx {
        let mut best: Option<(f64, usize)> = None;
        for r in 0..couriers.len() {
            if climb.load(r, &labels) >= couriers[r].spare() {
                continue;
            }
            let before = climb.courier_cost(r, &labels);
            labels[k] = Some(r);
            let delta = climb.courier_cost(r, &labels) - before;
            labels[k] = None;
            if best.is_none_or(|(b, _)| delta < b - EPS) {
                best = Some((delta, r));
            }
        }
        match best {
            Some((_, r)) => labels[k] = Some(r),
            None => overflow.push(k),
        }
    }
    let mut best_cost = climb.run(&mut labels, params.move_cap);
    let mut best_labels = labels;

    let assigned: Vec<usize> = idx.iter().copied().filter(|k| !overflow.contains(k)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for _ in 0..params.restarts {
        let mut slots: Vec<usize> = (0..couriers.len()).flat_map(|r| std::iter::repeat_n(r, couriers[r].spare())).collect();
        slots.shuffle(&mut rng);
        let mut labels = vec![None; n];
        for (&k, &r) in assigned.iter().zip(&slots) {
            labels[k] = Some(r);
        }
        let c = climb.run(&mut labels, params.move_cap);
        if c < best_cost - EPS {
            best_cost = c;
            best_labels = labels;
        }
    }
    SehAssignment {
        labels: best_labels,
        cost: best_cost,
        overflow,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dispatch::route::tests::order;
    use crate::dispatch::OnHand;
    use crate::network::CourierId;

    #[test]
    fn seh_md_counts_new_distinct_aois() {
        let mut c = Courier::idle(CourierId(0), AoiId(0), 5);
        c.on_hand.push(OnHand {
            order: order(1, 1, 2),
            picked_up: false,
        });
        assert_eq!(seh_md(&c, &[&order(2, 1, 2)], [0.5, 0.5]), 0.0);
        assert_eq!(seh_md(&c, &[&order(2, 3, 2)], [0.5, 0.5]), 0.5);
        assert_eq!(seh_md(&c, &[&order(2, 3, 4), &order(3, 3, 5)], [0.5, 0.5]), 1.5);
        c.on_hand[0].picked_up = true;
        assert_eq!(seh_md(&c, &[&order(2, 1, 2)], [0.5, 0.5]), 0.5);
    }

    #[test]
    fn groups_shared_aois() {
        let orders = vec![order(1, 1, 2), order(2, 3, 4), order(3, 1, 2), order(4, 3, 4)];
        let couriers = vec![Courier::idle(CourierId(0), AoiId(0), 2), Courier::idle(CourierId(1), AoiId(0), 2)];
        let s = solve_seh_hillclimb(&orders, &couriers, [0.5, 0.5], HillClimbParams::default());
        assert_eq!(s.cost, 2.0);
        assert_eq!(s.labels[0], s.labels[2]);
        assert_eq!(s.labels[1], s.labels[3]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn capacity_and_cost_consistent(
            os in prop::collection::vec((0u32..4, 0u32..4), 0..8),
            caps in prop::collection::vec(0usize..4, 1..4),
        ) {
            let orders: Vec<Order> = os.iter().enumerate().map(|(k, &(p, d))| order(k as u64, p, d)).collect();
            let couriers: Vec<Courier> = caps.iter().enumerate().map(|(k, &c)| Courier::idle(CourierId(k as u32), AoiId(0), c)).collect();
            let s = solve_seh_hillclimb(&orders, &couriers, [0.5, 0.5], HillClimbParams::default());
            let spare: usize = caps.iter().sum();
            prop_assert_eq!(s.overflow.len(), orders.len().saturating_sub(spare));
            for (r, c) in couriers.iter().enumerate() {
                prop_assert!(s.labels.iter().filter(|l| **l == Some(r)).count() <= c.spare());
            }
            prop_assert!((seh_assignment_cost(&orders, &couriers, &s.labels, [0.5, 0.5]) - s.cost).abs() < 1e-9);
        }
    }
}
