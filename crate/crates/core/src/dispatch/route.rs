use serde::{Deserialize, Serialize};

use super::{Courier, DispatchConfig, Order};
use crate::geo::{AoiId, AoiMap};
use crate::network::OrderId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Pickup,
    Delivery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub order: OrderId,
    pub kind: TaskKind,
    pub aoi: AoiId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub start: AoiId,
    pub start_time: f64,
    pub tasks: Vec<Task>,
    pub distance_m: f64,
    /// Completion time of each task. Consecutive tasks at one AOI form a
    /// single stop and share one dwell.
    pub times: Vec<f64>,
}

impl Route {
    pub fn build(start: AoiId, start_time: f64, tasks: Vec<Task>, centroids: &AoiMap, cfg: &DispatchConfig) -> Self {
        let mut t = start_time;
        let mut at = start;
        let mut distance_m = 0.0;
        let mut times = Vec::with_capacity(tasks.len());
        for (k, task) in tasks.iter().enumerate() {
            let d = centroids.dist(at, task.aoi);
            distance_m += d;
            t += d / cfg.speed_mps;
            if k == 0 || task.aoi != at {
                t += cfg.service_secs;
            }
            times.push(t);
            at = task.aoi;
        }
        Route {
            start,
            start_time,
            tasks,
            distance_m,
            times,
        }
    }

    pub fn delivery_time(&self, order: OrderId) -> Option<f64> {
        self.tasks
            .iter()
            .zip(&self.times)
            .find(|(t, _)| t.order == order && t.kind == TaskKind::Delivery)
            .map(|(_, &time)| time)
    }

    pub fn pickup_time(&self, order: OrderId) -> Option<f64> {
        self.tasks
            .iter()
            .zip(&self.times)
            .find(|(t, _)| t.order == order && t.kind == TaskKind::Pickup)
            .map(|(_, &time)| time)
    }

    /// Every order with a pickup task also has a later delivery task.
    pub fn precedence_holds(&self) -> bool {
        for (k, t) in self.tasks.iter().enumerate() {
            if t.kind == TaskKind::Pickup
                && !self.tasks[k + 1..]
                    .iter()
                    .any(|u| u.order == t.order && u.kind == TaskKind::Delivery)
            {
                return false;
            }
            if t.kind == TaskKind::Delivery && self.tasks[k + 1..].iter().any(|u| u.order == t.order) {
                return false;
            }
        }
        true
    }
}

pub fn route_distance(start: AoiId, tasks: &[Task], centroids: &AoiMap) -> f64 {
    let mut at = start;
    let mut d = 0.0;
    for t in tasks {
        d += centroids.dist(at, t.aoi);
        at = t.aoi;
    }
    d
}

const TIE_EPS: f64 = 1e-9;

/// Cheapest insertion of one order's tasks; `pickup` is false for an order
/// already picked up (delivery only). Existing task order is preserved.
/// Returns the new task list and the added distance.
pub(crate) fn insert_order(
    start: AoiId,
    tasks: &[Task],
    order: &Order,
    pickup: bool,
    centroids: &AoiMap,
) -> (Vec<Task>, f64) {
    let node = |k: usize| if k == 0 { start } else { tasks[k - 1].aoi };
    let n = tasks.len();
    let d = |a: AoiId, b: AoiId| centroids.dist(a, b);
    let (p, q) = (order.pickup_aoi, order.delivery_aoi);
    let delivery = Task {
        order: order.id,
        kind: TaskKind::Delivery,
        aoi: q,
    };
    // Insert-after-node cost for a single stop.
    let single = |k: usize, x: AoiId| {
        let base = d(node(k), x);
        if k < n {
            base + d(x, node(k + 1)) - d(node(k), node(k + 1))
        } else {
            base
        }
    };
    if !pickup {
        let (mut best, mut at) = (f64::INFINITY, 0);
        for j in 0..=n {
            let c = single(j, q);
            if c < best - TIE_EPS {
                best = c;
                at = j;
            }
        }
        let mut out = tasks.to_vec();
        out.insert(at, delivery);
        return (out, best.max(0.0));
    }
    let (mut best, mut bi, mut bj) = (f64::INFINITY, 0, 0);
    for i in 0..=n {
        for j in i..=n {
            let c = if i == j {
                let tail = if i < n { d(q, node(i + 1)) - d(node(i), node(i + 1)) } else { 0.0 };
                d(node(i), p) + d(p, q) + tail
            } else {
                single(i, p) + single(j, q)
            };
            if c < best - TIE_EPS {
                best = c;
                bi = i;
                bj = j;
            }
        }
    }
    let mut out = Vec::with_capacity(n + 2);
    out.extend_from_slice(&tasks[..bi]);
    out.push(Task {
        order: order.id,
        kind: TaskKind::Pickup,
        aoi: p,
    });
    out.extend_from_slice(&tasks[bi..bj]);
    out.push(delivery);
    out.extend_from_slice(&tasks[bj..]);
    (out, best.max(0.0))
}

/// The courier's current plan: its stored task list, or the on-hand orders
/// inserted one by one in list order.
pub fn base_route(courier: &Courier, centroids: &AoiMap) -> Vec<Task> {
    if !courier.planned.is_empty() {
        return courier.planned.clone();
    }
    let mut tasks = Vec::new();
    for h in &courier.on_hand {
        tasks = insert_order(courier.current_aoi, &tasks, &h.order, !h.picked_up, centroids).0;
    }
    tasks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Capacity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRoute {
    pub route: Route,
    pub incremental_m: f64,
}

/// Inserts `new_orders` (in the given order) into the courier's plan.
pub fn plan_route_insertion(
    courier: &Courier,
    new_orders: &[&Order],
    now: i64,
    centroids: &AoiMap,
    cfg: &DispatchConfig,
) -> Result<PlannedRoute, Rejection> {
    let base = base_route(courier, centroids);
    plan_from_base(courier, &base, new_orders, now, centroids, cfg)
}

pub(crate) fn plan_from_base(
    courier: &Courier,
    base: &[Task],
    new_orders: &[&Order],
    now: i64,
    centroids: &AoiMap,
    cfg: &DispatchConfig,
) -> Result<PlannedRoute, Rejection> {
    if courier.on_hand.len() + new_orders.len() > courier.capacity {
        return Err(Rejection::Capacity);
    }
    let mut tasks = base.to_vec();
    let mut added = 0.0;
    for o in new_orders {
        let (t, c) = insert_order(courier.current_aoi, &tasks, o, true, centroids);
        tasks = t;
        added += c;
    }
    let start_time = (now.max(courier.available_at)) as f64;
    Ok(PlannedRoute {
        route: Route::build(courier.current_aoi, start_time, tasks, centroids, cfg),
        incremental_m: added,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dispatch::OnHand;
    use crate::geo::GeoPoint;
    use crate::network::{CourierId, FuId};

    /// AOIs on a line, `k` at `k * 1000` m east.
    pub fn line(n: u32) -> AoiMap {
        let mut m = AoiMap::default();
        let o = GeoPoint::new(30.0, 120.0).unwrap();
        for k in 0..n {
            m.insert(AoiId(k), o.offset_m(1000.0 * k as f64, 0.0)).unwrap();
        }
        m
    }

    pub fn order(id: u64, p: u32, d: u32) -> Order {
        Order {
            id: OrderId(id),
            fu: FuId(p * 100 + d),
            pickup_aoi: AoiId(p),
            delivery_aoi: AoiId(d),
            placed_at: 0,
            deadline: 3600,
        }
    }

    #[test]
    fn empty_route_single_order() {
        let m = line(5);
        let c = Courier::idle(CourierId(0), AoiId(0), 3);
        let o = order(1, 2, 4);
        let p = plan_route_insertion(&c, &[&o], 0, &m, &DispatchConfig::default()).unwrap();
        assert_eq!(p.route.tasks.len(), 2);
        assert_eq!(p.route.tasks[0].kind, TaskKind::Pickup);
        let want = m.dist(AoiId(0), AoiId(2)) + m.dist(AoiId(2), AoiId(4));
        assert!((p.incremental_m - want).abs() < 1e-6);
        assert!((p.route.distance_m - want).abs() < 1e-6);
    }

    #[test]
    fn co_located_second_order_is_free() {
        let m = line(5);
        let mut c = Courier::idle(CourierId(0), AoiId(0), 3);
        c.on_hand.push(OnHand {
            order: order(1, 2, 4),
            picked_up: false,
        });
        let p = plan_route_insertion(&c, &[&order(2, 2, 4)], 0, &m, &DispatchConfig::default()).unwrap();
        assert!(p.incremental_m.abs() < 1e-6);
        assert!(p.route.precedence_holds());
    }

    #[test]
    fn picked_up_orders_get_delivery_only() {
        let m = line(5);
        let mut c = Courier::idle(CourierId(0), AoiId(1), 3);
        c.on_hand.push(OnHand {
            order: order(1, 0, 3),
            picked_up: true,
        });
        let base = base_route(&c, &m);
        assert_eq!(base.len(), 1);
        assert_eq!(base[0].kind, TaskKind::Delivery);
    }

    #[test]
    fn capacity_rejection() {
        let m = line(3);
        let c = Courier::idle(CourierId(0), AoiId(0), 1);
        let (a, b) = (order(1, 0, 1), order(2, 0, 2));
        assert_eq!(
            plan_route_insertion(&c, &[&a, &b], 0, &m, &DispatchConfig::default()),
            Err(Rejection::Capacity)
        );
    }

    #[test]
    fn co_located_tasks_share_a_dwell() {
        let m = line(3);
        let cfg = DispatchConfig::default();
        let c = Courier::idle(CourierId(0), AoiId(0), 2);
        let (a, b) = (order(1, 1, 2), order(2, 1, 2));
        let p = plan_route_insertion(&c, &[&a, &b], 0, &m, &cfg).unwrap();
        assert_eq!(p.route.times[0], p.route.times[1]);
        assert_eq!(p.route.times[2], p.route.times[3]);
    }

    #[test]
    fn times_follow_speed_and_dwell() {
        let m = line(3);
        let cfg = DispatchConfig::default();
        let c = Courier::idle(CourierId(0), AoiId(0), 2);
        let p = plan_route_insertion(&c, &[&order(1, 1, 2)], 100, &m, &cfg).unwrap();
        let leg = m.dist(AoiId(0), AoiId(1));
        assert!((p.route.times[0] - (100.0 + leg / 5.0 + 60.0)).abs() < 1e-6);
    }
}
