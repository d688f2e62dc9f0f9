use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dispatch::{plan_route_insertion, Courier, DispatchConfig, OnHand, Order, Route, TaskKind};
use crate::geo::{AoiId, AoiMap};
use crate::network::{Action, CourierId, OrderId, TrajectoryEvent};

/// Life cycle of one order in a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderOutcome {
    pub order: Order,
    pub courier: Option<CourierId>,
    pub assigned_at: Option<i64>,
    pub picked_at: Option<f64>,
    pub delivered_at: Option<f64>,
    /// Interval since the courier's preceding pickup; `None` for a
    /// courier's first pickup.
    pub incremental_pickup_secs: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimCourier {
    pub state: Courier,
    pub events: Vec<TrajectoryEvent>,
    pub busy_secs: f64,
    pub delivered: usize,
    /// Idle couriers with a hub travel back to it.
    pub hub: Option<AoiId>,
    /// First assignment and last delivery bound the courier's work span.
    pub first_assigned: Option<f64>,
    pub last_delivery: Option<f64>,
    mark: f64,
    last_pickup: Option<f64>,
}

impl SimCourier {
    pub fn new(state: Courier) -> Self {
        SimCourier {
            state,
            events: Vec::new(),
            busy_secs: 0.0,
            delivered: 0,
            hub: None,
            first_assigned: None,
            last_delivery: None,
            mark: 0.0,
            last_pickup: None,
        }
    }

    pub fn idle(&self) -> bool {
        self.state.planned.is_empty()
    }

    /// Orders delivered per hour of work span; `None` before the first
    /// delivery.
    pub fn orders_per_hour(&self) -> Option<f64> {
        let span = self.last_delivery? - self.first_assigned?;
        (self.delivered > 0 && span > 0.0).then(|| self.delivered as f64 * 3600.0 / span)
    }
}

/// Couriers moving along their planned routes, one dispatch cycle at a time.
pub struct Simulation<'a> {
    pub centroids: &'a AoiMap,
    pub cfg: DispatchConfig,
    pub couriers: Vec<SimCourier>,
    pub outcomes: BTreeMap<OrderId, OrderOutcome>,
    pub now: i64,
}

impl<'a> Simulation<'a> {
    pub fn new(centroids: &'a AoiMap, cfg: DispatchConfig, couriers: Vec<SimCourier>, start: i64) -> Self {
        Simulation {
            centroids,
            cfg,
            couriers,
            outcomes: BTreeMap::new(),
            now: start,
        }
    }

    pub fn index_of(&self, id: CourierId) -> Option<usize> {
        self.couriers.iter().position(|c| c.state.id == id)
    }

    /// Courier states as seen by a dispatcher at the current time.
    pub fn courier_states(&self) -> Vec<Courier> {
        self.couriers.iter().map(|c| c.state.clone()).collect()
    }

    /// Executes every task completed by `t`, then commits couriers already
    /// travelling to the AOI of their next task.
    pub fn advance(&mut self, t: f64) {
        for k in 0..self.couriers.len() {
            self.advance_one(k, t);
        }
        self.now = self.now.max(t.min(i64::MAX as f64) as i64);
    }

    fn advance_one(&mut self, k: usize, t: f64) {
        let c = &mut self.couriers[k];
        if !c.state.planned.is_empty() {
            let start_time = c.state.available_at as f64;
            let route = Route::build(c.state.current_aoi, start_time, c.state.planned.clone(), self.centroids, &self.cfg);
            let done = route.times.iter().take_while(|&&x| x <= t).count();
            for (task, &time) in route.tasks[..done].iter().zip(&route.times) {
                let out = self.outcomes.get_mut(&task.order).expect("assigned order has an outcome");
                let action = match task.kind {
                    TaskKind::Pickup => {
                        out.picked_at = Some(time);
                        out.incremental_pickup_secs = c.last_pickup.map(|p| (time - p).max(0.0));
                        c.last_pickup = Some(time);
                        if let Some(h) = c.state.on_hand.iter_mut().find(|h| h.order.id == task.order) {
                            h.picked_up = true;
                        }
                        Action::Pickup
                    }
                    TaskKind::Delivery => {
                        out.delivered_at = Some(time);
                        c.state.on_hand.retain(|h| h.order.id != task.order);
                        c.delivered += 1;
                        c.last_delivery = Some(time);
                        Action::Delivery
                    }
                };
                c.events.push(TrajectoryEvent {
                    courier_id: c.state.id,
                    order_id: task.order,
                    fu: out.order.fu,
                    action,
                    timestamp: time.round() as i64,
                });
                c.busy_secs += time - c.mark;
                c.mark = time;
            }
            if done > 0 {
                c.state.current_aoi = route.tasks[done - 1].aoi;
                c.state.available_at = route.times[done - 1].round() as i64;
                c.state.planned.drain(..done);
                if c.state.planned.is_empty() {
                    if let Some(hub) = c.hub.filter(|&h| h != c.state.current_aoi) {
                        let travel = self.centroids.dist(c.state.current_aoi, hub) / self.cfg.speed_mps;
                        c.busy_secs += travel;
                        c.state.current_aoi = hub;
                        c.state.available_at += travel.round() as i64;
                    }
                }
            }
        }
        if let Some(next) = c.state.planned.first().copied() {
            if next.aoi != c.state.current_aoi && (c.state.available_at as f64) < t {
                let travel = self.centroids.dist(c.state.current_aoi, next.aoi) / self.cfg.speed_mps;
                c.state.current_aoi = next.aoi;
                c.state.available_at += travel.round() as i64;
            }
        }
    }

    /// Inserts `orders` (in the given order) into courier `k`'s plan at the
    /// current time. Returns false, changing nothing, if capacity is short.
    pub fn assign(&mut self, k: usize, orders: &[&Order]) -> bool {
        self.assign_with_hold(k, orders, 0)
    }

    /// As [`Simulation::assign`]; an idle courier additionally waits
    /// `hold_secs` before starting so that more orders can join the trip.
    pub fn assign_with_hold(&mut self, k: usize, orders: &[&Order], hold_secs: i64) -> bool {
        let now = self.now;
        let c = &mut self.couriers[k];
        let was_idle = c.state.planned.is_empty();
        let mut state = c.state.clone();
        if was_idle {
            state.available_at = state.available_at.max(now) + hold_secs;
        }
        let Ok(plan) = plan_route_insertion(&state, orders, now, self.centroids, &self.cfg) else {
            return false;
        };
        if was_idle {
            c.mark = now as f64;
        }
        c.first_assigned.get_or_insert(now as f64);
        c.state.available_at = state.available_at;
        c.state.planned = plan.route.tasks;
        for o in orders {
            c.state.on_hand.push(OnHand {
                order: (*o).clone(),
                picked_up: false,
            });
            self.outcomes.insert(
                o.id,
                OrderOutcome {
                    order: (*o).clone(),
                    courier: Some(c.state.id),
                    assigned_at: Some(now),
                    picked_at: None,
                    delivered_at: None,
                    incremental_pickup_secs: None,
                },
            );
        }
        true
    }

    pub fn all_idle(&self) -> bool {
        self.couriers.iter().all(SimCourier::idle)
    }

    pub fn record_unassigned(&mut self, orders: impl IntoIterator<Item = Order>) {
        for o in orders {
            self.outcomes.entry(o.id).or_insert(OrderOutcome {
                order: o,
                courier: None,
                assigned_at: None,
                picked_at: None,
                delivered_at: None,
                incremental_pickup_secs: None,
            });
        }
    }
}

/// Chooses assignments for the pending orders of one cycle and applies
/// them to the simulation. Returns the ids of the orders it assigned.
pub trait CyclePolicy {
    fn dispatch(&mut self, sim: &mut Simulation<'_>, pending: &[Order]) -> BTreeSet<OrderId>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub cycle_secs: i64,
    /// Extra time after the last order for pending work to finish.
    pub drain_secs: i64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            cycle_secs: 30,
            drain_secs: 3 * 3600,
        }
    }
}

/// Runs dispatch cycles over an order stream until every order is
/// delivered or the drain window ends.
pub fn run_simulation(sim: &mut Simulation<'_>, orders: &[Order], policy: &mut dyn CyclePolicy, params: SimParams) {
    let mut stream: Vec<&Order> = orders.iter().collect();
    stream.sort_by_key(|o| (o.placed_at, o.id));
    let last = stream.last().map_or(sim.now, |o| o.placed_at);
    let mut next = 0;
    let mut pending: Vec<Order> = Vec::new();
    let mut t = sim.now;
    loop {
        t += params.cycle_secs;
        sim.advance(t as f64);
        while next < stream.len() && stream[next].placed_at <= t {
            pending.push(stream[next].clone());
            next += 1;
        }
        if !pending.is_empty() {
            let done = policy.dispatch(sim, &pending);
            pending.retain(|o| !done.contains(&o.id));
        }
        let finished = next == stream.len() && pending.is_empty() && sim.all_idle();
        if finished || t > last + params.drain_secs {
            break;
        }
    }
    sim.advance(f64::INFINITY);
    sim.record_unassigned(pending);
}

/// Per-order and per-courier summary of a simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ServiceMetrics {
    pub orders: usize,
    pub delivered: usize,
    pub mean_incremental_pickup_secs: f64,
    pub mean_delivery_secs: f64,
    pub on_time_rate: f64,
    pub couriers: usize,
    pub mean_orders_per_hour: f64,
}

/// Metrics over the orders accepted by `order_filter` and the couriers
/// accepted by `courier_filter`.
pub fn service_metrics(
    sim: &Simulation<'_>,
    order_filter: impl Fn(&Order) -> bool,
    courier_filter: impl Fn(&SimCourier) -> bool,
) -> ServiceMetrics {
    let mut m = ServiceMetrics::default();
    let (mut pick, mut pick_n, mut deliv, mut on_time) = (0.0, 0usize, 0.0, 0usize);
    for o in sim.outcomes.values().filter(|o| order_filter(&o.order)) {
        m.orders += 1;
        if let Some(p) = o.incremental_pickup_secs {
            pick += p;
            pick_n += 1;
        }
        if let Some(d) = o.delivered_at {
            m.delivered += 1;
            deliv += d - o.order.placed_at as f64;
            if d <= o.order.deadline as f64 {
                on_time += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    m.mean_incremental_pickup_secs = mean(pick, pick_n);
    m.mean_delivery_secs = mean(deliv, m.delivered);
    m.on_time_rate = mean(on_time as f64, m.delivered);
    let rates: Vec<f64> = sim
        .couriers
        .iter()
        .filter(|c| courier_filter(c))
        .filter_map(SimCourier::orders_per_hour)
        .collect();
    m.couriers = rates.len();
    m.mean_orders_per_hour = mean(rates.iter().sum(), rates.len());
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;

    fn line(n: u32) -> AoiMap {
        let mut m = AoiMap::default();
        let o = GeoPoint::new(30.0, 120.0).unwrap();
        for k in 0..n {
            m.insert(AoiId(k), o.offset_m(1000.0 * k as f64, 0.0)).unwrap();
        }
        m
    }

    fn order(id: u64, p: u32, d: u32, at: i64) -> Order {
        Order {
            id: OrderId(id),
            fu: crate::network::FuId(p * 100 + d),
            pickup_aoi: AoiId(p),
            delivery_aoi: AoiId(d),
            placed_at: at,
            deadline: at + 3600,
        }
    }

    /// Gives every pending order to courier 0 when it has room.
    struct First;

    impl CyclePolicy for First {
        fn dispatch(&mut self, sim: &mut Simulation<'_>, pending: &[Order]) -> BTreeSet<OrderId> {
            let mut done = BTreeSet::new();
            for o in pending {
                if sim.assign(0, &[o]) {
                    done.insert(o.id);
                }
            }
            done
        }
    }

    #[test]
    fn orders_are_picked_before_delivery_and_metrics_add_up() {
        let m = line(4);
        let c = SimCourier::new(Courier::idle(CourierId(1), AoiId(0), 3));
        let mut sim = Simulation::new(&m, DispatchConfig::default(), vec![c], 0);
        let orders = vec![order(1, 1, 3, 5), order(2, 1, 3, 10), order(3, 2, 0, 2000)];
        run_simulation(&mut sim, &orders, &mut First, SimParams::default());
        crate::network::validate_event_order(&sim.couriers[0].events).unwrap();
        assert_eq!(sim.couriers[0].delivered, 3);
        // Both early orders are picked up at one stop.
        let (a, b) = (&sim.outcomes[&OrderId(1)], &sim.outcomes[&OrderId(2)]);
        assert_eq!(a.picked_at, b.picked_at);
        assert!([a, b].iter().any(|o| o.incremental_pickup_secs == Some(0.0)));
        let metrics = service_metrics(&sim, |_| true, |_| true);
        assert_eq!(metrics.delivered, 3);
        assert!(metrics.mean_orders_per_hour > 0.0);
        assert!(sim.all_idle());
    }

    #[test]
    fn in_flight_leg_is_committed() {
        let m = line(4);
        let c = SimCourier::new(Courier::idle(CourierId(1), AoiId(0), 3));
        let mut sim = Simulation::new(&m, DispatchConfig::default(), vec![c], 0);
        sim.assign(0, &[&order(1, 2, 3, 0)]);
        sim.advance(30.0);
        let s = &sim.couriers[0].state;
        assert_eq!(s.current_aoi, AoiId(2));
        assert!((s.available_at - 400).abs() <= 1);
    }

    #[test]
    fn hub_couriers_return() {
        let m = line(4);
        let mut c = SimCourier::new(Courier::idle(CourierId(1), AoiId(0), 3));
        c.hub = Some(AoiId(0));
        let mut sim = Simulation::new(&m, DispatchConfig::default(), vec![c], 0);
        sim.assign(0, &[&order(1, 0, 2, 0)]);
        sim.advance(1e6);
        assert_eq!(sim.couriers[0].state.current_aoi, AoiId(0));
    }
}
