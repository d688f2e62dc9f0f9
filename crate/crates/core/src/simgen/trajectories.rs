use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::city::{CourierProfile, Scenario};
use super::sim::{run_simulation, CyclePolicy, SimCourier, SimParams, Simulation};
use crate::dispatch::{plan_route_insertion, Courier, DispatchConfig, Order, TaskKind};
use crate::error::Result;
use crate::geo::AoiId;
use crate::network::{
    build_amhen, build_fu_sequences, compute_node_attributes, filter_sc_sessions, partition_regions, segment_all,
    session_flags, AoiStats, Amhen, AttributeTable, CourierId, FuId, FuSequences, OrderId, OrderRecord, Session,
    NetworkConfig, TrajectoryEvent, ATTRIBUTE_DIM, DEFAULT_GAP_SECS,
};

/// Behaviour of the simulated courier fleet that produces history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScPolicy {
    /// Cost reduction, in meters, per on-hand order of the same corridor.
    pub corridor_bonus_m: f64,
    /// Nearest in-zone couriers considered per order.
    pub recall_k: usize,
    /// Most new orders a skilled courier takes per cycle.
    pub max_new_per_cycle: usize,
    /// Speed above which a session is flagged.
    pub speed_limit_mps: f64,
    pub sim: SimParams,
}

impl Default for ScPolicy {
    fn default() -> Self {
        ScPolicy {
            corridor_bonus_m: 1500.0,
            recall_k: 8,
            max_new_per_cycle: 3,
            speed_limit_mps: 15.0,
            sim: SimParams::default(),
        }
    }
}

/// Simulated history of every day: the skilled-courier trajectories that
/// pass session selection, every delivered order, and courier ranks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub events: Vec<TrajectoryEvent>,
    pub records: Vec<OrderRecord>,
    pub ranks: BTreeMap<CourierId, f64>,
}

impl History {
    pub fn rank_map(&self) -> HashMap<CourierId, f64> {
        self.ranks.iter().map(|(&k, &v)| (k, v)).collect()
    }
}

struct FleetPolicy<'s> {
    scenario: &'s Scenario,
    profiles: &'s [CourierProfile],
    corridor_of: BTreeMap<FuId, usize>,
    by_zone: BTreeMap<crate::network::RegionId, Vec<usize>>,
    policy: ScPolicy,
}

impl FleetPolicy<'_> {
    fn meets_deadlines(&self, state: &Courier, order: &Order, sim: &Simulation<'_>) -> Option<f64> {
        let plan = plan_route_insertion(state, &[order], sim.now, sim.centroids, &sim.cfg).ok()?;
        let deadline = |id: OrderId| {
            if id == order.id {
                Some(order.deadline)
            } else {
                state.on_hand.iter().find(|h| h.order.id == id).map(|h| h.order.deadline)
            }
        };
        for (t, &time) in plan.route.tasks.iter().zip(&plan.route.times) {
            if t.kind == TaskKind::Delivery && deadline(t.order).is_some_and(|d| time > d as f64) {
                return None;
            }
        }
        Some(plan.incremental_m)
    }
}

impl CyclePolicy for FleetPolicy<'_> {
    fn dispatch(&mut self, sim: &mut Simulation<'_>, pending: &[Order]) -> BTreeSet<OrderId> {
        let mut done = BTreeSet::new();
        let mut taken = vec![0usize; sim.couriers.len()];
        for _ in 0..self.policy.max_new_per_cycle {
            let mut cands: Vec<(f64, OrderId, usize, usize)> = Vec::new();
            for (oi, o) in pending.iter().enumerate() {
                if done.contains(&o.id) {
                    continue;
                }
                let zone = self.scenario.zones[&o.pickup_aoi];
                let mut near: Vec<(f64, usize)> = self.by_zone[&zone]
                    .iter()
                    .copied()
                    .filter(|&k| {
                        let s = &sim.couriers[k].state;
                        if self.profiles[k].skilled() {
                            s.spare() > 0 && taken[k] < self.policy.max_new_per_cycle
                        } else {
                            s.on_hand.is_empty() && taken[k] == 0
                        }
                    })
                    .map(|k| (sim.centroids.dist(sim.couriers[k].state.current_aoi, o.pickup_aoi), k))
                    .collect();
                near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                near.truncate(self.policy.recall_k);
                for (_, k) in near {
                    let state = &sim.couriers[k].state;
                    let cost = if self.profiles[k].skilled() {
                        let Some(incr) = self.meets_deadlines(state, o, sim) else {
                            continue;
                        };
                        let mine = self.corridor_of.get(&o.fu);
                        let same = state
                            .on_hand
                            .iter()
                            .filter(|h| mine.is_some() && self.corridor_of.get(&h.order.fu) == mine)
                            .count();
                        incr - self.policy.corridor_bonus_m * same as f64
                    } else {
                        match plan_route_insertion(state, &[o], sim.now, sim.centroids, &sim.cfg) {
                            Ok(p) => p.incremental_m,
                            Err(_) => continue,
                        }
                    };
                    cands.push((cost, o.id, oi, k));
                }
            }
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.3.cmp(&b.3)));
            let mut used = BTreeSet::new();
            let mut progress = false;
            for (_, id, oi, k) in cands {
                if done.contains(&id) || used.contains(&k) {
                    continue;
                }
                if sim.assign(k, &[&pending[oi]]) {
                    used.insert(k);
                    done.insert(id);
                    taken[k] += 1;
                    progress = true;
                }
            }
            if !progress {
                break;
            }
        }
        done
    }
}

/// Fresh fleet at the profiles' start AOIs.
pub fn fleet(profiles: &[CourierProfile]) -> Vec<SimCourier> {
    profiles
        .iter()
        .map(|p| {
            let mut c = Courier::idle(p.id, p.start, p.capacity);
            c.region = Some(p.zone);
            SimCourier::new(c)
        })
        .collect()
}

fn records_of(sim: &Simulation<'_>, centroids: &crate::geo::AoiMap) -> Vec<OrderRecord> {
    sim.outcomes
        .values()
        .filter_map(|o| {
            let (picked, delivered) = (o.picked_at?, o.delivered_at?);
            Some(OrderRecord {
                order_id: o.order.id,
                fu: o.order.fu,
                pickup_aoi: o.order.pickup_aoi,
                delivery_aoi: o.order.delivery_aoi,
                placed_at: o.order.placed_at,
                picked_at: picked.round() as i64,
                delivered_at: delivered.round() as i64,
                deadline: o.order.deadline,
                distance_m: centroids.dist(o.order.pickup_aoi, o.order.delivery_aoi),
                negative_feedback: false,
            })
        })
        .collect()
}

/// Simulates every history day with the whole fleet. Skilled couriers use
/// insertion routing with a corridor batching bonus and never accept an
/// order that would make a delivery late; the others carry one order at a
/// time. Returned events are the skilled-band sessions that pass session
/// selection, so they survive `filter_sc_sessions` unchanged.
pub fn generate_sc_trajectories(scenario: &Scenario, policy: &ScPolicy) -> Result<History> {
    let mut by_zone: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (k, p) in scenario.couriers.iter().enumerate() {
        by_zone.entry(p.zone).or_default().push(k);
    }
    for z in 0..scenario.zone_count() as u32 {
        by_zone.entry(crate::network::RegionId(z)).or_default();
    }
    let cfg = DispatchConfig::default();
    let mut events = Vec::new();
    let mut records = Vec::new();
    for (day, orders) in scenario.history.iter().enumerate() {
        let mut sim = Simulation::new(&scenario.centroids, cfg, fleet(&scenario.couriers), Scenario::day_start(day));
        let mut fleet_policy = FleetPolicy {
            scenario,
            profiles: &scenario.couriers,
            corridor_of: scenario.truth.corridor_of(),
            by_zone: by_zone.clone(),
            policy: *policy,
        };
        run_simulation(&mut sim, orders, &mut fleet_policy, policy.sim);
        records.extend(records_of(&sim, &scenario.centroids));
        for c in &sim.couriers {
            events.extend(c.events.iter().copied());
        }
    }
    let ranks: BTreeMap<CourierId, f64> = scenario.couriers.iter().map(|p| (p.id, p.rank)).collect();
    let rank_map: HashMap<CourierId, f64> = ranks.iter().map(|(&k, &v)| (k, v)).collect();
    let by_id: HashMap<OrderId, OrderRecord> = records.iter().map(|r| (r.order_id, *r)).collect();
    let sessions = segment_all(&events, DEFAULT_GAP_SECS)?;
    let flags: Vec<_> = sessions
        .iter()
        .map(|s| session_flags(s, &by_id, &scenario.catalog, &scenario.centroids, policy.speed_limit_mps))
        .collect();
    let kept = filter_sc_sessions(&sessions, &rank_map, &flags);
    let mut events: Vec<TrajectoryEvent> = kept.into_iter().flat_map(|s| s.events).collect();
    events.sort_by_key(|e| (e.courier_id, e.timestamp));
    Ok(History { events, records, ranks })
}

/// The flow-unit network of a history, with attributes.
#[derive(Debug, Clone)]
pub struct NetworkBuild {
    pub graph: Amhen,
    pub attributes: AttributeTable,
    pub sessions: usize,
}

pub fn aoi_stats(scenario: &Scenario) -> AoiStats {
    AoiStats {
        centroids: scenario.centroids.clone(),
        barriers: scenario.stats.barriers.iter().map(|(&k, &v)| (k, v)).collect(),
        preferred_share: scenario.stats.preferred_share.iter().map(|(&k, &v)| (k, v)).collect(),
    }
}

/// Sessions, typed FU sequences and the attributed network of a history.
pub fn build_network(scenario: &Scenario, history: &History, cfg: &NetworkConfig) -> Result<NetworkBuild> {
    cfg.validate()?;
    let sessions: Vec<Session> = segment_all(&history.events, cfg.session_gap_secs)?;
    let sequences: Vec<FuSequences> = sessions.iter().map(build_fu_sequences).collect();
    let zeros: BTreeMap<FuId, Vec<f64>> = scenario.catalog.iter().map(|u| (u.id, vec![0.0; ATTRIBUTE_DIM])).collect();
    let skeleton = build_amhen(&sequences, &zeros)?;
    let regions = partition_regions(&skeleton);
    let window_days = scenario.config.history_days as f64;
    let attributes = compute_node_attributes(
        &history.records,
        &aoi_stats(scenario),
        &scenario.catalog,
        &regions,
        scenario.config.scenario,
        window_days,
    );
    let graph = skeleton.with_attributes(&attributes.vectors)?;
    Ok(NetworkBuild {
        graph,
        attributes,
        sessions: sessions.len(),
    })
}

/// How often each unordered FU pair is adjacent in the typed sequences.
pub fn adjacency_counts(sequences: &[FuSequences]) -> BTreeMap<(FuId, FuId), usize> {
    let mut m = BTreeMap::new();
    for s in sequences {
        for seq in [&s.pickup, &s.delivery] {
            for w in seq.windows(2) {
                if w[0] != w[1] {
                    *m.entry((w[0].min(w[1]), w[0].max(w[1]))).or_insert(0) += 1;
                }
            }
        }
    }
    m
}

/// Pickup AOI most FUs of `fus` share (smallest id on ties).
pub fn hub_of(scenario: &Scenario, fus: &[FuId]) -> Option<AoiId> {
    let mut counts: BTreeMap<AoiId, usize> = BTreeMap::new();
    for f in fus {
        if let Some(u) = scenario.catalog.get(*f) {
            *counts.entry(u.pickup_aoi).or_default() += 1;
        }
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(a, _)| a)
}
