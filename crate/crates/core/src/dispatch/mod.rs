//! Per-cycle many-to-one order assignment: route-insertion MD scoring, the
//! iterative greedy matcher with HPP-based order combination and courier
//! recall, exact enumeration oracles, and the hotspot fast mode.

mod combine;
mod exact;
mod io;
mod iterative;
mod route;
mod score;
mod sehmode;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{AoiId, AoiMap};
use crate::indices::HppIndex;
use crate::network::{CourierId, FuCatalog, FuId, FuKey, OrderId, RegionId, ScenarioTag};
use crate::registry::Registry;

pub use combine::{combine_orders, nearest_couriers, recall_couriers, ruled_bundles, Combination};
pub use exact::{solve_moa_exact, total_md, ExactCaps};
pub use io::{
    read_couriers_jsonl, read_jsonl, read_orders_jsonl, write_couriers_jsonl, write_histogram_csv, write_jsonl, write_orders_jsonl,
};
pub use iterative::{solve_moa_iterative, BundlingMode};
pub use route::{base_route, plan_route_insertion, route_distance, PlannedRoute, Rejection, Route, Task, TaskKind};
pub use score::{md_score, on_hand_fu, MdBreakdown};
pub use sehmode::{seh_assignment_cost, seh_md, solve_seh_hillclimb, HillClimbParams, SehAssignment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub fu: FuId,
    pub pickup_aoi: AoiId,
    pub delivery_aoi: AoiId,
    pub placed_at: i64,
    pub deadline: i64,
}

impl Order {
    pub fn validate(&self) -> Result<()> {
        if self.deadline <= self.placed_at {
            return Err(Error::validation(format!("{}: deadline not after placement", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnHand {
    pub order: Order,
    pub picked_up: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Courier {
    pub id: CourierId,
    /// Where the courier is, or where its current leg ends.
    pub current_aoi: AoiId,
    pub on_hand: Vec<OnHand>,
    pub capacity: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionId>,
    /// Time the courier reaches `current_aoi`; routes start no earlier.
    #[serde(default)]
    pub available_at: i64,
    /// Remaining planned tasks; derived from the on-hand list when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub planned: Vec<Task>,
}

impl Courier {
    pub fn idle(id: CourierId, at: AoiId, capacity: usize) -> Self {
        Courier {
            id,
            current_aoi: at,
            on_hand: Vec::new(),
            capacity,
            region: None,
            available_at: 0,
            planned: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.on_hand.len() > self.capacity {
            return Err(Error::validation(format!(
                "courier {} holds {} orders over capacity {}",
                self.id.0,
                self.on_hand.len(),
                self.capacity
            )));
        }
        Ok(())
    }

    pub fn spare(&self) -> usize {
        self.capacity.saturating_sub(self.on_hand.len())
    }
}

/// Goal weights of the matching-degree score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdWeights {
    pub efficiency: f64,
    pub overtime: f64,
    pub acceptance: f64,
}

impl Default for MdWeights {
    fn default() -> Self {
        MdWeights {
            efficiency: 0.6,
            overtime: 0.3,
            acceptance: 0.1,
        }
    }
}

/// Baseline bundling rule: same pickup AOI, close deliveries, close deadlines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuledRule {
    pub delivery_radius_m: f64,
    pub deadline_gap_secs: i64,
}

impl Default for RuledRule {
    fn default() -> Self {
        RuledRule {
            delivery_radius_m: 1000.0,
            deadline_gap_secs: 600,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispatchConfig {
    pub weights: MdWeights,
    /// Order pairs with HPP below this are never combined.
    pub p1: f64,
    /// Couriers whose on-hand HPP with an entity member falls below this are not recalled.
    pub p2: f64,
    pub speed_mps: f64,
    /// Distance that costs one unit of efficiency score.
    pub scale_m: f64,
    /// Dwell time per pickup or delivery stop.
    pub service_secs: f64,
    /// Nearest couriers recalled per order.
    pub recall_k: usize,
    pub iteration_cap: usize,
    /// Most new orders a courier may receive per cycle.
    pub max_new_per_courier: usize,
    pub ruled: RuledRule,
    /// Weights of pickup and delivery AOI increments in the hotspot score.
    pub seh_weights: [f64; 2],
}

impl Default for DispatchConfig {
    fn default() -> Self {
        DispatchConfig {
            weights: MdWeights::default(),
            p1: 0.6,
            p2: 0.5,
            speed_mps: 5.0,
            scale_m: 1000.0,
            service_secs: 60.0,
            recall_k: 20,
            iteration_cap: 10,
            max_new_per_courier: 3,
            ruled: RuledRule::default(),
            seh_weights: [0.5, 0.5],
        }
    }
}

impl DispatchConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.weights;
        let ws = [w.efficiency, w.overtime, w.acceptance];
        if ws.iter().any(|x| !(*x >= 0.0)) || (ws.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("MD weights must be non-negative and sum to 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p1) || !(0.0..=1.0).contains(&self.p2) {
            return Err(Error::Config("p1 and p2 must lie in [0, 1]".into()));
        }
        if !(self.speed_mps > 0.0) || !(self.scale_m > 0.0) || !(self.service_secs >= 0.0) {
            return Err(Error::Config("speed and scale must be positive, service time non-negative".into()));
        }
        if self.recall_k == 0 || self.iteration_cap == 0 || self.max_new_per_courier == 0 {
            return Err(Error::Config("recall_k, iteration_cap and max_new_per_courier must be positive".into()));
        }
        if self.seh_weights.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Config("hotspot weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Read-only data shared by every dispatch cycle.
#[derive(Debug, Clone, Default)]
pub struct DispatchContext {
    pub centroids: AoiMap,
    pub hpp: Option<HppIndex>,
    pub catalog: FuCatalog,
    pub scenario: Option<ScenarioTag>,
}

impl DispatchContext {
    pub fn new(centroids: AoiMap) -> Self {
        DispatchContext {
            centroids,
            ..Default::default()
        }
    }

    /// FU id for a pickup/delivery AOI pair in this context's scenario.
    pub fn fu_for(&self, pickup: AoiId, delivery: AoiId) -> Option<FuId> {
        let scenario = self.scenario?;
        self.catalog.lookup(&FuKey {
            pickup_aoi: pickup,
            delivery_aoi: delivery,
            scenario,
        })
    }

    /// HPP between two FUs; unknown (or no index) is 0.
    pub fn hpp(&self, a: Option<FuId>, b: Option<FuId>) -> f64 {
        match (&self.hpp, a, b) {
            (Some(h), Some(a), Some(b)) => h.hpp_or_zero(a, b),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MoaInstance {
    pub now: i64,
    pub orders: Vec<Order>,
    pub couriers: Vec<Courier>,
    pub config: DispatchConfig,
    pub ctx: Arc<DispatchContext>,
}

impl MoaInstance {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        for o in &self.orders {
            o.validate()?;
        }
        for c in &self.couriers {
            c.validate()?;
        }
        let mut ids: Vec<OrderId> = self.orders.iter().map(|o| o.id).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("duplicate pending order id"));
        }
        for a in self.orders.iter().map(|o| [o.pickup_aoi, o.delivery_aoi]).flatten() {
            if self.ctx.centroids.get(a).is_none() {
                return Err(Error::validation(format!("unknown centroid for {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedEntity {
    pub orders: Vec<OrderId>,
    pub courier: CourierId,
    /// MD score at the time of matching.
    pub score: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub entities: Vec<AssignedEntity>,
    pub unassigned: Vec<OrderId>,
    /// Sum over couriers of the MD score of all their new orders, scored
    /// against the couriers' state at the start of the cycle.
    pub total_md: f64,
    pub partial: bool,
}

impl Assignment {
    /// New orders per courier.
    pub fn by_courier(&self) -> BTreeMap<CourierId, Vec<OrderId>> {
        let mut m: BTreeMap<CourierId, Vec<OrderId>> = BTreeMap::new();
        for e in &self.entities {
            m.entry(e.courier).or_default().extend(&e.orders);
        }
        for v in m.values_mut() {
            v.sort();
        }
        m
    }

    /// Number of couriers that received `k` new orders, keyed by `k`.
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for orders in self.by_courier().values() {
            *h.entry(orders.len()).or_default() += 1;
        }
        h
    }

    /// Share of assigned orders whose courier received no other new order.
    pub fn single_order_share(&self) -> f64 {
        let by = self.by_courier();
        let total: usize = by.values().map(Vec::len).sum();
        if total == 0 {
            return 0.0;
        }
        by.values().filter(|v| v.len() == 1).count() as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DispatchReport {
    pub method: String,
    pub orders: usize,
    pub assigned: usize,
    pub total_md: f64,
    /// MD score evaluations (route-planning calls).
    pub evaluations: usize,
    pub iterations: usize,
    pub wall_ms: f64,
    pub histogram: BTreeMap<usize, usize>,
    pub single_order_share: f64,
    pub bundles_formed: usize,
    pub partial: bool,
}

pub trait MoaSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, inst: &MoaInstance) -> Result<(Assignment, DispatchReport)>;
}

struct Iterative(BundlingMode, &'static str);

impl MoaSolver for Iterative {
    fn name(&self) -> &'static str {
        self.1
    }

    fn solve(&self, inst: &MoaInstance) -> Result<(Assignment, DispatchReport)> {
        let (a, mut r) = solve_moa_iterative(inst, self.0)?;
        r.method = self.1.to_string();
        Ok((a, r))
    }
}

struct Exact(ExactCaps);

impl MoaSolver for Exact {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn solve(&self, inst: &MoaInstance) -> Result<(Assignment, DispatchReport)> {
        let start = std::time::Instant::now();
        let (a, evaluations) = solve_moa_exact(inst, self.0)?;
        let report = DispatchReport {
            method: "exact".into(),
            orders: inst.orders.len(),
            assigned: a.entities.iter().map(|e| e.orders.len()).sum(),
            total_md: a.total_md,
            evaluations,
            iterations: 1,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            histogram: a.histogram(),
            single_order_share: a.single_order_share(),
            bundles_formed: 0,
            partial: a.partial,
        };
        Ok((a, report))
    }
}

pub fn moa_registry() -> Registry<dyn MoaSolver, ()> {
    let mut r: Registry<dyn MoaSolver, ()> = Registry::new("assignment solver");
    r.register("ruled", |_: &()| Box::new(Iterative(BundlingMode::Ruled, "ruled")));
    r.register("scdn", |_: &()| Box::new(Iterative(BundlingMode::Scdn, "scdn")));
    r.register("greedy", |_: &()| Box::new(Iterative(BundlingMode::None, "greedy")));
    r.register("exact", |_: &()| Box::new(Exact(ExactCaps::default())));
    r
}
