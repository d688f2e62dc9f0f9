//! Construction of the attributed multiplex flow-unit network from
//! courier trajectories, plus the geographic extended network used for
//! cold-start estimation.

mod attributes;
mod extended;
mod graph;
mod session;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::AoiId;

pub use attributes::{
    compute_node_attributes, compute_raw_attributes, standardize_per_region, AoiStats,
    AttributeFlags, AttributeTable, Barriers, OrderRecord, ATTRIBUTE_DIM, ATTRIBUTE_NAMES,
};
pub use extended::{build_extended_network, ExtendedNetwork, DEFAULT_EXTENDED_THRESHOLD_M};
pub use graph::{
    build_amhen, build_fu_sequences, partition_regions, Amhen, EdgeSet, EdgeType, FuSequences,
    GraphDocument, RegionId,
};
pub use session::{
    filter_sc_sessions, segment_all, segment_sessions, session_flags, Session, SessionFlags,
    DEFAULT_GAP_SECS, SC_BAND,
};

/// Settings of network construction from trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Inactivity that separates two sessions of one courier.
    pub session_gap_secs: i64,
    /// Delivery-centroid distance under which same-pickup FUs are adjacent
    /// in the extended network.
    pub extended_threshold_m: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            session_gap_secs: DEFAULT_GAP_SECS,
            extended_threshold_m: DEFAULT_EXTENDED_THRESHOLD_M,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.session_gap_secs <= 0 || !(self.extended_threshold_m > 0.0) {
            return Err(Error::Config("session gap and extended threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FuId(pub u32);

impl fmt::Display for FuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fu{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CourierId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderId(pub u64);

impl fmt::Display for OrderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioTag {
    WeekdayPeak,
    WeekdayIdle,
    WeekendPeak,
    WeekendIdle,
}

impl ScenarioTag {
    pub fn code(self) -> u8 {
        match self {
            ScenarioTag::WeekdayPeak => 0,
            ScenarioTag::WeekdayIdle => 1,
            ScenarioTag::WeekendPeak => 2,
            ScenarioTag::WeekendIdle => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => ScenarioTag::WeekdayPeak,
            1 => ScenarioTag::WeekdayIdle,
            2 => ScenarioTag::WeekendPeak,
            3 => ScenarioTag::WeekendIdle,
            _ => return None,
        })
    }
}

/// Identity of a flow unit: directed pickup AOI -> delivery AOI in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FuKey {
    pub pickup_aoi: AoiId,
    pub delivery_aoi: AoiId,
    pub scenario: ScenarioTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowUnit {
    pub id: FuId,
    pub pickup_aoi: AoiId,
    pub delivery_aoi: AoiId,
    pub scenario: ScenarioTag,
}

impl FlowUnit {
    pub fn key(&self) -> FuKey {
        FuKey {
            pickup_aoi: self.pickup_aoi,
            delivery_aoi: self.delivery_aoi,
            scenario: self.scenario,
        }
    }
}

/// All known flow units, addressable by id or by identity triple.
#[derive(Debug, Clone, Default)]
pub struct FuCatalog {
    units: BTreeMap<FuId, FlowUnit>,
    by_key: HashMap<FuKey, FuId>,
}

impl FuCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_units(units: impl IntoIterator<Item = FlowUnit>) -> Result<Self> {
        let mut cat = FuCatalog::new();
        for u in units {
            cat.insert(u)?;
        }
        Ok(cat)
    }

    pub fn insert(&mut self, unit: FlowUnit) -> Result<()> {
        if self.units.contains_key(&unit.id) {
            return Err(Error::validation(format!("duplicate flow unit id {}", unit.id)));
        }
        if self.by_key.insert(unit.key(), unit.id).is_some() {
            return Err(Error::validation(format!(
                "duplicate flow unit identity {:?}",
                unit.key()
            )));
        }
        self.units.insert(unit.id, unit);
        Ok(())
    }

    pub fn get(&self, id: FuId) -> Option<&FlowUnit> {
        self.units.get(&id)
    }

    pub fn lookup(&self, key: &FuKey) -> Option<FuId> {
        self.by_key.get(key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FlowUnit> {
        self.units.values()
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Next unused id (max + 1).
    pub fn next_id(&self) -> FuId {
        FuId(self.units.keys().next_back().map_or(0, |k| k.0 + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Pickup,
    Delivery,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub courier_id: CourierId,
    pub order_id: OrderId,
    pub fu: FuId,
    pub action: Action,
    /// Seconds since epoch.
    pub timestamp: i64,
}

/// Checks that every order's pickup strictly precedes its delivery.
pub fn validate_event_order(events: &[TrajectoryEvent]) -> Result<()> {
    let mut picked: HashMap<OrderId, i64> = HashMap::new();
    let mut delivered: HashMap<OrderId, i64> = HashMap::new();
    for e in events {
        match e.action {
            Action::Pickup => picked.insert(e.order_id, e.timestamp),
            Action::Delivery => delivered.insert(e.order_id, e.timestamp),
        };
    }
    for (order, t_d) in &delivered {
        match picked.get(order) {
            Some(t_p) if t_p < t_d => {}
            Some(_) => {
                return Err(Error::validation(format!(
                    "order {order} delivered before it was picked up"
                )))
            }
            None => {
                return Err(Error::validation(format!(
                    "order {order} delivered without a pickup"
                )))
            }
        }
    }
    Ok(())
}
