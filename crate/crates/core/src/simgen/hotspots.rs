//! Hotspot identification on a scenario: FEI over geographic
//! neighborhoods, a partition instance over the high-FEI FUs, and a solver
//! from the registry.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::city::Scenario;
use super::eval::hpp_index;
use super::trajectories::History;
use crate::eatne::EmbeddingTable;
use crate::error::{Error, Result};
use crate::indices::{fei_table, neighborhoods, seh_validate, FeiTable, SehThresholds, SehValidation, DEFAULT_NEIGHBOR_RADIUS_M};
use crate::network::{FlowUnit, FuId};
use crate::seh::{solver_registry, BpInstance, GaParams, InstanceConfig, SehPartition};

/// Orders per half hour a hotspot must carry in generated cities, whose
/// planted hotspots run at about 30 per half hour.
pub const DESK_VOLUME_FLOOR: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HotspotConfig {
    pub solver: String,
    pub neighbor_radius_m: f64,
    pub instance: InstanceConfig,
    pub ga: GaParams,
}

impl Default for HotspotConfig {
    fn default() -> Self {
        HotspotConfig {
            solver: "ga".into(),
            neighbor_radius_m: DEFAULT_NEIGHBOR_RADIUS_M,
            instance: InstanceConfig {
                relaxed: true,
                volume_floor: DESK_VOLUME_FLOOR,
                ..Default::default()
            },
            ga: GaParams::default(),
        }
    }
}

impl HotspotConfig {
    pub fn validate(&self) -> Result<()> {
        let i = &self.instance;
        if !(self.neighbor_radius_m > 0.0) {
            return Err(Error::Config("neighbor_radius_m must be positive".into()));
        }
        if i.min_size == 0 || i.min_size > i.max_size || i.groups == Some(0) {
            return Err(Error::Config("need 1 <= min_size <= max_size and groups >= 1".into()));
        }
        if !(i.volume_floor >= 0.0) || !(0.0..=1.0).contains(&i.hpp_floor) || !(0.0..=1.0).contains(&i.fei_threshold) {
            return Err(Error::Config("volume_floor must be non-negative, hpp_floor and fei_threshold in [0, 1]".into()));
        }
        let g = &self.ga;
        if g.population < 2 || g.generations == 0 || g.tournament == 0 || g.elitism >= g.population {
            return Err(Error::Config("ga: need population >= 2, generations >= 1, tournament >= 1, elitism < population".into()));
        }
        if !(0.0..=1.0).contains(&g.crossover_rate) || g.mutation_rate.is_some_and(|m| !(0.0..=1.0).contains(&m)) {
            return Err(Error::Config("ga: rates must lie in [0, 1]".into()));
        }
        solver_registry().build(&self.solver, &self.ga).map(|_| ())
    }
}

#[derive(Debug, Clone)]
pub struct Hotspots {
    pub fei: FeiTable,
    pub volumes: HashMap<FuId, f64>,
    pub instance: BpInstance,
    pub partition: SehPartition,
    /// Membership check of each non-empty group, in group order.
    pub validations: Vec<(Vec<FuId>, SehValidation)>,
}

impl Hotspots {
    /// Groups that pass the membership check.
    pub fn accepted(&self) -> Vec<Vec<FuId>> {
        self.validations.iter().filter(|(_, v)| v.valid).map(|(g, _)| g.clone()).collect()
    }
}

/// Mean delivered orders per half hour of the order window for each FU,
/// over the history days.
pub fn half_hour_volumes(scenario: &Scenario, history: &History) -> HashMap<FuId, f64> {
    let days = scenario.config.history_days.max(1) as f64 * (scenario.config.horizon_secs as f64 / 1800.0).max(1.0);
    let mut v: HashMap<FuId, f64> = scenario.catalog.iter().map(|u| (u.id, 0.0)).collect();
    for r in &history.records {
        *v.entry(r.fu).or_default() += 1.0 / days;
    }
    v
}

pub fn identify_hotspots(scenario: &Scenario, history: &History, table: &EmbeddingTable, cfg: &HotspotConfig) -> Result<Hotspots> {
    cfg.validate()?;
    let hpp = hpp_index(scenario, table);
    let units: Vec<FlowUnit> = scenario.catalog.iter().copied().collect();
    let hoods = neighborhoods(&units, &scenario.centroids, cfg.neighbor_radius_m);
    let volumes = half_hour_volumes(scenario, history);
    let fei = fei_table(&hoods, &hpp, &volumes)?;
    let instance = BpInstance::from_indices(&fei, &hpp, &volumes, &cfg.instance)?;
    let mut partition = solver_registry().build(&cfg.solver, &cfg.ga)?.solve(&instance)?;
    if partition.seed.is_none() && cfg.solver == "ga" {
        partition.seed = Some(cfg.ga.seed);
    }
    let thresholds = SehThresholds {
        fei: cfg.instance.fei_threshold,
        pair: cfg.instance.hpp_floor,
        volume_floor: cfg.instance.volume_floor,
    };
    let validations = partition
        .hotspots()
        .map(|g| seh_validate(g, &fei, &hpp, &volumes, thresholds).map(|v| (g.clone(), v)))
        .collect::<Result<_>>()?;
    Ok(Hotspots {
        fei,
        volumes,
        instance,
        partition,
        validations,
    })
}
