//! Synthetic cities with planted pooling structure, skilled-courier
//! trajectory synthesis, and end-to-end evaluation runs.

mod bundle;
mod city;
mod eval;
mod hotspots;
mod sim;
mod trajectories;

pub use city::{generate_city, CityStats, CourierProfile, GroundTruth, PlantedSeh, Scenario, ScenarioConfig, DAY_SECS, PEAK_START_SECS};
pub use sim::{run_simulation, service_metrics, CyclePolicy, OrderOutcome, ServiceMetrics, SimCourier, SimParams, Simulation};
pub use trajectories::{
    adjacency_counts, aoi_stats, build_network, fleet, generate_sc_trajectories, hub_of, History, NetworkBuild, ScPolicy,
};
pub use eval::{
    complete_embeddings, dispatch_context, evaluate_pipeline, hpp_index, evaluate_seh_mode, learn_embeddings, peak_instance, EvaluationConfig, LearnedModel,
    MethodReport, MoaPolicy, PipelineReport, SehModeConfig, SehModeReport, SweepBucket,
};
pub use bundle::{config_hash, read_bundle, read_manifest, sha256_hex, verify_bundle, write_bundle, Manifest};
pub use hotspots::{half_hour_volumes, identify_hotspots, HotspotConfig, Hotspots, DESK_VOLUME_FLOOR};
