//! The pipeline stages as subcommands. Each reads its inputs from the
//! output directory (or the configured paths), writes its artifacts there,
//! and records a manifest of config hash, seed, version and file hashes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use scdn_core::dispatch::{
    md_score, moa_registry, read_couriers_jsonl, read_orders_jsonl, write_couriers_jsonl, write_histogram_csv,
    write_orders_jsonl, Assignment, DispatchReport, MdBreakdown, MoaInstance, Order,
};
use scdn_core::eatne::{train_outcome, EmbeddingTable};
use scdn_core::indices::{fei_table, neighborhoods, SehValidation};
use scdn_core::network::{Amhen, CourierId, FlowUnit, FuId, GraphDocument, OrderId};
use scdn_core::seh::SehPartition;
use scdn_core::simgen::{
    build_network, complete_embeddings, dispatch_context, evaluate_pipeline, evaluate_seh_mode, generate_city,
    generate_sc_trajectories, half_hour_volumes, hpp_index, identify_hotspots, peak_instance, read_bundle,
    sha256_hex, write_bundle, History, Scenario,
};
use scdn_verify::{format_table, run_oracles};

use crate::config::{Paths, PipelineConfig};
use crate::error::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// SHA-256 of the resolved configuration TOML with `paths` at their
    /// defaults, so relocating artifacts keeps the hash.
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub struct Run {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn display(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn hash_file(p: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&fs::read(p)?))
}

impl Run {
    pub fn new(cfg: PipelineConfig) -> Self {
        let out = cfg.paths.out.clone();
        Run {
            cfg,
            out,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input_path(&self, set: &Option<PathBuf>, default: &str) -> PathBuf {
        set.clone().unwrap_or_else(|| self.out.join(default))
    }

    /// Records an input file, failing with a missing-input error.
    fn input(&mut self, p: &Path) -> Result<PathBuf, CliError> {
        if !p.is_file() {
            return Err(CliError::MissingInput(p.to_path_buf()));
        }
        self.inputs.insert(display(p), hash_file(p)?);
        Ok(p.to_path_buf())
    }

    fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        let p = self.out.join(name);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&p, &buf)?;
        self.outputs.insert(display(&p), sha256_hex(&buf));
        Ok(p)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write(name, |b| {
            serde_json::to_writer_pretty(&mut *b, value)?;
            b.push(b'\n');
            Ok(())
        })
    }

    fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        self.write(name, |b| {
            let mut w = csv::Writer::from_writer(b);
            for r in rows {
                w.serialize(r).map_err(|e| CliError::Other(e.to_string()))?;
            }
            w.flush()?;
            Ok(())
        })
    }

    fn scenario(&mut self) -> Result<(Scenario, History), CliError> {
        let dir = self.input_path(&self.cfg.paths.scenario, "scenario");
        self.input(&dir.join("manifest.json"))?;
        Ok(read_bundle(&dir)?)
    }

    fn graph(&mut self) -> Result<Amhen, CliError> {
        let p = self.input_path(&self.cfg.paths.graph, "graph.json");
        self.input(&p)?;
        let doc: GraphDocument = serde_json::from_reader(BufReader::new(File::open(&p)?))?;
        Ok(Amhen::from_document(&doc)?)
    }

    fn embeddings(&mut self) -> Result<EmbeddingTable, CliError> {
        let p = self.input_path(&self.cfg.paths.embeddings, "embeddings.bin");
        self.input(&p)?;
        Ok(EmbeddingTable::read_binary(BufReader::new(File::open(&p)?))?)
    }

    fn hotspots(&mut self) -> Result<Option<HotspotFile>, CliError> {
        let p = self.input_path(&self.cfg.paths.hotspots, "hotspots.json");
        if self.cfg.paths.hotspots.is_none() && !p.is_file() {
            return Ok(None);
        }
        self.input(&p)?;
        Ok(Some(serde_json::from_reader(BufReader::new(File::open(&p)?))?))
    }

    /// Writes the resolved configuration and this run's manifest.
    pub fn finish(mut self, command: &str) -> Result<RunManifest, CliError> {
        let text = self.cfg.to_toml();
        fs::create_dir_all(&self.out)?;
        fs::write(self.out.join(RESOLVED_CONFIG), &text)?;
        let manifest = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.cfg.seed,
            config_hash: sha256_hex(
                PipelineConfig {
                    paths: Paths::default(),
                    ..self.cfg.clone()
                }
                .to_toml()
                .as_bytes(),
            ),
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
        };
        let dir = self.out.join("manifests");
        fs::create_dir_all(&dir)?;
        let mut w = BufWriter::new(File::create(dir.join(format!("{command}.json")))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(manifest)
    }
}

pub fn generate(run: &mut Run) -> Result<(), CliError> {
    let scenario = generate_city(&run.cfg.simgen.city)?;
    let history = generate_sc_trajectories(&scenario, &run.cfg.simgen.policy)?;
    let dir = run.out.join("scenario");
    let manifest = write_bundle(&dir, &scenario, &history)?;
    for (name, hash) in manifest.files {
        run.outputs.insert(display(&dir.join(name)), hash);
    }
    let m = dir.join("manifest.json");
    run.outputs.insert(display(&m), hash_file(&m)?);
    log::info!(
        "city of {} AOIs and {} FUs; {} trajectory events, {} delivered history orders",
        scenario.centroids.len(),
        scenario.catalog.len(),
        history.events.len(),
        history.records.len()
    );
    Ok(())
}

pub fn build_graph(run: &mut Run) -> Result<(), CliError> {
    let (scenario, history) = run.scenario()?;
    let net = build_network(&scenario, &history, &run.cfg.network)?;
    run.write_json("graph.json", &net.graph.to_document())?;
    log::info!(
        "network of {} FUs from {} sessions: {} pickup, {} delivery edges",
        net.graph.len(),
        net.sessions,
        net.graph.edges(scdn_core::network::EdgeType::Pickup).len(),
        net.graph.edges(scdn_core::network::EdgeType::Delivery).len()
    );
    Ok(())
}

#[derive(Serialize)]
struct CurveRow {
    epoch: usize,
    loss: f64,
    validation_auc: Option<f64>,
}

#[derive(Serialize)]
struct TrainSummary {
    nodes: usize,
    best_epoch: usize,
    stopped_early: bool,
    coverage_before: f64,
    coverage_after: f64,
}

pub fn train(run: &mut Run) -> Result<(), CliError> {
    let (scenario, _) = run.scenario()?;
    let graph = run.graph()?;
    let outcome = train_outcome(&graph, &run.cfg.eatne, run.cfg.seed)?;
    let (table, before, after) = complete_embeddings(&scenario, outcome.table, run.cfg.network.extended_threshold_m);
    run.write("embeddings.bin", |b| Ok(table.write_binary(b)?))?;
    run.write("embeddings.jsonl", |b| Ok(table.write_jsonl(b)?))?;
    let curve: Vec<CurveRow> = outcome
        .curve
        .iter()
        .map(|r| CurveRow {
            epoch: r.epoch,
            loss: r.loss,
            validation_auc: r.validation_auc,
        })
        .collect();
    run.write_csv("training_curve.csv", &curve)?;
    run.write_json(
        "training.json",
        &TrainSummary {
            nodes: graph.len(),
            best_epoch: outcome.best_epoch,
            stopped_early: outcome.stopped_early,
            coverage_before: before,
            coverage_after: after,
        },
    )?;
    log::info!(
        "trained {} epochs (kept {}); coverage {:.1}% -> {:.1}%",
        outcome.curve.len(),
        outcome.best_epoch,
        100.0 * before,
        100.0 * after
    );
    Ok(())
}

pub fn index(run: &mut Run) -> Result<(), CliError> {
    let (scenario, history) = run.scenario()?;
    let table = run.embeddings()?;
    let hpp = hpp_index(&scenario, &table);
    let units: Vec<FlowUnit> = scenario.catalog.iter().copied().collect();
    let hoods = neighborhoods(&units, &scenario.centroids, run.cfg.indices.neighbor_radius_m);
    let volumes = half_hour_volumes(&scenario, &history);
    let fei = fei_table(&hoods, &hpp, &volumes)?;
    run.write("fei.csv", |b| Ok(fei.write_csv(b)?))?;
    let fus: Vec<FuId> = units.iter().map(|u| u.id).collect();
    let floor = run.cfg.indices.hpp_export_floor;
    let mut pairs = 0;
    run.write("hpp.csv", |b| {
        pairs = hpp.write_sparse_csv(&fus, floor, b)?;
        Ok(())
    })?;
    log::info!("FEI for {} FUs; {pairs} HPP pairs at or above {floor}", fus.len());
    Ok(())
}

/// Identified hotspots as written by `identify-seh`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HotspotFile {
    /// Groups that pass the membership check.
    pub accepted: Vec<Vec<FuId>>,
    pub partition: SehPartition,
    pub validations: Vec<(Vec<FuId>, SehValidation)>,
}

#[derive(Serialize)]
struct HotspotRow {
    group: usize,
    accepted: bool,
    fu: u32,
    pickup_aoi: u32,
    delivery_aoi: u32,
    fei: f64,
    half_hour_volume: f64,
}

pub fn identify_seh(run: &mut Run) -> Result<(), CliError> {
    let (scenario, history) = run.scenario()?;
    let table = run.embeddings()?;
    let found = identify_hotspots(&scenario, &history, &table, &run.cfg.hotspot_config())?;
    let file = HotspotFile {
        accepted: found.accepted(),
        partition: found.partition.clone(),
        validations: found.validations.clone(),
    };
    let mut rows = Vec::new();
    for (k, (group, v)) in found.validations.iter().enumerate() {
        for f in group {
            let u = scenario.catalog.get(*f).expect("hotspot FUs come from the catalog");
            rows.push(HotspotRow {
                group: k + 1,
                accepted: v.valid,
                fu: f.0,
                pickup_aoi: u.pickup_aoi.0,
                delivery_aoi: u.delivery_aoi.0,
                fei: found.fei.get(*f).map_or(0.0, |e| e.normalized),
                half_hour_volume: found.volumes.get(f).copied().unwrap_or(0.0),
            });
        }
    }
    run.write_json("hotspots.json", &file)?;
    run.write_csv("hotspots.csv", &rows)?;
    log::info!(
        "{} candidate FUs, {} groups, {} accepted (objective {:.4}, feasible {})",
        found.instance.len(),
        found.validations.len(),
        file.accepted.len(),
        found.partition.objective,
        found.partition.feasible
    );
    Ok(())
}

#[derive(Serialize)]
struct CourierScore {
    courier: CourierId,
    orders: Vec<OrderId>,
    breakdown: MdBreakdown,
}

#[derive(Serialize)]
struct AssignmentFile<'a> {
    now: i64,
    assignment: &'a Assignment,
    /// MD breakdown of each courier's whole new load from its starting state.
    couriers: Vec<CourierScore>,
}

pub fn dispatch(run: &mut Run) -> Result<(), CliError> {
    let (scenario, _) = run.scenario()?;
    let method = run.cfg.dispatch.method.clone();
    let emb_path = run.input_path(&run.cfg.paths.embeddings, "embeddings.bin");
    let table = if method == "scdn" || emb_path.is_file() {
        Some(run.embeddings()?)
    } else {
        None
    };
    let ctx = Arc::new(dispatch_context(&scenario, table.as_ref()));
    let params = run.cfg.dispatch.params;
    let inst = match (run.cfg.paths.orders.clone(), run.cfg.paths.couriers.clone()) {
        (Some(o), Some(c)) => {
            let orders = read_orders_jsonl(BufReader::new(File::open(run.input(&o)?)?))?;
            let couriers = read_couriers_jsonl(BufReader::new(File::open(run.input(&c)?)?))?;
            let now = orders.iter().map(|o| o.placed_at).max().unwrap_or(0);
            MoaInstance {
                now,
                orders,
                couriers,
                config: params,
                ctx: ctx.clone(),
            }
        }
        (None, None) => {
            let d = &run.cfg.dispatch;
            let inst = peak_instance(&scenario, ctx.clone(), params, d.orders, d.couriers, run.cfg.seed);
            run.write("instance_orders.jsonl", |b| Ok(write_orders_jsonl(&inst.orders, b)?))?;
            run.write("instance_couriers.jsonl", |b| Ok(write_couriers_jsonl(&inst.couriers, b)?))?;
            inst
        }
        _ => {
            return Err(CliError::Config(
                "paths.orders and paths.couriers must be set together".into(),
            ))
        }
    };
    let (assignment, report) = moa_registry().build(&method, &())?.solve(&inst)?;
    let by_courier = assignment.by_courier();
    let couriers = inst
        .couriers
        .iter()
        .filter_map(|c| {
            let ids = by_courier.get(&c.id)?;
            let orders: Vec<&Order> = ids.iter().filter_map(|id| inst.orders.iter().find(|o| o.id == *id)).collect();
            Some(CourierScore {
                courier: c.id,
                orders: ids.clone(),
                breakdown: md_score(c, &orders, inst.now, &ctx, &params),
            })
        })
        .collect();
    run.write_json(
        "assignment.json",
        &AssignmentFile {
            now: inst.now,
            assignment: &assignment,
            couriers,
        },
    )?;
    run.write_json("dispatch_report.json", &report)?;
    run.write("histogram.csv", |b| Ok(write_histogram_csv(&report.histogram, b)?))?;
    log_report(&report);
    Ok(())
}

fn log_report(r: &DispatchReport) {
    log::info!(
        "{}: {}/{} orders assigned, total MD {:.3}, {} evaluations, {} iterations, {:.1} ms, single-order share {:.3}{}",
        r.method,
        r.assigned,
        r.orders,
        r.total_md,
        r.evaluations,
        r.iterations,
        r.wall_ms,
        r.single_order_share,
        if r.partial { " (partial)" } else { "" }
    );
}

#[derive(Serialize)]
struct MethodRow<'a> {
    method: &'a str,
    cycles: usize,
    total_md: f64,
    evaluations: usize,
    mean_wall_ms: f64,
    max_wall_ms: f64,
    single_order_share: f64,
    bundles: usize,
    orders: usize,
    delivered: usize,
    mean_incremental_pickup_secs: f64,
    mean_delivery_secs: f64,
    on_time_rate: f64,
    mean_orders_per_hour: f64,
}

#[derive(Serialize)]
struct HistogramRow<'a> {
    method: &'a str,
    orders_per_courier: usize,
    couriers: usize,
}

#[derive(Serialize)]
struct SweepRow<'a> {
    lo: usize,
    hi: usize,
    orders: usize,
    couriers: usize,
    method: &'a str,
    total_md: f64,
    md_improvement: f64,
    evaluations: usize,
    wall_ms: f64,
    single_order_share: f64,
}

pub fn evaluate(run: &mut Run) -> Result<(), CliError> {
    let (scenario, _) = run.scenario()?;
    let table = run.embeddings()?;
    let hotspots = run.hotspots()?;
    let ctx = Arc::new(dispatch_context(&scenario, Some(&table)));
    let params = run.cfg.dispatch.params;
    let report = evaluate_pipeline(&scenario, ctx, params, &run.cfg.simgen.evaluation)?;
    run.write_json("evaluation.json", &report)?;
    let methods: Vec<MethodRow> = report
        .methods
        .iter()
        .map(|m| MethodRow {
            method: &m.method,
            cycles: m.cycles,
            total_md: m.total_md,
            evaluations: m.evaluations,
            mean_wall_ms: m.mean_wall_ms,
            max_wall_ms: m.max_wall_ms,
            single_order_share: m.single_order_share,
            bundles: m.bundles,
            orders: m.service.orders,
            delivered: m.service.delivered,
            mean_incremental_pickup_secs: m.service.mean_incremental_pickup_secs,
            mean_delivery_secs: m.service.mean_delivery_secs,
            on_time_rate: m.service.on_time_rate,
            mean_orders_per_hour: m.service.mean_orders_per_hour,
        })
        .collect();
    run.write_csv("evaluation_methods.csv", &methods)?;
    let hist: Vec<HistogramRow> = report
        .methods
        .iter()
        .flat_map(|m| {
            m.histogram.iter().map(|(k, v)| HistogramRow {
                method: &m.method,
                orders_per_courier: *k,
                couriers: *v,
            })
        })
        .collect();
    run.write_csv("evaluation_histogram.csv", &hist)?;
    let sweep: Vec<SweepRow> = report
        .sweep
        .iter()
        .flat_map(|b| {
            b.reports.iter().enumerate().map(move |(k, r)| SweepRow {
                lo: b.lo,
                hi: b.hi,
                orders: b.orders,
                couriers: b.couriers,
                method: &r.method,
                total_md: r.total_md,
                md_improvement: b.md_improvement.get(k).copied().unwrap_or(0.0),
                evaluations: r.evaluations,
                wall_ms: r.wall_ms,
                single_order_share: r.single_order_share,
            })
        })
        .collect();
    run.write_csv("evaluation_sweep.csv", &sweep)?;
    for m in &report.methods {
        log::info!(
            "{}: total MD {:.2} over {} cycles, single-order share {:.3}, pickup {:.0} s, {:.2} orders/h",
            m.method,
            m.total_md,
            m.cycles,
            m.single_order_share,
            m.service.mean_incremental_pickup_secs,
            m.service.mean_orders_per_hour
        );
    }
    match hotspots {
        Some(h) if !h.accepted.is_empty() => {
            let r = evaluate_seh_mode(&scenario, &h.accepted, params, &run.cfg.simgen.seh_mode)?;
            run.write_json("seh_mode.json", &r)?;
            log::info!(
                "hotspot mode over {} hotspots: pickup time -{:.1}%, efficiency {:+.1}%",
                r.hotspots,
                100.0 * r.pickup_time_reduction,
                100.0 * r.efficiency_gain
            );
        }
        Some(_) => log::warn!("no accepted hotspots; hotspot mode not evaluated"),
        None => log::info!("no hotspot file; run identify-seh to evaluate hotspot mode"),
    }
    Ok(())
}

/// Runs every oracle comparison, prints the table, and fails if any
/// disagrees.
pub fn oracle_check(run: &mut Run, quick: bool) -> Result<(), CliError> {
    let outcomes = run_oracles(quick);
    print!("{}", format_table(&outcomes));
    run.write_json(
        "oracle_check.json",
        &outcomes
            .iter()
            .map(|o| serde_json::json!({"name": o.name, "passed": o.passed, "detail": o.detail}))
            .collect::<Vec<_>>(),
    )?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(CliError::Other(format!("{failed} of {} oracle checks failed", outcomes.len())));
    }
    Ok(())
}
