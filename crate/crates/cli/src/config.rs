//! Pipeline configuration: TOML file plus dot-keyed overrides, resolved
//! against defaults and range-checked key by key.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use scdn_core::dispatch::DispatchConfig;
use scdn_core::eatne::{loss_registry, sampler_registry, EatneConfig};
use scdn_core::indices::DEFAULT_NEIGHBOR_RADIUS_M;
use scdn_core::network::NetworkConfig;
use scdn_core::seh::{solver_registry, GaParams, InstanceConfig};
use scdn_core::simgen::{EvaluationConfig, HotspotConfig, ScPolicy, ScenarioConfig, SehModeConfig, DESK_VOLUME_FLOOR};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds every stage; stage-level seed keys are overwritten with it.
    pub seed: u64,
    pub paths: Paths,
    pub simgen: SimgenSection,
    pub network: NetworkConfig,
    pub eatne: EatneConfig,
    pub indices: IndicesSection,
    pub seh: SehSection,
    pub dispatch: DispatchSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            simgen: SimgenSection::default(),
            network: NetworkConfig::default(),
            eatne: EatneConfig::default(),
            indices: IndicesSection::default(),
            seh: SehSection::default(),
            dispatch: DispatchSection::default(),
        }
    }
}

/// Artifact locations. Inputs left unset are read from `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: PathBuf,
    pub scenario: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub hotspots: Option<PathBuf>,
    /// Dispatch instance files; when both are set they replace the
    /// generated peak instance.
    pub orders: Option<PathBuf>,
    pub couriers: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            out: PathBuf::from("out"),
            scenario: None,
            graph: None,
            embeddings: None,
            hotspots: None,
            orders: None,
            couriers: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimgenSection {
    pub city: ScenarioConfig,
    pub policy: ScPolicy,
    pub evaluation: EvaluationConfig,
    pub seh_mode: SehModeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndicesSection {
    pub neighbor_radius_m: f64,
    /// FEI a hotspot member must exceed.
    pub fei_threshold: f64,
    /// HPP every hotspot pair must exceed.
    pub hpp_floor: f64,
    /// Orders per half hour a hotspot must carry.
    pub volume_floor: f64,
    /// HPP pairs at or above this are written by `index`.
    pub hpp_export_floor: f64,
}

impl Default for IndicesSection {
    fn default() -> Self {
        let i = InstanceConfig::default();
        IndicesSection {
            neighbor_radius_m: DEFAULT_NEIGHBOR_RADIUS_M,
            fei_threshold: i.fei_threshold,
            hpp_floor: i.hpp_floor,
            volume_floor: DESK_VOLUME_FLOOR,
            hpp_export_floor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SehSection {
    pub solver: String,
    /// Number of groups; unset means derived from total volume.
    pub groups: Option<usize>,
    pub min_size: usize,
    pub max_size: usize,
    /// Allow FUs to stay outside every group.
    pub relaxed: bool,
    pub ga: GaParams,
}

impl Default for SehSection {
    fn default() -> Self {
        let h = HotspotConfig::default();
        SehSection {
            solver: h.solver,
            groups: h.instance.groups,
            min_size: h.instance.min_size,
            max_size: h.instance.max_size,
            relaxed: h.instance.relaxed,
            ga: h.ga,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispatchSection {
    pub method: String,
    /// Size of the generated peak instance.
    pub orders: usize,
    pub couriers: usize,
    pub params: DispatchConfig,
}

impl Default for DispatchSection {
    fn default() -> Self {
        DispatchSection {
            method: "scdn".into(),
            orders: 500,
            couriers: 2500,
            params: DispatchConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Copies the global seed into every stage seed.
    pub fn apply_seed(&mut self) {
        let s = self.seed;
        self.simgen.city.rng_seed = s;
        self.simgen.evaluation.seed = s;
        self.simgen.seh_mode.hill_climb.seed = s;
        self.seh.ga.seed = s;
    }

    pub fn hotspot_config(&self) -> HotspotConfig {
        HotspotConfig {
            solver: self.seh.solver.clone(),
            neighbor_radius_m: self.indices.neighbor_radius_m,
            instance: InstanceConfig {
                groups: self.seh.groups,
                min_size: self.seh.min_size,
                max_size: self.seh.max_size,
                volume_floor: self.indices.volume_floor,
                hpp_floor: self.indices.hpp_floor,
                fei_threshold: self.indices.fei_threshold,
                relaxed: self.seh.relaxed,
            },
            ga: self.seh.ga.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}

/// Where a key's value came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: String, line: usize, column: usize },
    Override(String),
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line, column } => write!(f, "{path}:{line}:{column}"),
            Origin::Override(flag) => write!(f, "override --{flag}"),
            Origin::Default => write!(f, "default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub key: String,
    pub origin: Origin,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.origin, self.key, self.message)
    }
}

/// The configuration source text, used to point errors at lines.
pub struct Source {
    pub path: String,
    pub text: String,
    doc: Option<toml_edit::ImDocument<String>>,
    overrides: Vec<String>,
}

impl Source {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let doc = toml_edit::ImDocument::parse(text.clone()).ok();
        Source {
            path: path.into(),
            text,
            doc,
            overrides: Vec::new(),
        }
    }

    fn line_col(&self, offset: usize) -> (usize, usize) {
        let before = &self.text[..offset.min(self.text.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
        (line, column)
    }

    /// Origin of a dotted key: the override that set it, else the file
    /// position of the key or of its deepest present ancestor.
    pub fn locate(&self, key: &str) -> Origin {
        if let Some(o) = self.overrides.iter().find(|o| key == *o || key.starts_with(&format!("{o}."))) {
            return Origin::Override(o.clone());
        }
        let Some(doc) = &self.doc else { return Origin::Default };
        let mut item = doc.as_item();
        let mut span = None;
        for part in key.split('.') {
            let Some((k, v)) = item.as_table_like().and_then(|t| t.get_key_value(part)) else {
                break;
            };
            span = k.span().or(span);
            item = v;
        }
        match span {
            Some(s) => {
                let (line, column) = self.line_col(s.start);
                Origin::File {
                    path: self.path.clone(),
                    line,
                    column,
                }
            }
            None => Origin::Default,
        }
    }
}

/// Accumulates range violations by key path.
pub struct Checker<'a> {
    source: &'a Source,
    pub issues: Vec<Issue>,
}

impl<'a> Checker<'a> {
    pub fn new(source: &'a Source) -> Self {
        Checker { source, issues: Vec::new() }
    }

    pub fn require(&mut self, key: &str, ok: bool, message: impl Into<String>) {
        if !ok {
            self.issues.push(Issue {
                key: key.to_string(),
                origin: self.source.locate(key),
                message: message.into(),
            });
        }
    }

    pub fn at_least(&mut self, key: &str, v: usize, min: usize) {
        self.require(key, v >= min, format!("must be at least {min}, got {v}"));
    }

    pub fn positive(&mut self, key: &str, v: f64) {
        self.require(key, v > 0.0 && v.is_finite(), format!("must be a positive number, got {v}"));
    }

    pub fn non_negative(&mut self, key: &str, v: f64) {
        self.require(key, v >= 0.0 && v.is_finite(), format!("must be a non-negative number, got {v}"));
    }

    pub fn unit(&mut self, key: &str, v: f64) {
        self.require(key, (0.0..=1.0).contains(&v), format!("must lie in [0, 1], got {v}"));
    }

    pub fn secs(&mut self, key: &str, v: i64, min: i64) {
        self.require(key, v >= min, format!("must be at least {min} seconds, got {v}"));
    }

    pub fn finite(&mut self, key: &str, v: &[f64]) {
        self.require(key, v.iter().all(|x| x.is_finite()), "must be finite");
    }

    /// A stage validator's verdict, attributed to the stage's section.
    pub fn stage(&mut self, key: &str, r: scdn_core::Result<()>) {
        if let Err(e) = r {
            let message = match e {
                scdn_core::Error::Config(m) => m,
                other => other.to_string(),
            };
            self.require(key, false, message);
        }
    }
}

/// Checks every key of `cfg`, then each stage's own cross-field rules.
pub fn check(cfg: &PipelineConfig, c: &mut Checker<'_>) {
    c.require("paths.out", !cfg.paths.out.as_os_str().is_empty(), "must not be empty");

    let g = &cfg.simgen.city;
    for (k, v) in [
        ("grid_width", g.grid_width as usize),
        ("grid_height", g.grid_height as usize),
        ("zones_x", g.zones_x as usize),
        ("zones_y", g.zones_y as usize),
        ("merchant_clusters", g.merchant_clusters as usize),
        ("merchant_spread", g.merchant_spread as usize),
        ("residential_clusters", g.residential_clusters as usize),
        ("residential_spread", g.residential_spread as usize),
        ("fus_per_zone", g.fus_per_zone),
        ("corridors", g.corridors),
        ("corridor_size", g.corridor_size),
        ("burst_size", g.burst_size),
        ("couriers", g.couriers),
        ("courier_capacity", g.courier_capacity),
        ("history_days", g.history_days),
    ] {
        c.at_least(&format!("simgen.city.{k}"), v, 1);
    }
    c.at_least("simgen.city.seh_count", g.seh_count, 0);
    c.positive("simgen.city.cell_m", g.cell_m);
    for (k, v) in [
        ("order_rate_per_hour", g.order_rate_per_hour),
        ("burst_rate_per_hour", g.burst_rate_per_hour),
        ("seh_rate_per_hour", g.seh_rate_per_hour),
    ] {
        c.non_negative(&format!("simgen.city.{k}"), v);
    }
    c.secs("simgen.city.deadline_min_secs", g.deadline_min_secs, 1);
    c.secs("simgen.city.deadline_max_secs", g.deadline_max_secs, g.deadline_min_secs.max(1));
    c.secs("simgen.city.burst_window_secs", g.burst_window_secs, 0);
    c.secs("simgen.city.horizon_secs", g.horizon_secs, 1);
    c.stage("simgen.city", g.validate());

    let p = &cfg.simgen.policy;
    c.non_negative("simgen.policy.corridor_bonus_m", p.corridor_bonus_m);
    c.at_least("simgen.policy.recall_k", p.recall_k, 1);
    c.at_least("simgen.policy.max_new_per_cycle", p.max_new_per_cycle, 1);
    c.positive("simgen.policy.speed_limit_mps", p.speed_limit_mps);
    check_sim(c, "simgen.policy.sim", p.sim);

    let e = &cfg.simgen.evaluation;
    c.require("simgen.evaluation.methods", !e.methods.is_empty(), "must not be empty");
    c.positive("simgen.evaluation.courier_ratio", e.courier_ratio);
    check_sim(c, "simgen.evaluation.sim", e.sim);
    c.stage("simgen.evaluation", e.validate());

    let m = &cfg.simgen.seh_mode;
    c.at_least("simgen.seh_mode.dedicated_per_seh", m.dedicated_per_seh, 1);
    c.secs("simgen.seh_mode.hold_secs", m.hold_secs, 0);
    c.secs("simgen.seh_mode.max_wait_secs", m.max_wait_secs, 0);
    c.at_least("simgen.seh_mode.hill_climb.move_cap", m.hill_climb.move_cap, 1);
    check_sim(c, "simgen.seh_mode.sim", m.sim);

    c.secs("network.session_gap_secs", cfg.network.session_gap_secs, 1);
    c.positive("network.extended_threshold_m", cfg.network.extended_threshold_m);

    let t = &cfg.eatne;
    c.at_least("eatne.base_dim", t.base_dim, 1);
    c.at_least("eatne.edge_dim", t.edge_dim, 1);
    c.at_least("eatne.attention_dim", t.attention_dim, 1);
    c.at_least("eatne.walk_length", t.walk_length, 2);
    c.at_least("eatne.window", t.window, 1);
    c.at_least("eatne.walks_per_node", t.walks_per_node, 1);
    c.at_least("eatne.negatives_per_positive", t.negatives_per_positive, 1);
    c.at_least("eatne.hop_floor", t.hop_floor, 3);
    c.at_least("eatne.aggregation_levels", t.aggregation_levels, 1);
    c.at_least("eatne.batch_size", t.batch_size, 1);
    c.at_least("eatne.max_epochs", t.max_epochs, 1);
    c.positive("eatne.learning_rate", t.learning_rate);
    c.require(
        "eatne.validation_fraction",
        (0.0..0.5).contains(&t.validation_fraction),
        format!("must lie in [0, 0.5), got {}", t.validation_fraction),
    );
    c.finite("eatne.margin", &t.margin);
    c.finite("eatne.alpha", &t.alpha);
    c.finite("eatne.beta", &t.beta);
    for (k, v) in [("gamma_pos", t.gamma_pos), ("gamma_neg", t.gamma_neg)] {
        c.require(&format!("eatne.{k}"), v.iter().all(|x| *x >= 0.0 && x.is_finite()), "must be non-negative");
    }
    c.require(
        "eatne.loss",
        loss_registry().contains(&t.loss),
        format!("unknown loss `{}` (available: {:?})", t.loss, loss_registry().names()),
    );
    c.require(
        "eatne.sampler",
        sampler_registry().contains(&t.sampler),
        format!("unknown sampler `{}` (available: {:?})", t.sampler, sampler_registry().names()),
    );
    c.stage("eatne", t.validate());

    let i = &cfg.indices;
    c.positive("indices.neighbor_radius_m", i.neighbor_radius_m);
    c.unit("indices.fei_threshold", i.fei_threshold);
    c.unit("indices.hpp_floor", i.hpp_floor);
    c.non_negative("indices.volume_floor", i.volume_floor);
    c.require(
        "indices.hpp_export_floor",
        (-1.0..=1.0).contains(&i.hpp_export_floor),
        format!("must lie in [-1, 1], got {}", i.hpp_export_floor),
    );

    let s = &cfg.seh;
    c.require(
        "seh.solver",
        solver_registry().contains(&s.solver),
        format!("unknown solver `{}` (available: {:?})", s.solver, solver_registry().names()),
    );
    if let Some(n) = s.groups {
        c.at_least("seh.groups", n, 1);
    }
    c.at_least("seh.min_size", s.min_size, 1);
    c.at_least("seh.max_size", s.max_size, s.min_size.max(1));
    c.at_least("seh.ga.population", s.ga.population, 2);
    c.at_least("seh.ga.generations", s.ga.generations, 1);
    c.at_least("seh.ga.tournament", s.ga.tournament, 1);
    c.require(
        "seh.ga.elitism",
        s.ga.elitism < s.ga.population,
        format!("must be below the population {}, got {}", s.ga.population, s.ga.elitism),
    );
    c.unit("seh.ga.crossover_rate", s.ga.crossover_rate);
    if let Some(r) = s.ga.mutation_rate {
        c.unit("seh.ga.mutation_rate", r);
    }
    c.stage("seh", cfg.hotspot_config().validate());

    let d = &cfg.dispatch;
    c.require(
        "dispatch.method",
        scdn_core::dispatch::moa_registry().contains(&d.method),
        format!(
            "unknown method `{}` (available: {:?})",
            d.method,
            scdn_core::dispatch::moa_registry().names()
        ),
    );
    c.at_least("dispatch.orders", d.orders, 1);
    c.at_least("dispatch.couriers", d.couriers, 1);
    let w = d.params.weights;
    c.non_negative("dispatch.params.weights.efficiency", w.efficiency);
    c.non_negative("dispatch.params.weights.overtime", w.overtime);
    c.non_negative("dispatch.params.weights.acceptance", w.acceptance);
    let sum = w.efficiency + w.overtime + w.acceptance;
    c.require("dispatch.params.weights", (sum - 1.0).abs() <= 1e-9, format!("must sum to 1, got {sum}"));
    c.unit("dispatch.params.p1", d.params.p1);
    c.unit("dispatch.params.p2", d.params.p2);
    c.positive("dispatch.params.speed_mps", d.params.speed_mps);
    c.positive("dispatch.params.scale_m", d.params.scale_m);
    c.non_negative("dispatch.params.service_secs", d.params.service_secs);
    c.at_least("dispatch.params.recall_k", d.params.recall_k, 1);
    c.at_least("dispatch.params.iteration_cap", d.params.iteration_cap, 1);
    c.at_least("dispatch.params.max_new_per_courier", d.params.max_new_per_courier, 1);
    c.positive("dispatch.params.ruled.delivery_radius_m", d.params.ruled.delivery_radius_m);
    c.secs("dispatch.params.ruled.deadline_gap_secs", d.params.ruled.deadline_gap_secs, 0);
    c.require(
        "dispatch.params.seh_weights",
        d.params.seh_weights.iter().all(|x| *x >= 0.0 && x.is_finite()),
        "must be non-negative",
    );
    c.stage("dispatch.params", d.params.validate());
}

fn check_sim(c: &mut Checker<'_>, key: &str, sim: scdn_core::simgen::SimParams) {
    c.secs(&format!("{key}.cycle_secs"), sim.cycle_secs, 1);
    c.secs(&format!("{key}.drain_secs"), sim.drain_secs, 0);
}

/// Parses an override value as a TOML value, falling back to a string.
fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err("empty key segment".into());
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| format!("`{p}` is not a table"))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_error(source: &Source, e: &toml::de::Error) -> CliError {
    let origin = match e.span() {
        Some(s) => {
            let (line, column) = source.line_col(s.start);
            Origin::File {
                path: source.path.clone(),
                line,
                column,
            }
        }
        None => Origin::File {
            path: source.path.clone(),
            line: 1,
            column: 1,
        },
    };
    CliError::Config(format!("{origin}: {}", e.message()))
}

/// Builds the resolved configuration from an optional file, dot-keyed
/// overrides and an optional seed flag.
pub fn load(source: Option<Source>, overrides: &[(String, String)], seed: Option<u64>) -> Result<PipelineConfig, CliError> {
    let mut source = source.unwrap_or_else(|| Source::new("<defaults>", ""));
    let cfg: PipelineConfig = toml::from_str(&source.text).map_err(|e| parse_error(&source, &e))?;
    let mut cfg = if overrides.is_empty() {
        cfg
    } else {
        let mut table = toml::Table::try_from(&cfg).map_err(|e| CliError::Other(e.to_string()))?;
        for (k, v) in overrides {
            set_path(&mut table, k, override_value(v)).map_err(|m| CliError::Config(format!("override --{k}: {m}")))?;
        }
        source.overrides = overrides.iter().map(|(k, _)| k.clone()).collect();
        table.try_into::<PipelineConfig>().map_err(|e| {
            let flags: Vec<String> = overrides.iter().map(|(k, v)| format!("--{k} {v}")).collect();
            CliError::Config(format!("override {}: {}", flags.join(" "), e.message().trim()))
        })?
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut checker = Checker::new(&source);
    check(&cfg, &mut checker);
    if !checker.issues.is_empty() {
        let lines: Vec<String> = checker.issues.iter().map(|i| i.to_string()).collect();
        return Err(CliError::Config(lines.join("\n")));
    }
    cfg.apply_seed();
    Ok(cfg)
}
