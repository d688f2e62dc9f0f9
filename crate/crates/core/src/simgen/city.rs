use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::dispatch::Order;
use crate::error::{Error, Result};
use crate::geo::{AoiId, AoiMap, GeoPoint};
use crate::network::{Barriers, CourierId, FlowUnit, FuCatalog, FuId, OrderId, RegionId, ScenarioTag};

/// Generator settings for one synthetic city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid_width: u32,
    pub grid_height: u32,
    pub cell_m: f64,
    /// The grid is cut into `zones_x * zones_y` zones; couriers and FUs stay
    /// inside their zone.
    pub zones_x: u32,
    pub zones_y: u32,
    /// Merchant clusters per zone and AOIs per cluster.
    pub merchant_clusters: u32,
    pub merchant_spread: u32,
    /// Residential clusters per zone and AOIs per cluster.
    pub residential_clusters: u32,
    pub residential_spread: u32,
    pub fus_per_zone: usize,
    /// Background Poisson rate per FU.
    pub order_rate_per_hour: f64,
    /// Planted corridors (city-wide) and FUs per corridor.
    pub corridors: usize,
    pub corridor_size: usize,
    /// Bursts per corridor per hour; each burst places `burst_size` orders
    /// on distinct corridor FUs within `burst_window_secs`.
    pub burst_rate_per_hour: f64,
    pub burst_size: usize,
    pub burst_window_secs: i64,
    /// The first `seh_count` corridors are hotspots with extra volume.
    pub seh_count: usize,
    pub seh_rate_per_hour: f64,
    pub couriers: usize,
    pub courier_capacity: usize,
    pub deadline_min_secs: i64,
    pub deadline_max_secs: i64,
    /// Length of each simulated day's order window.
    pub horizon_secs: i64,
    /// Days of history for trajectory synthesis; one more day is generated
    /// for evaluation.
    pub history_days: usize,
    pub scenario: ScenarioTag,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            grid_width: 16,
            grid_height: 16,
            cell_m: 400.0,
            zones_x: 2,
            zones_y: 2,
            merchant_clusters: 2,
            merchant_spread: 2,
            residential_clusters: 3,
            residential_spread: 3,
            fus_per_zone: 50,
            order_rate_per_hour: 0.6,
            corridors: 12,
            corridor_size: 4,
            burst_rate_per_hour: 3.0,
            burst_size: 2,
            burst_window_secs: 60,
            seh_count: 2,
            seh_rate_per_hour: 60.0,
            couriers: 120,
            courier_capacity: 6,
            deadline_min_secs: 2400,
            deadline_max_secs: 3600,
            horizon_secs: 2 * 3600,
            history_days: 6,
            scenario: ScenarioTag::WeekdayPeak,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("grid_width", self.grid_width as usize),
            ("grid_height", self.grid_height as usize),
            ("zones_x", self.zones_x as usize),
            ("zones_y", self.zones_y as usize),
            ("merchant_clusters", self.merchant_clusters as usize),
            ("merchant_spread", self.merchant_spread as usize),
            ("residential_clusters", self.residential_clusters as usize),
            ("residential_spread", self.residential_spread as usize),
            ("fus_per_zone", self.fus_per_zone),
            ("corridors", self.corridors),
            ("corridor_size", self.corridor_size),
            ("burst_size", self.burst_size),
            ("couriers", self.couriers),
            ("courier_capacity", self.courier_capacity),
            ("history_days", self.history_days),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("simgen.{name} must be at least 1")));
        }
        let rates = [
            ("order_rate_per_hour", self.order_rate_per_hour),
            ("burst_rate_per_hour", self.burst_rate_per_hour),
            ("seh_rate_per_hour", self.seh_rate_per_hour),
        ];
        if let Some((name, _)) = rates.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("simgen.{name} must be a non-negative number")));
        }
        if !(self.cell_m > 0.0) {
            return Err(Error::Config("simgen.cell_m must be positive".into()));
        }
        if self.zones_x > self.grid_width || self.zones_y > self.grid_height {
            return Err(Error::Config("simgen: more zones than grid cells".into()));
        }
        let (zw, zh) = (self.grid_width / self.zones_x, self.grid_height / self.zones_y);
        let per_zone_aois = (zw * zh) as usize;
        let clustered = (self.merchant_clusters * self.merchant_spread + self.residential_clusters * self.residential_spread) as usize;
        if clustered > per_zone_aois {
            return Err(Error::Config(format!(
                "simgen: clusters need {clustered} AOIs per zone but a zone has {per_zone_aois}"
            )));
        }
        let zones = (self.zones_x * self.zones_y) as usize;
        let slots = zones * (self.merchant_clusters * self.residential_clusters) as usize;
        if self.corridors > slots {
            return Err(Error::Config(format!("simgen.corridors exceeds the {slots} cluster pairs")));
        }
        if self.corridor_size > (self.merchant_spread * self.residential_spread) as usize {
            return Err(Error::Config("simgen.corridor_size exceeds merchant_spread * residential_spread".into()));
        }
        if self.burst_size > self.corridor_size {
            return Err(Error::Config("simgen.burst_size exceeds corridor_size".into()));
        }
        if self.seh_count > self.corridors {
            return Err(Error::Config("simgen.seh_count exceeds corridors".into()));
        }
        let corridors_per_zone = self.corridors.div_ceil(zones);
        if corridors_per_zone * self.corridor_size > self.fus_per_zone {
            return Err(Error::Config("simgen.fus_per_zone too small for the corridors".into()));
        }
        if self.deadline_min_secs <= 0 || self.deadline_max_secs < self.deadline_min_secs {
            return Err(Error::Config("simgen: need 0 < deadline_min_secs <= deadline_max_secs".into()));
        }
        if self.horizon_secs <= 0 || self.burst_window_secs < 0 {
            return Err(Error::Config("simgen: horizon must be positive and burst window non-negative".into()));
        }
        Ok(())
    }
}

/// A planted hotspot: a high-volume corridor served from one hub AOI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSeh {
    pub fus: Vec<FuId>,
    pub hub: AoiId,
}

/// Structure planted by the generator, for verification only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Disjoint FU groups whose orders arrive in bursts.
    pub corridors: Vec<Vec<FuId>>,
    pub sehs: Vec<PlantedSeh>,
    /// Expected joint bursts per hour for each corridor pair `(a, b)`, `a < b`.
    pub propensities: Vec<(FuId, FuId, f64)>,
}

impl GroundTruth {
    pub fn corridor_of(&self) -> BTreeMap<FuId, usize> {
        self.corridors
            .iter()
            .enumerate()
            .flat_map(|(c, fus)| fus.iter().map(move |&f| (f, c)))
            .collect()
    }

    pub fn corridor_pairs(&self) -> Vec<(FuId, FuId)> {
        self.propensities.iter().map(|&(a, b, _)| (a, b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourierProfile {
    pub id: CourierId,
    pub start: AoiId,
    pub zone: RegionId,
    /// Efficiency rank within the zone as a top-rank percentile (0 = best).
    pub rank: f64,
    pub capacity: usize,
}

impl CourierProfile {
    /// Batching, insertion-routing couriers; everyone ranked in the top 35%.
    pub fn skilled(&self) -> bool {
        self.rank <= crate::network::SC_BAND.1
    }
}

/// Static per-AOI and per-FU statistics handed to the attribute builder.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CityStats {
    pub barriers: BTreeMap<FuId, Barriers>,
    pub preferred_share: BTreeMap<AoiId, f64>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub centroids: AoiMap,
    pub zones: BTreeMap<AoiId, RegionId>,
    pub merchants: BTreeSet<AoiId>,
    pub catalog: FuCatalog,
    pub couriers: Vec<CourierProfile>,
    pub truth: GroundTruth,
    pub stats: CityStats,
    /// Order stream of each history day.
    pub history: Vec<Vec<Order>>,
    /// Order stream of the evaluation day.
    pub orders: Vec<Order>,
}

pub const DAY_SECS: i64 = 86_400;
/// Local start of every simulated day's order window (11:00).
pub const PEAK_START_SECS: i64 = 11 * 3600;
const ORDER_IDS_PER_DAY: u64 = 1_000_000;

fn day_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn poisson(rng: &mut impl Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

impl Scenario {
    pub fn zone_count(&self) -> usize {
        (self.config.zones_x * self.config.zones_y) as usize
    }

    pub fn unit(&self, fu: FuId) -> &FlowUnit {
        self.catalog.get(fu).expect("FU in catalog")
    }

    pub fn zone_of_fu(&self, fu: FuId) -> RegionId {
        self.zones[&self.unit(fu).pickup_aoi]
    }

    /// Start time of `day`'s order window.
    pub fn day_start(day: usize) -> i64 {
        day as i64 * DAY_SECS + PEAK_START_SECS
    }

    /// All history orders followed by the evaluation day.
    pub fn all_orders(&self) -> impl Iterator<Item = &Order> {
        self.history.iter().flatten().chain(&self.orders)
    }

    /// Order stream of `day`: background Poisson arrivals per FU, corridor
    /// bursts and hotspot volume. Deterministic in `(rng_seed, day)`.
    pub fn generate_orders(&self, day: usize) -> Vec<Order> {
        let cfg = &self.config;
        let mut rng = day_rng(cfg.rng_seed, 1000 + day as u64);
        let start = Self::day_start(day);
        let hours = cfg.horizon_secs as f64 / 3600.0;
        let mut raw: Vec<(i64, FuId)> = Vec::new();
        for unit in self.catalog.iter() {
            for _ in 0..poisson(&mut rng, cfg.order_rate_per_hour * hours) {
                raw.push((start + rng.random_range(0..cfg.horizon_secs), unit.id));
            }
        }
        for fus in &self.truth.corridors {
            for _ in 0..poisson(&mut rng, cfg.burst_rate_per_hour * hours) {
                let t0 = start + rng.random_range(0..cfg.horizon_secs);
                for &fu in fus.choose_multiple(&mut rng, cfg.burst_size) {
                    raw.push((t0 + rng.random_range(0..=cfg.burst_window_secs), fu));
                }
            }
        }
        for seh in &self.truth.sehs {
            for _ in 0..poisson(&mut rng, cfg.seh_rate_per_hour * hours) {
                let fu = *seh.fus.choose(&mut rng).expect("non-empty hotspot");
                raw.push((start + rng.random_range(0..cfg.horizon_secs), fu));
            }
        }
        raw.sort();
        raw.into_iter()
            .enumerate()
            .map(|(k, (t, fu))| {
                let u = self.unit(fu);
                Order {
                    id: OrderId(day as u64 * ORDER_IDS_PER_DAY + k as u64 + 1),
                    fu,
                    pickup_aoi: u.pickup_aoi,
                    delivery_aoi: u.delivery_aoi,
                    placed_at: t,
                    deadline: t + rng.random_range(cfg.deadline_min_secs..=cfg.deadline_max_secs),
                }
            })
            .collect()
    }
}

/// Builds a synthetic city from `config`: grid AOIs, zones with merchant
/// and residential clusters, FUs with planted corridors and hotspots,
/// couriers with efficiency ranks, and the history and evaluation order
/// streams. Deterministic in `config.rng_seed`.
pub fn generate_city(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let cfg = config;
    let mut rng = day_rng(cfg.rng_seed, 0);
    let origin = GeoPoint::new(30.25, 120.15)?;
    let mut centroids = AoiMap::new();
    let mut zones = BTreeMap::new();
    let (zw, zh) = (cfg.grid_width / cfg.zones_x, cfg.grid_height / cfg.zones_y);
    let mut zone_cells: Vec<Vec<AoiId>> = vec![Vec::new(); (cfg.zones_x * cfg.zones_y) as usize];
    for y in 0..cfg.grid_height {
        for x in 0..cfg.grid_width {
            let id = AoiId(y * cfg.grid_width + x);
            centroids.insert(id, origin.offset_m(x as f64 * cfg.cell_m, y as f64 * cfg.cell_m))?;
            let z = (y / zh).min(cfg.zones_y - 1) * cfg.zones_x + (x / zw).min(cfg.zones_x - 1);
            zones.insert(id, RegionId(z));
            zone_cells[z as usize].push(id);
        }
    }

    // Clusters: a seed cell plus its nearest free cells in the zone.
    let mut merchants = BTreeSet::new();
    let mut merchant_clusters: Vec<Vec<Vec<AoiId>>> = Vec::new();
    let mut residential_clusters: Vec<Vec<Vec<AoiId>>> = Vec::new();
    for cells in &zone_cells {
        let mut free: Vec<AoiId> = cells.clone();
        let grow = |size: u32, rng: &mut ChaCha8Rng, free: &mut Vec<AoiId>| -> Vec<AoiId> {
            let seed = free.swap_remove(rng.random_range(0..free.len()));
            let mut by_dist: Vec<(f64, AoiId)> = free.iter().map(|&a| (centroids.dist(seed, a), a)).collect();
            by_dist.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            let mut out = vec![seed];
            out.extend(by_dist.iter().take(size as usize - 1).map(|&(_, a)| a));
            free.retain(|a| !out.contains(a));
            out
        };
        let ms: Vec<Vec<AoiId>> = (0..cfg.merchant_clusters).map(|_| grow(cfg.merchant_spread, &mut rng, &mut free)).collect();
        let rs: Vec<Vec<AoiId>> = (0..cfg.residential_clusters)
            .map(|_| grow(cfg.residential_spread, &mut rng, &mut free))
            .collect();
        merchants.extend(ms.iter().flatten().copied());
        merchant_clusters.push(ms);
        residential_clusters.push(rs);
    }

    let mut units: Vec<FlowUnit> = Vec::new();
    let mut used: BTreeSet<(AoiId, AoiId)> = BTreeSet::new();
    let mut next_id = 1u32;
    let mut add = |p: AoiId, d: AoiId, units: &mut Vec<FlowUnit>| -> FuId {
        let id = FuId(next_id);
        next_id += 1;
        units.push(FlowUnit {
            id,
            pickup_aoi: p,
            delivery_aoi: d,
            scenario: cfg.scenario,
        });
        id
    };

    // Corridors: distinct (merchant cluster, residential cluster) pairs,
    // dealt round-robin over zones. Hotspot corridors deliver into the
    // residential cluster; the others deliver along a line of stops
    // running away from the merchant cluster.
    let zone_count = zone_cells.len();
    let mut slots: Vec<Vec<(usize, usize)>> = (0..zone_count)
        .map(|_| {
            let mut s: Vec<(usize, usize)> = (0..cfg.merchant_clusters as usize)
                .flat_map(|m| (0..cfg.residential_clusters as usize).map(move |r| (m, r)))
                .collect();
            s.shuffle(&mut rng);
            s
        })
        .collect();
    let mut truth = GroundTruth::default();
    let mut zone_units = vec![0usize; zone_count];
    for c in 0..cfg.corridors {
        let z = c % zone_count;
        let (m, r) = slots[z].pop().expect("validated slot count");
        let pickups = &merchant_clusters[z][m];
        let pairs = |stops: &[AoiId]| -> Vec<(AoiId, AoiId)> {
            pickups
                .iter()
                .flat_map(|&p| stops.iter().map(move |&d| (p, d)))
                .filter(|k| !used.contains(k))
                .collect()
        };
        let mut combos = if c < cfg.seh_count {
            pairs(&residential_clusters[z][r])
        } else {
            let n = cfg.corridor_size.div_ceil(pickups.len()).max(2);
            let mut best = Vec::new();
            for _ in 0..16 {
                let got = pairs(&line_stops(cfg, &zone_cells[z], &merchants, pickups[0], n, &mut rng));
                if got.len() > best.len() {
                    best = got;
                }
                if best.len() >= cfg.corridor_size {
                    break;
                }
            }
            best
        };
        combos.shuffle(&mut rng);
        combos.truncate(cfg.corridor_size);
        combos.sort();
        let fus: Vec<FuId> = combos
            .iter()
            .map(|&(p, d)| {
                used.insert((p, d));
                add(p, d, &mut units)
            })
            .collect();
        zone_units[z] += fus.len();
        if c < cfg.seh_count {
            let hub = combos[0].0;
            truth.sehs.push(PlantedSeh { fus: fus.clone(), hub });
        }
        truth.corridors.push(fus);
    }

    // Background FUs: any merchant AOI to any non-merchant AOI in the zone.
    for (z, cells) in zone_cells.iter().enumerate() {
        let zone_merchants: Vec<AoiId> = merchant_clusters[z].iter().flatten().copied().collect();
        let homes: Vec<AoiId> = cells.iter().copied().filter(|a| !merchants.contains(a)).collect();
        let mut combos: Vec<(AoiId, AoiId)> = zone_merchants
            .iter()
            .flat_map(|&p| homes.iter().map(move |&d| (p, d)))
            .filter(|k| !used.contains(k))
            .collect();
        combos.shuffle(&mut rng);
        let need = cfg.fus_per_zone.saturating_sub(zone_units[z]);
        let mut picked: Vec<(AoiId, AoiId)> = combos.into_iter().take(need).collect();
        picked.sort();
        for (p, d) in picked {
            used.insert((p, d));
            add(p, d, &mut units);
        }
    }

    let bursts_per_pair = |k: usize| -> f64 {
        // Chance that a given pair is inside a burst of `burst_size` out of `k`.
        let b = cfg.burst_size.min(k) as f64;
        let k = k as f64;
        if k < 2.0 {
            0.0
        } else {
            b * (b - 1.0) / (k * (k - 1.0))
        }
    };
    for fus in &truth.corridors {
        let rate = cfg.burst_rate_per_hour * bursts_per_pair(fus.len());
        for (i, &a) in fus.iter().enumerate() {
            for &b in &fus[i + 1..] {
                truth.propensities.push((a.min(b), a.max(b), rate));
            }
        }
    }

    let mut stats = CityStats::default();
    for u in &units {
        let crossings = rng.random_range(0..3u32);
        stats.barriers.insert(
            u.id,
            Barriers {
                bridge: (crossings == 2) as u32,
                river: 0,
                highway: (crossings >= 1) as u32,
            },
        );
    }
    for &a in zones.keys() {
        stats.preferred_share.insert(a, rng.random_range(0.0..1.0));
    }

    let mut couriers = Vec::with_capacity(cfg.couriers);
    let mut per_zone: Vec<Vec<usize>> = vec![Vec::new(); zone_count];
    for k in 0..cfg.couriers {
        let z = k % zone_count;
        per_zone[z].push(k);
        couriers.push(CourierProfile {
            id: CourierId(k as u32 + 1),
            start: *zone_cells[z].choose(&mut rng).expect("non-empty zone"),
            zone: RegionId(z as u32),
            rank: 0.0,
            capacity: cfg.courier_capacity,
        });
    }
    for members in &per_zone {
        for (pos, &k) in members.iter().enumerate() {
            couriers[k].rank = (pos + 1) as f64 / members.len() as f64;
        }
    }

    let mut scenario = Scenario {
        config: cfg.clone(),
        centroids,
        zones,
        merchants,
        catalog: FuCatalog::from_units(units)?,
        couriers,
        truth,
        stats,
        history: Vec::new(),
        orders: Vec::new(),
    };
    scenario.history = (0..cfg.history_days).map(|d| scenario.generate_orders(d)).collect();
    scenario.orders = scenario.generate_orders(cfg.history_days);
    Ok(scenario)
}

fn cell_xy(cfg: &ScenarioConfig, a: AoiId) -> (f64, f64) {
    ((a.0 % cfg.grid_width) as f64, (a.0 / cfg.grid_width) as f64)
}

/// `n` non-merchant stops evenly spaced from `from` towards a far cell of
/// the zone, nearest first.
fn line_stops(cfg: &ScenarioConfig, zone: &[AoiId], merchants: &BTreeSet<AoiId>, from: AoiId, n: usize, rng: &mut ChaCha8Rng) -> Vec<AoiId> {
    let (fx, fy) = cell_xy(cfg, from);
    let homes: Vec<AoiId> = zone.iter().copied().filter(|a| !merchants.contains(a)).collect();
    let dist = |a: AoiId| {
        let (x, y) = cell_xy(cfg, a);
        (x - fx).hypot(y - fy)
    };
    let reach = homes.iter().map(|&a| dist(a)).fold(0.0, f64::max);
    let far: Vec<AoiId> = homes.iter().copied().filter(|&a| dist(a) >= 0.75 * reach).collect();
    let end = *far.choose(rng).expect("zone has non-merchant cells");
    let (ex, ey) = cell_xy(cfg, end);
    let mut stops = Vec::with_capacity(n);
    for k in 1..=n {
        let t = k as f64 / n as f64;
        let (tx, ty) = (fx + t * (ex - fx), fy + t * (ey - fy));
        let best = homes
            .iter()
            .copied()
            .filter(|a| !stops.contains(a))
            .min_by(|&a, &b| {
                let d = |c: AoiId| {
                    let (x, y) = cell_xy(cfg, c);
                    (x - tx).hypot(y - ty)
                };
                d(a).total_cmp(&d(b)).then(a.cmp(&b))
            });
        stops.extend(best);
    }
    stops
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            grid_width: 10,
            grid_height: 10,
            corridors: 2,
            seh_count: 1,
            couriers: 20,
            history_days: 1,
            ..Default::default()
        }
    }

    #[test]
    fn corridors_are_disjoint_and_counted() {
        let s = generate_city(&small()).unwrap();
        assert_eq!(s.truth.corridors.len(), 2);
        let all: Vec<FuId> = s.truth.corridors.iter().flatten().copied().collect();
        let set: BTreeSet<FuId> = all.iter().copied().collect();
        assert_eq!(all.len(), set.len());
        assert_eq!(s.truth.sehs.len(), 1);
    }

    #[test]
    fn fu_count_and_zones() {
        let s = generate_city(&ScenarioConfig::default()).unwrap();
        assert_eq!(s.catalog.len(), 200);
        for u in s.catalog.iter() {
            assert_eq!(s.zones[&u.pickup_aoi], s.zones[&u.delivery_aoi]);
            assert_ne!(u.pickup_aoi, u.delivery_aoi);
        }
    }

    #[test]
    fn zero_rates_give_empty_stream() {
        let cfg = ScenarioConfig {
            order_rate_per_hour: 0.0,
            burst_rate_per_hour: 0.0,
            seh_rate_per_hour: 0.0,
            ..small()
        };
        let s = generate_city(&cfg).unwrap();
        assert!(s.orders.is_empty());
        assert!(s.history.iter().all(Vec::is_empty));
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_city(&small()).unwrap();
        let b = generate_city(&small()).unwrap();
        assert_eq!(a.orders, b.orders);
        assert_eq!(a.truth, b.truth);
        let c = generate_city(&ScenarioConfig { rng_seed: 9, ..small() }).unwrap();
        assert_ne!(a.orders, c.orders);
    }

    #[test]
    fn orders_are_sorted_and_valid() {
        let s = generate_city(&small()).unwrap();
        for w in s.orders.windows(2) {
            assert!(w[0].placed_at <= w[1].placed_at);
        }
        for o in s.all_orders() {
            o.validate().unwrap();
        }
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = ScenarioConfig { couriers: 0, ..small() };
        assert!(matches!(generate_city(&cfg), Err(Error::Config(_))));
        let cfg = ScenarioConfig {
            order_rate_per_hour: -1.0,
            ..small()
        };
        assert!(generate_city(&cfg).is_err());
    }
}
