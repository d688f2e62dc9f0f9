//! Scenario bundles: a directory holding the generator config, the city
//! and its order streams as JSON-Lines, and a manifest of file hashes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::city::{generate_city, Scenario, ScenarioConfig};
use super::trajectories::History;
use crate::dispatch::{read_jsonl, write_jsonl, Order};
use crate::error::{Error, Result};
use crate::network::{FlowUnit, OrderRecord, TrajectoryEvent};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "scenario.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    /// SHA-256 of the canonical JSON of the generator config.
    pub config_hash: String,
    pub version: String,
    /// File name to SHA-256, for every file in the bundle but the manifest.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(cfg: &ScenarioConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

fn write_file(dir: &Path, name: &str, files: &mut BTreeMap<String, String>, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    fs::write(dir.join(name), &buf)?;
    files.insert(name.to_string(), sha256_hex(&buf));
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DayOrders {
    day: usize,
    orders: Vec<Order>,
}

/// Writes `scenario` and its `history` to `dir`, creating it if needed.
pub fn write_bundle(dir: &Path, scenario: &Scenario, history: &History) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    write_file(dir, CONFIG, &mut files, |b| Ok(serde_json::to_writer_pretty(b, &scenario.config)?))?;
    write_file(dir, "aois.csv", &mut files, |b| scenario.centroids.write_csv(b))?;
    let units: Vec<FlowUnit> = scenario.catalog.iter().copied().collect();
    write_file(dir, "fus.jsonl", &mut files, |b| write_jsonl(&units, b))?;
    write_file(dir, "couriers.jsonl", &mut files, |b| write_jsonl(&scenario.couriers, b))?;
    write_file(dir, "orders.jsonl", &mut files, |b| write_jsonl(&scenario.orders, b))?;
    let days: Vec<DayOrders> = scenario
        .history
        .iter()
        .enumerate()
        .map(|(day, orders)| DayOrders { day, orders: orders.clone() })
        .collect();
    write_file(dir, "history_orders.jsonl", &mut files, |b| write_jsonl(&days, b))?;
    write_file(dir, "history.jsonl", &mut files, |b| write_jsonl(&history.records, b))?;
    write_file(dir, "trajectories.jsonl", &mut files, |b| write_jsonl(&history.events, b))?;
    write_file(dir, "ranks.json", &mut files, |b| Ok(serde_json::to_writer_pretty(b, &history.ranks)?))?;
    write_file(dir, "truth.json", &mut files, |b| Ok(serde_json::to_writer_pretty(b, &scenario.truth)?))?;
    write_file(dir, "stats.json", &mut files, |b| Ok(serde_json::to_writer_pretty(b, &scenario.stats)?))?;
    let manifest = Manifest {
        seed: scenario.config.rng_seed,
        config_hash: config_hash(&scenario.config),
        version: env!("CARGO_PKG_VERSION").to_string(),
        files,
    };
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let f = File::open(dir.join(MANIFEST))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::format("bundle manifest", e.to_string()))
}

/// Checks every file listed in the manifest against its hash.
pub fn verify_bundle(dir: &Path) -> Result<Manifest> {
    let manifest = read_manifest(dir)?;
    for (name, want) in &manifest.files {
        let got = sha256_hex(&fs::read(dir.join(name))?);
        if &got != want {
            return Err(Error::format("scenario bundle", format!("{name} does not match its manifest hash")));
        }
    }
    Ok(manifest)
}

/// Loads a bundle. The city is regenerated from the stored config (the
/// generator is deterministic) and must reproduce the stored FUs and
/// evaluation orders; the history is read from disk.
pub fn read_bundle(dir: &Path) -> Result<(Scenario, History)> {
    let manifest = verify_bundle(dir)?;
    let cfg: ScenarioConfig = serde_json::from_reader(BufReader::new(File::open(dir.join(CONFIG))?))
        .map_err(|e| Error::format("scenario config", e.to_string()))?;
    if config_hash(&cfg) != manifest.config_hash {
        return Err(Error::format("scenario bundle", "config hash does not match the manifest"));
    }
    let scenario = generate_city(&cfg)?;
    let open = |name: &str| -> Result<BufReader<File>> { Ok(BufReader::new(File::open(dir.join(name))?)) };
    let units: Vec<FlowUnit> = read_jsonl("FU file", open("fus.jsonl")?)?;
    let orders: Vec<Order> = read_jsonl("order file", open("orders.jsonl")?)?;
    if units != scenario.catalog.iter().copied().collect::<Vec<_>>() || orders != scenario.orders {
        return Err(Error::format(
            "scenario bundle",
            "stored city differs from its regeneration; written by an incompatible version?",
        ));
    }
    let records: Vec<OrderRecord> = read_jsonl("order history file", open("history.jsonl")?)?;
    let events: Vec<TrajectoryEvent> = read_jsonl("trajectory file", open("trajectories.jsonl")?)?;
    let ranks = serde_json::from_reader(open("ranks.json")?).map_err(|e| Error::format("courier ranks", e.to_string()))?;
    Ok((scenario, History { events, records, ranks }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{generate_sc_trajectories, ScPolicy};

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
    fn round_trip_and_identical_hashes() {
        let s = generate_city(&small()).unwrap();
        let h = generate_sc_trajectories(&s, &ScPolicy::default()).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = write_bundle(a.path(), &s, &h).unwrap();
        let mb = write_bundle(b.path(), &s, &h).unwrap();
        assert_eq!(ma, mb);
        let (s2, h2) = read_bundle(a.path()).unwrap();
        assert_eq!(h2.events, h.events);
        assert_eq!(h2.records, h.records);
        assert_eq!(h2.ranks, h.ranks);
        assert_eq!(s2.orders, s.orders);
    }

    #[test]
    fn tampered_file_is_rejected() {
        let s = generate_city(&small()).unwrap();
        let h = generate_sc_trajectories(&s, &ScPolicy::default()).unwrap();
        let d = tempfile::tempdir().unwrap();
        write_bundle(d.path(), &s, &h).unwrap();
        fs::write(d.path().join("orders.jsonl"), b"").unwrap();
        assert!(matches!(read_bundle(d.path()), Err(Error::Format { .. })));
    }
}
