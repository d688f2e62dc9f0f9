//! AOI identifiers, centroid coordinates and great-circle distances.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Opaque identifier of an area of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AoiId(pub u32);

impl fmt::Display for AoiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "aoi{}", self.0)
    }
}

/// A point in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::validation(format!(
                "coordinate ({lat}, {lon}) out of range"
            )));
        }
        Ok(GeoPoint { lat, lon })
    }

    /// Haversine distance in meters.
    pub fn distance_m(&self, other: &GeoPoint) -> f64 {
        let (p1, p2) = (self.lat.to_radians(), other.lat.to_radians());
        let dp = p2 - p1;
        let dl = (other.lon - self.lon).to_radians();
        let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
    }

    /// Point displaced by `east_m` / `north_m` meters (local flat approximation).
    pub fn offset_m(&self, east_m: f64, north_m: f64) -> GeoPoint {
        let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
        let dlon = (east_m / (EARTH_RADIUS_M * self.lat.to_radians().cos())).to_degrees();
        GeoPoint {
            lat: self.lat + dlat,
            lon: self.lon + dlon,
        }
    }
}

/// Centroid lookup; each AOI has exactly one centroid.
#[derive(Debug, Clone, Default)]
pub struct AoiMap {
    centroids: HashMap<AoiId, GeoPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CentroidRow {
    aoi_id: u32,
    lat: f64,
    lon: f64,
}

impl AoiMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: AoiId, point: GeoPoint) -> Result<()> {
        if self.centroids.insert(id, point).is_some() {
            return Err(Error::validation(format!("duplicate centroid for {id}")));
        }
        Ok(())
    }

    pub fn get(&self, id: AoiId) -> Option<&GeoPoint> {
        self.centroids.get(&id)
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    /// AOI ids in ascending order.
    pub fn ids(&self) -> Vec<AoiId> {
        let mut ids: Vec<_> = self.centroids.keys().copied().collect();
        ids.sort();
        ids
    }

    /// Distance between two AOI centroids; unknown AOIs yield `None`.
    pub fn distance(&self, a: AoiId, b: AoiId) -> Option<f64> {
        if a == b {
            return self.get(a).map(|_| 0.0);
        }
        Some(self.get(a)?.distance_m(self.get(b)?))
    }

    /// Distance between two known AOIs; panics on unknown ids.
    pub fn dist(&self, a: AoiId, b: AoiId) -> f64 {
        self.distance(a, b)
            .unwrap_or_else(|| panic!("unknown AOI in distance lookup: {a} / {b}"))
    }

    /// Reads `aoi_id,lat,lon` CSV with a header row.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut map = AoiMap::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for row in rdr.deserialize() {
            let row: CentroidRow = row?;
            map.insert(AoiId(row.aoi_id), GeoPoint::new(row.lat, row.lon)?)?;
        }
        Ok(map)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for id in self.ids() {
            let p = self.centroids[&id];
            wtr.serialize(CentroidRow {
                aoi_id: id.0,
                lat: p.lat,
                lon: p.lon,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_coordinates() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(-90.0, 180.0).is_ok());
    }

    #[test]
    fn one_degree_latitude_is_about_111km() {
        let a = GeoPoint::new(0.0, 0.0).unwrap();
        let b = GeoPoint::new(1.0, 0.0).unwrap();
        assert!((a.distance_m(&b) - 111_195.0).abs() < 50.0);
    }

    #[test]
    fn offset_round_trips_through_haversine() {
        let o = GeoPoint::new(39.9, 116.4).unwrap();
        let p = o.offset_m(300.0, 400.0);
        assert!((o.distance_m(&p) - 500.0).abs() < 0.5);
    }

    #[test]
    fn csv_round_trip() {
        let mut m = AoiMap::new();
        m.insert(AoiId(3), GeoPoint::new(39.9, 116.4).unwrap()).unwrap();
        m.insert(AoiId(1), GeoPoint::new(39.91, 116.41).unwrap()).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = AoiMap::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.ids(), vec![AoiId(1), AoiId(3)]);
        assert!(m.insert(AoiId(1), GeoPoint::new(0.0, 0.0).unwrap()).is_err());
    }
}
