//! File readers for the four inputs: events CSV, towers CSV, POIs CSV, and
//! zones GeoJSON.

use crate::error::{Error, Result};
use crate::model::geometry::{Point, Polygon};
use crate::model::time::MINUTES_PER_DAY;
use crate::model::{LandUse, NetworkEvent, Tower, ZoneRecord};
use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

/// Per-reason counts of skipped event rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub by_reason: BTreeMap<String, u64>,
}

impl RejectionReport {
    pub fn total(&self) -> u64 {
        self.by_reason.values().sum()
    }

    fn bump(&mut self, reason: &str) {
        *self.by_reason.entry(reason.to_string()).or_insert(0) += 1;
    }
}

/// Streaming CSV event reader. Malformed rows are counted per reason and
/// skipped, never fatal; a missing file or wrong header is fatal at open.
pub struct EventCsvReader {
    reader: csv::Reader<File>,
    record: csv::StringRecord,
    report: RejectionReport,
}

const EVENT_HEADER: [&str; 5] = ["timestamp", "device_id", "tower_id", "kib", "category"];

impl EventCsvReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header = reader
            .headers()
            .map_err(|e| Error::Ingest(format!("cannot read event header: {e}")))?;
        let got: Vec<&str> = header.iter().map(str::trim).collect();
        if got != EVENT_HEADER {
            return Err(Error::Ingest(format!(
                "bad events header {:?}, expected {:?}",
                got, EVENT_HEADER
            )));
        }
        Ok(EventCsvReader {
            reader,
            record: csv::StringRecord::new(),
            report: RejectionReport::default(),
        })
    }

    /// Per-reason rejection counts accumulated so far (complete once the
    /// stream has been drained).
    pub fn report(&self) -> &RejectionReport {
        &self.report
    }

    fn parse_row(record: &csv::StringRecord) -> std::result::Result<NetworkEvent, &'static str> {
        if record.len() != 5 {
            return Err("wrong_field_count");
        }
        let ts: NaiveDateTime = record[0]
            .trim()
            .parse()
            .or_else(|_| {
                NaiveDateTime::parse_from_str(record[0].trim(), "%Y-%m-%dT%H:%M")
            })
            .map_err(|_| "bad_timestamp")?;
        let minute = (ts.time().hour() * 60 + ts.time().minute()) as u16;
        if minute >= MINUTES_PER_DAY {
            return Err("bad_timestamp");
        }
        let device_id = record[1].trim();
        let tower_id = record[2].trim();
        if device_id.is_empty() {
            return Err("empty_device_id");
        }
        if tower_id.is_empty() {
            return Err("empty_tower_id");
        }
        let kib: f64 = record[3].trim().parse().map_err(|_| "bad_kib")?;
        if !kib.is_finite() || kib < 0.0 {
            return Err("negative_kib");
        }
        Ok(NetworkEvent {
            date: ts.date(),
            minute,
            device_id: device_id.to_string(),
            tower_id: tower_id.to_string(),
            kib_downloaded: kib,
            device_category: record[4].trim().to_string(),
        })
    }
}

impl Iterator for EventCsvReader {
    type Item = NetworkEvent;

    fn next(&mut self) -> Option<NetworkEvent> {
        loop {
            match self.reader.read_record(&mut self.record) {
                Ok(false) => return None,
                Ok(true) => match Self::parse_row(&self.record) {
                    Ok(event) => return Some(event),
                    Err(reason) => self.report.bump(reason),
                },
                Err(_) => self.report.bump("unreadable_row"),
            }
        }
    }
}

/// Towers CSV: `tower_id,lon,lat`.
pub fn read_towers(path: &Path) -> Result<Vec<Tower>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut towers = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Ingest(format!("towers row {}: {e}", i + 2)))?;
        if record.len() != 3 {
            return Err(Error::Ingest(format!("towers row {}: wrong field count", i + 2)));
        }
        let tower = Tower {
            tower_id: record[0].trim().to_string(),
            location: Point::new(
                record[1].trim().parse().map_err(|_| {
                    Error::Ingest(format!("towers row {}: bad lon", i + 2))
                })?,
                record[2].trim().parse().map_err(|_| {
                    Error::Ingest(format!("towers row {}: bad lat", i + 2))
                })?,
            ),
        };
        tower.validate()?;
        if !seen.insert(tower.tower_id.clone()) {
            return Err(Error::Ingest(format!("duplicate tower id {}", tower.tower_id)));
        }
        towers.push(tower);
    }
    Ok(towers)
}

/// A game point of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub location: Point,
    pub kind: String,
}

/// POIs CSV: `lon,lat,kind`. PokeStops and PokeGyms are treated identically.
pub fn read_pois(path: &Path) -> Result<Vec<Poi>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut pois = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Ingest(format!("pois row {}: {e}", i + 2)))?;
        if record.len() != 3 {
            return Err(Error::Ingest(format!("pois row {}: wrong field count", i + 2)));
        }
        let p = Point::new(
            record[0].trim().parse().map_err(|_| Error::Ingest(format!("pois row {}: bad lon", i + 2)))?,
            record[1].trim().parse().map_err(|_| Error::Ingest(format!("pois row {}: bad lat", i + 2)))?,
        );
        if !p.is_valid() {
            return Err(Error::Ingest(format!("pois row {}: invalid coordinates", i + 2)));
        }
        pois.push(Poi {
            location: p,
            kind: record[2].trim().to_string(),
        });
    }
    Ok(pois)
}

/// Zones GeoJSON: a FeatureCollection of Polygon features with properties
/// `zone_id`, `land_use`, `area_km2`.
pub fn read_zones(path: &Path) -> Result<Vec<ZoneRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Ingest(format!("zones GeoJSON: {e}")))?;
    parse_zones_geojson(&value)
}

pub fn parse_zones_geojson(value: &serde_json::Value) -> Result<Vec<ZoneRecord>> {
    if value["type"] != "FeatureCollection" {
        return Err(Error::Ingest("zones file is not a FeatureCollection".into()));
    }
    let features = value["features"]
        .as_array()
        .ok_or_else(|| Error::Ingest("zones file has no features array".into()))?;
    let mut zones = Vec::with_capacity(features.len());
    for (i, feature) in features.iter().enumerate() {
        let props = &feature["properties"];
        let zone_id = props["zone_id"]
            .as_str()
            .ok_or_else(|| Error::Ingest(format!("feature {i}: missing zone_id")))?
            .to_string();
        let land_use = LandUse::parse(
            props["land_use"]
                .as_str()
                .ok_or_else(|| Error::Ingest(format!("zone {zone_id}: missing land_use")))?,
        )?;
        let area_km2 = props["area_km2"]
            .as_f64()
            .ok_or_else(|| Error::Ingest(format!("zone {zone_id}: missing area_km2")))?;
        let geom = &feature["geometry"];
        if geom["type"] != "Polygon" {
            return Err(Error::Geometry {
                zone_id,
                message: format!("unsupported geometry type {}", geom["type"]),
            });
        }
        let rings_json = geom["coordinates"]
            .as_array()
            .ok_or_else(|| Error::Geometry {
                zone_id: zone_id.clone(),
                message: "missing coordinates".into(),
            })?;
        let mut rings = Vec::with_capacity(rings_json.len());
        for ring in rings_json {
            let coords = ring.as_array().ok_or_else(|| Error::Geometry {
                zone_id: zone_id.clone(),
                message: "malformed ring".into(),
            })?;
            let mut points = Vec::with_capacity(coords.len());
            for c in coords {
                let lon = c[0].as_f64();
                let lat = c[1].as_f64();
                match (lon, lat) {
                    (Some(lon), Some(lat)) => points.push(Point::new(lon, lat)),
                    _ => {
                        return Err(Error::Geometry {
                            zone_id: zone_id.clone(),
                            message: "malformed coordinate".into(),
                        })
                    }
                }
            }
            rings.push(points);
        }
        let zone = ZoneRecord {
            zone_id,
            polygon: Polygon::new(rings),
            land_use,
            area_km2,
            pokepoint_count: props["pokepoint_count"].as_u64().unwrap_or(0) as u32,
        };
        zone.validate()?;
        zones.push(zone);
    }
    Ok(zones)
}

/// Serialize zones to a GeoJSON FeatureCollection. The geometry emitted here
/// is the exact geometry serialization reused by the choropleth export.
pub fn zones_to_geojson(zones: &[ZoneRecord]) -> serde_json::Value {
    let features: Vec<serde_json::Value> = zones
        .iter()
        .map(|z| {
            serde_json::json!({
                "type": "Feature",
                "properties": {
                    "zone_id": z.zone_id,
                    "land_use": z.land_use.as_str(),
                    "area_km2": z.area_km2,
                    "pokepoint_count": z.pokepoint_count,
                },
                "geometry": geometry_json(z),
            })
        })
        .collect();
    serde_json::json!({ "type": "FeatureCollection", "features": features })
}

pub fn geometry_json(zone: &ZoneRecord) -> serde_json::Value {
    let coords: Vec<Vec<[f64; 2]>> = zone
        .polygon
        .rings
        .iter()
        .map(|r| r.iter().map(|p| [p.lon, p.lat]).collect())
        .collect();
    serde_json::json!({ "type": "Polygon", "coordinates": coords })
}
