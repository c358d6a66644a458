//! Core domain types shared by every pipeline stage. All types here are
//! immutable after construction and safe to share across workers.

pub mod geometry;
pub mod time;

use crate::error::{Error, Result};
use chrono::NaiveDate;
use geometry::{Point, Polygon};
use serde::{Deserialize, Serialize};

/// One device observation from the network log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEvent {
    pub date: NaiveDate,
    /// Minute of day, 0..=1439.
    pub minute: u16,
    pub device_id: String,
    pub tower_id: String,
    /// KiB downloaded since the device's previous event.
    pub kib_downloaded: f64,
    pub device_category: String,
}

impl NetworkEvent {
    pub fn validate(&self) -> Result<()> {
        if self.minute >= time::MINUTES_PER_DAY {
            return Err(Error::Ingest(format!("minute {} out of range", self.minute)));
        }
        if self.device_id.is_empty() || self.tower_id.is_empty() {
            return Err(Error::Ingest("empty device or tower id".into()));
        }
        if !(self.kib_downloaded >= 0.0) {
            return Err(Error::Ingest("negative kib".into()));
        }
        Ok(())
    }
}

/// A cell tower and its location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub tower_id: String,
    pub location: Point,
}

impl Tower {
    pub fn validate(&self) -> Result<()> {
        if self.tower_id.is_empty() {
            return Err(Error::Ingest("empty tower id".into()));
        }
        if !self.location.is_valid() {
            return Err(Error::Ingest(format!(
                "tower {} has invalid coordinates",
                self.tower_id
            )));
        }
        Ok(())
    }
}

/// Land-use class of a traffic analysis zone. `Residential` is the dummy
/// reference level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LandUse {
    Residential,
    BusinessOnly,
    MixedActivities,
}

impl LandUse {
    pub fn as_str(&self) -> &'static str {
        match self {
            LandUse::Residential => "residential",
            LandUse::BusinessOnly => "business_only",
            LandUse::MixedActivities => "mixed_activities",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "residential" => Ok(LandUse::Residential),
            "business_only" => Ok(LandUse::BusinessOnly),
            "mixed_activities" => Ok(LandUse::MixedActivities),
            other => Err(Error::Ingest(format!("unknown land use {other:?}"))),
        }
    }
}

/// A traffic analysis zone: polygon, land use, surveyed area, and the number
/// of game points of interest inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneRecord {
    pub zone_id: String,
    pub polygon: Polygon,
    pub land_use: LandUse,
    pub area_km2: f64,
    pub pokepoint_count: u32,
}

impl ZoneRecord {
    pub fn validate(&self) -> Result<()> {
        if self.zone_id.is_empty() {
            return Err(Error::Ingest("empty zone id".into()));
        }
        if !(self.area_km2 > 0.0) {
            return Err(Error::Geometry {
                zone_id: self.zone_id.clone(),
                message: format!("non-positive area {}", self.area_km2),
            });
        }
        self.polygon.validate(&self.zone_id)
    }

    /// Whether the stored area matches the spherical recomputation within 1%.
    /// The stored survey value stays authoritative either way.
    pub fn area_consistent(&self) -> bool {
        let computed = self.polygon.area_km2();
        (computed - self.area_km2).abs() <= 0.01 * self.area_km2
    }
}

/// First-match containment lookup over an ordered zone list. Boundary points
/// belong to the earliest zone in input order whose polygon touches them.
pub fn point_in_zone<'a>(p: Point, zones: &'a [ZoneRecord]) -> Result<Option<&'a str>> {
    for zone in zones {
        if !zone.polygon.closed_check() {
            return Err(Error::Geometry {
                zone_id: zone.zone_id.clone(),
                message: "polygon ring not closed".into(),
            });
        }
        if zone.polygon.contains(p) {
            return Ok(Some(&zone.zone_id));
        }
    }
    Ok(None)
}

impl Polygon {
    fn closed_check(&self) -> bool {
        !self.rings.is_empty()
            && self
                .rings
                .iter()
                .all(|r| r.len() >= 4 && r.first() == r.last())
    }
}
