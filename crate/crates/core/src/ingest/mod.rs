//! Input parsing and validation: events, towers, zones, points of interest,
//! and the study configuration file. Also owns the zone selection rules.

mod config;
mod files;

pub use config::StudyConfig;
pub use files::{
    geometry_json, parse_zones_geojson, read_pois, read_towers, read_zones, zones_to_geojson,
    EventCsvReader, Poi, RejectionReport,
};

use crate::error::{Error, Result};
use crate::model::geometry::Point;
use crate::model::{point_in_zone, Tower, ZoneRecord};
use rand::{Rng, SeedableRng};

/// Zone selection: keep zones under the area threshold that contain at
/// least one tower and at least one game point of interest. Result order is
/// stable by zone_id.
pub fn select_zones(
    zones: &[ZoneRecord],
    towers: &[Tower],
    max_area_km2: f64,
) -> Result<Vec<ZoneRecord>> {
    let mut selected: Vec<ZoneRecord> = Vec::new();
    for zone in zones {
        if zone.area_km2 >= max_area_km2 || zone.pokepoint_count == 0 {
            continue;
        }
        let has_tower = towers
            .iter()
            .any(|t| zone.polygon.contains(t.location));
        if has_tower {
            selected.push(zone.clone());
        }
    }
    selected.sort_by(|a, b| a.zone_id.cmp(&b.zone_id));
    Ok(selected)
}

/// Attach point-of-interest counts to zones: each POI is counted in the
/// first zone (input order) whose polygon contains it, matching the
/// point-in-zone convention, so no POI is ever double-counted.
pub fn attach_pokepoints(zones: &[ZoneRecord], pois: &[Point]) -> Result<Vec<ZoneRecord>> {
    let mut out: Vec<ZoneRecord> = zones
        .iter()
        .map(|z| ZoneRecord {
            pokepoint_count: 0,
            ..z.clone()
        })
        .collect();
    for &poi in pois {
        if let Some(zone_id) = point_in_zone(poi, zones)? {
            let zone = out.iter_mut().find(|z| z.zone_id == zone_id).unwrap();
            zone.pokepoint_count += 1;
        }
    }
    Ok(out)
}

/// Validate polygons and check pairwise non-overlap with a sampled-point
/// probe. Zones are required to partition space; any zone whose interior
/// samples land strictly inside another zone is a hard ingest error.
pub fn validate_zones(zones: &[ZoneRecord]) -> Result<()> {
    for zone in zones {
        zone.validate()?;
    }
    let mut ids = std::collections::HashSet::new();
    for zone in zones {
        if !ids.insert(&zone.zone_id) {
            return Err(Error::Ingest(format!("duplicate zone id {}", zone.zone_id)));
        }
    }
    // fixed seed: validation must be deterministic
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_2016);
    let bboxes: Vec<_> = zones.iter().map(|z| z.polygon.bbox()).collect();
    for (i, zone) in zones.iter().enumerate() {
        let (min, max) = bboxes[i];
        let mut samples = Vec::with_capacity(16);
        let centroid = zone.polygon.vertex_centroid();
        if zone.polygon.contains_interior(centroid) {
            samples.push(centroid);
        }
        let mut tries = 0;
        while samples.len() < 16 && tries < 400 {
            tries += 1;
            let p = Point::new(
                rng.gen_range(min.lon..=max.lon),
                rng.gen_range(min.lat..=max.lat),
            );
            if zone.polygon.contains_interior(p) {
                samples.push(p);
            }
        }
        for (j, other) in zones.iter().enumerate() {
            if i == j {
                continue;
            }
            let (omin, omax) = bboxes[j];
            if max.lon < omin.lon || omax.lon < min.lon || max.lat < omin.lat || omax.lat < min.lat
            {
                continue;
            }
            if samples.iter().any(|&p| other.polygon.contains_interior(p)) {
                return Err(Error::Ingest(format!(
                    "zones {} and {} overlap",
                    zone.zone_id, other.zone_id
                )));
            }
        }
    }
    Ok(())
}
