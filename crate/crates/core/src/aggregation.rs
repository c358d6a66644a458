//! Tower-to-zone assignment and the zone-level floating-population profiles
//! S, built by summing smoothed tower series after smoothing (B' before S).

use crate::error::Result;
use crate::model::time::TimeGrid;
use crate::model::{point_in_zone, Tower, ZoneRecord};
use crate::smoothing::SmoothedSeries;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Floating-population profile for one zone and date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneProfile {
    pub zone_id: String,
    pub date: NaiveDate,
    pub values: Vec<f64>,
}

/// Map each tower to the zone containing it (first match in zone order).
/// Towers outside every zone are absent from the map.
pub fn assign_towers(
    towers: &[Tower],
    zones: &[ZoneRecord],
) -> Result<HashMap<String, String>> {
    let mut assignment = HashMap::new();
    for tower in towers {
        if let Some(zone_id) = point_in_zone(tower.location, zones)? {
            assignment.insert(tower.tower_id.clone(), zone_id.to_string());
        }
    }
    Ok(assignment)
}

/// Sum smoothed tower series into zone profiles for one date. Towers in the
/// assignment without a series contribute zero. Output order follows the
/// zone list; zones receiving no tower series still appear as all-zero.
pub fn aggregate_zone(
    smoothed: &[SmoothedSeries],
    assignment: &HashMap<String, String>,
    zones: &[ZoneRecord],
    date: NaiveDate,
    grid: &TimeGrid,
) -> Vec<ZoneProfile> {
    let mut by_zone: HashMap<&str, Vec<f64>> = zones
        .iter()
        .map(|z| (z.zone_id.as_str(), vec![0.0; grid.len()]))
        .collect();
    for series in smoothed.iter().filter(|s| s.date == date) {
        if let Some(zone_id) = assignment.get(&series.key) {
            if let Some(values) = by_zone.get_mut(zone_id.as_str()) {
                for (acc, v) in values.iter_mut().zip(&series.values) {
                    *acc += v;
                }
            }
        }
    }
    zones
        .iter()
        .map(|z| ZoneProfile {
            zone_id: z.zone_id.clone(),
            date,
            values: by_zone.remove(z.zone_id.as_str()).unwrap(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::geometry::{Point, Polygon};
    use crate::model::LandUse;

    fn zone(id: &str, lon0: f64) -> ZoneRecord {
        ZoneRecord {
            zone_id: id.to_string(),
            polygon: Polygon::square(lon0, 0.0, 1.0, 1.0),
            land_use: LandUse::Residential,
            area_km2: 1.0,
            pokepoint_count: 1,
        }
    }

    fn tower(id: &str, lon: f64, lat: f64) -> Tower {
        Tower {
            tower_id: id.into(),
            location: Point::new(lon, lat),
        }
    }

    fn smoothed(key: &str, value: f64, len: usize) -> SmoothedSeries {
        SmoothedSeries {
            key: key.into(),
            date: "2016-07-27".parse().unwrap(),
            values: vec![value; len],
        }
    }

    #[test]
    fn tower_at_centroid_is_mapped() {
        let zones = vec![zone("A", 0.0), zone("B", 1.0)];
        let towers = vec![tower("T1", 0.5, 0.5), tower("T2", 5.0, 5.0)];
        let map = assign_towers(&towers, &zones).unwrap();
        assert_eq!(map.get("T1").map(String::as_str), Some("A"));
        assert!(!map.contains_key("T2"));
    }

    #[test]
    fn boundary_tower_first_match() {
        let zones = vec![zone("A", 0.0), zone("B", 1.0)];
        let towers = vec![tower("T", 1.0, 0.5)];
        let map = assign_towers(&towers, &zones).unwrap();
        assert_eq!(map.get("T").map(String::as_str), Some("A"));
    }

    #[test]
    fn zone_sum_of_constant_towers() {
        let zones = vec![zone("A", 0.0)];
        let grid = TimeGrid::new(0, 9, 1).unwrap();
        let assignment: HashMap<String, String> =
            [("T1", "A"), ("T2", "A")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let series = vec![smoothed("T1", 2.0, 10), smoothed("T2", 3.0, 10)];
        let profiles = aggregate_zone(&series, &assignment, &zones, series[0].date, &grid);
        assert_eq!(profiles.len(), 1);
        assert!(profiles[0].values.iter().all(|&v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn single_tower_zone_is_identity() {
        let zones = vec![zone("A", 0.0)];
        let grid = TimeGrid::new(0, 4, 1).unwrap();
        let assignment: HashMap<String, String> =
            [("T1".to_string(), "A".to_string())].into_iter().collect();
        let series = vec![SmoothedSeries {
            key: "T1".into(),
            date: "2016-07-27".parse().unwrap(),
            values: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        }];
        let profiles = aggregate_zone(&series, &assignment, &zones, series[0].date, &grid);
        assert_eq!(profiles[0].values, series[0].values);
    }

    #[test]
    fn mass_conservation_and_permutation_invariance() {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let zones = vec![zone("A", 0.0), zone("B", 1.0), zone("C", 2.0)];
        let grid = TimeGrid::new(0, 49, 1).unwrap();
        let date: NaiveDate = "2016-07-27".parse().unwrap();
        let mut assignment = HashMap::new();
        let mut series = Vec::new();
        for t in 0..9 {
            let tid = format!("T{t}");
            let zid = ["A", "B", "C"][t % 3].to_string();
            assignment.insert(tid.clone(), zid);
            series.push(SmoothedSeries {
                key: tid,
                date,
                values: (0..50).map(|_| rng.gen_range(0.0..10.0)).collect(),
            });
        }
        let profiles = aggregate_zone(&series, &assignment, &zones, date, &grid);
        for m in 0..50 {
            let zone_sum: f64 = profiles.iter().map(|p| p.values[m]).sum();
            let tower_sum: f64 = series.iter().map(|s| s.values[m]).sum();
            assert!((zone_sum - tower_sum).abs() < 1e-9);
        }
        let mut shuffled = series.clone();
        shuffled.shuffle(&mut rng);
        let again = aggregate_zone(&shuffled, &assignment, &zones, date, &grid);
        for (a, b) in profiles.iter().zip(&again) {
            assert_eq!(a.zone_id, b.zone_id);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
