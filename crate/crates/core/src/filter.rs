//! Device filtering: restrict the event stream to regularly active,
//! human-like devices before any counting happens.
//!
//! Event-level rule (i) drops events outside the selected zones or the time
//! grid. Device-level rules then require (ii) activity on every study date,
//! (iii) a strict per-day traffic band, and (iv) a service category on the
//! allowlist. A dropped device is attributed to the first rule that drops
//! it, in the order (ii), (iii), (iv).

use crate::error::{Error, Result};
use crate::model::time::{StudyCalendar, TimeGrid};
use crate::model::NetworkEvent;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

pub const KIB_PER_MIB: f64 = 1024.0;
pub const DEFAULT_MIN_MIB: f64 = 2.5;
pub const DEFAULT_MAX_MIB: f64 = 500.0;

/// Per-device, per-date activity summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDayStats {
    pub device_id: String,
    pub date: NaiveDate,
    pub event_count: u64,
    pub total_mib: f64,
    pub active: bool,
}

/// Outcome of the device-level selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceFilterReport {
    pub input_devices: u64,
    pub kept_devices: u64,
    pub dropped_by_rule: BTreeMap<String, u64>,
    /// Records the convention that per-day MiB totals are computed on the
    /// grid-filtered stream (rule (i) precedes rule (iii)).
    pub mib_totals_grid_filtered: bool,
}

impl DeviceFilterReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        out.push_str(&format!("input_devices,{}\n", self.input_devices));
        out.push_str(&format!("kept_devices,{}\n", self.kept_devices));
        for (rule, count) in &self.dropped_by_rule {
            out.push_str(&format!("dropped_{rule},{count}\n"));
        }
        out
    }
}

impl std::fmt::Display for DeviceFilterReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "device filter: {} in, {} kept (per-day MiB totals over grid-filtered events)",
            self.input_devices, self.kept_devices
        )?;
        for (rule, count) in &self.dropped_by_rule {
            writeln!(f, "  dropped by {rule}: {count}")?;
        }
        Ok(())
    }
}

/// Event-level filter (i): keep events at towers inside selected zones and
/// minutes inside the grid. `tower_zone` is the tower-to-zone assignment of
/// the selected zones.
pub fn event_in_scope(
    event: &NetworkEvent,
    tower_zone: &HashMap<String, String>,
    grid: &TimeGrid,
) -> bool {
    grid.contains(event.minute) && tower_zone.contains_key(&event.tower_id)
}

/// Streaming accumulator for per-device day statistics. Sharding by device
/// and merging is associative and commutative.
#[derive(Debug, Default, Clone)]
pub struct DayStatsAccumulator {
    /// device -> (category, date -> (events, kib))
    devices: HashMap<String, (String, HashMap<NaiveDate, (u64, f64)>)>,
}

impl DayStatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, event: &NetworkEvent) {
        let entry = self
            .devices
            .entry(event.device_id.clone())
            .or_insert_with(|| (event.device_category.clone(), HashMap::new()));
        let day = entry.1.entry(event.date).or_insert((0, 0.0));
        day.0 += 1;
        day.1 += event.kib_downloaded;
    }

    pub fn merge(&mut self, other: DayStatsAccumulator) {
        for (device, (category, days)) in other.devices {
            let entry = self
                .devices
                .entry(device)
                .or_insert_with(|| (category, HashMap::new()));
            for (date, (n, kib)) in days {
                let day = entry.1.entry(date).or_insert((0, 0.0));
                day.0 += n;
                day.1 += kib;
            }
        }
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn day_stats(&self, device_id: &str) -> Vec<DeviceDayStats> {
        self.devices
            .get(device_id)
            .map(|(_, days)| {
                days.iter()
                    .map(|(&date, &(n, kib))| DeviceDayStats {
                        device_id: device_id.to_string(),
                        date,
                        event_count: n,
                        total_mib: kib / KIB_PER_MIB,
                        active: n > 0,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Device-level rules (ii)-(iv). Returns the kept device set and the
/// attribution report. Bounds are strict on both sides.
pub fn select_devices(
    stats: &DayStatsAccumulator,
    calendar: &StudyCalendar,
    min_mib: f64,
    max_mib: f64,
    allowlist: Option<&HashSet<String>>,
) -> Result<(HashSet<String>, DeviceFilterReport)> {
    let study_dates = calendar.study_dates();
    if study_dates.is_empty() {
        return Err(Error::Config("empty study calendar".into()));
    }

    let mut kept = HashSet::new();
    let mut dropped: BTreeMap<String, u64> = BTreeMap::new();
    // deterministic iteration for reproducible reports
    let mut device_ids: Vec<&String> = stats.devices.keys().collect();
    device_ids.sort();

    for device_id in device_ids {
        let (category, days) = &stats.devices[device_id];
        // (ii): active on every study date
        let active_all = study_dates
            .iter()
            .all(|d| days.get(d).map(|&(n, _)| n > 0).unwrap_or(false));
        if !active_all {
            *dropped.entry("rule_ii_activity".into()).or_insert(0) += 1;
            continue;
        }
        // (iii): strict MiB band on every study date
        let in_band = study_dates.iter().all(|d| {
            let (_, kib) = days[d];
            let mib = kib / KIB_PER_MIB;
            mib > min_mib && mib < max_mib
        });
        if !in_band {
            *dropped.entry("rule_iii_traffic".into()).or_insert(0) += 1;
            continue;
        }
        // (iv): category allowlist; an absent list accepts everything
        if let Some(allow) = allowlist {
            if !allow.contains(category) {
                *dropped.entry("rule_iv_category".into()).or_insert(0) += 1;
                continue;
            }
        }
        kept.insert(device_id.clone());
    }

    let report = DeviceFilterReport {
        input_devices: stats.devices.len() as u64,
        kept_devices: kept.len() as u64,
        dropped_by_rule: dropped,
        mib_totals_grid_filtered: true,
    };
    Ok((kept, report))
}
