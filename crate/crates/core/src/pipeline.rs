//! The two-pass counting pipeline: device selection over the full stream,
//! then per-tower unique-device counting, LOWESS smoothing, and zone
//! aggregation.
//!
//! The event stream is visited twice, so sources must be re-creatable. Both
//! passes work in constant memory per event; only per-device day statistics
//! (pass one) and per-tower-date minute sets (pass two) are retained.

use crate::aggregation::{aggregate_zone, assign_towers, ZoneProfile};
use crate::error::{Error, Result};
use crate::filter::{event_in_scope, select_devices, DayStatsAccumulator, DeviceFilterReport};
use crate::ingest::EventCsvReader;
use crate::model::time::{StudyCalendar, TimeGrid};
use crate::model::{NetworkEvent, Tower, ZoneRecord};
use crate::smoothing::{lowess_smooth, RawTowerSeries, SmoothedSeries};
use chrono::NaiveDate;
use rayon::prelude::*;
use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

/// A re-creatable stream of network events. `stream` may be called several
/// times and must yield the same events in the same order each time.
pub trait EventSource: Sync {
    fn stream(&self) -> Result<Box<dyn Iterator<Item = NetworkEvent> + '_>>;
}

/// Event source backed by a CSV file on disk.
pub struct CsvEventSource {
    pub path: PathBuf,
}

impl EventSource for CsvEventSource {
    fn stream(&self) -> Result<Box<dyn Iterator<Item = NetworkEvent> + '_>> {
        Ok(Box::new(EventCsvReader::open(&self.path)?))
    }
}

impl EventSource for Vec<NetworkEvent> {
    fn stream(&self) -> Result<Box<dyn Iterator<Item = NetworkEvent> + '_>> {
        Ok(Box::new(self.iter().cloned()))
    }
}

/// Everything the pipeline needs besides the event stream. Zones must
/// already be selected; their order fixes tie-breaking for boundary towers.
pub struct PipelineInputs<'a> {
    pub zones: &'a [ZoneRecord],
    pub towers: &'a [Tower],
    pub calendar: &'a StudyCalendar,
    pub grid: &'a TimeGrid,
    pub lowess_bandwidth_min: u32,
    pub min_mib: f64,
    pub max_mib: f64,
    pub category_allowlist: Option<&'a HashSet<String>>,
}

pub struct PipelineOutput {
    /// One profile per (date, zone), ordered by date then zone list order.
    pub profiles: Vec<ZoneProfile>,
    pub filter_report: DeviceFilterReport,
    pub tower_assignment: HashMap<String, String>,
    /// Smoothed per-tower series, kept for debugging exports.
    pub smoothed: Vec<SmoothedSeries>,
}

/// Run both passes and return zone profiles for every study date.
pub fn run_pipeline<S: EventSource>(source: &S, inputs: &PipelineInputs) -> Result<PipelineOutput> {
    let tower_zone = assign_towers(inputs.towers, inputs.zones)?;
    let study_dates: HashSet<NaiveDate> = inputs.calendar.study_dates().into_iter().collect();

    // pass one: per-device day statistics over in-scope events
    let mut acc = DayStatsAccumulator::new();
    for event in source.stream()? {
        if study_dates.contains(&event.date) && event_in_scope(&event, &tower_zone, inputs.grid) {
            acc.add(&event);
        }
    }
    let (kept, filter_report) = select_devices(
        &acc,
        inputs.calendar,
        inputs.min_mib,
        inputs.max_mib,
        inputs.category_allowlist,
    )?;

    // pass two: unique kept devices per tower-minute, interning ids
    let mut device_keys: HashMap<String, u32> = HashMap::with_capacity(kept.len());
    let mut per_tower_date: HashMap<(String, NaiveDate), Vec<(u16, u32)>> = HashMap::new();
    for event in source.stream()? {
        if !study_dates.contains(&event.date)
            || !event_in_scope(&event, &tower_zone, inputs.grid)
            || !kept.contains(&event.device_id)
        {
            continue;
        }
        let next_key = device_keys.len() as u32;
        let key = *device_keys.entry(event.device_id).or_insert(next_key);
        per_tower_date
            .entry((event.tower_id, event.date))
            .or_default()
            .push((event.minute, key));
    }

    // deterministic order regardless of hash-map iteration or thread count
    let mut keyed: Vec<((String, NaiveDate), Vec<(u16, u32)>)> = per_tower_date.into_iter().collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));

    let grid = inputs.grid;
    let bandwidth = inputs.lowess_bandwidth_min;
    let smoothed: Vec<SmoothedSeries> = keyed
        .into_par_iter()
        .map(|((tower_id, date), events)| {
            let raw = RawTowerSeries::from_events(tower_id, date, events, grid);
            lowess_smooth(&raw, grid, bandwidth)
        })
        .collect::<Result<_>>()?;

    let mut dates: Vec<NaiveDate> = study_dates.into_iter().collect();
    dates.sort();
    let mut profiles = Vec::with_capacity(dates.len() * inputs.zones.len());
    for date in dates {
        profiles.extend(aggregate_zone(&smoothed, &tower_zone, inputs.zones, date, grid));
    }
    if profiles.is_empty() {
        return Err(Error::Ingest("no zone profiles produced".into()));
    }
    Ok(PipelineOutput {
        profiles,
        filter_report,
        tower_assignment: tower_zone,
        smoothed,
    })
}
