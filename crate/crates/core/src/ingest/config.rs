//! Plain-text key=value study configuration.

use crate::error::{Error, Result};
use crate::filter::{DEFAULT_MAX_MIB, DEFAULT_MIN_MIB};
use crate::model::time::{StudyCalendar, TimeGrid};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

/// Study configuration. File format: one `key = value` per line, `#`
/// comments, dates ISO-8601, date lists either comma-separated or an
/// inclusive `start..end` range, grid bounds as `HH:MM`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub launch_date: Option<NaiveDate>,
    pub calendar: StudyCalendar,
    pub grid: TimeGrid,
    pub max_zone_area_km2: f64,
    pub lowess_bandwidth_min: u32,
    /// None accepts every category.
    pub category_allowlist: Option<HashSet<String>>,
    pub min_mib: f64,
    pub max_mib: f64,
    /// Input file locations, relative to the config file's directory unless
    /// absolute.
    pub events_path: String,
    pub towers_path: String,
    pub zones_path: String,
    pub pois_path: String,
}

fn parse_hhmm(s: &str) -> Result<u16> {
    let (h, m) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("bad time {s:?}, expected HH:MM")))?;
    let h: u16 = h
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad hour in {s:?}")))?;
    let m: u16 = m
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad minute in {s:?}")))?;
    if h > 23 || m > 59 {
        return Err(Error::Config(format!("time {s:?} out of range")));
    }
    Ok(h * 60 + m)
}

pub(crate) fn format_hhmm(minute: u16) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad date {s:?}")))
}

fn parse_date_list(s: &str) -> Result<Vec<NaiveDate>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(vec![]);
    }
    if let Some((a, b)) = s.split_once("..") {
        let (start, end) = (parse_date(a)?, parse_date(b)?);
        if end < start {
            return Err(Error::Config(format!("empty date range {s:?}")));
        }
        let mut out = Vec::new();
        let mut d = start;
        while d <= end {
            out.push(d);
            d += chrono::Duration::days(1);
        }
        return Ok(out);
    }
    s.split(',').map(parse_date).collect()
}

impl StudyConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg = Self::from_str_contents(&text)?;
        // resolve relative data paths against the config directory
        if let Some(dir) = path.parent() {
            for p in [
                &mut cfg.events_path,
                &mut cfg.towers_path,
                &mut cfg.zones_path,
                &mut cfg.pois_path,
            ] {
                if !p.is_empty() && !Path::new(p.as_str()).is_absolute() {
                    *p = dir.join(p.as_str()).display().to_string();
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }

        let launch_date = kv.get("launch_date").map(|s| parse_date(s)).transpose()?;
        let pre = parse_date_list(
            kv.get("pre_dates")
                .ok_or_else(|| Error::Config("missing pre_dates".into()))?,
        )?;
        let post = parse_date_list(
            kv.get("post_dates")
                .ok_or_else(|| Error::Config("missing post_dates".into()))?,
        )?;
        let excluded = kv
            .get("excluded_dates")
            .map(|s| parse_date_list(s))
            .transpose()?
            .unwrap_or_default();
        let calendar = StudyCalendar::new(pre, post, excluded)?;

        let start = kv.get("grid_start").map(|s| parse_hhmm(s)).transpose()?.unwrap_or(360);
        let end = kv.get("grid_end").map(|s| parse_hhmm(s)).transpose()?.unwrap_or(1439);
        let grid = TimeGrid::new(start, end, 1)?;

        let max_zone_area_km2 = kv
            .get("max_zone_area_km2")
            .map(|s| s.parse().map_err(|_| Error::Config("bad max_zone_area_km2".into())))
            .transpose()?
            .unwrap_or(20.0);
        let lowess_bandwidth_min = kv
            .get("lowess_bandwidth_min")
            .map(|s| s.parse().map_err(|_| Error::Config("bad lowess_bandwidth_min".into())))
            .transpose()?
            .unwrap_or(30);
        let category_allowlist = kv.get("category_allowlist").and_then(|s| {
            let set: HashSet<String> = s
                .split(',')
                .map(|x| x.trim().to_string())
                .filter(|x| !x.is_empty())
                .collect();
            if set.is_empty() {
                None
            } else {
                Some(set)
            }
        });
        let min_mib = kv
            .get("min_mib")
            .map(|s| s.parse().map_err(|_| Error::Config("bad min_mib".into())))
            .transpose()?
            .unwrap_or(DEFAULT_MIN_MIB);
        let max_mib = kv
            .get("max_mib")
            .map(|s| s.parse().map_err(|_| Error::Config("bad max_mib".into())))
            .transpose()?
            .unwrap_or(DEFAULT_MAX_MIB);

        let get_path = |key: &str| kv.get(key).cloned().unwrap_or_default();
        Ok(StudyConfig {
            launch_date,
            calendar,
            grid,
            max_zone_area_km2,
            lowess_bandwidth_min,
            category_allowlist,
            min_mib,
            max_mib,
            events_path: get_path("events"),
            towers_path: get_path("towers"),
            zones_path: get_path("zones"),
            pois_path: get_path("pois"),
        })
    }

    pub fn to_file_contents(&self) -> String {
        let dates = |v: &[NaiveDate]| {
            v.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        if let Some(launch) = self.launch_date {
            out.push_str(&format!("launch_date = {launch}\n"));
        }
        out.push_str(&format!("pre_dates = {}\n", dates(&self.calendar.pre_dates)));
        out.push_str(&format!("post_dates = {}\n", dates(&self.calendar.post_dates)));
        if !self.calendar.excluded_dates.is_empty() {
            out.push_str(&format!(
                "excluded_dates = {}\n",
                dates(&self.calendar.excluded_dates)
            ));
        }
        out.push_str(&format!("grid_start = {}\n", format_hhmm(self.grid.start_minute)));
        out.push_str(&format!("grid_end = {}\n", format_hhmm(self.grid.end_minute)));
        out.push_str(&format!("max_zone_area_km2 = {}\n", self.max_zone_area_km2));
        out.push_str(&format!("lowess_bandwidth_min = {}\n", self.lowess_bandwidth_min));
        if let Some(allow) = &self.category_allowlist {
            let mut cats: Vec<&String> = allow.iter().collect();
            cats.sort();
            out.push_str(&format!(
                "category_allowlist = {}\n",
                cats.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",")
            ));
        }
        out.push_str(&format!("min_mib = {}\n", self.min_mib));
        out.push_str(&format!("max_mib = {}\n", self.max_mib));
        out.push_str(&format!("events = {}\n", self.events_path));
        out.push_str(&format!("towers = {}\n", self.towers_path));
        out.push_str(&format!("zones = {}\n", self.zones_path));
        out.push_str(&format!("pois = {}\n", self.pois_path));
        out
    }
}
