//! The per-minute regression sweep and everything downstream of it:
//! IRR time series, significant-window extraction, zone difference maps,
//! and the point-of-interest density correlation.

use crate::aggregation::ZoneProfile;
use crate::error::{Error, Result};
use crate::glm::design::DesignMatrix;
use crate::glm::{fit_negbin, SnapshotFit};
use crate::model::time::{DayClass, DayGroup, StudyCalendar, TimeGrid};
use crate::model::ZoneRecord;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::HashMap;
use std::fmt::Write as _;

/// Which regressors enter the per-minute model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelSpec {
    /// Intervention indicator, day-of-week dummies, land-use dummies, and
    /// the point-of-interest count.
    Full,
    /// Intervention indicator only.
    Minimal,
    /// The full model plus intervention-by-day-of-week interactions.
    Interactions,
}

impl ModelSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ModelSpec::Full),
            "minimal" => Ok(ModelSpec::Minimal),
            "interactions" => Ok(ModelSpec::Interactions),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelSpec::Full => "full",
            ModelSpec::Minimal => "minimal",
            ModelSpec::Interactions => "interactions",
        }
    }
}

/// Name of the intervention regressor in every model.
pub const POGO: &str = "pogo";

/// Keep only profiles whose date falls in one day group. Useful for
/// analyzing business days and weekends separately.
pub fn filter_profiles_by_day_group(
    profiles: &[ZoneProfile],
    calendar: &StudyCalendar,
    group: DayGroup,
) -> Vec<ZoneProfile> {
    profiles
        .iter()
        .filter(|p| group.matches(calendar.class_of(p.date)))
        .cloned()
        .collect()
}

/// Build the design matrix for one grid minute. One observation per
/// (zone, date) profile; the response is the smoothed count rounded to the
/// nearest integer (ties to even), the offset is ln(zone area). Dummy
/// columns that are constant zero under the given calendar (for example a
/// Saturday dummy with no Saturdays) are dropped, and when the day dummies
/// saturate (weekend-only data, where saturday + sunday = intercept) the
/// saturday dummy is dropped to make Saturday the reference level.
pub fn build_design(
    profiles: &[ZoneProfile],
    zones: &[ZoneRecord],
    calendar: &StudyCalendar,
    minute_index: usize,
    model: ModelSpec,
) -> Result<DesignMatrix> {
    let zone_map: HashMap<&str, &ZoneRecord> =
        zones.iter().map(|z| (z.zone_id.as_str(), z)).collect();

    let mut names: Vec<String> = vec!["intercept".into(), POGO.into()];
    if model != ModelSpec::Minimal {
        names.extend(
            ["saturday", "sunday", "business_only", "mixed_activities", "pokepoints"]
                .map(String::from),
        );
    }
    if model == ModelSpec::Interactions {
        names.extend(["pogo_saturday", "pogo_sunday"].map(String::from));
    }

    let mut rows = Vec::with_capacity(profiles.len());
    let mut offset = Vec::with_capacity(profiles.len());
    let mut response = Vec::with_capacity(profiles.len());
    for profile in profiles {
        let zone = zone_map.get(profile.zone_id.as_str()).ok_or_else(|| {
            Error::Config(format!("profile references unknown zone {:?}", profile.zone_id))
        })?;
        let value = *profile.values.get(minute_index).ok_or_else(|| {
            Error::Config(format!("minute index {minute_index} out of profile range"))
        })?;
        let pogo = if calendar.is_post(profile.date) { 1.0 } else { 0.0 };
        let class = calendar.class_of(profile.date);
        let sat = if class == DayClass::Saturday { 1.0 } else { 0.0 };
        let sun = if class == DayClass::Sunday { 1.0 } else { 0.0 };

        let mut row = vec![1.0, pogo];
        if model != ModelSpec::Minimal {
            row.push(sat);
            row.push(sun);
            row.push(if zone.land_use == crate::model::LandUse::BusinessOnly { 1.0 } else { 0.0 });
            row.push(if zone.land_use == crate::model::LandUse::MixedActivities { 1.0 } else { 0.0 });
            row.push(zone.pokepoint_count as f64);
        }
        if model == ModelSpec::Interactions {
            row.push(pogo * sat);
            row.push(pogo * sun);
        }
        rows.push(row);
        offset.push(zone.area_km2.ln());
        response.push(value.round_ties_even() as u64);
    }

    // drop columns that never vary from zero under this calendar / zone set
    let mut drop = vec![false; names.len()];
    for (j, flag) in drop.iter_mut().enumerate() {
        *flag = rows.iter().all(|r| r[j] == 0.0);
    }
    // weekend-only data: saturday + sunday = intercept, so drop saturday
    if let (Some(jsat), Some(jsun)) = (
        names.iter().position(|n| n == "saturday"),
        names.iter().position(|n| n == "sunday"),
    ) {
        if rows.iter().all(|r| r[jsat] + r[jsun] == 1.0) {
            drop[jsat] = true;
        }
    }
    let keep: Vec<usize> = (0..names.len()).filter(|&j| !drop[j]).collect();
    let kept_names: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
    let kept_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| keep.iter().map(|&j| r[j]).collect())
        .collect();
    DesignMatrix::from_rows(kept_names, &kept_rows, offset, response)
}

/// Result of the full per-minute sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub fits: Vec<SnapshotFit>,
    pub non_converged: usize,
}

impl SweepResult {
    /// Fraction of minutes whose fit failed to converge.
    pub fn non_converged_fraction(&self) -> f64 {
        if self.fits.is_empty() {
            0.0
        } else {
            self.non_converged as f64 / self.fits.len() as f64
        }
    }

    /// Sweep-level warning when more than 5% of minutes failed to converge.
    pub fn warning(&self) -> Option<String> {
        let f = self.non_converged_fraction();
        (f > 0.05).then(|| {
            format!(
                "{} of {} minutes ({:.1}%) did not converge",
                self.non_converged,
                self.fits.len(),
                100.0 * f
            )
        })
    }
}

/// Fit one NB2 regression per grid minute, in parallel. The fits come back
/// ordered by minute regardless of thread count. A minute whose fit fails
/// outright is recorded as a non-converged placeholder, never fatal.
pub fn run_sweep(
    profiles: &[ZoneProfile],
    zones: &[ZoneRecord],
    calendar: &StudyCalendar,
    grid: &TimeGrid,
    model: ModelSpec,
) -> Result<SweepResult> {
    if profiles.is_empty() {
        return Err(Error::Config("sweep needs at least one zone profile".into()));
    }
    let fits: Vec<SnapshotFit> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let minute = grid.minute_at(idx);
            let fit = build_design(profiles, zones, calendar, idx, model)
                .and_then(|design| fit_negbin(&design));
            match fit {
                Ok(mut fit) => {
                    fit.minute = minute;
                    fit
                }
                Err(_) => SnapshotFit {
                    minute,
                    names: vec![],
                    beta: vec![],
                    std_errors: vec![],
                    alpha: 0.0,
                    converged: false,
                    poisson_limit: false,
                    n_obs: profiles.len(),
                    log_likelihood: f64::NAN,
                },
            }
        })
        .collect();
    let non_converged = fits.iter().filter(|f| !f.converged).count();
    Ok(SweepResult { fits, non_converged })
}

/// Sign of the peak effect inside a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
        }
    }
}

/// A maximal run of consecutive minutes where one factor is significant,
/// annotated with the minute of largest |ln IRR|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectWindow {
    pub factor: String,
    pub start_minute: u16,
    pub end_minute: u16,
    /// IRR at the window's extremum of |ln IRR| (can be below one).
    pub max_irr: f64,
    pub minute_of_max: u16,
    pub direction: Direction,
}

impl EffectWindow {
    pub fn contains(&self, minute: u16) -> bool {
        (self.start_minute..=self.end_minute).contains(&minute)
    }

    pub fn len_minutes(&self) -> u16 {
        self.end_minute - self.start_minute + 1
    }
}

/// Extract maximal significance windows for one factor from minute-ordered
/// fits. The peak is the minute with the largest |ln IRR| inside the window;
/// ties go to the earliest minute. Single-minute windows are permitted.
pub fn extract_windows(
    fits: &[SnapshotFit],
    factor: &str,
    alpha_sig: f64,
) -> Result<Vec<EffectWindow>> {
    if !(0.0 < alpha_sig && alpha_sig < 1.0) {
        return Err(Error::Config(format!("significance level {alpha_sig} out of (0,1)")));
    }
    let mut windows = Vec::new();
    let mut run: Vec<(u16, f64)> = Vec::new(); // (minute, ln irr)
    for fit in fits {
        let significant = matches!(fit.wald(factor), Ok((_, p)) if p < alpha_sig);
        if significant {
            run.push((fit.minute, fit.coef(factor).unwrap_or(0.0)));
        } else if !run.is_empty() {
            windows.push(close_window(factor, &run));
            run.clear();
        }
    }
    if !run.is_empty() {
        windows.push(close_window(factor, &run));
    }
    Ok(windows)
}

fn close_window(factor: &str, run: &[(u16, f64)]) -> EffectWindow {
    let (mut minute_of_max, mut peak_b) = run[0];
    for &(minute, b) in run {
        if b.abs() > peak_b.abs() {
            minute_of_max = minute;
            peak_b = b;
        }
    }
    EffectWindow {
        factor: factor.to_string(),
        start_minute: run[0].0,
        end_minute: run[run.len() - 1].0,
        max_irr: peak_b.exp(),
        minute_of_max,
        direction: if peak_b > 0.0 { Direction::Positive } else { Direction::Negative },
    }
}

/// Change in floating-population density for one zone at one minute:
/// (post mean − pre mean) / area over the dates of one day group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneDifference {
    pub zone_id: String,
    pub day_group: DayGroup,
    pub minute: u16,
    pub diff_per_km2: f64,
}

/// Per-zone, per-minute density differences for one day group. Errors when
/// the group has no dates on either study side.
pub fn zone_differences(
    profiles: &[ZoneProfile],
    zones: &[ZoneRecord],
    calendar: &StudyCalendar,
    day_group: DayGroup,
    grid: &TimeGrid,
) -> Result<Vec<ZoneDifference>> {
    let in_group =
        |date| calendar.is_study_date(date) && day_group.matches(calendar.class_of(date));
    let mut diffs = Vec::with_capacity(zones.len() * grid.len());
    for zone in zones {
        let mut pre: (Vec<f64>, usize) = (vec![0.0; grid.len()], 0);
        let mut post: (Vec<f64>, usize) = (vec![0.0; grid.len()], 0);
        for profile in profiles.iter().filter(|p| p.zone_id == zone.zone_id) {
            if !in_group(profile.date) {
                continue;
            }
            let side = if calendar.is_post(profile.date) { &mut post } else { &mut pre };
            for (acc, v) in side.0.iter_mut().zip(&profile.values) {
                *acc += v;
            }
            side.1 += 1;
        }
        if pre.1 == 0 || post.1 == 0 {
            return Err(Error::Config(format!(
                "zone {:?} has no {} profiles on one study side",
                zone.zone_id,
                day_group.as_str()
            )));
        }
        for idx in 0..grid.len() {
            let pre_mean = pre.0[idx] / pre.1 as f64;
            let post_mean = post.0[idx] / post.1 as f64;
            diffs.push(ZoneDifference {
                zone_id: zone.zone_id.clone(),
                day_group,
                minute: grid.minute_at(idx),
                diff_per_km2: (post_mean - pre_mean) / zone.area_km2,
            });
        }
    }
    Ok(diffs)
}

/// The diffs of one minute, in zone order.
pub fn diffs_at_minute(diffs: &[ZoneDifference], minute: u16) -> Vec<ZoneDifference> {
    diffs.iter().filter(|d| d.minute == minute).cloned().collect()
}

/// Pearson correlation with a two-sided Student-t p-value (n − 2 degrees of
/// freedom).
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return Err(Error::Config("correlation needs at least 3 paired points".into()));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateCorrelation);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::Numeric(format!("t distribution: {e}")))?;
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok((r, p))
}

/// Correlate per-zone density change at one minute with point-of-interest
/// density (count / area).
pub fn pokepoint_correlation(
    diffs: &[ZoneDifference],
    zones: &[ZoneRecord],
) -> Result<(f64, f64)> {
    let zone_map: HashMap<&str, &ZoneRecord> =
        zones.iter().map(|z| (z.zone_id.as_str(), z)).collect();
    let mut xs = Vec::with_capacity(diffs.len());
    let mut ys = Vec::with_capacity(diffs.len());
    for d in diffs {
        let zone = zone_map
            .get(d.zone_id.as_str())
            .ok_or_else(|| Error::Config(format!("unknown zone {:?}", d.zone_id)))?;
        xs.push(zone.pokepoint_count as f64 / zone.area_km2);
        ys.push(d.diff_per_km2);
    }
    pearson(&xs, &ys)
}

fn hhmm(minute: u16) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}

/// Long-format CSV of every coefficient of every per-minute fit.
pub fn fits_to_csv(fits: &[SnapshotFit]) -> String {
    let mut out =
        String::from("minute,time,term,estimate,std_error,z,p,irr,alpha,converged,poisson_limit\n");
    for fit in fits {
        for (j, name) in fit.names.iter().enumerate() {
            let (z, p) = crate::glm::wald_from(fit.beta[j], fit.std_errors[j])
                .unwrap_or((f64::NAN, f64::NAN));
            let _ = writeln!(
                out,
                "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
                fit.minute,
                hhmm(fit.minute),
                name,
                fit.beta[j],
                fit.std_errors[j],
                z,
                p,
                fit.beta[j].exp(),
                fit.alpha,
                fit.converged,
                fit.poisson_limit
            );
        }
    }
    out
}

/// CSV of the extracted significance windows.
pub fn windows_to_csv(windows: &[EffectWindow]) -> String {
    let mut out = String::from(
        "factor,start_minute,start_time,end_minute,end_time,minute_of_max,time_of_max,max_irr,direction\n",
    );
    for w in windows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6},{}",
            w.factor,
            w.start_minute,
            hhmm(w.start_minute),
            w.end_minute,
            hhmm(w.end_minute),
            w.minute_of_max,
            hhmm(w.minute_of_max),
            w.max_irr,
            w.direction.as_str()
        );
    }
    out
}

/// Per-minute IRR time series for the requested factors, with the
/// CI-excludes-one flag and a Bonferroni-adjusted column for transparency.
pub fn irr_series_csv(fits: &[SnapshotFit], factors: &[&str], sig_level: f64) -> String {
    let m = fits.len().max(1) as f64;
    let mut out = String::from(
        "minute,time,factor,irr,ci_low,ci_high,p,alpha,ci_excludes_one,bonferroni_significant\n",
    );
    for fit in fits {
        for &factor in factors {
            if let (Some((irr, lo, hi)), Ok((_, p))) = (fit.irr(factor), fit.wald(factor)) {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
                    fit.minute,
                    hhmm(fit.minute),
                    factor,
                    irr,
                    lo,
                    hi,
                    p,
                    fit.alpha,
                    lo > 1.0 || hi < 1.0,
                    p < sig_level / m
                );
            }
        }
    }
    out
}

/// CSV of zone differences at selected minutes, plus one correlation line
/// per minute when available.
pub fn differences_to_csv(diffs: &[ZoneDifference]) -> String {
    let mut out = String::from("zone_id,day_group,minute,time,diff_per_km2\n");
    for d in diffs {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.12e}",
            d.zone_id,
            d.day_group.as_str(),
            d.minute,
            hhmm(d.minute),
            d.diff_per_km2
        );
    }
    out
}

/// CSV of correlation results: one row per (day_group, minute).
pub fn correlations_to_csv(rows: &[(DayGroup, u16, f64, f64)]) -> String {
    let mut out = String::from("day_group,minute,time,r,p\n");
    for &(group, minute, r, p) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.12e},{:.12e}",
            group.as_str(),
            minute,
            hhmm(minute),
            r,
            p
        );
    }
    out
}

/// GeoJSON choropleth: one feature per diff entry, geometry copied from the
/// zone list. An empty diff list gives an empty FeatureCollection.
pub fn export_choropleth(diffs: &[ZoneDifference], zones: &[ZoneRecord]) -> Result<serde_json::Value> {
    let zone_map: HashMap<&str, &ZoneRecord> =
        zones.iter().map(|z| (z.zone_id.as_str(), z)).collect();
    let mut features = Vec::with_capacity(diffs.len());
    for d in diffs {
        let zone = zone_map
            .get(d.zone_id.as_str())
            .ok_or_else(|| Error::Config(format!("unknown zone {:?}", d.zone_id)))?;
        features.push(serde_json::json!({
            "type": "Feature",
            "properties": {
                "zone_id": d.zone_id,
                "day_group": d.day_group.as_str(),
                "minute": d.minute,
                "diff_per_km2": d.diff_per_km2,
            },
            "geometry": crate::ingest::geometry_json(zone),
        }));
    }
    Ok(serde_json::json!({ "type": "FeatureCollection", "features": features }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::geometry::Polygon;
    use crate::model::LandUse;
    use chrono::NaiveDate;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn zone(id: &str, land_use: LandUse, area: f64, poke: u32) -> ZoneRecord {
        ZoneRecord {
            zone_id: id.to_string(),
            polygon: Polygon::square(0.0, 0.0, 0.01, 0.01),
            land_use,
            area_km2: area,
            pokepoint_count: poke,
        }
    }

    /// Two pre business days and two post business days.
    fn calendar() -> StudyCalendar {
        StudyCalendar::new(
            vec![d("2016-07-27"), d("2016-07-28")],
            vec![d("2016-08-04"), d("2016-08-05")],
            vec![],
        )
        .unwrap()
    }

    /// One weekend pair on each study side.
    fn weekend_calendar() -> StudyCalendar {
        StudyCalendar::new(
            vec![d("2016-07-30"), d("2016-07-31")], // sat, sun
            vec![d("2016-08-06"), d("2016-08-07")], // sat, sun
            vec![],
        )
        .unwrap()
    }

    fn profile(zone_id: &str, date: &str, value: f64, len: usize) -> ZoneProfile {
        ZoneProfile {
            zone_id: zone_id.into(),
            date: d(date),
            values: vec![value; len],
        }
    }

    #[test]
    fn design_encodes_dummies_and_offset() {
        let zones = vec![
            zone("A", LandUse::Residential, 2.0, 3),
            zone("B", LandUse::BusinessOnly, 0.5, 7),
        ];
        let cal = calendar();
        let profiles = vec![
            profile("A", "2016-07-27", 10.0, 3),
            profile("B", "2016-08-04", 20.0, 3),
        ];
        let design = build_design(&profiles, &zones, &cal, 1, ModelSpec::Full).unwrap();
        // saturday/sunday/mixed dummies are all zero under this calendar
        assert_eq!(
            design.names,
            vec!["intercept", "pogo", "business_only", "pokepoints"]
        );
        assert_eq!(design.row(0), &[1.0, 0.0, 0.0, 3.0]);
        assert_eq!(design.row(1), &[1.0, 1.0, 1.0, 7.0]);
        assert!((design.offset[0] - 2.0_f64.ln()).abs() < 1e-15);
        assert!((design.offset[1] - 0.5_f64.ln()).abs() < 1e-15);
        assert_eq!(design.response, vec![10, 20]);
    }

    #[test]
    fn weekend_only_design_uses_saturday_as_reference() {
        let zones = vec![zone("A", LandUse::Residential, 1.0, 1)];
        let cal = weekend_calendar();
        let profiles: Vec<ZoneProfile> = ["2016-07-30", "2016-07-31", "2016-08-06", "2016-08-07"]
            .iter()
            .map(|date| profile("A", date, 10.0, 1))
            .collect();
        let design = build_design(&profiles, &zones, &cal, 0, ModelSpec::Full).unwrap();
        assert!(!design.names.iter().any(|n| n == "saturday"));
        assert!(design.names.iter().any(|n| n == "sunday"));
    }

    #[test]
    fn response_rounds_ties_to_even() {
        let zones = vec![zone("A", LandUse::Residential, 1.0, 1)];
        let cal = calendar();
        let profiles = vec![
            profile("A", "2016-07-27", 2.5, 1),
            profile("A", "2016-08-04", 3.5, 1),
        ];
        let design = build_design(&profiles, &zones, &cal, 0, ModelSpec::Minimal).unwrap();
        assert_eq!(design.response, vec![2, 4]);
    }

    #[test]
    fn sweep_recovers_noiseless_multiplier() {
        // six zones, constant rates, post days multiplied by exactly 1.5
        let rates = [40.0, 60.0, 80.0, 100.0, 120.0, 140.0];
        let zones: Vec<ZoneRecord> = rates
            .iter()
            .enumerate()
            .map(|(i, _)| zone(&format!("Z{i}"), LandUse::Residential, 1.0, 1 + i as u32))
            .collect();
        let cal = calendar();
        let mut profiles = Vec::new();
        for (i, &rate) in rates.iter().enumerate() {
            for date in ["2016-07-27", "2016-07-28"] {
                profiles.push(profile(&format!("Z{i}"), date, rate, 4));
            }
            for date in ["2016-08-04", "2016-08-05"] {
                profiles.push(profile(&format!("Z{i}"), date, rate * 1.5, 4));
            }
        }
        let grid = TimeGrid::new(600, 603, 1).unwrap();
        let sweep = run_sweep(&profiles, &zones, &cal, &grid, ModelSpec::Full).unwrap();
        assert_eq!(sweep.fits.len(), 4);
        assert_eq!(sweep.non_converged, 0);
        assert!(sweep.warning().is_none());
        for fit in &sweep.fits {
            let (irr, ..) = fit.irr(POGO).unwrap();
            assert!(
                (irr - 1.5).abs() < 0.01,
                "minute {}: irr {irr} should be 1.5",
                fit.minute
            );
            assert_eq!(fit.n_obs, 24);
        }
        // minutes come back in grid order
        let minutes: Vec<u16> = sweep.fits.iter().map(|f| f.minute).collect();
        assert_eq!(minutes, vec![600, 601, 602, 603]);
    }

    fn fake_fit(minute: u16, beta: f64, se: f64) -> SnapshotFit {
        SnapshotFit {
            minute,
            names: vec!["intercept".into(), POGO.into()],
            beta: vec![0.0, beta],
            std_errors: vec![1.0, se],
            alpha: 0.1,
            converged: true,
            poisson_limit: false,
            n_obs: 10,
            log_likelihood: 0.0,
        }
    }

    #[test]
    fn windows_are_maximal_runs_with_peaks() {
        // significant (p < 0.05) needs |z| > 1.96
        let fits = vec![
            fake_fit(600, 0.10, 0.01), // z = 10, in window 1
            fake_fit(601, 0.30, 0.01), // peak of window 1
            fake_fit(602, 0.20, 0.01),
            fake_fit(603, 0.01, 0.10), // not significant: gap
            fake_fit(604, -0.25, 0.01), // window 2, negative direction
        ];
        let windows = extract_windows(&fits, POGO, 0.05).unwrap();
        assert_eq!(windows.len(), 2);
        assert_eq!((windows[0].start_minute, windows[0].end_minute), (600, 602));
        assert_eq!(windows[0].minute_of_max, 601);
        assert!((windows[0].max_irr - 0.3_f64.exp()).abs() < 1e-12);
        assert_eq!(windows[0].direction, Direction::Positive);
        assert_eq!((windows[1].start_minute, windows[1].end_minute), (604, 604));
        assert_eq!(windows[1].direction, Direction::Negative);
    }

    #[test]
    fn alternating_minutes_give_single_minute_windows() {
        let fits: Vec<SnapshotFit> = (0..6)
            .map(|i| {
                if i % 2 == 0 {
                    fake_fit(600 + i, 0.2, 0.01)
                } else {
                    fake_fit(600 + i, 0.0, 1.0)
                }
            })
            .collect();
        let windows = extract_windows(&fits, POGO, 0.05).unwrap();
        assert_eq!(windows.len(), 3);
        assert!(windows.iter().all(|w| w.len_minutes() == 1));
    }

    #[test]
    fn window_peak_tie_goes_to_earliest() {
        let fits = vec![fake_fit(600, 0.2, 0.01), fake_fit(601, 0.2, 0.01)];
        let windows = extract_windows(&fits, POGO, 0.05).unwrap();
        assert_eq!(windows[0].minute_of_max, 600);
    }

    #[test]
    fn zone_differences_per_minute_in_density_units() {
        let zones = vec![zone("A", LandUse::Residential, 2.0, 1)];
        let cal = calendar();
        let grid = TimeGrid::new(600, 601, 1).unwrap();
        let profiles = vec![
            profile("A", "2016-07-27", 10.0, 2),
            profile("A", "2016-07-28", 14.0, 2),
            profile("A", "2016-08-04", 20.0, 2),
            profile("A", "2016-08-05", 24.0, 2),
        ];
        let diffs =
            zone_differences(&profiles, &zones, &cal, DayGroup::Business, &grid).unwrap();
        assert_eq!(diffs.len(), 2);
        // post mean 22, pre mean 12, area 2 -> 5 per km2, at every minute
        for d in &diffs {
            assert!((d.diff_per_km2 - 5.0).abs() < 1e-12);
        }
        assert_eq!(diffs[0].minute, 600);
        assert_eq!(diffs[1].minute, 601);
    }

    #[test]
    fn zone_differences_antisymmetric_under_side_swap() {
        let zones = vec![zone("A", LandUse::Residential, 1.0, 1)];
        let grid = TimeGrid::new(600, 601, 1).unwrap();
        let profiles = vec![
            profile("A", "2016-07-27", 10.0, 2),
            profile("A", "2016-08-04", 17.0, 2),
        ];
        let cal = StudyCalendar::new(vec![d("2016-07-27")], vec![d("2016-08-04")], vec![]).unwrap();
        let swapped =
            StudyCalendar::new(vec![d("2016-08-04")], vec![d("2016-07-27")], vec![]).unwrap();
        let a = zone_differences(&profiles, &zones, &cal, DayGroup::Business, &grid).unwrap();
        let b = zone_differences(&profiles, &zones, &swapped, DayGroup::Business, &grid).unwrap();
        assert!((a[0].diff_per_km2 + b[0].diff_per_km2).abs() < 1e-12);
    }

    #[test]
    fn weekend_group_without_dates_errors() {
        let zones = vec![zone("A", LandUse::Residential, 1.0, 1)];
        let cal = calendar(); // business days only
        let grid = TimeGrid::new(600, 601, 1).unwrap();
        let profiles = vec![
            profile("A", "2016-07-27", 10.0, 2),
            profile("A", "2016-08-04", 20.0, 2),
        ];
        assert!(zone_differences(&profiles, &zones, &cal, DayGroup::Weekend, &grid).is_err());
    }

    #[test]
    fn pearson_known_value() {
        // x=(1,2,3,4), y=(2,1,4,3) -> r = 0.6
        let (r, _) = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.6).abs() < 1e-12);
    }

    #[test]
    fn perfect_linear_correlation() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 4.0, 6.0, 8.0];
        let (r, p) = pearson(&xs, &ys).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!(p < 1e-9);
        let neg: Vec<f64> = ys.iter().map(|v| -v).collect();
        let (r, _) = pearson(&xs, &neg).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let xs = [1.0, 1.0, 1.0];
        let ys = [2.0, 4.0, 6.0];
        assert!(matches!(pearson(&xs, &ys), Err(Error::DegenerateCorrelation)));
    }

    #[test]
    fn choropleth_copies_geometry_and_diffs() {
        let zones = vec![zone("A", LandUse::Residential, 2.0, 1)];
        let diffs = vec![ZoneDifference {
            zone_id: "A".into(),
            day_group: DayGroup::Business,
            minute: 751,
            diff_per_km2: 0.5,
        }];
        let geo = export_choropleth(&diffs, &zones).unwrap();
        assert_eq!(geo["features"][0]["properties"]["diff_per_km2"], 0.5);
        assert_eq!(geo["features"][0]["properties"]["minute"], 751);
        assert_eq!(
            geo["features"][0]["geometry"],
            crate::ingest::geometry_json(&zones[0])
        );
        // zero-diff zones keep an explicit 0 property
        let zero = vec![ZoneDifference { diff_per_km2: 0.0, ..diffs[0].clone() }];
        let geo = export_choropleth(&zero, &zones).unwrap();
        assert_eq!(geo["features"][0]["properties"]["diff_per_km2"], 0.0);
        // empty in, empty out
        let empty = export_choropleth(&[], &zones).unwrap();
        assert_eq!(empty["features"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn csv_exports_have_headers_and_rows() {
        let fits = vec![fake_fit(600, 0.1, 0.01)];
        let csv = fits_to_csv(&fits);
        assert!(csv.starts_with("minute,time,term,"));
        assert_eq!(csv.lines().count(), 3); // header + 2 terms
        let series = irr_series_csv(&fits, &[POGO], 0.05);
        assert!(series.contains("10:00"));
        assert!(series.contains("true"));
        let windows = extract_windows(&fits, POGO, 0.05).unwrap();
        let wcsv = windows_to_csv(&windows);
        assert_eq!(wcsv.lines().count(), 2);
        assert!(wcsv.contains("positive"));
    }
}
