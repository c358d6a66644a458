//! LOWESS smoothing of per-tower unique-device counts: turns the sparse
//! minute-indexed series B into the continuous series B'.
//!
//! Window semantics are a fixed time window of `bandwidth_min` minutes
//! (±bandwidth/2 around each output minute), local degree 1, tri-cube
//! weights on the normalized distance, a single pass with no robustness
//! iterations. Zero-count minutes are real observations, not gaps.

use crate::error::{Error, Result};
use crate::model::time::TimeGrid;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Unique-device counts for one tower and date over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTowerSeries {
    pub tower_id: String,
    pub date: NaiveDate,
    pub counts: Vec<u32>,
}

impl RawTowerSeries {
    /// Count distinct devices per grid minute. `events` are (minute, device
    /// key) pairs for one tower and date; devices with several events in the
    /// same minute count once.
    pub fn from_events(
        tower_id: String,
        date: NaiveDate,
        mut events: Vec<(u16, u32)>,
        grid: &TimeGrid,
    ) -> Self {
        events.sort_unstable();
        events.dedup();
        let mut counts = vec![0u32; grid.len()];
        for (minute, _) in events {
            if let Some(i) = grid.index_of(minute) {
                counts[i] += 1;
            }
        }
        RawTowerSeries {
            tower_id,
            date,
            counts,
        }
    }
}

/// Smoothed minute-indexed series, keyed by tower or zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedSeries {
    pub key: String,
    pub date: NaiveDate,
    pub values: Vec<f64>,
}

/// LOWESS over a dense regular grid. Negative fitted values are clamped to
/// zero; the output is finite everywhere for finite input.
pub fn lowess_smooth(series: &RawTowerSeries, grid: &TimeGrid, bandwidth_min: u32) -> Result<SmoothedSeries> {
    let values: Vec<f64> = series.counts.iter().map(|&c| c as f64).collect();
    let smoothed = lowess_grid(&values, grid.step as f64, bandwidth_min)?;
    Ok(SmoothedSeries {
        key: series.tower_id.clone(),
        date: series.date,
        values: smoothed,
    })
}

/// Tri-cube weighted local linear fit on a regular grid with spacing
/// `step` minutes.
pub fn lowess_grid(values: &[f64], step: f64, bandwidth_min: u32) -> Result<Vec<f64>> {
    if bandwidth_min < 3 {
        return Err(Error::Config(format!(
            "lowess bandwidth {bandwidth_min} below minimum of 3 minutes"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite input to lowess".into()));
    }
    let n = values.len();
    let half = bandwidth_min as f64 / 2.0;
    let reach = (half / step).floor() as usize;
    let mut out = Vec::with_capacity(n);

    for i in 0..n {
        let lo = i.saturating_sub(reach);
        let hi = (i + reach).min(n - 1);
        // accumulate the 2x2 weighted normal equations with x centered at i
        let (mut sw, mut swx, mut swxx, mut swy, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut positive = 0usize;
        for j in lo..=hi {
            let x = (j as f64 - i as f64) * step;
            let u = x.abs() / half;
            if u > 1.0 {
                continue;
            }
            let w = (1.0 - u * u * u).powi(3);
            if w <= 0.0 {
                continue;
            }
            positive += 1;
            sw += w;
            swx += w * x;
            swxx += w * x * x;
            swy += w * values[j];
            swxy += w * x * values[j];
        }
        let det = sw * swxx - swx * swx;
        let fitted = if positive < 2 || det.abs() <= 1e-12 * sw.max(1.0) * swxx.max(1.0) {
            // degenerate window: fall back to the (weighted or plain) mean
            if sw > 0.0 {
                swy / sw
            } else {
                values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            }
        } else {
            (swxx * swy - swx * swxy) / det
        };
        out.push(fitted.max(0.0));
    }
    Ok(out)
}

/// Scale a set of series by the single global maximum across all of them.
pub fn normalize_global(series: &mut [SmoothedSeries]) -> Result<()> {
    let max = series
        .iter()
        .flat_map(|s| s.values.iter())
        .fold(0.0_f64, |m, &v| m.max(v));
    if max <= 0.0 {
        return Err(Error::NothingToNormalize);
    }
    for s in series {
        for v in &mut s.values {
            *v /= max;
        }
    }
    Ok(())
}
