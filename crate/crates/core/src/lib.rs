//! Core library for quantifying how a city-scale event changes floating
//! population, estimated from mobile-network logs.
//!
//! The pipeline runs in stages: ingest and validate the four input files,
//! filter devices, count unique devices per tower-minute, smooth each
//! tower-day series with LOWESS, aggregate tower series into zone profiles,
//! and fit one negative binomial regression per minute of day with the zone
//! area as exposure. Post-analysis extracts significance windows, spatial
//! differences, and correlation against game point-of-interest density.

pub mod aggregation;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod glm;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod reference;
pub mod smoothing;
pub mod synth;

pub use error::{Error, Result};
pub use model::geometry::{Point, Polygon};
pub use model::time::{DayClass, DayGroup, StudyCalendar, TimeGrid};
pub use model::{LandUse, NetworkEvent, Tower, ZoneRecord};
