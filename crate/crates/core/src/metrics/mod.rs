//! Travel-time variability and congestion metrics.
//!
//! Link level: the coefficient of variation of a link's travel times over a
//! trailing window of days, and the congestion index `T / F` of a single
//! observation. Network level: the arithmetic mean over the links that have
//! a defined value, with the contributing count kept alongside.

mod ci;
mod cov;
mod huemap;
mod series;
mod timeline;

use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DepartureSlot, ObservationPanel};
use crate::netbuild::LinkId;

pub use ci::{link_ci, network_ci, LinkCongestion, NetworkCongestion};
pub use cov::{link_cov, network_cov, LinkCov, NetworkCov};
pub use huemap::{hue_map, ColorScale};
pub use series::{annotate, moving_series, Annotation, MetricKind, MetricSeries, SeriesPoint};
pub use timeline::{EventRef, EventTimeline, TimelineEvent};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("window width must be at least one day")]
    InvalidWindow,
    #[error("no link has a defined coefficient of variation in the window ending {0}")]
    UndefinedWindow(NaiveDate),
    #[error("no observations on {0} ({1})")]
    UndefinedDay(NaiveDate, SlotSelector),
    #[error("no free-flow time for link {0}")]
    MissingFreeFlow(LinkId),
    #[error("city '{0}' not in timeline")]
    UnknownCity(String),
    #[error("no values to map")]
    EmptyValues,
    #[error("value for link {0} is not finite")]
    NonFiniteValue(LinkId),
    #[error("timeline line {line}: {msg}")]
    Timeline { line: u64, msg: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One departure slot, or all three pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotSelector {
    Slot(DepartureSlot),
    WholeDay,
}

impl SlotSelector {
    pub fn matches(self, slot: DepartureSlot) -> bool {
        match self {
            SlotSelector::Slot(s) => s == slot,
            SlotSelector::WholeDay => true,
        }
    }
}

impl From<DepartureSlot> for SlotSelector {
    fn from(s: DepartureSlot) -> Self {
        SlotSelector::Slot(s)
    }
}

impl fmt::Display for SlotSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotSelector::Slot(s) => f.write_str(s.as_str()),
            SlotSelector::WholeDay => f.write_str("whole-day"),
        }
    }
}

impl FromStr for SlotSelector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "whole-day" | "whole_day" | "day" => Ok(SlotSelector::WholeDay),
            other => other.parse().map(SlotSelector::Slot),
        }
    }
}

/// Trailing window of `width_days` calendar days ending at `anchor`
/// (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub width_days: u32,
    pub anchor: NaiveDate,
}

impl WindowSpec {
    pub const DEFAULT_WIDTH: u32 = 7;

    pub fn new(width_days: u32, anchor: NaiveDate) -> Result<WindowSpec, MetricsError> {
        if width_days == 0 {
            return Err(MetricsError::InvalidWindow);
        }
        Ok(WindowSpec { width_days, anchor })
    }

    /// Window spanning the panel's whole calendar, or `None` when empty.
    pub fn study_period(panel: &ObservationPanel) -> Option<WindowSpec> {
        let cal = panel.calendar();
        let (first, last) = (*cal.first()?, *cal.last()?);
        Some(WindowSpec {
            width_days: (last - first).num_days() as u32 + 1,
            anchor: last,
        })
    }

    pub fn start(&self) -> NaiveDate {
        self.anchor - Days::new(self.width_days as u64 - 1)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date <= self.anchor && date >= self.start()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_covers_trailing_days() {
        let anchor = NaiveDate::from_ymd_opt(2022, 3, 7).unwrap();
        let w = WindowSpec::new(7, anchor).unwrap();
        assert_eq!(w.start(), NaiveDate::from_ymd_opt(2022, 3, 1).unwrap());
        assert!(w.contains(anchor));
        assert!(!w.contains(NaiveDate::from_ymd_opt(2022, 2, 28).unwrap()));
        assert!(!w.contains(NaiveDate::from_ymd_opt(2022, 3, 8).unwrap()));
        assert!(WindowSpec::new(0, anchor).is_err());
    }

    #[test]
    fn slot_selector_parsing() {
        assert_eq!("whole-day".parse::<SlotSelector>().unwrap(), SlotSelector::WholeDay);
        assert_eq!(
            "evening".parse::<SlotSelector>().unwrap(),
            SlotSelector::Slot(DepartureSlot::Evening)
        );
        assert_eq!(SlotSelector::WholeDay.to_string(), "whole-day");
    }
}
