use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{network_ci, network_cov, EventRef, EventTimeline, MetricsError, SlotSelector, WindowSpec};
use crate::ingest::ObservationPanel;
use crate::netbuild::RoadNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Cov,
    Ci,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Cov => "cov",
            MetricKind::Ci => "ci",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub date: NaiveDate,
    pub value: f64,
    /// Contributing links for `cov`; daily values averaged for `ci`.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Annotation {
    pub date: NaiveDate,
    pub event_ref: EventRef,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries {
    pub kind: MetricKind,
    pub slot: SlotSelector,
    pub window_days: u32,
    pub points: Vec<SeriesPoint>,
    pub annotations: Vec<Annotation>,
}

impl MetricSeries {
    /// First and last point dates.
    pub fn span(&self) -> Option<(NaiveDate, NaiveDate)> {
        Some((self.points.first()?.date, self.points.last()?.date))
    }

    /// Writes `date,slot,metric,value,n,annotations`, refs joined by `;`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "slot", "metric", "value", "n", "annotations"])?;
        for p in &self.points {
            let refs: Vec<String> = self
                .annotations
                .iter()
                .filter(|a| a.date == p.date)
                .map(|a| a.event_ref.to_string())
                .collect();
            w.write_record([
                p.date.format("%Y-%m-%d").to_string(),
                self.slot.to_string(),
                self.kind.to_string(),
                p.value.to_string(),
                p.n.to_string(),
                refs.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Moving-window network series, one point per collection date.
///
/// `cov` points are the network-average CoV over the trailing window ending
/// at each date. `ci` points are the trailing mean of the daily network
/// congestion indexes inside the window. Dates without data never get a
/// point, so collection gaps stay gaps.
pub fn moving_series(
    panel: &ObservationPanel,
    network: &RoadNetwork,
    kind: MetricKind,
    slot: SlotSelector,
    width_days: u32,
    min_length_m: f64,
) -> Result<MetricSeries, MetricsError> {
    let calendar = panel.calendar();
    let mut points = Vec::new();
    match kind {
        MetricKind::Cov => {
            for &anchor in &calendar {
                let window = WindowSpec::new(width_days, anchor)?;
                if let Ok(nc) = network_cov(panel, network, slot, window, min_length_m) {
                    points.push(SeriesPoint {
                        date: anchor,
                        value: nc.value,
                        n: nc.n,
                    });
                }
            }
        }
        MetricKind::Ci => {
            if width_days == 0 {
                return Err(MetricsError::InvalidWindow);
            }
            let daily: BTreeMap<NaiveDate, f64> = calendar
                .iter()
                .filter_map(|&d| network_ci(panel, network, slot, d, min_length_m).ok().map(|c| (d, c.value)))
                .collect();
            for &anchor in daily.keys() {
                let start = anchor - Days::new(width_days as u64 - 1);
                let (sum, n) = daily
                    .range(start..=anchor)
                    .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
                points.push(SeriesPoint {
                    date: anchor,
                    value: sum / n as f64,
                    n,
                });
            }
        }
    }
    Ok(MetricSeries {
        kind,
        slot,
        window_days: width_days,
        points,
        annotations: Vec::new(),
    })
}

/// Attaches the city's events to every day where the event range overlaps
/// the series span.
pub fn annotate(series: &MetricSeries, timeline: &EventTimeline, city: &str) -> Result<MetricSeries, MetricsError> {
    if !timeline.has_city(city) {
        return Err(MetricsError::UnknownCity(city.to_owned()));
    }
    let mut out = series.clone();
    if let Some((first, last)) = series.span() {
        for e in timeline.city_events(city) {
            let (from, to) = (e.start.max(first), e.end.min(last));
            let mut d = from;
            while d <= to {
                out.annotations.push(Annotation {
                    date: d,
                    event_ref: e.event_ref,
                });
                d = d + Days::new(1);
            }
        }
    }
    out.annotations.sort();
    out.annotations.dedup();
    Ok(out)
}
